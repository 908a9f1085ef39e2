#![cfg_attr(not(feature = "std"), no_std)]
//! Taylor-Hood finite-element solver for steady incompressible
//! Navier-Stokes flow in lid-driven cavities.

extern crate alloc;

pub mod assembly;
pub mod continuation;
pub mod error;
pub mod linsolve;
pub mod mesh;
pub mod nonlinear;
pub mod postprocess;
pub mod quadrature;
pub mod space;
pub mod sparse;

pub use assembly::{BoundaryConditions, BoundaryValue, ConvectionForm, Linearization};
pub use error::{AssemblyError, FieldError, LinsolveError, MeshError, SolveError};
pub use mesh::{semi_ellipse_mesh, unit_square_mesh, BoundaryTag, Mesh};
pub use nonlinear::{ConvergenceHistory, NonlinearSolver, SolutionState, SolverConfig, Status};
pub use space::{Field, FieldRole, TaylorHoodSpace};
