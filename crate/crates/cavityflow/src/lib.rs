//! File formats (gmsh MSH 2.2, legacy VTK, CSV), run configuration and the
//! experiment drivers behind the `cavityflow` command-line tool.

pub mod config;
pub mod export;
pub mod msh;
pub mod run;
