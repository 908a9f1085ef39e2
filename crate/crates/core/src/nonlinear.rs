//! Newton and relaxation iterations for the steady problem.
//!
//! Each step solves one linearized system for an auxiliary pair `(ũ, p̃)` and
//! blends it with the previous iterate:
//! `u ← σ ũ + (1 − σ) u`, `p ← σ p̃ + (1 − σ) p`. With `σ = 1` this is the
//! plain iteration. Convergence is monitored by `ε(k) = ‖u^k − u^{k−1}‖_L2`.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::assembly::{BoundaryConditions, ConvectionForm, GaugeSurrogate, Linearization, SystemAssembler};
use crate::error::{LinsolveError, SolveError};
use crate::linsolve::{ReusePolicy, ReusingSolver, SolveStats};
use crate::space::{Field, FieldRole, TaylorHoodSpace};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub reynolds: f64,
    pub form: ConvectionForm,
    pub method: Linearization,
    /// Relaxation parameter, `0 < σ ≤ 1`.
    pub sigma: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub divergence_threshold: f64,
    /// Stop as soon as `ε ≤ tol`. When false, exactly `max_iter` iterations
    /// run (unless divergence is detected) and the status is decided by the
    /// final `ε`.
    pub exit_on_tolerance: bool,
    /// Drop the convection term entirely (Stokes problem).
    pub stokes: bool,
}

impl SolverConfig {
    pub fn new(reynolds: f64, form: ConvectionForm, method: Linearization) -> Self {
        SolverConfig {
            reynolds,
            form,
            method,
            sigma: 1.0,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            divergence_threshold: DEFAULT_DIVERGENCE_THRESHOLD,
            exit_on_tolerance: true,
            stokes: false,
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.reynolds > 0.0 && self.reynolds.is_finite()) {
            return Err(SolveError::Config("reynolds must be positive"));
        }
        if !(self.sigma > 0.0 && self.sigma <= 1.0) {
            return Err(SolveError::Config("sigma must lie in (0, 1]"));
        }
        if !(self.tol > 0.0) {
            return Err(SolveError::Config("tol must be positive"));
        }
        if self.max_iter == 0 {
            return Err(SolveError::Config("max_iter must be positive"));
        }
        if !(self.divergence_threshold > 0.0) {
            return Err(SolveError::Config("divergence_threshold must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionState {
    pub u: Field,
    pub p: Field,
}

impl SolutionState {
    pub fn zero(space: &TaylorHoodSpace) -> Self {
        SolutionState {
            u: space.zero_field(FieldRole::Velocity),
            p: space.zero_field(FieldRole::Pressure),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.p.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Converged,
    Diverged,
    MaxIterReached,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::Diverged => "diverged",
            Status::MaxIterReached => "max_iter",
        }
    }
}

impl core::fmt::Display for Status {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceHistory {
    /// `ε(k)` for `k = 1, 2, …`. A failed linear solve is recorded as NaN.
    pub epsilons: Vec<f64>,
    pub status: Status,
    /// Set when the run ended because a linear solve failed.
    pub failure: Option<LinsolveError>,
}

impl ConvergenceHistory {
    pub fn iterations(&self) -> usize {
        self.epsilons.len()
    }

    pub fn last(&self) -> Option<f64> {
        self.epsilons.last().copied()
    }

    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }
}

/// `(k, ε(k))` pairs, `k` starting at 1.
pub fn epsilon(history: &ConvergenceHistory) -> Vec<(usize, f64)> {
    history.epsilons.iter().enumerate().map(|(i, &e)| (i + 1, e)).collect()
}

/// Nonlinear solver bound to one space and one set of Dirichlet data.
///
/// Reuses the assembled pattern and the LU factors across iterations and
/// across solves (see [`ReusingSolver`]).
#[derive(Debug)]
pub struct NonlinearSolver<'a> {
    space: &'a TaylorHoodSpace,
    assembler: SystemAssembler,
    linear: ReusingSolver,
    forcing: Option<Vec<f64>>,
}

impl<'a> NonlinearSolver<'a> {
    pub fn new(space: &'a TaylorHoodSpace, bc: &BoundaryConditions) -> Result<Self, SolveError> {
        Ok(NonlinearSolver {
            space,
            assembler: SystemAssembler::new(space, bc)?,
            linear: ReusingSolver::new(ReusePolicy::default()).with_surrogate(Box::new(GaugeSurrogate::new(space))),
            forcing: None,
        })
    }

    /// Body-force load vector `∫ f·φ` (see [`crate::assembly::assemble_forcing`]).
    pub fn with_forcing(mut self, forcing: Vec<f64>) -> Self {
        assert_eq!(forcing.len(), self.space.n_u());
        self.forcing = Some(forcing);
        self
    }

    /// Replaces the linear-solver reuse policy (`ReusingSolver::direct()`
    /// factorizes every system).
    pub fn with_linear_solver(mut self, linear: ReusingSolver) -> Self {
        self.linear = linear;
        self
    }

    pub fn linear_stats(&self) -> SolveStats {
        self.linear.stats()
    }

    pub fn space(&self) -> &'a TaylorHoodSpace {
        self.space
    }

    pub fn assembler(&self) -> &SystemAssembler {
        &self.assembler
    }

    /// Copy of `state` with the Dirichlet data imposed.
    pub fn with_boundary(&self, state: &SolutionState) -> SolutionState {
        let mut s = state.clone();
        self.assembler.impose_boundary(s.u.values_mut());
        s
    }

    /// Solves the linearized system around `state` and returns the
    /// auxiliary pair `(ũ, p̃)`.
    pub fn auxiliary(&mut self, state: &SolutionState, config: &SolverConfig) -> Result<SolutionState, SolveError> {
        let inv_re = 1.0 / config.reynolds;
        let system = if config.stokes {
            self.assembler.stokes_system(inv_re, self.forcing.as_deref())
        } else {
            self.assembler.system(
                self.space,
                inv_re,
                config.form,
                config.method,
                state.u.values(),
                self.forcing.as_deref(),
            )
        };
        let x = self.linear.solve(&system.matrix, &system.rhs)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(LinsolveError::Singular { rcond: f64::NAN }.into());
        }
        Ok(SolutionState {
            u: self.space.field(FieldRole::Velocity, system.velocity(&x).to_vec())?,
            p: self.space.field(FieldRole::Pressure, system.pressure(&x).to_vec())?,
        })
    }

    /// One relaxed step: `σ·aux + (1 − σ)·state` for both velocity and
    /// pressure, with the boundary data re-imposed exactly.
    pub fn iterate_once(&mut self, state: &SolutionState, config: &SolverConfig) -> Result<SolutionState, SolveError> {
        config.validate()?;
        let aux = self.auxiliary(state, config)?;
        if config.sigma == 1.0 {
            return Ok(aux);
        }
        let s = config.sigma;
        let mut next = SolutionState {
            u: aux.u.combine(s, &state.u, 1.0 - s)?,
            p: aux.p.combine(s, &state.p, 1.0 - s)?,
        };
        self.assembler.impose_boundary(next.u.values_mut());
        Ok(next)
    }

    /// Iterates from `initial` (boundary values overwritten first) until
    /// convergence, divergence or the iteration cap.
    pub fn solve(
        &mut self,
        config: &SolverConfig,
        initial: &SolutionState,
    ) -> Result<(SolutionState, ConvergenceHistory), SolveError> {
        config.validate()?;
        let mut state = self.with_boundary(initial);
        let mut epsilons = Vec::new();
        for _ in 0..config.max_iter {
            let next = match self.iterate_once(&state, config) {
                Ok(n) => n,
                Err(SolveError::Linsolve(e)) => {
                    epsilons.push(f64::NAN);
                    let history = ConvergenceHistory {
                        epsilons,
                        status: Status::Diverged,
                        failure: Some(e),
                    };
                    return Ok((state, history));
                }
                Err(e) => return Err(e),
            };
            let eps = if next.u.is_finite() {
                self.space.l2_diff(&next.u, &state.u)?
            } else {
                f64::NAN
            };
            epsilons.push(eps);
            state = next;
            if !eps.is_finite() || eps > config.divergence_threshold || !state.p.is_finite() {
                let history = ConvergenceHistory {
                    epsilons,
                    status: Status::Diverged,
                    failure: None,
                };
                return Ok((state, history));
            }
            if config.exit_on_tolerance && eps <= config.tol {
                break;
            }
        }
        let status = if epsilons.last().is_some_and(|&e| e <= config.tol) {
            Status::Converged
        } else {
            Status::MaxIterReached
        };
        Ok((
            state,
            ConvergenceHistory {
                epsilons,
                status,
                failure: None,
            },
        ))
    }
}

/// One relaxed iteration (builds a fresh solver; prefer
/// [`NonlinearSolver::iterate_once`] in loops).
pub fn iterate_once(
    space: &TaylorHoodSpace,
    state: &SolutionState,
    config: &SolverConfig,
    bc: &BoundaryConditions,
) -> Result<SolutionState, SolveError> {
    NonlinearSolver::new(space, bc)?.iterate_once(state, config)
}

pub fn solve_stationary(
    config: &SolverConfig,
    space: &TaylorHoodSpace,
    bc: &BoundaryConditions,
    initial: &SolutionState,
) -> Result<(SolutionState, ConvergenceHistory), SolveError> {
    NonlinearSolver::new(space, bc)?.solve(config, initial)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::unit_square_mesh;

    fn setup(m: usize) -> (TaylorHoodSpace, BoundaryConditions) {
        (
            TaylorHoodSpace::new(unit_square_mesh(m).unwrap()),
            BoundaryConditions::lid_driven(1.0),
        )
    }

    #[test]
    fn config_validation() {
        let c = SolverConfig::new(100.0, ConvectionForm::Conservative, Linearization::Newton);
        assert!(c.validate().is_ok());
        assert!(c.with_sigma(0.0).validate().is_err());
        assert!(c.with_sigma(1.5).validate().is_err());
        assert!(c.with_tol(0.0).validate().is_err());
        assert!(c.with_max_iter(0).validate().is_err());
        assert!(SolverConfig { reynolds: -1.0, ..c }.validate().is_err());
    }

    #[test]
    fn sigma_one_returns_auxiliary() {
        let (s, bc) = setup(3);
        let mut solver = NonlinearSolver::new(&s, &bc).unwrap();
        let c = SolverConfig::new(50.0, ConvectionForm::SkewSymmetric, Linearization::Method2);
        let start = solver.with_boundary(&SolutionState::zero(&s));
        let aux = solver.auxiliary(&start, &c).unwrap();
        let next = solver.iterate_once(&start, &c).unwrap();
        assert_eq!(aux, next);
    }

    #[test]
    fn blend_keeps_boundary_data() {
        let (s, bc) = setup(3);
        let mut solver = NonlinearSolver::new(&s, &bc).unwrap();
        let c = SolverConfig::new(50.0, ConvectionForm::Conservative, Linearization::Method1).with_sigma(0.3);
        let start = solver.with_boundary(&SolutionState::zero(&s));
        let next = solver.iterate_once(&start, &c).unwrap();
        let g = solver.assembler().boundary_values();
        for d in 0..s.n_u() {
            if solver.assembler().is_constrained(d) {
                assert_eq!(next.u.values()[d], g[d]);
            }
        }
    }

    #[test]
    fn small_re_converges_and_history_is_consistent() {
        let (s, bc) = setup(4);
        let c = SolverConfig::new(10.0, ConvectionForm::Conservative, Linearization::Newton);
        let (_, h) = solve_stationary(&c, &s, &bc, &SolutionState::zero(&s)).unwrap();
        assert_eq!(h.status, Status::Converged);
        assert!(h.last().unwrap() <= c.tol);
        assert_eq!(epsilon(&h).len(), h.iterations());
        assert_eq!(epsilon(&h)[0].0, 1);
    }

    #[test]
    fn fixed_iteration_mode_runs_all_steps() {
        let (s, bc) = setup(3);
        let mut c = SolverConfig::new(10.0, ConvectionForm::Conservative, Linearization::Newton).with_max_iter(12);
        c.exit_on_tolerance = false;
        let (_, h) = solve_stationary(&c, &s, &bc, &SolutionState::zero(&s)).unwrap();
        assert_eq!(h.iterations(), 12);
        assert_eq!(h.status, Status::Converged);
    }

    #[test]
    fn cap_reached_reports_max_iter() {
        let (s, bc) = setup(3);
        let c = SolverConfig::new(10.0, ConvectionForm::Conservative, Linearization::Method2)
            .with_max_iter(2)
            .with_tol(1e-300);
        let (_, h) = solve_stationary(&c, &s, &bc, &SolutionState::zero(&s)).unwrap();
        assert_eq!(h.status, Status::MaxIterReached);
        assert_eq!(h.iterations(), 2);
    }
}
