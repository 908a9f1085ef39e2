//! Reynolds-number continuation: explicit schedules and step bisection.
//!
//! Bisection: from the last converged `Re_n`, try `Re_n + δ`. On success the
//! step is accepted and `δ` kept; on failure `δ` is halved and the trial is
//! repeated from the `Re_n` state. The run stops when the target is reached,
//! the iteration budget is spent, or a trial fails with `δ ≤ delta_min` (the
//! critical Re is then bracketed to within `delta_min`).

use alloc::vec::Vec;

use crate::assembly::BoundaryConditions;
use crate::error::SolveError;
use crate::nonlinear::{NonlinearSolver, SolutionState, SolverConfig, Status};
use crate::space::TaylorHoodSpace;

/// How a single continuation step is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepMode {
    /// Exactly `step_iteration_cap` iterations; converged iff the final
    /// `ε ≤ tol`.
    #[default]
    FixedIterations,
    /// Stop as soon as `ε ≤ tol`, at most `step_iteration_cap` iterations.
    ToleranceExit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationConfig {
    pub re_start: f64,
    pub delta_start: f64,
    pub re_target: f64,
    /// Template for every step; `reynolds` and `max_iter` are overridden.
    pub per_step: SolverConfig,
    pub step_mode: StepMode,
    pub step_iteration_cap: usize,
    pub total_iteration_budget: usize,
    pub delta_min: f64,
}

impl ContinuationConfig {
    pub fn new(re_start: f64, delta_start: f64, re_target: f64, per_step: SolverConfig) -> Self {
        ContinuationConfig {
            re_start,
            delta_start,
            re_target,
            per_step,
            step_mode: StepMode::FixedIterations,
            step_iteration_cap: 10,
            total_iteration_budget: 500,
            delta_min: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.re_start > 0.0 && self.re_start.is_finite()) {
            return Err(SolveError::Config("re_start must be positive"));
        }
        if !(self.re_start <= self.re_target) {
            return Err(SolveError::Config("re_start must not exceed re_target"));
        }
        if !(self.delta_start > 0.0) {
            return Err(SolveError::Config("delta_start must be positive"));
        }
        if !(self.delta_min > 0.0) {
            return Err(SolveError::Config("delta_min must be positive"));
        }
        if self.step_iteration_cap == 0 {
            return Err(SolveError::Config("step_iteration_cap must be positive"));
        }
        if self.total_iteration_budget == 0 {
            return Err(SolveError::Config("total_iteration_budget must be positive"));
        }
        SolverConfig {
            max_iter: self.step_iteration_cap,
            ..self.per_step
        }
        .validate()
    }
}

/// Outcome of one solve at fixed `Re`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome<S> {
    pub state: S,
    pub status: Status,
    pub iterations: usize,
    pub eps_final: f64,
}

/// Anything that can attempt a solve at a given Reynolds number from a
/// starting state, using at most `max_iter` iterations.
pub trait TrialSolver {
    type State: Clone;

    fn trial(&mut self, reynolds: f64, initial: &Self::State, max_iter: usize)
        -> Result<TrialOutcome<Self::State>, SolveError>;
}

/// [`TrialSolver`] running the Navier-Stokes iteration of a template config.
#[derive(Debug)]
pub struct FlowTrials<'a> {
    solver: NonlinearSolver<'a>,
    template: SolverConfig,
    mode: StepMode,
}

impl<'a> FlowTrials<'a> {
    pub fn new(space: &'a TaylorHoodSpace, bc: &BoundaryConditions, template: SolverConfig, mode: StepMode) -> Result<Self, SolveError> {
        Ok(FlowTrials {
            solver: NonlinearSolver::new(space, bc)?,
            template,
            mode,
        })
    }
}

impl TrialSolver for FlowTrials<'_> {
    type State = SolutionState;

    fn trial(&mut self, reynolds: f64, initial: &SolutionState, max_iter: usize) -> Result<TrialOutcome<SolutionState>, SolveError> {
        let config = SolverConfig {
            reynolds,
            max_iter,
            exit_on_tolerance: self.mode == StepMode::ToleranceExit,
            ..self.template
        };
        let (state, history) = self.solver.solve(&config, initial)?;
        Ok(TrialOutcome {
            state,
            status: history.status,
            iterations: history.iterations(),
            eps_final: history.last().unwrap_or(f64::NAN),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationStep {
    pub reynolds: f64,
    /// Increment that produced this trial (`0` for the starting solve).
    pub delta: f64,
    pub status: Status,
    pub iterations: usize,
    pub eps_final: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    TargetReached,
    ScheduleComplete,
    /// A scheduled step failed (sequential mode) or the starting solve failed.
    StepFailed,
    BudgetExhausted,
    DeltaBelowMin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationTrace<S> {
    pub steps: Vec<ContinuationStep>,
    pub last_converged: Option<(f64, S)>,
    pub critical_re_estimate: Option<f64>,
    pub termination: Termination,
}

impl<S> ContinuationTrace<S> {
    pub fn total_iterations(&self) -> usize {
        self.steps.iter().map(|s| s.iterations).sum()
    }

    pub fn converged_reynolds(&self) -> Vec<f64> {
        self.steps
            .iter()
            .filter(|s| s.status == Status::Converged)
            .map(|s| s.reynolds)
            .collect()
    }
}

/// Solves at each scheduled `Re` in turn, warm-starting from the previous
/// converged state. Stops at the first failed step or when the budget runs out.
pub fn continue_sequential<T: TrialSolver>(
    cfg: &ContinuationConfig,
    solver: &mut T,
    initial: &T::State,
    schedule: &[f64],
) -> Result<ContinuationTrace<T::State>, SolveError> {
    cfg.validate()?;
    if schedule.is_empty() || schedule.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(SolveError::Config("schedule must be non-empty and strictly increasing"));
    }
    if schedule.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
        return Err(SolveError::Config("schedule values must be positive"));
    }
    let mut steps = Vec::new();
    let mut last: Option<(f64, T::State)> = None;
    let mut used = 0usize;
    let mut prev_re = None;
    for &re in schedule {
        let remaining = cfg.total_iteration_budget - used;
        if remaining == 0 {
            return Ok(finish(steps, last, Termination::BudgetExhausted));
        }
        let start = last.as_ref().map_or(initial, |(_, s)| s);
        let out = solver.trial(re, start, cfg.step_iteration_cap.min(remaining))?;
        used += out.iterations;
        steps.push(ContinuationStep {
            reynolds: re,
            delta: prev_re.map_or(0.0, |p| re - p),
            status: out.status,
            iterations: out.iterations,
            eps_final: out.eps_final,
        });
        prev_re = Some(re);
        if out.status != Status::Converged {
            return Ok(finish(steps, last, Termination::StepFailed));
        }
        last = Some((re, out.state));
    }
    Ok(ContinuationTrace {
        steps,
        last_converged: last,
        critical_re_estimate: None,
        termination: Termination::ScheduleComplete,
    })
}

fn finish<S>(steps: Vec<ContinuationStep>, last: Option<(f64, S)>, termination: Termination) -> ContinuationTrace<S> {
    let critical_re_estimate = match termination {
        Termination::TargetReached | Termination::ScheduleComplete => None,
        _ => last.as_ref().map(|(re, _)| *re),
    };
    ContinuationTrace {
        steps,
        last_converged: last,
        critical_re_estimate,
        termination,
    }
}

/// Bisection continuation from `re_start` towards `re_target`.
pub fn continue_bisection<T: TrialSolver>(
    cfg: &ContinuationConfig,
    solver: &mut T,
    initial: &T::State,
) -> Result<ContinuationTrace<T::State>, SolveError> {
    cfg.validate()?;
    let mut steps = Vec::new();
    let mut used = 0usize;

    let first = solver.trial(cfg.re_start, initial, cfg.step_iteration_cap.min(cfg.total_iteration_budget))?;
    used += first.iterations;
    steps.push(ContinuationStep {
        reynolds: cfg.re_start,
        delta: 0.0,
        status: first.status,
        iterations: first.iterations,
        eps_final: first.eps_final,
    });
    if first.status != Status::Converged {
        return Ok(finish(steps, None, Termination::StepFailed));
    }
    let (mut re_n, mut state_n) = (cfg.re_start, first.state);
    let mut delta = cfg.delta_start;

    let termination = loop {
        if re_n >= cfg.re_target {
            break Termination::TargetReached;
        }
        let remaining = cfg.total_iteration_budget - used;
        if remaining == 0 {
            break Termination::BudgetExhausted;
        }
        let re_trial = (re_n + delta).min(cfg.re_target);
        let out = solver.trial(re_trial, &state_n, cfg.step_iteration_cap.min(remaining))?;
        used += out.iterations;
        steps.push(ContinuationStep {
            reynolds: re_trial,
            delta,
            status: out.status,
            iterations: out.iterations,
            eps_final: out.eps_final,
        });
        if out.status == Status::Converged {
            re_n = re_trial;
            state_n = out.state;
        } else if delta <= cfg.delta_min {
            // the critical Re now lies in [re_n, re_n + delta), a bracket
            // no wider than delta_min
            break Termination::DeltaBelowMin;
        } else {
            delta *= 0.5;
        }
    };
    Ok(finish(steps, Some((re_n, state_n)), termination))
}
