//! Experiment drivers: single solve, Reynolds continuation and σ-sweep.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use cavityflow_core::continuation::{continue_bisection, continue_sequential, ContinuationTrace, FlowTrials, Termination};
use cavityflow_core::postprocess::{self, branch_signature, ProbeSet};
use cavityflow_core::{
    semi_ellipse_mesh, unit_square_mesh, BoundaryConditions, ConvergenceHistory, Mesh, NonlinearSolver,
    SolutionState, SolveError, Status, TaylorHoodSpace,
};
use thiserror::Error;

use crate::config::{ContinuationPlan, Geometry, RunConfig};
use crate::export::{self, SweepRow};
use crate::msh::{read_msh, MshError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Config(String),
    #[error("cannot read mesh {path}: {source}")]
    MeshIo {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Msh { path: PathBuf, source: MshError },
    #[error("{0}")]
    Mesh(#[from] cavityflow_core::MeshError),
    #[error("solver failed: {0}")]
    Solve(#[from] SolveError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("export failed: {0}")]
    Export(#[from] export::ExportError),
}

impl RunError {
    /// Process exit status for this error: configuration and input problems
    /// are usage errors (1); everything else is a numerical failure (2).
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::MeshIo { .. } | RunError::Msh { .. } | RunError::Mesh(_) => 1,
            RunError::Solve(SolveError::Config(_)) => 1,
            _ => 2,
        }
    }
}

/// What a command produced: `success` selects exit status 0 versus 2.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub success: bool,
    pub summary: String,
}

pub fn build_mesh(geometry: &Geometry) -> Result<Mesh, RunError> {
    Ok(match geometry {
        Geometry::Square(m) => unit_square_mesh(*m)?,
        Geometry::SemiEllipse(m) => semi_ellipse_mesh(*m)?,
        Geometry::Msh(path) => {
            let text = fs::read_to_string(path).map_err(|source| RunError::MeshIo {
                path: path.clone(),
                source,
            })?;
            read_msh(&text).map_err(|source| RunError::Msh {
                path: path.clone(),
                source,
            })?
        }
    })
}

/// Parses `square:M`, `semi_ellipse:M` or treats the argument as an MSH path.
pub fn geometry_from_arg(arg: &str) -> Result<Geometry, RunError> {
    let builtin = |name: &str, rest: &str, min: usize| -> Result<usize, RunError> {
        match rest.parse::<usize>() {
            Ok(m) if m >= min => Ok(m),
            _ => Err(RunError::Config(format!(
                "`{name}:` expects an integer resolution >= {min}, got `{rest}`"
            ))),
        }
    };
    if let Some(rest) = arg.strip_prefix("square:") {
        return Ok(Geometry::Square(builtin("square", rest, 1)?));
    }
    if let Some(rest) = arg.strip_prefix("semi_ellipse:") {
        return Ok(Geometry::SemiEllipse(builtin("semi_ellipse", rest, 2)?));
    }
    Ok(Geometry::Msh(PathBuf::from(arg)))
}

pub fn mesh_info(mesh: &Mesh) -> String {
    let (lo, hi) = mesh.bounding_box();
    let mut s = String::new();
    s.push_str(&format!("vertices: {}\n", mesh.n_vertices()));
    s.push_str(&format!("triangles: {}\n", mesh.n_triangles()));
    s.push_str(&format!("boundary edges: {}\n", mesh.boundary_edges().len()));
    for tag in mesh.boundary_tags() {
        let n = mesh.boundary_edges().iter().filter(|e| e.tag == tag).count();
        s.push_str(&format!("  tag {tag}: {n}\n"));
    }
    s.push_str(&format!("area: {}\n", export::fmt_f64(mesh.area())));
    s.push_str(&format!(
        "bounding box: [{}, {}] x [{}, {}]\n",
        lo[0], hi[0], lo[1], hi[1]
    ));
    let space = TaylorHoodSpace::new(mesh.clone());
    s.push_str(&format!(
        "unknowns: {} velocity, {} pressure\n",
        space.n_u(),
        space.n_p()
    ));
    s
}

/// Three probes on the horizontal line through the middle of the bounding
/// box, at its quarter points. On the semi-ellipse these are the mid-depth
/// probes used to tell the two flow branches apart.
pub fn default_probes(space: &TaylorHoodSpace) -> ProbeSet {
    let (lo, hi) = space.mesh().bounding_box();
    let y = 0.5 * (lo[1] + hi[1]);
    let w = hi[0] - lo[0];
    let mut probes = ProbeSet::new();
    probes.push("left", [lo[0] + 0.25 * w, y]);
    probes.push("center", [lo[0] + 0.5 * w, y]);
    probes.push("right", [lo[0] + 0.75 * w, y]);
    probes.retain_inside(space);
    probes
}

struct Writer {
    dir: PathBuf,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(dir).map_err(|source| RunError::Write {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Writer {
            dir: dir.to_path_buf(),
        })
    }

    fn write(&self, name: &str, contents: &str) -> Result<(), RunError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|source| RunError::Write { path, source })
    }
}

/// Writes `solution.vtk`, `psi.vtk` and `profiles.csv` for one state, as
/// enabled in the output section.
fn write_state(w: &Writer, cfg: &RunConfig, space: &TaylorHoodSpace, state: &SolutionState, suffix: &str) -> Result<(), RunError> {
    let out = &cfg.output;
    let psi = if out.stream_function {
        Some(postprocess::stream_function(space, &state.u, cfg.stream_sign())?)
    } else {
        None
    };
    if out.vtk {
        let mut fields = vec![("velocity", &state.u), ("pressure", &state.p)];
        let w_field;
        if out.vorticity {
            w_field = postprocess::vorticity(space, &state.u)?;
            fields.push(("vorticity", &w_field));
        }
        w.write(&format!("solution{suffix}.vtk"), &export::vtk(space, "cavityflow solution", &fields)?)?;
        if let Some(psi) = &psi {
            w.write(&format!("psi{suffix}.vtk"), &export::vtk(space, "cavityflow stream function", &[("psi", psi)])?)?;
        }
    }
    if out.csv_profiles {
        let (lo, hi) = space.mesh().bounding_box();
        let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
        let samples = postprocess::centerline_profiles(space, &state.u, center, out.profile_points)
            .map_err(SolveError::from)?;
        w.write(&format!("profiles{suffix}.csv"), &export::profiles_csv(&samples))?;
    }
    Ok(())
}

fn boundary(cfg: &RunConfig) -> BoundaryConditions {
    BoundaryConditions::lid_driven(cfg.lid_speed)
}

pub fn cmd_solve(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome, RunError> {
    let mesh = build_mesh(&cfg.geometry)?;
    let space = TaylorHoodSpace::new(mesh);
    let mut solver = NonlinearSolver::new(&space, &boundary(cfg))?;
    let (state, history) = solver.solve(&cfg.solver, &SolutionState::zero(&space))?;
    let w = Writer::new(out_dir)?;
    if cfg.output.csv_history {
        w.write("history.csv", &export::history_csv(&history))?;
    }
    if state.is_finite() {
        write_state(&w, cfg, &space, &state, "")?;
    }
    Ok(Outcome {
        success: history.status == Status::Converged,
        summary: history_summary(&history),
    })
}

fn history_summary(h: &ConvergenceHistory) -> String {
    let mut s = format!("status: {}\niterations: {}\n", h.status, h.iterations());
    if let Some(e) = h.last() {
        s.push_str(&format!("final epsilon: {e:e}\n"));
    }
    if let Some(f) = &h.failure {
        s.push_str(&format!("linear solve failure: {f}\n"));
    }
    s
}

pub fn cmd_continue(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome, RunError> {
    let plan = cfg
        .continuation
        .as_ref()
        .ok_or_else(|| RunError::Config("missing `[continuation]` section".into()))?;
    let mesh = build_mesh(&cfg.geometry)?;
    let space = TaylorHoodSpace::new(mesh);
    let zero = SolutionState::zero(&space);
    let trace: ContinuationTrace<SolutionState> = match plan {
        ContinuationPlan::Bisection(c) => {
            let mut trials = FlowTrials::new(&space, &boundary(cfg), c.per_step, c.step_mode)?;
            continue_bisection(c, &mut trials, &zero)?
        }
        ContinuationPlan::Schedule(c, schedule) => {
            let mut trials = FlowTrials::new(&space, &boundary(cfg), c.per_step, c.step_mode)?;
            continue_sequential(c, &mut trials, &zero, schedule)?
        }
    };
    let w = Writer::new(out_dir)?;
    w.write("trace.csv", &export::trace_csv(&trace.steps))?;
    if let Some((_, state)) = &trace.last_converged {
        write_state(&w, cfg, &space, state, "")?;
    }
    let success = matches!(
        trace.termination,
        Termination::TargetReached | Termination::ScheduleComplete
    );
    let mut summary = format!(
        "termination: {:?}\nsteps: {}\ntotal iterations: {}\n",
        trace.termination,
        trace.steps.len(),
        trace.total_iterations()
    );
    if let Some((re, _)) = &trace.last_converged {
        summary.push_str(&format!("last converged Re: {re}\n"));
    }
    if let Some(est) = trace.critical_re_estimate {
        summary.push_str(&format!("critical Re estimate: {est}\n"));
    }
    Ok(Outcome { success, summary })
}

/// Result of one σ in a sweep.
#[derive(Debug, Clone)]
pub struct SweepRun {
    pub row: SweepRow,
    pub history: ConvergenceHistory,
    pub psi_range: Option<(f64, f64)>,
}

/// Runs the solver once per σ, on up to `jobs` threads. Results come back
/// sorted by σ regardless of completion order.
pub fn sweep(space: &TaylorHoodSpace, bc: &BoundaryConditions, cfg: &RunConfig, sigmas: &[f64], jobs: usize) -> Result<Vec<SweepRun>, RunError> {
    let mut sigmas = sigmas.to_vec();
    sigmas.sort_by(f64::total_cmp);
    let probes = default_probes(space);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<SweepRun, RunError>>>> =
        Mutex::new((0..sigmas.len()).map(|_| None).collect());
    let worker = || {
        let mut solver = NonlinearSolver::new(space, bc);
        loop {
            let i = next.fetch_add(1, Ordering::SeqCst);
            if i >= sigmas.len() {
                break;
            }
            let r = match &mut solver {
                Ok(solver) => sweep_one(solver, space, cfg, &probes, sigmas[i]),
                Err(e) => Err(e.clone().into()),
            };
            results.lock().expect("poisoned")[i] = Some(r);
        }
    };
    let jobs = jobs.clamp(1, sigmas.len().max(1));
    if jobs == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(&worker);
            }
        });
    }
    results
        .into_inner()
        .expect("poisoned")
        .into_iter()
        .map(|r| r.expect("every sigma is processed"))
        .collect()
}

fn sweep_one(solver: &mut NonlinearSolver<'_>, space: &TaylorHoodSpace, cfg: &RunConfig, probes: &ProbeSet, sigma: f64) -> Result<SweepRun, RunError> {
    let config = cfg.solver.with_sigma(sigma);
    let (state, history) = solver.solve(&config, &SolutionState::zero(space))?;
    let mut row = SweepRow {
        sigma,
        status: history.status,
        iterations: history.iterations(),
        signature: String::new(),
    };
    let mut psi_range = None;
    if history.status == Status::Converged {
        let psi = postprocess::stream_function(space, &state.u, cfg.stream_sign())?;
        let sig = branch_signature(space, &psi, probes).map_err(SolveError::from)?;
        row.signature = sig.pattern();
        psi_range = Some((sig.psi_min, sig.psi_max));
    }
    Ok(SweepRun {
        row,
        history,
        psi_range,
    })
}

/// Distinct signatures among converged rows, in σ order of first appearance.
pub fn distinct_signatures(rows: &[SweepRow]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for r in rows {
        if r.status == Status::Converged && !out.contains(&r.signature) {
            out.push(r.signature.clone());
        }
    }
    out
}

pub fn cmd_sweep(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome, RunError> {
    let sw = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| RunError::Config("missing `[sweep]` section".into()))?;
    let mesh = build_mesh(&cfg.geometry)?;
    let space = TaylorHoodSpace::new(mesh);
    let runs = sweep(&space, &boundary(cfg), cfg, &sw.sigmas, sw.jobs)?;
    let w = Writer::new(out_dir)?;
    let rows: Vec<SweepRow> = runs.iter().map(|r| r.row.clone()).collect();
    w.write("sweep.csv", &export::sweep_csv(&rows))?;
    let mut sigs = String::from("sigma,signature,psi_min,psi_max\n");
    for r in &runs {
        if let Some((lo, hi)) = r.psi_range {
            sigs.push_str(&format!(
                "{},{},{},{}\n",
                export::fmt_f64(r.row.sigma),
                r.row.signature,
                export::fmt_f64(lo),
                export::fmt_f64(hi)
            ));
        }
        if cfg.output.csv_history {
            w.write(&format!("history_sigma_{}.csv", r.row.sigma), &export::history_csv(&r.history))?;
        }
    }
    w.write("signatures.csv", &sigs)?;
    let distinct = distinct_signatures(&rows);
    let converged = rows.iter().filter(|r| r.status == Status::Converged).count();
    let mut summary = String::new();
    for r in &rows {
        summary.push_str(&format!(
            "sigma {}: {} after {} iterations {}\n",
            r.sigma, r.status, r.iterations, r.signature
        ));
    }
    summary.push_str(&format!(
        "{converged} of {} runs converged; {} distinct signature(s): {}\n",
        rows.len(),
        distinct.len(),
        distinct.join(" | ")
    ));
    Ok(Outcome {
        success: converged > 0,
        summary,
    })
}
