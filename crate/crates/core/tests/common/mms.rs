//! Manufactured Navier-Stokes solution on the unit square.
//!
//! `ψ = 50 φ(x1) φ(x2)` with `φ(s) = s²(1−s)²`, `u = (∂ψ/∂x2, −∂ψ/∂x1)`
//! (divergence free, zero on the boundary) and `p = cos(πx1) cos(πx2)`
//! (zero mean). The body force is `(u·∇)u + ∇p − Δu/Re`.

#![allow(dead_code)]

use std::f64::consts::PI;

use cavityflow_core::assembly::assemble_forcing;
use cavityflow_core::nonlinear::{NonlinearSolver, SolutionState, SolverConfig};
use cavityflow_core::quadrature::QuadratureRule;
use cavityflow_core::{unit_square_mesh, BoundaryConditions, BoundaryTag, ConvectionForm, Linearization, Status, TaylorHoodSpace};

const A: f64 = 50.0;

fn phi(s: f64) -> [f64; 4] {
    [
        s * s * (1.0 - s) * (1.0 - s),
        2.0 * s * (1.0 - s) * (1.0 - 2.0 * s),
        2.0 * (1.0 - 6.0 * s + 6.0 * s * s),
        12.0 * (2.0 * s - 1.0),
    ]
}

pub fn velocity(x: [f64; 2]) -> [f64; 2] {
    let (f, g) = (phi(x[0]), phi(x[1]));
    [A * f[0] * g[1], -A * f[1] * g[0]]
}

pub fn pressure(x: [f64; 2]) -> f64 {
    (PI * x[0]).cos() * (PI * x[1]).cos()
}

pub fn forcing(x: [f64; 2], reynolds: f64) -> [f64; 2] {
    let (f, g) = (phi(x[0]), phi(x[1]));
    let u = velocity(x);
    let du1 = [A * f[1] * g[1], A * f[0] * g[2]];
    let du2 = [-A * f[2] * g[0], -A * f[1] * g[1]];
    let lap1 = A * (f[2] * g[1] + f[0] * g[3]);
    let lap2 = -A * (f[3] * g[0] + f[1] * g[2]);
    let dp = [-PI * (PI * x[0]).sin() * (PI * x[1]).cos(), -PI * (PI * x[0]).cos() * (PI * x[1]).sin()];
    [
        u[0] * du1[0] + u[1] * du1[1] + dp[0] - lap1 / reynolds,
        u[0] * du2[0] + u[1] * du2[1] + dp[1] - lap2 / reynolds,
    ]
}

pub struct MmsResult {
    pub status: Status,
    pub velocity_error: f64,
    pub pressure_error: f64,
}

/// Newton solve on the `m × m` square and L2 errors against the exact fields.
pub fn solve(m: usize, reynolds: f64, form: ConvectionForm) -> MmsResult {
    let space = TaylorHoodSpace::new(unit_square_mesh(m).unwrap());
    let bc = BoundaryConditions::new()
        .constant(BoundaryTag::LID, [0.0, 0.0])
        .constant(BoundaryTag::WALL, [0.0, 0.0]);
    let load = assemble_forcing(&space, |x| forcing(x, reynolds));
    let config = SolverConfig::new(reynolds, form, Linearization::Newton).with_tol(1e-11).with_max_iter(30);
    let mut solver = NonlinearSolver::new(&space, &bc).unwrap().with_forcing(load);
    let (state, history) = solver.solve(&config, &SolutionState::zero(&space)).unwrap();
    let (velocity_error, pressure_error) = errors(&space, &state);
    MmsResult { status: history.status, velocity_error, pressure_error }
}

/// L2 errors with a rule finer than the discrete polynomials.
fn errors(space: &TaylorHoodSpace, state: &SolutionState) -> (f64, f64) {
    let rule = QuadratureRule::degree5();
    // sub-sample each triangle on 4 children so the smooth exact fields are
    // integrated accurately enough not to pollute the rates
    let children: [[[f64; 3]; 3]; 4] = [
        [[1.0, 0.0, 0.0], [0.5, 0.5, 0.0], [0.5, 0.0, 0.5]],
        [[0.0, 1.0, 0.0], [0.0, 0.5, 0.5], [0.5, 0.5, 0.0]],
        [[0.0, 0.0, 1.0], [0.5, 0.0, 0.5], [0.0, 0.5, 0.5]],
        [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]],
    ];
    let (mut eu, mut ep) = (0.0, 0.0);
    for t in 0..space.mesh().n_triangles() {
        let area = space.mesh().triangle_area(t);
        for child in &children {
            for (q, w) in rule.points().iter().zip(rule.weights()) {
                let l: [f64; 3] = std::array::from_fn(|k| (0..3).map(|c| q[c] * child[c][k]).sum());
                let x = space.map_point(t, &l);
                let uh = space.eval_in_element(&state.u, t, &l).vector();
                let ph = space.eval_in_element(&state.p, t, &l).scalar();
                let ue = velocity(x);
                let ww = w * 2.0 * area / 4.0;
                eu += ww * ((uh[0] - ue[0]).powi(2) + (uh[1] - ue[1]).powi(2));
                ep += ww * (ph - pressure(x)).powi(2);
            }
        }
    }
    (eu.sqrt(), ep.sqrt())
}

/// Observed orders between consecutive refinements.
pub fn rates(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}
