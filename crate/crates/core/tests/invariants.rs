//! Algebraic invariants of the discrete operators, checked on random data.

use cavityflow_core::assembly::{
    apply_pressure_gauge, assemble_convection, assemble_pressure_divergence, assemble_viscous, pressure_weights,
    GaugeSurrogate, LinearSystem,
};
use cavityflow_core::linsolve::{factorize, relative_residual, ReusePolicy, ReusingSolver, RESIDUAL_FACTOR};
use cavityflow_core::nonlinear::{NonlinearSolver, SolutionState, SolverConfig};
use cavityflow_core::postprocess::{stream_function, vorticity, StreamSign};
use cavityflow_core::sparse::SparseMatrix;
use cavityflow_core::{
    semi_ellipse_mesh, unit_square_mesh, BoundaryConditions, ConvectionForm, FieldRole, Linearization, Status,
    TaylorHoodSpace,
};
use proptest::prelude::*;

fn space(m: usize) -> TaylorHoodSpace {
    TaylorHoodSpace::new(unit_square_mesh(m).unwrap())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Deterministic pseudo-random coefficients from a seed.
fn coefficients(n: usize, seed: u64) -> Vec<f64> {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..n)
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
        .collect()
}

fn zero_boundary(space: &TaylorHoodSpace, mut u: Vec<f64>) -> Vec<f64> {
    for &n in space.boundary_nodes() {
        u[2 * n] = 0.0;
        u[2 * n + 1] = 0.0;
    }
    u
}

fn max_diff(a: &SparseMatrix, b: &SparseMatrix) -> f64 {
    let (da, db) = (a.to_dense(), b.to_dense());
    da.iter()
        .flatten()
        .zip(db.iter().flatten())
        .fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn skew_symmetric_convection_is_energy_neutral(seed in any::<u64>(), m in 2usize..5) {
        let space = space(m);
        let v = space.field(FieldRole::Velocity, coefficients(space.n_u(), seed)).unwrap();
        let u = zero_boundary(&space, coefficients(space.n_u(), seed ^ 0xabcdef));
        let (n, _) = assemble_convection(&space, ConvectionForm::SkewSymmetric, Linearization::Method2, &v);
        let energy = dot(&u, &n.matvec(&u));
        let bound = 1e-12 * norm(v.values()) * norm(&u).powi(2);
        prop_assert!(energy.abs() <= bound, "{} > {}", energy, bound);
    }

    #[test]
    fn newton_matrix_is_method1_plus_method2(seed in any::<u64>(), form_ix in 0usize..3) {
        let space = space(3);
        let form = ConvectionForm::ALL[form_ix];
        let w = space.field(FieldRole::Velocity, coefficients(space.n_u(), seed)).unwrap();
        let (m1, r1) = assemble_convection(&space, form, Linearization::Method1, &w);
        let (m2, r2) = assemble_convection(&space, form, Linearization::Method2, &w);
        let (m3, _) = assemble_convection(&space, form, Linearization::Method3, &w);
        let (nt, rn) = assemble_convection(&space, form, Linearization::Newton, &w);
        let scale = m1.norm_inf() + m2.norm_inf();
        let (d1, d2, dn) = (m1.to_dense(), m2.to_dense(), nt.to_dense());
        let d3 = m3.to_dense();
        for i in 0..space.n_u() {
            for j in 0..space.n_u() {
                prop_assert!((dn[i][j] - d1[i][j] - d2[i][j]).abs() <= 1e-14 * scale);
                prop_assert!((d3[i][j] - 0.5 * (d1[i][j] + d2[i][j])).abs() <= 1e-14 * scale);
            }
        }
        prop_assert!(r1.iter().chain(&r2).all(|&x| x == 0.0));
        // the Newton right-hand side is C(w, w) = M2(w) w
        let cw = m2.matvec(w.values());
        for (a, b) in rn.iter().zip(&cw) {
            prop_assert!((a - b).abs() <= 1e-13 * scale * norm(w.values()));
        }
    }

    #[test]
    fn gauged_pressure_has_zero_mean(seed in any::<u64>(), lid in 0.1f64..5.0, re in 1.0f64..500.0) {
        let space = space(4);
        let bc = BoundaryConditions::lid_driven(lid);
        let mut solver = NonlinearSolver::new(&space, &bc).unwrap();
        let state = SolutionState {
            u: space.field(FieldRole::Velocity, coefficients(space.n_u(), seed)).unwrap(),
            p: space.zero_field(FieldRole::Pressure),
        };
        let config = SolverConfig::new(re, ConvectionForm::Conservative, Linearization::Method2);
        let aux = solver.auxiliary(&state, &config).unwrap();
        let mean = dot(&pressure_weights(&space), aux.p.values());
        prop_assert!(mean.abs() < 1e-10, "{}", mean);
    }

    #[test]
    fn linear_solver_meets_residual_contract(seed in any::<u64>(), n in 2usize..40) {
        let vals = coefficients(n * n, seed);
        let mut trip = Vec::new();
        for i in 0..n {
            for j in 0..n {
                // sparse, nonsymmetric, with a weak diagonal
                if i == j || (i * 7 + j * 3 + seed as usize) % 5 == 0 {
                    trip.push((i, j, vals[i * n + j] + if i == j { 0.5 } else { 0.0 }));
                }
            }
        }
        let a = SparseMatrix::from_triplets(n, n, trip);
        let b = coefficients(n, seed ^ 1);
        if let Ok(f) = factorize(&a) {
            let x = f.solve(&b).unwrap();
            prop_assert!(relative_residual(&a, &x, &b) <= RESIDUAL_FACTOR);
        }
    }

    #[test]
    fn sigma_one_blend_is_the_auxiliary_solution(seed in any::<u64>(), sigma in 0.05f64..1.0) {
        let space = space(3);
        let bc = BoundaryConditions::lid_driven(1.0);
        let mut solver = NonlinearSolver::new(&space, &bc).unwrap();
        let state = solver.with_boundary(&SolutionState {
            u: space.field(FieldRole::Velocity, coefficients(space.n_u(), seed)).unwrap(),
            p: space.field(FieldRole::Pressure, coefficients(space.n_p(), !seed)).unwrap(),
        });
        let full = SolverConfig::new(200.0, ConvectionForm::SkewSymmetric, Linearization::Method2);
        let aux = solver.auxiliary(&state, &full).unwrap();
        let next = solver.iterate_once(&state, &full).unwrap();
        prop_assert_eq!(&next.u, &aux.u);
        prop_assert_eq!(&next.p, &aux.p);
        let relaxed = solver.iterate_once(&state, &full.with_sigma(sigma)).unwrap();
        for k in 0..space.n_u() {
            let blend = sigma * aux.u.values()[k] + (1.0 - sigma) * state.u.values()[k];
            prop_assert!((relaxed.u.values()[k] - blend).abs() <= 1e-12);
        }
    }

    #[test]
    fn stream_function_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let space = space(3);
        let u = space.field(FieldRole::Velocity, coefficients(space.n_u(), seed)).unwrap();
        let v = space.field(FieldRole::Velocity, coefficients(space.n_u(), !seed)).unwrap();
        let mix = u.combine(a, &v, b).unwrap();
        let lhs = stream_function(&space, &mix, StreamSign::Standard).unwrap();
        let rhs = stream_function(&space, &u, StreamSign::Standard)
            .unwrap()
            .combine(a, &stream_function(&space, &v, StreamSign::Standard).unwrap(), b)
            .unwrap();
        prop_assert!(space.l2_diff(&lhs, &rhs).unwrap() <= 1e-12 * (1.0 + space.l2_norm(&lhs)));
    }

    #[test]
    fn vorticity_is_exact_for_linear_fields(c in prop::array::uniform6(-2.0f64..2.0)) {
        let space = space(4);
        let u = space.interpolate_velocity(|x| [c[0] + c[1] * x[0] + c[2] * x[1], c[3] + c[4] * x[0] + c[5] * x[1]]);
        let w = vorticity(&space, &u).unwrap();
        for &x in w.values() {
            prop_assert!((x - (c[4] - c[2])).abs() <= 1e-12);
        }
    }

    #[test]
    fn square_area_is_one(m in 1usize..40) {
        prop_assert!((unit_square_mesh(m).unwrap().area() - 1.0).abs() <= 1e-14);
    }
}

#[test]
fn semi_ellipse_area_converges_to_quarter_pi() {
    let target = std::f64::consts::FRAC_PI_4;
    let errs: Vec<f64> = [8, 16, 32].iter().map(|&m| (semi_ellipse_mesh(m).unwrap().area() - target).abs()).collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    assert!(errs[2] < 2e-3, "{errs:?}");
}

#[test]
fn converged_states_are_discretely_divergence_free() {
    let space = space(8);
    let bc = BoundaryConditions::lid_driven(1.0);
    let coupling = assemble_pressure_divergence(&space);
    for re in [1.0, 100.0, 400.0] {
        let config = SolverConfig::new(re, ConvectionForm::Conservative, Linearization::Newton);
        let (state, history) = NonlinearSolver::new(&space, &bc)
            .unwrap()
            .solve(&config, &SolutionState::zero(&space))
            .unwrap();
        assert_eq!(history.status, Status::Converged, "Re {re}");
        let div = coupling.divergence.matvec(state.u.values());
        assert!(norm(&div) <= 1e-9 * norm(state.u.values()), "Re {re}: {}", norm(&div));
    }
}

#[test]
fn surrogate_preconditioned_solve_matches_direct_solve() {
    let space = space(6);
    let bc = BoundaryConditions::lid_driven(1.0);
    let solver = NonlinearSolver::new(&space, &bc).unwrap();
    let mut reusing = ReusingSolver::new(ReusePolicy::default()).with_surrogate(Box::new(GaugeSurrogate::new(&space)));
    let w0 = coefficients(space.n_u(), 3);
    // a slowly drifting linearization point, as in a nonlinear iteration
    for lin in Linearization::ALL {
        for step in 0..4 {
            let w: Vec<f64> = w0.iter().map(|v| v * (1.0 + 0.01 * step as f64)).collect();
            let system = solver.assembler().system(&space, 1.0 / 300.0, ConvectionForm::Conservative, lin, &w, None);
            let direct = factorize(&system.matrix).unwrap().solve(&system.rhs).unwrap();
            let x = reusing.solve(&system.matrix, &system.rhs).unwrap();
            assert!(relative_residual(&system.matrix, &x, &system.rhs) <= RESIDUAL_FACTOR);
            let err = x.iter().zip(&direct).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err <= 1e-7 * (1.0 + norm(&direct)), "{lin:?} {err}");
        }
    }
    let stats = reusing.stats();
    assert_eq!(stats.solves, 16);
    assert!(stats.krylov_iterations > 0);
    assert!(stats.factorizations < stats.solves, "{stats:?}");
}

#[test]
fn gauge_is_appended_once() {
    let space = space(2);
    let coupling = assemble_pressure_divergence(&space);
    let system = LinearSystem::from_blocks(&space, 1.0, &assemble_viscous(&space), &coupling, None, &vec![0.0; space.n_u()]);
    let g1 = apply_pressure_gauge(system, &space).unwrap();
    let g2 = apply_pressure_gauge(g1.clone(), &space).unwrap();
    assert_eq!(g1.matrix.nrows(), space.n_u() + space.n_p() + 1);
    assert_eq!(max_diff(&g1.matrix, &g2.matrix), 0.0);
}
