//! Direct sparse LU solves for the nonsymmetric saddle-point systems.
//!
//! The numeric work is done by faer's supernodal LU (COLAMD column ordering,
//! partial row pivoting). faer is column-oriented, so the CSR arrays of `A`
//! are handed over unchanged as the CSC arrays of `Aᵀ`; solving with the
//! transposed factors then yields `A x = b`. faer does not expose pivots, so
//! numerical singularity is detected from a condition-number estimate. Built without faer's rayon
//! feature the factorization is sequential and bitwise reproducible.

use alloc::boxed::Box;
use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use faer::linalg::solvers::SolveCore;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut};

use crate::error::LinsolveError;
use crate::sparse::SparseMatrix;

/// Residual contract: `‖Ax − b‖∞ ≤ RESIDUAL_FACTOR·(‖A‖∞‖x‖∞ + ‖b‖∞)`.
pub const RESIDUAL_FACTOR: f64 = 1e-10;

/// Factorizations with an estimated reciprocal condition number below this
/// are reported as singular (the scale at which a pivot is lost to rounding).
pub const SINGULAR_RCOND: f64 = 1e-14;

/// Iterations of the inverse-norm estimator.
const CONDITION_SWEEPS: usize = 2;

/// Symbolic analysis of one sparsity pattern, shareable across numeric
/// factorizations of matrices with that pattern.
#[derive(Clone)]
pub struct SymbolicAnalysis {
    row_ptr: Arc<Vec<usize>>,
    col_idx: Arc<Vec<usize>>,
    inner: SymbolicLu<usize>,
}

impl core::fmt::Debug for SymbolicAnalysis {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("SymbolicAnalysis")
            .field("n", &(self.row_ptr.len() - 1))
            .field("nnz", &self.col_idx.len())
            .finish()
    }
}

impl SymbolicAnalysis {
    pub fn new(matrix: &SparseMatrix) -> Result<Self, LinsolveError> {
        if !matrix.is_square() {
            return Err(LinsolveError::NotSquare {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
            });
        }
        let n = matrix.nrows();
        let pattern = SymbolicSparseColMatRef::new_checked(n, n, matrix.row_ptr(), None, matrix.col_idx());
        let inner = SymbolicLu::try_new(pattern).map_err(|e| LinsolveError::Backend(format!("{e:?}")))?;
        Ok(SymbolicAnalysis {
            row_ptr: Arc::new(matrix.row_ptr().to_vec()),
            col_idx: Arc::new(matrix.col_idx().to_vec()),
            inner,
        })
    }

    /// Whether `matrix` has exactly the analysed pattern.
    pub fn matches(&self, matrix: &SparseMatrix) -> bool {
        matrix.is_square() && matrix.row_ptr() == &self.row_ptr[..] && matrix.col_idx() == &self.col_idx[..]
    }
}

/// LU factors of one specific matrix, plus the matrix itself for residual
/// checks and refinement. Immutable; concurrent solves are fine.
pub struct Factorization {
    matrix: SparseMatrix,
    lu: Lu<usize, f64>,
    norm_inf: f64,
}

impl core::fmt::Debug for Factorization {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Factorization")
            .field("n", &self.matrix.nrows())
            .field("nnz", &self.matrix.nnz())
            .finish()
    }
}

/// Factorizes `matrix`, computing a fresh symbolic analysis.
pub fn factorize(matrix: &SparseMatrix) -> Result<Factorization, LinsolveError> {
    let symbolic = SymbolicAnalysis::new(matrix)?;
    factorize_with(&symbolic, matrix)
}

/// Factorizes `matrix` reusing a symbolic analysis of the same pattern.
///
/// # Panics
/// If `symbolic` was computed for a different pattern.
pub fn factorize_with(symbolic: &SymbolicAnalysis, matrix: &SparseMatrix) -> Result<Factorization, LinsolveError> {
    assert!(symbolic.matches(matrix), "symbolic analysis does not match the matrix pattern");
    if !matrix.is_finite() {
        return Err(LinsolveError::Singular { rcond: f64::NAN });
    }
    let n = matrix.nrows();
    let at = SparseColMatRef::new(
        SymbolicSparseColMatRef::new_checked(n, n, matrix.row_ptr(), None, matrix.col_idx()),
        matrix.values(),
    );
    let lu = Lu::try_new_with_symbolic(symbolic.inner.clone(), at).map_err(|e| match e {
        faer::sparse::linalg::LuError::SymbolicSingular { .. } => LinsolveError::Singular { rcond: 0.0 },
        other => LinsolveError::Backend(format!("{other:?}")),
    })?;
    let fact = Factorization {
        norm_inf: matrix.norm_inf(),
        matrix: matrix.clone(),
        lu,
    };
    fact.check_conditioning()?;
    Ok(fact)
}

impl Factorization {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    fn raw_solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        let n = x.len();
        self.lu
            .solve_transpose_in_place_with_conj(Conj::No, MatMut::from_column_major_slice_mut(&mut x, n, 1));
        x
    }

    fn raw_solve_transpose(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        let n = x.len();
        // faer holds Aᵀ, so its plain solve applies A⁻ᵀ
        self.lu
            .solve_in_place_with_conj(Conj::No, MatMut::from_column_major_slice_mut(&mut x, n, 1));
        x
    }

    /// Estimate of `‖A⁻¹‖₁` (Hager's method with Higham's extra test
    /// vector). Returns `None` if a solve produced non-finite values.
    fn inverse_norm_estimate(&self) -> Option<f64> {
        let n = self.dim();
        let norm1 = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>();
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let mut x = alloc::vec![1.0 / n as f64; n];
        let mut est = 0.0f64;
        let mut last_j = usize::MAX;
        for _ in 0..CONDITION_SWEEPS {
            let y = self.raw_solve(&x);
            if !finite(&y) {
                return None;
            }
            est = est.max(norm1(&y));
            let xi: Vec<f64> = y.iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }).collect();
            let z = self.raw_solve_transpose(&xi);
            if !finite(&z) {
                return None;
            }
            let (j, zmax) = z
                .iter()
                .enumerate()
                .fold((0, 0.0f64), |(bj, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bj, bv) });
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
            if zmax <= ztx || j == last_j {
                break;
            }
            last_j = j;
            x.iter_mut().for_each(|v| *v = 0.0);
            x[j] = 1.0;
        }
        let alt: Vec<f64> = (0..n)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                s * (1.0 + i as f64 / (n.max(2) - 1) as f64)
            })
            .collect();
        let y = self.raw_solve(&alt);
        if !finite(&y) {
            return None;
        }
        Some(est.max(2.0 * norm1(&y) / (3.0 * n as f64)))
    }

    /// Rejects factorizations whose estimated reciprocal 1-norm condition
    /// number is below [`SINGULAR_RCOND`].
    fn check_conditioning(&self) -> Result<(), LinsolveError> {
        if self.dim() == 0 {
            return Ok(());
        }
        let mut colsum = alloc::vec![0.0f64; self.dim()];
        for (j, v) in self.matrix.col_idx().iter().zip(self.matrix.values()) {
            colsum[*j] += v.abs();
        }
        let anorm = colsum.iter().fold(0.0f64, |m, v| m.max(*v));
        let rcond = match self.inverse_norm_estimate() {
            Some(inv) if inv > 0.0 && anorm > 0.0 => 1.0 / (anorm * inv),
            _ => 0.0,
        };
        if !(rcond >= SINGULAR_RCOND) {
            return Err(LinsolveError::Singular { rcond });
        }
        Ok(())
    }

    /// Solves `A x = rhs`, with one step of iterative refinement if the
    /// residual contract is not met by the raw solve.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, LinsolveError> {
        if rhs.len() != self.dim() {
            return Err(LinsolveError::DimensionMismatch {
                got: rhs.len(),
                expected: self.dim(),
            });
        }
        let mut x = self.raw_solve(rhs);
        let (r, ok) = self.residual_check(&x, rhs);
        if !ok {
            let dx = self.raw_solve(&r);
            for (xi, d) in x.iter_mut().zip(&dx) {
                *xi += d;
            }
        }
        Ok(x)
    }

    /// Residual `b − A x` and whether it satisfies the contract.
    fn residual_check(&self, x: &[f64], b: &[f64]) -> (Vec<f64>, bool) {
        let ax = self.matrix.matvec(x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let rn = inf_norm(&r);
        let bound = RESIDUAL_FACTOR * (self.norm_inf * inf_norm(x) + inf_norm(b));
        (r, rn <= bound)
    }
}

/// Free-function form of [`Factorization::solve`].
pub fn solve(fact: &Factorization, rhs: &[f64]) -> Result<Vec<f64>, LinsolveError> {
    fact.solve(rhs)
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Relative residual `‖Ax − b‖∞ / (‖A‖∞‖x‖∞ + ‖b‖∞)`, computed by plain matvec.
pub fn relative_residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.matvec(x);
    let r = ax.iter().zip(b).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
    let denom = a.norm_inf() * inf_norm(x) + inf_norm(b);
    if denom == 0.0 {
        r
    } else {
        r / denom
    }
}

/// Caches the symbolic analysis across factorizations of matrices that share
/// a pattern (e.g. successive nonlinear iterations).
#[derive(Debug, Default, Clone)]
pub struct LuSolver {
    symbolic: Option<SymbolicAnalysis>,
}

impl LuSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn factorize(&mut self, matrix: &SparseMatrix) -> Result<Factorization, LinsolveError> {
        match &self.symbolic {
            Some(s) if s.matches(matrix) => {}
            _ => self.symbolic = Some(SymbolicAnalysis::new(matrix)?),
        }
        factorize_with(self.symbolic.as_ref().unwrap(), matrix)
    }
}

/// Policy of [`ReusingSolver`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReusePolicy {
    /// Krylov iterations allowed with a stale factorization before giving
    /// up and refactorizing.
    pub max_krylov: usize,
    /// A solve that needed more iterations than this triggers a fresh
    /// factorization on the next call.
    pub refactor_after: usize,
}

impl Default for ReusePolicy {
    fn default() -> Self {
        ReusePolicy {
            max_krylov: 25,
            refactor_after: 10,
        }
    }
}

/// Counters of a [`ReusingSolver`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SolveStats {
    pub solves: usize,
    pub factorizations: usize,
    pub krylov_iterations: usize,
}

/// Cheaper stand-in for a family of matrices, used to precondition them.
///
/// The surrogate matrix must have the dimension of the original. Applying
/// the preconditioner to a residual `r` means solving the surrogate with
/// right-hand side `restrict(r)` and post-processing the result with
/// `extend(y, r)`; the composite map must be linear in `r`.
pub trait Surrogate: core::fmt::Debug + Send + Sync {
    fn matrix(&self, a: &SparseMatrix) -> SparseMatrix;
    fn restrict(&self, r: &[f64]) -> Vec<f64>;
    fn extend(&self, y: Vec<f64>, r: &[f64]) -> Vec<f64>;
}

/// Upper bound on the number of solves skipped between reuse attempts.
const MAX_REUSE_BACKOFF: usize = 8;

#[derive(Debug)]
struct Preconditioner {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    lu: Factorization,
}

/// Solver for a sequence of matrices with one pattern (e.g. the linearized
/// systems of a nonlinear iteration).
///
/// Keeps the last LU factorization and first tries GMRES preconditioned
/// with it; when that does not meet the residual contract within
/// `max_krylov` iterations, the current matrix is factorized afresh. With a
/// [`Surrogate`], the surrogate matrix is factorized instead and GMRES is
/// always used; should that fail, the original matrix is factorized
/// directly. Every returned solution satisfies the same residual contract
/// as [`Factorization::solve`]. Singularity is detected at factorization
/// time.
#[derive(Debug, Default)]
pub struct ReusingSolver {
    lu: LuSolver,
    current: Option<Preconditioner>,
    surrogate: Option<Box<dyn Surrogate>>,
    stale: bool,
    /// Solves left to skip before the next reuse attempt, and the length of
    /// the next skip; doubled after every failed attempt.
    skip: usize,
    backoff: usize,
    policy: ReusePolicy,
    stats: SolveStats,
}

impl ReusingSolver {
    pub fn new(policy: ReusePolicy) -> Self {
        ReusingSolver {
            policy,
            ..Self::default()
        }
    }

    /// Plain direct solver: factorizes every matrix.
    pub fn direct() -> Self {
        Self::new(ReusePolicy {
            max_krylov: 0,
            refactor_after: 0,
        })
    }

    pub fn with_surrogate(mut self, surrogate: Box<dyn Surrogate>) -> Self {
        self.surrogate = Some(surrogate);
        self.current = None;
        self
    }

    pub fn stats(&self) -> SolveStats {
        self.stats
    }

    fn try_krylov(&mut self, matrix: &SparseMatrix, rhs: &[f64]) -> Option<Vec<f64>> {
        let p = self.current.as_ref()?;
        if p.row_ptr != matrix.row_ptr() || p.col_idx != matrix.col_idx() {
            return None;
        }
        let apply = |r: &[f64]| -> Vec<f64> {
            match &self.surrogate {
                Some(s) => s.extend(p.lu.raw_solve(&s.restrict(r)), r),
                None => p.lu.raw_solve(r),
            }
        };
        let (x, its) = gmres(matrix, rhs, &apply, self.policy.max_krylov)?;
        self.stats.krylov_iterations += its;
        self.backoff = 0;
        self.stale = its > self.policy.refactor_after;
        Some(x)
    }

    pub fn solve(&mut self, matrix: &SparseMatrix, rhs: &[f64]) -> Result<Vec<f64>, LinsolveError> {
        if rhs.len() != matrix.nrows() {
            return Err(LinsolveError::DimensionMismatch {
                got: rhs.len(),
                expected: matrix.nrows(),
            });
        }
        self.stats.solves += 1;
        let krylov = self.policy.max_krylov > 0 && matrix.is_finite();
        if krylov && !self.stale && self.current.is_some() {
            if self.skip > 0 {
                self.skip -= 1;
            } else if let Some(x) = self.try_krylov(matrix, rhs) {
                return Ok(x);
            } else {
                self.skip = self.backoff;
                self.backoff = (2 * self.backoff).clamp(1, MAX_REUSE_BACKOFF);
            }
        }
        self.current = None;
        if krylov {
            if let Some(s) = &self.surrogate {
                let m = s.matrix(matrix);
                if let Ok(lu) = self.lu.factorize(&m) {
                    self.stats.factorizations += 1;
                    self.current = Some(Preconditioner {
                        row_ptr: matrix.row_ptr().to_vec(),
                        col_idx: matrix.col_idx().to_vec(),
                        lu,
                    });
                    self.stale = false;
                    if let Some(x) = self.try_krylov(matrix, rhs) {
                        return Ok(x);
                    }
                    self.current = None;
                }
            }
        }
        let lu = self.lu.factorize(matrix)?;
        self.stats.factorizations += 1;
        let x = lu.solve(rhs)?;
        if self.surrogate.is_none() {
            self.current = Some(Preconditioner {
                row_ptr: matrix.row_ptr().to_vec(),
                col_idx: matrix.col_idx().to_vec(),
                lu,
            });
        }
        self.stale = false;
        Ok(x)
    }
}

/// GMRES gives up when the residual has not dropped by a factor of 10
/// after this many iterations.
const STAGNATION_CHECK: usize = 8;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Right-preconditioned GMRES (one cycle of at most `max_its` iterations)
/// started from `M⁻¹ b`. Returns the solution and iteration count if the
/// explicit residual meets the contract.
fn gmres(a: &SparseMatrix, b: &[f64], m: &dyn Fn(&[f64]) -> Vec<f64>, max_its: usize) -> Option<(Vec<f64>, usize)> {
    let n = b.len();
    let anorm = a.norm_inf();
    let bnorm = inf_norm(b);
    let contract = |x: &[f64], r: &[f64]| inf_norm(r) <= RESIDUAL_FACTOR * (anorm * inf_norm(x) + bnorm);
    let residual = |x: &[f64]| -> Vec<f64> { a.matvec(x).iter().zip(b).map(|(ax, bi)| bi - ax).collect() };

    let mut x = m(b);
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let r0 = residual(&x);
    if contract(&x, &r0) {
        return Some((x, 0));
    }
    // 2-norm target with a safety margin for the growth of ‖x‖∞
    let target = 0.1 * RESIDUAL_FACTOR * (anorm * inf_norm(&x) + bnorm);
    let beta = libm::sqrt(dot(&r0, &r0));
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_its + 1);
    basis.push(r0.iter().map(|v| v / beta).collect());
    let mut h: Vec<Vec<f64>> = Vec::with_capacity(max_its);
    let mut cs: Vec<(f64, f64)> = Vec::with_capacity(max_its);
    let mut g = alloc::vec![0.0; max_its + 1];
    g[0] = beta;
    let mut k = 0;
    while k < max_its {
        let z = m(&basis[k]);
        let mut w = a.matvec(&z);
        let mut col = alloc::vec![0.0; k + 2];
        for (i, v) in basis.iter().enumerate() {
            let hij = dot(&w, v);
            col[i] = hij;
            for (wl, vl) in w.iter_mut().zip(v) {
                *wl -= hij * vl;
            }
        }
        let hnext = libm::sqrt(dot(&w, &w));
        col[k + 1] = hnext;
        for (i, &(c, s)) in cs.iter().enumerate() {
            let (p, q) = (col[i], col[i + 1]);
            col[i] = c * p + s * q;
            col[i + 1] = -s * p + c * q;
        }
        let (p, q) = (col[k], col[k + 1]);
        let rho = libm::hypot(p, q);
        if !(rho > 0.0) || !rho.is_finite() {
            return None;
        }
        let (c, s) = (p / rho, q / rho);
        col[k] = rho;
        col[k + 1] = 0.0;
        g[k + 1] = -s * g[k];
        g[k] *= c;
        cs.push((c, s));
        h.push(col);
        k += 1;
        if g[k].abs() <= target || hnext == 0.0 {
            break;
        }
        if k == STAGNATION_CHECK && g[k].abs() > 0.1 * beta {
            return None;
        }
        basis.push(w.iter().map(|v| v / hnext).collect());
    }
    // back substitution for the Krylov coefficients
    let mut y = alloc::vec![0.0; k];
    for i in (0..k).rev() {
        let mut acc = g[i];
        for j in i + 1..k {
            acc -= h[j][i] * y[j];
        }
        y[i] = acc / h[i][i];
    }
    let mut v = alloc::vec![0.0; n];
    for (j, yj) in y.iter().enumerate() {
        for (vl, bl) in v.iter_mut().zip(&basis[j]) {
            *vl += yj * bl;
        }
    }
    for (xi, d) in x.iter_mut().zip(m(&v)) {
        *xi += d;
    }
    let r = residual(&x);
    (x.iter().all(|v| v.is_finite()) && contract(&x, &r)).then_some((x, k))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_passes_rhs_through() {
        let f = factorize(&SparseMatrix::identity(5)).unwrap();
        let b = [1.0, -2.0, 3.5, 0.0, 7.0];
        assert_eq!(f.solve(&b).unwrap(), b.to_vec());
    }

    #[test]
    fn tridiagonal_3x3() {
        let a = SparseMatrix::from_dense(&[&[2.0, 1.0, 0.0], &[1.0, 3.0, 1.0], &[0.0, 1.0, 2.0]]);
        let x = factorize(&a).unwrap().solve(&[3.0, 5.0, 3.0]).unwrap();
        for xi in x {
            assert!((xi - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn nonsymmetric_needs_pivoting() {
        // zero leading diagonal entry
        let a = SparseMatrix::from_dense(&[&[0.0, 2.0, 1.0], &[1.0, 0.0, 0.0], &[3.0, 1.0, 4.0]]);
        let b = [5.0, 1.0, 10.75];
        let x = factorize(&a).unwrap().solve(&b).unwrap();
        assert!(relative_residual(&a, &x, &b) < 1e-15);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.75).abs() < 1e-14 && (x[2] - 1.5).abs() < 1e-14);
    }

    #[test]
    fn singular_is_reported() {
        let a = SparseMatrix::from_dense(&[&[1.0, 1.0], &[1.0, 1.0]]);
        assert!(matches!(factorize(&a), Err(LinsolveError::Singular { .. })));
        let structurally = SparseMatrix::from_triplets(2, 2, alloc::vec![(0, 0, 1.0), (1, 0, 1.0)]);
        assert!(matches!(factorize(&structurally), Err(LinsolveError::Singular { .. })));
    }

    #[test]
    fn nearly_singular_is_reported() {
        let a = SparseMatrix::from_dense(&[&[1.0, 1.0], &[1.0, 1.0 + 1e-16 * 4.0]]);
        assert!(matches!(factorize(&a), Err(LinsolveError::Singular { .. })));
    }

    #[test]
    fn errors() {
        let rect = SparseMatrix::from_triplets(2, 3, alloc::vec![(0, 0, 1.0)]);
        assert!(matches!(factorize(&rect), Err(LinsolveError::NotSquare { .. })));
        let f = factorize(&SparseMatrix::identity(3)).unwrap();
        assert!(matches!(f.solve(&[1.0]), Err(LinsolveError::DimensionMismatch { got: 1, expected: 3 })));
    }

    #[test]
    fn zero_rhs_and_determinism() {
        let a = SparseMatrix::from_dense(&[&[4.0, -1.0, 0.0, 0.5], &[-1.0, 4.0, -1.0, 0.0], &[0.0, -1.0, 4.0, -1.0], &[2.0, 0.0, -1.0, 3.0]]);
        let f = factorize(&a).unwrap();
        assert_eq!(f.solve(&[0.0; 4]).unwrap(), alloc::vec![0.0; 4]);
        let b = [1.0, 2.0, 3.0, 4.0];
        let x1 = f.solve(&b).unwrap();
        let x2 = f.solve(&b).unwrap();
        assert_eq!(x1, x2);
        let x3 = factorize(&a).unwrap().solve(&b).unwrap();
        assert_eq!(x1, x3);
    }

    #[test]
    fn symbolic_reuse() {
        let a = SparseMatrix::from_dense(&[&[2.0, 1.0], &[1.0, 3.0]]);
        let mut b = a.clone();
        b.values_mut()[0] = 5.0;
        let mut solver = LuSolver::new();
        let xa = solver.factorize(&a).unwrap().solve(&[3.0, 4.0]).unwrap();
        let xb = solver.factorize(&b).unwrap().solve(&[6.0, 4.0]).unwrap();
        assert!(relative_residual(&a, &xa, &[3.0, 4.0]) < 1e-15);
        assert!(relative_residual(&b, &xb, &[6.0, 4.0]) < 1e-15);
    }

    #[test]
    fn reusing_solver_matches_direct_solves() {
        let base = [[4.0, -1.0, 0.0, 0.5], [-1.0, 4.0, -1.0, 0.0], [0.0, -1.0, 4.0, -1.0], [2.0, 0.0, -1.0, 3.0]];
        let mut solver = ReusingSolver::new(ReusePolicy::default());
        for k in 0..5 {
            let eps = 0.01 * k as f64;
            let rows: Vec<Vec<f64>> = base
                .iter()
                .enumerate()
                .map(|(i, r)| r.iter().enumerate().map(|(j, v)| if v != &0.0 { v + eps * (i + 2 * j) as f64 } else { 0.0 }).collect())
                .collect();
            let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
            let a = SparseMatrix::from_dense(&refs);
            let b = [1.0, -2.0, 0.5, 3.0];
            let x = solver.solve(&a, &b).unwrap();
            let bound = RESIDUAL_FACTOR * (a.norm_inf() * inf_norm(&x) + inf_norm(&b));
            let ax = a.matvec(&x);
            assert!(ax.iter().zip(&b).all(|(p, q)| (p - q).abs() <= bound));
        }
        let st = solver.stats();
        assert_eq!(st.solves, 5);
        assert_eq!(st.factorizations, 1);
        assert!(st.krylov_iterations > 0);
    }

    #[test]
    fn reusing_solver_refactors_on_singular_or_new_pattern() {
        let mut solver = ReusingSolver::new(ReusePolicy::default());
        solver.solve(&SparseMatrix::identity(2), &[1.0, 2.0]).unwrap();
        let singular = SparseMatrix::from_dense(&[&[1.0, 1.0], &[1.0, 1.0]]);
        assert!(matches!(solver.solve(&singular, &[1.0, 1.0]), Err(LinsolveError::Singular { .. })));
        let other = SparseMatrix::from_dense(&[&[2.0, 0.0], &[1.0, 1.0]]);
        assert_eq!(solver.solve(&other, &[2.0, 2.0]).unwrap(), alloc::vec![1.0, 1.0]);
        let mut direct = ReusingSolver::direct();
        direct.solve(&other, &[2.0, 2.0]).unwrap();
        direct.solve(&other, &[2.0, 2.0]).unwrap();
        assert_eq!(direct.stats().factorizations, 2);
    }
}
