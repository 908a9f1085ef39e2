//! Sparse assembly of the linearized steady Navier-Stokes systems.
//!
//! Convection convention: `C(v, u) = div(v ⊗ u)` with `(v ⊗ u)_ij = v_i u_j`
//! and the divergence taken over the second index, so
//!
//! ```text
//! conservative    C(v, u) = (u·∇)v + (div u) v
//! characteristic  C(v, u) = (u·∇)v
//! skew-symmetric  C(v, u) = (u·∇)v + ½ (div u) v
//! ```
//!
//! The second argument transports the first. With this reading the
//! characteristic and skew forms are exactly `div(v⊗u) − v div u` and
//! `div(v⊗u) − ½ v div u`. Convection is integrated in this strong,
//! element-wise form (no integration by parts).
//!
//! Linearizations around the previous iterate `w`, with unknown `u`:
//!
//! | method    | operator                              | transport field |
//! |-----------|---------------------------------------|-----------------|
//! | `Method1` | `C(w, u)`                             | unknown         |
//! | `Method2` | `C(u, w)`                             | frozen (`w`)    |
//! | `Method3` | `½ (C(w, u) + C(u, w))`               | both            |
//! | `Newton`  | `C(w, u) + C(u, w) − C(w, w)`         | both            |
//!
//! Monolithic unknown layout: `[u (n_u) | p (n_p) | λ]`, where `λ` is the
//! Lagrange multiplier enforcing `∫ p dx = 0`.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::AssemblyError;
use crate::linsolve::Surrogate;
use crate::mesh::BoundaryTag;
use crate::quadrature::QuadratureRule;
use crate::space::{p2_gradients, p2_values, velocity_gradient, Field, FieldRole, TaylorHoodSpace};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConvectionForm {
    Conservative,
    Characteristic,
    SkewSymmetric,
}

impl ConvectionForm {
    pub const ALL: [ConvectionForm; 3] = [
        ConvectionForm::Conservative,
        ConvectionForm::Characteristic,
        ConvectionForm::SkewSymmetric,
    ];

    /// Weight of the `(div u) v` term.
    pub fn divergence_weight(self) -> f64 {
        match self {
            ConvectionForm::Conservative => 1.0,
            ConvectionForm::Characteristic => 0.0,
            ConvectionForm::SkewSymmetric => 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Linearization {
    /// Freezes the first (transported) argument.
    Method1,
    /// Freezes the second (transporting) argument: the Picard/Oseen iteration.
    Method2,
    /// Half-sum of Method1 and Method2.
    Method3,
    Newton,
}

impl Linearization {
    pub const ALL: [Linearization; 4] = [
        Linearization::Method1,
        Linearization::Method2,
        Linearization::Method3,
        Linearization::Newton,
    ];

    /// Coefficients of the (Method1, Method2) matrices and whether the
    /// `C(w, w)` right-hand side term is present.
    fn weights(self) -> (f64, f64, bool) {
        match self {
            Linearization::Method1 => (1.0, 0.0, false),
            Linearization::Method2 => (0.0, 1.0, false),
            Linearization::Method3 => (0.5, 0.5, false),
            Linearization::Newton => (1.0, 1.0, true),
        }
    }
}

/// Prescribed velocity on one boundary class.
#[derive(Clone)]
pub enum BoundaryValue {
    Constant([f64; 2]),
    Function(Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>),
}

impl core::fmt::Debug for BoundaryValue {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            BoundaryValue::Constant(v) => f.debug_tuple("Constant").field(v).finish(),
            BoundaryValue::Function(_) => f.write_str("Function(..)"),
        }
    }
}

impl BoundaryValue {
    pub fn at(&self, x: [f64; 2]) -> [f64; 2] {
        match self {
            BoundaryValue::Constant(v) => *v,
            BoundaryValue::Function(g) => g(x),
        }
    }
}

/// Dirichlet data: a velocity per boundary tag.
#[derive(Debug, Clone, Default)]
pub struct BoundaryConditions {
    entries: Vec<(BoundaryTag, BoundaryValue)>,
}

impl BoundaryConditions {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets (or replaces) the value for `tag`.
    pub fn with(mut self, tag: BoundaryTag, value: BoundaryValue) -> Self {
        self.entries.retain(|(t, _)| *t != tag);
        self.entries.push((tag, value));
        self
    }

    pub fn constant(self, tag: BoundaryTag, value: [f64; 2]) -> Self {
        self.with(tag, BoundaryValue::Constant(value))
    }

    /// Lid moving with `(speed, 0)`, walls at rest.
    pub fn lid_driven(speed: f64) -> Self {
        Self::new()
            .constant(BoundaryTag::LID, [speed, 0.0])
            .constant(BoundaryTag::WALL, [0.0, 0.0])
    }

    /// The same vector field on every tag in `tags`.
    pub fn everywhere(tags: &[BoundaryTag], g: Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>) -> Self {
        tags.iter().fold(Self::new(), |bc, &t| bc.with(t, BoundaryValue::Function(g.clone())))
    }

    pub fn get(&self, tag: BoundaryTag) -> Option<&BoundaryValue> {
        self.entries.iter().find(|(t, _)| *t == tag).map(|(_, v)| v)
    }

    /// Prescribed value of every constrained velocity DOF, ascending by DOF.
    pub fn dof_values(&self, space: &TaylorHoodSpace) -> Result<Vec<(usize, f64)>, AssemblyError> {
        let mut out = Vec::with_capacity(2 * space.boundary_nodes().len());
        for &n in space.boundary_nodes() {
            let tag = space.node_tag(n).expect("boundary node without tag");
            let value = self.get(tag).ok_or(AssemblyError::MissingBoundaryTag(tag))?;
            let g = value.at(space.node_coords(n));
            out.push((2 * n, g[0]));
            out.push((2 * n + 1, g[1]));
        }
        Ok(out)
    }
}

/// Sizes of the blocks of the monolithic unknown vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DofLayout {
    pub n_u: usize,
    pub n_p: usize,
    /// Whether the trailing gauge multiplier is present.
    pub gauge: bool,
}

impl DofLayout {
    pub fn of(space: &TaylorHoodSpace, gauge: bool) -> Self {
        DofLayout {
            n_u: space.n_u(),
            n_p: space.n_p(),
            gauge,
        }
    }

    pub fn dim(&self) -> usize {
        self.n_u + self.n_p + usize::from(self.gauge)
    }

    pub fn pressure_offset(&self) -> usize {
        self.n_u
    }

    pub fn gauge_index(&self) -> Option<usize> {
        self.gauge.then_some(self.n_u + self.n_p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    pub layout: DofLayout,
}

/// Pressure-gradient and divergence blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureCoupling {
    /// `n_u × n_p`: `−∫ p div φ`.
    pub gradient: SparseMatrix,
    /// `n_p × n_u`: `∫ q div u`.
    pub divergence: SparseMatrix,
}

// ---------------------------------------------------------------------------
// element kernels

/// Scalar P2 stiffness `∫ ∇φ_i · ∇φ_j`.
pub fn element_stiffness(space: &TaylorHoodSpace, t: usize, rule: &QuadratureRule) -> [[f64; 6]; 6] {
    let geo = space.geometry(t);
    let scale = 2.0 * geo.area;
    let mut k = [[0.0; 6]; 6];
    for (l, w) in rule.points().iter().zip(rule.weights()) {
        let g = p2_gradients(l, &geo.grad_bary);
        let ws = w * scale;
        for i in 0..6 {
            for j in 0..6 {
                k[i][j] += ws * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
            }
        }
    }
    k
}

/// `D[q][2i + c] = ∫ ψ_q ∂φ_i/∂x_c` with P1 `ψ` and P2 `φ`.
pub fn element_divergence(space: &TaylorHoodSpace, t: usize, rule: &QuadratureRule) -> [[f64; 12]; 3] {
    let geo = space.geometry(t);
    let scale = 2.0 * geo.area;
    let mut d = [[0.0; 12]; 3];
    for (l, w) in rule.points().iter().zip(rule.weights()) {
        let g = p2_gradients(l, &geo.grad_bary);
        let ws = w * scale;
        for q in 0..3 {
            for i in 0..6 {
                d[q][2 * i] += ws * l[q] * g[i][0];
                d[q][2 * i + 1] += ws * l[q] * g[i][1];
            }
        }
    }
    d
}

/// Element convection matrices for a frozen field `w`.
///
/// Returns `(m1, m2, rhs)`:
/// `m1` realizes `u ↦ ∫ C(w, u)·φ` (transport by the unknown),
/// `m2` realizes `u ↦ ∫ C(u, w)·φ` (transport by `w`),
/// `rhs = ∫ C(w, w)·φ`. Local index `2·node + component`.
pub fn element_convection(
    space: &TaylorHoodSpace,
    t: usize,
    form: ConvectionForm,
    w: &[f64],
    rule: &QuadratureRule,
) -> ([[f64; 12]; 12], [[f64; 12]; 12], [f64; 12]) {
    let geo = space.geometry(t);
    let scale = 2.0 * geo.area;
    let kappa = form.divergence_weight();
    let nodes = space.tri_nodes(t);
    let mut m1 = [[0.0; 12]; 12];
    let mut m2 = [[0.0; 12]; 12];
    let mut rhs = [0.0; 12];
    for (l, wq) in rule.points().iter().zip(rule.weights()) {
        let phi = p2_values(l);
        let dphi = p2_gradients(l, &geo.grad_bary);
        let mut a = [0.0; 2];
        for i in 0..6 {
            a[0] += phi[i] * w[2 * nodes[i]];
            a[1] += phi[i] * w[2 * nodes[i] + 1];
        }
        // ga[c][d] = ∂w_c/∂x_d
        let ga = velocity_gradient(space, w, t, l);
        let div_a = ga[0][0] + ga[1][1];
        let ws = wq * scale;
        for i in 0..6 {
            let pi = ws * phi[i];
            for c in 0..2 {
                rhs[2 * i + c] += pi * (a[0] * ga[c][0] + a[1] * ga[c][1] + kappa * div_a * a[c]);
            }
            for j in 0..6 {
                // transport of the unknown by w
                let adv = (a[0] * dphi[j][0] + a[1] * dphi[j][1] + kappa * div_a * phi[j]) * pi;
                m2[2 * i][2 * j] += adv;
                m2[2 * i + 1][2 * j + 1] += adv;
                // transport of w by the unknown
                for c in 0..2 {
                    for d in 0..2 {
                        m1[2 * i + c][2 * j + d] += pi * (phi[j] * ga[c][d] + kappa * dphi[j][d] * a[c]);
                    }
                }
            }
        }
    }
    (m1, m2, rhs)
}

/// `∫ f·φ` per local velocity DOF.
pub fn element_forcing(
    space: &TaylorHoodSpace,
    t: usize,
    f: &dyn Fn([f64; 2]) -> [f64; 2],
    rule: &QuadratureRule,
) -> [f64; 12] {
    let geo = space.geometry(t);
    let scale = 2.0 * geo.area;
    let mut out = [0.0; 12];
    for (l, w) in rule.points().iter().zip(rule.weights()) {
        let phi = p2_values(l);
        let fx = f(space.map_point(t, l));
        for i in 0..6 {
            out[2 * i] += w * scale * phi[i] * fx[0];
            out[2 * i + 1] += w * scale * phi[i] * fx[1];
        }
    }
    out
}

/// Combines the element matrices of a linearization.
fn combine_convection(lin: Linearization, m1: &[[f64; 12]; 12], m2: &[[f64; 12]; 12]) -> [[f64; 12]; 12] {
    let (w1, w2, _) = lin.weights();
    let mut out = [[0.0; 12]; 12];
    for i in 0..12 {
        for j in 0..12 {
            out[i][j] = w1 * m1[i][j] + w2 * m2[i][j];
        }
    }
    out
}

// ---------------------------------------------------------------------------
// stand-alone block assembly

/// Vector Laplacian `∫ ∇u : ∇v` over velocity DOFs (no `1/Re` factor).
pub fn assemble_viscous(space: &TaylorHoodSpace) -> SparseMatrix {
    let rule = QuadratureRule::degree5();
    let mut trip = Vec::with_capacity(space.mesh().n_triangles() * 72);
    for t in 0..space.mesh().n_triangles() {
        let k = element_stiffness(space, t, &rule);
        let dofs = space.velocity_dofs(t);
        for i in 0..6 {
            for j in 0..6 {
                for c in 0..2 {
                    trip.push((dofs[2 * i + c], dofs[2 * j + c], k[i][j]));
                }
            }
        }
    }
    SparseMatrix::from_triplets(space.n_u(), space.n_u(), trip)
}

pub fn assemble_pressure_divergence(space: &TaylorHoodSpace) -> PressureCoupling {
    let rule = QuadratureRule::degree5();
    let mut trip = Vec::with_capacity(space.mesh().n_triangles() * 36);
    for t in 0..space.mesh().n_triangles() {
        let d = element_divergence(space, t, &rule);
        let vd = space.velocity_dofs(t);
        let pd = space.pressure_dofs(t);
        for q in 0..3 {
            for k in 0..12 {
                trip.push((pd[q], vd[k], d[q][k]));
            }
        }
    }
    let divergence = SparseMatrix::from_triplets(space.n_p(), space.n_u(), trip);
    let mut gradient = divergence.transpose();
    for v in gradient.values_mut() {
        *v = -*v;
    }
    PressureCoupling { gradient, divergence }
}

/// Convection matrix over velocity DOFs and its right-hand side
/// contribution (nonzero only for Newton).
pub fn assemble_convection(
    space: &TaylorHoodSpace,
    form: ConvectionForm,
    lin: Linearization,
    u_k: &Field,
) -> (SparseMatrix, Vec<f64>) {
    assert_eq!(u_k.role(), FieldRole::Velocity);
    let rule = QuadratureRule::degree5();
    let (_, _, with_rhs) = lin.weights();
    let mut trip = Vec::with_capacity(space.mesh().n_triangles() * 144);
    let mut rhs = alloc::vec![0.0; space.n_u()];
    for t in 0..space.mesh().n_triangles() {
        let (m1, m2, r) = element_convection(space, t, form, u_k.values(), &rule);
        let m = combine_convection(lin, &m1, &m2);
        let dofs = space.velocity_dofs(t);
        for i in 0..12 {
            for j in 0..12 {
                trip.push((dofs[i], dofs[j], m[i][j]));
            }
            if with_rhs {
                rhs[dofs[i]] += r[i];
            }
        }
    }
    (SparseMatrix::from_triplets(space.n_u(), space.n_u(), trip), rhs)
}

/// `∫ f·φ` for every velocity DOF.
pub fn assemble_forcing(space: &TaylorHoodSpace, f: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
    let rule = QuadratureRule::degree5();
    let mut out = alloc::vec![0.0; space.n_u()];
    for t in 0..space.mesh().n_triangles() {
        let e = element_forcing(space, t, &f, &rule);
        for (k, d) in space.velocity_dofs(t).into_iter().enumerate() {
            out[d] += e[k];
        }
    }
    out
}

/// `∫ ψ_q dx` for every pressure DOF (row sums of the P1 mass matrix).
pub fn pressure_weights(space: &TaylorHoodSpace) -> Vec<f64> {
    let mut w = alloc::vec![0.0; space.n_p()];
    for t in 0..space.mesh().n_triangles() {
        let a = space.geometry(t).area / 3.0;
        for v in space.pressure_dofs(t) {
            w[v] += a;
        }
    }
    w
}

impl LinearSystem {
    /// `[conv + visc/Re, G; D, 0]` with rhs `[rhs_u; 0]`, no gauge yet.
    pub fn from_blocks(
        space: &TaylorHoodSpace,
        inv_re: f64,
        viscous: &SparseMatrix,
        coupling: &PressureCoupling,
        convection: Option<&SparseMatrix>,
        rhs_u: &[f64],
    ) -> Self {
        let layout = DofLayout::of(space, false);
        let (nu, n) = (layout.n_u, layout.dim());
        assert_eq!(rhs_u.len(), nu);
        let mut trip = Vec::new();
        for i in 0..nu {
            trip.extend(viscous.row(i).map(|(j, v)| (i, j, inv_re * v)));
            if let Some(c) = convection {
                trip.extend(c.row(i).map(|(j, v)| (i, j, v)));
            }
            trip.extend(coupling.gradient.row(i).map(|(j, v)| (i, nu + j, v)));
        }
        for q in 0..layout.n_p {
            trip.extend(coupling.divergence.row(q).map(|(j, v)| (nu + q, j, v)));
        }
        let mut rhs = alloc::vec![0.0; n];
        rhs[..nu].copy_from_slice(rhs_u);
        LinearSystem {
            matrix: SparseMatrix::from_triplets(n, n, trip),
            rhs,
            layout,
        }
    }

    /// Velocity coefficients of a solution vector.
    pub fn velocity<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[..self.layout.n_u]
    }

    /// Pressure coefficients of a solution vector.
    pub fn pressure<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[self.layout.n_u..self.layout.n_u + self.layout.n_p]
    }
}

/// Appends the zero-mean pressure multiplier: one column `w` in the
/// continuity rows and one row `wᵀ p = 0`.
pub fn apply_pressure_gauge(system: LinearSystem, space: &TaylorHoodSpace) -> Result<LinearSystem, AssemblyError> {
    let layout = system.layout;
    if layout.gauge {
        return Ok(system);
    }
    if system.matrix.nrows() != layout.dim() || layout.n_p != space.n_p() || layout.n_u != space.n_u() {
        return Err(AssemblyError::Layout {
            got: system.matrix.nrows(),
            expected: layout.dim(),
        });
    }
    let w = pressure_weights(space);
    let n = layout.dim();
    let lam = n;
    let mut trip = Vec::with_capacity(system.matrix.nnz() + 2 * layout.n_p);
    for i in 0..n {
        trip.extend(system.matrix.row(i).map(|(j, v)| (i, j, v)));
    }
    for (q, &wq) in w.iter().enumerate() {
        trip.push((layout.n_u + q, lam, wq));
        trip.push((lam, layout.n_u + q, wq));
    }
    let mut rhs = system.rhs;
    rhs.push(0.0);
    Ok(LinearSystem {
        matrix: SparseMatrix::from_triplets(n + 1, n + 1, trip),
        rhs,
        layout: DofLayout { gauge: true, ..layout },
    })
}

/// Replaces each constrained velocity row by an identity row with the
/// prescribed value on the right-hand side. Columns are left in place.
pub fn apply_dirichlet(
    system: LinearSystem,
    space: &TaylorHoodSpace,
    bc: &BoundaryConditions,
) -> Result<LinearSystem, AssemblyError> {
    let values = bc.dof_values(space)?;
    let n = system.matrix.nrows();
    let mut fixed = alloc::vec![None; n];
    for &(d, g) in &values {
        fixed[d] = Some(g);
    }
    let mut trip = Vec::with_capacity(system.matrix.nnz());
    let mut rhs = system.rhs;
    for (i, f) in fixed.iter().enumerate() {
        match f {
            Some(g) => {
                trip.push((i, i, 1.0));
                rhs[i] = *g;
            }
            None => trip.extend(system.matrix.row(i).map(|(j, v)| (i, j, v))),
        }
    }
    Ok(LinearSystem {
        matrix: SparseMatrix::from_triplets(n, n, trip),
        rhs,
        layout: system.layout,
    })
}

/// Preconditioning surrogate for gauged systems: the multiplier row and
/// column are decoupled and the divergence row of one pressure DOF is
/// replaced by `p_pin = 0`. The dense multiplier row makes LU fill-in of the
/// gauged matrix several times larger than that of the pinned one.
///
/// `extend` shifts the pinned pressure by a constant so that the gauge
/// equation holds and sets the multiplier to zero; for consistent
/// right-hand sides this is the exact solution of the gauged system.
#[derive(Debug, Clone)]
pub struct GaugeSurrogate {
    pressure_offset: usize,
    pin: usize,
    gauge: usize,
    weights: Vec<f64>,
    total_weight: f64,
}

impl GaugeSurrogate {
    pub fn new(space: &TaylorHoodSpace) -> Self {
        let layout = DofLayout::of(space, true);
        let weights = pressure_weights(space);
        let total_weight = weights.iter().sum();
        GaugeSurrogate {
            pressure_offset: layout.pressure_offset(),
            pin: layout.pressure_offset(),
            gauge: layout.gauge_index().expect("gauged layout"),
            weights,
            total_weight,
        }
    }
}

impl Surrogate for GaugeSurrogate {
    fn matrix(&self, a: &SparseMatrix) -> SparseMatrix {
        let n = a.nrows();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(a.nnz());
        let mut values = Vec::with_capacity(a.nnz());
        row_ptr.push(0);
        for i in 0..n {
            if i == self.pin || i == self.gauge {
                col_idx.push(i);
                values.push(1.0);
            } else {
                for (j, v) in a.row(i) {
                    if j != self.gauge {
                        col_idx.push(j);
                        values.push(v);
                    }
                }
            }
            row_ptr.push(col_idx.len());
        }
        SparseMatrix::from_csr(n, n, row_ptr, col_idx, values)
    }

    fn restrict(&self, r: &[f64]) -> Vec<f64> {
        let mut r = r.to_vec();
        r[self.pin] = 0.0;
        r[self.gauge] = 0.0;
        r
    }

    fn extend(&self, mut y: Vec<f64>, r: &[f64]) -> Vec<f64> {
        let p = &mut y[self.pressure_offset..self.gauge];
        let mean: f64 = p.iter().zip(&self.weights).map(|(a, b)| a * b).sum();
        let shift = (r[self.gauge] - mean) / self.total_weight;
        for v in p.iter_mut() {
            *v += shift;
        }
        y[self.gauge] = 0.0;
        y
    }
}

// ---------------------------------------------------------------------------
// cached assembler

/// Assembles complete linearized systems on a fixed space and Dirichlet set.
///
/// The monolithic sparsity pattern (constrained rows reduced to their
/// diagonal, gauge row and column included), the unscaled viscous values and
/// the Reynolds-independent coupling values are computed once; each call to
/// [`SystemAssembler::system`] only adds `1/Re`-scaled viscosity and the
/// convection terms. Element contributions are accumulated in element order,
/// so results are bitwise reproducible.
#[derive(Debug, Clone)]
pub struct SystemAssembler {
    layout: DofLayout,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    viscous: Vec<f64>,
    base: Vec<f64>,
    base_rhs: Vec<f64>,
    constrained: Vec<bool>,
    /// Value positions of the 12×12 velocity block per element; `usize::MAX`
    /// marks constrained rows.
    elem_pos: Vec<[usize; 144]>,
}

impl SystemAssembler {
    pub fn new(space: &TaylorHoodSpace, bc: &BoundaryConditions) -> Result<Self, AssemblyError> {
        let layout = DofLayout::of(space, true);
        let (nu, np, n) = (layout.n_u, layout.n_p, layout.dim());
        let lam = n - 1;
        let mut constrained = alloc::vec![false; nu];
        let mut base_rhs = alloc::vec![0.0; n];
        for (d, g) in bc.dof_values(space)? {
            constrained[d] = true;
            base_rhs[d] = g;
        }
        let ntri = space.mesh().n_triangles();

        // scalar-node and vertex adjacency through shared triangles
        let nn = space.n_nodes();
        let mut node_nodes: Vec<Vec<usize>> = alloc::vec![Vec::new(); nn];
        let mut node_verts: Vec<Vec<usize>> = alloc::vec![Vec::new(); nn];
        let mut vert_nodes: Vec<Vec<usize>> = alloc::vec![Vec::new(); np];
        for t in 0..ntri {
            let nodes = space.tri_nodes(t);
            let verts = space.pressure_dofs(t);
            for &a in &nodes {
                node_nodes[a].extend_from_slice(&nodes);
                node_verts[a].extend_from_slice(&verts);
            }
            for &v in &verts {
                vert_nodes[v].extend_from_slice(&nodes);
            }
        }
        for list in node_nodes.iter_mut().chain(node_verts.iter_mut()).chain(vert_nodes.iter_mut()) {
            list.sort_unstable();
            list.dedup();
        }

        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for d in 0..nu {
            if constrained[d] {
                col_idx.push(d);
            } else {
                let node = d / 2;
                for &b in &node_nodes[node] {
                    col_idx.push(2 * b);
                    col_idx.push(2 * b + 1);
                }
                col_idx.extend(node_verts[node].iter().map(|&v| nu + v));
            }
            row_ptr.push(col_idx.len());
        }
        for v in 0..np {
            for &b in &vert_nodes[v] {
                col_idx.push(2 * b);
                col_idx.push(2 * b + 1);
            }
            col_idx.push(lam);
            row_ptr.push(col_idx.len());
        }
        col_idx.extend(nu..nu + np);
        row_ptr.push(col_idx.len());

        let nnz = col_idx.len();
        let pos = |i: usize, j: usize| -> usize {
            let s = row_ptr[i];
            s + col_idx[s..row_ptr[i + 1]].binary_search(&j).expect("entry outside pattern")
        };

        let rule = QuadratureRule::degree5();
        let mut viscous = alloc::vec![0.0; nnz];
        let mut base = alloc::vec![0.0; nnz];
        let mut elem_pos = Vec::with_capacity(ntri);
        for t in 0..ntri {
            let vd = space.velocity_dofs(t);
            let pd = space.pressure_dofs(t);
            let mut ep = [usize::MAX; 144];
            for i in 0..12 {
                if constrained[vd[i]] {
                    continue;
                }
                for j in 0..12 {
                    ep[12 * i + j] = pos(vd[i], vd[j]);
                }
            }
            let k = element_stiffness(space, t, &rule);
            for i in 0..6 {
                for j in 0..6 {
                    for c in 0..2 {
                        let p = ep[12 * (2 * i + c) + 2 * j + c];
                        if p != usize::MAX {
                            viscous[p] += k[i][j];
                        }
                    }
                }
            }
            let d = element_divergence(space, t, &rule);
            for q in 0..3 {
                for k in 0..12 {
                    base[pos(nu + pd[q], vd[k])] += d[q][k];
                    if !constrained[vd[k]] {
                        base[pos(vd[k], nu + pd[q])] -= d[q][k];
                    }
                }
            }
            elem_pos.push(ep);
        }
        for (d, &c) in constrained.iter().enumerate() {
            if c {
                base[pos(d, d)] = 1.0;
            }
        }
        for (q, w) in pressure_weights(space).into_iter().enumerate() {
            base[pos(nu + q, lam)] = w;
            base[pos(lam, nu + q)] = w;
        }
        Ok(SystemAssembler {
            layout,
            row_ptr,
            col_idx,
            viscous,
            base,
            base_rhs,
            constrained,
            elem_pos,
        })
    }

    pub fn layout(&self) -> DofLayout {
        self.layout
    }

    /// Whether velocity DOF `d` carries a Dirichlet constraint.
    pub fn is_constrained(&self, d: usize) -> bool {
        self.constrained[d]
    }

    /// Prescribed boundary values, zero elsewhere (velocity part only).
    pub fn boundary_values(&self) -> &[f64] {
        &self.base_rhs[..self.layout.n_u]
    }

    /// Overwrites the constrained entries of `u` with the boundary data.
    pub fn impose_boundary(&self, u: &mut [f64]) {
        for (d, &c) in self.constrained.iter().enumerate() {
            if c {
                u[d] = self.base_rhs[d];
            }
        }
    }

    /// Stokes-type system without convection.
    pub fn stokes_system(&self, inv_re: f64, forcing: Option<&[f64]>) -> LinearSystem {
        self.build(inv_re, None, forcing)
    }

    /// Linearized system around `u_k` (velocity coefficients).
    pub fn system(
        &self,
        space: &TaylorHoodSpace,
        inv_re: f64,
        form: ConvectionForm,
        lin: Linearization,
        u_k: &[f64],
        forcing: Option<&[f64]>,
    ) -> LinearSystem {
        self.build(inv_re, Some((space, form, lin, u_k)), forcing)
    }

    fn build(
        &self,
        inv_re: f64,
        convection: Option<(&TaylorHoodSpace, ConvectionForm, Linearization, &[f64])>,
        forcing: Option<&[f64]>,
    ) -> LinearSystem {
        let mut values: Vec<f64> = self
            .base
            .iter()
            .zip(&self.viscous)
            .map(|(b, v)| b + inv_re * v)
            .collect();
        let mut rhs = self.base_rhs.clone();
        if let Some(f) = forcing {
            for (d, &fd) in f.iter().enumerate() {
                if !self.constrained[d] {
                    rhs[d] += fd;
                }
            }
        }
        if let Some((space, form, lin, u_k)) = convection {
            let rule = QuadratureRule::degree5();
            let (_, _, with_rhs) = lin.weights();
            for t in 0..space.mesh().n_triangles() {
                let (m1, m2, r) = element_convection(space, t, form, u_k, &rule);
                let m = combine_convection(lin, &m1, &m2);
                let ep = &self.elem_pos[t];
                let dofs = space.velocity_dofs(t);
                for i in 0..12 {
                    if ep[12 * i] == usize::MAX {
                        continue;
                    }
                    for j in 0..12 {
                        values[ep[12 * i + j]] += m[i][j];
                    }
                    if with_rhs {
                        rhs[dofs[i]] += r[i];
                    }
                }
            }
        }
        let n = self.layout.dim();
        LinearSystem {
            matrix: SparseMatrix::from_csr(n, n, self.row_ptr.clone(), self.col_idx.clone(), values),
            rhs,
            layout: self.layout,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsolve::factorize;
    use crate::mesh::unit_square_mesh;

    fn square(m: usize) -> TaylorHoodSpace {
        TaylorHoodSpace::new(unit_square_mesh(m).unwrap())
    }

    #[test]
    fn viscous_symmetric_and_kills_constants() {
        let s = square(3);
        let k = assemble_viscous(&s);
        assert!(k.asymmetry() < 1e-14);
        let c = s.interpolate_velocity(|_| [1.0, -2.0]);
        for v in k.matvec(c.values()) {
            assert!(v.abs() < 1e-13);
        }
    }

    #[test]
    fn pressure_blocks() {
        let s = square(3);
        let pc = assemble_pressure_divergence(&s);
        let c = s.interpolate_velocity(|_| [1.0, 1.0]);
        assert!(pc.divergence.matvec(c.values()).iter().all(|v| v.abs() < 1e-14));
        let dt = pc.divergence.transpose();
        for i in 0..s.n_u() {
            for (j, v) in pc.gradient.row(i) {
                assert!((v + dt.get(i, j)).abs() < 1e-14);
            }
        }
        let u = s.interpolate_velocity(|p| [p[0], -p[1]]);
        assert!(pc.divergence.matvec(u.values()).iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn zero_state_gives_zero_convection() {
        let s = square(2);
        let z = s.zero_field(FieldRole::Velocity);
        for form in ConvectionForm::ALL {
            for lin in Linearization::ALL {
                let (m, r) = assemble_convection(&s, form, lin, &z);
                assert!(m.values().iter().all(|&v| v == 0.0));
                assert!(r.iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn newton_is_method1_plus_method2() {
        let s = square(3);
        let w = s.interpolate_velocity(|p| [p[1] * p[1] - p[0], p[0] * p[1] + 0.3]);
        for form in ConvectionForm::ALL {
            let (m1, _) = assemble_convection(&s, form, Linearization::Method1, &w);
            let (m2, _) = assemble_convection(&s, form, Linearization::Method2, &w);
            let (mn, _) = assemble_convection(&s, form, Linearization::Newton, &w);
            let (m3, _) = assemble_convection(&s, form, Linearization::Method3, &w);
            let scale = mn.norm_inf();
            for i in 0..s.n_u() {
                for (j, v) in mn.row(i) {
                    assert!((v - m1.get(i, j) - m2.get(i, j)).abs() <= 1e-14 * scale);
                    assert!((m3.get(i, j) - 0.5 * v).abs() <= 1e-14 * scale);
                }
            }
        }
    }

    #[test]
    fn newton_rhs_consistency() {
        let s = square(3);
        let w = s.interpolate_velocity(|p| [libm::sin(p[0]) * p[1], p[0] - p[1] * p[1]]);
        for form in ConvectionForm::ALL {
            let (mn, rhs) = assemble_convection(&s, form, Linearization::Newton, &w);
            let (m1, _) = assemble_convection(&s, form, Linearization::Method1, &w);
            let (m2, _) = assemble_convection(&s, form, Linearization::Method2, &w);
            let a = mn.matvec(w.values());
            let b1 = m1.matvec(w.values());
            let b2 = m2.matvec(w.values());
            let scale = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for i in 0..s.n_u() {
                // C(w, w) from either partial matrix, and Newton matvec − rhs = C(w, w)
                assert!((b1[i] - rhs[i]).abs() <= 1e-12 * scale);
                assert!((b2[i] - rhs[i]).abs() <= 1e-12 * scale);
                assert!((a[i] - rhs[i] - rhs[i]).abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn forms_coincide_for_divergence_free_transport() {
        let s = square(3);
        let w = s.interpolate_velocity(|p| [p[1], 0.0]);
        let (c, _) = assemble_convection(&s, ConvectionForm::Conservative, Linearization::Method2, &w);
        let (h, _) = assemble_convection(&s, ConvectionForm::Characteristic, Linearization::Method2, &w);
        let (k, _) = assemble_convection(&s, ConvectionForm::SkewSymmetric, Linearization::Method2, &w);
        for i in 0..s.n_u() {
            for (j, v) in c.row(i) {
                assert!((v - h.get(i, j)).abs() < 1e-13);
                assert!((v - k.get(i, j)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn forcing_sums() {
        let s = square(4);
        assert!(assemble_forcing(&s, |_| [0.0, 0.0]).iter().all(|&v| v == 0.0));
        let f = assemble_forcing(&s, |_| [1.0, 0.0]);
        let sum1: f64 = f.iter().step_by(2).sum();
        let sum2: f64 = f.iter().skip(1).step_by(2).sum();
        assert!((sum1 - 1.0).abs() < 1e-14 && sum2.abs() < 1e-15);
        let g = assemble_forcing(&s, |p| [p[0], 0.0]);
        assert!((g.iter().step_by(2).sum::<f64>() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn gauge_weights_integrate_constants() {
        let s = square(5);
        let w = pressure_weights(&s);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn dirichlet_lid_values_and_missing_tag() {
        let s = square(2);
        let bc = BoundaryConditions::lid_driven(1.0);
        let vals = bc.dof_values(&s).unwrap();
        for (d, g) in &vals {
            let n = d / 2;
            let lid = s.node_tag(n) == Some(BoundaryTag::LID);
            let expected = if lid && d % 2 == 0 { 1.0 } else { 0.0 };
            assert_eq!(*g, expected);
        }
        let partial = BoundaryConditions::new().constant(BoundaryTag::LID, [1.0, 0.0]);
        assert_eq!(partial.dof_values(&s), Err(AssemblyError::MissingBoundaryTag(BoundaryTag::WALL)));
    }

    #[test]
    fn cached_assembler_matches_block_composition() {
        let s = square(3);
        let bc = BoundaryConditions::lid_driven(1.0);
        let w = s.interpolate_velocity(|p| [p[1] * p[1], -p[0] * p[1]]);
        let f = assemble_forcing(&s, |p| [p[0], 1.0]);
        let asm = SystemAssembler::new(&s, &bc).unwrap();
        let visc = assemble_viscous(&s);
        let pc = assemble_pressure_divergence(&s);
        for lin in Linearization::ALL {
            let fast = asm.system(&s, 0.01, ConvectionForm::SkewSymmetric, lin, w.values(), Some(&f));
            let (conv, crhs) = assemble_convection(&s, ConvectionForm::SkewSymmetric, lin, &w);
            let rhs: Vec<f64> = f.iter().zip(&crhs).map(|(a, b)| a + b).collect();
            let slow = LinearSystem::from_blocks(&s, 0.01, &visc, &pc, Some(&conv), &rhs);
            let slow = apply_dirichlet(apply_pressure_gauge(slow, &s).unwrap(), &s, &bc).unwrap();
            assert_eq!(fast.matrix.nrows(), slow.matrix.nrows());
            let scale = slow.matrix.norm_inf();
            for i in 0..fast.matrix.nrows() {
                for (j, v) in fast.matrix.row(i) {
                    assert!((v - slow.matrix.get(i, j)).abs() <= 1e-14 * scale, "({i},{j})");
                }
                for (j, v) in slow.matrix.row(i) {
                    assert!((v - fast.matrix.get(i, j)).abs() <= 1e-14 * scale, "({i},{j})");
                }
                assert!((fast.rhs[i] - slow.rhs[i]).abs() <= 1e-14 * (1.0 + slow.rhs[i].abs()));
            }
        }
    }

    #[test]
    fn constant_boundary_data_gives_constant_solution() {
        let s = square(4);
        let bc = BoundaryConditions::new()
            .constant(BoundaryTag::LID, [0.7, -0.3])
            .constant(BoundaryTag::WALL, [0.7, -0.3]);
        let asm = SystemAssembler::new(&s, &bc).unwrap();
        let sys = asm.stokes_system(1.0, None);
        let x = factorize(&sys.matrix).unwrap().solve(&sys.rhs).unwrap();
        for (d, v) in sys.velocity(&x).iter().enumerate() {
            let expected = if d % 2 == 0 { 0.7 } else { -0.3 };
            assert!((v - expected).abs() < 1e-12);
        }
    }
}
