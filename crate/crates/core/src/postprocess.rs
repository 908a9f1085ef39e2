//! Derived fields and probes: stream function, vorticity, divergence,
//! centerline profiles and branch signatures.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{FieldError, SolveError};
use crate::linsolve::factorize;
use crate::quadrature::QuadratureRule;
use crate::assembly::element_stiffness;
use crate::space::{p2_values, velocity_gradient, Field, FieldRole, FieldValue, TaylorHoodSpace};
use crate::sparse::SparseMatrix;

/// Sign convention of the stream-function Poisson problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StreamSign {
    /// `Δψ = −∂u1/∂x2 + ∂u2/∂x1`.
    #[default]
    Standard,
    /// `Δψ = ∂u1/∂x2 − ∂u2/∂x1`.
    Flipped,
}

fn require(field: &Field, role: FieldRole) -> Result<(), FieldError> {
    if field.role() != role {
        return Err(FieldError::Mismatch);
    }
    Ok(())
}

/// `∂u2/∂x1 − ∂u1/∂x2` from a velocity gradient `g[c][d] = ∂u_c/∂x_d`.
fn curl(g: &[[f64; 2]; 2]) -> f64 {
    g[1][0] - g[0][1]
}

/// Stream function on the P2 scalar space: solves `Δψ = −∂u1/∂x2 + ∂u2/∂x1`
/// (sign per `sign`) in the weak form `−(∇ψ, ∇φ) = (rhs, φ)` with `ψ = 0` on
/// the whole boundary.
pub fn stream_function(space: &TaylorHoodSpace, u: &Field, sign: StreamSign) -> Result<Field, SolveError> {
    require(u, FieldRole::Velocity)?;
    let n = space.n_nodes();
    let rule = QuadratureRule::degree5();
    let factor = match sign {
        StreamSign::Standard => 1.0,
        StreamSign::Flipped => -1.0,
    };
    let mut on_boundary = alloc::vec![false; n];
    for &b in space.boundary_nodes() {
        on_boundary[b] = true;
    }
    let mut trip = Vec::with_capacity(36 * space.mesh().n_triangles());
    let mut rhs = alloc::vec![0.0; n];
    for t in 0..space.mesh().n_triangles() {
        let nodes = space.tri_nodes(t);
        let k = element_stiffness(space, t, &rule);
        let scale = 2.0 * space.geometry(t).area;
        let mut load = [0.0; 6];
        for (l, w) in rule.points().iter().zip(rule.weights()) {
            let f = factor * curl(&velocity_gradient(space, u.values(), t, l));
            let phi = p2_values(l);
            for i in 0..6 {
                load[i] += w * scale * f * phi[i];
            }
        }
        for i in 0..6 {
            if on_boundary[nodes[i]] {
                continue;
            }
            // K ψ = −(rhs, φ)
            rhs[nodes[i]] -= load[i];
            for j in 0..6 {
                trip.push((nodes[i], nodes[j], k[i][j]));
            }
        }
    }
    for (i, &b) in on_boundary.iter().enumerate() {
        if b {
            trip.push((i, i, 1.0));
        }
    }
    let a = SparseMatrix::from_triplets(n, n, trip);
    let psi = factorize(&a)?.solve(&rhs)?;
    Ok(space.field(FieldRole::ScalarP2, psi)?)
}

/// P1 L2 projection of `w = ∂u2/∂x1 − ∂u1/∂x2`.
pub fn vorticity(space: &TaylorHoodSpace, u: &Field) -> Result<Field, SolveError> {
    require(u, FieldRole::Velocity)?;
    let n = space.n_p();
    let rule = QuadratureRule::degree5();
    let mut trip = Vec::with_capacity(9 * space.mesh().n_triangles());
    let mut rhs = alloc::vec![0.0; n];
    for t in 0..space.mesh().n_triangles() {
        let verts = space.pressure_dofs(t);
        let area = space.geometry(t).area;
        for i in 0..3 {
            for j in 0..3 {
                let m = if i == j { area / 6.0 } else { area / 12.0 };
                trip.push((verts[i], verts[j], m));
            }
        }
        for (l, w) in rule.points().iter().zip(rule.weights()) {
            let c = curl(&velocity_gradient(space, u.values(), t, l));
            for i in 0..3 {
                rhs[verts[i]] += w * 2.0 * area * c * l[i];
            }
        }
    }
    let m = SparseMatrix::from_triplets(n, n, trip);
    let w = factorize(&m)?.solve(&rhs)?;
    Ok(space.field(FieldRole::ScalarP1, w)?)
}

/// `‖div u‖` in L2, from the element-wise derivative of the P2 field.
pub fn divergence_norm(space: &TaylorHoodSpace, u: &Field) -> Result<f64, FieldError> {
    require(u, FieldRole::Velocity)?;
    let rule = QuadratureRule::degree5();
    let mut total = 0.0;
    for t in 0..space.mesh().n_triangles() {
        let scale = 2.0 * space.geometry(t).area;
        for (l, w) in rule.points().iter().zip(rule.weights()) {
            let g = velocity_gradient(space, u.values(), t, l);
            let d = g[0][0] + g[1][1];
            total += w * scale * d * d;
        }
    }
    Ok(libm::sqrt(total))
}

/// Named sample points.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProbeSet {
    pub points: Vec<(String, [f64; 2])>,
}

impl ProbeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, point: [f64; 2]) {
        self.points.push((name.into(), point));
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Left quarter, center and right quarter of the semi-ellipse at half
    /// its depth.
    pub fn semi_ellipse_mid_depth() -> Self {
        let mut p = Self::new();
        p.push("left", [-0.5, -0.25]);
        p.push("center", [0.0, -0.25]);
        p.push("right", [0.5, -0.25]);
        p
    }

    /// Keeps only points inside the mesh.
    pub fn retain_inside(&mut self, space: &TaylorHoodSpace) {
        self.points.retain(|(_, x)| space.locate(*x).is_some());
    }

    /// Values of `field` at every probe.
    pub fn sample(&self, space: &TaylorHoodSpace, field: &Field) -> Result<Vec<FieldValue>, FieldError> {
        self.points.iter().map(|(_, x)| space.eval(field, *x)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileLine {
    /// `x1 = const`, parametrized by `x2`.
    Vertical,
    /// `x2 = const`, parametrized by `x1`.
    Horizontal,
}

impl ProfileLine {
    pub fn as_str(self) -> &'static str {
        match self {
            ProfileLine::Vertical => "vertical",
            ProfileLine::Horizontal => "horizontal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileSample {
    pub line: ProfileLine,
    pub point: [f64; 2],
    pub velocity: [f64; 2],
}

/// Velocity along the lines through `center` (vertical and horizontal),
/// each sampled at `n ≥ 2` uniform points across the mesh bounding box.
/// Points outside the domain are skipped.
pub fn centerline_profiles(space: &TaylorHoodSpace, u: &Field, center: [f64; 2], n: usize) -> Result<Vec<ProfileSample>, FieldError> {
    require(u, FieldRole::Velocity)?;
    let n = n.max(2);
    let (lo, hi) = space.mesh().bounding_box();
    let mut out = Vec::with_capacity(2 * n);
    for (line, axis) in [(ProfileLine::Vertical, 1), (ProfileLine::Horizontal, 0)] {
        for k in 0..n {
            let s = lo[axis] + (hi[axis] - lo[axis]) * k as f64 / (n - 1) as f64;
            let mut point = center;
            point[axis] = s;
            match space.eval(u, point) {
                Ok(v) => out.push(ProfileSample {
                    line,
                    point,
                    velocity: v.vector(),
                }),
                Err(FieldError::OutsideDomain { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out)
}

/// Sign pattern of a stream function at a probe set, with its extrema.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchSignature {
    /// `+1`, `-1` or `0` per probe.
    pub signs: Vec<i8>,
    pub psi_min: f64,
    pub psi_max: f64,
}

impl BranchSignature {
    /// Compact pattern such as `+ + -`.
    pub fn pattern(&self) -> String {
        let mut s = String::new();
        for (i, &v) in self.signs.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            s.push(match v {
                1 => '+',
                -1 => '-',
                _ => '0',
            });
        }
        s
    }

    /// Two solutions lie on distinct branches iff their sign patterns differ.
    pub fn distinct_from(&self, other: &BranchSignature) -> bool {
        self.signs != other.signs
    }
}

/// Signs are taken relative to `1e-12·max|ψ|`, so a zero field gives an
/// all-zero pattern.
pub fn branch_signature(space: &TaylorHoodSpace, psi: &Field, probes: &ProbeSet) -> Result<BranchSignature, FieldError> {
    require(psi, FieldRole::ScalarP2)?;
    let (psi_min, psi_max) = psi
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let (psi_min, psi_max) = if psi.values().is_empty() { (0.0, 0.0) } else { (psi_min, psi_max) };
    let cutoff = 1e-12 * psi_min.abs().max(psi_max.abs());
    let signs = probes
        .sample(space, psi)?
        .into_iter()
        .map(|v| {
            let v = v.scalar();
            if v > cutoff {
                1
            } else if v < -cutoff {
                -1
            } else {
                0
            }
        })
        .collect();
    Ok(BranchSignature { signs, psi_min, psi_max })
}
