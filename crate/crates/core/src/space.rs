//! Taylor-Hood P2/P1 mixed space: continuous quadratic velocity, continuous
//! linear pressure, on a [`Mesh`].
//!
//! Scalar P2 nodes are the mesh vertices followed by the unique edge
//! midpoints. Velocity DOFs are component-interleaved per scalar node
//! (`2·node + component`); pressure DOFs are the vertex indices.
//!
//! Local node order on a triangle `[v0, v1, v2]` is the three vertices, then
//! the midpoints of `(v0,v1)`, `(v1,v2)`, `(v2,v0)`.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use crate::error::FieldError;
use crate::mesh::{BoundaryTag, Mesh};
use crate::quadrature::QuadratureRule;

static NEXT_SPACE_ID: AtomicU64 = AtomicU64::new(1);

/// Constant geometric data of one triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    pub area: f64,
    /// Gradients of the three barycentric coordinates.
    pub grad_bary: [[f64; 2]; 3],
}

impl ElementGeometry {
    fn new(p: [[f64; 2]; 3]) -> Self {
        let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        let mut g = [[0.0; 2]; 3];
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            g[i] = [(p[j][1] - p[k][1]) / det, (p[k][0] - p[j][0]) / det];
        }
        ElementGeometry {
            area: 0.5 * det,
            grad_bary: g,
        }
    }
}

/// P2 shape function values at barycentric point `l`.
#[inline]
pub fn p2_values(l: &[f64; 3]) -> [f64; 6] {
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[0] * l[1],
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
    ]
}

/// Physical gradients of the P2 shape functions at barycentric point `l`.
#[inline]
pub fn p2_gradients(l: &[f64; 3], g: &[[f64; 2]; 3]) -> [[f64; 2]; 6] {
    let mut out = [[0.0; 2]; 6];
    for d in 0..2 {
        out[0][d] = (4.0 * l[0] - 1.0) * g[0][d];
        out[1][d] = (4.0 * l[1] - 1.0) * g[1][d];
        out[2][d] = (4.0 * l[2] - 1.0) * g[2][d];
        out[3][d] = 4.0 * (l[0] * g[1][d] + l[1] * g[0][d]);
        out[4][d] = 4.0 * (l[1] * g[2][d] + l[2] * g[1][d]);
        out[5][d] = 4.0 * (l[2] * g[0][d] + l[0] * g[2][d]);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldRole {
    /// Vector P2, length `n_u`.
    Velocity,
    /// Scalar P1, length `n_p`.
    Pressure,
    ScalarP2,
    ScalarP1,
}

/// Coefficient vector tied to a space and a role.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    space_id: u64,
    role: FieldRole,
    values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldValue {
    Scalar(f64),
    Vector([f64; 2]),
}

impl FieldValue {
    /// Scalar value, or the first component of a vector.
    pub fn scalar(self) -> f64 {
        match self {
            FieldValue::Scalar(v) => v,
            FieldValue::Vector(v) => v[0],
        }
    }

    /// Vector value; a scalar `s` becomes `[s, 0]`.
    pub fn vector(self) -> [f64; 2] {
        match self {
            FieldValue::Scalar(v) => [v, 0.0],
            FieldValue::Vector(v) => v,
        }
    }
}

impl Field {
    pub fn role(&self) -> FieldRole {
        self.role
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn space_id(&self) -> u64 {
        self.space_id
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `self - other`, checking that both fields share space and role.
    pub fn sub(&self, other: &Field) -> Result<Field, FieldError> {
        self.check_compatible(other)?;
        Ok(Field {
            space_id: self.space_id,
            role: self.role,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }

    /// `alpha·self + beta·other`.
    pub fn combine(&self, alpha: f64, other: &Field, beta: f64) -> Result<Field, FieldError> {
        self.check_compatible(other)?;
        Ok(Field {
            space_id: self.space_id,
            role: self.role,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
        })
    }

    fn check_compatible(&self, other: &Field) -> Result<(), FieldError> {
        if self.space_id != other.space_id || self.role != other.role {
            return Err(FieldError::Mismatch);
        }
        Ok(())
    }
}

/// Taylor-Hood space over an owned mesh. Immutable after construction.
#[derive(Debug, Clone)]
pub struct TaylorHoodSpace {
    id: u64,
    mesh: Mesh,
    edges: Vec<[usize; 2]>,
    tri_edges: Vec<[usize; 3]>,
    geometry: Vec<ElementGeometry>,
    node_tag: Vec<Option<BoundaryTag>>,
    boundary_nodes: Vec<usize>,
}

impl TaylorHoodSpace {
    /// Builds edge table, DOF maps and boundary classification.
    ///
    /// A node touched by boundary edges of several tags takes the smallest
    /// tag, so lid corners ([`BoundaryTag::LID`] = 1) belong to the lid.
    pub fn new(mesh: Mesh) -> Self {
        let nv = mesh.n_vertices();
        let mut edge_index: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut edges = Vec::new();
        let mut tri_edges = Vec::with_capacity(mesh.n_triangles());
        for tri in mesh.triangles() {
            let mut te = [0usize; 3];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                te[k] = *edge_index.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edges.len() - 1
                });
            }
            tri_edges.push(te);
        }
        let geometry = (0..mesh.n_triangles())
            .map(|t| ElementGeometry::new(mesh.triangle_points(t)))
            .collect();

        let mut node_tag: Vec<Option<BoundaryTag>> = alloc::vec![None; nv + edges.len()];
        let mut assign = |node: usize, tag: BoundaryTag| {
            let slot = &mut node_tag[node];
            *slot = Some(match *slot {
                Some(old) if old < tag => old,
                _ => tag,
            });
        };
        for e in mesh.boundary_edges() {
            let [a, b] = e.vertices;
            let mid = nv + edge_index[&(a.min(b), a.max(b))];
            assign(a, e.tag);
            assign(b, e.tag);
            assign(mid, e.tag);
        }
        let boundary_nodes = (0..node_tag.len()).filter(|&n| node_tag[n].is_some()).collect();
        TaylorHoodSpace {
            id: NEXT_SPACE_ID.fetch_add(1, Ordering::Relaxed),
            mesh,
            edges,
            tri_edges,
            geometry,
            node_tag,
            boundary_nodes,
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn n_vertices(&self) -> usize {
        self.mesh.n_vertices()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Unique edges as sorted vertex pairs; edge `e` owns scalar node `V + e`.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Number of scalar P2 nodes (`V + E`).
    pub fn n_nodes(&self) -> usize {
        self.mesh.n_vertices() + self.edges.len()
    }

    /// Velocity DOF count `2·(V + E)`.
    pub fn n_u(&self) -> usize {
        2 * self.n_nodes()
    }

    /// Pressure DOF count `V`.
    pub fn n_p(&self) -> usize {
        self.mesh.n_vertices()
    }

    pub fn geometry(&self, t: usize) -> &ElementGeometry {
        &self.geometry[t]
    }

    /// Scalar P2 nodes of triangle `t` in local order.
    #[inline]
    pub fn tri_nodes(&self, t: usize) -> [usize; 6] {
        let [a, b, c] = self.mesh.triangles()[t];
        let nv = self.mesh.n_vertices();
        let e = self.tri_edges[t];
        [a, b, c, nv + e[0], nv + e[1], nv + e[2]]
    }

    /// Velocity DOFs of triangle `t`: local node `i`, component `c` at `2·i + c`.
    #[inline]
    pub fn velocity_dofs(&self, t: usize) -> [usize; 12] {
        let n = self.tri_nodes(t);
        let mut out = [0; 12];
        for i in 0..6 {
            out[2 * i] = 2 * n[i];
            out[2 * i + 1] = 2 * n[i] + 1;
        }
        out
    }

    #[inline]
    pub fn pressure_dofs(&self, t: usize) -> [usize; 3] {
        self.mesh.triangles()[t]
    }

    /// Coordinates of scalar P2 node `n`.
    pub fn node_coords(&self, n: usize) -> [f64; 2] {
        let nv = self.mesh.n_vertices();
        if n < nv {
            self.mesh.vertices()[n]
        } else {
            let [a, b] = self.edges[n - nv];
            let (pa, pb) = (self.mesh.vertices()[a], self.mesh.vertices()[b]);
            [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]
        }
    }

    pub fn node_tag(&self, n: usize) -> Option<BoundaryTag> {
        self.node_tag[n]
    }

    /// Scalar nodes on the boundary, ascending.
    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    /// Velocity DOFs on boundary nodes carrying `tag` (both components).
    pub fn boundary_velocity_dofs(&self, tag: BoundaryTag) -> Vec<usize> {
        self.boundary_nodes
            .iter()
            .filter(|&&n| self.node_tag[n] == Some(tag))
            .flat_map(|&n| [2 * n, 2 * n + 1])
            .collect()
    }

    /// Physical point for barycentric coordinates `l` in triangle `t`.
    pub fn map_point(&self, t: usize, l: &[f64; 3]) -> [f64; 2] {
        let p = self.mesh.triangle_points(t);
        [
            l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
            l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
        ]
    }

    pub fn zero_field(&self, role: FieldRole) -> Field {
        let len = self.role_len(role);
        Field {
            space_id: self.id,
            role,
            values: alloc::vec![0.0; len],
        }
    }

    pub fn role_len(&self, role: FieldRole) -> usize {
        match role {
            FieldRole::Velocity => self.n_u(),
            FieldRole::Pressure | FieldRole::ScalarP1 => self.n_p(),
            FieldRole::ScalarP2 => self.n_nodes(),
        }
    }

    /// Wraps a coefficient vector, checking its length.
    pub fn field(&self, role: FieldRole, values: Vec<f64>) -> Result<Field, FieldError> {
        let expected = self.role_len(role);
        if values.len() != expected {
            return Err(FieldError::Length {
                got: values.len(),
                expected,
            });
        }
        Ok(Field {
            space_id: self.id,
            role,
            values,
        })
    }

    /// Nodal interpolant of a vector function.
    pub fn interpolate_velocity(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Field {
        let mut values = alloc::vec![0.0; self.n_u()];
        for n in 0..self.n_nodes() {
            let v = f(self.node_coords(n));
            values[2 * n] = v[0];
            values[2 * n + 1] = v[1];
        }
        Field {
            space_id: self.id,
            role: FieldRole::Velocity,
            values,
        }
    }

    /// Nodal interpolant of a scalar function for a scalar role.
    pub fn interpolate_scalar(&self, role: FieldRole, f: impl Fn([f64; 2]) -> f64) -> Field {
        let n = match role {
            FieldRole::Velocity => panic!("interpolate_scalar called with the velocity role"),
            FieldRole::ScalarP2 => self.n_nodes(),
            FieldRole::Pressure | FieldRole::ScalarP1 => self.n_p(),
        };
        Field {
            space_id: self.id,
            role,
            values: (0..n).map(|i| f(self.node_coords(i))).collect(),
        }
    }

    fn check_field(&self, field: &Field) -> Result<(), FieldError> {
        if field.space_id != self.id {
            return Err(FieldError::Mismatch);
        }
        Ok(())
    }

    /// Locates `point`, returning the triangle and barycentric coordinates.
    ///
    /// Brute-force scan; points within `1e-10` (relative to the triangle
    /// size) of a triangle are accepted and clamped onto it.
    pub fn locate(&self, point: [f64; 2]) -> Option<(usize, [f64; 3])> {
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for t in 0..self.mesh.n_triangles() {
            let p = self.mesh.triangle_points(t);
            let g = &self.geometry[t].grad_bary;
            let mut l = [0.0; 3];
            for i in 0..3 {
                let j = (i + 1) % 3;
                // λ_i vanishes on the opposite edge, which contains vertex j
                l[i] = g[i][0] * (point[0] - p[j][0]) + g[i][1] * (point[1] - p[j][1]);
            }
            let worst = l.iter().cloned().fold(f64::INFINITY, f64::min);
            if worst >= 0.0 {
                return Some((t, l));
            }
            if best.as_ref().map_or(true, |b| worst > b.2) {
                best = Some((t, l, worst));
            }
        }
        let (t, mut l, worst) = best?;
        if worst < -1e-10 {
            return None;
        }
        let s: f64 = l.iter().map(|v| v.max(0.0)).sum();
        for v in l.iter_mut() {
            *v = v.max(0.0) / s;
        }
        Some((t, l))
    }

    /// Evaluates the finite-element function at barycentric point `l` of triangle `t`.
    pub fn eval_in_element(&self, field: &Field, t: usize, l: &[f64; 3]) -> FieldValue {
        match field.role {
            FieldRole::Velocity => {
                let n = self.tri_nodes(t);
                let phi = p2_values(l);
                let mut v = [0.0; 2];
                for i in 0..6 {
                    v[0] += phi[i] * field.values[2 * n[i]];
                    v[1] += phi[i] * field.values[2 * n[i] + 1];
                }
                FieldValue::Vector(v)
            }
            FieldRole::ScalarP2 => {
                let n = self.tri_nodes(t);
                let phi = p2_values(l);
                FieldValue::Scalar((0..6).map(|i| phi[i] * field.values[n[i]]).sum())
            }
            FieldRole::Pressure | FieldRole::ScalarP1 => {
                let n = self.pressure_dofs(t);
                FieldValue::Scalar((0..3).map(|i| l[i] * field.values[n[i]]).sum())
            }
        }
    }

    /// Gradient of a velocity field at barycentric point `l` of triangle `t`:
    /// `out[c][d] = ∂u_c/∂x_d`.
    pub fn velocity_gradient_in_element(&self, field: &Field, t: usize, l: &[f64; 3]) -> [[f64; 2]; 2] {
        velocity_gradient(self, &field.values, t, l)
    }

    /// Value of the finite-element function at `point`.
    pub fn eval(&self, field: &Field, point: [f64; 2]) -> Result<FieldValue, FieldError> {
        self.check_field(field)?;
        let (t, l) = self.locate(point).ok_or(FieldError::OutsideDomain {
            x: point[0],
            y: point[1],
        })?;
        Ok(self.eval_in_element(field, t, &l))
    }

    /// `‖field‖` in L2(Ω), with the degree-5 rule (exact for squared P2).
    pub fn l2_norm(&self, field: &Field) -> f64 {
        let rule = QuadratureRule::degree5();
        let mut total = 0.0;
        for t in 0..self.mesh.n_triangles() {
            let scale = 2.0 * self.geometry[t].area;
            for (l, w) in rule.points().iter().zip(rule.weights()) {
                let sq = match self.eval_in_element(field, t, l) {
                    FieldValue::Scalar(v) => v * v,
                    FieldValue::Vector(v) => v[0] * v[0] + v[1] * v[1],
                };
                total += w * scale * sq;
            }
        }
        libm::sqrt(total)
    }

    /// `‖a − b‖` in L2(Ω).
    pub fn l2_diff(&self, a: &Field, b: &Field) -> Result<f64, FieldError> {
        self.check_field(a)?;
        Ok(self.l2_norm(&a.sub(b)?))
    }
}

/// `∂u_c/∂x_d` of a velocity coefficient vector inside triangle `t`.
#[inline]
pub(crate) fn velocity_gradient(space: &TaylorHoodSpace, u: &[f64], t: usize, l: &[f64; 3]) -> [[f64; 2]; 2] {
    let n = space.tri_nodes(t);
    let dphi = p2_gradients(l, &space.geometry[t].grad_bary);
    let mut g = [[0.0; 2]; 2];
    for i in 0..6 {
        for c in 0..2 {
            let coef = u[2 * n[i] + c];
            g[c][0] += coef * dphi[i][0];
            g[c][1] += coef * dphi[i][1];
        }
    }
    g
}

/// Free-function form of [`TaylorHoodSpace::new`].
pub fn build_space(mesh: Mesh) -> TaylorHoodSpace {
    TaylorHoodSpace::new(mesh)
}

/// Free-function form of [`TaylorHoodSpace::eval`].
pub fn eval_field(space: &TaylorHoodSpace, field: &Field, point: [f64; 2]) -> Result<FieldValue, FieldError> {
    space.eval(field, point)
}

pub fn l2_norm(space: &TaylorHoodSpace, field: &Field) -> f64 {
    space.l2_norm(field)
}

pub fn l2_diff(space: &TaylorHoodSpace, a: &Field, b: &Field) -> Result<f64, FieldError> {
    space.l2_diff(a, b)
}
