//! Conforming triangular meshes with tagged boundary edges, plus the two
//! structured benchmark generators (unit square cavity, 2:1 semi-ellipse).

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use crate::error::MeshError;

/// Boundary classification carried by every boundary edge.
///
/// Benchmark geometries only use [`BoundaryTag::LID`] and [`BoundaryTag::WALL`];
/// ingested meshes may carry any positive physical tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BoundaryTag(pub u32);

impl BoundaryTag {
    /// Moving lid.
    pub const LID: BoundaryTag = BoundaryTag(1);
    /// Stationary wall.
    pub const WALL: BoundaryTag = BoundaryTag(2);
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    /// Endpoints, ordered along the counterclockwise traversal of the adjacent triangle.
    pub vertices: [usize; 2],
    pub tag: BoundaryTag,
}

/// A conforming, counterclockwise-oriented triangulation of a 2D domain.
///
/// Immutable once constructed; every constructor checks the mesh invariants
/// (positive areas, edge-manifoldness, boundary edges == edges with one
/// incident triangle, each tagged exactly once).
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
}

#[inline]
pub(crate) fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

#[inline]
fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Edge census: every undirected edge with its incident-triangle count and the
/// directed version seen in the first incident triangle.
fn census(triangles: &[[usize; 3]]) -> BTreeMap<(usize, usize), (usize, [usize; 2])> {
    let mut edges = BTreeMap::new();
    for tri in triangles {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            edges
                .entry(edge_key(a, b))
                .and_modify(|e: &mut (usize, [usize; 2])| e.0 += 1)
                .or_insert((1, [a, b]));
        }
    }
    edges
}

impl Mesh {
    /// Builds a mesh from explicit parts and validates every invariant.
    pub fn from_parts(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
    ) -> Result<Self, MeshError> {
        let mesh = Mesh {
            vertices,
            triangles,
            boundary_edges,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Builds a mesh from vertices and triangles, deriving the boundary.
    ///
    /// Triangles are reoriented counterclockwise. Boundary edges listed in
    /// `tagged` receive that tag; any other boundary edge is classified by
    /// `fallback` applied to its endpoints. Entries of `tagged` that are not
    /// boundary edges of the triangulation are ignored.
    pub fn from_triangles<F>(
        vertices: Vec<[f64; 2]>,
        mut triangles: Vec<[usize; 3]>,
        tagged: &[([usize; 2], BoundaryTag)],
        fallback: F,
    ) -> Result<Self, MeshError>
    where
        F: Fn([f64; 2], [f64; 2]) -> BoundaryTag,
    {
        let n = vertices.len();
        for (t, tri) in triangles.iter_mut().enumerate() {
            if let Some(&v) = tri.iter().find(|&&v| v >= n) {
                return Err(MeshError::VertexOutOfRange {
                    vertex: v,
                    count: n,
                });
            }
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if area < 0.0 {
                tri.swap(1, 2);
            } else if area == 0.0 || !area.is_finite() {
                return Err(MeshError::DegenerateTriangle { triangle: t });
            }
        }
        let mut tag_of: BTreeMap<(usize, usize), BoundaryTag> = BTreeMap::new();
        for &([a, b], tag) in tagged {
            // first tag wins for duplicated line elements
            tag_of.entry(edge_key(a, b)).or_insert(tag);
        }
        let mut boundary_edges = Vec::new();
        for (key, (count, dir)) in census(&triangles) {
            if count > 2 {
                return Err(MeshError::NonManifoldEdge {
                    edge: [key.0, key.1],
                    incident: count,
                });
            }
            if count == 1 {
                let tag = match tag_of.get(&key) {
                    Some(&t) => t,
                    None => fallback(vertices[dir[0]], vertices[dir[1]]),
                };
                boundary_edges.push(BoundaryEdge { vertices: dir, tag });
            }
        }
        Mesh::from_parts(vertices, triangles, boundary_edges)
    }

    fn validate(&self) -> Result<(), MeshError> {
        let n = self.vertices.len();
        if self.triangles.is_empty() {
            return Err(MeshError::Empty);
        }
        if let Some(i) = self
            .vertices
            .iter()
            .position(|v| !v[0].is_finite() || !v[1].is_finite())
        {
            return Err(MeshError::NonFiniteVertex { vertex: i });
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            if let Some(&v) = tri.iter().find(|&&v| v >= n) {
                return Err(MeshError::VertexOutOfRange {
                    vertex: v,
                    count: n,
                });
            }
            if !(self.triangle_area(t) > 0.0) {
                return Err(MeshError::DegenerateTriangle { triangle: t });
            }
        }
        let edges = census(&self.triangles);
        if let Some((key, (count, _))) = edges.iter().find(|(_, (c, _))| *c > 2) {
            return Err(MeshError::NonManifoldEdge {
                edge: [key.0, key.1],
                incident: *count,
            });
        }
        let mut seen = BTreeMap::new();
        for e in &self.boundary_edges {
            let [a, b] = e.vertices;
            if a >= n || b >= n {
                return Err(MeshError::VertexOutOfRange {
                    vertex: a.max(b),
                    count: n,
                });
            }
            let key = edge_key(a, b);
            match edges.get(&key) {
                Some((1, _)) => {}
                _ => return Err(MeshError::NotABoundaryEdge { edge: e.vertices }),
            }
            if seen.insert(key, e.tag).is_some() {
                return Err(MeshError::DuplicateBoundaryEdge { edge: e.vertices });
            }
        }
        if let Some((key, _)) = edges
            .iter()
            .find(|(k, (c, _))| *c == 1 && !seen.contains_key(k))
        {
            return Err(MeshError::UntaggedBoundaryEdge {
                edge: [key.0, key.1],
            });
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Corner coordinates of triangle `t`.
    pub fn triangle_points(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        signed_area(a, b, c)
    }

    /// Sum of signed triangle areas (compensated summation).
    pub fn area(&self) -> f64 {
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for t in 0..self.triangles.len() {
            let a = self.triangle_area(t);
            let s = sum + a;
            comp += if sum.abs() >= a.abs() { (sum - s) + a } else { (a - s) + sum };
            sum = s;
        }
        sum + comp
    }

    /// `(min, max)` corners of the axis-aligned bounding box.
    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &self.vertices {
            for d in 0..2 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        (lo, hi)
    }

    /// Distinct tags present on the boundary, ascending.
    pub fn boundary_tags(&self) -> Vec<BoundaryTag> {
        let mut tags: Vec<_> = self.boundary_edges.iter().map(|e| e.tag).collect();
        tags.sort_unstable();
        tags.dedup();
        tags
    }

    /// Largest number of triangles sharing a single edge.
    pub fn max_edge_incidence(&self) -> usize {
        census(&self.triangles)
            .values()
            .map(|(c, _)| *c)
            .max()
            .unwrap_or(0)
    }
}

/// Geometric fallback classification: edges on the line `x2 = lid_height`
/// (within `1e-9`) belong to the lid, everything else is wall.
pub fn classify_by_lid_line(lid_height: f64) -> impl Fn([f64; 2], [f64; 2]) -> BoundaryTag {
    move |a, b| {
        if (a[1] - lid_height).abs() < 1e-9 && (b[1] - lid_height).abs() < 1e-9 {
            BoundaryTag::LID
        } else {
            BoundaryTag::WALL
        }
    }
}

/// Uniform triangulation of `[0,1]²` with `m` intervals per direction.
///
/// Every lattice cell is cut along its lower-left to upper-right diagonal.
/// Edges on `x2 = 1` are tagged [`BoundaryTag::LID`], the rest [`BoundaryTag::WALL`].
pub fn unit_square_mesh(m: usize) -> Result<Mesh, MeshError> {
    if m == 0 {
        return Err(MeshError::InvalidResolution { m, min: 1 });
    }
    let h = 1.0 / m as f64;
    let idx = |i: usize, j: usize| j * (m + 1) + i;
    let mut vertices = Vec::with_capacity((m + 1) * (m + 1));
    for j in 0..=m {
        for i in 0..=m {
            vertices.push([i as f64 * h, j as f64 * h]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * m * m);
    for j in 0..m {
        for i in 0..m {
            let (v00, v10, v01, v11) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    let mut boundary_edges = Vec::with_capacity(4 * m);
    let wall = BoundaryTag::WALL;
    for i in 0..m {
        boundary_edges.push(BoundaryEdge {
            vertices: [idx(i, 0), idx(i + 1, 0)],
            tag: wall,
        });
    }
    for j in 0..m {
        boundary_edges.push(BoundaryEdge {
            vertices: [idx(m, j), idx(m, j + 1)],
            tag: wall,
        });
    }
    for i in (0..m).rev() {
        boundary_edges.push(BoundaryEdge {
            vertices: [idx(i + 1, m), idx(i, m)],
            tag: BoundaryTag::LID,
        });
    }
    for j in (0..m).rev() {
        boundary_edges.push(BoundaryEdge {
            vertices: [idx(0, j + 1), idx(0, j)],
            tag: wall,
        });
    }
    Mesh::from_parts(vertices, triangles, boundary_edges)
}

/// Half-ellipse cavity `{x1² + 4·x2² ≤ 1, x2 ≤ 0}` with the lid on `x2 = 0`.
///
/// A structured `2m × m` grid on `(s, t) ∈ [-1,1] × [0,1]` is mapped through
/// `x1 = s`, `x2 = -t·sqrt(1 - s²)/2`. The `s` lines are spaced uniformly in
/// the ellipse angle (`s = sin θ`), so the polygonal boundary converges to
/// the ellipse at second order. The collapsed nodes at `s = ±1` are merged and
/// the resulting zero-area triangles dropped.
pub fn semi_ellipse_mesh(m: usize) -> Result<Mesh, MeshError> {
    if m < 2 {
        return Err(MeshError::InvalidResolution { m, min: 2 });
    }
    let ns = 2 * m;
    let s_of = |i: usize| {
        let theta = core::f64::consts::FRAC_PI_2 * (i as f64 - m as f64) / m as f64;
        libm::sin(theta)
    };
    let mut raw = Vec::with_capacity((ns + 1) * (m + 1));
    for j in 0..=m {
        let t = j as f64 / m as f64;
        for i in 0..=ns {
            let s = s_of(i);
            let x2 = -0.5 * t * libm::sqrt((1.0 - s * s).max(0.0)) + 0.0;
            raw.push([s, x2]);
        }
    }
    let (vertices, remap) = merge_close_vertices(&raw, 1e-12);
    let raw_idx = |i: usize, j: usize| remap[j * (ns + 1) + i];

    let (lo, hi) = bbox(&vertices);
    let min_area = 1e-14 * (hi[0] - lo[0]) * (hi[1] - lo[1]);
    let mut triangles = Vec::with_capacity(2 * ns * m);
    for j in 0..m {
        for i in 0..ns {
            let (v00, v10, v01, v11) = (
                raw_idx(i, j),
                raw_idx(i + 1, j),
                raw_idx(i, j + 1),
                raw_idx(i + 1, j + 1),
            );
            for tri in [[v00, v10, v11], [v00, v11, v01]] {
                let mut tri = tri;
                let a = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
                if a.abs() < min_area {
                    continue;
                }
                if a < 0.0 {
                    tri.swap(1, 2);
                }
                triangles.push(tri);
            }
        }
    }
    Mesh::from_triangles(vertices, triangles, &[], |a, b| {
        if a[1] == 0.0 && b[1] == 0.0 {
            BoundaryTag::LID
        } else {
            BoundaryTag::WALL
        }
    })
}

fn bbox(points: &[[f64; 2]]) -> ([f64; 2], [f64; 2]) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    (lo, hi)
}

/// Merges points closer than `tol`. Each class is represented by its lowest
/// input index; returns the compacted points and the old-to-new index map.
fn merge_close_vertices(points: &[[f64; 2]], tol: f64) -> (Vec<[f64; 2]>, Vec<usize>) {
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let n = points.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        points[a][0]
            .total_cmp(&points[b][0])
            .then(points[a][1].total_cmp(&points[b][1]))
            .then(a.cmp(&b))
    });
    let mut parent: Vec<usize> = (0..n).collect();
    for (k, &a) in order.iter().enumerate() {
        for &b in &order[k + 1..] {
            if points[b][0] - points[a][0] >= tol {
                break;
            }
            if libm::hypot(points[b][0] - points[a][0], points[b][1] - points[a][1]) < tol {
                let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut new_index = alloc::vec![usize::MAX; n];
    let mut out = Vec::new();
    for i in 0..n {
        if root(&mut parent, i) == i {
            new_index[i] = out.len();
            out.push(points[i]);
        }
    }
    let remap = (0..n).map(|i| new_index[root(&mut parent, i)]).collect();
    (out, remap)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_square() {
        let mesh = unit_square_mesh(1).unwrap();
        assert_eq!(mesh.n_vertices(), 4);
        assert_eq!(mesh.n_triangles(), 2);
        assert_eq!(mesh.boundary_edges().len(), 4);
        let lids = mesh
            .boundary_edges()
            .iter()
            .filter(|e| e.tag == BoundaryTag::LID)
            .count();
        assert_eq!(lids, 1);
    }

    #[test]
    fn square_counts() {
        let mesh = unit_square_mesh(64).unwrap();
        assert_eq!(mesh.n_vertices(), 65 * 65);
        assert_eq!(mesh.n_triangles(), 8192);
        assert_eq!(mesh.area(), 1.0);
        assert_eq!(unit_square_mesh(2).unwrap().area(), 1.0);
        assert!(unit_square_mesh(0).is_err());
    }

    #[test]
    fn square_lid_edges_on_top() {
        let mesh = unit_square_mesh(5).unwrap();
        for e in mesh.boundary_edges() {
            let [a, b] = e.vertices;
            let on_top = mesh.vertices()[a][1] == 1.0 && mesh.vertices()[b][1] == 1.0;
            assert_eq!(on_top, e.tag == BoundaryTag::LID);
        }
    }

    #[test]
    fn square_area_exact_for_many_m() {
        for m in [1, 3, 7, 16, 33] {
            let mesh = unit_square_mesh(m).unwrap();
            assert!((mesh.area() - 1.0).abs() < 1e-14, "m={m}: {}", mesh.area() - 1.0);
        }
    }

    #[test]
    fn semi_ellipse_small_is_valid() {
        let mesh = semi_ellipse_mesh(2).unwrap();
        for t in 0..mesh.n_triangles() {
            assert!(mesh.triangle_area(t) > 0.0);
        }
        assert!(semi_ellipse_mesh(1).is_err());
        // two collapsed columns: (2m+1)(m+1) - 2m
        assert_eq!(mesh.n_vertices(), 5 * 3 - 4);
        assert_eq!(mesh.n_triangles(), 2 * 4 * 2 - 2 * 2);
    }

    #[test]
    fn semi_ellipse_wall_vertices_on_ellipse() {
        let mesh = semi_ellipse_mesh(32).unwrap();
        for e in mesh.boundary_edges() {
            for &v in &e.vertices {
                let [x, y] = mesh.vertices()[v];
                match e.tag {
                    BoundaryTag::WALL => {
                        assert!((x * x + 4.0 * y * y - 1.0).abs() < 1e-12 || y == 0.0)
                    }
                    BoundaryTag::LID => assert_eq!(y, 0.0),
                    _ => panic!("unexpected tag"),
                }
            }
        }
    }

    #[test]
    fn semi_ellipse_area_second_order() {
        let exact = core::f64::consts::PI / 4.0;
        let errs: Vec<f64> = [8, 16, 32, 64]
            .iter()
            .map(|&m| (semi_ellipse_mesh(m).unwrap().area() - exact).abs())
            .collect();
        assert!(errs[3] / exact < 0.01);
        for w in errs.windows(2) {
            let rate = libm::log2(w[0] / w[1]);
            assert!(rate > 1.9, "area rate {rate}");
        }
    }

    #[test]
    fn edge_manifold() {
        assert_eq!(unit_square_mesh(6).unwrap().max_edge_incidence(), 2);
        assert_eq!(semi_ellipse_mesh(6).unwrap().max_edge_incidence(), 2);
    }

    #[test]
    fn from_parts_rejects_bad_input() {
        let v = alloc::vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let cw = Mesh::from_parts(v.clone(), alloc::vec![[0, 2, 1]], Vec::new());
        assert!(matches!(cw, Err(MeshError::DegenerateTriangle { .. })));
        let untagged = Mesh::from_parts(v.clone(), alloc::vec![[0, 1, 2]], Vec::new());
        assert!(matches!(untagged, Err(MeshError::UntaggedBoundaryEdge { .. })));
        let oob = Mesh::from_triangles(v, alloc::vec![[0, 1, 5]], &[], classify_by_lid_line(1.0));
        assert!(matches!(oob, Err(MeshError::VertexOutOfRange { .. })));
    }

    #[test]
    fn from_triangles_reorients() {
        let v = alloc::vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let mesh = Mesh::from_triangles(v, alloc::vec![[0, 2, 1]], &[], classify_by_lid_line(1.0)).unwrap();
        assert!(mesh.triangle_area(0) > 0.0);
        assert_eq!(mesh.boundary_edges().len(), 3);
        assert!(mesh.boundary_edges().iter().all(|e| e.tag == BoundaryTag::WALL));
    }
}
