//! gmsh MSH 2.2 ASCII reader and writer.
//!
//! Only `$MeshFormat`, `$Nodes` and `$Elements` are interpreted; other
//! sections (`$PhysicalNames`, `$NodeData`, ...) are skipped. Element type 1
//! (2-node line) supplies boundary tags, type 2 (3-node triangle) the cells.

use std::collections::HashMap;
use std::fmt::Write as _;

use cavityflow_core::mesh::classify_by_lid_line;
use cavityflow_core::{BoundaryTag, Mesh, MeshError};
use thiserror::Error;

/// Tolerance on |x3| for a node to count as planar.
pub const PLANAR_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MshError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid mesh: {0}")]
    Mesh(#[from] MeshError),
}

fn err(line: usize, message: impl Into<String>) -> MshError {
    MshError::Parse {
        line,
        message: message.into(),
    }
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            inner: text.lines().enumerate(),
            last: 0,
        }
    }

    /// Next non-blank line, trimmed, with its 1-based number.
    fn next(&mut self) -> Option<(usize, &'a str)> {
        for (i, l) in self.inner.by_ref() {
            self.last = i + 1;
            let l = l.trim();
            if !l.is_empty() {
                return Some((i + 1, l));
            }
        }
        None
    }

    fn expect(&mut self, what: &str) -> Result<(usize, &'a str), MshError> {
        self.next()
            .ok_or_else(|| err(self.last + 1, format!("unexpected end of file, expected {what}")))
    }

    fn expect_exact(&mut self, token: &str) -> Result<(), MshError> {
        let (n, l) = self.expect(token)?;
        if l != token {
            return Err(err(n, format!("expected `{token}`, found `{l}`")));
        }
        Ok(())
    }
}

fn parse<T: std::str::FromStr>(line: usize, tok: Option<&str>, what: &str) -> Result<T, MshError> {
    let tok = tok.ok_or_else(|| err(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| err(line, format!("invalid {what} `{tok}`")))
}

/// Parses an MSH 2.2 ASCII document.
///
/// Node ids are remapped to dense 0-based indices in file order. Boundary
/// edges without a line element are tagged by geometry: lid (1) when both
/// endpoints lie within 1e-9 of the top of the bounding box, wall (2)
/// otherwise. Lines with an explicit physical tag always keep it.
pub fn read_msh(text: &str) -> Result<Mesh, MshError> {
    let mut lines = Lines::new(text);
    let mut format_seen = false;
    let mut ids: HashMap<u64, usize> = HashMap::new();
    let mut vertices: Vec<[f64; 2]> = Vec::new();
    let mut nodes_seen = false;
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    let mut tagged: Vec<([usize; 2], BoundaryTag)> = Vec::new();
    let mut elements_seen = false;

    while let Some((n, l)) = lines.next() {
        match l {
            "$MeshFormat" => {
                let (n, l) = lines.expect("format line")?;
                let mut it = l.split_whitespace();
                let version: &str = it.next().unwrap_or("");
                if version != "2.2" {
                    return Err(err(n, format!("unsupported MSH version `{version}` (only 2.2 is read)")));
                }
                let file_type: u32 = parse(n, it.next(), "file type")?;
                if file_type != 0 {
                    return Err(err(n, "binary MSH files are not supported"));
                }
                let _data_size: u32 = parse(n, it.next(), "data size")?;
                lines.expect_exact("$EndMeshFormat")?;
                format_seen = true;
            }
            "$Nodes" => {
                if !format_seen {
                    return Err(err(n, "$Nodes before $MeshFormat"));
                }
                let (n, l) = lines.expect("node count")?;
                let count: usize = parse(n, Some(l), "node count")?;
                vertices.reserve(count);
                for _ in 0..count {
                    let (n, l) = lines.expect("node line")?;
                    let mut it = l.split_whitespace();
                    let id: u64 = parse(n, it.next(), "node id")?;
                    let x: f64 = parse(n, it.next(), "x coordinate")?;
                    let y: f64 = parse(n, it.next(), "y coordinate")?;
                    let z: f64 = parse(n, it.next(), "z coordinate")?;
                    if !x.is_finite() || !y.is_finite() {
                        return Err(err(n, format!("node {id} has non-finite coordinates")));
                    }
                    if !(z.abs() <= PLANAR_TOL) {
                        return Err(err(n, format!("node {id} is not planar (z = {z})")));
                    }
                    if ids.insert(id, vertices.len()).is_some() {
                        return Err(err(n, format!("duplicate node id {id}")));
                    }
                    vertices.push([x, y]);
                }
                lines.expect_exact("$EndNodes")?;
                nodes_seen = true;
            }
            "$Elements" => {
                if !nodes_seen {
                    return Err(err(n, "$Elements before $Nodes"));
                }
                let (n, l) = lines.expect("element count")?;
                let count: usize = parse(n, Some(l), "element count")?;
                for _ in 0..count {
                    let (n, l) = lines.expect("element line")?;
                    let mut it = l.split_whitespace();
                    let _id: u64 = parse(n, it.next(), "element id")?;
                    let kind: u32 = parse(n, it.next(), "element type")?;
                    let ntags: usize = parse(n, it.next(), "tag count")?;
                    let mut tags = Vec::with_capacity(ntags.min(16));
                    for _ in 0..ntags {
                        let t: i64 = parse(n, it.next(), "element tag")?;
                        tags.push(t);
                    }
                    let node = |it: &mut std::str::SplitWhitespace<'_>| -> Result<usize, MshError> {
                        let id: u64 = parse(n, it.next(), "element node")?;
                        ids.get(&id)
                            .copied()
                            .ok_or_else(|| err(n, format!("element references unknown node {id}")))
                    };
                    match kind {
                        1 => {
                            let a = node(&mut it)?;
                            let b = node(&mut it)?;
                            match tags.first() {
                                Some(&t) if t > 0 && t <= u32::MAX as i64 => {
                                    tagged.push(([a, b], BoundaryTag(t as u32)))
                                }
                                Some(&t) if t != 0 => {
                                    return Err(err(n, format!("invalid physical tag {t}")))
                                }
                                _ => {}
                            }
                        }
                        2 => {
                            let a = node(&mut it)?;
                            let b = node(&mut it)?;
                            let c = node(&mut it)?;
                            triangles.push([a, b, c]);
                        }
                        // points, quads, higher-order cells: not consumed
                        _ => {}
                    }
                }
                lines.expect_exact("$EndElements")?;
                elements_seen = true;
            }
            s if s.starts_with("$End") => {
                return Err(err(n, format!("unmatched `{s}`")));
            }
            s if s.starts_with('$') => {
                let end = format!("$End{}", &s[1..]);
                loop {
                    let (_, l) = lines.expect(&end)?;
                    if l == end {
                        break;
                    }
                }
            }
            s => return Err(err(n, format!("unexpected content `{s}` outside a section"))),
        }
    }
    if !format_seen {
        return Err(err(1, "missing $MeshFormat header"));
    }
    if !elements_seen {
        return Err(err(lines.last, "missing $Elements section"));
    }
    let top = vertices
        .iter()
        .map(|v| v[1])
        .fold(f64::NEG_INFINITY, f64::max);
    let fallback = classify_by_lid_line(top);
    // geometric fallback only when the file carries no physical boundary tags
    let mesh = if tagged.is_empty() {
        Mesh::from_triangles(vertices, triangles, &[], fallback)?
    } else {
        Mesh::from_triangles(vertices, triangles, &tagged, |_, _| BoundaryTag::WALL)?
    };
    Ok(mesh)
}

/// Writes a mesh as MSH 2.2 ASCII: 1-based node ids, boundary edges as line
/// elements (physical and elementary tag = boundary tag), then triangles with
/// physical tag 0 and elementary tag 1. Coordinates carry 17 significant digits.
pub fn write_msh(mesh: &Mesh) -> String {
    let mut s = String::new();
    s.push_str("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n");
    let _ = writeln!(s, "$Nodes\n{}", mesh.n_vertices());
    for (i, v) in mesh.vertices().iter().enumerate() {
        let _ = writeln!(s, "{} {:.16e} {:.16e} 0", i + 1, v[0], v[1]);
    }
    s.push_str("$EndNodes\n");
    let edges = mesh.boundary_edges();
    let _ = writeln!(s, "$Elements\n{}", edges.len() + mesh.n_triangles());
    let mut id = 0usize;
    for e in edges {
        id += 1;
        let _ = writeln!(
            s,
            "{id} 1 2 {t} {t} {} {}",
            e.vertices[0] + 1,
            e.vertices[1] + 1,
            t = e.tag.0
        );
    }
    for t in mesh.triangles() {
        id += 1;
        let _ = writeln!(s, "{id} 2 2 0 1 {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    s.push_str("$EndElements\n");
    s
}
