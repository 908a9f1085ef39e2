//! Legacy VTK and CSV writers.
//!
//! Floats are written with 17 significant digits so every value re-parses
//! to the identical `f64`.

use std::fmt::Write as _;

use cavityflow_core::continuation::ContinuationStep;
use cavityflow_core::postprocess::ProfileSample;
use cavityflow_core::{ConvergenceHistory, Field, FieldRole, Status, TaylorHoodSpace};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("field `{0}` does not belong to the exported space")]
    ForeignField(String),
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Legacy VTK ASCII unstructured grid of the mesh vertices and triangles.
///
/// Velocity fields become 3-component `VECTORS` (third component 0), every
/// other field a `SCALARS` entry. P2 fields are restricted to their vertex
/// values.
pub fn vtk(space: &TaylorHoodSpace, title: &str, fields: &[(&str, &Field)]) -> Result<String, ExportError> {
    let mesh = space.mesh();
    let nv = mesh.n_vertices();
    let nt = mesh.n_triangles();
    for (name, f) in fields {
        if f.space_id() != space.id() {
            return Err(ExportError::ForeignField((*name).to_string()));
        }
    }
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    // the title line must not contain a newline
    let title: String = title.chars().filter(|&c| c != '\n' && c != '\r').take(255).collect();
    let _ = writeln!(s, "{title}");
    s.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {nv} double");
    for v in mesh.vertices() {
        let _ = writeln!(s, "{} {} 0", fmt_f64(v[0]), fmt_f64(v[1]));
    }
    let _ = writeln!(s, "CELLS {nt} {}", 4 * nt);
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    for _ in 0..nt {
        s.push_str("5\n");
    }
    if fields.is_empty() {
        return Ok(s);
    }
    let _ = writeln!(s, "POINT_DATA {nv}");
    for (name, f) in fields {
        let name: String = name
            .chars()
            .map(|c| if c.is_whitespace() { '_' } else { c })
            .collect();
        let vals = f.values();
        match f.role() {
            FieldRole::Velocity => {
                let _ = writeln!(s, "VECTORS {name} double");
                for v in 0..nv {
                    let _ = writeln!(s, "{} {} 0", fmt_f64(vals[2 * v]), fmt_f64(vals[2 * v + 1]));
                }
            }
            FieldRole::Pressure | FieldRole::ScalarP1 | FieldRole::ScalarP2 => {
                let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
                for &x in &vals[..nv] {
                    let _ = writeln!(s, "{}", fmt_f64(x));
                }
            }
        }
    }
    Ok(s)
}

/// `iteration,epsilon` with 1-based iteration numbers.
pub fn history_csv(history: &ConvergenceHistory) -> String {
    let mut s = String::from("iteration,epsilon\n");
    for (k, e) in history.epsilons.iter().enumerate() {
        let _ = writeln!(s, "{},{}", k + 1, fmt_f64(*e));
    }
    s
}

/// One row per continuation trial, numbered from 1.
pub fn trace_csv(steps: &[ContinuationStep]) -> String {
    let mut s = String::from("step,Re,delta,status,iterations,eps_final\n");
    for (k, st) in steps.iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            k + 1,
            fmt_f64(st.reynolds),
            fmt_f64(st.delta),
            st.status.as_str(),
            st.iterations,
            fmt_f64(st.eps_final)
        );
    }
    s
}

pub fn profiles_csv(samples: &[ProfileSample]) -> String {
    let mut s = String::from("line,x1,x2,u1,u2\n");
    for p in samples {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            p.line.as_str(),
            fmt_f64(p.point[0]),
            fmt_f64(p.point[1]),
            fmt_f64(p.velocity[0]),
            fmt_f64(p.velocity[1])
        );
    }
    s
}

/// One σ-sweep result; `signature` is empty for runs that did not converge.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub sigma: f64,
    pub status: Status,
    pub iterations: usize,
    pub signature: String,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("sigma,status,iterations,signature\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            fmt_f64(r.sigma),
            r.status.as_str(),
            r.iterations,
            r.signature
        );
    }
    s
}
