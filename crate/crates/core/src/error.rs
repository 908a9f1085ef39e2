use thiserror::Error;

use crate::mesh::BoundaryTag;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeshError {
    #[error("mesh resolution m={m} is below the minimum {min}")]
    InvalidResolution { m: usize, min: usize },
    #[error("mesh has no triangles")]
    Empty,
    #[error("vertex {vertex} has non-finite coordinates")]
    NonFiniteVertex { vertex: usize },
    #[error("vertex index {vertex} out of range (mesh has {count} vertices)")]
    VertexOutOfRange { vertex: usize, count: usize },
    #[error("triangle {triangle} has non-positive area")]
    DegenerateTriangle { triangle: usize },
    #[error("edge {edge:?} is shared by {incident} triangles")]
    NonManifoldEdge { edge: [usize; 2], incident: usize },
    #[error("edge {edge:?} is listed as boundary but is not on the boundary")]
    NotABoundaryEdge { edge: [usize; 2] },
    #[error("boundary edge {edge:?} is listed twice")]
    DuplicateBoundaryEdge { edge: [usize; 2] },
    #[error("boundary edge {edge:?} carries no tag")]
    UntaggedBoundaryEdge { edge: [usize; 2] },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("point ({x}, {y}) lies outside the mesh")]
    OutsideDomain { x: f64, y: f64 },
    #[error("fields live on different spaces or have different roles")]
    Mismatch,
    #[error("coefficient vector has length {got}, expected {expected}")]
    Length { got: usize, expected: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssemblyError {
    #[error("no boundary value supplied for tag {0}")]
    MissingBoundaryTag(BoundaryTag),
    #[error("system dimension {got} does not match the space layout ({expected})")]
    Layout { got: usize, expected: usize },
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinsolveError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("right-hand side has length {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("matrix is numerically singular (reciprocal condition estimate {rcond:e})")]
    Singular { rcond: f64 },
    #[error("factorization backend failed: {0}")]
    Backend(alloc::string::String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Linsolve(#[from] LinsolveError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("invalid solver configuration: {0}")]
    Config(&'static str),
}
