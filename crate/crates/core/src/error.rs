use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("cell {cell} is not a simple polygon (edges {edge_a} and {edge_b} intersect)")]
    SelfIntersecting {
        cell: usize,
        edge_a: usize,
        edge_b: usize,
    },

    #[error("cell {cell}: ear clipping stalled with {remaining} vertices left")]
    Triangulation { cell: usize, remaining: usize },

    #[error("cell {cell}, face {face}: no face simplex of positive height fits inside the cell")]
    ZeroHeightSimplex { cell: usize, face: usize },

    #[error("polynomial degree {degree} on cell {cell}: the method requires p >= 2")]
    DegreeTooLow { cell: usize, degree: usize },

    #[error(
        "polynomial degree {degree} on cell {cell}: the arbitrary-face penalty is only \
         stable for p in {{2, 3}} (set allow_any_degree to override)"
    )]
    UnsupportedDegree { cell: usize, degree: usize },

    #[error("face {0} has no penalty value")]
    MissingPenalty(usize),

    #[error("mass matrix of cell {cell} is singular (quadrature too weak for degree {degree}?)")]
    SingularMass { cell: usize, degree: usize },

    #[error("matrix is not positive definite (pivot block {block})")]
    NotPositiveDefinite { block: usize },

    #[error("solver did not converge in {iterations} iterations (final relative residual {final_residual:.3e})")]
    NotConverged {
        iterations: usize,
        final_residual: f64,
        history: Vec<f64>,
    },

    #[error("eigenvalue iteration broke down after {restarts} restarts")]
    LanczosBreakdown { restarts: usize },

    #[error("agglomeration failed: {0}")]
    Agglomeration(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
