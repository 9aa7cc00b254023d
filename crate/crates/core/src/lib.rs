//! Symmetric interior-penalty discontinuous Galerkin methods for the
//! biharmonic equation on general polygonal meshes.

pub mod assembly;
pub mod basis;
pub mod error;
pub mod extended;
pub mod geometry;
pub mod mesh;
pub mod norms;
pub mod penalty;
pub mod problems;
pub mod quadrature;
pub mod solve;
pub mod sparse;
pub mod study;
pub mod triangulate;
pub mod verify;

pub use assembly::{assemble_bilinear, assemble_system, dg_gram, DgSpace, DgSystem};
pub use error::{Error, Result};
pub use geometry::{Point, Vector};
pub use mesh::{Cell, Face, FaceTag, MeshMetrics, PolyMesh};
pub use penalty::{compute_penalties, PenaltyField, PenaltyParams, Regime};
pub use problems::ExactSolution;
pub use solve::{solve_spd, solve_split, SolveOptions};
pub use sparse::{BlockSparse, DofMap};
