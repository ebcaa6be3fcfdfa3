//! Structured quadrilateral meshes, bilinear elements, sparse assembly and solvers.

pub mod assembly;
pub mod eigen;
pub mod element;
pub mod mesh;

pub use assembly::{solve_linear, Assembler, Cholesky, DofMap, LinearSolver, SparseSystem};
pub use eigen::{smallest_eigenvalue, smallest_eigenvalue_with, EigenOptions, EigenResult};
pub use mesh::{MeshHierarchy, QuadMesh, REFINEMENT_FACTOR};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FemError {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("singular Jacobian in element {element} (det = {det:e})")]
    SingularJacobian { element: usize, det: f64 },
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error(
        "linear solver did not converge after {iterations} iterations (residuals {residuals:?})"
    )]
    NoConvergence {
        iterations: usize,
        residuals: Vec<f64>,
    },
    #[error("no positive eigenvalue")]
    NoPositiveEigenvalue,
    #[error(
        "eigen solver did not converge after {iterations} steps (Ritz values {ritz_history:?})"
    )]
    EigenNoConvergence {
        iterations: usize,
        ritz_history: Vec<f64>,
    },
}
