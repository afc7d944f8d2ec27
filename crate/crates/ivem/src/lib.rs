//! Immersed virtual element methods (IVEM) for second-order elliptic and
//! H(curl) interface problems in three dimensions.
//!
//! The pipeline is organised bottom-up:
//!
//! * [`mesh`] — background Kuhn tetrahedral meshes, level-set classification,
//!   element cutting, and the global unfitted topology (nodes/edges/faces of
//!   the boundary triangulations of cut elements).
//! * [`ifespace`] — immersed finite element (IFE) spaces: jump matrices,
//!   piecewise-constant chains across interface components, and the three
//!   IFE function families (nodal, edge, face).
//! * [`projection`] — computable weighted projections onto the IFE spaces,
//!   evaluated from degrees of freedom through boundary integrals only.
//! * [`assembly`] — local stabilised bilinear forms, global assembly,
//!   Dirichlet elimination, and the discrete transfer operators.
//! * [`solver`] — sparse CSR kernels, CG/PCG with condition estimation, a
//!   sparse LDL^T factorization, and the auxiliary-space (HX) preconditioner.
//! * [`derham`] — canonical interpolations, incidence matrices, and exactness
//!   / commuting-diagram verification of the discrete de Rham complex.
//! * [`bench`] — benchmark problem catalog, error computation, convergence
//!   and preconditioner studies.

pub mod assembly;
pub mod bench;
pub mod config;
pub mod derham;
pub mod geo;
pub mod ifespace;
pub mod mesh;
pub mod projection;
pub mod quadrature;
pub mod solver;

use thiserror::Error;

/// Errors produced by the IVEM pipeline.
#[derive(Debug, Error)]
pub enum IvemError {
    /// A geometric configuration that the cutter cannot handle soundly
    /// (level set vanishing at a vertex with no recoverable sign, cut-point
    /// counts outside {3,4}, collinear interface points, ...).
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    /// Inconsistent or non-closed surface topology detected by an internal check.
    #[error("topology error: {0}")]
    Topology(String),
    /// A local solve (Gram system, factorization) failed.
    #[error("singular system: {0}")]
    Singular(String),
    /// An iterative solver failed to reach its tolerance.
    #[error("solver did not converge: {0}")]
    NoConvergence(String),
    /// Invalid user input (configuration, CLI arguments, unknown names).
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// I/O failure while reading or writing artifacts.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, IvemError>;
