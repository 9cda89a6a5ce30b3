//! Fast solver for the time-fractional heat equation on graded temporal meshes.
//!
//! The Caputo derivative of order `0 < delta < 1` is discretized with the L1
//! scheme on a (possibly graded) time mesh. The resulting dense lower
//! triangular time operator is compressed into a hierarchical matrix, and the
//! space-time system is solved with multigrid waveform relaxation: red-black
//! zebra-in-time line smoothing combined with coarsening in space only.
//!
//! Module map:
//!
//! - [`mesh`]: temporal meshes (uniform and graded) and uniform spatial grids
//! - [`fracdisc`]: L1 coefficients, the dense time operator and the initial-value lift
//! - [`hmatrix`]: block tree compression, matrix-vector products and shifted forward substitution
//! - [`wrmg`]: the multigrid waveform relaxation solver
//! - [`exact`]: Mittag-Leffler function, test problems and error metrics
//! - [`special`]: Gamma function
//!
//! ```
//! use tfheat::wrmg::solve_problem;
//! use tfheat::{CycleConfig, HMatrixConfig, MeshKind, Problem, ProblemKind};
//!
//! // 1D model problem on [0, pi] with g = sin x; 255 interior points, 256 graded steps
//! let problem = Problem::new(ProblemKind::Heat1d, 0.4, 255, 256, MeshKind::Graded)?;
//! let (u, report) = solve_problem(&problem, HMatrixConfig::default(), &CycleConfig::for_dim(1))?;
//! assert!(report.converged);
//! assert!(problem.max_error(&u.data().view()) < 1e-3);
//! # Ok::<(), tfheat::Error>(())
//! ```

pub mod error;
pub mod exact;
pub mod fracdisc;
pub mod hmatrix;
pub mod mesh;
pub mod special;
pub mod wrmg;

pub use error::{Error, Result};
pub use exact::{ErrorStudy, Problem, ProblemKind};
pub use fracdisc::{L1Coefficients, TimeOperatorDense};
pub use hmatrix::{HMatrix, HMatrixConfig, StorageReport};
pub use mesh::{MeshKind, SpatialGrid, TemporalMesh};
pub use wrmg::{CycleConfig, Hierarchy, InitialGuess, SolveReport, SpaceTimeField};
