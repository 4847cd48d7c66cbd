//! Dense primal-dual interior-point solver for small and medium
//! block-diagonal semidefinite programs written as linear matrix
//! inequalities.

// `!(x > 0.0)` and friends are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificate;
pub mod dump;
pub mod problem;
pub mod solver;

pub use certificate::{min_lmi_eigenvalue, recompute, Certificate};
pub use dump::{read_dump, write_dump, DumpError};
pub use problem::{LmiBlock, PackedSym, ProblemError, SdpProblem, VarLayout};
pub use solver::{solve_sdp, Residuals, SdpSolution, SolveError, SolveStatus, SolverSettings};
