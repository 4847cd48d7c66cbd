//! Distributionally robust risk-sensitive affine estimation.
//!
//! Affine estimators `ψ(y) = Ay + b` are fitted by minimizing the worst-case
//! CVaR of the squared estimation error over a type-2 Wasserstein ball
//! centred at an empirical distribution. The fit is an exact semidefinite
//! program; an independent one-dimensional dual evaluation cross-checks
//! every solution.

// `!(x > 0.0)` and friends are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dual;
pub mod error;
pub mod estimation;
pub mod experiment;
pub mod model;
pub mod risk;
pub mod sdp_model;

pub use drcvar_conic::SolveStatus;
pub use error::{Error, Result};
pub use model::{affine_to_quadratic, loss_eval, AffineEstimator, EmpiricalDistribution, QuadraticForm, RiskSpec};
pub use risk::{cvar_discrete, RiskReport};
