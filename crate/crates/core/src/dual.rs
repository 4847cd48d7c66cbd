//! Worst-case CVaR of a quadratic loss over a type-2 Wasserstein ball,
//! evaluated through its dual.
//!
//! For `ℓ(z) = zᵀQz + 2qᵀz + c` and radius `r > 0`,
//!
//! ```text
//! sup_{W₂(P, P₀) ≤ r} CVaR_α^P(ℓ)
//!   = inf_{τ, γ ≥ 0} τ + (1/α)(γr² + E_{P₀}[φ(τ, γ, z)])                 (joint)
//!   = inf_{γ ∈ Γ} CVaR_α^{P₀}((γz+q)ᵀQ_γ⁻¹(γz+q) + γ(r²/α − ‖z‖²)) + c   (reduced)
//! ```
//!
//! with `Q_γ = γI − Q`, `Γ = {γ ≥ 0 : Q_γ ≻ 0}` and
//! `φ(τ, γ, z) = sup_v (ℓ(v) − τ)₊ − γ‖v − z‖²`.
//!
//! The reduced form is minimized over `γ` by doubling a bracket and running
//! golden-section search; the partial minimum over `τ` is convex in `γ`.
//! Per-atom terms are evaluated as `ℓ(z) + gᵀQ_γ⁻¹g` with `g = Qz + q`,
//! which equals the expression above without the `γ‖z‖²` cancellation.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{AffineEstimator, EmpiricalDistribution, QuadraticForm, RiskSpec};
use crate::risk::{cvar_discrete, mean};

/// Value in `ℝ ∪ {+∞}`. Infinity is a state, never an `f64` special.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extended {
    Finite(f64),
    Infinite,
}

impl Extended {
    pub fn is_finite(self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Extended::Finite(v) => Some(v),
            Extended::Infinite => None,
        }
    }

    /// `true` when `self < other` in the extended order.
    pub fn lt(self, other: Extended) -> bool {
        match (self, other) {
            (Extended::Finite(a), Extended::Finite(b)) => a < b,
            (Extended::Finite(_), Extended::Infinite) => true,
            (Extended::Infinite, _) => false,
        }
    }
}

impl PartialOrd for Extended {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        use std::cmp::Ordering::*;
        match (self, other) {
            (Extended::Finite(a), Extended::Finite(b)) => a.partial_cmp(b),
            (Extended::Finite(_), Extended::Infinite) => Some(Less),
            (Extended::Infinite, Extended::Finite(_)) => Some(Greater),
            (Extended::Infinite, Extended::Infinite) => Some(Equal),
        }
    }
}

/// `Γ = {γ ≥ 0 : γ > λ̄(Q)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaDomain {
    /// Largest eigenvalue of `Q`.
    pub lambda_max: f64,
    /// `true` when `λ̄(Q) ≥ 0`, so the lower end `γ = λ̄(Q)` is excluded;
    /// otherwise `Γ = [0, ∞)`.
    pub lower_open: bool,
}

impl GammaDomain {
    pub fn contains(&self, gamma: f64) -> bool {
        gamma.is_finite() && gamma >= 0.0 && gamma > self.lambda_max
    }

    pub fn lower_bound(&self) -> f64 {
        self.lambda_max.max(0.0)
    }
}

pub fn gamma_domain(qf: &QuadraticForm) -> Result<GammaDomain> {
    if qf.q_mat().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Q".into()));
    }
    let lambda_max = SymmetricEigen::new(qf.q_mat().clone()).eigenvalues.max();
    Ok(GammaDomain {
        lambda_max,
        lower_open: lambda_max >= 0.0,
    })
}

fn q_gamma(gamma: f64, qf: &QuadraticForm) -> DMatrix<f64> {
    let d = qf.dim();
    DMatrix::identity(d, d) * gamma - qf.q_mat()
}

fn factor(gamma: f64, qf: &QuadraticForm) -> Option<Cholesky<f64, Dyn>> {
    if !(gamma.is_finite() && gamma >= 0.0) {
        return None;
    }
    Cholesky::new(q_gamma(gamma, qf))
}

/// `φ(τ, γ, z)` for the loss `ℓ(v) = qf.eval(v)` (offset included):
/// `((γz+q)ᵀQ_γ⁻¹(γz+q) − γ‖z‖² + c − τ)₊` on `Γ`, `+∞` off it. Evaluated
/// as `(ℓ(z) + gᵀQ_γ⁻¹g − τ)₊` with `g = Qz + q`, which is the same number.
pub fn phi(tau: f64, gamma: f64, z: &DVector<f64>, qf: &QuadraticForm) -> Extended {
    let dom = match gamma_domain(qf) {
        Ok(d) => d,
        Err(_) => return Extended::Infinite,
    };
    if !dom.contains(gamma) {
        return Extended::Infinite;
    }
    let Some(chol) = factor(gamma, qf) else {
        return Extended::Infinite;
    };
    // Expanding the printed quadratic around z avoids cancelling two terms of
    // size γ‖z‖² when γ is large.
    let g = qf.q_mat() * z + qf.q_vec();
    let quad = g.dot(&chol.solve(&g));
    Extended::Finite((qf.eval(z) + quad - tau).max(0.0))
}

fn phi_objective(tau: f64, gamma: f64, z: &DVector<f64>, qf: &QuadraticForm, v: &DVector<f64>) -> f64 {
    (qf.eval(v) - tau).max(0.0) - gamma * (v - z).norm_squared()
}

fn grid_max(
    tau: f64,
    gamma: f64,
    z: &DVector<f64>,
    qf: &QuadraticForm,
    center: &DVector<f64>,
    grid_radius: f64,
    grid_steps: usize,
) -> (f64, DVector<f64>) {
    let d = z.len();
    let steps = grid_steps.max(2);
    let h = 2.0 * grid_radius / (steps - 1) as f64;
    let total = steps.pow(d as u32);
    let mut best = f64::NEG_INFINITY;
    let mut best_v = center.clone();
    let mut v = center.clone();
    for idx in 0..total {
        let mut rem = idx;
        for k in 0..d {
            v[k] = center[k] - grid_radius + h * (rem % steps) as f64;
            rem /= steps;
        }
        let val = phi_objective(tau, gamma, z, qf, &v);
        if val > best {
            best = val;
            best_v.copy_from(&v);
        }
    }
    (best, best_v)
}

/// Plain grid maximum of `(ℓ(v) − τ)₊ − γ‖v − z‖²` over a cube of
/// half-width `grid_radius` centred at `z`. Defined for every `γ`; off `Γ`
/// it grows without bound as the cube widens.
pub fn phi_grid_value(
    tau: f64,
    gamma: f64,
    z: &DVector<f64>,
    qf: &QuadraticForm,
    grid_radius: f64,
    grid_steps: usize,
) -> f64 {
    grid_max(tau, gamma, z, qf, z, grid_radius, grid_steps).0
}

/// Brute-force `φ`: dense grids around `z` and around the stationary point
/// of the concave piece, then Hooke–Jeeves pattern search from the best
/// grid point. Never exceeds the true supremum.
pub fn phi_oracle(
    tau: f64,
    gamma: f64,
    z: &DVector<f64>,
    qf: &QuadraticForm,
    grid_radius: f64,
    grid_steps: usize,
) -> Result<f64> {
    let dom = gamma_domain(qf)?;
    if !dom.contains(gamma) {
        return Err(Error::GammaOutsideDomain {
            gamma,
            lambda_max: dom.lambda_max,
        });
    }
    let chol = factor(gamma, qf).ok_or(Error::GammaOutsideDomain {
        gamma,
        lambda_max: dom.lambda_max,
    })?;
    let v_star = chol.solve(&(z * gamma + qf.q_vec()));

    let (val_z, arg_z) = grid_max(tau, gamma, z, qf, z, grid_radius, grid_steps);
    let (val_s, arg_s) = grid_max(tau, gamma, z, qf, &v_star, grid_radius, grid_steps);
    let (mut best, mut v) = if val_s > val_z { (val_s, arg_s) } else { (val_z, arg_z) };

    let f = |p: &DVector<f64>| phi_objective(tau, gamma, z, qf, p);
    // Grid nodes miss `z` and `v*` by rounding; evaluate both exactly.
    for p in [z, &v_star] {
        let val = f(p);
        if val > best {
            best = val;
            v.copy_from(p);
        }
    }
    let d = z.len();
    let mut step = 2.0 * grid_radius / (grid_steps.max(2) - 1) as f64;
    let mut evals = 0usize;
    while step > 1e-13 * (1.0 + v.amax()) && evals < 2_000_000 {
        // exploratory moves
        let mut trial = v.clone();
        let mut trial_val = best;
        for k in 0..d {
            for sign in [1.0, -1.0] {
                let mut p = trial.clone();
                p[k] += sign * step;
                let val = f(&p);
                evals += 1;
                if val > trial_val {
                    trial_val = val;
                    trial = p;
                    break;
                }
            }
        }
        if trial_val > best {
            // pattern moves along the improving direction
            let mut dir = &trial - &v;
            v = trial;
            best = trial_val;
            loop {
                let p = &v + &dir;
                let val = f(&p);
                evals += 1;
                if val > best {
                    best = val;
                    v = p;
                    dir *= 2.0;
                } else {
                    break;
                }
            }
        } else {
            step *= 0.5;
        }
    }
    Ok(best)
}

/// Per-atom transformed losses `hᵢ = ℓ(zᵢ) + gᵢᵀQ_γ⁻¹gᵢ`, `gᵢ = Qzᵢ + q`, and the
/// maximizers `vᵢ* = zᵢ + Q_γ⁻¹gᵢ = Q_γ⁻¹(γzᵢ + q)`.
fn transformed(gamma: f64, qf: &QuadraticForm, dist: &EmpiricalDistribution) -> Option<(Vec<f64>, DMatrix<f64>)> {
    let chol = factor(gamma, qf)?;
    let n = dist.len();
    let d = dist.dim();
    let mut h = Vec::with_capacity(n);
    let mut v = DMatrix::zeros(n, d);
    for i in 0..n {
        let z = dist.atom(i);
        let g = qf.q_mat() * &z + qf.q_vec();
        let delta = chol.solve(&g);
        h.push(qf.eval(&z) + g.dot(&delta));
        v.row_mut(i).copy_from(&(z + delta).transpose());
    }
    if h.iter().any(|x| !x.is_finite()) {
        return None;
    }
    Some((h, v))
}

fn check_dims(qf: &QuadraticForm, dist: &EmpiricalDistribution) -> Result<()> {
    if qf.dim() != dist.dim() {
        return Err(Error::Dimension(format!(
            "quadratic form has dimension {} but atoms have {}",
            qf.dim(),
            dist.dim()
        )));
    }
    Ok(())
}

/// Reduced one-dimensional dual objective at `γ`, including the offset `c`.
pub fn dual_objective(
    gamma: f64,
    qf: &QuadraticForm,
    dist: &EmpiricalDistribution,
    spec: &RiskSpec,
) -> Result<Extended> {
    check_dims(qf, dist)?;
    let dom = gamma_domain(qf)?;
    if !dom.contains(gamma) {
        return Ok(Extended::Infinite);
    }
    let Some((h, _)) = transformed(gamma, qf, dist) else {
        return Ok(Extended::Infinite);
    };
    let risk = cvar_discrete(&h, spec.alpha)?;
    Ok(Extended::Finite(
        risk.cvar + gamma * spec.radius * spec.radius / spec.alpha,
    ))
}

/// Joint dual objective `τ + (1/α)(γr² + mean φ(τ, γ, zᵢ))`.
pub fn joint_dual_objective(
    tau: f64,
    gamma: f64,
    qf: &QuadraticForm,
    dist: &EmpiricalDistribution,
    spec: &RiskSpec,
) -> Result<Extended> {
    check_dims(qf, dist)?;
    let mut sum = 0.0;
    for i in 0..dist.len() {
        match phi(tau, gamma, &dist.atom(i), qf) {
            Extended::Finite(v) => sum += v,
            Extended::Infinite => return Ok(Extended::Infinite),
        }
    }
    let n = dist.len() as f64;
    Ok(Extended::Finite(
        tau + (gamma * spec.radius * spec.radius + sum / n) / spec.alpha,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualCertificate {
    pub gamma_star: f64,
    /// Minimizing `τ` of the joint form at `γ*` (the VaR of the transformed
    /// per-atom losses, offset included).
    pub tau_star: f64,
    /// Worst-case CVaR, offset included.
    pub value: f64,
    /// Joint form evaluated at `(τ*, γ*)`.
    pub joint_value: f64,
    /// Row `i` is the maximizer `vᵢ*` for atom `i`.
    #[serde(skip)]
    pub per_atom_transported: DMatrix<f64>,
    pub domain: GammaDomain,
    /// The minimizer sits at the excluded lower end of `Γ`; `γ*` is reported
    /// at the search margin.
    pub at_boundary: bool,
    pub evaluations: usize,
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;
const GAMMA_REL_TOL: f64 = 1e-10;
const MAX_DOUBLINGS: usize = 400;
const MAX_GOLDEN_ITERS: usize = 1000;
/// Agreement required between the joint and reduced dual forms.
pub const DUAL_FORM_TOL: f64 = 1e-8;

/// Minimizes the reduced dual over `γ ∈ Γ`.
pub fn worst_case_cvar(qf: &QuadraticForm, dist: &EmpiricalDistribution, spec: &RiskSpec) -> Result<DualCertificate> {
    check_dims(qf, dist)?;
    if !(spec.radius > 0.0) {
        return Err(Error::InvalidRadius {
            expected: "positive",
            got: spec.radius,
        });
    }
    if !(spec.alpha > 0.0 && spec.alpha <= 1.0) {
        return Err(Error::InvalidAlpha(spec.alpha));
    }
    let dom = gamma_domain(qf)?;
    let mut evaluations = 0usize;
    let mut eval = |g: f64| -> Result<Extended> {
        evaluations += 1;
        dual_objective(g, qf, dist, spec)
    };

    let mut lo = if dom.lower_open {
        dom.lambda_max * (1.0 + 1e-6) + 1e-9
    } else {
        0.0
    };
    let mut f_lo = eval(lo)?;
    // Rounding can leave Q_γ numerically singular right at the margin.
    let mut bumps = 0;
    while !f_lo.is_finite() {
        bumps += 1;
        if bumps > 60 {
            return Err(Error::DualNonConvergence {
                lo,
                hi: f64::INFINITY,
                iterations: bumps,
            });
        }
        lo += (lo.abs() + 1e-9) * 1e-6 * 2f64.powi(bumps as i32);
        f_lo = eval(lo)?;
    }
    let lo_margin = lo;

    // Bracket: pₖ = lo + h·2ᵏ until the objective stops decreasing.
    let h = 1e-3 * dom.lambda_max.abs().max(1.0);
    let mut prev = lo;
    let mut f_prev = f_lo;
    let mut cur = lo + h;
    let mut f_cur = eval(cur)?;
    let mut before_prev = lo;
    let mut k = 0;
    while f_cur.lt(f_prev) {
        k += 1;
        if k > MAX_DOUBLINGS {
            return Err(Error::DualNonConvergence {
                lo: prev,
                hi: cur,
                iterations: k,
            });
        }
        before_prev = prev;
        prev = cur;
        f_prev = f_cur;
        cur = lo + h * 2f64.powi(k as i32);
        f_cur = eval(cur)?;
    }
    let (mut a, mut b) = (before_prev, cur);

    // Golden section on [a, b].
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let mut f1 = eval(x1)?;
    let mut f2 = eval(x2)?;
    let mut iters = 0;
    let scale_floor = 1e-15 * (1.0 + dom.lambda_max.abs());
    while b - a > GAMMA_REL_TOL * a.abs().max(b.abs()) + scale_floor {
        iters += 1;
        if iters > MAX_GOLDEN_ITERS {
            return Err(Error::DualNonConvergence {
                lo: a,
                hi: b,
                iterations: iters,
            });
        }
        if f2.lt(f1) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = eval(x2)?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = eval(x1)?;
        }
    }

    // Best evaluated point among the final bracket and the margin.
    let mut gamma_star = if f2.lt(f1) { x2 } else { x1 };
    let f_star = if f2.lt(f1) { f2 } else { f1 };
    if !f_star.lt(f_lo) {
        gamma_star = lo_margin;
        let mut f_best = f_lo;
        // The infimum sits at the excluded end of Γ: walk the margin towards
        // λ̄ while the objective keeps decreasing.
        if dom.lower_open {
            let gap = lo_margin - dom.lambda_max;
            for k in 1..=8 {
                let g = dom.lambda_max + gap * 10f64.powi(-k);
                if !(g > dom.lambda_max) {
                    break;
                }
                let f = eval(g)?;
                if f.lt(f_best) {
                    gamma_star = g;
                    f_best = f;
                } else {
                    break;
                }
            }
        }
    }
    let (h_vals, v) = transformed(gamma_star, qf, dist).ok_or(Error::DualNonConvergence {
        lo: a,
        hi: b,
        iterations: iters,
    })?;
    let risk = cvar_discrete(&h_vals, spec.alpha)?;
    let value = risk.cvar + gamma_star * spec.radius * spec.radius / spec.alpha;
    let tau_star = risk.var;
    let joint_value = joint_dual_objective(tau_star, gamma_star, qf, dist, spec)?
        .finite()
        .ok_or(Error::DualInconsistent {
            joint: f64::INFINITY,
            reduced: value,
        })?;
    if (joint_value - value).abs() > DUAL_FORM_TOL * (1.0 + value.abs()) {
        return Err(Error::DualInconsistent {
            joint: joint_value,
            reduced: value,
        });
    }
    let at_boundary = dom.lower_open && gamma_star - lo_margin <= 1e-8 * lo_margin.abs().max(1.0);

    Ok(DualCertificate {
        gamma_star,
        tau_star,
        value,
        joint_value,
        per_atom_transported: v,
        domain: dom,
        at_boundary,
        evaluations,
    })
}

/// `(√MSE₀ + r·σ_max(F))²` with `F = [−I, A]`.
///
/// Equals the worst-case mean squared error when the nominal residuals lie
/// in the top left-singular subspace of `F`, which always holds for scalar
/// targets (`n = 1`) and for `A = 0`. Otherwise it is an upper bound.
pub fn worst_case_mse_closed(est: &AffineEstimator, dist: &EmpiricalDistribution, radius: f64) -> Result<f64> {
    let mse = mean(&est.losses(dist)?);
    let sigma = est.error_map().singular_values().max();
    Ok((mse.sqrt() + radius * sigma).powi(2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimalCandidate {
    pub distribution: EmpiricalDistribution,
    /// CVaR of the loss under `distribution`; a lower bound on the
    /// worst-case CVaR.
    pub lower_bound: f64,
    /// Step actually used after enforcing the transport budget.
    pub step: f64,
}

/// Moves every atom by `t·(vᵢ* − zᵢ)`, shrinking `t` so that the mean squared
/// displacement stays within `r²`; the result lies in the Wasserstein ball.
pub fn primal_candidate(
    cert: &DualCertificate,
    qf: &QuadraticForm,
    dist: &EmpiricalDistribution,
    spec: &RiskSpec,
    t: f64,
) -> Result<PrimalCandidate> {
    check_dims(qf, dist)?;
    if cert.per_atom_transported.shape() != (dist.len(), dist.dim()) {
        return Err(Error::Dimension("certificate does not match the distribution".into()));
    }
    let displacement = &cert.per_atom_transported - dist.atoms();
    let mean_sq = displacement.row_iter().map(|r| r.norm_squared()).sum::<f64>() / dist.len() as f64;
    let mut step = t.clamp(0.0, 1.0);
    if mean_sq * step * step > spec.radius * spec.radius {
        step = spec.radius / mean_sq.sqrt() * (1.0 - 1e-12);
    }
    let moved = dist.atoms() + displacement * step;
    let moved = EmpiricalDistribution::new(moved, dist.n(), dist.m())?;
    let losses: Vec<f64> = (0..moved.len()).map(|i| qf.eval(&moved.atom(i))).collect();
    let lower_bound = cvar_discrete(&losses, spec.alpha)?.cvar;
    Ok(PrimalCandidate {
        distribution: moved,
        lower_bound,
        step,
    })
}
