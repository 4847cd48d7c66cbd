//! Exact CVaR and VaR of a uniformly weighted loss sample.
//!
//! `CVaR_α(ℓ) = min_τ τ + (1/α)·mean((ℓᵢ − τ)₊)`. Sorting the losses in
//! descending order with `k = ⌊αN⌋`, the minimum is
//! `(1/α)[(1/N)·Σ_{i≤k} ℓ₍ᵢ₎ + (α − k/N)·ℓ₍ₖ₊₁₎]` and is attained at
//! `τ = ℓ₍ₖ₊₁₎`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub cvar: f64,
    /// Minimizing `τ`: the `(k+1)`-th largest loss.
    pub var: f64,
    /// Number of losses strictly above `var`.
    pub tail_count: usize,
}

pub fn cvar_discrete(losses: &[f64], alpha: f64) -> Result<RiskReport> {
    if losses.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    if losses.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite("losses".into()));
    }
    let n = losses.len();
    let mut sorted = losses.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let nf = n as f64;
    let k = ((alpha * nf).floor() as usize).min(n);
    let head: f64 = sorted[..k].iter().sum();
    let (cvar, var) = if k == 0 {
        (sorted[0], sorted[0])
    } else if k == n {
        // α = 1: sum in input order so the result is bit-identical to `mean`.
        (mean(losses), sorted[n - 1])
    } else {
        let rest = alpha - k as f64 / nf;
        ((head / nf + rest * sorted[k]) / alpha, sorted[k])
    };
    // The formula is a convex combination of order statistics; clamp
    // rounding so that cvar ≥ var holds for α < 1.
    let cvar = if k == n { cvar } else { cvar.max(var) };
    let tail_count = sorted.iter().take_while(|&&l| l > var).count();
    Ok(RiskReport { cvar, var, tail_count })
}

/// `τ + (1/α)·mean((ℓᵢ − τ)₊)`, the objective minimized by [`cvar_discrete`].
pub fn cvar_objective(losses: &[f64], alpha: f64, tau: f64) -> f64 {
    let excess: f64 = losses.iter().map(|l| (l - tau).max(0.0)).sum();
    tau + excess / (alpha * losses.len() as f64)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
