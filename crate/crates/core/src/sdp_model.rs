//! Block-LMI assembly of the robust CVaR estimation problem and of its
//! ambiguity-free counterpart.
//!
//! Decision vector layout for the robust problem, in this order:
//!
//! | name    | length | meaning                          |
//! |---------|--------|----------------------------------|
//! | `A`     | `n·m`  | estimator matrix, column-major   |
//! | `b`     | `n`    | estimator offset                 |
//! | `gamma` | 1      | transport multiplier             |
//! | `tau`   | 1      | CVaR threshold                   |
//! | `s`     | `N`    | per-atom epigraph variables      |
//!
//! With `F = [−I, A]` the problem reads
//!
//! ```text
//! minimize    τ + (γr² + (1/N)Σ sᵢ) / α
//! subject to  [[γI_d, Fᵀ], [F, I_n]] ⪰ δI
//!             [[τ + sᵢ + γ‖zᵢ‖², γzᵢᵀ, −bᵀ],
//!              [γzᵢ,             γI_d,  Fᵀ ],
//!              [−b,              F,     I_n]] ⪰ 0     for every atom
//!             γ ≥ 0,  sᵢ ≥ 0
//! ```
//!
//! [`AtomBlockForm::Centered`] replaces every per-atom block by its
//! congruence `TᵀMT` with `T = [[1, 0, 0], [−zᵢ, I, 0], [0, 0, I]]`:
//!
//! ```text
//! [[τ + sᵢ, 0,    eᵢᵀ],
//!  [0,      γI_d, Fᵀ ],
//!  [eᵢ,     F,    I_n]] ⪰ 0,      eᵢ = xᵢ − Ayᵢ − b
//! ```
//!
//! `T` is constant and invertible, so the feasible set is unchanged; `γ`
//! then enters only through an identity, which avoids the cancellation in
//! `⟨M_γ, Z⟩` that limits solver accuracy when the optimal `γ` is large.
//!
//! The nominal problem drops `γ` and uses blocks
//! `[[sᵢ + τ, eᵢᵀ], [eᵢ, I_n]] ⪰ 0` with `eᵢ = xᵢ − Ayᵢ − b`.

use std::ops::Range;

use drcvar_conic::{min_lmi_eigenvalue, LmiBlock, SdpProblem, SdpSolution, SolveStatus};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{AffineEstimator, EmpiricalDistribution, RiskSpec};

pub const VAR_A: &str = "A";
pub const VAR_B: &str = "b";
pub const VAR_GAMMA: &str = "gamma";
/// `γκ²` with `κ = min(r, 1)`, used instead of `gamma` by the solve form.
pub const VAR_GAMMA_BUDGET: &str = "gamma_scaled";
pub const VAR_TAU: &str = "tau";
pub const VAR_S: &str = "s";

/// Lower bound accepted for `γ` and `sᵢ` in a returned solution.
pub const SIGN_TOL: f64 = 1e-9;
/// Lower bound accepted for the smallest LMI eigenvalue of a solution.
pub const LMI_TOL: f64 = 1e-7;

/// Default margin `δ = 1e-9·(1 + ‖data‖∞)` for the global LMI.
pub fn default_strict_margin(dist: &EmpiricalDistribution) -> f64 {
    let amax = dist.atoms().iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    1e-9 * (1.0 + amax)
}

/// Index of `A[j, k]` inside the decision vector.
#[inline]
fn a_index(a: &Range<usize>, n: usize, j: usize, k: usize) -> usize {
    a.start + k * n + j
}

/// Layout of the per-atom LMI blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AtomBlockForm {
    /// `[[τ + sᵢ + γ‖zᵢ‖², γzᵢᵀ, −bᵀ], [γzᵢ, γI, Fᵀ], [−b, F, I]]`.
    #[default]
    AsPrinted,
    /// The congruent block with `γ` only on the middle diagonal.
    Centered,
}

pub fn build_drcvar_sdp(dist: &EmpiricalDistribution, spec: &RiskSpec, strict_margin: f64) -> Result<SdpProblem> {
    build_drcvar_sdp_with(dist, spec, strict_margin, AtomBlockForm::AsPrinted)
}

pub fn build_drcvar_sdp_with(
    dist: &EmpiricalDistribution,
    spec: &RiskSpec,
    strict_margin: f64,
    form: AtomBlockForm,
) -> Result<SdpProblem> {
    build(dist, spec, strict_margin, form, false, false)
}

/// The program handed to the solver.
///
/// Three exact changes against [`build_drcvar_sdp`]:
///
/// * centered atom blocks;
/// * small radii are moved into the blocks: with `κ = min(r, 1)` and
///   `P = diag(1, κI_d, I_n)` every atom block is replaced by `PMP`, the
///   global block by `diag(κI_d, I_n)·M·diag(κI_d, I_n)`, and `γ` by
///   `β = γκ²`. The blocks then carry `βI_d` and `κF`, and the objective
///   coefficient of `β` is `r²/(ακ²)`. Without this the dual blocks of
///   small radii are scaled like `r²` in the `d` directions, far from the
///   identity start of the interior-point method;
/// * for `α = 1` no `τ` and no sign constraints on `s`. At `α = 1` every
///   `τ` below the smallest per-atom loss is optimal, which leaves the
///   optimal face unbounded and stalls interior-point methods; fixing
///   `τ = 0` is exact because the losses are nonnegative, and it makes
///   `sᵢ ≥ 0` redundant.
pub fn build_drcvar_sdp_for_solve(
    dist: &EmpiricalDistribution,
    spec: &RiskSpec,
    strict_margin: f64,
) -> Result<SdpProblem> {
    build(
        dist,
        spec,
        strict_margin,
        AtomBlockForm::Centered,
        spec.alpha == 1.0,
        true,
    )
}

/// `κ²` in the solve form: `γ = β / budget_scale(r)`.
pub fn budget_scale(radius: f64) -> f64 {
    radius.min(1.0).powi(2)
}

fn build(
    dist: &EmpiricalDistribution,
    spec: &RiskSpec,
    strict_margin: f64,
    form: AtomBlockForm,
    drop_tau: bool,
    radius_scaled: bool,
) -> Result<SdpProblem> {
    if !(spec.radius > 0.0) {
        return Err(Error::InvalidRadius {
            expected: "positive for the robust program",
            got: spec.radius,
        });
    }
    if !(spec.alpha > 0.0 && spec.alpha <= 1.0) {
        return Err(Error::InvalidAlpha(spec.alpha));
    }
    if !(strict_margin >= 0.0 && strict_margin.is_finite()) {
        return Err(Error::Validation(format!(
            "strict margin must be >= 0, got {strict_margin}"
        )));
    }
    let (n, m, d, big_n) = (dist.n(), dist.m(), dist.dim(), dist.len());
    debug_assert!(!radius_scaled || form == AtomBlockForm::Centered);

    let mut p = SdpProblem::new(n * m + n + 1 + usize::from(!drop_tau) + big_n);
    let a_rng = p.layout.push(VAR_A, n * m);
    let b_rng = p.layout.push(VAR_B, n);
    let g = p
        .layout
        .push(if radius_scaled { VAR_GAMMA_BUDGET } else { VAR_GAMMA }, 1)
        .start;
    let t = (!drop_tau).then(|| p.layout.push(VAR_TAU, 1).start);
    let s_rng = p.layout.push(VAR_S, big_n);

    let r2 = spec.radius * spec.radius;
    // κ² scales the `d × d` margin and divides the cost of `γ`; κ scales `F`.
    let ms = if radius_scaled { budget_scale(spec.radius) } else { 1.0 };
    let fs = ms.sqrt();
    if let Some(t) = t {
        p.objective[t] = 1.0;
    }
    p.objective[g] = r2 / (ms * spec.alpha);
    for idx in s_rng.clone() {
        p.objective[idx] = 1.0 / (spec.alpha * big_n as f64);
    }

    // [[γI_d, Fᵀ], [F, I_n]] − δI ⪰ 0
    let mut global = LmiBlock::new(d + n);
    for a in 0..d {
        global.add_coeff(g, a, a, 1.0);
        global.add_constant(a, a, -strict_margin * ms);
    }
    for j in 0..n {
        let row = d + j;
        global.add_constant(row, j, -fs);
        for k in 0..m {
            global.add_coeff(a_index(&a_rng, n, j, k), row, n + k, fs);
        }
        global.add_constant(row, row, 1.0 - strict_margin);
    }
    p.blocks.push(global);

    for i in 0..big_n {
        let z = dist.atom(i);
        let mut blk = LmiBlock::new(1 + d + n);
        if let Some(t) = t {
            blk.add_coeff(t, 0, 0, 1.0);
        }
        blk.add_coeff(s_rng.start + i, 0, 0, 1.0);
        for a in 0..d {
            blk.add_coeff(g, 1 + a, 1 + a, 1.0);
        }
        match form {
            AtomBlockForm::AsPrinted => {
                blk.add_coeff(g, 0, 0, z.norm_squared());
                for a in 0..d {
                    blk.add_coeff(g, 1 + a, 0, z[a]);
                }
                for j in 0..n {
                    blk.add_coeff(b_rng.start + j, 1 + d + j, 0, -1.0);
                }
            }
            AtomBlockForm::Centered => {
                for j in 0..n {
                    let row = 1 + d + j;
                    blk.add_constant(row, 0, z[j]);
                    blk.add_coeff(b_rng.start + j, row, 0, -1.0);
                    for k in 0..m {
                        blk.add_coeff(a_index(&a_rng, n, j, k), row, 0, -z[n + k]);
                    }
                }
            }
        }
        for j in 0..n {
            let row = 1 + d + j;
            blk.add_constant(row, 1 + j, -fs);
            for k in 0..m {
                blk.add_coeff(a_index(&a_rng, n, j, k), row, 1 + n + k, fs);
            }
            blk.add_constant(row, row, 1.0);
        }
        p.blocks.push(blk);
    }

    let mut gamma_nonneg = LmiBlock::new(1);
    gamma_nonneg.add_coeff(g, 0, 0, 1.0);
    p.blocks.push(gamma_nonneg);
    if !drop_tau {
        push_nonneg(&mut p, s_rng);
    }

    p.validate().map_err(|e| Error::Validation(e.to_string()))?;
    Ok(p)
}

/// `min τ + (1/(αN)) Σ sᵢ` s.t. `sᵢ ≥ ‖xᵢ − Ayᵢ − b‖² − τ`, `sᵢ ≥ 0`.
pub fn build_nominal_cvar_sdp(dist: &EmpiricalDistribution, alpha: f64) -> Result<SdpProblem> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    let (n, m, big_n) = (dist.n(), dist.m(), dist.len());

    let mut p = SdpProblem::new(n * m + n + 1 + big_n);
    let a_rng = p.layout.push(VAR_A, n * m);
    let b_rng = p.layout.push(VAR_B, n);
    let t = p.layout.push(VAR_TAU, 1).start;
    let s_rng = p.layout.push(VAR_S, big_n);

    p.objective[t] = 1.0;
    for idx in s_rng.clone() {
        p.objective[idx] = 1.0 / (alpha * big_n as f64);
    }

    for i in 0..big_n {
        let x = dist.x_part(i);
        let y = dist.y_part(i);
        let mut blk = LmiBlock::new(1 + n);
        blk.add_coeff(t, 0, 0, 1.0);
        blk.add_coeff(s_rng.start + i, 0, 0, 1.0);
        for j in 0..n {
            let row = 1 + j;
            blk.add_constant(row, 0, x[j]);
            blk.add_coeff(b_rng.start + j, row, 0, -1.0);
            for k in 0..m {
                blk.add_coeff(a_index(&a_rng, n, j, k), row, 0, -y[k]);
            }
            blk.add_constant(row, row, 1.0);
        }
        p.blocks.push(blk);
    }
    push_nonneg(&mut p, s_rng);

    p.validate().map_err(|e| Error::Validation(e.to_string()))?;
    Ok(p)
}

fn push_nonneg(p: &mut SdpProblem, vars: Range<usize>) {
    for idx in vars {
        let mut blk = LmiBlock::new(1);
        blk.add_coeff(idx, 0, 0, 1.0);
        p.blocks.push(blk);
    }
}

/// Variables recovered from a solved problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpVariables {
    pub estimator: AffineEstimator,
    /// Absent for the nominal problem and for the solve form.
    pub gamma: Option<f64>,
    /// `γ·budget_scale(r)`, present only for the solve form.
    pub gamma_budget: Option<f64>,
    /// Zero when the layout has no `τ` (the `α = 1` solve form).
    pub tau: f64,
    pub s: Vec<f64>,
}

/// Largest of the relative gap and the two relative residuals.
pub fn solution_error(sol: &SdpSolution) -> f64 {
    sol.relative_gap.max(sol.residuals.primal).max(sol.residuals.dual)
}

/// Splits a decision vector by the problem's layout without validation.
pub fn unpack(problem: &SdpProblem, x: &[f64]) -> Result<SdpVariables> {
    let layout = &problem.layout;
    let need = |name: &str| {
        layout
            .get(name)
            .ok_or_else(|| Error::Validation(format!("problem layout has no `{name}` range")))
    };
    if x.len() != problem.num_vars {
        return Err(Error::Dimension(format!(
            "solution has {} entries, problem has {}",
            x.len(),
            problem.num_vars
        )));
    }
    let a_rng = need(VAR_A)?;
    let b_rng = need(VAR_B)?;
    let s_rng = need(VAR_S)?;
    let n = b_rng.len();
    if n == 0 || a_rng.len() % n != 0 {
        return Err(Error::Validation("inconsistent A/b layout".into()));
    }
    let m = a_rng.len() / n;
    let a = DMatrix::from_column_slice(n, m, &x[a_rng]);
    let b = DVector::from_column_slice(&x[b_rng]);
    Ok(SdpVariables {
        estimator: AffineEstimator::new(a, b)?,
        gamma: layout.get(VAR_GAMMA).map(|r| x[r.start]),
        gamma_budget: layout.get(VAR_GAMMA_BUDGET).map(|r| x[r.start]),
        tau: layout.get(VAR_TAU).map_or(0.0, |r| x[r.start]),
        s: x[s_rng].to_vec(),
    })
}

/// Unpacks an optimal solution and checks sign and LMI feasibility.
pub fn extract_estimator(problem: &SdpProblem, sol: &SdpSolution) -> Result<SdpVariables> {
    extract_estimator_with(problem, sol, None)
}

/// Like [`extract_estimator`], but a solver run that stopped without
/// certifying optimality is still accepted when its relative gap and both
/// residuals are at most `reduced_tol`.
pub fn extract_estimator_with(
    problem: &SdpProblem,
    sol: &SdpSolution,
    reduced_tol: Option<f64>,
) -> Result<SdpVariables> {
    let reduced_ok = matches!(sol.status, SolveStatus::Numerical | SolveStatus::MaxIter)
        && reduced_tol.is_some_and(|tol| solution_error(sol) <= tol);
    if sol.status != SolveStatus::Optimal && !reduced_ok {
        return Err(Error::SolverStatus {
            status: sol.status,
            detail: format!(
                "{} (after {} iterations, relative gap {:e}, residuals {:e}/{:e})",
                sol.message.as_deref().unwrap_or("not optimal"),
                sol.iterations,
                sol.relative_gap,
                sol.residuals.primal,
                sol.residuals.dual
            ),
        });
    }
    let vars = unpack(problem, &sol.x)?;
    if let Some(g) = vars.gamma.or(vars.gamma_budget) {
        if g < -SIGN_TOL {
            return Err(Error::Validation(format!("gamma = {g:e} is negative")));
        }
    }
    if let Some((i, &si)) = vars
        .s
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .filter(|(_, &v)| v < -SIGN_TOL)
    {
        return Err(Error::Validation(format!("s[{i}] = {si:e} is negative")));
    }
    let lmin = min_lmi_eigenvalue(problem, &sol.x);
    if lmin < -LMI_TOL {
        return Err(Error::Validation(format!(
            "smallest LMI eigenvalue {lmin:e} below -{LMI_TOL:e}"
        )));
    }
    Ok(vars)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::phi;
    use crate::model::affine_to_quadratic;
    use nalgebra::SymmetricEigen;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dist(rng: &mut ChaCha8Rng, n: usize, m: usize, big_n: usize) -> EmpiricalDistribution {
        let atoms = DMatrix::from_fn(big_n, n + m, |_, _| rng.random_range(-2.0..2.0));
        EmpiricalDistribution::new(atoms, n, m).unwrap()
    }

    /// Direct construction of the per-atom block for a given point.
    fn dense_atom_block(est: &AffineEstimator, gamma: f64, tau: f64, s: f64, z: &DVector<f64>) -> DMatrix<f64> {
        let (n, d) = (est.n(), z.len());
        let f = est.error_map();
        let mut mat = DMatrix::zeros(1 + d + n, 1 + d + n);
        mat[(0, 0)] = tau + s + gamma * z.norm_squared();
        for a in 0..d {
            mat[(1 + a, 0)] = gamma * z[a];
            mat[(0, 1 + a)] = gamma * z[a];
            mat[(1 + a, 1 + a)] = gamma;
        }
        for j in 0..n {
            mat[(1 + d + j, 0)] = -est.b()[j];
            mat[(0, 1 + d + j)] = -est.b()[j];
            for a in 0..d {
                mat[(1 + d + j, 1 + a)] = f[(j, a)];
                mat[(1 + a, 1 + d + j)] = f[(j, a)];
            }
            mat[(1 + d + j, 1 + d + j)] = 1.0;
        }
        mat
    }

    fn dense_global_block(est: &AffineEstimator, gamma: f64, margin: f64) -> DMatrix<f64> {
        let f = est.error_map();
        let (n, d) = (f.nrows(), f.ncols());
        let mut mat = DMatrix::zeros(d + n, d + n);
        mat.view_mut((0, 0), (d, d)).fill_diagonal(gamma);
        mat.view_mut((d, 0), (n, d)).copy_from(&f);
        mat.view_mut((0, d), (d, n)).copy_from(&f.transpose());
        mat.view_mut((d, d), (n, n)).fill_diagonal(1.0);
        mat - DMatrix::identity(d + n, d + n) * margin
    }

    fn pack(p: &SdpProblem, est: &AffineEstimator, gamma: f64, tau: f64, s: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; p.num_vars];
        x[p.layout.get(VAR_A).unwrap()].copy_from_slice(est.a().as_slice());
        x[p.layout.get(VAR_B).unwrap()].copy_from_slice(est.b().as_slice());
        x[p.layout.get(VAR_GAMMA).unwrap().start] = gamma;
        x[p.layout.get(VAR_TAU).unwrap().start] = tau;
        x[p.layout.get(VAR_S).unwrap()].copy_from_slice(s);
        x
    }

    fn min_eig(m: &DMatrix<f64>) -> f64 {
        SymmetricEigen::new(m.clone()).eigenvalues.min()
    }

    #[test]
    fn counts_for_scalar_two_atom_instance() {
        let dist = EmpiricalDistribution::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]], 1, 1).unwrap();
        let p = build_drcvar_sdp(&dist, &RiskSpec::new(0.5, 0.1).unwrap(), 0.0).unwrap();
        assert_eq!(p.num_vars, 6);
        assert_eq!(p.block_sizes(), vec![3, 4, 4, 1, 1, 1]);
    }

    #[test]
    fn atom_block_at_origin() {
        let dist = EmpiricalDistribution::from_rows(&[vec![0.0, 0.0]], 1, 1).unwrap();
        let p = build_drcvar_sdp(&dist, &RiskSpec::new(1.0, 1.0).unwrap(), 0.0).unwrap();
        let x = pack(&p, &AffineEstimator::zeros(1, 1), 1.0, 0.0, &[0.0]);
        let got = p.blocks[1].evaluate(&x);
        let want = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 0.0, 0.0, 0.0, //
                0.0, 1.0, 0.0, -1.0, //
                0.0, 0.0, 1.0, 0.0, //
                0.0, -1.0, 0.0, 1.0,
            ],
        );
        assert_eq!(got, want);
    }

    #[test]
    fn assembled_maps_match_dense_construction() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..25 {
            let (n, m, big_n) = (rng.random_range(1..4), rng.random_range(1..4), rng.random_range(1..6));
            let dist = random_dist(&mut rng, n, m, big_n);
            let margin = 1e-3;
            let p = build_drcvar_sdp(&dist, &RiskSpec::new(0.3, 0.7).unwrap(), margin).unwrap();
            let est = AffineEstimator::new(
                DMatrix::from_fn(n, m, |_, _| rng.random_range(-3.0..3.0)),
                DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0)),
            )
            .unwrap();
            let gamma = rng.random_range(0.0..5.0);
            let tau = rng.random_range(-2.0..2.0);
            let s: Vec<f64> = (0..big_n).map(|_| rng.random_range(0.0..2.0)).collect();
            let x = pack(&p, &est, gamma, tau, &s);
            let mats = p.evaluate(&x);
            assert!((&mats[0] - dense_global_block(&est, gamma, margin)).amax() <= 1e-14);
            for i in 0..big_n {
                let want = dense_atom_block(&est, gamma, tau, s[i], &dist.atom(i));
                assert!((&mats[1 + i] - want).amax() <= 1e-14);
            }
            assert_eq!(mats[1 + big_n][(0, 0)], gamma);
            for i in 0..big_n {
                assert_eq!(mats[2 + big_n + i][(0, 0)], s[i]);
            }
            let obj = tau + (gamma * 0.49 + s.iter().sum::<f64>() / big_n as f64) / 0.3;
            assert!((p.objective_value(&x) - obj).abs() < 1e-12);
        }
    }

    #[test]
    fn centered_form_is_congruent() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let (n, m, big_n) = (rng.random_range(1..4), rng.random_range(1..4), rng.random_range(1..5));
            let dist = random_dist(&mut rng, n, m, big_n);
            let spec = RiskSpec::new(0.4, 0.2).unwrap();
            let printed = build_drcvar_sdp(&dist, &spec, 1e-6).unwrap();
            let centered = build_drcvar_sdp_with(&dist, &spec, 1e-6, AtomBlockForm::Centered).unwrap();
            assert_eq!(printed.objective, centered.objective);
            assert_eq!(printed.block_sizes(), centered.block_sizes());
            let x: Vec<f64> = (0..printed.num_vars).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (mp, mc) = (printed.evaluate(&x), centered.evaluate(&x));
            let d = n + m;
            for i in 0..big_n {
                let z = dist.atom(i);
                let mut t = DMatrix::identity(1 + d + n, 1 + d + n);
                for a in 0..d {
                    t[(1 + a, 0)] = -z[a];
                }
                let want = t.transpose() * &mp[1 + i] * &t;
                assert!((&mc[1 + i] - want).amax() < 1e-12);
            }
            assert_eq!(mp[0], mc[0]);
        }
    }

    #[test]
    fn solve_form_is_scaled_congruence() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for trial in 0..20 {
            let (n, m, big_n) = (rng.random_range(1..4), rng.random_range(1..4), rng.random_range(1..5));
            let dist = random_dist(&mut rng, n, m, big_n);
            let r = 10f64.powf(if trial % 4 == 0 {
                rng.random_range(0.0..2.0)
            } else {
                rng.random_range(-3.0..0.0)
            });
            let kappa = budget_scale(r).sqrt();
            let spec = RiskSpec::new(0.4, r).unwrap();
            let margin = 1e-3;
            let centered = build_drcvar_sdp_with(&dist, &spec, margin, AtomBlockForm::Centered).unwrap();
            let solve = build_drcvar_sdp_for_solve(&dist, &spec, margin).unwrap();
            assert_eq!(centered.block_sizes(), solve.block_sizes());
            let x: Vec<f64> = (0..centered.num_vars).map(|_| rng.random_range(-2.0..2.0)).collect();
            let g = centered.layout.get(VAR_GAMMA).unwrap().start;
            let mut xs = x.clone();
            xs[solve.layout.get(VAR_GAMMA_BUDGET).unwrap().start] = x[g] * budget_scale(r);
            let tol = 1e-12 * (1.0 + centered.objective_value(&x).abs());
            assert!((centered.objective_value(&x) - solve.objective_value(&xs)).abs() <= tol);
            let (mc, ms) = (centered.evaluate(&x), solve.evaluate(&xs));
            let d = n + m;
            let mut pg = DMatrix::identity(d + n, d + n);
            pg.view_mut((0, 0), (d, d)).fill_diagonal(kappa);
            assert!((&ms[0] - &pg * &mc[0] * &pg).amax() <= 1e-12 * (1.0 + mc[0].amax()));
            let mut pa = DMatrix::identity(1 + d + n, 1 + d + n);
            pa.view_mut((1, 1), (d, d)).fill_diagonal(kappa);
            for i in 0..big_n {
                let want = &pa * &mc[1 + i] * &pa;
                assert!((&ms[1 + i] - want).amax() <= 1e-12 * (1.0 + mc[1 + i].amax()));
            }
        }
    }

    #[test]
    fn global_block_psd_iff_gamma_exceeds_sigma_squared() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut seen = [0usize; 2];
        for _ in 0..200 {
            let (n, m) = (rng.random_range(1..4), rng.random_range(1..4));
            let est = AffineEstimator::new(
                DMatrix::from_fn(n, m, |_, _| rng.random_range(-2.0..2.0)),
                DVector::zeros(n),
            )
            .unwrap();
            let sigma2 = est.error_map().singular_values().max().powi(2);
            let gamma = sigma2 * rng.random_range(0.5..1.5);
            if (gamma - sigma2).abs() < 1e-6 * sigma2 {
                continue;
            }
            let psd = min_eig(&dense_global_block(&est, gamma, 0.0)) >= -1e-12;
            assert_eq!(psd, gamma > sigma2, "gamma {gamma}, sigma^2 {sigma2}");
            seen[psd as usize] += 1;
        }
        assert!(seen[0] > 20 && seen[1] > 20);
    }

    #[test]
    fn atom_block_psd_iff_s_dominates_hinge() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let (n, m) = (rng.random_range(1..3), rng.random_range(1..3));
            let est = AffineEstimator::new(
                DMatrix::from_fn(n, m, |_, _| rng.random_range(-2.0..2.0)),
                DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
            )
            .unwrap();
            let qf = affine_to_quadratic(&est);
            let sigma2 = est.error_map().singular_values().max().powi(2);
            let gamma = sigma2 + rng.random_range(0.1..3.0);
            let z = DVector::from_fn(n + m, |_, _| rng.random_range(-2.0..2.0));
            let tau = rng.random_range(-3.0..3.0);
            let hinge = phi(tau, gamma, &z, &qf).finite().unwrap();
            // The block also needs τ + s ≥ … without the positive part, so
            // only test s ≥ 0 points.
            for (s, expect) in [(hinge + 0.05, true), (hinge - 0.05, false)] {
                if s < 0.0 {
                    continue;
                }
                let psd = min_eig(&dense_atom_block(&est, gamma, tau, s, &z)) >= -1e-10;
                assert_eq!(psd, expect, "s {s} hinge {hinge}");
            }
        }
    }

    #[test]
    fn nominal_block_is_squared_error_epigraph() {
        let dist = EmpiricalDistribution::from_rows(&[vec![2.0, 1.0], vec![0.0, 3.0]], 1, 1).unwrap();
        let p = build_nominal_cvar_sdp(&dist, 0.5).unwrap();
        assert_eq!(p.num_vars, 5);
        assert_eq!(p.block_sizes(), vec![2, 2, 1, 1]);
        // A = 1, b = 0.5, τ = 0, s = (0.25, 12.25) → both blocks singular PSD.
        let x = vec![1.0, 0.5, 0.0, 0.25, 12.25];
        let mats = p.evaluate(&x);
        assert!(min_eig(&mats[0]).abs() < 1e-14);
        assert!(min_eig(&mats[1]).abs() < 1e-12);
    }

    #[test]
    fn unpack_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dist = random_dist(&mut rng, 2, 3, 4);
        let p = build_drcvar_sdp(&dist, &RiskSpec::new(1.0, 1.0).unwrap(), 0.0).unwrap();
        let est = AffineEstimator::new(
            DMatrix::from_fn(2, 3, |_, _| rng.random_range(-1.0..1.0)),
            DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0)),
        )
        .unwrap();
        let s = vec![0.1, 0.2, 0.3, 0.4];
        let vars = unpack(&p, &pack(&p, &est, 2.5, -0.5, &s)).unwrap();
        assert_eq!(vars.estimator, est);
        assert_eq!(vars.gamma, Some(2.5));
        assert_eq!(vars.tau, -0.5);
        assert_eq!(vars.s, s);
    }

    #[test]
    fn rejects_zero_radius() {
        let dist = EmpiricalDistribution::from_rows(&[vec![0.0, 0.0]], 1, 1).unwrap();
        let spec = RiskSpec::new(1.0, 0.0).unwrap();
        assert!(matches!(
            build_drcvar_sdp(&dist, &spec, 0.0),
            Err(Error::InvalidRadius { .. })
        ));
    }

    #[test]
    fn mean_solve_form_drops_tau_and_signs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dist = random_dist(&mut rng, 2, 1, 4);
        let spec = RiskSpec::new(1.0, 0.2).unwrap();
        let full = build_drcvar_sdp_with(&dist, &spec, 1e-9, AtomBlockForm::Centered).unwrap();
        let solve = build_drcvar_sdp_for_solve(&dist, &spec, 1e-9).unwrap();
        assert_eq!(full.num_vars, solve.num_vars + 1);
        assert_eq!(full.blocks.len(), solve.blocks.len() + 4);
        assert!(solve.layout.get(VAR_TAU).is_none());
        let settings = drcvar_conic::SolverSettings::default();
        let a = drcvar_conic::solve_sdp(&full, &settings).unwrap();
        let b = drcvar_conic::solve_sdp(&solve, &settings).unwrap();
        assert!(b.is_optimal());
        assert!((a.objective_value - b.objective_value).abs() <= 1e-6 * (1.0 + b.objective_value.abs()));
        assert_eq!(unpack(&solve, &b.x).unwrap().tau, 0.0);
        let half = build_drcvar_sdp_for_solve(&dist, &RiskSpec::new(0.5, 0.2).unwrap(), 1e-9).unwrap();
        assert_eq!(half.num_vars, full.num_vars);
    }
}
