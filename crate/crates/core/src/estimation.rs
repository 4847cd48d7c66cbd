//! Estimator fitting: robust CVaR, robust MSE and the two ambiguity-free
//! baselines.
//!
//! Every robust fit is re-evaluated through [`crate::dual::worst_case_cvar`]
//! at the fitted estimator and the discrepancy is stored in
//! [`FitResult::cross_check_gap`].

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use drcvar_conic::{solve_sdp, SdpSolution, SolverSettings};
use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dual::worst_case_cvar;
use crate::error::{Error, Result};
use crate::model::{affine_to_quadratic, AffineEstimator, EmpiricalDistribution, RiskSpec};
use crate::risk::{cvar_discrete, mean};
use crate::sdp_model::{
    budget_scale, build_drcvar_sdp_for_solve, build_nominal_cvar_sdp, default_strict_margin, extract_estimator_with,
};

/// Ridge added to a singular observation Gram matrix.
pub const RIDGE_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    DrCvar,
    DrMse,
    NominalCvar,
    NominalMse,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::DrCvar, Method::DrMse, Method::NominalCvar, Method::NominalMse];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::DrCvar => "dr_cvar",
            Method::DrMse => "dr_mse",
            Method::NominalCvar => "nominal_cvar",
            Method::NominalMse => "nominal_mse",
        }
    }

    pub fn is_robust(self) -> bool {
        matches!(self, Method::DrCvar | Method::DrMse)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Data(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub solver: SolverSettings,
    /// Margin for the strict LMI; `None` uses [`default_strict_margin`].
    pub strict_margin: Option<f64>,
    /// A solver run that stalls without certifying optimality is still
    /// used when its gap and residuals are below this bound and the
    /// independent cross-check passes. `None` rejects such runs.
    pub reduced_accuracy_tol: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            solver: SolverSettings::default(),
            strict_margin: None,
            reduced_accuracy_tol: Some(1e-6),
        }
    }
}

impl FitOptions {
    pub fn strict() -> Self {
        Self::default()
    }

    pub fn fast() -> Self {
        Self {
            solver: SolverSettings {
                tol_gap: 1e-6,
                tol_feas: 1e-6,
                max_iter: 100,
                ..SolverSettings::default()
            },
            strict_margin: None,
            reduced_accuracy_tol: Some(1e-4),
        }
    }
}

/// Interior-point diagnostics attached to an SDP-based fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub status: String,
    /// `full` when the solver certified optimality, `reduced` when a
    /// stalled run was accepted under [`FitOptions::reduced_accuracy_tol`].
    pub accuracy: String,
    pub iterations: usize,
    pub objective_value: f64,
    pub dual_objective_value: f64,
    pub relative_gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

impl From<&SdpSolution> for SolverSummary {
    fn from(sol: &SdpSolution) -> Self {
        Self {
            status: sol.status.as_str().to_string(),
            accuracy: if sol.is_optimal() { "full" } else { "reduced" }.to_string(),
            iterations: sol.iterations,
            objective_value: sol.objective_value,
            dual_objective_value: sol.dual_objective_value,
            relative_gap: sol.relative_gap,
            primal_residual: sol.residuals.primal,
            dual_residual: sol.residuals.dual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub method: Method,
    pub estimator: AffineEstimator,
    pub alpha: f64,
    pub radius: f64,
    pub optimal_value: f64,
    /// Transport multiplier; absent for the nominal fits.
    pub gamma: Option<f64>,
    /// CVaR threshold; absent for the least-squares fit.
    pub tau: Option<f64>,
    /// Independent re-evaluation of the objective at the fitted estimator:
    /// the dual worst-case CVaR for robust fits, the empirical CVaR for the
    /// nominal ones.
    pub check_value: f64,
    /// `|optimal_value − check_value|`.
    pub cross_check_gap: f64,
    /// Allowed gap, `1e-5·(1 + |optimal_value|)`.
    pub cross_check_tol: f64,
    /// The dual minimizer sits at the excluded end of its domain.
    pub gamma_at_boundary: bool,
    pub solver: Option<SolverSummary>,
    pub solve_time_s: f64,
}

impl FitResult {
    pub fn cross_check_ok(&self) -> bool {
        self.cross_check_gap <= self.cross_check_tol
    }
}

pub fn cross_check_tolerance(value: f64) -> f64 {
    1e-5 * (1.0 + value.abs())
}

/// Dispatches on `method`; `radius = 0` sends robust methods to their
/// nominal counterparts.
pub fn fit(method: Method, dist: &EmpiricalDistribution, spec: &RiskSpec, opts: &FitOptions) -> Result<FitResult> {
    match method {
        Method::DrCvar => fit_dr_cvar(dist, spec, opts),
        Method::DrMse => fit_dr_mse(dist, spec.radius, opts),
        Method::NominalCvar => fit_nominal_cvar(dist, spec.alpha, opts),
        Method::NominalMse => fit_nominal_mse(dist),
    }
}

pub fn fit_dr_cvar(dist: &EmpiricalDistribution, spec: &RiskSpec, opts: &FitOptions) -> Result<FitResult> {
    fit_robust(Method::DrCvar, dist, spec, opts)
}

pub fn fit_dr_mse(dist: &EmpiricalDistribution, radius: f64, opts: &FitOptions) -> Result<FitResult> {
    fit_robust(Method::DrMse, dist, &RiskSpec::new(1.0, radius)?, opts)
}

fn fit_robust(method: Method, dist: &EmpiricalDistribution, spec: &RiskSpec, opts: &FitOptions) -> Result<FitResult> {
    if spec.radius == 0.0 {
        return match method {
            Method::DrMse => fit_nominal_mse(dist),
            _ => fit_nominal_cvar(dist, spec.alpha, opts),
        };
    }
    let start = Instant::now();
    let margin = opts.strict_margin.unwrap_or_else(|| default_strict_margin(dist));
    let problem = build_drcvar_sdp_for_solve(dist, spec, margin)?;
    let sol = solve_sdp(&problem, &opts.solver)?;
    let vars = extract_estimator_with(&problem, &sol, opts.reduced_accuracy_tol)?;
    let value = sol.objective_value;
    let cert = worst_case_cvar(&affine_to_quadratic(&vars.estimator), dist, spec)?;
    let gap = (value - cert.value).abs();
    check_gap(method, &sol, value, cert.value)?;
    Ok(FitResult {
        method,
        estimator: vars.estimator,
        alpha: spec.alpha,
        radius: spec.radius,
        optimal_value: value,
        gamma: vars.gamma.or(vars.gamma_budget.map(|b| b / budget_scale(spec.radius))),
        tau: Some(vars.tau),
        check_value: cert.value,
        cross_check_gap: gap,
        cross_check_tol: cross_check_tolerance(value),
        gamma_at_boundary: cert.at_boundary,
        solver: Some(SolverSummary::from(&sol)),
        solve_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Warns on a cross-check miss; a reduced-accuracy solve that misses it is
/// rejected outright.
fn check_gap(method: Method, sol: &SdpSolution, value: f64, check: f64) -> Result<()> {
    let gap = (value - check).abs();
    if gap <= cross_check_tolerance(value) {
        if !sol.is_optimal() {
            log::warn!("{method}: accepted a {} solver run at reduced accuracy", sol.status);
        }
        return Ok(());
    }
    if !sol.is_optimal() {
        return Err(Error::SolverStatus {
            status: sol.status,
            detail: format!("reduced-accuracy solution fails the cross-check: {value} vs {check}"),
        });
    }
    log::warn!("{method}: SDP value {value} and check value {check} differ by {gap:e}");
    Ok(())
}

/// Least-squares affine regression of `x` on `y` over the atoms.
pub fn fit_nominal_mse(dist: &EmpiricalDistribution) -> Result<FitResult> {
    let start = Instant::now();
    let (n, m, big_n) = (dist.n(), dist.m(), dist.len());
    let atoms = dist.atoms();
    let xs = atoms.columns(0, n);
    let ys = atoms.columns(n, m);
    let x_mean: DVector<f64> = xs.row_mean().transpose();
    let y_mean: DVector<f64> = ys.row_mean().transpose();
    let mut xc = xs.into_owned();
    let mut yc = ys.into_owned();
    for i in 0..big_n {
        for j in 0..n {
            xc[(i, j)] -= x_mean[j];
        }
        for k in 0..m {
            yc[(i, k)] -= y_mean[k];
        }
    }
    let gram = yc.transpose() * &yc;
    let rhs = yc.transpose() * &xc;
    let a_t = solve_gram(gram, &rhs);
    let a = a_t.transpose();
    let b = &x_mean - &a * &y_mean;
    let estimator = AffineEstimator::new(a, b)?;
    let losses = estimator.losses(dist)?;
    let value = mean(&losses);
    // A second evaluation through the CVaR routine at α = 1.
    let check = cvar_discrete(&losses, 1.0)?.cvar;
    Ok(FitResult {
        method: Method::NominalMse,
        estimator,
        alpha: 1.0,
        radius: 0.0,
        optimal_value: value,
        gamma: None,
        tau: None,
        check_value: check,
        cross_check_gap: (value - check).abs(),
        cross_check_tol: cross_check_tolerance(value),
        gamma_at_boundary: false,
        solver: None,
        solve_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Solves `G X = R` for symmetric PSD `G`, adding `RIDGE_EPS·I` when `G` is
/// numerically singular.
fn solve_gram(gram: DMatrix<f64>, rhs: &DMatrix<f64>) -> DMatrix<f64> {
    let m = gram.nrows();
    let scale = gram.diagonal().max().max(0.0);
    if let Some(ch) = Cholesky::new(gram.clone()) {
        let pivot = ch.l_dirty().diagonal().min();
        if pivot * pivot > 1e-12 * scale {
            return ch.solve(rhs);
        }
    }
    let ridged = gram + DMatrix::identity(m, m) * RIDGE_EPS;
    match Cholesky::new(ridged.clone()) {
        Some(ch) => ch.solve(rhs),
        None => ridged
            .svd(true, true)
            .solve(rhs, 0.0)
            .unwrap_or_else(|_| DMatrix::zeros(m, rhs.ncols())),
    }
}

pub fn fit_nominal_cvar(dist: &EmpiricalDistribution, alpha: f64, opts: &FitOptions) -> Result<FitResult> {
    let start = Instant::now();
    let problem = build_nominal_cvar_sdp(dist, alpha)?;
    let sol = solve_sdp(&problem, &opts.solver)?;
    let vars = extract_estimator_with(&problem, &sol, opts.reduced_accuracy_tol)?;
    let value = sol.objective_value;
    let check = cvar_discrete(&vars.estimator.losses(dist)?, alpha)?.cvar;
    check_gap(Method::NominalCvar, &sol, value, check)?;
    Ok(FitResult {
        method: Method::NominalCvar,
        estimator: vars.estimator,
        alpha,
        radius: 0.0,
        optimal_value: value,
        gamma: None,
        tau: Some(vars.tau),
        check_value: check,
        cross_check_gap: (value - check).abs(),
        cross_check_tol: cross_check_tolerance(value),
        gamma_at_boundary: false,
        solver: Some(SolverSummary::from(&sol)),
        solve_time_s: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::worst_case_mse_closed;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn origin() -> EmpiricalDistribution {
        EmpiricalDistribution::from_rows(&[vec![0.0, 0.0]], 1, 1).unwrap()
    }

    fn random_dist(seed: u64, n: usize, m: usize, big_n: usize) -> EmpiricalDistribution {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a_true = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
        let mut atoms = DMatrix::zeros(big_n, n + m);
        for i in 0..big_n {
            let y = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
            let x = &a_true * &y + DVector::from_fn(n, |_, _| rng.random_range(-0.5..0.5));
            atoms.view_mut((i, 0), (1, n)).copy_from(&x.transpose());
            atoms.view_mut((i, n), (1, m)).copy_from(&y.transpose());
        }
        EmpiricalDistribution::new(atoms, n, m).unwrap()
    }

    fn rel_err(got: f64, want: f64) -> f64 {
        (got - want).abs() / want.abs()
    }

    #[test]
    fn single_atom_boundary_values() {
        let opts = FitOptions::default();
        let r = fit_dr_cvar(&origin(), &RiskSpec::new(1.0, 0.5).unwrap(), &opts).unwrap();
        assert!(rel_err(r.optimal_value, 0.25) < 1e-3, "{}", r.optimal_value);
        assert!(r.estimator.a()[(0, 0)].abs() < 1e-3 && r.estimator.b()[0].abs() < 1e-3);
        assert!(r.cross_check_ok(), "gap {}", r.cross_check_gap);

        let r = fit_dr_cvar(&origin(), &RiskSpec::new(0.5, 0.5).unwrap(), &opts).unwrap();
        assert!(rel_err(r.optimal_value, 0.5) < 1e-3, "{}", r.optimal_value);
        assert!(r.cross_check_ok());

        let r = fit_dr_mse(&origin(), 1.0, &opts).unwrap();
        assert!(rel_err(r.optimal_value, 1.0) < 1e-3);
        assert_eq!(r.method, Method::DrMse);
    }

    #[test]
    fn nominal_mse_examples() {
        let d = EmpiricalDistribution::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]], 1, 1).unwrap();
        let r = fit_nominal_mse(&d).unwrap();
        assert!((r.estimator.a()[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(r.estimator.b()[0].abs() < 1e-12);
        assert!(r.optimal_value.abs() < 1e-20);

        let d = EmpiricalDistribution::from_rows(&[vec![1.0, 2.0], vec![3.0, 2.0], vec![8.0, 2.0]], 1, 1).unwrap();
        let r = fit_nominal_mse(&d).unwrap();
        assert_eq!(r.estimator.a()[(0, 0)], 0.0);
        assert!((r.estimator.b()[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn nominal_mse_gradient_vanishes() {
        let d = random_dist(1, 2, 3, 15);
        let r = fit_nominal_mse(&d).unwrap();
        // ∇_A MSE = −(2/N) Σ eᵢyᵢᵀ, ∇_b MSE = −(2/N) Σ eᵢ.
        let (mut ga, mut gb) = (DMatrix::zeros(2, 3), DVector::zeros(2));
        for i in 0..d.len() {
            let e = d.x_part(i) - r.estimator.predict(&d.y_part(i));
            ga -= &e * d.y_part(i).transpose() * (2.0 / d.len() as f64);
            gb -= e * (2.0 / d.len() as f64);
        }
        assert!(ga.amax() < 1e-8 && gb.amax() < 1e-8);
    }

    #[test]
    fn nominal_cvar_examples() {
        let d = random_dist(2, 2, 2, 12);
        let opts = FitOptions::default();
        let cv = fit_nominal_cvar(&d, 1.0, &opts).unwrap();
        let ls = fit_nominal_mse(&d).unwrap();
        assert!((cv.optimal_value - ls.optimal_value).abs() < 1e-6);
        assert!(cv.cross_check_ok());

        let d = EmpiricalDistribution::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]], 1, 1).unwrap();
        for alpha in [0.5, 0.3] {
            let r = fit_nominal_cvar(&d, alpha, &opts).unwrap();
            assert!((r.optimal_value - 0.25).abs() < 1e-6);
            assert!((r.estimator.b()[0] - 0.5).abs() < 1e-4);
        }
    }

    #[test]
    fn robust_cross_check_and_mse_oracle() {
        let d = random_dist(3, 1, 2, 10);
        let opts = FitOptions::default();
        for r in [0.05, 0.3] {
            let fit = fit_dr_mse(&d, r, &opts).unwrap();
            assert!(fit.cross_check_ok(), "gap {}", fit.cross_check_gap);
            let closed = worst_case_mse_closed(&fit.estimator, &d, r).unwrap();
            assert!(
                (fit.optimal_value - closed).abs() < 1e-5,
                "{} vs {closed}",
                fit.optimal_value
            );
        }
    }

    #[test]
    fn tiny_radius_approaches_nominal() {
        let d = random_dist(4, 1, 2, 10);
        let opts = FitOptions::default();
        let robust = fit_dr_mse(&d, 1e-8, &opts).unwrap();
        let nominal = fit_nominal_mse(&d).unwrap();
        let diff = (robust.estimator.a() - nominal.estimator.a()).norm()
            + (robust.estimator.b() - nominal.estimator.b()).norm();
        assert!(diff < 1e-3, "{diff}");

        let robust = fit_dr_cvar(&d, &RiskSpec::new(0.3, 1e-8).unwrap(), &opts).unwrap();
        let nominal = fit_nominal_cvar(&d, 0.3, &opts).unwrap();
        assert!((robust.optimal_value - nominal.optimal_value).abs() < 1e-3);
    }

    #[test]
    fn zero_radius_routes_to_nominal() {
        let d = random_dist(5, 1, 1, 6);
        let r = fit_dr_cvar(&d, &RiskSpec::new(0.5, 0.0).unwrap(), &FitOptions::default()).unwrap();
        assert_eq!(r.method, Method::NominalCvar);
        let r = fit_dr_mse(&d, 0.0, &FitOptions::default()).unwrap();
        assert_eq!(r.method, Method::NominalMse);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{m}\""));
        }
    }
}
