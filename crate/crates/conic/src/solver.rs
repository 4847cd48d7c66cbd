//! Infeasible-start primal-dual path-following method with Nesterov–Todd
//! scaling and a Mehrotra predictor-corrector step.
//!
//! With slack `S = M₀ + Σ xₖMₖ` and dual matrices `Z`, the dual problem is
//! `maximize -⟨M₀, Z⟩ s.t. ⟨Mₖ, Z⟩ = cₖ, Z ⪰ 0`. Each iteration eliminates
//! `ΔS` and `ΔZ` and solves the dense Schur system `H Δx = rhs` with
//! `Hₖₗ = Σⱼ ⟨Mₖʲ, Gⱼ Mₗʲ Gⱼ⟩`, `Gⱼ = Wⱼ⁻¹` the inverse NT scaling matrix.
//!
//! No homogeneous embedding: infeasibility and unboundedness are declared
//! from diverging iterates (see [`DIVERGENCE_NORM`]).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use thiserror::Error;

use crate::problem::{ProblemError, SdpProblem};

/// Iterates whose dual matrices (for infeasibility) or decision vector (for
/// unboundedness) exceed this norm are tested against the corresponding
/// normalized certificate.
pub const DIVERGENCE_NORM: f64 = 1e8;

/// Consecutive steps shorter than this count as a stall.
const TINY_STEP: f64 = 1e-10;
const MAX_TINY_STEPS: usize = 5;
const MAX_BACKTRACKS: usize = 30;
/// A run that has not reduced its merit by this factor in
/// [`MAX_NO_PROGRESS`] iterations stops with [`SolveStatus::Numerical`].
const PROGRESS_FACTOR: f64 = 0.5;
const MAX_NO_PROGRESS: usize = 15;
const REFINE_STEPS: usize = 2;
const CENTERING_RATIO: f64 = 10.0;
const CENTERING_SIGMA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Relative duality-gap tolerance.
    pub tol_gap: f64,
    /// Relative primal and dual residual tolerance.
    pub tol_feas: f64,
    pub max_iter: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol_gap: 1e-8,
            tol_feas: 1e-8,
            max_iter: 200,
            step_fraction: 0.99,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |what: &str| Err(SolveError::Settings(what.to_string()));
        if !(self.tol_gap > 0.0 && self.tol_gap.is_finite()) {
            return bad("tol_gap must be positive");
        }
        if !(self.tol_feas > 0.0 && self.tol_feas.is_finite()) {
            return bad("tol_feas must be positive");
        }
        if !(self.step_fraction > 0.0 && self.step_fraction < 1.0) {
            return bad("step_fraction must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("invalid problem: {0}")]
    Problem(#[from] ProblemError),
    #[error("invalid settings: {0}")]
    Settings(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolveStatus {
    Optimal,
    /// The LMI system admits no feasible point.
    Infeasible,
    /// The objective is unbounded below on the feasible set.
    Unbounded,
    MaxIter,
    Numerical,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::Numerical => "numerical",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Residuals {
    /// `‖M₀ + Σ xₖMₖ − S‖_F / (1 + ‖M₀‖_F)`
    pub primal: f64,
    /// `‖c − A*(Z)‖₂ / (1 + ‖c‖₂)`
    pub dual: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective_value: f64,
    pub dual_objective_value: f64,
    /// Absolute complementarity gap `Σ ⟨Sʲ, Zʲ⟩`.
    pub duality_gap: f64,
    /// `|gap| / (1 + |pobj|)`
    pub relative_gap: f64,
    pub residuals: Residuals,
    pub slack: Vec<DMatrix<f64>>,
    pub dual: Vec<DMatrix<f64>>,
    pub iterations: usize,
    pub message: Option<String>,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Nesterov–Todd scaling of one block: `W = R Rᵀ` with
/// `R⁻¹ S R⁻ᵀ = Rᵀ Z R = diag(λ)`.
struct Scaling {
    lambda: DVector<f64>,
    #[cfg_attr(not(test), allow(dead_code))]
    r: DMatrix<f64>,
    /// `R⁻ᵀ`
    rti: DMatrix<f64>,
    /// `W⁻¹ = R⁻ᵀ R⁻¹`
    g: DMatrix<f64>,
}

fn nt_scaling(s: &DMatrix<f64>, z: &DMatrix<f64>) -> Option<Scaling> {
    let ls = Cholesky::new(s.clone())?.l();
    let lz = Cholesky::new(z.clone())?.l();
    let svd = (lz.transpose() * &ls).svd(true, true);
    let u = svd.u?;
    let v = svd.v_t?.transpose();
    let lambda = svd.singular_values;
    if lambda.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return None;
    }
    let inv_sqrt = DMatrix::from_diagonal(&lambda.map(|l| 1.0 / l.sqrt()));
    let r = ls * v * &inv_sqrt;
    let rti = lz * u * &inv_sqrt;
    let g = &rti * rti.transpose();
    Some(Scaling { lambda, r, rti, g })
}

pub(crate) fn relative_gap(gap: f64, pobj: f64) -> f64 {
    gap.abs() / (1.0 + pobj.abs())
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

/// Largest `α` with `diag(λ) + α X ⪰ 0` (infinite when no boundary is hit).
fn max_step(lambda: &DVector<f64>, x: &DMatrix<f64>) -> f64 {
    let n = lambda.len();
    let mut m = x.clone();
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] /= (lambda[i] * lambda[j]).sqrt();
        }
    }
    symmetrize(&mut m);
    let min_eig = m.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
    if min_eig < 0.0 {
        -1.0 / min_eig
    } else {
        f64::INFINITY
    }
}

/// Solves `diag(λ) ∘ X = rhs` for symmetric `X`, with `A ∘ B = (AB + BA)/2`.
fn jordan_divide(rhs: &DMatrix<f64>, lambda: &DVector<f64>) -> DMatrix<f64> {
    let n = lambda.len();
    DMatrix::from_fn(n, n, |i, j| 2.0 * rhs[(i, j)] / (lambda[i] + lambda[j]))
}

/// Per-block coefficient lists with both triangles expanded.
struct BlockTerms {
    vars: Vec<usize>,
    entries: Vec<Vec<(usize, usize, f64)>>,
}

fn accumulate_schur(h: &mut DMatrix<f64>, terms: &BlockTerms, g: &DMatrix<f64>) {
    let n = g.nrows();
    let gs = g.as_slice();
    for (p, ep) in terms.entries.iter().enumerate() {
        let k = terms.vars[p];
        for (q, eq) in terms.entries.iter().enumerate().skip(p) {
            let l = terms.vars[q];
            let mut acc = 0.0;
            for &(a, b, v) in ep {
                for &(c, e, w) in eq {
                    // column-major: g[(i, j)] = gs[i + j n]
                    acc += v * w * gs[b + c * n] * gs[e + a * n];
                }
            }
            h[(k, l)] += acc;
            if k != l {
                h[(l, k)] += acc;
            }
        }
    }
}

/// Cholesky factor of the Jacobi-equilibrated Schur matrix `DHD`,
/// `D = diag(Hₖₖ^{-1/2})`. Diagonal entries can span many orders of
/// magnitude near the optimum; regularization is applied after scaling so
/// that it perturbs every row by the same relative amount.
struct SchurFactor {
    chol: Cholesky<f64, Dyn>,
    scale: DVector<f64>,
}

impl SchurFactor {
    fn new(mut h: DMatrix<f64>) -> Option<Self> {
        let k = h.nrows();
        let scale = DVector::from_fn(k, |i, _| {
            let d = h[(i, i)];
            if d > 0.0 && d.is_finite() {
                1.0 / d.sqrt()
            } else {
                1.0
            }
        });
        for j in 0..k {
            for i in 0..k {
                h[(i, j)] *= scale[i] * scale[j];
            }
        }
        if let Some(chol) = Cholesky::new(h.clone()) {
            return Some(Self { chol, scale });
        }
        let mut reg = 1e-14;
        for _ in 0..6 {
            let mut hr = h.clone();
            for i in 0..k {
                hr[(i, i)] += reg;
            }
            if let Some(chol) = Cholesky::new(hr) {
                return Some(Self { chol, scale });
            }
            reg *= 100.0;
        }
        None
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let scaled = rhs.component_mul(&self.scale);
        self.chol.solve(&scaled).component_mul(&self.scale)
    }
}

struct Direction {
    dx: DVector<f64>,
    ds: Vec<DMatrix<f64>>,
    dz: Vec<DMatrix<f64>>,
    /// Scaled directions `R⁻¹ ΔS R⁻ᵀ` and `Rᵀ ΔZ R`.
    ds_scaled: Vec<DMatrix<f64>>,
    dz_scaled: Vec<DMatrix<f64>>,
}

#[derive(Clone)]
struct Iterate {
    x: DVector<f64>,
    s: Vec<DMatrix<f64>>,
    z: Vec<DMatrix<f64>>,
}

#[derive(Clone)]
struct Measures {
    pobj: f64,
    dobj: f64,
    gap: f64,
    relgap: f64,
    residuals: Residuals,
    rp: Vec<DMatrix<f64>>,
    rd: DVector<f64>,
}

struct Solver<'a> {
    problem: &'a SdpProblem,
    settings: SolverSettings,
    terms: Vec<BlockTerms>,
    c: DVector<f64>,
    m0_norm: f64,
    c_norm: f64,
    nu: f64,
    /// Variables that appear in no block.
    free_vars: Vec<usize>,
}

impl<'a> Solver<'a> {
    fn new(problem: &'a SdpProblem, settings: SolverSettings) -> Self {
        let mut used = vec![false; problem.num_vars];
        let terms = problem
            .blocks
            .iter()
            .map(|b| {
                let mut vars = Vec::with_capacity(b.terms.len());
                let mut entries = Vec::with_capacity(b.terms.len());
                for (&k, coeff) in &b.terms {
                    if coeff.is_empty() {
                        continue;
                    }
                    used[k] = true;
                    vars.push(k);
                    entries.push(coeff.full_entries());
                }
                BlockTerms { vars, entries }
            })
            .collect();
        let c = DVector::from_column_slice(&problem.objective);
        let m0_norm = problem
            .blocks
            .iter()
            .map(|b| b.constant.frobenius_norm(b.size).powi(2))
            .sum::<f64>()
            .sqrt();
        let c_norm = c.norm();
        let nu = problem.blocks.iter().map(|b| b.size as f64).sum();
        let free_vars = (0..problem.num_vars).filter(|&k| !used[k]).collect();
        Self {
            problem,
            settings,
            terms,
            c,
            m0_norm,
            c_norm,
            nu,
            free_vars,
        }
    }

    fn initial_point(&self) -> Iterate {
        let mut s = Vec::new();
        let mut z = Vec::new();
        for block in &self.problem.blocks {
            let n = block.size as f64;
            let mut max_coeff_norm: f64 = 0.0;
            let mut max_ratio: f64 = 0.0;
            for (&k, coeff) in &block.terms {
                let norm = coeff.frobenius_norm(block.size);
                max_coeff_norm = max_coeff_norm.max(norm);
                max_ratio = max_ratio.max((1.0 + self.c[k].abs()) / (1.0 + norm));
            }
            let zeta = 10f64.max(n.sqrt()).max(n * max_ratio);
            let eta = 10f64
                .max(n.sqrt())
                .max(max_coeff_norm)
                .max(block.constant.frobenius_norm(block.size));
            s.push(DMatrix::identity(block.size, block.size) * eta);
            z.push(DMatrix::identity(block.size, block.size) * zeta);
        }
        Iterate {
            x: DVector::zeros(self.problem.num_vars),
            s,
            z,
        }
    }

    fn measure(&self, it: &Iterate) -> Measures {
        let x = it.x.as_slice();
        let rp: Vec<DMatrix<f64>> = self
            .problem
            .blocks
            .iter()
            .zip(&it.s)
            .map(|(b, s)| b.evaluate(x) - s)
            .collect();
        let rd = &self.c - self.problem.adjoint(&it.z);
        let pobj = self.problem.objective_value(x);
        let dobj = self.problem.dual_objective_value(&it.z);
        let gap: f64 = it.s.iter().zip(&it.z).map(|(s, z)| inner(s, z)).sum();
        let relgap = relative_gap(gap, pobj);
        let rp_norm = rp.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt();
        let residuals = Residuals {
            primal: rp_norm / (1.0 + self.m0_norm),
            dual: rd.norm() / (1.0 + self.c_norm),
        };
        Measures {
            pobj,
            dobj,
            gap,
            relgap,
            residuals,
            rp,
            rd,
        }
    }

    /// Largest of the residuals and gap, each relative to its tolerance.
    fn merit(&self, m: &Measures) -> f64 {
        (m.residuals.primal / self.settings.tol_feas)
            .max(m.residuals.dual / self.settings.tol_feas)
            .max(m.relgap / self.settings.tol_gap)
    }

    fn converged(&self, m: &Measures) -> bool {
        m.residuals.primal <= self.settings.tol_feas
            && m.residuals.dual <= self.settings.tol_feas
            && m.relgap <= self.settings.tol_gap
    }

    /// Normalized Farkas-type certificate `Z / dobj` with `A*(Z) ≈ 0`.
    fn infeasibility_certificate(&self, it: &Iterate, m: &Measures) -> bool {
        let z_norm = it.z.iter().map(|z| z.norm_squared()).sum::<f64>().sqrt();
        if z_norm < DIVERGENCE_NORM || m.dobj <= 0.0 {
            return false;
        }
        let az = self.problem.adjoint(&it.z);
        az.norm() <= self.settings.tol_feas * m.dobj
    }

    /// Normalized recession direction `x / (-cᵀx)` with `Σ xₖMₖ ⪰ 0`.
    fn unboundedness_certificate(&self, it: &Iterate, m: &Measures) -> bool {
        if it.x.amax() < DIVERGENCE_NORM || m.pobj >= 0.0 {
            return false;
        }
        let scale = -m.pobj;
        self.problem.blocks.iter().all(|b| {
            let mut lin = b.evaluate_linear(it.x.as_slice()) / scale;
            symmetrize(&mut lin);
            let min_eig = SymmetricEigen::new(lin)
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            min_eig >= -self.settings.tol_feas
        })
    }

    fn schur_matrix(&self, scalings: &[Scaling]) -> Option<SchurFactor> {
        let k = self.problem.num_vars;
        let mut h = DMatrix::zeros(k, k);
        for (terms, sc) in self.terms.iter().zip(scalings) {
            accumulate_schur(&mut h, terms, &sc.g);
        }
        for &v in &self.free_vars {
            h[(v, v)] = 1.0;
        }
        SchurFactor::new(h)
    }

    /// Newton direction for scaled complementarity right-hand sides `d`
    /// (already divided by λ in the Jordan sense).
    fn direction(&self, scalings: &[Scaling], chol: &SchurFactor, m: &Measures, d: &[DMatrix<f64>]) -> Direction {
        let k = self.problem.num_vars;
        let mut rhs = -m.rd.clone();
        for &v in &self.free_vars {
            rhs[v] = 0.0;
        }
        for (((block, sc), dj), rp) in self.problem.blocks.iter().zip(scalings).zip(d).zip(&m.rp) {
            let t = &sc.rti * dj * sc.rti.transpose() - &sc.g * rp * &sc.g;
            for (&var, coeff) in &block.terms {
                rhs[var] += coeff.dot_dense(&t);
            }
        }
        let mut dx = chol.solve(&rhs);
        debug_assert_eq!(dx.len(), k);
        // Iterative refinement against the operator applied matrix-wise,
        // which is more accurate than the assembled `H` when the scalings
        // are badly conditioned.
        for _ in 0..REFINE_STEPS {
            let res = &rhs - self.apply_schur(scalings, &dx);
            if !(res.amax() > 0.0) {
                break;
            }
            dx += chol.solve(&res);
        }

        let mut ds = Vec::with_capacity(d.len());
        let mut dz = Vec::with_capacity(d.len());
        let mut ds_scaled = Vec::with_capacity(d.len());
        let mut dz_scaled = Vec::with_capacity(d.len());
        for (((block, sc), dj), rp) in self.problem.blocks.iter().zip(scalings).zip(d).zip(&m.rp) {
            let mut dsj = block.evaluate_linear(dx.as_slice()) + rp;
            symmetrize(&mut dsj);
            let mut dss = sc.rti.transpose() * &dsj * &sc.rti;
            symmetrize(&mut dss);
            let mut dzs = dj - &dss;
            symmetrize(&mut dzs);
            let mut dzj = &sc.rti * &dzs * sc.rti.transpose();
            symmetrize(&mut dzj);
            ds.push(dsj);
            dz.push(dzj);
            ds_scaled.push(dss);
            dz_scaled.push(dzs);
        }
        Direction {
            dx,
            ds,
            dz,
            ds_scaled,
            dz_scaled,
        }
    }

    /// `Σⱼ A*(Gⱼ (Σₖ xₖMₖʲ) Gⱼ)`, plus identity rows for free variables.
    fn apply_schur(&self, scalings: &[Scaling], x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.problem.num_vars);
        for (block, sc) in self.problem.blocks.iter().zip(scalings) {
            let lin = block.evaluate_linear(x.as_slice());
            let t = &sc.g * lin * &sc.g;
            for (&var, coeff) in &block.terms {
                out[var] += coeff.dot_dense(&t);
            }
        }
        for &v in &self.free_vars {
            out[v] = x[v];
        }
        out
    }

    fn step_bound(&self, scalings: &[Scaling], dir: &Direction) -> f64 {
        scalings
            .iter()
            .zip(dir.ds_scaled.iter().zip(&dir.dz_scaled))
            .map(|(sc, (ds, dz))| max_step(&sc.lambda, ds).min(max_step(&sc.lambda, dz)))
            .fold(f64::INFINITY, f64::min)
    }

    fn solution(
        &self,
        it: Iterate,
        m: &Measures,
        status: SolveStatus,
        iterations: usize,
        message: Option<String>,
    ) -> SdpSolution {
        SdpSolution {
            status,
            x: it.x.as_slice().to_vec(),
            objective_value: m.pobj,
            dual_objective_value: m.dobj,
            duality_gap: m.gap,
            relative_gap: m.relgap,
            residuals: m.residuals,
            slack: it.s,
            dual: it.z,
            iterations,
            message,
        }
    }

    fn run(&self) -> SdpSolution {
        let mut it = self.initial_point();
        let mut tiny_steps = 0;

        for &v in &self.free_vars {
            if self.c[v] != 0.0 {
                let m = self.measure(&it);
                return self.solution(
                    it,
                    &m,
                    SolveStatus::Unbounded,
                    0,
                    Some(format!("variable {v} appears in no block but has nonzero cost")),
                );
            }
        }

        let mut best: Option<(f64, Iterate, Measures, usize)> = None;
        let mut best_history: Vec<f64> = Vec::new();
        // Ends an unsuccessful run on the best iterate seen so far.
        let give_up = |best: Option<(f64, Iterate, Measures, usize)>,
                       it: Iterate,
                       m: Measures,
                       iter: usize,
                       status,
                       msg: String| {
            match best {
                Some((_, bi, bm, biter)) => self.solution(
                    bi,
                    &bm,
                    status,
                    biter,
                    Some(format!("{msg}; returning iterate {biter}")),
                ),
                None => self.solution(it, &m, status, iter, Some(msg)),
            }
        };

        for iter in 0..=self.settings.max_iter {
            let m = self.measure(&it);
            log::trace!(
                "iter {iter}: pobj {:.10e} dobj {:.10e} gap {:.2e} pres {:.2e} dres {:.2e}",
                m.pobj,
                m.dobj,
                m.gap,
                m.residuals.primal,
                m.residuals.dual
            );
            if self.converged(&m) {
                return self.solution(it, &m, SolveStatus::Optimal, iter, None);
            }
            if self.infeasibility_certificate(&it, &m) {
                return self.solution(it, &m, SolveStatus::Infeasible, iter, None);
            }
            if self.unboundedness_certificate(&it, &m) {
                return self.solution(it, &m, SolveStatus::Unbounded, iter, None);
            }
            let merit = self.merit(&m);
            if best.as_ref().is_none_or(|b| merit < b.0) {
                best = Some((merit, it.clone(), m.clone(), iter));
            }
            let best_merit = best.as_ref().map_or(merit, |b| b.0);
            best_history.push(best_merit);
            let stalled =
                iter >= MAX_NO_PROGRESS && best_merit > PROGRESS_FACTOR * best_history[iter - MAX_NO_PROGRESS];
            if iter == self.settings.max_iter {
                return give_up(
                    best,
                    it,
                    m,
                    iter,
                    SolveStatus::MaxIter,
                    "iteration limit reached".into(),
                );
            }
            if stalled {
                return give_up(
                    best,
                    it,
                    m,
                    iter,
                    SolveStatus::Numerical,
                    format!("no progress in {MAX_NO_PROGRESS} iterations"),
                );
            }

            let scalings: Option<Vec<Scaling>> = it.s.iter().zip(&it.z).map(|(s, z)| nt_scaling(s, z)).collect();
            let Some(scalings) = scalings else {
                return give_up(
                    best,
                    it,
                    m,
                    iter,
                    SolveStatus::Numerical,
                    "iterate left the cone interior".into(),
                );
            };
            let Some(chol) = self.schur_matrix(&scalings) else {
                return give_up(
                    best,
                    it,
                    m,
                    iter,
                    SolveStatus::Numerical,
                    "Schur complement factorization failed".into(),
                );
            };
            let mu = m.gap / self.nu;

            // predictor: target λ ∘ (ΔS̃ + ΔZ̃) = −λ ∘ λ
            let d_aff: Vec<DMatrix<f64>> = scalings
                .iter()
                .map(|sc| DMatrix::from_diagonal(&(-&sc.lambda)))
                .collect();
            let aff = self.direction(&scalings, &chol, &m, &d_aff);
            let alpha_aff = self.step_bound(&scalings, &aff).min(1.0);
            let gap_aff: f64 = scalings
                .iter()
                .zip(aff.ds_scaled.iter().zip(&aff.dz_scaled))
                .map(|(sc, (ds, dz))| {
                    let lam = DMatrix::from_diagonal(&sc.lambda);
                    inner(&(&lam + ds * alpha_aff), &(&lam + dz * alpha_aff))
                })
                .sum();
            let mut sigma = (gap_aff / m.gap).clamp(0.0, 1.0).powi(3);
            // Keep the gap from collapsing ahead of the infeasibilities.
            let infeas = m.residuals.primal.max(m.residuals.dual);
            if infeas > self.settings.tol_feas && infeas > CENTERING_RATIO * m.relgap {
                sigma = sigma.max(CENTERING_SIGMA);
            }

            // corrector: λ ∘ (ΔS̃ + ΔZ̃) = σμI − λ ∘ λ − ΔS̃ₐ ∘ ΔZ̃ₐ
            let d_cc: Vec<DMatrix<f64>> = scalings
                .iter()
                .zip(aff.ds_scaled.iter().zip(&aff.dz_scaled))
                .map(|(sc, (ds, dz))| {
                    let n = sc.lambda.len();
                    let prod = ds * dz;
                    let mut rhs = (&prod + prod.transpose()) * -0.5;
                    for i in 0..n {
                        rhs[(i, i)] += sigma * mu - sc.lambda[i] * sc.lambda[i];
                    }
                    jordan_divide(&rhs, &sc.lambda)
                })
                .collect();
            let dir = self.direction(&scalings, &chol, &m, &d_cc);
            let alpha = (self.settings.step_fraction * self.step_bound(&scalings, &dir)).min(1.0);

            if !(alpha > TINY_STEP) {
                tiny_steps += 1;
                if tiny_steps >= MAX_TINY_STEPS || !alpha.is_finite() {
                    return give_up(
                        best,
                        it,
                        m,
                        iter,
                        SolveStatus::Numerical,
                        format!("stalled: step length {alpha:e}"),
                    );
                }
            } else {
                tiny_steps = 0;
            }

            // Rounding can push an iterate this close to the boundary out of
            // the cone; shorten the step until both sides still factor.
            let mut alpha = alpha;
            let mut next = None;
            for _ in 0..MAX_BACKTRACKS {
                let cand = advance(&it, &dir, alpha);
                let inside = cand.s.iter().chain(&cand.z).all(|m| Cholesky::new(m.clone()).is_some());
                if inside {
                    next = Some(cand);
                    break;
                }
                alpha *= 0.5;
            }
            let Some(next) = next else {
                return give_up(
                    best,
                    it,
                    m,
                    iter,
                    SolveStatus::Numerical,
                    "iterate left the cone interior".into(),
                );
            };
            it = next;
        }
        unreachable!("loop returns at max_iter")
    }
}

fn advance(it: &Iterate, dir: &Direction, alpha: f64) -> Iterate {
    let step = |cur: &[DMatrix<f64>], d: &[DMatrix<f64>]| -> Vec<DMatrix<f64>> {
        cur.iter()
            .zip(d)
            .map(|(a, da)| {
                let mut v = a + da * alpha;
                symmetrize(&mut v);
                v
            })
            .collect()
    };
    Iterate {
        x: &it.x + &dir.dx * alpha,
        s: step(&it.s, &dir.ds),
        z: step(&it.z, &dir.dz),
    }
}

/// Solves a block-diagonal LMI problem.
pub fn solve_sdp(problem: &SdpProblem, settings: &SolverSettings) -> Result<SdpSolution, SolveError> {
    problem.validate()?;
    settings.validate()?;
    Ok(Solver::new(problem, *settings).run())
}
