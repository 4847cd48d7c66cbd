//! Post-solve recomputation of objective values, gap and residuals from the
//! returned iterate, using dense coefficient matrices rather than the packed
//! kernels the solver runs on.

use nalgebra::DMatrix;

use crate::problem::SdpProblem;
use crate::solver::{relative_gap, Residuals, SdpSolution};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub objective_value: f64,
    pub dual_objective_value: f64,
    pub duality_gap: f64,
    pub relative_gap: f64,
    pub residuals: Residuals,
}

pub fn recompute(problem: &SdpProblem, sol: &SdpSolution) -> Certificate {
    let mut pobj = 0.0;
    for (c, x) in problem.objective.iter().zip(&sol.x) {
        pobj += c * x;
    }

    let mut rp_sq = 0.0;
    let mut m0_sq = 0.0;
    let mut dobj = 0.0;
    let mut gap = 0.0;
    let mut adjoint = vec![0.0; problem.num_vars];
    for (j, block) in problem.blocks.iter().enumerate() {
        let n = block.size;
        let m0 = block.constant.to_dense(n);
        let mut value = m0.clone();
        for (&k, coeff) in &block.terms {
            let mk = coeff.to_dense(n);
            value += &mk * sol.x[k];
            adjoint[k] += (&mk * &sol.dual[j]).trace();
        }
        let rp: DMatrix<f64> = value - &sol.slack[j];
        rp_sq += rp.norm_squared();
        m0_sq += m0.norm_squared();
        dobj -= (&m0 * &sol.dual[j]).trace();
        gap += (&sol.slack[j] * &sol.dual[j]).trace();
    }
    let c_norm = problem.objective.iter().map(|c| c * c).sum::<f64>().sqrt();
    let rd_norm = problem
        .objective
        .iter()
        .zip(&adjoint)
        .map(|(c, a)| (c - a).powi(2))
        .sum::<f64>()
        .sqrt();
    Certificate {
        objective_value: pobj,
        dual_objective_value: dobj,
        duality_gap: gap,
        relative_gap: relative_gap(gap, pobj),
        residuals: Residuals {
            primal: rp_sq.sqrt() / (1.0 + m0_sq.sqrt()),
            dual: rd_norm / (1.0 + c_norm),
        },
    }
}

/// Smallest eigenvalue over all blocks of `M₀ + Σ xₖMₖ` at the returned `x`.
pub fn min_lmi_eigenvalue(problem: &SdpProblem, x: &[f64]) -> f64 {
    problem
        .evaluate(x)
        .into_iter()
        .map(|m| {
            let sym = (&m + m.transpose()) * 0.5;
            sym.symmetric_eigenvalues().min()
        })
        .fold(f64::INFINITY, f64::min)
}
