//! Block-diagonal LMI problems in "inequality form":
//!
//! ```text
//! minimize    cᵀx
//! subject to  M₀ʲ + Σₖ xₖ Mₖʲ ⪰ 0      for every block j
//! ```
//!
//! Every coefficient matrix is symmetric and stored as packed lower-triangular
//! triplets, so a variable that touches only a handful of entries of a block
//! costs only those entries.

use std::collections::BTreeMap;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Errors raised when a problem is structurally malformed.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("objective has length {got}, expected {expected}")]
    ObjectiveLength { expected: usize, got: usize },
    #[error("block {block}: variable index {var} out of range (num_vars = {num_vars})")]
    VarOutOfRange { block: usize, var: usize, num_vars: usize },
    #[error("block {block}: entry ({row}, {col}) outside a {size}x{size} block")]
    EntryOutOfRange {
        block: usize,
        row: usize,
        col: usize,
        size: usize,
    },
    #[error("non-finite coefficient in {location}")]
    NonFinite { location: String },
    #[error("block {block} has size zero")]
    EmptyBlock { block: usize },
}

/// Symmetric matrix stored as lower-triangular `(row, col, value)` triplets
/// with `row >= col`. Repeated positions are summed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PackedSym {
    entries: Vec<(usize, usize, f64)>,
}

impl PackedSym {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `value` at `(row, col)` and, implicitly, at `(col, row)`.
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        let (r, c) = if row >= col { (row, col) } else { (col, row) };
        self.entries.push((r, c, value));
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Both triangles, i.e. every `(a, b, v)` with `M[a, b] += v`.
    pub fn full_entries(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(2 * self.entries.len());
        for &(r, c, v) in &self.entries {
            out.push((r, c, v));
            if r != c {
                out.push((c, r, v));
            }
        }
        out
    }

    pub fn add_scaled_to(&self, target: &mut DMatrix<f64>, scale: f64) {
        for &(r, c, v) in &self.entries {
            target[(r, c)] += scale * v;
            if r != c {
                target[(c, r)] += scale * v;
            }
        }
    }

    pub fn to_dense(&self, size: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(size, size);
        self.add_scaled_to(&mut m, 1.0);
        m
    }

    /// Trace inner product `⟨M, Y⟩` against a dense symmetric `Y`.
    pub fn dot_dense(&self, y: &DMatrix<f64>) -> f64 {
        self.entries
            .iter()
            .map(|&(r, c, v)| {
                if r == c {
                    v * y[(r, c)]
                } else {
                    v * (y[(r, c)] + y[(c, r)])
                }
            })
            .sum()
    }

    pub fn frobenius_norm(&self, size: usize) -> f64 {
        self.to_dense(size).norm()
    }
}

/// One LMI block `M₀ + Σ xₖ Mₖ ⪰ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiBlock {
    pub size: usize,
    pub constant: PackedSym,
    /// Coefficient matrices keyed by variable index.
    pub terms: BTreeMap<usize, PackedSym>,
}

impl LmiBlock {
    pub fn new(size: usize) -> Self {
        Self {
            size,
            constant: PackedSym::new(),
            terms: BTreeMap::new(),
        }
    }

    pub fn add_constant(&mut self, row: usize, col: usize, value: f64) {
        if value != 0.0 {
            self.constant.push(row, col, value);
        }
    }

    pub fn add_coeff(&mut self, var: usize, row: usize, col: usize, value: f64) {
        if value != 0.0 {
            self.terms.entry(var).or_default().push(row, col, value);
        }
    }

    /// Dense value of the affine map at `x`.
    pub fn evaluate(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant.to_dense(self.size);
        for (&k, coeff) in &self.terms {
            if x[k] != 0.0 {
                coeff.add_scaled_to(&mut m, x[k]);
            }
        }
        m
    }

    /// Dense value of the linear part `Σ xₖ Mₖ` only.
    pub fn evaluate_linear(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.size, self.size);
        for (&k, coeff) in &self.terms {
            if x[k] != 0.0 {
                coeff.add_scaled_to(&mut m, x[k]);
            }
        }
        m
    }
}

/// Named contiguous ranges of the decision vector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VarLayout {
    ranges: Vec<(String, Range<usize>)>,
}

impl VarLayout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a range of `len` variables after the last one and returns it.
    pub fn push(&mut self, name: impl Into<String>, len: usize) -> Range<usize> {
        let start = self.ranges.last().map_or(0, |(_, r)| r.end);
        let range = start..start + len;
        self.ranges.push((name.into(), range.clone()));
        range
    }

    pub fn get(&self, name: &str) -> Option<Range<usize>> {
        self.ranges.iter().find(|(n, _)| n == name).map(|(_, r)| r.clone())
    }

    pub fn len(&self) -> usize {
        self.ranges.last().map_or(0, |(_, r)| r.end)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Range<usize>)> {
        self.ranges.iter().map(|(n, r)| (n.as_str(), r.clone()))
    }
}

/// A block-diagonal SDP in LMI form.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub blocks: Vec<LmiBlock>,
    pub layout: VarLayout,
}

impl SdpProblem {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            objective: vec![0.0; num_vars],
            blocks: Vec::new(),
            layout: VarLayout::new(),
        }
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        if self.objective.len() != self.num_vars {
            return Err(ProblemError::ObjectiveLength {
                expected: self.num_vars,
                got: self.objective.len(),
            });
        }
        if let Some(k) = self.objective.iter().position(|v| !v.is_finite()) {
            return Err(ProblemError::NonFinite {
                location: format!("objective[{k}]"),
            });
        }
        for (j, block) in self.blocks.iter().enumerate() {
            if block.size == 0 {
                return Err(ProblemError::EmptyBlock { block: j });
            }
            let check = |m: &PackedSym, what: &str| -> Result<(), ProblemError> {
                for &(r, c, v) in m.entries() {
                    if r >= block.size || c >= block.size {
                        return Err(ProblemError::EntryOutOfRange {
                            block: j,
                            row: r,
                            col: c,
                            size: block.size,
                        });
                    }
                    if !v.is_finite() {
                        return Err(ProblemError::NonFinite {
                            location: format!("block {j} {what} ({r}, {c})"),
                        });
                    }
                }
                Ok(())
            };
            check(&block.constant, "constant")?;
            for (&k, coeff) in &block.terms {
                if k >= self.num_vars {
                    return Err(ProblemError::VarOutOfRange {
                        block: j,
                        var: k,
                        num_vars: self.num_vars,
                    });
                }
                check(coeff, &format!("var {k}"))?;
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// `M₀ʲ + Σ xₖ Mₖʲ` for every block.
    pub fn evaluate(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        self.blocks.iter().map(|b| b.evaluate(x)).collect()
    }

    /// Adjoint of the linear map: `(⟨Mₖ, Z⟩)ₖ` summed over blocks.
    pub fn adjoint(&self, z: &[DMatrix<f64>]) -> DVector<f64> {
        let mut out = DVector::zeros(self.num_vars);
        for (block, zj) in self.blocks.iter().zip(z) {
            for (&k, coeff) in &block.terms {
                out[k] += coeff.dot_dense(zj);
            }
        }
        out
    }

    /// Dual objective `-Σ ⟨M₀ʲ, Zʲ⟩`.
    pub fn dual_objective_value(&self, z: &[DMatrix<f64>]) -> f64 {
        -self
            .blocks
            .iter()
            .zip(z)
            .map(|(b, zj)| b.constant.dot_dense(zj))
            .sum::<f64>()
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.size).collect()
    }
}
