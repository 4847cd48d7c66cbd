//! Shared domain types and the map from affine estimators to quadratic
//! losses.
//!
//! Atoms are stored row-wise as `z = (x, y)`; the split between the latent
//! part `x ∈ ℝⁿ` and the observation `y ∈ ℝᵐ` is metadata on the
//! distribution.

use nalgebra::{DMatrix, DVector, DVectorView};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniformly weighted atoms in `ℝᵈ`, `d = n + m`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    atoms: DMatrix<f64>,
    n: usize,
    m: usize,
}

impl EmpiricalDistribution {
    pub fn new(atoms: DMatrix<f64>, n: usize, m: usize) -> Result<Self> {
        if atoms.nrows() == 0 {
            return Err(Error::EmptySample);
        }
        if n == 0 || atoms.ncols() != n + m {
            return Err(Error::Dimension(format!(
                "atoms have {} columns but n + m = {} + {}",
                atoms.ncols(),
                n,
                m
            )));
        }
        if atoms.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("atoms".into()));
        }
        Ok(Self { atoms, n, m })
    }

    pub fn from_rows(rows: &[Vec<f64>], n: usize, m: usize) -> Result<Self> {
        let d = n + m;
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::Dimension(format!(
                "row {bad} has {} entries, expected {d}",
                rows[bad].len()
            )));
        }
        let atoms = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        Self::new(atoms, n, m)
    }

    pub fn atoms(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.nrows() == 0
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.n + self.m
    }

    pub fn atom(&self, i: usize) -> DVector<f64> {
        self.atoms.row(i).transpose()
    }

    pub fn x_part(&self, i: usize) -> DVector<f64> {
        self.atoms.row(i).columns(0, self.n).transpose()
    }

    pub fn y_part(&self, i: usize) -> DVector<f64> {
        self.atoms.row(i).columns(self.n, self.m).transpose()
    }
}

/// `ψ(y) = A y + b` with `A ∈ ℝⁿˣᵐ`, `b ∈ ℝⁿ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "EstimatorDoc", try_from = "EstimatorDoc")]
pub struct AffineEstimator {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

/// Row-major JSON form of an estimator.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct EstimatorDoc {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl From<AffineEstimator> for EstimatorDoc {
    fn from(est: AffineEstimator) -> Self {
        let a = (0..est.a.nrows())
            .map(|i| est.a.row(i).iter().cloned().collect())
            .collect();
        EstimatorDoc {
            a,
            b: est.b.iter().cloned().collect(),
        }
    }
}

impl TryFrom<EstimatorDoc> for AffineEstimator {
    type Error = Error;

    fn try_from(doc: EstimatorDoc) -> Result<Self> {
        let n = doc.b.len();
        if doc.a.len() != n {
            return Err(Error::Dimension(format!(
                "A has {} rows but b has {n} entries",
                doc.a.len()
            )));
        }
        let m = doc.a.first().map_or(0, |r| r.len());
        if doc.a.iter().any(|r| r.len() != m) {
            return Err(Error::Dimension("ragged A".into()));
        }
        let a = DMatrix::from_fn(n, m, |i, j| doc.a[i][j]);
        AffineEstimator::new(a, DVector::from_vec(doc.b))
    }
}

impl AffineEstimator {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::Dimension(format!(
                "A is {}x{} but b has {} entries",
                a.nrows(),
                a.ncols(),
                b.len()
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("estimator".into()));
        }
        Ok(Self { a, b })
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            a: DMatrix::zeros(n, m),
            b: DVector::zeros(n),
        }
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.a.ncols()
    }

    pub fn predict(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.a * y + &self.b
    }

    /// `F = [−Iₙ, A]`, so that `x − Ay − b = −(F z + b)`.
    pub fn error_map(&self) -> DMatrix<f64> {
        let (n, m) = (self.n(), self.m());
        let mut f = DMatrix::zeros(n, n + m);
        for i in 0..n {
            f[(i, i)] = -1.0;
        }
        f.view_mut((0, n), (n, m)).copy_from(&self.a);
        f
    }

    pub fn check_dims(&self, dist: &EmpiricalDistribution) -> Result<()> {
        if self.n() != dist.n() || self.m() != dist.m() {
            return Err(Error::Dimension(format!(
                "estimator is {}x{} but distribution has n = {}, m = {}",
                self.n(),
                self.m(),
                dist.n(),
                dist.m()
            )));
        }
        Ok(())
    }

    /// Squared-error losses of every atom.
    pub fn losses(&self, dist: &EmpiricalDistribution) -> Result<Vec<f64>> {
        self.check_dims(dist)?;
        Ok((0..dist.len())
            .map(|i| squared_error(self, dist.atoms().row(i).transpose().as_view()))
            .collect())
    }
}

/// `z ↦ zᵀQz + 2qᵀz + c` with symmetric `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    q_mat: DMatrix<f64>,
    q_vec: DVector<f64>,
    offset: f64,
}

impl QuadraticForm {
    /// Symmetrizes `Q` as `(Q + Qᵀ)/2`.
    pub fn new(q_mat: DMatrix<f64>, q_vec: DVector<f64>, offset: f64) -> Result<Self> {
        let d = q_vec.len();
        if q_mat.nrows() != d || q_mat.ncols() != d {
            return Err(Error::Dimension(format!(
                "Q is {}x{} but q has {d} entries",
                q_mat.nrows(),
                q_mat.ncols()
            )));
        }
        if q_mat.iter().chain(q_vec.iter()).any(|v| !v.is_finite()) || !offset.is_finite() {
            return Err(Error::NonFinite("quadratic form".into()));
        }
        let q_mat = (&q_mat + q_mat.transpose()) * 0.5;
        Ok(Self { q_mat, q_vec, offset })
    }

    pub fn dim(&self) -> usize {
        self.q_vec.len()
    }

    pub fn q_mat(&self) -> &DMatrix<f64> {
        &self.q_mat
    }

    pub fn q_vec(&self) -> &DVector<f64> {
        &self.q_vec
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Same form with the constant term dropped.
    pub fn without_offset(&self) -> Self {
        Self {
            offset: 0.0,
            ..self.clone()
        }
    }

    pub fn with_offset(&self, offset: f64) -> Self {
        Self { offset, ..self.clone() }
    }

    pub fn eval(&self, z: &DVector<f64>) -> f64 {
        (z.transpose() * &self.q_mat * z)[(0, 0)] + 2.0 * self.q_vec.dot(z) + self.offset
    }
}

/// Risk level and Wasserstein radius; the ambiguity set itself is never
/// enumerated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskSpec {
    pub alpha: f64,
    pub radius: f64,
}

impl RiskSpec {
    pub fn new(alpha: f64, radius: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidAlpha(alpha));
        }
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::InvalidRadius {
                expected: "finite and non-negative",
                got: radius,
            });
        }
        Ok(Self { alpha, radius })
    }
}

/// `Q = FᵀF`, `q = Fᵀb`, `c = bᵀb` with `F = [−I, A]`.
pub fn affine_to_quadratic(est: &AffineEstimator) -> QuadraticForm {
    let f = est.error_map();
    let q_mat = f.transpose() * &f;
    let q_vec = f.transpose() * est.b();
    let offset = est.b().norm_squared();
    QuadraticForm::new(q_mat, q_vec, offset).expect("dimensions are consistent by construction")
}

fn squared_error(est: &AffineEstimator, z: DVectorView<'_, f64>) -> f64 {
    let n = est.n();
    let x = z.rows(0, n);
    let y = z.rows(n, est.m());
    (x - est.a() * y - est.b()).norm_squared()
}

/// `‖x − Ay − b‖²` at `z = (x, y)`.
pub fn loss_eval(est: &AffineEstimator, z: &DVector<f64>) -> Result<f64> {
    if z.len() != est.n() + est.m() {
        return Err(Error::Dimension(format!(
            "z has {} entries, expected {}",
            z.len(),
            est.n() + est.m()
        )));
    }
    Ok(squared_error(est, z.as_view()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar_est(a: f64, b: f64) -> AffineEstimator {
        AffineEstimator::new(DMatrix::from_element(1, 1, a), DVector::from_element(1, b)).unwrap()
    }

    #[test]
    fn quadratic_of_scalar_estimator() {
        let qf = affine_to_quadratic(&scalar_est(2.0, 3.0));
        assert_eq!(qf.q_mat(), &DMatrix::from_row_slice(2, 2, &[1.0, -2.0, -2.0, 4.0]));
        assert_eq!(qf.q_vec(), &DVector::from_vec(vec![-3.0, 6.0]));
        assert_eq!(qf.offset(), 9.0);
        let z = DVector::from_vec(vec![1.0, 1.0]);
        assert_eq!(qf.eval(&z), 16.0);
    }

    #[test]
    fn zero_estimator_gives_block_identity() {
        let est = AffineEstimator::zeros(2, 3);
        let qf = affine_to_quadratic(&est);
        let mut expected = DMatrix::zeros(5, 5);
        expected[(0, 0)] = 1.0;
        expected[(1, 1)] = 1.0;
        assert_eq!(qf.q_mat(), &expected);
        assert_eq!(qf.q_vec(), &DVector::zeros(5));
        assert_eq!(qf.offset(), 0.0);
    }

    #[test]
    fn loss_examples() {
        let z = |a: f64, b: f64| DVector::from_vec(vec![a, b]);
        assert_eq!(loss_eval(&scalar_est(0.0, 0.0), &z(3.0, 7.0)).unwrap(), 9.0);
        assert_eq!(loss_eval(&scalar_est(1.0, 0.0), &z(5.0, 5.0)).unwrap(), 0.0);
        assert_eq!(loss_eval(&scalar_est(2.0, 3.0), &z(1.0, 1.0)).unwrap(), 16.0);
    }

    #[test]
    fn dimension_errors() {
        let est = scalar_est(1.0, 0.0);
        assert!(loss_eval(&est, &DVector::zeros(3)).is_err());
        assert!(AffineEstimator::new(DMatrix::zeros(2, 1), DVector::zeros(1)).is_err());
        assert!(EmpiricalDistribution::new(DMatrix::zeros(2, 3), 1, 1).is_err());
        assert!(matches!(
            EmpiricalDistribution::new(DMatrix::zeros(0, 2), 1, 1),
            Err(Error::EmptySample)
        ));
        assert!(RiskSpec::new(0.0, 1.0).is_err());
        assert!(RiskSpec::new(1.5, 1.0).is_err());
        assert!(RiskSpec::new(0.5, -1.0).is_err());
    }

    #[test]
    fn quadratic_form_is_symmetrized() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        let qf = QuadraticForm::new(q, DVector::zeros(2), 0.0).unwrap();
        assert_eq!(qf.q_mat()[(0, 1)], 1.0);
        assert_eq!(qf.q_mat()[(1, 0)], 1.0);
    }

    #[test]
    fn estimator_json_round_trip() {
        let est = AffineEstimator::new(
            DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            DVector::from_vec(vec![0.5, -0.25]),
        )
        .unwrap();
        let json = serde_json::to_string(&est).unwrap();
        assert!(json.contains("[[1.0,2.0,3.0],[4.0,5.0,6.0]]"));
        let back: AffineEstimator = serde_json::from_str(&json).unwrap();
        assert_eq!(back, est);
    }

    fn est_and_point() -> impl Strategy<Value = (AffineEstimator, DVector<f64>)> {
        (1usize..4, 1usize..4).prop_flat_map(|(n, m)| {
            (
                prop::collection::vec(-5.0..5.0f64, n * m),
                prop::collection::vec(-5.0..5.0f64, n),
                prop::collection::vec(-5.0..5.0f64, n + m),
            )
                .prop_map(move |(a, b, z)| {
                    let est = AffineEstimator::new(DMatrix::from_row_slice(n, m, &a), DVector::from_vec(b)).unwrap();
                    (est, DVector::from_vec(z))
                })
        })
    }

    proptest! {
        #[test]
        fn quadratic_form_reproduces_loss((est, z) in est_and_point()) {
            let direct = loss_eval(&est, &z).unwrap();
            let via_form = affine_to_quadratic(&est).eval(&z);
            prop_assert!(direct >= 0.0);
            prop_assert!((direct - via_form).abs() <= 1e-12 * (1.0 + direct) * 100.0);
        }

        #[test]
        fn top_eigenvalue_is_one_plus_sigma_squared((est, _z) in est_and_point()) {
            let qf = affine_to_quadratic(&est);
            let eig = qf.q_mat().clone().symmetric_eigenvalues();
            let sigma = est.a().singular_values().max();
            prop_assert!(eig.min() >= -1e-10);
            prop_assert!((eig.max() - (1.0 + sigma * sigma)).abs() <= 1e-9 * (1.0 + sigma * sigma));
        }
    }
}
