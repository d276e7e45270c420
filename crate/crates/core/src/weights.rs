//! Consensus weight matrices: construction, the doubly-stochastic /
//! spectral-gap check, powers and difference matrices `W^t − J`.

use serde::Serialize;
use thiserror::Error;

use crate::linalg::{symmetric_eigenvalues, LinalgError, Matrix};
use crate::scalar::Scalar;
use crate::topology::Topology;

/// Row/column sum tolerance for double stochasticity (f64).
pub const STOCHASTIC_TOLERANCE: f64 = 1e-12;
/// Allowed disagreement between `W^t − J` and `(W − J)^t` (f64).
pub const DELTA_IDENTITY_TOLERANCE: f64 = 1e-10;
/// Below this a second singular value is treated as exactly zero.
const ZERO_SIGMA_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("equal-weight construction needs at least 2 sensors")]
    TooFewSensors,
    #[error("Laplacian has algebraic connectivity {0:e}; graph looks disconnected")]
    Disconnected(f64),
    #[error("weight matrix rejected: {0}")]
    Condition(String),
    #[error("W^{t} - J and (W - J)^{t} disagree by {discrepancy:e}")]
    DeltaIdentity { t: u64, discrepancy: f64 },
}

/// Outcome of checking `W·1 = 1`, `1ᵀW = 1ᵀ`, `0 < σ₂(W) < 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralReport<T> {
    /// Eigenvalues of `W`, descending; empty when `W` is not symmetric.
    pub eigenvalues: Vec<T>,
    /// Singular values of `W`, descending.
    pub singular_values: Vec<T>,
    pub sigma1: T,
    pub sigma2: T,
    pub symmetric: bool,
    pub max_row_sum_error: T,
    pub max_col_sum_error: T,
    /// The strict condition, `0 < σ₂` included.
    pub condition1_ok: bool,
    /// Stochastic and `σ₂ < 1`; the `σ₂ = 0` boundary is usable.
    pub usable: bool,
    pub warnings: Vec<String>,
}

fn sum_tolerance<T: Scalar>(n: usize) -> T {
    T::of(STOCHASTIC_TOLERANCE).max(T::epsilon() * T::of_usize(4 * n.max(1)))
}

fn sort_desc<T: Scalar>(v: &mut [T]) {
    v.sort_by(|a, b| b.partial_cmp(a).expect("finite values"));
}

/// Checks the consensus condition on an arbitrary square matrix. Failures
/// land in the report; only a non-square or non-finite input is an error.
pub fn validate_condition1<T: Scalar>(w: &Matrix<T>) -> Result<SpectralReport<T>, WeightError> {
    if !w.is_square() {
        return Err(LinalgError::NotSquare { rows: w.rows(), cols: w.cols() }.into());
    }
    let n = w.rows();
    let max_row_sum_error = w.row_sums().iter().fold(T::zero(), |m, &s| m.max((s - T::one()).abs()));
    let max_col_sum_error = w.col_sums().iter().fold(T::zero(), |m, &s| m.max((s - T::one()).abs()));
    let symmetric = w.asymmetry() <= T::of(crate::linalg::SYMMETRY_TOLERANCE);

    let (eigenvalues, mut singular_values) = if symmetric {
        let eig = symmetric_eigenvalues(w)?;
        let sv: Vec<T> = eig.iter().map(|x| x.abs()).collect();
        (eig, sv)
    } else {
        let gram = &w.transpose() * w;
        let sv = symmetric_eigenvalues(&gram)?
            .into_iter()
            .map(|x| x.max(T::zero()).sqrt())
            .collect();
        (Vec::new(), sv)
    };
    sort_desc(&mut singular_values);
    let sigma1 = singular_values.first().copied().unwrap_or_else(T::zero);
    let sigma2 = singular_values.get(1).copied().unwrap_or_else(T::zero);

    let tol = sum_tolerance::<T>(n);
    let mut warnings = Vec::new();
    let stochastic = max_row_sum_error <= tol && max_col_sum_error <= tol;
    if max_row_sum_error > tol {
        warnings.push(format!("row sums deviate from 1 by {:e}", max_row_sum_error.as_f64()));
    }
    if max_col_sum_error > tol {
        warnings.push(format!("column sums deviate from 1 by {:e}", max_col_sum_error.as_f64()));
    }
    let zero_tol = T::of(ZERO_SIGMA_TOLERANCE).max(T::epsilon().sqrt());
    let below_one = sigma2 < T::one() - tol;
    if !below_one {
        warnings.push(format!("sigma2 = {sigma2} is not below 1; consensus does not contract"));
    }
    let is_zero = sigma2 <= zero_tol;
    if is_zero {
        warnings.push("sigma2 = 0: W averages in one step (boundary of the consensus condition)".into());
    }
    Ok(SpectralReport {
        eigenvalues,
        singular_values,
        sigma1,
        sigma2: if is_zero { T::zero() } else { sigma2 },
        symmetric,
        max_row_sum_error,
        max_col_sum_error,
        condition1_ok: stochastic && below_one && !is_zero,
        usable: stochastic && below_one,
        warnings,
    })
}

/// A validated consensus weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix<T> {
    w: Matrix<T>,
    sigma2: T,
    delta: Option<T>,
    report: SpectralReport<T>,
}

impl<T: Scalar> WeightMatrix<T> {
    /// `W = I − δL` with `δ = 2 / (λ₁(L) + λ_{K−1}(L))`, the step that
    /// minimizes `σ₂(W)`.
    pub fn equal_weight(topology: &Topology) -> Result<Self, WeightError> {
        let n = topology.n_sensors();
        if n < 2 {
            return Err(WeightError::TooFewSensors);
        }
        let laplacian = topology.laplacian::<T>();
        let eig = symmetric_eigenvalues(&laplacian)?;
        let largest = eig[0];
        let connectivity = eig[n - 2];
        if connectivity <= T::of(1e-12) {
            return Err(WeightError::Disconnected(connectivity.as_f64()));
        }
        let delta = T::of(2.0) / (largest + connectivity);
        let w = &Matrix::identity(n) - &laplacian.scale(delta);
        let sigma2 = (T::one() - delta * connectivity).max(delta * largest - T::one());
        let report = validate_condition1(&w)?;
        if !report.usable {
            return Err(WeightError::Condition(report.warnings.join("; ")));
        }
        let sigma2 = if report.sigma2 == T::zero() { T::zero() } else { sigma2 };
        Ok(Self { w, sigma2, delta: Some(delta), report })
    }

    /// Wraps a user-supplied matrix, rejecting it unless it is doubly
    /// stochastic with `σ₂ < 1`.
    pub fn from_matrix(w: Matrix<T>) -> Result<Self, WeightError> {
        let report = validate_condition1(&w)?;
        if !report.usable {
            return Err(WeightError::Condition(report.warnings.join("; ")));
        }
        Ok(Self { sigma2: report.sigma2, w, delta: None, report })
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.w
    }

    pub fn n_sensors(&self) -> usize {
        self.w.rows()
    }

    pub fn sigma2(&self) -> T {
        self.sigma2
    }

    pub fn delta(&self) -> Option<T> {
        self.delta
    }

    pub fn report(&self) -> &SpectralReport<T> {
        &self.report
    }

    pub fn power(&self, t: u64) -> Matrix<T> {
        self.w.pow(t)
    }

    /// `Δ_t = W^t − J`, cross-checked against `(W − J)^t`.
    pub fn delta_matrix(&self, t: u64) -> Result<Matrix<T>, WeightError> {
        let n = self.n_sensors();
        let j = Matrix::averaging(n);
        let direct = &self.w.pow(t) - &j;
        let via_difference = (&self.w - &j).pow(t);
        let discrepancy = direct.max_abs_diff(&via_difference);
        let tol = T::of(DELTA_IDENTITY_TOLERANCE).max(T::epsilon() * T::of(1e3));
        // t = 0 is the one case the identity does not cover: I − J vs I
        if t > 0 && discrepancy > tol {
            return Err(WeightError::DeltaIdentity { t, discrepancy: discrepancy.as_f64() });
        }
        Ok(direct)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_12_2_sigma2() {
        let w = WeightMatrix::<f64>::equal_weight(&Topology::ring(12, 2).unwrap()).unwrap();
        assert!((w.sigma2() - 0.6511).abs() < 5e-4);
        assert!((w.sigma2() - w.report().sigma2).abs() < 1e-10);
        assert!(w.report().condition1_ok);
        assert!((w.report().sigma1 - 1.0).abs() < 1e-10);
        assert_eq!(w.report().eigenvalues.len(), 12);
    }

    #[test]
    fn complete_graph_is_averaging() {
        let w = WeightMatrix::<f64>::equal_weight(&Topology::complete(5).unwrap()).unwrap();
        assert!((w.delta().unwrap() - 0.2).abs() < 1e-12);
        assert!(w.matrix().max_abs_diff(&Matrix::averaging(5)) < 1e-12);
        assert_eq!(w.sigma2(), 0.0);
        assert!(!w.report().condition1_ok);
        assert!(w.report().usable);
        assert!(!w.report().warnings.is_empty());
    }

    #[test]
    fn identity_fails() {
        let r = validate_condition1(&Matrix::<f64>::identity(4)).unwrap();
        assert!(!r.condition1_ok);
        assert!(!r.usable);
        assert_eq!(r.sigma2, 1.0);
        assert!(WeightMatrix::from_matrix(Matrix::<f64>::identity(4)).is_err());
    }

    #[test]
    fn averaging_matrix_boundary() {
        let r = validate_condition1(&Matrix::<f64>::averaging(6)).unwrap();
        assert_eq!(r.sigma2, 0.0);
        assert!(!r.condition1_ok);
        assert!(r.usable);
    }

    #[test]
    fn non_stochastic_rejected() {
        let m = Matrix::from_rows(&[vec![0.5, 0.4], vec![0.5, 0.5]]).unwrap();
        let r = validate_condition1(&m).unwrap();
        assert!(!r.usable);
        assert!(r.warnings.iter().any(|w| w.contains("row sums")));
    }

    #[test]
    fn asymmetric_doubly_stochastic() {
        // cyclic permutation mixed with identity: doubly stochastic, not symmetric
        let m = Matrix::from_rows(&[
            vec![0.5, 0.5, 0.0],
            vec![0.0, 0.5, 0.5],
            vec![0.5, 0.0, 0.5],
        ])
        .unwrap();
        let w = WeightMatrix::<f64>::from_matrix(m).unwrap();
        assert!(!w.report().symmetric);
        assert!(w.report().eigenvalues.is_empty());
        // |1/2 + 1/2 e^{2πi/3}| = 1/2
        assert!((w.sigma2() - 0.5).abs() < 1e-8);
    }

    #[test]
    fn delta_matrices() {
        let w = WeightMatrix::<f64>::equal_weight(&Topology::ring(12, 2).unwrap()).unwrap();
        let d1 = w.delta_matrix(1).unwrap();
        assert!(d1.max_abs_diff(&(w.matrix() - &Matrix::averaging(12))) == 0.0);
        let j = WeightMatrix::from_matrix(Matrix::<f64>::averaging(4)).unwrap();
        for t in 1..10 {
            assert!(j.delta_matrix(t).unwrap().max_abs() < 1e-15);
        }
    }

    #[test]
    fn too_small_for_equal_weights() {
        let one = Topology::from_edges(1, &[]).unwrap();
        assert_eq!(WeightMatrix::<f64>::equal_weight(&one), Err(WeightError::TooFewSensors));
        let scalar = WeightMatrix::from_matrix(Matrix::<f64>::identity(1)).unwrap();
        assert_eq!(scalar.sigma2(), 0.0);
    }

    #[test]
    fn single_precision_weights() {
        let w = WeightMatrix::<f32>::equal_weight(&Topology::ring(20, 2).unwrap()).unwrap();
        assert!((w.sigma2() - 0.8571).abs() < 5e-4);
    }
}
