//! Dense row-major matrices and a cyclic Jacobi eigensolver.
//!
//! Sizes here are sensor counts (tens to a few hundred), so everything is
//! dense and allocation-happy.

use std::ops::{Index, IndexMut, Mul, Sub};

use thiserror::Error;

use crate::scalar::Scalar;

/// Off-diagonal Frobenius norm at which a Jacobi sweep is considered converged.
pub const JACOBI_TOLERANCE: f64 = 1e-12;
/// Sweep budget for [`symmetric_eigenvalues`].
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Entry-wise asymmetry accepted by [`symmetric_eigenvalues`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is {rows}x{cols}, expected a square matrix")]
    NotSquare { rows: usize, cols: usize },
    #[error("row {row} has {len} entries, expected {expected}")]
    Ragged { row: usize, len: usize, expected: usize },
    #[error("matrix is not symmetric (max |a_ij - a_ji| = {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },
    #[error("Jacobi iteration did not converge in {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    NoConvergence { sweeps: usize, off_norm: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// The averaging matrix `(1/n) 1 1ᵀ`.
    pub fn averaging(n: usize) -> Self {
        let v = T::one() / T::of_usize(n);
        Self { rows: n, cols: n, data: vec![v; n * n] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, LinalgError> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for (row, r) in rows.iter().enumerate() {
            if r.len() != n_cols {
                return Err(LinalgError::Ragged { row, len: r.len(), expected: n_cols });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: n_rows, cols: n_cols, data })
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.data.chunks(self.cols.max(1)).map(<[T]>::to_vec).collect()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, c: T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| x * c).collect() }
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.rows).map(|i| self.row(i).iter().fold(T::zero(), |a, &x| a + x)).collect()
    }

    pub fn col_sums(&self) -> Vec<T> {
        let mut sums = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            for (s, &x) in sums.iter_mut().zip(self.row(i)) {
                *s = *s + x;
            }
        }
        sums
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    /// Largest `|a_ij - a_ji|`; infinite for non-square input.
    pub fn asymmetry(&self) -> T {
        if !self.is_square() {
            return T::infinity();
        }
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.rows];
        self.matvec_into(x, &mut out);
        out
    }

    /// `out = self · x`, rows accumulated left to right.
    pub fn matvec_into(&self, x: &[T], out: &mut [T]) {
        assert_eq!(x.len(), self.cols, "vector length mismatch");
        assert_eq!(out.len(), self.rows, "output length mismatch");
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).iter().zip(x).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
        }
    }

    /// `self^t` by repeated squaring; `self^0 = I`.
    pub fn pow(&self, mut t: u64) -> Self {
        assert!(self.is_square(), "power of a non-square matrix");
        let mut result = Self::identity(self.rows);
        let mut base = self.clone();
        while t > 0 {
            if t & 1 == 1 {
                result = &result * &base;
            }
            t >>= 1;
            if t > 0 {
                base = &base * &base;
            }
        }
        result
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Scalar> Mul for &Matrix<T> {
    type Output = Matrix<T>;

    fn mul(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.cols, rhs.rows, "inner dimensions differ");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] = out[(i, j)] + a * rhs[(k, j)];
                }
            }
        }
        out
    }
}

impl<T: Scalar> Sub for &Matrix<T> {
    type Output = Matrix<T>;

    fn sub(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect(),
        }
    }
}

/// Euclidean norm.
pub fn norm2<T: Scalar>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt()
}

fn off_diagonal_norm<T: Scalar>(a: &Matrix<T>) -> T {
    let mut sum = T::zero();
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            if i != j {
                sum = sum + a[(i, j)] * a[(i, j)];
            }
        }
    }
    sum.sqrt()
}

/// All eigenvalues of a symmetric matrix, sorted descending.
///
/// Cyclic Jacobi: sweep every `(p, q)` pair with a plane rotation zeroing
/// `a_pq` until the off-diagonal Frobenius norm falls below
/// [`JACOBI_TOLERANCE`] (or a few ulps of the matrix norm for types coarser
/// than `f64`).
pub fn symmetric_eigenvalues<T: Scalar>(mat: &Matrix<T>) -> Result<Vec<T>, LinalgError> {
    if !mat.is_square() {
        return Err(LinalgError::NotSquare { rows: mat.rows(), cols: mat.cols() });
    }
    let asym = mat.asymmetry();
    if asym > T::of(SYMMETRY_TOLERANCE) {
        return Err(LinalgError::NotSymmetric { max_asymmetry: asym.as_f64() });
    }
    let n = mat.rows();
    // symmetrize so rounding-level asymmetry does not leak into the rotations
    let mut a = Matrix::from_fn(n, n, |i, j| (mat[(i, j)] + mat[(j, i)]) / T::of(2.0));
    let scale = a.data.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt();
    let tol = T::of(JACOBI_TOLERANCE).max(T::epsilon() * scale * T::of(4.0));

    let mut sweeps = 0;
    loop {
        let off = off_diagonal_norm(&a);
        if off < tol {
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(LinalgError::NoConvergence { sweeps, off_norm: off.as_f64() });
        }
        sweeps += 1;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                rotate(&mut a, p, q);
            }
        }
    }

    let mut eig: Vec<T> = (0..n).map(|i| a[(i, i)]).collect();
    eig.sort_by(|x, y| y.partial_cmp(x).expect("eigenvalues are finite"));
    Ok(eig)
}

/// Applies the Jacobi rotation that annihilates `a[p][q]`.
fn rotate<T: Scalar>(a: &mut Matrix<T>, p: usize, q: usize) {
    let apq = a[(p, q)];
    if apq == T::zero() {
        return;
    }
    let two = T::of(2.0);
    let theta = (a[(q, q)] - a[(p, p)]) / (two * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
    let c = T::one() / (t * t + T::one()).sqrt();
    let s = t * c;

    let n = a.rows();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    a[(p, q)] = T::zero();
    a[(q, p)] = T::zero();
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_laplacian_eigenvalues() {
        let l = Matrix::<f64>::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        let e = symmetric_eigenvalues(&l).unwrap();
        assert!((e[0] - 2.0).abs() < 1e-12);
        assert!(e[1].abs() < 1e-12);
    }

    #[test]
    fn identity_eigenvalues() {
        let e = symmetric_eigenvalues(&Matrix::<f64>::identity(5)).unwrap();
        assert_eq!(e, vec![1.0; 5]);
    }

    #[test]
    fn rejects_asymmetric_and_non_square() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(symmetric_eigenvalues(&m), Err(LinalgError::NotSymmetric { .. })));
        let r = Matrix::<f64>::zeros(2, 3);
        assert!(matches!(symmetric_eigenvalues(&r), Err(LinalgError::NotSquare { .. })));
        assert!(matches!(
            Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0]]),
            Err(LinalgError::Ragged { row: 1, .. })
        ));
    }

    #[test]
    fn single_precision_converges() {
        let m = Matrix::from_rows(&[vec![2.0f32, 1.0, 0.0], vec![1.0, 2.0, 1.0], vec![0.0, 1.0, 2.0]])
            .unwrap();
        let e = symmetric_eigenvalues(&m).unwrap();
        let s2 = std::f32::consts::SQRT_2;
        for (got, want) in e.iter().zip([2.0 + s2, 2.0, 2.0 - s2]) {
            assert!((got - want).abs() < 1e-5, "{got} vs {want}");
        }
    }

    #[test]
    fn power_by_squaring() {
        let m = Matrix::from_rows(&[vec![0.5, 0.5], vec![0.25, 0.75]]).unwrap();
        assert_eq!(m.pow(0), Matrix::identity(2));
        assert_eq!(m.pow(1), m);
        let w4 = m.pow(4);
        let sq = m.pow(2);
        assert!((&sq * &sq).max_abs_diff(&w4) < 1e-12);
        let naive = (0..7).fold(Matrix::identity(2), |acc, _| &acc * &m);
        assert!(m.pow(7).max_abs_diff(&naive) < 1e-14);
    }

    #[test]
    fn matvec_and_sums() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.matvec(&[1.0, 1.0]), vec![3.0, 7.0]);
        assert_eq!(m.row_sums(), vec![3.0, 7.0]);
        assert_eq!(m.col_sums(), vec![4.0, 6.0]);
        assert_eq!(m.transpose().to_rows(), vec![vec![1.0, 3.0], vec![2.0, 4.0]]);
    }
}
