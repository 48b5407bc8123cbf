//! Small dense matrices: the `d x d` diffusion matrix and modest Gram matrices.

use std::fmt;

use crate::error::{Error, Result};
use crate::real::Real;

/// Row-major square matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix<T> {
    size: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(size: usize) -> Self {
        Self {
            size,
            data: vec![T::zero(); size * size],
        }
    }

    pub fn identity(size: usize) -> Self {
        let mut m = Self::zeros(size);
        for i in 0..size {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn diagonal(values: &[T]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds from rows; every row must have `rows.len()` entries.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let size = rows.len();
        let mut data = Vec::with_capacity(size * size);
        for row in rows {
            if row.len() != size {
                return Err(Error::DimensionMismatch {
                    expected: size,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { size, data })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.size..(i + 1) * self.size]
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.size).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn cast<U: Real>(&self) -> Matrix<U> {
        Matrix {
            size: self.size,
            data: self.data.iter().map(|&v| U::lit(v.as_f64())).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.size);
        for i in 0..self.size {
            for j in 0..self.size {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let n = self.size;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let lhs = self[(i, k)];
                if lhs == T::zero() {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += lhs * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        (0..self.size)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    /// `v^T M v`.
    pub fn quadratic_form(&self, v: &[T]) -> T {
        self.mul_vec(v).iter().zip(v).map(|(&a, &b)| a * b).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        (0..self.size).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.size).all(|i| (0..self.size).all(|j| i == j || self[(i, j)] == T::zero()))
    }

    pub fn trace(&self) -> T {
        (0..self.size).map(|i| self[(i, i)]).sum()
    }

    /// Lower-triangular `L` with `L L^T = self`.
    ///
    /// A pivot at or below `rel_tol * max|diag|` is treated as singular.
    pub fn cholesky(&self, rel_tol: T) -> Result<Self> {
        let n = self.size;
        let scale = (0..n)
            .map(|i| self[(i, i)].abs())
            .fold(T::zero(), T::max);
        if scale <= T::zero() || !scale.is_finite() {
            return Err(Error::NotPositiveDefinite);
        }
        let floor = rel_tol * scale;
        let mut l = Self::zeros(n);
        for j in 0..n {
            let mut diag = self[(j, j)];
            for k in 0..j {
                diag -= l[(j, k)] * l[(j, k)];
            }
            if !(diag > floor) {
                return Err(Error::NotPositiveDefinite);
            }
            let pivot = diag.sqrt();
            l[(j, j)] = pivot;
            for i in (j + 1)..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / pivot;
            }
        }
        Ok(l)
    }

    /// Determinant of a lower-triangular factor squared, i.e. `det(L L^T)`.
    pub fn det_from_cholesky(l: &Self) -> T {
        (0..l.size).map(|i| l[(i, i)]).fold(T::one(), |acc, v| acc * v * v)
    }

    /// Solves `L L^T x = b` given the Cholesky factor `l`.
    pub fn cholesky_solve(l: &Self, b: &[T]) -> Vec<T> {
        let n = l.size;
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                let v = l[(i, k)] * y[k];
                y[i] -= v;
            }
            y[i] /= l[(i, i)];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let v = l[(k, i)] * y[k];
                y[i] -= v;
            }
            y[i] /= l[(i, i)];
        }
        y
    }

    /// Largest eigenvalue of a symmetric positive semidefinite matrix.
    pub fn largest_eigenvalue(&self) -> T {
        let n = self.size;
        if n == 0 {
            return T::zero();
        }
        // Deterministic start vector with no exact zero components.
        let mut v: Vec<T> = (0..n).map(|i| T::one() + T::lit(0.1) * T::lit(i as f64)).collect();
        let mut lambda = T::zero();
        for _ in 0..500 {
            let w = self.mul_vec(&v);
            let norm = w.iter().map(|&x| x * x).sum::<T>().sqrt();
            if norm == T::zero() {
                return T::zero();
            }
            let next: Vec<T> = w.iter().map(|&x| x / norm).collect();
            let estimate = self.quadratic_form(&next);
            let converged = (estimate - lambda).abs() <= T::epsilon() * estimate.abs();
            lambda = estimate;
            v = next;
            if converged {
                break;
            }
        }
        lambda
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.size + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.size + j]
    }
}

impl<T: fmt::Debug> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[T]> = self.data.chunks(self.size.max(1)).collect();
        f.debug_list().entries(rows).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_reconstructs() {
        let a = Matrix::<f64>::from_rows(&[vec![4.0, 2.0, 0.4], vec![2.0, 3.0, 0.5], vec![0.4, 0.5, 1.0]])
            .unwrap();
        let l = a.cholesky(1e-12).unwrap();
        assert!(l.matmul(&l.transpose()).max_abs_diff(&a) < 1e-14);
        let x = Matrix::cholesky_solve(&l, &[1.0, 2.0, 3.0]);
        let back = a.mul_vec(&x);
        for (b, e) in back.iter().zip([1.0, 2.0, 3.0]) {
            assert!((b - e).abs() < 1e-13);
        }
        let det = Matrix::det_from_cholesky(&l);
        let expected = 4.0 * (3.0 - 0.25) - 2.0 * (2.0 - 0.2) + 0.4 * (1.0 - 1.2);
        assert!((det - expected).abs() < 1e-12);
    }

    #[test]
    fn singular_matrix_rejected() {
        let a = Matrix::diagonal(&[1.0, 0.0]);
        assert_eq!(a.cholesky(1e-12), Err(Error::NotPositiveDefinite));
    }

    #[test]
    fn power_iteration_finds_top_eigenvalue() {
        let a = Matrix::<f64>::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        assert!((a.largest_eigenvalue() - 3.0).abs() < 1e-12);
        assert!((Matrix::<f64>::diagonal(&[0.5, 0.5]).largest_eigenvalue() - 0.5).abs() < 1e-15);
    }
}
