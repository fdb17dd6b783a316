//! Dense square matrices in the handful of dimensions this crate needs,
//! with a cyclic Jacobi eigensolver for the symmetric factorizations
//! (covariance square roots, Mahalanobis transforms).

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Eigenvalues below this fraction of the largest are clamped to zero when
/// forming PSD square roots, and reported as singular when an inverse is
/// required.
pub const PSD_FLOOR: f64 = 1e-12;

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut m = Self::zeros(dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        Ok(m)
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn scaled_identity(dim: usize, s: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = s;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        let mut y = vec![0.0; self.dim];
        for i in 0..self.dim {
            let mut s = 0.0;
            for j in 0..self.dim {
                s += self[(i, j)] * x[j];
            }
            y[i] = s;
        }
        y
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.dim, other.dim);
        let mut out = Matrix::zeros(self.dim);
        for i in 0..self.dim {
            for k in 0..self.dim {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..self.dim {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let y = self.matvec(x);
        x.iter().zip(&y).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                if (self[(i, j)] - self[(j, i)]).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// Eigendecomposition of a symmetric matrix by cyclic Jacobi sweeps.
    /// Returns eigenvalues (ascending) and the orthogonal matrix whose
    /// columns are the matching eigenvectors.
    pub fn sym_eigen(&self) -> (Vec<f64>, Matrix) {
        assert!(
            self.is_symmetric(1e-9),
            "sym_eigen requires a symmetric matrix"
        );
        let n = self.dim;
        let mut a = self.clone();
        let mut v = Matrix::identity(n);
        for _sweep in 0..100 {
            let mut off = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    off += a[(i, j)].abs();
                }
            }
            if off < 1e-14 * (1.0 + a.frobenius_norm()) {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if a[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
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
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).unwrap());
        let eigenvalues: Vec<f64> = idx.iter().map(|&i| a[(i, i)]).collect();
        let mut vectors = Matrix::zeros(n);
        for (new_col, &old_col) in idx.iter().enumerate() {
            for k in 0..n {
                vectors[(k, new_col)] = v[(k, old_col)];
            }
        }
        (eigenvalues, vectors)
    }

    /// Symmetric PSD square root. Eigenvalues below the relative floor are
    /// clamped to zero, so rank-deficient covariance matrices are accepted.
    pub fn sqrt_psd(&self) -> Result<Matrix> {
        let (vals, vecs) = self.sym_eigen();
        let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut d = Vec::with_capacity(self.dim);
        for &lam in &vals {
            if lam < -PSD_FLOOR * scale.max(1.0) {
                return Err(Error::invalid(format!(
                    "matrix is not positive semi-definite: eigenvalue {lam}"
                )));
            }
            d.push(if lam <= PSD_FLOOR * scale {
                0.0
            } else {
                lam.sqrt()
            });
        }
        Ok(recompose(&vecs, &d))
    }

    /// Inverse symmetric square root; errors on eigenvalues at or below the
    /// PSD floor.
    pub fn inv_sqrt_pd(&self) -> Result<Matrix> {
        let (vals, vecs) = self.sym_eigen();
        let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let mut d = Vec::with_capacity(self.dim);
        for &lam in &vals {
            if lam <= PSD_FLOOR * scale {
                return Err(Error::Singular(format!("eigenvalue {lam} at PSD floor")));
            }
            d.push(1.0 / lam.sqrt());
        }
        Ok(recompose(&vecs, &d))
    }

    /// Determinant of a symmetric matrix via its eigenvalues.
    pub fn sym_det(&self) -> f64 {
        let (vals, _) = self.sym_eigen();
        vals.iter().product()
    }
}

fn recompose(vecs: &Matrix, diag: &[f64]) -> Matrix {
    let n = vecs.dim();
    let mut out = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for (k, &dk) in diag.iter().enumerate() {
                s += vecs[(i, k)] * dk * vecs[(j, k)];
            }
            out[(i, j)] = s;
        }
    }
    out
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.dim + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_recovers_known_spectrum() {
        let m = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let (vals, vecs) = m.sym_eigen();
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);
        // reconstruct
        let rec = recompose(&vecs, &vals);
        assert!(m.max_abs_diff(&rec) < 1e-12);
    }

    #[test]
    fn sqrt_psd_squares_back() {
        let m = Matrix::from_rows(&[
            vec![2.0, 0.3, 0.0],
            vec![0.3, 1.0, -0.2],
            vec![0.0, -0.2, 0.5],
        ])
        .unwrap();
        let r = m.sqrt_psd().unwrap();
        assert!(r.matmul(&r).max_abs_diff(&m) < 1e-10);
    }

    #[test]
    fn sqrt_psd_accepts_rank_deficient() {
        // vvᵀ with v = e1 has rank 1.
        let m = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let r = m.sqrt_psd().unwrap();
        assert!(r.matmul(&r).max_abs_diff(&m) < 1e-12);
        assert!(m.inv_sqrt_pd().is_err());
    }

    #[test]
    fn inv_sqrt_inverts() {
        let m = Matrix::diagonal(&[1.0, 4.0]);
        let r = m.inv_sqrt_pd().unwrap();
        let prod = r.matmul(&m).matmul(&r);
        assert!(prod.max_abs_diff(&Matrix::identity(2)) < 1e-12);
    }

    #[test]
    fn det_of_diagonal() {
        let m = Matrix::diagonal(&[1.0, 4.0, 0.25]);
        assert!((m.sym_det() - 1.0).abs() < 1e-12);
    }
}
