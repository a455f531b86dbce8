//! Small dense linear algebra: row-major square matrices, LU with partial
//! pivoting (solve and determinant) and a scaling-and-squaring matrix
//! exponential. Sized for generator matrices of a few dozen states, not for
//! large-scale work.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense square matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidModel(format!(
                "matrix rows must form a square: got {} rows",
                n
            )));
        }
        Ok(Matrix { n, data: rows.concat() })
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        for i in 0..n {
            let row = &self.data[i * n..(i + 1) * n];
            out[i] = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
        out
    }

    /// v^T A, used for left eigenvectors.
    pub fn vecmat(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                out[j] += v[i] * self.data[i * n + j];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix { n: self.n, data: self.data.iter().map(|x| x * s).collect() }
    }

    pub fn transpose(&self) -> Matrix {
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.data[j * n + i] = self.data[i * n + j];
            }
        }
        out
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        Matrix {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    /// max_i sum_j |a_ij|
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.data[i * self.n..(i + 1) * self.n].iter().map(|x| x.abs()).sum())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// LU factorization with partial pivoting. `sign` tracks row swaps so the
/// determinant is recoverable.
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    pivots: Vec<usize>,
    sign: f64,
}

impl Lu {
    pub fn factor(m: &Matrix) -> Option<Lu> {
        let n = m.n;
        let mut lu = m.data.clone();
        let mut pivots = vec![0usize; n];
        let mut sign = 1.0;
        for k in 0..n {
            let mut p = k;
            let mut max = lu[k * n + k].abs();
            for i in (k + 1)..n {
                let v = lu[i * n + k].abs();
                if v > max {
                    max = v;
                    p = i;
                }
            }
            if max == 0.0 {
                return None;
            }
            pivots[k] = p;
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                sign = -sign;
            }
            let pivot = lu[k * n + k];
            for i in (k + 1)..n {
                let f = lu[i * n + k] / pivot;
                lu[i * n + k] = f;
                for j in (k + 1)..n {
                    lu[i * n + j] -= f * lu[k * n + j];
                }
            }
        }
        Some(Lu { n, lu, pivots, sign })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.pivots[k]);
            for i in (k + 1)..n {
                let f = self.lu[i * n + k];
                x[i] -= f * x[k];
            }
        }
        for k in (0..n).rev() {
            x[k] /= self.lu[k * n + k];
            for i in 0..k {
                x[i] -= self.lu[i * n + k] * x[k];
            }
        }
        x
    }

    pub fn det(&self) -> f64 {
        let mut d = self.sign;
        for k in 0..self.n {
            d *= self.lu[k * self.n + k];
        }
        d
    }
}

/// det(M - lambda I) through LU; zero when factorization hits an exactly
/// singular pivot.
pub fn char_poly(m: &Matrix, lambda: f64) -> f64 {
    let mut shifted = m.clone();
    for i in 0..m.n {
        shifted[(i, i)] -= lambda;
    }
    match Lu::factor(&shifted) {
        Some(lu) => lu.det(),
        None => 0.0,
    }
}

/// Matrix exponential by scaling and squaring with a Taylor series on the
/// scaled matrix. Accurate to near machine precision for the moderate-norm
/// generators used here.
pub fn expm(m: &Matrix) -> Matrix {
    let norm = m.norm_inf();
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let scaled = m.scale(0.5f64.powi(s as i32));
    let mut result = Matrix::identity(m.n);
    let mut term = Matrix::identity(m.n);
    for k in 1..=30 {
        term = term.matmul(&scaled).scale(1.0 / k as f64);
        result = result.add(&term);
        if term.norm_inf() < 1e-18 * result.norm_inf() {
            break;
        }
    }
    for _ in 0..s {
        result = result.matmul(&result);
    }
    result
}
