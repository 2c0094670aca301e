//! Householder QR for tall, thin systems.
//!
//! Used by the local GWR fits and by the ANOVA model matrix. Storage is
//! column-major so each reflector touches contiguous memory.

#![allow(clippy::needless_range_loop)]

use nalgebra::DMatrix;

/// Householder QR factorisation `A = QR` of an `m × n` matrix with `m ≥ n`.
///
/// Reflector vectors live below the diagonal of the packed buffer; the
/// diagonal of `R` is kept separately.
#[derive(Debug, Clone)]
pub struct Qr {
    packed: Vec<f64>,
    m: usize,
    n: usize,
    rdiag: Vec<f64>,
}

impl Qr {
    /// Factorises a column-major buffer of shape `m × n`.
    pub fn from_col_major(mut packed: Vec<f64>, m: usize, n: usize) -> Self {
        assert_eq!(packed.len(), m * n, "buffer does not match shape");
        assert!(m >= n, "QR requires at least as many rows as columns");
        let mut rdiag = vec![0.0; n];
        for k in 0..n {
            let col_k = k * m;
            let mut nrm = 0.0f64;
            for i in k..m {
                nrm = nrm.hypot(packed[col_k + i]);
            }
            if nrm != 0.0 {
                if packed[col_k + k] < 0.0 {
                    nrm = -nrm;
                }
                for i in k..m {
                    packed[col_k + i] /= nrm;
                }
                packed[col_k + k] += 1.0;
                for j in (k + 1)..n {
                    let col_j = j * m;
                    let mut s = 0.0;
                    for i in k..m {
                        s += packed[col_k + i] * packed[col_j + i];
                    }
                    s = -s / packed[col_k + k];
                    for i in k..m {
                        packed[col_j + i] += s * packed[col_k + i];
                    }
                }
            }
            rdiag[k] = -nrm;
        }
        Qr {
            packed,
            m,
            n,
            rdiag,
        }
    }

    pub fn new(a: &DMatrix<f64>) -> Self {
        Self::from_col_major(a.as_slice().to_vec(), a.nrows(), a.ncols())
    }

    pub fn nrows(&self) -> usize {
        self.m
    }

    pub fn ncols(&self) -> usize {
        self.n
    }

    /// Diagonal of `R`.
    pub fn r_diag(&self) -> &[f64] {
        &self.rdiag
    }

    /// True when some `|R_kk|` falls at or below `rel_tol` times the largest.
    pub fn is_rank_deficient(&self, rel_tol: f64) -> bool {
        let max = self.rdiag.iter().fold(0.0f64, |acc, d| acc.max(d.abs()));
        max == 0.0 || self.rdiag.iter().any(|d| d.abs() <= rel_tol * max)
    }

    /// Overwrites `b` (length `m`) with `Qᵀ b`.
    pub fn apply_qt(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.m);
        for k in 0..self.n {
            let col_k = k * self.m;
            let head = self.packed[col_k + k];
            if head == 0.0 {
                continue;
            }
            let mut s = 0.0;
            for i in k..self.m {
                s += self.packed[col_k + i] * b[i];
            }
            s = -s / head;
            for i in k..self.m {
                b[i] += s * self.packed[col_k + i];
            }
        }
    }

    #[inline]
    fn r(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.rdiag[i]
        } else {
            self.packed[j * self.m + i]
        }
    }

    /// Solves `R x = rhs[..n]` by back substitution.
    pub fn solve_r(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = rhs[..n].to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= self.r(i, j) * x[j];
            }
            x[i] = s / self.rdiag[i];
        }
        x
    }

    /// Solves `Rᵀ x = rhs` by forward substitution.
    pub fn solve_rt(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = rhs[..n].to_vec();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.r(j, i) * x[j];
            }
            x[i] = s / self.rdiag[i];
        }
        x
    }

    /// Least-squares solution of `A x ≈ b`.
    pub fn least_squares(&self, b: &[f64]) -> Vec<f64> {
        let mut qtb = b.to_vec();
        self.apply_qt(&mut qtb);
        self.solve_r(&qtb)
    }
}

/// Sum with Neumaier compensation; the result does not depend on how the
/// caller chunked the work, only on the element order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
