//! Thin SVD of a wide design matrix through its Gram matrix.
//!
//! For `X ∈ R^{n×p}` with `n < p` the factorization `X = U diag(√μ) Wᵀ` is
//! obtained from the symmetric eigendecomposition `XXᵀ = U diag(μ) Uᵀ`, then
//! `W = Xᵀ U diag(μ^{-1/2})`. Cost is `O(n²p)` rather than `O(np²)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Relative threshold below which `μ_n / μ_1` is treated as rank deficiency.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct WideSvd {
    /// `n × n`, orthogonal.
    pub u: DMatrix<f64>,
    /// Squared singular values, non-increasing.
    pub mu: DVector<f64>,
    /// `p × n`, orthonormal columns.
    pub w: DMatrix<f64>,
}

impl WideSvd {
    /// Fails with the observed ratio `μ_n / μ_1` when it is at or below [`RANK_TOL`].
    pub fn compute(x: &DMatrix<f64>) -> Result<Self, f64> {
        let n = x.nrows();
        let gram = x * x.transpose();
        let eig = SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

        let mu = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut u = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            u.set_column(dst, &eig.eigenvectors.column(src));
        }
        let ratio = if n == 0 { 1.0 } else { mu[n - 1] / mu[0] };
        if !(ratio > RANK_TOL) {
            return Err(ratio);
        }

        let mut w = x.tr_mul(&u);
        for (j, mut col) in w.column_iter_mut().enumerate() {
            col /= mu[j].sqrt();
        }
        Ok(WideSvd { u, mu, w })
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    /// `U diag(√μ) Wᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, mut col) in us.column_iter_mut().enumerate() {
            col *= self.mu[j].sqrt();
        }
        us * self.w.transpose()
    }
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// `max |AᵀA − I|` over entries.
pub fn orthonormality_gap(a: &DMatrix<f64>) -> f64 {
    let k = a.ncols();
    max_abs(&(a.tr_mul(a) - DMatrix::<f64>::identity(k, k)))
}
