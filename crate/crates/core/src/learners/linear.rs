//! Ordinary least squares with an intercept, solved through the normal
//! equations with a fixed `1e-8` ridge on the Gram matrix.

use nalgebra::{DMatrix, DVector};

use crate::dataset::Matrix;
use crate::error::{Error, Result};

pub const RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// Intercept first.
    pub coef: Vec<f64>,
    /// `RSS / (n - p - 1)`.
    pub sigma2_hat: f64,
    /// `(XᵀX + εI)⁻¹` for the design with intercept column.
    pub xtx_inv: DMatrix<f64>,
    pub n: usize,
}

impl LinearModel {
    pub fn p(&self) -> usize {
        self.coef.len() - 1
    }

    pub fn df(&self) -> usize {
        self.n - self.coef.len()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.coef[0] + x.iter().zip(&self.coef[1..]).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Vec<f64> {
        (0..x.nrows()).map(|i| self.predict(x.row(i))).collect()
    }

    /// `x̃ᵀ (XᵀX)⁻¹ x̃` with `x̃ = (1, x)`.
    pub fn leverage(&self, x: &[f64]) -> f64 {
        let xt = DVector::from_iterator(x.len() + 1, std::iter::once(1.0).chain(x.iter().copied()));
        (xt.transpose() * &self.xtx_inv * &xt)[(0, 0)]
    }
}

/// Least-squares solution of `design · b ≈ target` with ridge `eps`.
#[derive(Debug, Clone)]
pub(crate) struct RidgeSolution {
    pub coef: DVector<f64>,
    pub gram_inv: DMatrix<f64>,
    pub rss: f64,
}

pub(crate) fn ridge_solve(design: &DMatrix<f64>, target: &DVector<f64>, eps: f64) -> Result<RidgeSolution> {
    let q = design.ncols();
    let gram = design.transpose() * design + DMatrix::identity(q, q) * eps;
    let chol = gram.cholesky().ok_or(Error::NotPositiveDefinite)?;
    let coef = chol.solve(&(design.transpose() * target));
    let gram_inv = chol.inverse();
    let resid = target - design * &coef;
    Ok(RidgeSolution {
        coef,
        gram_inv,
        rss: resid.norm_squared(),
    })
}

/// Design matrix `[1, x]` for the selected rows.
pub(crate) fn design_with_intercept(x: &Matrix, rows: &[usize]) -> DMatrix<f64> {
    let p = x.ncols();
    DMatrix::from_fn(rows.len(), p + 1, |r, c| if c == 0 { 1.0 } else { x.get(rows[r], c - 1) })
}

pub fn fit_ols(x: &Matrix, y: &[f64]) -> Result<LinearModel> {
    let n = x.nrows();
    let p = x.ncols();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: y.len(),
        });
    }
    if n <= p + 1 {
        return Err(Error::Insufficient(format!(
            "OLS needs n > p + 1 (n = {n}, p = {p})"
        )));
    }
    if x.as_slice().iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("OLS input contains missing or non-finite cells"));
    }
    let rows: Vec<usize> = (0..n).collect();
    let sol = ridge_solve(&design_with_intercept(x, &rows), &DVector::from_column_slice(y), RIDGE)?;
    Ok(LinearModel {
        coef: sol.coef.iter().copied().collect(),
        sigma2_hat: sol.rss / (n - p - 1) as f64,
        xtx_inv: sol.gram_inv,
        n,
    })
}
