//! Single imputation of missing covariates.
//!
//! Seven schemes share one entry point, [`impute`]:
//! column-mean filling, iterative learner-based imputation in the missForest
//! pattern (forest, SGB or XGB-style learner), and three chained-equation
//! samplers (Bayesian linear regression, predictive mean matching and
//! random-forest donors).

mod iterative;
mod mice;

pub use iterative::impute_iterative;
pub use mice::{mice_norm, mice_pmm, mice_rf};

use rand::Rng;
use serde::Deserialize;

use crate::dataset::{Matrix, MissMask};
use crate::error::{Error, Result};
use crate::learners::{ForestConfig, SgbConfig, XgbConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputeMethod {
    Mean,
    MissForest,
    GbmImpute,
    XgbImpute,
    MiceNorm,
    MicePmm,
    MiceRf,
}

impl ImputeMethod {
    pub const ALL: [ImputeMethod; 7] = [
        ImputeMethod::Mean,
        ImputeMethod::MissForest,
        ImputeMethod::GbmImpute,
        ImputeMethod::XgbImpute,
        ImputeMethod::MiceNorm,
        ImputeMethod::MicePmm,
        ImputeMethod::MiceRf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ImputeMethod::Mean => "mean",
            ImputeMethod::MissForest => "miss_forest",
            ImputeMethod::GbmImpute => "gbm_impute",
            ImputeMethod::XgbImpute => "xgb_impute",
            ImputeMethod::MiceNorm => "mice_norm",
            ImputeMethod::MicePmm => "mice_pmm",
            ImputeMethod::MiceRf => "mice_rf",
        }
    }

    /// Whether every imputed value is copied from an observed cell.
    pub fn uses_donors(self) -> bool {
        matches!(self, ImputeMethod::MicePmm | ImputeMethod::MiceRf)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputeConfig {
    pub method: ImputeMethod,
    /// Iterations for the iterative schemes, sweeps for the MICE schemes.
    pub max_iter: usize,
    /// Learner for `miss_forest`.
    pub forest: ForestConfig,
    /// Learner for `gbm_impute`.
    pub sgb: SgbConfig,
    /// Learner for `xgb_impute`.
    pub xgb: XgbConfig,
    /// Forest used by `mice_rf`.
    pub mice_rf: ForestConfig,
    pub pmm_donors: usize,
    pub seed: u64,
}

impl ImputeConfig {
    pub fn new(method: ImputeMethod, seed: u64) -> Self {
        Self {
            method,
            max_iter: 10,
            forest: ForestConfig::default(),
            sgb: SgbConfig::default(),
            xgb: XgbConfig::default(),
            mice_rf: ForestConfig {
                m_trees: 10,
                ..ForestConfig::default()
            },
            pmm_donors: 5,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be >= 1"));
        }
        if self.pmm_donors == 0 {
            return Err(Error::invalid("pmm_donors must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputeResult {
    /// Covariates with every missing cell filled; observed cells untouched.
    pub completed: Matrix,
    pub iterations_run: usize,
    /// Relative change `Σ (X_t - X_{t-1})² / Σ X_t²` over the missing cells,
    /// one entry per iteration run.
    pub delta_trace: Vec<f64>,
    /// Iteration whose matrix is returned (0 = initial fill).
    pub returned_iteration: usize,
}

/// Runs the configured imputation. Cells of `x` marked missing are ignored
/// and may hold anything, including `NaN`.
pub fn impute(x: &Matrix, mask: &MissMask, config: &ImputeConfig) -> Result<ImputeResult> {
    check_inputs(x, mask)?;
    config.validate()?;
    match config.method {
        ImputeMethod::Mean => impute_mean(x, mask),
        ImputeMethod::MissForest | ImputeMethod::GbmImpute | ImputeMethod::XgbImpute => {
            impute_iterative(x, mask, config)
        }
        ImputeMethod::MiceNorm => mice_norm(x, mask, config),
        ImputeMethod::MicePmm => mice_pmm(x, mask, config),
        ImputeMethod::MiceRf => mice_rf(x, mask, config),
    }
}

pub(crate) fn check_inputs(x: &Matrix, mask: &MissMask) -> Result<()> {
    if x.nrows() != mask.nrows() || x.ncols() != mask.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows() * x.ncols(),
            actual: mask.nrows() * mask.ncols(),
        });
    }
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            if mask.is_observed(i, j) && !x.get(i, j).is_finite() {
                return Err(Error::invalid(format!("observed cell ({i}, {j}) is not finite")));
            }
        }
    }
    Ok(())
}

/// Fills each missing cell with its column's observed mean.
pub fn initialize_fill(x: &Matrix, mask: &MissMask) -> Result<Matrix> {
    check_inputs(x, mask)?;
    let mut out = x.clone();
    for j in 0..x.ncols() {
        let obs = mask.observed_rows(j);
        if obs.is_empty() {
            return Err(Error::invalid(format!("column {j} has no observed cell")));
        }
        let mean = obs.iter().map(|&i| x.get(i, j)).sum::<f64>() / obs.len() as f64;
        for i in mask.missing_rows(j) {
            out.set(i, j, mean);
        }
    }
    Ok(out)
}

/// Fills each missing cell with a uniformly drawn observed value of its
/// column.
pub(crate) fn random_draw_fill<R: Rng>(x: &Matrix, mask: &MissMask, rng: &mut R) -> Result<Matrix> {
    let mut out = x.clone();
    for j in 0..x.ncols() {
        let obs = mask.observed_rows(j);
        if obs.is_empty() {
            return Err(Error::invalid(format!("column {j} has no observed cell")));
        }
        for i in mask.missing_rows(j) {
            let donor = obs[rng.random_range(0..obs.len())];
            out.set(i, j, x.get(donor, j));
        }
    }
    Ok(out)
}

/// Mean imputation as a baseline.
pub fn impute_mean(x: &Matrix, mask: &MissMask) -> Result<ImputeResult> {
    Ok(ImputeResult {
        completed: initialize_fill(x, mask)?,
        iterations_run: 0,
        delta_trace: Vec::new(),
        returned_iteration: 0,
    })
}

/// Relative squared change over the missing cells.
pub(crate) fn relative_change(current: &Matrix, previous: &Matrix, cells: &[(usize, usize)]) -> f64 {
    let (num, den) = cells.iter().fold((0.0, 0.0), |(n, d), &(i, j)| {
        let c = current.get(i, j);
        (n + (c - previous.get(i, j)).powi(2), d + c * c)
    });
    if den > 0.0 {
        num / den
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col_mask(n: usize, missing: &[usize]) -> MissMask {
        let mut obs = vec![true; n * 2];
        for &i in missing {
            obs[i * 2 + 1] = false;
        }
        MissMask::new(n, 2, obs).unwrap()
    }

    #[test]
    fn mean_fill() {
        let x = Matrix::from_vec(3, 2, vec![0.0, 1.0, 0.0, f64::NAN, 0.0, 3.0]).unwrap();
        let out = initialize_fill(&x, &col_mask(3, &[1])).unwrap();
        assert_eq!(out.get(1, 1), 2.0);
    }

    #[test]
    fn single_observed_value_fills_all() {
        let x = Matrix::from_vec(3, 2, vec![0.0, 7.0, 0.0, f64::NAN, 0.0, f64::NAN]).unwrap();
        let out = initialize_fill(&x, &col_mask(3, &[1, 2])).unwrap();
        assert_eq!(out.column(1), vec![7.0; 3]);
    }

    #[test]
    fn complete_input_is_identity() {
        let x = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mask = MissMask::all_observed(2, 2);
        assert_eq!(initialize_fill(&x, &mask).unwrap(), x);
        let r = impute_mean(&x, &mask).unwrap();
        assert_eq!(r.completed, x);
        assert_eq!(r.iterations_run, 0);
        for method in ImputeMethod::ALL {
            let r = impute(&x, &mask, &ImputeConfig::new(method, 1)).unwrap();
            assert_eq!(r.completed, x, "{method:?}");
        }
    }

    #[test]
    fn mean_imputation_nrmse_is_finite_positive() {
        let x = Matrix::from_vec(
            6,
            2,
            vec![0.0, -2.0, 0.0, -1.0, 0.0, 0.5, 0.0, 1.0, 0.0, 2.0, 0.0, 4.0],
        )
        .unwrap();
        let mask = col_mask(6, &[0, 5]);
        let r = impute_mean(&x, &mask).unwrap();
        let e = crate::metrics::nrmse(&r.completed, &x, &mask).unwrap();
        assert!(e.is_finite() && e > 0.0);
    }

    #[test]
    fn rejects_bad_config() {
        let x = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mask = MissMask::all_observed(2, 2);
        let mut cfg = ImputeConfig::new(ImputeMethod::MicePmm, 0);
        cfg.pmm_donors = 0;
        assert!(impute(&x, &mask, &cfg).is_err());
        cfg = ImputeConfig::new(ImputeMethod::MissForest, 0);
        cfg.max_iter = 0;
        assert!(impute(&x, &mask, &cfg).is_err());
    }
}
