//! Imputation error (NRMSE), cross-validated prediction error and
//! Monte-Carlo coverage summaries.

use crate::dataset::{FoldAssignment, Matrix, MissMask};
use crate::error::{Error, Result};
use crate::intervals::{IntervalKind, PredictionInterval};
use crate::learners::Learner;

fn check_shapes(imputed: &Matrix, truth: &Matrix, mask: &MissMask) -> Result<Vec<(f64, f64)>> {
    if imputed.nrows() != truth.nrows() || imputed.ncols() != truth.ncols() {
        return Err(Error::DimensionMismatch {
            expected: truth.nrows() * truth.ncols(),
            actual: imputed.nrows() * imputed.ncols(),
        });
    }
    if mask.nrows() != truth.nrows() || mask.ncols() != truth.ncols() {
        return Err(Error::DimensionMismatch {
            expected: truth.nrows() * truth.ncols(),
            actual: mask.nrows() * mask.ncols(),
        });
    }
    let cells: Vec<(f64, f64)> = mask
        .missing_cells()
        .into_iter()
        .map(|(i, j)| (imputed.get(i, j), truth.get(i, j)))
        .collect();
    if cells.is_empty() {
        return Err(Error::invalid("NRMSE needs at least one missing cell"));
    }
    Ok(cells)
}

/// NRMSE over the missing cells:
///
/// `sqrt(Σ (imp - true)²) / sqrt(Σ (imp - mean_true)²)`
///
/// where `mean_true` is the mean of the true values of the missing cells.
/// The denominator deliberately uses the imputed values; see
/// [`nrmse_conventional`] for the variance-of-truth normalization.
pub fn nrmse(imputed: &Matrix, truth: &Matrix, mask: &MissMask) -> Result<f64> {
    let cells = check_shapes(imputed, truth, mask)?;
    let mean_true = cells.iter().map(|c| c.1).sum::<f64>() / cells.len() as f64;
    let num: f64 = cells.iter().map(|(imp, t)| (imp - t).powi(2)).sum();
    let den: f64 = cells.iter().map(|(imp, _)| (imp - mean_true).powi(2)).sum();
    if den == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(num.sqrt() / den.sqrt())
}

/// `sqrt(mean((imp - true)²) / var(true))` over the missing cells, the
/// normalization used by missForest.
pub fn nrmse_conventional(imputed: &Matrix, truth: &Matrix, mask: &MissMask) -> Result<f64> {
    let cells = check_shapes(imputed, truth, mask)?;
    let k = cells.len() as f64;
    let mean_true = cells.iter().map(|c| c.1).sum::<f64>() / k;
    let mse: f64 = cells.iter().map(|(imp, t)| (imp - t).powi(2)).sum::<f64>() / k;
    let var: f64 = cells.iter().map(|(_, t)| (t - mean_true).powi(2)).sum::<f64>() / k;
    if var == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok((mse / var).sqrt())
}

/// K-fold cross-validated MSE: each fold is predicted by the learner
/// trained on the remaining folds; the result averages all `n` held-out
/// squared errors. `x` may contain `NaN` only for learners that handle it.
pub fn cv_mse(x: &Matrix, y: &[f64], learner: &Learner, folds: &FoldAssignment) -> Result<f64> {
    let n = x.nrows();
    if y.len() != n || folds.fold_of.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: folds.fold_of.len().min(y.len()),
        });
    }
    let mut total = 0.0;
    for fold in 0..folds.k {
        let train = folds.train_rows(fold);
        let test = folds.test_rows(fold);
        if train.len() < 2 {
            return Err(Error::Insufficient(format!(
                "fold {fold} leaves {} training rows",
                train.len()
            )));
        }
        let x_train = x.select_rows(&train);
        let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let model = learner.fit(&x_train, &y_train)?;
        total += test
            .iter()
            .map(|&i| (y[i] - model.predict(x.row(i))).powi(2))
            .sum::<f64>();
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageRecord {
    pub covered: bool,
    pub length: f64,
    pub kind: IntervalKind,
    pub iterate: usize,
}

impl CoverageRecord {
    pub fn from_interval(pi: &PredictionInterval, y: f64, iterate: usize) -> Self {
        Self {
            covered: pi.contains(y),
            length: pi.length(),
            kind: pi.kind,
            iterate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageSummary {
    pub coverage_rate: f64,
    pub mean_length: f64,
    pub median_length: f64,
    pub count: usize,
}

pub fn coverage_summary(records: &[CoverageRecord]) -> Result<CoverageSummary> {
    if records.is_empty() {
        return Err(Error::Empty("no coverage records".into()));
    }
    let n = records.len() as f64;
    let covered = records.iter().filter(|r| r.covered).count() as f64;
    let lengths: Vec<f64> = records.iter().map(|r| r.length).collect();
    Ok(CoverageSummary {
        coverage_rate: covered / n,
        mean_length: lengths.iter().sum::<f64>() / n,
        median_length: median(&lengths),
        count: records.len(),
    })
}

/// Median (mean of the two middle values for even counts). Panics on empty
/// input.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::make_folds;
    use crate::learners::ForestConfig;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_missing(rows: usize, cols: usize, cells: &[(usize, usize)]) -> MissMask {
        let mut obs = vec![true; rows * cols];
        for &(i, j) in cells {
            obs[i * cols + j] = false;
        }
        MissMask::new(rows, cols, obs).unwrap()
    }

    #[test]
    fn perfect_imputation_is_zero() {
        let t = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let m = one_missing(2, 2, &[(0, 1), (1, 0)]);
        let mut imp = t.clone();
        imp.set(0, 1, 2.0);
        imp.set(1, 0, 3.0);
        assert_eq!(nrmse(&imp, &t, &m).unwrap(), 0.0);
    }

    #[test]
    fn single_cell_hand_case() {
        let t = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let m = one_missing(2, 2, &[(0, 0)]);
        let mut imp = t.clone();
        imp.set(0, 0, 3.0);
        assert_eq!(nrmse(&imp, &t, &m).unwrap(), 1.0);
    }

    #[test]
    fn zero_denominator_is_an_error() {
        let t = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 3.0]).unwrap();
        let m = one_missing(2, 2, &[(0, 0), (1, 1)]);
        let mut imp = t.clone();
        imp.set(0, 0, 2.0);
        imp.set(1, 1, 2.0);
        assert!(matches!(nrmse(&imp, &t, &m), Err(Error::ZeroDenominator)));
    }

    #[test]
    fn needs_missing_cells() {
        let t = Matrix::from_vec(1, 1, vec![1.0]).unwrap();
        assert!(nrmse(&t, &t, &MissMask::all_observed(1, 1)).is_err());
    }

    #[test]
    fn conventional_variant() {
        let t = Matrix::from_vec(2, 2, vec![1.0, 0.0, 3.0, 0.0]).unwrap();
        let m = one_missing(2, 2, &[(0, 0)]);
        // single cell: var(true) = 0
        assert!(nrmse_conventional(&t, &t, &m).is_err());
        let t = Matrix::from_vec(3, 2, vec![1.0, 0.0, 3.0, 0.0, 5.0, 5.0]).unwrap();
        let m = one_missing(3, 2, &[(0, 0), (1, 0)]);
        let mut imp = t.clone();
        imp.set(0, 0, 2.0);
        imp.set(1, 0, 2.0);
        // mse = 1, var(true) = 1
        assert_eq!(nrmse_conventional(&imp, &t, &m).unwrap(), 1.0);
    }

    proptest! {
        #[test]
        fn nrmse_scale_invariant(
            vals in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 4),
            c in 0.1f64..100.0,
        ) {
            let flat = |f: &dyn Fn(&(f64, f64)) -> f64| -> Vec<f64> {
                vals.iter().flat_map(|v| [f(v), 1.0]).chain([0.0, 1.0]).collect()
            };
            let truth = Matrix::from_vec(5, 2, flat(&|v| v.0)).unwrap();
            let imp = Matrix::from_vec(5, 2, flat(&|v| v.1)).unwrap();
            let mask = one_missing(5, 2, &[(0, 0), (1, 0), (2, 0), (3, 0)]);
            let scale = |m: &Matrix| Matrix::from_vec(5, 2, m.as_slice().iter().map(|v| v * c).collect()).unwrap();
            if let Ok(a) = nrmse(&imp, &truth, &mask) {
                let b = nrmse(&scale(&imp), &scale(&truth), &mask).unwrap();
                prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
            }
        }
    }

    #[test]
    fn cv_mse_constant_response_is_zero() {
        let x = Matrix::from_vec(20, 1, (0..20).map(|i| i as f64).collect()).unwrap();
        let y = vec![4.0; 20];
        let folds = make_folds(20, 5, 1).unwrap();
        let l = Learner::Forest(ForestConfig { m_trees: 5, ..Default::default() });
        assert_eq!(cv_mse(&x, &y, &l, &folds).unwrap(), 0.0);
    }

    #[test]
    fn cv_mse_mean_predictor_inflation() {
        // A single-leaf forest predicts the training mean, whose CV error is
        // about v·(1 + 1/n_train) ≥ 0.9 v.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100;
        let x = Matrix::from_vec(n, 1, (0..n).map(|_| rng.random::<f64>()).collect()).unwrap();
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 10.0).collect();
        let mean = y.iter().sum::<f64>() / n as f64;
        let v = y.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let folds = make_folds(n, 5, 2).unwrap();
        let l = Learner::Forest(ForestConfig {
            m_trees: 1,
            min_node_size: 1000,
            bootstrap: false,
            ..Default::default()
        });
        let mse = cv_mse(&x, &y, &l, &folds).unwrap();
        assert!(mse >= 0.9 * v, "{mse} vs {v}");
        assert!(mse <= 1.5 * v);
        assert_eq!(mse, cv_mse(&x, &y, &l, &folds).unwrap());
    }

    #[test]
    fn coverage_summaries() {
        assert!(coverage_summary(&[]).is_err());
        let all: Vec<CoverageRecord> = (0..10)
            .map(|i| CoverageRecord {
                covered: true,
                length: 2e300,
                kind: IntervalKind::Ols,
                iterate: i,
            })
            .collect();
        assert_eq!(coverage_summary(&all).unwrap().coverage_rate, 1.0);

        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let coin: Vec<CoverageRecord> = (0..1000)
            .map(|i| CoverageRecord {
                covered: rng.random::<bool>(),
                length: i as f64,
                kind: IntervalKind::Qrf,
                iterate: i,
            })
            .collect();
        let s = coverage_summary(&coin).unwrap();
        assert!((s.coverage_rate - 0.5).abs() <= 0.05);
        assert_eq!(s.median_length, 499.5);
        assert_eq!(s.mean_length, 499.5);
    }
}
