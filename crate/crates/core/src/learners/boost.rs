//! Gradient tree boosting for squared loss: stochastic gradient boosting
//! (mean leaves fitted to residuals) and an XGBoost-style variant with
//! L2-penalized Newton leaves and learned default directions for missing
//! values.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tree::{fit_tree, LeafRule, TreeModel, TreeParams};
use crate::dataset::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoostVariant {
    Sgb,
    Xgb,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgbConfig {
    pub n_rounds: usize,
    pub shrinkage: f64,
    pub subsample: f64,
    pub max_depth: usize,
    pub min_node_size: usize,
    pub seed: u64,
}

impl Default for SgbConfig {
    fn default() -> Self {
        Self {
            n_rounds: 300,
            shrinkage: 0.05,
            subsample: 0.5,
            max_depth: 3,
            min_node_size: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct XgbConfig {
    pub n_rounds: usize,
    pub shrinkage: f64,
    pub lambda: f64,
    pub max_depth: usize,
    pub subsample: f64,
    pub min_node_size: usize,
    /// Learn default directions for missing values.
    pub learn_missing: bool,
    pub seed: u64,
}

impl Default for XgbConfig {
    fn default() -> Self {
        Self {
            n_rounds: 300,
            shrinkage: 0.05,
            lambda: 1.0,
            max_depth: 4,
            subsample: 0.8,
            min_node_size: 1,
            learn_missing: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostModel {
    pub base_prediction: f64,
    pub trees: Vec<TreeModel>,
    pub shrinkage: f64,
    pub subsample: f64,
    /// Leaf penalty; 0 for SGB.
    pub lambda: f64,
    pub variant: BoostVariant,
}

impl BoostModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.base_prediction + self.shrinkage * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Vec<f64> {
        (0..x.nrows()).map(|i| self.predict(x.row(i))).collect()
    }
}

fn check_common(x: &Matrix, y: &[f64], shrinkage: f64, subsample: f64, depth: usize) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::Empty("boosting needs at least one row".into()));
    }
    if y.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    if !(shrinkage > 0.0 && shrinkage <= 1.0) {
        return Err(Error::invalid(format!("shrinkage must be in (0, 1], got {shrinkage}")));
    }
    if !(subsample > 0.0 && subsample <= 1.0) {
        return Err(Error::invalid(format!("subsample must be in (0, 1], got {subsample}")));
    }
    if depth == 0 {
        return Err(Error::invalid("max_depth must be >= 1"));
    }
    Ok(())
}

struct Rounds<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    n_rounds: usize,
    shrinkage: f64,
    subsample: f64,
    params: TreeParams,
    seed: u64,
}

impl Rounds<'_> {
    fn run(self) -> Result<(f64, Vec<TreeModel>)> {
        let n = self.x.nrows();
        let base = self.y.iter().sum::<f64>() / n as f64;
        let mut current = vec![base; n];
        let mut residual = vec![0.0; n];
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let take = ((self.subsample * n as f64).floor() as usize).clamp(1, n);
        let mut trees = Vec::with_capacity(self.n_rounds);
        for _ in 0..self.n_rounds {
            for i in 0..n {
                residual[i] = self.y[i] - current[i];
            }
            let rows: Vec<usize> = if take == n {
                (0..n).collect()
            } else {
                let mut r = index::sample(&mut rng, n, take).into_vec();
                r.sort_unstable();
                r
            };
            let tree = fit_tree(self.x, &residual, &rows, &self.params, &mut rng)?;
            for (i, c) in current.iter_mut().enumerate() {
                *c += self.shrinkage * tree.predict(self.x.row(i));
            }
            trees.push(tree);
        }
        Ok((base, trees))
    }
}

/// Stochastic gradient boosting. Starts from `mean(y)`; each round fits a
/// depth-limited tree to the current residuals on a random subsample
/// (without replacement) and adds `shrinkage · tree`.
pub fn fit_sgb(x: &Matrix, y: &[f64], config: &SgbConfig) -> Result<BoostModel> {
    check_common(x, y, config.shrinkage, config.subsample, config.max_depth)?;
    if x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("SGB input contains missing or non-finite cells"));
    }
    let (base, trees) = Rounds {
        x,
        y,
        n_rounds: config.n_rounds,
        shrinkage: config.shrinkage,
        subsample: config.subsample,
        params: TreeParams {
            mtry: None,
            min_node_size: config.min_node_size,
            max_depth: Some(config.max_depth),
            leaf: LeafRule::Mean,
            learn_missing: false,
        },
        seed: config.seed,
    }
    .run()?;
    Ok(BoostModel {
        base_prediction: base,
        trees,
        shrinkage: config.shrinkage,
        subsample: config.subsample,
        lambda: 0.0,
        variant: BoostVariant::Sgb,
    })
}

/// Second-order boosting for squared loss (`g` = residual, `h` = 1), leaf
/// values `Σg / (count + lambda)`. `x` may contain `NaN`; each split sends
/// missing rows to whichever side gives the larger gain and remembers it.
pub fn fit_xgb(x: &Matrix, y: &[f64], config: &XgbConfig) -> Result<BoostModel> {
    check_common(x, y, config.shrinkage, config.subsample, config.max_depth)?;
    if !(config.lambda >= 0.0) {
        return Err(Error::invalid("lambda must be >= 0"));
    }
    if x.as_slice().iter().any(|v| v.is_infinite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("XGB input contains infinite values"));
    }
    let (base, trees) = Rounds {
        x,
        y,
        n_rounds: config.n_rounds,
        shrinkage: config.shrinkage,
        subsample: config.subsample,
        params: TreeParams {
            mtry: None,
            min_node_size: config.min_node_size,
            max_depth: Some(config.max_depth),
            leaf: LeafRule::Newton {
                lambda: config.lambda,
            },
            learn_missing: config.learn_missing,
        },
        seed: config.seed,
    }
    .run()?;
    Ok(BoostModel {
        base_prediction: base,
        trees,
        shrinkage: config.shrinkage,
        subsample: config.subsample,
        lambda: config.lambda,
        variant: BoostVariant::Xgb,
    })
}
