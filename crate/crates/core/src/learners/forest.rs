//! Random forest regression with in-bag bookkeeping.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::tree::{fit_tree, LeafRule, TreeModel, TreeParams};
use crate::dataset::Matrix;
use crate::error::{Error, Result};
use crate::harness::seed::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct ForestConfig {
    pub m_trees: usize,
    /// Features tried per split; `None` means `max(1, floor(p/3))`.
    pub mtry: Option<usize>,
    pub min_node_size: usize,
    /// Draw a bootstrap sample per tree; otherwise every tree sees each
    /// row exactly once.
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            m_trees: 100,
            mtry: None,
            min_node_size: 5,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn resolved_mtry(&self, p: usize) -> usize {
        self.mtry.unwrap_or((p / 3).max(1)).clamp(1, p.max(1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    trees: Vec<TreeModel>,
    /// `inbag[t][i]`: times row `i` was drawn for tree `t`.
    inbag: Vec<Vec<u32>>,
    n_train: usize,
    config: ForestConfig,
}

/// Out-of-bag predictions for the training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct OobPredictions {
    /// Mean prediction over trees that did not see the row; `None` if every
    /// tree saw it.
    pub predictions: Vec<Option<f64>>,
    /// Number of OOB trees per row.
    pub counts: Vec<usize>,
    /// Sample variance of the individual OOB-tree predictions (0 when fewer
    /// than two OOB trees).
    pub tree_variance: Vec<f64>,
}

impl OobPredictions {
    pub fn valid_fraction(&self) -> f64 {
        let valid = self.predictions.iter().filter(|p| p.is_some()).count();
        valid as f64 / self.predictions.len() as f64
    }
}

/// Fits `m_trees` CART trees, each on its own bootstrap sample. Per-tree
/// randomness derives from `(seed, tree index)`, so results do not depend
/// on scheduling.
pub fn fit_forest(x: &Matrix, y: &[f64], config: &ForestConfig) -> Result<ForestModel> {
    let n = x.nrows();
    let p = x.ncols();
    if n == 0 || p == 0 {
        return Err(Error::Empty("forest needs n >= 1 and p >= 1".into()));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: y.len(),
        });
    }
    if config.m_trees == 0 {
        return Err(Error::invalid("m_trees must be >= 1"));
    }
    if config.mtry.is_some_and(|m| m == 0 || m > p) {
        return Err(Error::invalid(format!("mtry must be in 1..={p}")));
    }
    if x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("forest input contains missing or non-finite cells"));
    }
    let params = TreeParams {
        mtry: Some(config.resolved_mtry(p)),
        min_node_size: config.min_node_size,
        max_depth: None,
        leaf: LeafRule::Mean,
        learn_missing: false,
    };

    let fitted: Vec<(TreeModel, Vec<u32>)> = (0..config.m_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, t as u64, "tree"));
            let mut counts = vec![0u32; n];
            let rows: Vec<usize> = if config.bootstrap {
                let mut rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                rows.sort_unstable();
                rows
            } else {
                (0..n).collect()
            };
            for &i in &rows {
                counts[i] += 1;
            }
            fit_tree(x, y, &rows, &params, &mut rng).map(|tree| (tree, counts))
        })
        .collect::<Result<_>>()?;

    let (trees, inbag) = fitted.into_iter().unzip();
    Ok(ForestModel {
        trees,
        inbag,
        n_train: n,
        config: config.clone(),
    })
}

impl ForestModel {
    /// Assembles a forest from fitted trees and their in-bag counts.
    pub fn from_parts(
        trees: Vec<TreeModel>,
        inbag: Vec<Vec<u32>>,
        config: ForestConfig,
    ) -> Result<Self> {
        if trees.is_empty() || trees.len() != inbag.len() {
            return Err(Error::invalid("need one in-bag vector per tree"));
        }
        let n_train = inbag[0].len();
        if inbag.iter().any(|c| c.len() != n_train) {
            return Err(Error::invalid("in-bag vectors differ in length"));
        }
        Ok(Self {
            trees,
            inbag,
            n_train,
            config,
        })
    }

    pub fn trees(&self) -> &[TreeModel] {
        &self.trees
    }

    pub fn inbag(&self) -> &[Vec<u32>] {
        &self.inbag
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    /// Average of the trees' leaf values at `x`.
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Vec<f64> {
        (0..x.nrows()).map(|i| self.predict(x.row(i))).collect()
    }

    /// OOB predictions for the training matrix the forest was fitted on.
    pub fn oob_predict(&self, x_train: &Matrix) -> OobPredictions {
        let n = self.n_train;
        let mut predictions = Vec::with_capacity(n);
        let mut counts = Vec::with_capacity(n);
        let mut tree_variance = Vec::with_capacity(n);
        for i in 0..n {
            let row = x_train.row(i);
            let preds: Vec<f64> = self
                .trees
                .iter()
                .zip(&self.inbag)
                .filter(|(_, bag)| bag[i] == 0)
                .map(|(t, _)| t.predict(row))
                .collect();
            let k = preds.len();
            counts.push(k);
            if k == 0 {
                predictions.push(None);
                tree_variance.push(0.0);
                continue;
            }
            let mean = preds.iter().sum::<f64>() / k as f64;
            predictions.push(Some(mean));
            tree_variance.push(if k > 1 {
                preds.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64
            } else {
                0.0
            });
        }
        OobPredictions {
            predictions,
            counts,
            tree_variance,
        }
    }

    /// Quantile-regression-forest weights of the training rows at `x`.
    ///
    /// In each tree, a row's weight is its multiplicity among the members of
    /// the leaf reached by `x` divided by the leaf size; weights are then
    /// averaged over trees.
    pub fn qrf_weights(&self, x: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.n_train];
        let m = self.trees.len() as f64;
        for tree in &self.trees {
            let members = tree.leaf_members(x);
            let share = 1.0 / (members.len() as f64 * m);
            for &i in members {
                w[i] += share;
            }
        }
        w
    }
}
