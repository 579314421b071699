//! Regression learners and a uniform fit/predict wrapper over them.

pub mod boost;
pub mod forest;
pub mod linear;
pub mod tree;

pub use boost::{fit_sgb, fit_xgb, BoostModel, BoostVariant, SgbConfig, XgbConfig};
pub use forest::{fit_forest, ForestConfig, ForestModel, OobPredictions};
pub use linear::{fit_ols, LinearModel};
pub use tree::{fit_tree, LeafRule, Node, TreeModel, TreeParams};

use serde::Deserialize;

use crate::dataset::Matrix;
use crate::error::Result;

/// Prediction model names accepted in configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Forest,
    Sgb,
    Xgb,
    Linear,
}

impl PredictorKind {
    pub fn name(self) -> &'static str {
        match self {
            PredictorKind::Forest => "forest",
            PredictorKind::Sgb => "sgb",
            PredictorKind::Xgb => "xgb",
            PredictorKind::Linear => "linear",
        }
    }
}

/// A learner together with its hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Learner {
    Forest(ForestConfig),
    Sgb(SgbConfig),
    Xgb(XgbConfig),
    Linear,
}

impl Learner {
    pub fn fit(&self, x: &Matrix, y: &[f64]) -> Result<Fitted> {
        Ok(match self {
            Learner::Forest(c) => Fitted::Forest(fit_forest(x, y, c)?),
            Learner::Sgb(c) => Fitted::Boost(fit_sgb(x, y, c)?),
            Learner::Xgb(c) => Fitted::Boost(fit_xgb(x, y, c)?),
            Learner::Linear => Fitted::Linear(fit_ols(x, y)?),
        })
    }

    /// Same learner with its random seed replaced.
    pub fn with_seed(&self, seed: u64) -> Learner {
        match self {
            Learner::Forest(c) => Learner::Forest(ForestConfig { seed, ..c.clone() }),
            Learner::Sgb(c) => Learner::Sgb(SgbConfig { seed, ..c.clone() }),
            Learner::Xgb(c) => Learner::Xgb(XgbConfig { seed, ..c.clone() }),
            Learner::Linear => Learner::Linear,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Fitted {
    Forest(ForestModel),
    Boost(BoostModel),
    Linear(LinearModel),
}

impl Fitted {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Fitted::Forest(m) => m.predict(x),
            Fitted::Boost(m) => m.predict(x),
            Fitted::Linear(m) => m.predict(x),
        }
    }
}
