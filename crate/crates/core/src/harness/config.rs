//! Experiment configuration: a sectioned TOML file with unknown keys
//! rejected, resolved into an [`ExperimentConfig`].

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::dataset::CsvOptions;
use crate::error::{Error, Result};
use crate::imputation::{ImputeConfig, ImputeMethod};
use crate::intervals::IntervalKind;
use crate::learners::{ForestConfig, Learner, PredictorKind, SgbConfig, XgbConfig};
use crate::synthgen::{CovarianceKind, CovarianceSpec, ModelKind, RegressionModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Imputation error and post-imputation CV-MSE.
    EmpiricalAccuracy,
    /// Coverage and length of prediction intervals.
    SyntheticIntervals,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::EmpiricalAccuracy => "empirical_accuracy",
            ExperimentKind::SyntheticIntervals => "synthetic_intervals",
        }
    }

    pub fn default_iterates(self) -> usize {
        match self {
            ExperimentKind::EmpiricalAccuracy => 50,
            ExperimentKind::SyntheticIntervals => 200,
        }
    }
}

/// Generative model for synthetic data. The noise variance is calibrated
/// once per run from the master seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n: usize,
    pub cov: CovarianceSpec,
    pub model: RegressionModel,
    pub target_sn: f64,
}

#[derive(Debug, Clone)]
pub enum DataSource {
    Csv { path: PathBuf, options: CsvOptions },
    Synthetic(SynthSpec),
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Value of the `experiment` column.
    pub id: String,
    pub kind: ExperimentKind,
    pub source: DataSource,
    pub missing_rates: Vec<f64>,
    pub imputers: Vec<ImputeMethod>,
    pub predictors: Vec<PredictorKind>,
    pub interval_kinds: Vec<IntervalKind>,
    pub mc_iterates: usize,
    pub level: f64,
    pub k_folds: usize,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub test_points_per_iterate: usize,
    /// Also train the XGBoost-style predictor directly on the masked data.
    pub internal_xgb: bool,
    /// Add complete-data control rows (`imputer = none`) to interval runs.
    pub complete_case: bool,
    /// Standardize CSV covariates before amputation.
    pub standardize: bool,
    pub record_wall_time: bool,
    pub forest: ForestConfig,
    pub sgb: SgbConfig,
    pub xgb: XgbConfig,
    /// Imputer settings; `method` and `seed` are set per run.
    pub impute: ImputeConfig,
}

impl ExperimentConfig {
    /// Defaults for `kind` on `source`: forest predictor, miss_forest
    /// imputer, all forest interval kinds.
    pub fn new(kind: ExperimentKind, source: DataSource) -> Self {
        Self {
            id: kind.name().to_string(),
            kind,
            source,
            missing_rates: vec![0.1, 0.2, 0.3, 0.5],
            imputers: vec![ImputeMethod::MissForest],
            predictors: vec![PredictorKind::Forest],
            interval_kinds: default_interval_kinds(),
            mc_iterates: kind.default_iterates(),
            level: 0.95,
            k_folds: 5,
            master_seed: 0,
            output_dir: PathBuf::from("results"),
            test_points_per_iterate: 1,
            internal_xgb: false,
            complete_case: true,
            standardize: false,
            record_wall_time: false,
            forest: ForestConfig::default(),
            sgb: SgbConfig::default(),
            xgb: XgbConfig::default(),
            impute: ImputeConfig::new(ImputeMethod::MissForest, 0),
        }
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text)?;
        // Relative dataset paths are taken from the config file's directory.
        if let DataSource::Csv { path: data, .. } = &mut cfg.source {
            if data.is_relative() {
                if let Some(dir) = path.parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        file.resolve()
    }

    pub fn learner(&self, kind: PredictorKind) -> Learner {
        match kind {
            PredictorKind::Forest => Learner::Forest(self.forest.clone()),
            PredictorKind::Sgb => Learner::Sgb(self.sgb.clone()),
            PredictorKind::Xgb => Learner::Xgb(self.xgb.clone()),
            PredictorKind::Linear => Learner::Linear,
        }
    }

    /// Checks everything that can be checked without touching data.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.mc_iterates == 0 {
            return fail("mc_iterates must be >= 1".into());
        }
        if self.id.is_empty() {
            return fail("experiment id must not be empty".into());
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return fail(format!("level must be in (0, 1), got {}", self.level));
        }
        for &r in &self.missing_rates {
            if !(0.0..1.0).contains(&r) {
                return fail(format!("missing rate {r} outside [0, 1)"));
            }
        }
        if self.imputers.is_empty() {
            return fail("imputers must not be empty".into());
        }
        match self.kind {
            ExperimentKind::EmpiricalAccuracy => {
                if self.missing_rates.is_empty() {
                    return fail("missing_rates must not be empty".into());
                }
                if self.predictors.is_empty() && !self.internal_xgb {
                    return fail("predictors must not be empty".into());
                }
                if self.k_folds < 2 {
                    return fail("k_folds must be >= 2".into());
                }
            }
            ExperimentKind::SyntheticIntervals => {
                if self.interval_kinds.is_empty() {
                    return fail("interval_kinds must not be empty".into());
                }
                if self.missing_rates.is_empty() && !self.complete_case {
                    return fail("no missing rates and complete_case disabled".into());
                }
                if self.test_points_per_iterate == 0 {
                    return fail("test_points_per_iterate must be >= 1".into());
                }
                if !matches!(self.source, DataSource::Synthetic(_)) {
                    return fail("synthetic_intervals needs a [synth] section".into());
                }
            }
        }
        if let DataSource::Synthetic(s) = &self.source {
            if s.n < 2 {
                return fail("synth.n must be >= 2".into());
            }
            if s.cov.p == 0 || s.cov.p != s.model.p() {
                return fail(format!(
                    "synth.p = {} but beta has {} entries",
                    s.cov.p,
                    s.model.p()
                ));
            }
            if s.model.kind == ModelKind::NonContinuous && s.cov.p < 5 {
                return fail("non_continuous model needs p >= 5".into());
            }
            if !(s.target_sn > 0.0 && s.target_sn.is_finite()) {
                return fail("target_sn must be positive".into());
            }
        }
        if self.forest.m_trees == 0 || self.impute.forest.m_trees == 0 || self.impute.mice_rf.m_trees == 0 {
            return fail("forest sizes must be >= 1".into());
        }
        if self.forest.min_node_size == 0 {
            return fail("forest.min_node_size must be >= 1".into());
        }
        if self.impute.max_iter == 0 || self.impute.pmm_donors == 0 {
            return fail("impute.max_iter and impute.pmm_donors must be >= 1".into());
        }
        for (name, shrink, sub) in [
            ("sgb", self.sgb.shrinkage, self.sgb.subsample),
            ("xgb", self.xgb.shrinkage, self.xgb.subsample),
        ] {
            if !(shrink > 0.0 && shrink <= 1.0) || !(sub > 0.0 && sub <= 1.0) {
                return fail(format!("{name}: shrinkage and subsample must be in (0, 1]"));
            }
        }
        if self.xgb.lambda < 0.0 {
            return fail("xgb.lambda must be >= 0".into());
        }
        Ok(())
    }
}

fn default_interval_kinds() -> Vec<IntervalKind> {
    vec![
        IntervalKind::Qrf,
        IntervalKind::EmpQ,
        IntervalKind::ResVar,
        IntervalKind::MCorrect,
        IntervalKind::Weighted,
    ]
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    experiment: ExperimentSection,
    dataset: Option<DatasetSection>,
    synth: Option<SynthSection>,
    forest: Option<ForestSection>,
    sgb: Option<BoostSection>,
    xgb: Option<BoostSection>,
    impute: Option<ImputeSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentSection {
    kind: ExperimentKind,
    id: Option<String>,
    mc_iterates: Option<usize>,
    level: Option<f64>,
    k_folds: Option<usize>,
    master_seed: Option<u64>,
    output_dir: Option<PathBuf>,
    missing_rates: Option<Vec<f64>>,
    imputers: Option<Vec<ImputeMethod>>,
    predictors: Option<Vec<PredictorKind>>,
    interval_kinds: Option<Vec<IntervalKind>>,
    test_points_per_iterate: Option<usize>,
    internal_xgb: Option<bool>,
    complete_case: Option<bool>,
    standardize: Option<bool>,
    record_wall_time: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetSection {
    path: PathBuf,
    response: String,
    delimiter: Option<char>,
    max_rows: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthSection {
    n: usize,
    p: Option<usize>,
    covariance: Option<CovarianceKind>,
    rho: Option<f64>,
    scale: Option<f64>,
    model: Option<ModelKind>,
    beta: Option<Vec<f64>>,
    target_sn: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ForestSection {
    m_trees: Option<usize>,
    mtry: Option<usize>,
    min_node_size: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoostSection {
    n_rounds: Option<usize>,
    shrinkage: Option<f64>,
    subsample: Option<f64>,
    max_depth: Option<usize>,
    min_node_size: Option<usize>,
    lambda: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImputeSection {
    max_iter: Option<usize>,
    pmm_donors: Option<usize>,
    /// Trees per forest inside miss_forest.
    forest_trees: Option<usize>,
    mice_rf_trees: Option<usize>,
    /// Boosting rounds inside gbm_impute and xgb_impute.
    boost_rounds: Option<usize>,
}

impl ConfigFile {
    fn resolve(self) -> Result<ExperimentConfig> {
        let e = self.experiment;
        let source = match (self.dataset, self.synth) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("give either [dataset] or [synth], not both".into()))
            }
            (None, None) => return Err(Error::Config("missing [dataset] or [synth] section".into())),
            (Some(d), None) => {
                if !d.delimiter.unwrap_or(',').is_ascii() {
                    return Err(Error::Config("dataset.delimiter must be ASCII".into()));
                }
                DataSource::Csv {
                    path: d.path,
                    options: CsvOptions {
                        response: d.response,
                        delimiter: d.delimiter.unwrap_or(',') as u8,
                        max_rows: d.max_rows,
                    },
                }
            }
            (None, Some(s)) => DataSource::Synthetic(s.resolve()?),
        };

        let mut cfg = ExperimentConfig::new(e.kind, source);
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(v) = e.$field { cfg.$field = v; })* };
        }
        set!(
            id,
            mc_iterates,
            level,
            k_folds,
            master_seed,
            output_dir,
            missing_rates,
            imputers,
            predictors,
            interval_kinds,
            test_points_per_iterate,
            internal_xgb,
            complete_case,
            standardize,
            record_wall_time
        );

        if let Some(f) = self.forest {
            cfg.forest.m_trees = f.m_trees.unwrap_or(cfg.forest.m_trees);
            cfg.forest.mtry = f.mtry.or(cfg.forest.mtry);
            cfg.forest.min_node_size = f.min_node_size.unwrap_or(cfg.forest.min_node_size);
        }
        if let Some(b) = self.sgb {
            if b.lambda.is_some() {
                return Err(Error::Config("sgb has no lambda".into()));
            }
            let s = &mut cfg.sgb;
            s.n_rounds = b.n_rounds.unwrap_or(s.n_rounds);
            s.shrinkage = b.shrinkage.unwrap_or(s.shrinkage);
            s.subsample = b.subsample.unwrap_or(s.subsample);
            s.max_depth = b.max_depth.unwrap_or(s.max_depth);
            s.min_node_size = b.min_node_size.unwrap_or(s.min_node_size);
        }
        if let Some(b) = self.xgb {
            let x = &mut cfg.xgb;
            x.n_rounds = b.n_rounds.unwrap_or(x.n_rounds);
            x.shrinkage = b.shrinkage.unwrap_or(x.shrinkage);
            x.subsample = b.subsample.unwrap_or(x.subsample);
            x.max_depth = b.max_depth.unwrap_or(x.max_depth);
            x.min_node_size = b.min_node_size.unwrap_or(x.min_node_size);
            x.lambda = b.lambda.unwrap_or(x.lambda);
        }

        // Imputer learners follow the predictor sections unless overridden.
        cfg.impute.forest = cfg.forest.clone();
        cfg.impute.sgb = cfg.sgb.clone();
        cfg.impute.xgb = cfg.xgb.clone();
        if let Some(i) = self.impute {
            let imp = &mut cfg.impute;
            imp.max_iter = i.max_iter.unwrap_or(imp.max_iter);
            imp.pmm_donors = i.pmm_donors.unwrap_or(imp.pmm_donors);
            imp.forest.m_trees = i.forest_trees.unwrap_or(imp.forest.m_trees);
            imp.mice_rf.m_trees = i.mice_rf_trees.unwrap_or(imp.mice_rf.m_trees);
            if let Some(r) = i.boost_rounds {
                imp.sgb.n_rounds = r;
                imp.xgb.n_rounds = r;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl SynthSection {
    fn resolve(self) -> Result<SynthSpec> {
        let p = match (self.p, &self.beta) {
            (Some(p), Some(b)) if p != b.len() => {
                return Err(Error::Config(format!("synth.p = {p} but beta has {} entries", b.len())))
            }
            (Some(p), _) => p,
            (None, Some(b)) => b.len(),
            (None, None) => 10,
        };
        let kind = self.model.unwrap_or(ModelKind::Linear);
        let model = match self.beta {
            Some(beta0) => RegressionModel { kind, beta0 },
            None => RegressionModel::with_default_beta(kind, p),
        };
        let mut cov = CovarianceSpec::new(self.covariance.unwrap_or(CovarianceKind::ScaledIdentity), p);
        cov.rho = self.rho.unwrap_or(cov.rho);
        cov.scale = self.scale.unwrap_or(cov.scale);
        Ok(SynthSpec {
            n: self.n,
            cov,
            model,
            target_sn: self.target_sn.unwrap_or(1.0),
        })
    }
}
