//! Experiment drivers. Iterates run in parallel, each from its own derived
//! seed, and rows are emitted in iterate order.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use super::config::{DataSource, ExperimentConfig, ExperimentKind, SynthSpec};
use super::seed::derive_seed;
use crate::amputation::{ampute_mcar, AmputeConfig};
use crate::dataset::{load_csv, make_folds, DataMatrix, Matrix, MissMask};
use crate::error::{Error, Result};
use crate::imputation::{impute, ImputeConfig, ImputeMethod};
use crate::intervals::{pi_ols, ForestIntervals, IntervalKind};
use crate::learners::{fit_forest, fit_ols, ForestConfig, Learner, PredictorKind};
use crate::metrics::{cv_mse, nrmse};
use crate::synthgen::{calibrate_noise, generate_with_noise, SynthConfig};

pub const CSV_HEADER: [&str; 11] = [
    "experiment",
    "iterate",
    "missing_rate",
    "imputer",
    "method",
    "nrmse",
    "cv_mse",
    "covered",
    "length",
    "wall_time_ms",
    "seed",
];

/// Imputer label of complete-data interval rows.
pub const COMPLETE_CASE: &str = "none";
/// Imputer label of the no-missingness CV baseline.
pub const TRUE_BASELINE: &str = "true";
/// Imputer label of the predictor trained directly on masked data.
pub const INTERNAL: &str = "internal";

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub iterate: usize,
    pub missing_rate: f64,
    pub imputer: String,
    /// Predictor name (accuracy runs) or interval kind (interval runs).
    pub method: String,
    pub nrmse: Option<f64>,
    pub cv_mse: Option<f64>,
    pub covered: Option<bool>,
    pub length: Option<f64>,
    pub wall_time_ms: Option<f64>,
    /// Iterate seed; with the config it reproduces the row.
    pub seed: u64,
}

impl ResultRow {
    fn record(&self) -> [String; 11] {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        [
            self.experiment.clone(),
            self.iterate.to_string(),
            self.missing_rate.to_string(),
            self.imputer.clone(),
            self.method.clone(),
            opt(self.nrmse),
            opt(self.cv_mse),
            self.covered.map(|c| c.to_string()).unwrap_or_default(),
            opt(self.length),
            opt(self.wall_time_ms),
            self.seed.to_string(),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    /// Calibrated noise variance of synthetic sources.
    pub noise_variance: Option<f64>,
    pub iterate_seeds: Vec<u64>,
}

/// Root seed of iterate `i`; every stage seed of the iterate derives from it.
pub fn iterate_seed(master_seed: u64, i: usize) -> u64 {
    derive_seed(master_seed, i as u64, "iterate")
}

fn stage_seed(iter_seed: u64, tag: &str) -> u64 {
    derive_seed(iter_seed, 0, tag)
}

pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    match config.kind {
        ExperimentKind::EmpiricalAccuracy => run_empirical_accuracy(config),
        ExperimentKind::SyntheticIntervals => run_synthetic_intervals(config),
    }
}

/// Fixed dataset of a CSV source, or the calibrated noise variance of a
/// synthetic one.
enum Prepared<'a> {
    Fixed(DataMatrix),
    Synthetic { spec: &'a SynthSpec, sigma2: f64 },
}

impl Prepared<'_> {
    fn new(config: &ExperimentConfig) -> Result<Prepared<'_>> {
        Ok(match &config.source {
            DataSource::Csv { path, options } => {
                let data = load_csv(path, options)?;
                Prepared::Fixed(if config.standardize { data.standardized() } else { data })
            }
            DataSource::Synthetic(spec) => Prepared::Synthetic {
                spec,
                sigma2: calibrate_noise(&spec.model, &spec.cov, spec.target_sn, config.master_seed)?,
            },
        })
    }

    fn sigma2(&self) -> Option<f64> {
        match self {
            Prepared::Fixed(_) => None,
            Prepared::Synthetic { sigma2, .. } => Some(*sigma2),
        }
    }

    fn draw(&self, n: usize, seed: u64) -> Result<DataMatrix> {
        match self {
            Prepared::Fixed(d) => Ok(d.clone()),
            Prepared::Synthetic { spec, sigma2 } => {
                generate_with_noise(&synth_config(spec, *sigma2), *sigma2, n, seed)
            }
        }
    }

    fn n(&self) -> usize {
        match self {
            Prepared::Fixed(d) => d.n(),
            Prepared::Synthetic { spec, .. } => spec.n,
        }
    }
}

fn synth_config(spec: &SynthSpec, sigma2: f64) -> SynthConfig {
    SynthConfig {
        n: spec.n,
        cov: spec.cov,
        model: spec.model.clone(),
        target_sn: spec.target_sn,
        seed: 0,
        noise_variance: Some(sigma2),
    }
}

fn elapsed_ms(start: Instant, enabled: bool) -> Option<f64> {
    enabled.then(|| start.elapsed().as_secs_f64() * 1e3)
}

/// NRMSE over the masked cells; empty when undefined.
fn imputation_error(completed: &Matrix, truth: &Matrix, mask: &MissMask) -> Result<Option<f64>> {
    if mask.total_missing() == 0 {
        return Ok(None);
    }
    match nrmse(completed, truth, mask) {
        Ok(v) => Ok(Some(v)),
        Err(Error::ZeroDenominator) => Ok(None),
        Err(e) => Err(e),
    }
}

fn impute_config(config: &ExperimentConfig, method: ImputeMethod, seed: u64) -> ImputeConfig {
    ImputeConfig {
        method,
        seed,
        ..config.impute.clone()
    }
}

fn predictor(config: &ExperimentConfig, kind: PredictorKind, iter_seed: u64) -> Learner {
    config
        .learner(kind)
        .with_seed(stage_seed(iter_seed, &format!("predictor-{}", kind.name())))
}

fn run_iterates<F>(config: &ExperimentConfig, f: F) -> Result<Vec<ResultRow>>
where
    F: Fn(usize, u64) -> Result<Vec<ResultRow>> + Sync,
{
    let per_iterate: Vec<Vec<ResultRow>> = (0..config.mc_iterates)
        .into_par_iter()
        .map(|i| f(i, iterate_seed(config.master_seed, i)))
        .collect::<Result<_>>()?;
    Ok(per_iterate.into_iter().flatten().collect())
}

/// Ampute, impute with every imputer, record NRMSE and the CV-MSE of every
/// predictor on the completed data. The no-missingness baseline is
/// recorded once per predictor (iterate 0); the internal XGBoost path once
/// per iterate and rate.
pub fn run_empirical_accuracy(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    if config.kind != ExperimentKind::EmpiricalAccuracy {
        return Err(Error::Config("not an empirical_accuracy config".into()));
    }
    let prepared = Prepared::new(config)?;
    let n = prepared.n();
    if config.k_folds > n {
        return Err(Error::Config(format!("k_folds = {} exceeds n = {n}", config.k_folds)));
    }
    let timed = config.record_wall_time;

    let mut rows = Vec::new();
    let seed0 = iterate_seed(config.master_seed, 0);
    let data0 = prepared.draw(n, stage_seed(seed0, "data"))?;
    let folds0 = make_folds(n, config.k_folds, stage_seed(seed0, "folds"))?;
    for &kind in &config.predictors {
        let start = Instant::now();
        let cv = cv_mse(&data0.x, &data0.y, &predictor(config, kind, seed0), &folds0)?;
        rows.push(ResultRow {
            experiment: config.id.clone(),
            iterate: 0,
            missing_rate: 0.0,
            imputer: TRUE_BASELINE.into(),
            method: kind.name().into(),
            nrmse: None,
            cv_mse: Some(cv),
            covered: None,
            length: None,
            wall_time_ms: elapsed_ms(start, timed),
            seed: seed0,
        });
    }

    rows.extend(run_iterates(config, |i, seed| {
        let data = prepared.draw(n, stage_seed(seed, "data"))?;
        let folds = make_folds(n, config.k_folds, stage_seed(seed, "folds"))?;
        let mut out = Vec::new();
        let row = |rate: f64, imputer: &str, method: &str| ResultRow {
            experiment: config.id.clone(),
            iterate: i,
            missing_rate: rate,
            imputer: imputer.into(),
            method: method.into(),
            nrmse: None,
            cv_mse: None,
            covered: None,
            length: None,
            wall_time_ms: None,
            seed,
        };
        for &rate in &config.missing_rates {
            let mask = ampute_mcar(
                &data,
                &AmputeConfig {
                    rate,
                    seed: stage_seed(seed, &format!("ampute-{rate}")),
                },
            )?;
            let masked = data.masked_x(&mask);
            for &method in &config.imputers {
                let start = Instant::now();
                let icfg = impute_config(config, method, stage_seed(seed, &format!("impute-{rate}-{}", method.name())));
                let completed = impute(&masked, &mask, &icfg)?.completed;
                let err = imputation_error(&completed, &data.x, &mask)?;
                let impute_ms = elapsed_ms(start, timed);
                for &kind in &config.predictors {
                    let start = Instant::now();
                    let cv = cv_mse(&completed, &data.y, &predictor(config, kind, seed), &folds)?;
                    out.push(ResultRow {
                        nrmse: err,
                        cv_mse: Some(cv),
                        wall_time_ms: impute_ms.zip(elapsed_ms(start, timed)).map(|(a, b)| a + b),
                        ..row(rate, method.name(), kind.name())
                    });
                }
            }
            if config.internal_xgb {
                let start = Instant::now();
                let cv = cv_mse(&masked, &data.y, &predictor(config, PredictorKind::Xgb, seed), &folds)?;
                out.push(ResultRow {
                    cv_mse: Some(cv),
                    wall_time_ms: elapsed_ms(start, timed),
                    ..row(rate, INTERNAL, PredictorKind::Xgb.name())
                });
            }
        }
        Ok(out)
    })?);

    Ok(RunOutput {
        rows,
        noise_variance: prepared.sigma2(),
        iterate_seeds: (0..config.mc_iterates).map(|i| iterate_seed(config.master_seed, i)).collect(),
    })
}

/// Per iterate: draw training data and fresh test points, then for the
/// complete-data control and every (rate, imputer) pair fit a forest on the
/// completed data and record each interval kind at each test point.
pub fn run_synthetic_intervals(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    if config.kind != ExperimentKind::SyntheticIntervals {
        return Err(Error::Config("not a synthetic_intervals config".into()));
    }
    let prepared = Prepared::new(config)?;
    let n = prepared.n();
    let timed = config.record_wall_time;
    let needs_forest = config.interval_kinds.iter().any(|&k| k != IntervalKind::Ols);
    let needs_ols = config.interval_kinds.contains(&IntervalKind::Ols);

    // (rate, imputer); `None` is the complete-data control.
    let mut scenarios: Vec<(f64, Option<ImputeMethod>)> = Vec::new();
    if config.complete_case || config.missing_rates.contains(&0.0) {
        scenarios.push((0.0, None));
    }
    for &rate in config.missing_rates.iter().filter(|&&r| r > 0.0) {
        scenarios.extend(config.imputers.iter().map(|&m| (rate, Some(m))));
    }

    let rows = run_iterates(config, |i, seed| {
        let data = prepared.draw(n, stage_seed(seed, "data"))?;
        let test = prepared.draw(config.test_points_per_iterate, stage_seed(seed, "test"))?;
        let mut out = Vec::new();
        for &(rate, method) in &scenarios {
            let start = Instant::now();
            let label = method.map_or(COMPLETE_CASE, |m| m.name());
            let (completed, err) = match method {
                None => (data.x.clone(), None),
                Some(m) => {
                    let mask = ampute_mcar(
                        &data,
                        &AmputeConfig {
                            rate,
                            seed: stage_seed(seed, &format!("ampute-{rate}")),
                        },
                    )?;
                    let icfg = impute_config(config, m, stage_seed(seed, &format!("impute-{rate}-{label}")));
                    let completed = impute(&data.masked_x(&mask), &mask, &icfg)?.completed;
                    let err = imputation_error(&completed, &data.x, &mask)?;
                    (completed, err)
                }
            };
            let forest = if needs_forest {
                let fc = ForestConfig {
                    seed: stage_seed(seed, &format!("forest-{rate}-{label}")),
                    ..config.forest.clone()
                };
                Some(fit_forest(&completed, &data.y, &fc)?)
            } else {
                None
            };
            let intervals = forest
                .as_ref()
                .map(|f| ForestIntervals::new(f, &completed, &data.y))
                .transpose()?;
            let ols = if needs_ols { Some(fit_ols(&completed, &data.y)?) } else { None };
            let wall = elapsed_ms(start, timed);

            for &kind in &config.interval_kinds {
                for t in 0..test.n() {
                    let xq = test.x.row(t);
                    let pi = match (kind, &intervals, &ols) {
                        (IntervalKind::Ols, _, Some(m)) => pi_ols(m, xq, config.level)?,
                        (_, Some(fi), _) => fi.interval(kind, xq, config.level)?,
                        _ => unreachable!("models are fitted for every configured kind"),
                    };
                    out.push(ResultRow {
                        experiment: config.id.clone(),
                        iterate: i,
                        missing_rate: rate,
                        imputer: label.into(),
                        method: kind.name().into(),
                        nrmse: err,
                        cv_mse: None,
                        covered: Some(pi.contains(test.y[t])),
                        length: Some(pi.length()),
                        wall_time_ms: wall,
                        seed,
                    });
                }
            }
        }
        Ok(out)
    })?;

    Ok(RunOutput {
        rows,
        noise_variance: prepared.sigma2(),
        iterate_seeds: (0..config.mc_iterates).map(|i| iterate_seed(config.master_seed, i)).collect(),
    })
}

pub fn write_results(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |e: csv::Error| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    w.write_record(CSV_HEADER).map_err(io_err)?;
    for r in rows {
        w.write_record(r.record()).map_err(io_err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Plain-text run description: versions, seeds and the config echo.
pub fn manifest(config: &ExperimentConfig, output: &RunOutput, config_text: Option<&str>) -> String {
    let mut m = String::new();
    let _ = writeln!(m, "{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"));
    let _ = writeln!(m, "experiment = {}", config.id);
    let _ = writeln!(m, "kind = {}", config.kind.name());
    let _ = writeln!(m, "master_seed = {}", config.master_seed);
    let _ = writeln!(m, "mc_iterates = {}", config.mc_iterates);
    let _ = writeln!(m, "rows = {}", output.rows.len());
    if let Some(s) = output.noise_variance {
        let _ = writeln!(m, "noise_variance = {s}");
    }
    let _ = writeln!(m, "\n[iterate_seeds]");
    for (i, s) in output.iterate_seeds.iter().enumerate() {
        let _ = writeln!(m, "{i} = {s}");
    }
    let _ = writeln!(m, "\n[config]");
    match config_text {
        Some(t) => m.push_str(t),
        None => {
            let _ = writeln!(m, "{config:#?}");
        }
    }
    m
}

/// Runs `config` and writes `results.csv` and `manifest.txt` into its
/// output directory. Returns the results path.
pub fn run_to_dir(config: &ExperimentConfig, config_text: Option<&str>) -> Result<PathBuf> {
    let output = run(config)?;
    let dir = &config.output_dir;
    let io = |source| Error::Io {
        path: dir.clone(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    let results = dir.join("results.csv");
    write_results(&output.rows, &results)?;
    std::fs::write(dir.join("manifest.txt"), manifest(config, &output, config_text)).map_err(io)?;
    Ok(results)
}
