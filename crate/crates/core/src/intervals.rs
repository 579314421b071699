//! Pointwise prediction intervals from a fitted random forest (quantile
//! regression forest, OOB-residual quantiles, three Gaussian intervals with
//! different residual-variance estimates) and the classical OLS interval.

use serde::Deserialize;
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::erf::erfc;

use crate::dataset::Matrix;
use crate::error::{Error, Result};
use crate::learners::{ForestModel, LinearModel};

/// Slack for comparing accumulated weights against a quantile level.
const LEVEL_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
pub enum IntervalKind {
    #[serde(rename = "qrf")]
    Qrf,
    #[serde(rename = "emp_q")]
    EmpQ,
    #[serde(rename = "res_var")]
    ResVar,
    #[serde(rename = "m_correct")]
    MCorrect,
    #[serde(rename = "weighted")]
    Weighted,
    #[serde(rename = "ols")]
    Ols,
}

impl IntervalKind {
    pub const ALL: [IntervalKind; 6] = [
        IntervalKind::Qrf,
        IntervalKind::EmpQ,
        IntervalKind::ResVar,
        IntervalKind::MCorrect,
        IntervalKind::Weighted,
        IntervalKind::Ols,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IntervalKind::Qrf => "qrf",
            IntervalKind::EmpQ => "emp_q",
            IntervalKind::ResVar => "res_var",
            IntervalKind::MCorrect => "m_correct",
            IntervalKind::Weighted => "weighted",
            IntervalKind::Ols => "ols",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub kind: IntervalKind,
}

impl PredictionInterval {
    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lower <= y && y <= self.upper
    }
}

fn check_level(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("level must be in (0, 1), got {level}")));
    }
    Ok(1.0 - level)
}

/// Standard normal quantile.
///
/// Acklam's rational approximation (relative error below 1.2e-9) followed
/// by one Halley step against `erfc`.
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let e = 0.5 * erfc(-x / std::f64::consts::SQRT_2) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}

/// Type-1 empirical quantile (left-continuous inverse of the ECDF) of
/// ascending `sorted` values.
pub fn type1_quantile(sorted: &[f64], beta: f64) -> f64 {
    let n = sorted.len();
    let k = ((beta * n as f64) - LEVEL_EPS * n as f64).ceil() as usize;
    sorted[k.clamp(1, n) - 1]
}

/// OOB residuals and the three residual-variance estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualStats {
    /// `y_i - oob_prediction_i` for rows with at least one OOB tree.
    pub oob_residuals: Vec<f64>,
    /// OOB tree count of each valid row, aligned with `oob_residuals`.
    pub oob_counts: Vec<usize>,
    /// Mean squared OOB residual.
    pub sigma2_simple: f64,
    /// `max(0, sigma2_simple - v̄/M)`, with `v̄` the mean per-row variance of
    /// the individual OOB-tree predictions (rows with two or more OOB trees).
    pub sigma2_mcorrect: f64,
    /// OOB-count weighted mean of squared residuals.
    pub sigma2_weighted: f64,
}

pub fn residual_stats(model: &ForestModel, x: &Matrix, y: &[f64]) -> Result<ResidualStats> {
    if x.nrows() != model.n_train() || y.len() != model.n_train() {
        return Err(Error::DimensionMismatch {
            expected: model.n_train(),
            actual: y.len(),
        });
    }
    let oob = model.oob_predict(x);
    let mut oob_residuals = Vec::new();
    let mut oob_counts = Vec::new();
    let mut var_sum = 0.0;
    let mut var_rows = 0usize;
    for i in 0..y.len() {
        if let Some(pred) = oob.predictions[i] {
            oob_residuals.push(y[i] - pred);
            oob_counts.push(oob.counts[i]);
            if oob.counts[i] >= 2 {
                var_sum += oob.tree_variance[i];
                var_rows += 1;
            }
        }
    }
    if oob_residuals.len() < 2 {
        return Err(Error::Insufficient(format!(
            "{} rows have OOB predictions; need at least 2",
            oob_residuals.len()
        )));
    }
    let k = oob_residuals.len() as f64;
    let sigma2_simple = oob_residuals.iter().map(|r| r * r).sum::<f64>() / k;
    let v_bar = if var_rows > 0 { var_sum / var_rows as f64 } else { 0.0 };
    let sigma2_mcorrect = (sigma2_simple - v_bar / model.n_trees() as f64).max(0.0);
    let (wsum, csum) = oob_residuals
        .iter()
        .zip(&oob_counts)
        .fold((0.0, 0.0), |(ws, cs), (r, &c)| (ws + c as f64 * r * r, cs + c as f64));
    Ok(ResidualStats {
        oob_residuals,
        oob_counts,
        sigma2_simple,
        sigma2_mcorrect,
        sigma2_weighted: wsum / csum,
    })
}

/// Quantile-regression-forest interval: bounds are the `α/2` and `1-α/2`
/// generalized-inverse quantiles of the forest-weighted response
/// distribution at `x`, and therefore always training responses.
pub fn pi_qrf(model: &ForestModel, y_train: &[f64], x: &[f64], level: f64) -> Result<PredictionInterval> {
    let alpha = check_level(level)?;
    if y_train.len() != model.n_train() {
        return Err(Error::DimensionMismatch {
            expected: model.n_train(),
            actual: y_train.len(),
        });
    }
    let w = model.qrf_weights(x);
    let mut order: Vec<usize> = (0..y_train.len()).filter(|&i| w[i] > 0.0).collect();
    if order.is_empty() {
        return Err(Error::invalid("degenerate QRF weights"));
    }
    order.sort_by(|&a, &b| y_train[a].total_cmp(&y_train[b]));
    let quantile = |beta: f64| {
        let mut cdf = 0.0;
        let mut k = 0;
        while k < order.len() {
            let value = y_train[order[k]];
            while k < order.len() && y_train[order[k]] == value {
                cdf += w[order[k]];
                k += 1;
            }
            if cdf >= beta - LEVEL_EPS {
                return value;
            }
        }
        y_train[order[order.len() - 1]]
    };
    Ok(PredictionInterval {
        lower: quantile(alpha / 2.0),
        upper: quantile(1.0 - alpha / 2.0),
        level,
        kind: IntervalKind::Qrf,
    })
}

/// `[m̂(x) + q_{α/2}, m̂(x) + q_{1-α/2}]` with type-1 quantiles of the OOB
/// residuals.
pub fn pi_emp_q(model: &ForestModel, stats: &ResidualStats, x: &[f64], level: f64) -> Result<PredictionInterval> {
    let alpha = check_level(level)?;
    if stats.oob_residuals.is_empty() {
        return Err(Error::Insufficient("no OOB residuals".into()));
    }
    let mut sorted = stats.oob_residuals.clone();
    sorted.sort_by(f64::total_cmp);
    let m = model.predict(x);
    Ok(PredictionInterval {
        lower: m + type1_quantile(&sorted, alpha / 2.0),
        upper: m + type1_quantile(&sorted, 1.0 - alpha / 2.0),
        level,
        kind: IntervalKind::EmpQ,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceKind {
    Simple,
    MCorrect,
    Weighted,
}

impl VarianceKind {
    pub fn interval_kind(self) -> IntervalKind {
        match self {
            VarianceKind::Simple => IntervalKind::ResVar,
            VarianceKind::MCorrect => IntervalKind::MCorrect,
            VarianceKind::Weighted => IntervalKind::Weighted,
        }
    }
}

/// `m̂(x) ± z_{1-α/2} σ̂` for the selected residual variance.
pub fn pi_gaussian(
    model: &ForestModel,
    stats: &ResidualStats,
    x: &[f64],
    level: f64,
    variance: VarianceKind,
) -> Result<PredictionInterval> {
    let alpha = check_level(level)?;
    let sigma2 = match variance {
        VarianceKind::Simple => stats.sigma2_simple,
        VarianceKind::MCorrect => stats.sigma2_mcorrect,
        VarianceKind::Weighted => stats.sigma2_weighted,
    };
    let half = normal_quantile(1.0 - alpha / 2.0) * sigma2.max(0.0).sqrt();
    let m = model.predict(x);
    Ok(PredictionInterval {
        lower: m - half,
        upper: m + half,
        level,
        kind: variance.interval_kind(),
    })
}

/// Classical OLS prediction interval
/// `x̃ᵀβ̂ ± t_{1-α/2, n-p-1} sqrt(σ̂² (1 + x̃ᵀ(XᵀX)⁻¹x̃))`.
pub fn pi_ols(model: &LinearModel, x: &[f64], level: f64) -> Result<PredictionInterval> {
    let alpha = check_level(level)?;
    if x.len() != model.p() {
        return Err(Error::DimensionMismatch {
            expected: model.p(),
            actual: x.len(),
        });
    }
    if model.n <= model.coef.len() {
        return Err(Error::Insufficient("OLS interval needs n - p - 1 > 0".into()));
    }
    let t = StudentsT::new(0.0, 1.0, model.df() as f64)
        .map_err(|e| Error::invalid(e.to_string()))?
        .inverse_cdf(1.0 - alpha / 2.0);
    let half = t * (model.sigma2_hat * (1.0 + model.leverage(x))).sqrt();
    let m = model.predict(x);
    Ok(PredictionInterval {
        lower: m - half,
        upper: m + half,
        level,
        kind: IntervalKind::Ols,
    })
}

/// A fitted forest with everything needed to build any forest interval.
#[derive(Debug, Clone)]
pub struct ForestIntervals<'a> {
    pub model: &'a ForestModel,
    pub y_train: &'a [f64],
    pub stats: ResidualStats,
}

impl<'a> ForestIntervals<'a> {
    pub fn new(model: &'a ForestModel, x_train: &Matrix, y_train: &'a [f64]) -> Result<Self> {
        Ok(Self {
            model,
            y_train,
            stats: residual_stats(model, x_train, y_train)?,
        })
    }

    pub fn interval(&self, kind: IntervalKind, x: &[f64], level: f64) -> Result<PredictionInterval> {
        match kind {
            IntervalKind::Qrf => pi_qrf(self.model, self.y_train, x, level),
            IntervalKind::EmpQ => pi_emp_q(self.model, &self.stats, x, level),
            IntervalKind::ResVar => pi_gaussian(self.model, &self.stats, x, level, VarianceKind::Simple),
            IntervalKind::MCorrect => {
                pi_gaussian(self.model, &self.stats, x, level, VarianceKind::MCorrect)
            }
            IntervalKind::Weighted => {
                pi_gaussian(self.model, &self.stats, x, level, VarianceKind::Weighted)
            }
            IntervalKind::Ols => Err(Error::invalid("ols intervals need a linear model")),
        }
    }
}
