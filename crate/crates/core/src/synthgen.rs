//! Synthetic regression problems: Gaussian covariates under several
//! covariance structures, four regression functions and Gaussian noise
//! calibrated to a target signal-to-noise ratio.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use crate::dataset::{DataMatrix, Matrix};
use crate::error::{Error, Result};
use crate::harness::seed::derive_seed;

/// Number of draws used to estimate `Var(m(X))` during noise calibration.
pub const CALIBRATION_DRAWS: usize = 100_000;

/// Default coefficient vector for `p = 10`.
pub const DEFAULT_BETA: [f64; 10] = [2.0, 4.0, 2.0, -3.0, 1.0, 7.0, -4.0, 0.0, 0.0, 0.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    ArPos,
    ArNeg,
    CompoundSymmetric,
    Toeplitz,
    ScaledIdentity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceSpec {
    pub kind: CovarianceKind,
    pub p: usize,
    /// Correlation parameter for the AR and compound-symmetric kinds.
    pub rho: f64,
    /// Diagonal of the scaled-identity kind.
    pub scale: f64,
}

impl CovarianceSpec {
    /// Spec with the documented defaults: `rho = 0.5` (`-0.5` for
    /// `ArNeg`), `scale = 1`.
    pub fn new(kind: CovarianceKind, p: usize) -> Self {
        let rho = match kind {
            CovarianceKind::ArNeg => -0.5,
            _ => 0.5,
        };
        Self {
            kind,
            p,
            rho,
            scale: 1.0,
        }
    }

    pub fn identity(p: usize) -> Self {
        Self::new(CovarianceKind::ScaledIdentity, p)
    }
}

/// Covariance matrix for `spec`, verified positive definite.
pub fn build_covariance(spec: &CovarianceSpec) -> Result<DMatrix<f64>> {
    let p = spec.p;
    if p == 0 {
        return Err(Error::invalid("covariance dimension must be >= 1"));
    }
    let rho = spec.rho;
    if matches!(
        spec.kind,
        CovarianceKind::ArPos | CovarianceKind::ArNeg | CovarianceKind::CompoundSymmetric
    ) && rho.abs() >= 1.0
    {
        return Err(Error::invalid(format!("|rho| must be < 1, got {rho}")));
    }
    if spec.kind == CovarianceKind::ScaledIdentity && spec.scale <= 0.0 {
        return Err(Error::invalid("scale must be positive"));
    }
    let sigma = DMatrix::from_fn(p, p, |i, j| {
        let lag = i.abs_diff(j);
        match spec.kind {
            CovarianceKind::ArPos | CovarianceKind::ArNeg => rho.powi(lag as i32),
            CovarianceKind::CompoundSymmetric => {
                if lag == 0 {
                    1.0
                } else {
                    rho
                }
            }
            CovarianceKind::Toeplitz => (1.0 - lag as f64 / p as f64).max(0.0),
            CovarianceKind::ScaledIdentity => {
                if lag == 0 {
                    spec.scale
                } else {
                    0.0
                }
            }
        }
    });
    if sigma.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(sigma)
}

/// Draws rows from `N(0, Σ)` as `L z` with `Σ = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    chol: DMatrix<f64>,
}

impl GaussianSampler {
    pub fn new(sigma: &DMatrix<f64>) -> Result<Self> {
        if sigma.nrows() == 0 || sigma.nrows() != sigma.ncols() {
            return Err(Error::invalid("covariance must be square with p >= 1"));
        }
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite)?
            .l();
        Ok(Self { chol })
    }

    pub fn dim(&self) -> usize {
        self.chol.nrows()
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// Fills `out` (length p) with one draw.
    pub fn draw_into<R: Rng>(&self, rng: &mut R, z: &mut [f64], out: &mut [f64]) {
        let p = self.dim();
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for i in 0..p {
            let mut acc = 0.0;
            for k in 0..=i {
                acc += self.chol[(i, k)] * z[k];
            }
            out[i] = acc;
        }
    }

    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Matrix {
        let p = self.dim();
        let mut x = Matrix::zeros(n, p);
        let mut z = vec![0.0; p];
        let mut row = vec![0.0; p];
        for i in 0..n {
            self.draw_into(rng, &mut z, &mut row);
            for (j, v) in row.iter().enumerate() {
                x.set(i, j, *v);
            }
        }
        x
    }
}

/// `n` iid rows from `N(0, sigma)`.
pub fn sample_gaussian(sigma: &DMatrix<f64>, n: usize, seed: u64) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::invalid("sample size must be >= 1"));
    }
    let sampler = GaussianSampler::new(sigma)?;
    Ok(sampler.sample(n, &mut ChaCha8Rng::seed_from_u64(seed)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Polynomial,
    Trigonometric,
    NonContinuous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionModel {
    pub kind: ModelKind,
    pub beta0: Vec<f64>,
}

impl RegressionModel {
    /// Model with the default coefficients, truncated or zero-padded to `p`.
    pub fn with_default_beta(kind: ModelKind, p: usize) -> Self {
        let beta0 = (0..p)
            .map(|j| DEFAULT_BETA.get(j).copied().unwrap_or(0.0))
            .collect();
        Self { kind, beta0 }
    }

    pub fn p(&self) -> usize {
        self.beta0.len()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let b = &self.beta0;
        let dot = || x.iter().zip(b).map(|(xi, bi)| xi * bi).sum::<f64>();
        match self.kind {
            ModelKind::Linear => dot(),
            ModelKind::Polynomial => x
                .iter()
                .zip(b)
                .enumerate()
                .map(|(j, (xi, bi))| bi * xi.powi(j as i32 + 1))
                .sum(),
            ModelKind::Trigonometric => 2.0 * (dot() + 2.0).sin(),
            ModelKind::NonContinuous => {
                if x[2] > 0.5 {
                    b[0] * x[0] + b[1] * x[1] + b[2] * x[2]
                } else {
                    b[3] * x[3] + b[4] * x[4] + 3.0
                }
            }
        }
    }

    fn check(&self) -> Result<()> {
        if self.kind == ModelKind::NonContinuous && self.p() < 5 {
            return Err(Error::invalid("non_continuous model needs p >= 5"));
        }
        Ok(())
    }
}

/// `m(x)` for the configured regression function.
pub fn regression_mean(model: &RegressionModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.p() {
        return Err(Error::DimensionMismatch {
            expected: model.p(),
            actual: x.len(),
        });
    }
    model.check()?;
    Ok(model.eval(x))
}

/// Noise variance giving `Var(m(X)) / σ² = target_sn`, with `Var(m(X))`
/// estimated from [`CALIBRATION_DRAWS`] fresh covariate draws.
pub fn calibrate_noise(
    model: &RegressionModel,
    cov: &CovarianceSpec,
    target_sn: f64,
    seed: u64,
) -> Result<f64> {
    if !(target_sn > 0.0 && target_sn.is_finite()) {
        return Err(Error::invalid("target signal-to-noise must be positive"));
    }
    if cov.p != model.p() {
        return Err(Error::DimensionMismatch {
            expected: model.p(),
            actual: cov.p,
        });
    }
    model.check()?;
    let sampler = GaussianSampler::new(&build_covariance(cov)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0, "calibration"));
    let p = cov.p;
    let mut z = vec![0.0; p];
    let mut row = vec![0.0; p];
    // Welford
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for k in 0..CALIBRATION_DRAWS {
        sampler.draw_into(&mut rng, &mut z, &mut row);
        let v = model.eval(&row);
        let d = v - mean;
        mean += d / (k + 1) as f64;
        m2 += d * (v - mean);
    }
    let var = m2 / (CALIBRATION_DRAWS - 1) as f64;
    if !(var > 0.0) {
        return Err(Error::ZeroSignalVariance);
    }
    Ok(var / target_sn)
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n: usize,
    pub cov: CovarianceSpec,
    pub model: RegressionModel,
    pub target_sn: f64,
    pub seed: u64,
    /// Skip calibration and use this noise variance instead.
    pub noise_variance: Option<f64>,
}

impl SynthConfig {
    pub fn p(&self) -> usize {
        self.cov.p
    }
}

/// Draws a dataset `Y = m(X) + ε` and returns it with the noise variance used.
pub fn generate(config: &SynthConfig) -> Result<(DataMatrix, f64)> {
    if config.n < 2 {
        return Err(Error::invalid("synthetic sample size must be >= 2"));
    }
    let sigma2 = match config.noise_variance {
        Some(s) if s >= 0.0 => s,
        Some(s) => return Err(Error::invalid(format!("negative noise variance {s}"))),
        None => calibrate_noise(&config.model, &config.cov, config.target_sn, config.seed)?,
    };
    let data = generate_with_noise(config, sigma2, config.n, config.seed)?;
    Ok((data, sigma2))
}

/// Draws `n` rows with a known noise variance. Covariates and noise use
/// separate streams derived from `seed`.
pub fn generate_with_noise(
    config: &SynthConfig,
    sigma2: f64,
    n: usize,
    seed: u64,
) -> Result<DataMatrix> {
    if n == 0 {
        return Err(Error::invalid("sample size must be >= 1"));
    }
    if config.cov.p != config.model.p() {
        return Err(Error::DimensionMismatch {
            expected: config.model.p(),
            actual: config.cov.p,
        });
    }
    config.model.check()?;
    let sampler = GaussianSampler::new(&build_covariance(&config.cov)?)?;
    let x = sampler.sample(
        n,
        &mut ChaCha8Rng::seed_from_u64(derive_seed(seed, 0, "covariates")),
    );
    let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0, "noise"));
    let sd = sigma2.sqrt();
    let y = (0..n)
        .map(|i| {
            let eps: f64 = noise_rng.sample(StandardNormal);
            config.model.eval(x.row(i)) + sd * eps
        })
        .collect();
    DataMatrix::with_default_names(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn linear10() -> RegressionModel {
        RegressionModel::with_default_beta(ModelKind::Linear, 10)
    }

    #[test]
    fn scaled_identity_is_identity() {
        let s = build_covariance(&CovarianceSpec::identity(3)).unwrap();
        assert_eq!(s, DMatrix::identity(3, 3));
    }

    #[test]
    fn ar_pos_entries() {
        let s = build_covariance(&CovarianceSpec::new(CovarianceKind::ArPos, 3)).unwrap();
        let want = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.25, 0.5, 1.0, 0.5, 0.25, 0.5, 1.0]);
        assert_eq!(s, want);
    }

    #[test]
    fn ar_neg_alternates_sign() {
        let s = build_covariance(&CovarianceSpec::new(CovarianceKind::ArNeg, 3)).unwrap();
        assert_eq!(s[(0, 1)], -0.5);
        assert_eq!(s[(0, 2)], 0.25);
    }

    #[test]
    fn compound_symmetric_entries() {
        let s = build_covariance(&CovarianceSpec::new(CovarianceKind::CompoundSymmetric, 2))
            .unwrap();
        assert_eq!(s, DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]));
    }

    #[test]
    fn compound_symmetric_below_bound_not_pd() {
        let mut spec = CovarianceSpec::new(CovarianceKind::CompoundSymmetric, 4);
        spec.rho = -0.4; // below -1/(p-1)
        assert!(matches!(build_covariance(&spec), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn toeplitz_band() {
        let s = build_covariance(&CovarianceSpec::new(CovarianceKind::Toeplitz, 4)).unwrap();
        assert_eq!(s[(0, 0)], 1.0);
        assert_eq!(s[(0, 1)], 0.75);
        assert_eq!(s[(0, 3)], 0.25);
    }

    #[test]
    fn all_kinds_reconstruct_from_cholesky() {
        for kind in [
            CovarianceKind::ArPos,
            CovarianceKind::ArNeg,
            CovarianceKind::CompoundSymmetric,
            CovarianceKind::Toeplitz,
            CovarianceKind::ScaledIdentity,
        ] {
            for p in [1, 2, 5, 10, 25] {
                let s = build_covariance(&CovarianceSpec::new(kind, p)).unwrap();
                let l = GaussianSampler::new(&s).unwrap().factor().clone();
                let back = &l * l.transpose();
                for (a, b) in back.iter().zip(s.iter()) {
                    assert!((a - b).abs() < 1e-10, "{kind:?} p={p}");
                }
                assert_eq!(s, s.transpose());
            }
        }
    }

    #[test]
    fn sample_moments_identity() {
        let n = 10_000;
        let x = sample_gaussian(&DMatrix::identity(3, 3), n, 11).unwrap();
        let nf = n as f64;
        for j in 0..3 {
            let mean = x.column(j).iter().sum::<f64>() / nf;
            assert!(mean.abs() < 4.0 / nf.sqrt(), "mean {mean}");
        }
        for a in 0..3 {
            for b in 0..3 {
                let c = (0..n).map(|i| x.get(i, a) * x.get(i, b)).sum::<f64>() / nf;
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((c - want).abs() < 0.1, "cov[{a},{b}] = {c}");
            }
        }
    }

    #[test]
    fn degenerate_sampling_rejected() {
        assert!(sample_gaussian(&DMatrix::identity(2, 2), 0, 1).is_err());
        assert!(sample_gaussian(&DMatrix::zeros(0, 0), 5, 1).is_err());
    }

    #[test]
    fn sampling_deterministic() {
        let s = DMatrix::identity(4, 4);
        assert_eq!(sample_gaussian(&s, 20, 3).unwrap(), sample_gaussian(&s, 20, 3).unwrap());
    }

    #[test]
    fn mean_functions() {
        let mut e1 = vec![0.0; 10];
        e1[0] = 1.0;
        assert_eq!(regression_mean(&linear10(), &e1).unwrap(), 2.0);

        let nc = RegressionModel::with_default_beta(ModelKind::NonContinuous, 10);
        let mut x = vec![0.0; 10];
        x[..3].copy_from_slice(&[1.0, 1.0, 1.0]);
        assert_eq!(regression_mean(&nc, &x).unwrap(), 8.0);

        let trig = RegressionModel::with_default_beta(ModelKind::Trigonometric, 10);
        assert_eq!(regression_mean(&trig, &[0.0; 10]).unwrap(), 2.0 * 2f64.sin());

        let poly = RegressionModel::with_default_beta(ModelKind::Polynomial, 10);
        let x: Vec<f64> = (0..10).map(|_| 2.0).collect();
        let want: f64 = DEFAULT_BETA
            .iter()
            .enumerate()
            .map(|(j, b)| b * 2f64.powi(j as i32 + 1))
            .sum();
        assert_eq!(regression_mean(&poly, &x).unwrap(), want);

        assert!(matches!(
            regression_mean(&linear10(), &[1.0; 3]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn non_continuous_branches_at_threshold() {
        let nc = RegressionModel::with_default_beta(ModelKind::NonContinuous, 10);
        let mut x = vec![1.0; 10];
        x[2] = 0.5 + 1e-12;
        let above = regression_mean(&nc, &x).unwrap();
        assert_eq!(above, 2.0 + 4.0 + 2.0 * x[2]);
        x[2] = 0.5 - 1e-12;
        let below = regression_mean(&nc, &x).unwrap();
        assert_eq!(below, -3.0 + 1.0 + 3.0);
        x[2] = 0.5;
        assert_eq!(regression_mean(&nc, &x).unwrap(), below);
    }

    #[test]
    fn calibration_linear_identity() {
        let cov = CovarianceSpec::identity(10);
        let s1 = calibrate_noise(&linear10(), &cov, 1.0, 5).unwrap();
        assert_relative_eq!(s1, 99.0, max_relative = 0.02);
        let s2 = calibrate_noise(&linear10(), &cov, 2.0, 5).unwrap();
        assert_relative_eq!(s2, 49.5, max_relative = 0.02);
    }

    #[test]
    fn calibration_rejects_constant_model() {
        let m = RegressionModel {
            kind: ModelKind::Linear,
            beta0: vec![0.0; 10],
        };
        assert!(matches!(
            calibrate_noise(&m, &CovarianceSpec::identity(10), 1.0, 1),
            Err(Error::ZeroSignalVariance)
        ));
        assert!(calibrate_noise(&linear10(), &CovarianceSpec::identity(10), 0.0, 1).is_err());
    }

    fn config(n: usize, seed: u64) -> SynthConfig {
        SynthConfig {
            n,
            cov: CovarianceSpec::identity(10),
            model: linear10(),
            target_sn: 1.0,
            seed,
            noise_variance: None,
        }
    }

    #[test]
    fn noiseless_generation() {
        let mut cfg = config(50, 1);
        cfg.noise_variance = Some(0.0);
        let (d, s2) = generate(&cfg).unwrap();
        assert_eq!(s2, 0.0);
        for i in 0..d.n() {
            assert_eq!(d.y[i], regression_mean(&cfg.model, d.x.row(i)).unwrap());
        }
    }

    #[test]
    fn response_variance_at_unit_snr() {
        let (d, _) = generate(&config(1000, 3)).unwrap();
        let n = d.n() as f64;
        let mean = d.y.iter().sum::<f64>() / n;
        let var = d.y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var / 198.0 - 1.0).abs() < 0.1, "Var(Y) = {var}");
    }

    #[test]
    fn generation_deterministic() {
        assert_eq!(generate(&config(30, 8)).unwrap().0, generate(&config(30, 8)).unwrap().0);
    }

    #[test]
    fn noise_independent_of_covariates() {
        let cfg = config(5000, 21);
        let (d, _) = generate(&cfg).unwrap();
        let n = d.n() as f64;
        let eps: Vec<f64> = (0..d.n())
            .map(|i| d.y[i] - regression_mean(&cfg.model, d.x.row(i)).unwrap())
            .collect();
        let corr = |a: &[f64], b: &[f64]| {
            let ma = a.iter().sum::<f64>() / n;
            let mb = b.iter().sum::<f64>() / n;
            let sab: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
            let saa: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
            let sbb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
            sab / (saa * sbb).sqrt()
        };
        for j in 0..10 {
            let r = corr(&eps, &d.x.column(j));
            assert!(r.abs() < 4.0 / n.sqrt(), "corr(eps, x{j}) = {r}");
        }
    }
}
