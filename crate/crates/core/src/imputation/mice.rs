//! Chained-equation imputation: each sweep visits every incomplete column
//! in index order and redraws its missing cells from a model fitted on the
//! column's observed rows against all other columns.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use super::{check_inputs, random_draw_fill, relative_change, ImputeConfig, ImputeResult};
use crate::dataset::{Matrix, MissMask};
use crate::error::{Error, Result};
use crate::harness::seed::derive_seed;
use crate::learners::forest::fit_forest;
use crate::learners::linear::{design_with_intercept, ridge_solve, RIDGE};
use crate::learners::ForestConfig;

enum Step<'a> {
    Norm,
    Pmm { donors: usize },
    Rf { forest: &'a ForestConfig },
}

/// Bayesian linear regression draws (normal model with a parameter draw
/// per column and sweep).
pub fn mice_norm(x: &Matrix, mask: &MissMask, config: &ImputeConfig) -> Result<ImputeResult> {
    run(x, mask, config, Step::Norm)
}

/// Predictive mean matching: donors are the `pmm_donors` observed rows whose
/// fitted means are closest to the missing row's drawn mean.
pub fn mice_pmm(x: &Matrix, mask: &MissMask, config: &ImputeConfig) -> Result<ImputeResult> {
    run(
        x,
        mask,
        config,
        Step::Pmm {
            donors: config.pmm_donors,
        },
    )
}

/// Random-forest donors: a missing cell takes the observed value of a row
/// drawn uniformly from the in-bag members of the leaf it reaches in one
/// uniformly chosen tree.
pub fn mice_rf(x: &Matrix, mask: &MissMask, config: &ImputeConfig) -> Result<ImputeResult> {
    run(
        x,
        mask,
        config,
        Step::Rf {
            forest: &config.mice_rf,
        },
    )
}

fn run(x: &Matrix, mask: &MissMask, config: &ImputeConfig, step: Step<'_>) -> Result<ImputeResult> {
    check_inputs(x, mask)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0, "mice"));
    let mut current = random_draw_fill(x, mask, &mut rng)?;
    let cells = mask.missing_cells();
    if cells.is_empty() {
        return Ok(ImputeResult {
            completed: current,
            iterations_run: 0,
            delta_trace: Vec::new(),
            returned_iteration: 0,
        });
    }
    if x.ncols() < 2 {
        return Err(Error::invalid("chained equations need at least two columns"));
    }

    let columns: Vec<usize> = (0..x.ncols()).filter(|&j| mask.missing_count(j) > 0).collect();
    let mut trace = Vec::with_capacity(config.max_iter);
    for sweep in 1..=config.max_iter {
        let previous = current.clone();
        for &j in &columns {
            let observed = mask.observed_rows(j);
            let missing = mask.missing_rows(j);
            let others = current.without_column(j);
            let target: Vec<f64> = observed.iter().map(|&i| current.get(i, j)).collect();
            let values = match step {
                Step::Norm | Step::Pmm { .. } => {
                    linear_step(&others, &observed, &missing, &target, &step, &mut rng)?
                }
                Step::Rf { forest } => {
                    let cfg = ForestConfig {
                        seed: derive_seed(config.seed, sweep as u64, &format!("mice-rf-{j}")),
                        ..forest.clone()
                    };
                    rf_step(&others, &observed, &missing, &target, &cfg, &mut rng)?
                }
            };
            for (&i, v) in missing.iter().zip(values) {
                current.set(i, j, v);
            }
        }
        trace.push(relative_change(&current, &previous, &cells));
    }
    Ok(ImputeResult {
        completed: current,
        iterations_run: config.max_iter,
        delta_trace: trace,
        returned_iteration: config.max_iter,
    })
}

fn linear_step(
    others: &Matrix,
    observed: &[usize],
    missing: &[usize],
    target: &[f64],
    step: &Step<'_>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let design_obs = design_with_intercept(others, observed);
    let q = design_obs.ncols();
    let sol = ridge_solve(&design_obs, &DVector::from_column_slice(target), RIDGE)?;

    let df = observed.len().saturating_sub(q).max(1) as f64;
    let chi2: f64 = ChiSquared::new(df)
        .map_err(|e| Error::invalid(e.to_string()))?
        .sample(rng);
    let sigma_star = (sol.rss / chi2).sqrt();
    let chol = sol
        .gram_inv
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite)?
        .l();
    let z = DVector::from_iterator(q, (0..q).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let beta_star = &sol.coef + chol * z * sigma_star;

    let design_mis = design_with_intercept(others, missing);
    let mean_mis = &design_mis * &beta_star;
    match step {
        Step::Norm => Ok(mean_mis
            .iter()
            .map(|m| m + sigma_star * rng.sample::<f64, _>(StandardNormal))
            .collect()),
        Step::Pmm { donors } => {
            let fitted_obs = &design_obs * &sol.coef;
            let k = (*donors).min(observed.len());
            let mut order: Vec<usize> = (0..observed.len()).collect();
            Ok(mean_mis
                .iter()
                .map(|&m| {
                    order.sort_by(|&a, &b| {
                        (fitted_obs[a] - m)
                            .abs()
                            .total_cmp(&(fitted_obs[b] - m).abs())
                            .then(a.cmp(&b))
                    });
                    target[order[rng.random_range(0..k)]]
                })
                .collect())
        }
        Step::Rf { .. } => unreachable!(),
    }
}

fn rf_step(
    others: &Matrix,
    observed: &[usize],
    missing: &[usize],
    target: &[f64],
    forest: &ForestConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let model = fit_forest(&others.select_rows(observed), target, forest)?;
    let mut pool = Vec::new();
    Ok(missing
        .iter()
        .map(|&i| {
            let tree = &model.trees()[rng.random_range(0..model.n_trees())];
            pool.clear();
            pool.extend_from_slice(tree.leaf_members(others.row(i)));
            pool.sort_unstable();
            pool.dedup();
            target[pool[rng.random_range(0..pool.len())]]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imputation::{impute, ImputeMethod};

    /// `x1 = 1 + 2 x0` exactly; `x1` missing on every fourth row.
    fn exact_linear(n: usize, seed: u64) -> (Matrix, MissMask) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Matrix::zeros(n, 3);
        for i in 0..n {
            let a: f64 = rng.sample(StandardNormal);
            x.set(i, 0, a);
            x.set(i, 1, 1.0 + 2.0 * a);
            x.set(i, 2, rng.random::<f64>());
        }
        let mut obs = vec![true; n * 3];
        for i in (0..n).step_by(4) {
            obs[i * 3 + 1] = false;
        }
        (x, MissMask::new(n, 3, obs).unwrap())
    }

    #[test]
    fn norm_recovers_noiseless_relation() {
        let (x, mask) = exact_linear(400, 1);
        let r = mice_norm(&x, &mask, &ImputeConfig::new(ImputeMethod::MiceNorm, 2)).unwrap();
        // Posterior scale: RSS is ~0, so allow a few ulps-scale errors.
        let missing = mask.missing_rows(1);
        let close = missing
            .iter()
            .filter(|&&i| (r.completed.get(i, 1) - x.get(i, 1)).abs() < 1e-6)
            .count();
        assert!(close as f64 >= 0.99 * missing.len() as f64);
    }

    #[test]
    fn norm_deterministic() {
        let (x, mask) = exact_linear(50, 3);
        let mut noisy = x.clone();
        for i in 0..50 {
            noisy.set(i, 2, x.get(i, 2) + i as f64 * 0.01);
        }
        let cfg = ImputeConfig::new(ImputeMethod::MiceNorm, 9);
        assert_eq!(mice_norm(&noisy, &mask, &cfg).unwrap(), mice_norm(&noisy, &mask, &cfg).unwrap());
    }

    #[test]
    fn pmm_single_donor_hand_case() {
        // x1 = 2 x0 observed at x0 = 1, 2, 4, 5; the missing row has
        // x0 = 3.4, fitted mean 6.8, nearest observed mean 8.
        let x = Matrix::from_vec(5, 2, vec![1.0, 2.0, 2.0, 4.0, 3.4, f64::NAN, 4.0, 8.0, 5.0, 10.0])
            .unwrap();
        let mask = MissMask::new(5, 2, vec![true, true, true, true, true, false, true, true, true, true])
            .unwrap();
        let mut cfg = ImputeConfig::new(ImputeMethod::MicePmm, 5);
        cfg.pmm_donors = 1;
        let r = mice_pmm(&x, &mask, &cfg).unwrap();
        assert_eq!(r.completed.get(2, 1), 8.0);
    }

    #[test]
    fn pmm_values_come_from_observed() {
        let (x, mask) = exact_linear(40, 4);
        let observed: Vec<f64> = mask.observed_rows(1).iter().map(|&i| x.get(i, 1)).collect();
        for seed in 0..100 {
            let r = impute(&x, &mask, &ImputeConfig::new(ImputeMethod::MicePmm, seed)).unwrap();
            for i in mask.missing_rows(1) {
                assert!(observed.contains(&r.completed.get(i, 1)));
            }
        }
    }

    #[test]
    fn pmm_pool_clamped_to_available_rows() {
        let (x, mask) = exact_linear(12, 5);
        let mut cfg = ImputeConfig::new(ImputeMethod::MicePmm, 1);
        cfg.pmm_donors = 100;
        assert!(mice_pmm(&x, &mask, &cfg).is_ok());
    }

    #[test]
    fn rf_values_within_observed_range() {
        let (x, mask) = exact_linear(60, 6);
        let observed: Vec<f64> = mask.observed_rows(1).iter().map(|&i| x.get(i, 1)).collect();
        let r = mice_rf(&x, &mask, &ImputeConfig::new(ImputeMethod::MiceRf, 7)).unwrap();
        for i in mask.missing_rows(1) {
            assert!(observed.contains(&r.completed.get(i, 1)));
        }
        let cfg = ImputeConfig::new(ImputeMethod::MiceRf, 7);
        assert_eq!(r, mice_rf(&x, &mask, &cfg).unwrap());
    }

    #[test]
    fn rf_single_leaf_draws_uniformly_from_observed() {
        let n = 21;
        let mut x = Matrix::zeros(n, 2);
        for i in 0..n {
            x.set(i, 0, i as f64);
            x.set(i, 1, (i % 4) as f64);
        }
        let mut obs = vec![true; n * 2];
        obs[20 * 2 + 1] = false;
        let mask = MissMask::new(n, 2, obs).unwrap();
        let mut cfg = ImputeConfig::new(ImputeMethod::MiceRf, 0);
        cfg.max_iter = 1;
        cfg.mice_rf = ForestConfig {
            m_trees: 1,
            min_node_size: 1000,
            bootstrap: false,
            ..Default::default()
        };
        let mut counts = [0usize; 4];
        let reps = 4000;
        for seed in 0..reps {
            cfg.seed = seed;
            let v = mice_rf(&x, &mask, &cfg).unwrap().completed.get(20, 1);
            counts[v as usize] += 1;
        }
        // observed rows 0..20 hold values 0,1,2,3 with counts 5,5,5,5
        for c in counts {
            let f = c as f64 / reps as f64;
            assert!((f - 0.25).abs() < 0.03, "{counts:?}");
        }
    }
}
