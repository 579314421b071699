//! MCAR amputation of covariates.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{DataMatrix, MissMask};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmputeConfig {
    pub rate: f64,
    pub seed: u64,
}

/// Masks exactly `floor(rate·n·p)` covariate cells chosen uniformly without
/// replacement. Rows or columns left fully missing then get one uniformly
/// chosen cell unmasked. The response is never touched.
pub fn ampute_mcar(data: &DataMatrix, config: &AmputeConfig) -> Result<MissMask> {
    ampute_shape(data.n(), data.p(), config)
}

pub(crate) fn ampute_shape(n: usize, p: usize, config: &AmputeConfig) -> Result<MissMask> {
    let rate = config.rate;
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("missing rate must be in [0, 1), got {rate}")));
    }
    let cells = n * p;
    let target = (rate * cells as f64).floor() as usize;
    // At least one observed cell per row and per column.
    let capacity = cells - n.max(p);
    if target > capacity {
        return Err(Error::Unsatisfiable(format!(
            "cannot mask {target} of {cells} cells in a {n}x{p} matrix while keeping every row and column observed"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut observed = vec![true; cells];
    for c in index::sample(&mut rng, cells, target) {
        observed[c] = false;
    }

    for i in 0..n {
        if (0..p).all(|j| !observed[i * p + j]) {
            let j = rng.random_range(0..p);
            observed[i * p + j] = true;
        }
    }
    for j in 0..p {
        if (0..n).all(|i| !observed[i * p + j]) {
            let i = rng.random_range(0..n);
            observed[i * p + j] = true;
        }
    }
    MissMask::new(n, p, observed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Matrix;

    fn data(n: usize, p: usize) -> DataMatrix {
        DataMatrix::with_default_names(
            Matrix::from_vec(n, p, (0..n * p).map(|v| v as f64).collect()).unwrap(),
            vec![0.0; n],
        )
        .unwrap()
    }

    #[test]
    fn zero_rate_masks_nothing() {
        let m = ampute_mcar(&data(8, 3), &AmputeConfig { rate: 0.0, seed: 1 }).unwrap();
        assert_eq!(m, MissMask::all_observed(8, 3));
    }

    #[test]
    fn exact_count() {
        let m = ampute_mcar(&data(10, 10), &AmputeConfig { rate: 0.5, seed: 4 }).unwrap();
        assert_eq!(m.total_missing(), 50);
    }

    #[test]
    fn deterministic() {
        let d = data(20, 5);
        let cfg = AmputeConfig { rate: 0.3, seed: 77 };
        assert_eq!(ampute_mcar(&d, &cfg).unwrap(), ampute_mcar(&d, &cfg).unwrap());
    }

    #[test]
    fn invalid_rates() {
        let d = data(4, 4);
        assert!(ampute_mcar(&d, &AmputeConfig { rate: 1.0, seed: 0 }).is_err());
        assert!(ampute_mcar(&d, &AmputeConfig { rate: -0.1, seed: 0 }).is_err());
    }

    #[test]
    fn unsatisfiable_rate() {
        // a single covariate cannot lose any cell
        assert!(matches!(
            ampute_mcar(&data(10, 1), &AmputeConfig { rate: 0.2, seed: 0 }),
            Err(Error::Unsatisfiable(_))
        ));
    }

    #[test]
    fn repair_keeps_rows_and_columns_observed() {
        for seed in 0..200 {
            let m = ampute_mcar(&data(6, 2), &AmputeConfig { rate: 0.45, seed }).unwrap();
            let target = (0.45f64 * 12.0).floor() as usize;
            assert!(m.total_missing() <= target);
            assert!(target - m.total_missing() <= 6 + 2);
            for j in 0..2 {
                assert!(m.observed_count(j) >= 1);
            }
        }
    }

    #[test]
    fn cell_frequencies_uniform() {
        let d = data(10, 10);
        let mut counts = vec![0usize; 100];
        let reps = 2000;
        for seed in 0..reps {
            let m = ampute_mcar(&d, &AmputeConfig { rate: 0.1, seed }).unwrap();
            for (i, j) in m.missing_cells() {
                counts[i * 10 + j] += 1;
            }
        }
        for c in counts {
            let freq = c as f64 / reps as f64;
            assert!((freq - 0.1).abs() <= 0.03, "freq {freq}");
        }
    }
}
