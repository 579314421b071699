use super::{check_inputs, initialize_fill, relative_change, ImputeConfig, ImputeMethod, ImputeResult};
use crate::dataset::{Matrix, MissMask};
use crate::error::{Error, Result};
use crate::harness::seed::derive_seed;
use crate::learners::Learner;

/// Iterative imputation in the missForest pattern.
///
/// Starts from the mean fill. Each iteration visits the incomplete columns
/// in increasing order of missing count; column `j` is regressed on all other
/// (currently completed) columns using its observed rows, and its missing
/// cells are overwritten with the predictions. Iteration stops at the first
/// `t` whose relative change exceeds that of `t-1`, returning the `t-1`
/// matrix, or after `max_iter` iterations.
pub fn impute_iterative(x: &Matrix, mask: &MissMask, config: &ImputeConfig) -> Result<ImputeResult> {
    check_inputs(x, mask)?;
    let learner = match config.method {
        ImputeMethod::MissForest => Learner::Forest(config.forest.clone()),
        ImputeMethod::GbmImpute => Learner::Sgb(config.sgb.clone()),
        ImputeMethod::XgbImpute => Learner::Xgb(config.xgb.clone()),
        other => {
            return Err(Error::invalid(format!(
                "{} is not an iterative learner-based method",
                other.name()
            )))
        }
    };
    let mut current = initialize_fill(x, mask)?;
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
        return Err(Error::invalid("iterative imputation needs at least two columns"));
    }

    let mut order: Vec<usize> = (0..x.ncols()).filter(|&j| mask.missing_count(j) > 0).collect();
    order.sort_by_key(|&j| (mask.missing_count(j), j));

    let mut trace = Vec::new();
    for t in 1..=config.max_iter {
        let previous = current.clone();
        for &j in &order {
            let observed = mask.observed_rows(j);
            let others = current.without_column(j);
            let target: Vec<f64> = observed.iter().map(|&i| current.get(i, j)).collect();
            let seed = derive_seed(config.seed, t as u64, &format!("column-{j}"));
            let model = learner.with_seed(seed).fit(&others.select_rows(&observed), &target)?;
            for i in mask.missing_rows(j) {
                current.set(i, j, model.predict(others.row(i)));
            }
        }
        let delta = relative_change(&current, &previous, &cells);
        trace.push(delta);
        if t > 1 && delta > trace[t - 2] {
            return Ok(ImputeResult {
                completed: previous,
                iterations_run: t,
                delta_trace: trace,
                returned_iteration: t - 1,
            });
        }
    }
    Ok(ImputeResult {
        completed: current,
        iterations_run: config.max_iter,
        delta_trace: trace,
        returned_iteration: config.max_iter,
    })
}
