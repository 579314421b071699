//! CART regression trees with exact split search.
//!
//! One builder serves the forest, SGB and XGB-style learners: the leaf rule
//! selects between mean leaves and penalized Newton leaves, and missing
//! values (`NaN`) can be routed along a learned default direction.

use rand::seq::index;
use rand::Rng;

use crate::dataset::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LeafRule {
    /// Leaf value is the mean target of its members.
    Mean,
    /// Leaf value is `Σ g / (count + lambda)` for squared loss (`h = 1`).
    Newton { lambda: f64 },
}

impl LeafRule {
    fn lambda(self) -> f64 {
        match self {
            LeafRule::Mean => 0.0,
            LeafRule::Newton { lambda } => lambda,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeParams {
    /// Features sampled per split; `None` uses all.
    pub mtry: Option<usize>,
    pub min_node_size: usize,
    pub max_depth: Option<usize>,
    pub leaf: LeafRule,
    /// Learn a default direction for missing values at each split.
    /// When disabled, missing values always go left.
    pub learn_missing: bool,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            mtry: None,
            min_node_size: 1,
            max_depth: None,
            leaf: LeafRule::Mean,
            learn_missing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        /// Where a missing feature value goes.
        default_left: bool,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
        /// Training rows routed here, with bootstrap multiplicity.
        members: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeModel {
    nodes: Vec<Node>,
}

impl TreeModel {
    /// Single leaf holding `members`.
    pub fn leaf(value: f64, members: Vec<usize>) -> Self {
        Self {
            nodes: vec![Node::Leaf { value, members }],
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Index of the leaf reached by `x`. `x <= threshold` goes left.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { .. } => return id,
                Node::Split {
                    feature,
                    threshold,
                    default_left,
                    left,
                    right,
                } => {
                    let v = x[*feature];
                    let go_left = if v.is_nan() {
                        *default_left
                    } else {
                        v <= *threshold
                    };
                    id = if go_left { *left } else { *right };
                }
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf { value, .. } => *value,
            Node::Split { .. } => unreachable!(),
        }
    }

    /// Members of the leaf reached by `x`.
    pub fn leaf_members(&self, x: &[f64]) -> &[usize] {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf { members, .. } => members,
            Node::Split { .. } => unreachable!(),
        }
    }
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    default_left: bool,
    gain: f64,
}

struct Builder<'a, R> {
    x: &'a Matrix,
    target: &'a [f64],
    params: &'a TreeParams,
    lambda: f64,
    rng: &'a mut R,
    nodes: Vec<Node>,
}

/// Fits a tree on `rows` (duplicates allowed) of `x` against `target`.
///
/// Splits greedily maximize the reduction in squared error (or the
/// penalized Newton gain), considering midpoints between consecutive
/// distinct values. A node is split only if it holds at least
/// `2·min_node_size` rows and both children keep `min_node_size`.
/// Equal gains resolve to the lowest feature index, then lowest threshold.
pub fn fit_tree<R: Rng>(
    x: &Matrix,
    target: &[f64],
    rows: &[usize],
    params: &TreeParams,
    rng: &mut R,
) -> Result<TreeModel> {
    if rows.is_empty() {
        return Err(Error::Empty("tree needs at least one row".into()));
    }
    if target.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            actual: target.len(),
        });
    }
    if params.min_node_size == 0 {
        return Err(Error::invalid("min_node_size must be >= 1"));
    }
    let mut builder = Builder {
        x,
        target,
        params,
        lambda: params.leaf.lambda(),
        rng,
        nodes: Vec::new(),
    };
    builder.build(rows.to_vec(), 0);
    Ok(TreeModel {
        nodes: builder.nodes,
    })
}

impl<R: Rng> Builder<'_, R> {
    fn build(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: 0.0,
            members: Vec::new(),
        });

        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        let split = if depth_ok && rows.len() >= 2 * self.params.min_node_size {
            self.best_split(&rows)
        } else {
            None
        };

        match split {
            None => {
                let value = self.leaf_value(&rows);
                self.nodes[id] = Node::Leaf {
                    value,
                    members: rows,
                };
            }
            Some(s) => {
                let (lrows, rrows): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| {
                    let v = self.x.get(i, s.feature);
                    if v.is_nan() {
                        s.default_left
                    } else {
                        v <= s.threshold
                    }
                });
                let left = self.build(lrows, depth + 1);
                let right = self.build(rrows, depth + 1);
                self.nodes[id] = Node::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    default_left: s.default_left,
                    left,
                    right,
                };
            }
        }
        id
    }

    fn leaf_value(&self, rows: &[usize]) -> f64 {
        let sum: f64 = rows.iter().map(|&i| self.target[i]).sum();
        sum / (rows.len() as f64 + self.lambda)
    }

    #[inline]
    fn score(&self, sum: f64, count: usize) -> f64 {
        let denom = count as f64 + self.lambda;
        if denom > 0.0 {
            sum * sum / denom
        } else {
            0.0
        }
    }

    fn best_split(&mut self, rows: &[usize]) -> Option<SplitChoice> {
        let p = self.x.ncols();
        let features: Vec<usize> = match self.params.mtry {
            Some(m) if m < p => {
                let mut f = index::sample(self.rng, p, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..p).collect(),
        };

        // Mean leaves are shift invariant, so score centered targets.
        let n = rows.len();
        let offset = match self.params.leaf {
            LeafRule::Mean => rows.iter().map(|&i| self.target[i]).sum::<f64>() / n as f64,
            LeafRule::Newton { .. } => 0.0,
        };
        let t = |i: usize| self.target[i] - offset;
        let total: f64 = rows.iter().map(|&i| t(i)).sum();
        let spread: f64 = rows.iter().map(|&i| t(i) * t(i)).sum();
        let parent = self.score(total, n);
        let min_gain = 1e-12 * spread;
        let min_size = self.params.min_node_size;

        let mut best: Option<SplitChoice> = None;
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
        for &f in &features {
            pairs.clear();
            let mut miss_sum = 0.0;
            let mut miss_count = 0usize;
            for &i in rows {
                let v = self.x.get(i, f);
                if v.is_nan() {
                    miss_sum += t(i);
                    miss_count += 1;
                } else {
                    pairs.push((v, t(i)));
                }
            }
            if pairs.len() < 2 {
                continue;
            }
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

            // Without missing rows in the node both directions coincide;
            // only the left default is evaluated.
            let try_right = self.params.learn_missing && miss_count > 0;
            let mut prefix = 0.0;
            for k in 1..pairs.len() {
                prefix += pairs[k - 1].1;
                let (lo, hi) = (pairs[k - 1].0, pairs[k].0);
                if lo >= hi {
                    continue;
                }
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                for default_left in [true, false] {
                    if !default_left && !try_right {
                        break;
                    }
                    let (lsum, lcount) = if default_left {
                        (prefix + miss_sum, k + miss_count)
                    } else {
                        (prefix, k)
                    };
                    let rcount = n - lcount;
                    if lcount < min_size || rcount < min_size {
                        continue;
                    }
                    let gain = self.score(lsum, lcount) + self.score(total - lsum, rcount) - parent;
                    if gain > min_gain && best.as_ref().is_none_or(|b| gain > b.gain) {
                        best = Some(SplitChoice {
                            feature: f,
                            threshold,
                            default_left,
                            gain,
                        });
                    }
                }
            }
        }
        best
    }
}
