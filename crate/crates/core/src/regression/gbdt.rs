use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PixelDataset;
use crate::error::{Error, Result};

/// Boosting hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: 3,
            learning_rate: 0.1,
            min_leaf: 20,
        }
    }
}

impl GbdtParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 || self.min_leaf == 0 {
            return Err(Error::invalid("max_depth and min_leaf must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        Ok(())
    }
}

/// Tree node; rows with `x[feature] <= threshold` go left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Flattened regression tree; node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }
}

/// Gradient-boosted regression trees under squared loss. Leaves store the
/// mean residual; the learning rate is applied at prediction time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub base_score: f64,
    pub trees: Vec<Tree>,
    pub params: GbdtParams,
    pub feature_names: Vec<String>,
    /// Training MSE before the first tree and after each tree.
    pub train_mse: Vec<f64>,
}

impl GbdtModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.base_score + self.params.learning_rate * self.trees.iter().map(|t| t.evaluate(x)).sum::<f64>()
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let f = self.feature_names.len();
        for (ti, t) in self.trees.iter().enumerate() {
            let n = t.nodes.len();
            if n == 0 {
                return Err(Error::parse("trees", ti as u64, "empty tree"));
            }
            for (i, node) in t.nodes.iter().enumerate() {
                if let Node::Split {
                    feature, left, right, ..
                } = *node
                {
                    // children strictly after parent rules out cycles
                    if feature >= f || left <= i || right <= i || left >= n || right >= n {
                        return Err(Error::parse("trees", ti as u64, format!("malformed node {i}")));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Exact greedy boosting. Split candidates are midpoints between
/// consecutive distinct feature values; ties on gain go to the lower
/// feature index, then the lower threshold. Boosting stops early once the
/// root admits no split with positive gain.
pub fn fit_gbdt(ds: &PixelDataset, params: &GbdtParams) -> Result<GbdtModel> {
    params.validate()?;
    let (n, f) = (ds.n_rows(), ds.n_features());
    if n < 2 * params.min_leaf {
        return Err(Error::invalid(format!(
            "gbdt needs at least {} rows, got {n}",
            2 * params.min_leaf
        )));
    }
    let columns: Vec<Vec<f64>> = (0..f).map(|j| ds.column(j).collect()).collect();
    let sorted: Vec<Vec<u32>> = columns
        .par_iter()
        .map(|col| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
            idx
        })
        .collect();

    let t0 = ds.targets[0];
    let base_score = if ds.targets.iter().all(|&t| t == t0) {
        t0
    } else {
        ds.targets.iter().sum::<f64>() / n as f64
    };
    let mut pred = vec![base_score; n];
    let mse = |pred: &[f64]| ds.targets.iter().zip(pred).map(|(t, p)| (t - p) * (t - p)).sum::<f64>() / n as f64;
    let mut train_mse = vec![mse(&pred)];
    let mut trees = Vec::new();
    let mut residual = vec![0.0; n];
    for _ in 0..params.n_trees {
        for i in 0..n {
            residual[i] = ds.targets[i] - pred[i];
        }
        let Some(tree) = grow_tree(&columns, &sorted, &residual, params) else {
            break;
        };
        for (i, p) in pred.iter_mut().enumerate() {
            let x: Vec<f64> = columns.iter().map(|c| c[i]).collect();
            *p += params.learning_rate * tree.evaluate(&x);
        }
        trees.push(tree);
        train_mse.push(mse(&pred));
    }
    Ok(GbdtModel {
        base_score,
        trees,
        params: *params,
        feature_names: ds.feature_names.clone(),
        train_mse,
    })
}

/// Level-wise growth; `None` when the root cannot be split.
fn grow_tree(columns: &[Vec<f64>], sorted: &[Vec<u32>], residual: &[f64], params: &GbdtParams) -> Option<Tree> {
    let n = residual.len();
    // node slot per row; usize::MAX marks rows in finished leaves
    let mut slot = vec![0usize; n];
    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let mut frontier = vec![0usize]; // node ids, indexed by slot
    for depth in 0..=params.max_depth {
        let m = frontier.len();
        let mut count = vec![0usize; m];
        let mut sum = vec![0.0; m];
        let mut sum_sq = vec![0.0; m];
        for i in 0..n {
            if slot[i] != usize::MAX {
                count[slot[i]] += 1;
                sum[slot[i]] += residual[i];
                sum_sq[slot[i]] += residual[i] * residual[i];
            }
        }
        let best: Vec<Option<Candidate>> = if depth == params.max_depth {
            vec![None; m]
        } else {
            let per_feature: Vec<Vec<Option<Candidate>>> = (0..columns.len())
                .into_par_iter()
                .map(|j| {
                    best_splits(
                        j,
                        &columns[j],
                        &sorted[j],
                        residual,
                        &slot,
                        &count,
                        &sum,
                        params.min_leaf,
                    )
                })
                .collect();
            (0..m)
                .map(|s| {
                    let mut b: Option<Candidate> = None;
                    for fc in &per_feature {
                        if let Some(c) = fc[s] {
                            if b.is_none_or(|b| c.gain > b.gain) {
                                b = Some(c);
                            }
                        }
                    }
                    let node_sse = sum_sq[s] - sum[s] * sum[s] / count[s].max(1) as f64;
                    b.filter(|c| c.gain > 1e-12 * node_sse.max(0.0) && c.gain > 0.0)
                })
                .collect()
        };
        if depth == 0 && best[0].is_none() {
            return None;
        }
        let mut next_slot = vec![usize::MAX; m * 2];
        let mut next_frontier = Vec::new();
        for s in 0..m {
            let id = frontier[s];
            match best[s] {
                None => {
                    nodes[id] = Node::Leaf {
                        value: sum[s] / count[s] as f64,
                    }
                }
                Some(c) => {
                    let left = nodes.len();
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes[id] = Node::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left,
                        right: left + 1,
                    };
                    next_slot[2 * s] = next_frontier.len();
                    next_frontier.push(left);
                    next_slot[2 * s + 1] = next_frontier.len();
                    next_frontier.push(left + 1);
                }
            }
        }
        for i in 0..n {
            let s = slot[i];
            if s == usize::MAX {
                continue;
            }
            slot[i] = match best[s] {
                None => usize::MAX,
                Some(c) => next_slot[2 * s + usize::from(columns[c.feature][i] > c.threshold)],
            };
        }
        if next_frontier.is_empty() {
            break;
        }
        frontier = next_frontier;
    }
    Some(Tree { nodes })
}

/// Best split on one feature for every frontier node.
#[allow(clippy::too_many_arguments)]
fn best_splits(
    feature: usize,
    col: &[f64],
    order: &[u32],
    residual: &[f64],
    slot: &[usize],
    count: &[usize],
    sum: &[f64],
    min_leaf: usize,
) -> Vec<Option<Candidate>> {
    let m = count.len();
    let mut left_n = vec![0usize; m];
    let mut left_s = vec![0.0; m];
    let mut last = vec![f64::NAN; m];
    let mut best: Vec<Option<Candidate>> = vec![None; m];
    for &i in order {
        let i = i as usize;
        let s = slot[i];
        if s == usize::MAX {
            continue;
        }
        let v = col[i];
        let nl = left_n[s];
        if nl > 0 && v > last[s] && nl >= min_leaf && count[s] - nl >= min_leaf {
            let (sl, st) = (left_s[s], sum[s]);
            let sr = st - sl;
            let nr = count[s] - nl;
            let gain = sl * sl / nl as f64 + sr * sr / nr as f64 - st * st / count[s] as f64;
            if best[s].is_none_or(|b| gain > b.gain) {
                let a = last[s];
                let mut t = a + (v - a) / 2.0;
                if !(t < v) {
                    t = a;
                }
                best[s] = Some(Candidate {
                    gain,
                    feature,
                    threshold: t,
                });
            }
        }
        left_n[s] += 1;
        left_s[s] += residual[i];
        last[s] = v;
    }
    best
}
