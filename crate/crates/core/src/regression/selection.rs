use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_gbdt, predict, GbdtParams, PixelDataset, RegressorModel};
use crate::error::{Error, Result};
use crate::metrics::{pearson_or_zero, pearson_slices};
use crate::representations::{ErrorMap, FeatureMaps};

/// A held-out view used to score feature subsets.
#[derive(Clone, Debug)]
pub struct EvalView {
    pub maps: FeatureMaps,
    pub target: ErrorMap,
    pub mask: Option<Vec<bool>>,
}

impl EvalView {
    fn included(&self) -> Vec<bool> {
        (0..self.target.valid.len())
            .map(|i| self.target.valid[i] && self.mask.as_ref().is_none_or(|m| m[i]))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub gbdt: GbdtParams,
    /// Score on all eval pixels pooled instead of the mean per-view score.
    pub pooled: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub dropped: String,
    pub surviving: Vec<String>,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub initial: Vec<String>,
    pub initial_score: f64,
    pub steps: Vec<SelectionStep>,
}

impl SelectionTrace {
    /// Number of removal rounds each feature survived, in `initial` order.
    /// The final survivor gets `steps.len()`.
    pub fn survival(&self) -> Vec<(String, usize)> {
        self.initial
            .iter()
            .map(|name| {
                let r = self
                    .steps
                    .iter()
                    .position(|s| &s.dropped == name)
                    .unwrap_or(self.steps.len());
                (name.clone(), r)
            })
            .collect()
    }
}

fn score_subset(train: &PixelDataset, eval: &[EvalView], names: &[String], cfg: &SelectionConfig) -> Result<f64> {
    let model = RegressorModel::Gbdt(fit_gbdt(&train.select(names)?, &cfg.gbdt)?);
    if cfg.pooled {
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for v in eval {
            let p = predict(&model, &v.maps)?;
            for (i, keep) in v.included().into_iter().enumerate() {
                if keep {
                    xs.push(p.data[i]);
                    ys.push(v.target.values.data[i]);
                }
            }
        }
        return match pearson_slices(&xs, &ys) {
            Err(Error::UndefinedCorrelation(_)) => Ok(0.0),
            r => r,
        };
    }
    let mut total = 0.0;
    for v in eval {
        let p = predict(&model, &v.maps)?;
        total += pearson_or_zero(&p, &v.target.values, Some(&v.included()))?;
    }
    Ok(total / eval.len() as f64)
}

/// Greedy backward elimination: each round refits one model per candidate
/// removal and drops the feature whose removal scores best (earliest in
/// manifest order on ties), until one feature remains.
pub fn backward_selection(
    train: &PixelDataset,
    eval: &[EvalView],
    start: &[String],
    cfg: &SelectionConfig,
) -> Result<SelectionTrace> {
    if start.is_empty() {
        return Err(Error::invalid("feature set is empty"));
    }
    if eval.is_empty() {
        return Err(Error::invalid("no evaluation views"));
    }
    let initial_score = score_subset(train, eval, start, cfg)?;
    let mut current = start.to_vec();
    let mut steps = Vec::new();
    while current.len() > 1 {
        let scores: Vec<f64> = (0..current.len())
            .into_par_iter()
            .map(|drop| {
                let subset: Vec<String> = current
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != drop)
                    .map(|(_, n)| n.clone())
                    .collect();
                score_subset(train, eval, &subset, cfg)
            })
            .collect::<Result<_>>()?;
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = i;
            }
        }
        let dropped = current.remove(best);
        log::info!("dropped {dropped} (score {:.4})", scores[best]);
        steps.push(SelectionStep {
            dropped,
            surviving: current.clone(),
            score: scores[best],
        });
    }
    Ok(SelectionTrace {
        initial: start.to_vec(),
        initial_score,
        steps,
    })
}
