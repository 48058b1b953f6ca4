use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::PixelDataset;
use crate::error::{Error, Result};

const RIDGE: f64 = 1e-8;
const CONDITION_WARN: f64 = 1e12;

/// Ordinary least squares `y = w.x + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub feature_names: Vec<String>,
}

impl LinearModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

/// Solves the normal equations on centred features with a tiny ridge term;
/// ill-conditioned systems are fitted anyway but logged.
pub fn fit_linear(ds: &PixelDataset) -> Result<LinearModel> {
    let (n, f) = (ds.n_rows(), ds.n_features());
    if n < f + 1 {
        return Err(Error::invalid(format!(
            "linear fit needs at least {} rows, got {n}",
            f + 1
        )));
    }
    let y_mean = ds.targets.iter().sum::<f64>() / n as f64;
    let x_mean: Vec<f64> = (0..f).map(|j| ds.column(j).sum::<f64>() / n as f64).collect();

    let mut xtx = DMatrix::<f64>::zeros(f, f);
    let mut xty = DVector::<f64>::zeros(f);
    let mut centred = vec![0.0; f];
    for i in 0..n {
        for (c, (v, m)) in centred.iter_mut().zip(ds.row(i).iter().zip(&x_mean)) {
            *c = v - m;
        }
        let dy = ds.targets[i] - y_mean;
        for a in 0..f {
            xty[a] += centred[a] * dy;
            for b in a..f {
                xtx[(a, b)] += centred[a] * centred[b];
            }
        }
    }
    for a in 0..f {
        for b in 0..a {
            xtx[(a, b)] = xtx[(b, a)];
        }
    }
    let eig = xtx.clone().symmetric_eigen().eigenvalues;
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(l, h), &e| (l.min(e.abs()), h.max(e.abs())));
    if f > 0 && (lo == 0.0 || hi / lo > CONDITION_WARN) {
        log::warn!("linear fit is ill-conditioned (eigenvalue ratio {:.3e})", hi / lo);
    }
    let scale = (xtx.trace() / f.max(1) as f64).max(1.0);
    for a in 0..f {
        xtx[(a, a)] += RIDGE * scale;
    }
    let w = match xtx.clone().cholesky() {
        Some(ch) => ch.solve(&xty),
        None => xtx
            .lu()
            .solve(&xty)
            .ok_or_else(|| Error::invalid("singular normal equations"))?,
    };
    let intercept = y_mean - w.iter().zip(&x_mean).map(|(a, b)| a * b).sum::<f64>();
    Ok(LinearModel {
        weights: w.iter().copied().collect(),
        intercept,
        feature_names: ds.feature_names.clone(),
    })
}
