//! Pearson correlation and sparsification / AUSE evaluation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::ImageBuffer;

pub const DEFAULT_SPARSIFICATION_STEPS: usize = 100;

fn masked_pairs<'a>(
    a: &'a ImageBuffer,
    b: &'a ImageBuffer,
    mask: Option<&'a [bool]>,
) -> Result<impl Iterator<Item = (usize, f64, f64)> + 'a> {
    if !a.same_size(b) || a.channels != 1 || b.channels != 1 {
        return Err(Error::invalid(
            "metric inputs must be single-channel images of equal size",
        ));
    }
    if let Some(m) = mask {
        if m.len() != a.pixel_count() {
            return Err(Error::invalid("mask size does not match the image"));
        }
    }
    Ok((0..a.pixel_count())
        .filter(move |&i| mask.is_none_or(|m| m[i]))
        .map(move |i| (i, a.data[i], b.data[i])))
}

/// Sample Pearson correlation over unmasked pixels.
pub fn pearson(pred: &ImageBuffer, truth: &ImageBuffer, mask: Option<&[bool]>) -> Result<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = masked_pairs(pred, truth, mask)?.map(|(_, x, y)| (x, y)).unzip();
    pearson_slices(&xs, &ys)
}

pub fn pearson_slices(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::invalid("pearson inputs differ in length"));
    }
    if xs.len() < 2 {
        return Err(Error::invalid("pearson needs at least two samples"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson with an undefined correlation scored as 0.
pub fn pearson_or_zero(pred: &ImageBuffer, truth: &ImageBuffer, mask: Option<&[bool]>) -> Result<f64> {
    match pearson(pred, truth, mask) {
        Err(Error::UndefinedCorrelation(_)) => Ok(0.0),
        other => other,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsificationResult {
    pub fractions: Vec<f64>,
    pub oracle_curve: Vec<f64>,
    pub uncertainty_curve: Vec<f64>,
    pub ause: f64,
}

/// Pixel indices sorted by descending key, ties by ascending index.
fn removal_order(keys: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]).then(a.cmp(&b)));
    idx
}

/// MAE of the pixels left after removing the first `removed[k]` entries of
/// `order`.
fn curve(err: &[f64], order: &[usize], removed: &[usize]) -> Vec<f64> {
    let n = order.len();
    // suffix[i] = sum of err over order[i..]
    let mut suffix = vec![0.0; n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] + err[order[i]];
    }
    removed.iter().map(|&r| suffix[r] / (n - r) as f64).collect()
}

/// Sparsification curves for removing the highest-uncertainty
/// (resp. highest-error) pixels and the area between them. The error is
/// rescaled to sum to one over the unmasked pixels first.
pub fn sparsification(
    err: &ImageBuffer,
    unc: &ImageBuffer,
    mask: Option<&[bool]>,
    steps: usize,
) -> Result<SparsificationResult> {
    let (e, u): (Vec<f64>, Vec<f64>) = masked_pairs(err, unc, mask)?.map(|(_, e, u)| (e, u)).unzip();
    if e.is_empty() {
        return Err(Error::invalid("sparsification: every pixel is masked"));
    }
    if steps == 0 || e.len() < steps {
        return Err(Error::invalid(format!(
            "sparsification needs at least {steps} pixels, got {}",
            e.len()
        )));
    }
    if e.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::invalid("sparsification: error must be non-negative"));
    }
    let total: f64 = e.iter().sum();
    let e: Vec<f64> = if total > 0.0 {
        e.iter().map(|v| v / total).collect()
    } else {
        e
    };

    let n = e.len();
    let fractions: Vec<f64> = (0..steps).map(|k| k as f64 / steps as f64).collect();
    let removed: Vec<usize> = (0..steps).map(|k| (k * n).div_ceil(steps)).collect();
    let oracle_curve = curve(&e, &removal_order(&e), &removed);
    let uncertainty_curve = curve(&e, &removal_order(&u), &removed);
    let h = 1.0 / steps as f64;
    let diff: Vec<f64> = uncertainty_curve
        .iter()
        .zip(&oracle_curve)
        .map(|(a, b)| a - b)
        .collect();
    let ause = diff.windows(2).map(|w| 0.5 * h * (w[0] + w[1])).sum();
    Ok(SparsificationResult {
        fractions,
        oracle_curve,
        uncertainty_curve,
        ause,
    })
}

/// One evaluated view. Metrics are `None` when the view lacks ground truth
/// for the target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewMetrics {
    pub view_id: String,
    pub scene: String,
    pub target: String,
    pub pearson: Option<f64>,
    pub ause: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanRecord {
    pub scene: String,
    pub target: String,
    pub pearson: f64,
    pub ause: f64,
    pub views: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub views: Vec<ViewMetrics>,
    /// Per `(scene, target)` means.
    pub scene_means: Vec<MeanRecord>,
    /// Per-target mean over scene means.
    pub dataset_means: Vec<MeanRecord>,
    pub excluded: usize,
}

pub const CSV_HEADER: &str = "view_id,scene,target,pearson,ause";

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Aggregates per-view metrics into per-scene and per-dataset means.
pub fn report(views: &[ViewMetrics]) -> Report {
    let mut by_scene: BTreeMap<(String, String), Vec<&ViewMetrics>> = BTreeMap::new();
    let mut excluded = 0;
    for v in views {
        match (v.pearson, v.ause) {
            (Some(_), Some(_)) => by_scene.entry((v.target.clone(), v.scene.clone())).or_default().push(v),
            _ => excluded += 1,
        }
    }
    let scene_means: Vec<MeanRecord> = by_scene
        .into_iter()
        .map(|((target, scene), vs)| MeanRecord {
            scene,
            target,
            pearson: mean(vs.iter().map(|v| v.pearson.unwrap())),
            ause: mean(vs.iter().map(|v| v.ause.unwrap())),
            views: vs.len(),
        })
        .collect();
    let mut by_target: BTreeMap<String, Vec<&MeanRecord>> = BTreeMap::new();
    for m in &scene_means {
        by_target.entry(m.target.clone()).or_default().push(m);
    }
    let dataset_means = by_target
        .into_iter()
        .map(|(target, ms)| MeanRecord {
            scene: "all".into(),
            target,
            pearson: mean(ms.iter().map(|m| m.pearson)),
            ause: mean(ms.iter().map(|m| m.ause)),
            views: ms.iter().map(|m| m.views).sum(),
        })
        .collect();
    Report {
        views: views.to_vec(),
        scene_means,
        dataset_means,
        excluded,
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

impl Report {
    /// Comma-separated table: per-view rows, then `mean` rows per scene and
    /// `mean` rows with scene `all`, then a `#` footnote with the number of
    /// excluded views.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{CSV_HEADER}").unwrap();
        for v in &self.views {
            writeln!(
                s,
                "{},{},{},{},{}",
                v.view_id,
                v.scene,
                v.target,
                fmt_opt(v.pearson),
                fmt_opt(v.ause)
            )
            .unwrap();
        }
        for m in self.scene_means.iter().chain(&self.dataset_means) {
            writeln!(s, "mean,{},{},{},{}", m.scene, m.target, m.pearson, m.ause).unwrap();
        }
        writeln!(s, "# excluded views (missing ground truth): {}", self.excluded).unwrap();
        s
    }
}
