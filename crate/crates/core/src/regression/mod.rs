//! Pixel-wise regression from uncertainty feature maps to error targets.

mod gbdt;
mod linear;
mod selection;

pub use gbdt::{fit_gbdt, GbdtModel, GbdtParams, Node, Tree};
pub use linear::{fit_linear, LinearModel};
pub use selection::{backward_selection, EvalView, SelectionConfig, SelectionStep, SelectionTrace};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::representations::{ErrorMap, FeatureMaps};
use crate::scene::ImageBuffer;

/// Flattened `(features, target)` rows, one per included pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelDataset {
    /// Row-major `n_rows x n_features`.
    pub features: Vec<f64>,
    pub targets: Vec<f64>,
    /// `(view ordinal, pixel index)` per row.
    pub provenance: Vec<(u32, u32)>,
    pub feature_names: Vec<String>,
}

impl PixelDataset {
    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let f = self.n_features();
        &self.features[i * f..(i + 1) * f]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.features.iter().skip(j).step_by(self.n_features()).copied()
    }

    /// Column subset in the given order.
    pub fn select(&self, names: &[String]) -> Result<PixelDataset> {
        let idx = resolve_names(&self.feature_names, names)?;
        let mut features = Vec::with_capacity(self.n_rows() * idx.len());
        for i in 0..self.n_rows() {
            let r = self.row(i);
            features.extend(idx.iter().map(|&j| r[j]));
        }
        Ok(PixelDataset {
            features,
            targets: self.targets.clone(),
            provenance: self.provenance.clone(),
            feature_names: names.to_vec(),
        })
    }

    /// Concatenates datasets with identical feature manifests.
    pub fn concat(parts: &[PixelDataset]) -> Result<PixelDataset> {
        let first = parts.first().ok_or_else(|| Error::invalid("nothing to concatenate"))?;
        let mut out = first.clone();
        for p in &parts[1..] {
            if p.feature_names != first.feature_names {
                return Err(Error::invalid("datasets have different feature manifests"));
            }
            out.features.extend_from_slice(&p.features);
            out.targets.extend_from_slice(&p.targets);
            out.provenance.extend_from_slice(&p.provenance);
        }
        Ok(out)
    }
}

pub(crate) fn resolve_names(have: &[String], want: &[String]) -> Result<Vec<usize>> {
    want.iter()
        .map(|n| {
            have.iter()
                .position(|h| h == n)
                .ok_or_else(|| Error::invalid(format!("feature `{n}` not in manifest {have:?}")))
        })
        .collect()
}

/// One view's inputs to dataset assembly.
#[derive(Clone, Copy, Debug)]
pub struct DatasetView<'a> {
    pub maps: &'a FeatureMaps,
    pub target: &'a ErrorMap,
    /// Pixels to include; `None` includes all valid target pixels.
    pub mask: Option<&'a [bool]>,
}

/// Builds one row per included pixel, views concatenated in order. With
/// `stride > 1` only every `stride`-th pixel (row-major) is considered.
pub fn assemble_dataset(views: &[DatasetView<'_>], stride: usize) -> Result<PixelDataset> {
    let first = views.first().ok_or_else(|| Error::invalid("no views to assemble"))?;
    let names = first.maps.names.clone();
    let f = names.len();
    let stride = stride.max(1);
    let mut ds = PixelDataset {
        features: Vec::new(),
        targets: Vec::new(),
        provenance: Vec::new(),
        feature_names: names,
    };
    for (vi, v) in views.iter().enumerate() {
        if v.maps.names != ds.feature_names {
            return Err(Error::invalid(format!("view {vi}: feature manifest differs")));
        }
        let img = &v.maps.image;
        if !img.same_size(&v.target.values) || img.channels != f {
            return Err(Error::invalid(format!(
                "view {vi}: feature maps and target differ in size"
            )));
        }
        if let Some(m) = v.mask {
            if m.len() != img.pixel_count() {
                return Err(Error::invalid(format!("view {vi}: mask size mismatch")));
            }
        }
        for px in (0..img.pixel_count()).step_by(stride) {
            if !v.target.valid[px] || v.mask.is_some_and(|m| !m[px]) {
                continue;
            }
            let row = img.pixel(px);
            let t = v.target.values.data[px];
            if !t.is_finite() || row.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!("view {vi}: non-finite value at pixel {px}")));
            }
            ds.features.extend_from_slice(row);
            ds.targets.push(t);
            ds.provenance.push((vi as u32, px as u32));
        }
    }
    if ds.targets.is_empty() {
        return Err(Error::invalid("dataset is empty after masking"));
    }
    Ok(ds)
}

/// Either regressor, as persisted in model files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum RegressorModel {
    Linear(LinearModel),
    Gbdt(GbdtModel),
}

pub const MODEL_FORMAT: &str = "splatue-regressor";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: RegressorModel,
}

impl RegressorModel {
    pub fn feature_names(&self) -> &[String] {
        match self {
            RegressorModel::Linear(m) => &m.feature_names,
            RegressorModel::Gbdt(m) => &m.feature_names,
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        match self {
            RegressorModel::Linear(m) => m.predict_row(x),
            RegressorModel::Gbdt(m) => m.predict_row(x),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelDocument {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(s)?;
        if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
            return Err(Error::parse(
                "format",
                0,
                format!("unsupported model document {} v{}", doc.format, doc.version),
            ));
        }
        if let RegressorModel::Gbdt(m) = &doc.model {
            m.validate()?;
        }
        Ok(doc.model)
    }
}

/// Evaluates a model on every pixel of a feature map set. Channels are
/// looked up by name, so the maps may carry extra channels.
pub fn predict(model: &RegressorModel, maps: &FeatureMaps) -> Result<ImageBuffer> {
    let idx = resolve_names(&maps.names, model.feature_names())?;
    let img = &maps.image;
    let mut row = vec![0.0; idx.len()];
    let data = (0..img.pixel_count())
        .map(|px| {
            let p = img.pixel(px);
            for (r, &j) in row.iter_mut().zip(&idx) {
                *r = p[j];
            }
            model.predict_row(&row)
        })
        .collect();
    Ok(ImageBuffer {
        width: img.width,
        height: img.height,
        channels: 1,
        data,
    })
}
