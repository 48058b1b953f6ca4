//! Stage glue shared by the command-line tool and end-to-end checks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fisher::{fisher_diagonal, fisher_feature_names, grouped_uncertainty, FisherOptions, DEFAULT_FISHER_EPS};
use crate::io::RepresentationSet;
use crate::metrics::{pearson, pearson_or_zero, sparsification, ViewMetrics, DEFAULT_SPARSIFICATION_STEPS};
use crate::regression::{assemble_dataset, fit_gbdt, predict, DatasetView, GbdtParams, RegressorModel};
use crate::render::{contribution_log, render_view, ChannelSource, ContributionLog};
use crate::representations::{
    build_representations, feature_names, pixel_error_map, render_representations, ErrorMap, ErrorTarget, FeatureMaps,
    RepresentationConfig,
};
use crate::scene::{GaussianScene, ImageBuffer, View, ViewRole, ViewSet};
use crate::synthetic::{generate, SynthSpec};

/// Which pixels of a view take part in fitting and evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskRole {
    #[default]
    Full,
    Object,
    Background,
}

impl std::str::FromStr for MaskRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(MaskRole::Full),
            "object" => Ok(MaskRole::Object),
            "background" => Ok(MaskRole::Background),
            other => Err(Error::invalid(format!("unknown mask role `{other}`"))),
        }
    }
}

impl MaskRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            MaskRole::Full => "full",
            MaskRole::Object => "object",
            MaskRole::Background => "background",
        }
    }

    /// Per-pixel inclusion for a view; `None` means every pixel.
    pub fn pixels(&self, view: &View) -> Result<Option<Vec<bool>>> {
        let mask = match self {
            MaskRole::Full => return Ok(None),
            _ => view
                .mask
                .as_ref()
                .ok_or_else(|| Error::invalid(format!("view {} has no mask", view.camera.id)))?,
        };
        let object = *self == MaskRole::Object;
        Ok(Some(mask.data.iter().map(|&m| (m > 0.0) == object).collect()))
    }
}

/// Per-pixel error of `scene` rendered into `view`; `None` for a depth
/// target without ground-truth depth.
pub fn view_error(scene: &GaussianScene, view: &View, target: ErrorTarget) -> Result<Option<ErrorMap>> {
    match target {
        ErrorTarget::Render => {
            let img = render_view(scene, &view.camera, ChannelSource::Color, false)?.image;
            Ok(Some(pixel_error_map(&view.gt_color, &img)?))
        }
        ErrorTarget::Depth => match &view.gt_depth {
            None => Ok(None),
            Some(gt) => {
                let d = render_view(scene, &view.camera, ChannelSource::Depth, false)?.image;
                Ok(Some(pixel_error_map(gt, &d)?))
            }
        },
    }
}

/// Contribution logs of every training view, in view order.
pub fn training_logs(scene: &GaussianScene, views: &ViewSet) -> Vec<ContributionLog> {
    let train: Vec<&View> = views.with_role(ViewRole::Train).collect();
    train.par_iter().map(|v| contribution_log(scene, &v.camera)).collect()
}

/// The 13 canonical representations from the training views.
pub fn representations(
    scene: &GaussianScene,
    views: &ViewSet,
    logs: &[ContributionLog],
    target: ErrorTarget,
    config: &RepresentationConfig,
) -> Result<RepresentationSet> {
    let train: Vec<&View> = views.with_role(ViewRole::Train).collect();
    if train.is_empty() {
        return Err(Error::invalid("no training views"));
    }
    let errors = train
        .iter()
        .map(|v| {
            view_error(scene, v, target)?
                .ok_or_else(|| Error::invalid(format!("training view {} lacks ground-truth depth", v.camera.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    let cams: Vec<_> = train.iter().map(|v| v.camera.clone()).collect();
    let reps = build_representations(scene, &cams, logs, &errors, config)?;
    RepresentationSet::new(feature_names(), reps)
}

/// Six Fisher group representations plus the plain baseline.
pub fn fisher_representations(
    scene: &GaussianScene,
    views: &ViewSet,
    opts: &FisherOptions,
) -> Result<RepresentationSet> {
    let cams = views.cameras(ViewRole::Train);
    if cams.is_empty() {
        return Err(Error::invalid("no training views"));
    }
    let f = fisher_diagonal(scene, &cams, opts)?;
    RepresentationSet::new(fisher_feature_names(), grouped_uncertainty(&f, DEFAULT_FISHER_EPS)?)
}

pub fn feature_maps(scene: &GaussianScene, set: &RepresentationSet, view: &View) -> Result<FeatureMaps> {
    render_representations(scene, &set.representations, &set.names, &view.camera)
}

/// Inclusion of a pixel in a target: valid error and inside the mask role.
pub fn included(err: &ErrorMap, mask: Option<&[bool]>) -> Vec<bool> {
    err.valid
        .iter()
        .enumerate()
        .map(|(i, &v)| v && mask.is_none_or(|m| m[i]))
        .collect()
}

/// Pearson and AUSE of a predicted map against the true error of a view.
pub fn evaluate_view(
    pred: &ImageBuffer,
    err: &ErrorMap,
    mask: Option<&[bool]>,
    scene_name: &str,
    view_id: &str,
    target: ErrorTarget,
) -> Result<ViewMetrics> {
    let keep = included(err, mask);
    let pearson = match pearson(pred, &err.values, Some(&keep)) {
        Ok(r) => Some(r),
        Err(Error::UndefinedCorrelation(_)) => None,
        Err(e) => return Err(e),
    };
    let ause = match sparsification(&err.values, pred, Some(&keep), DEFAULT_SPARSIFICATION_STEPS) {
        Ok(s) => Some(s.ause),
        Err(Error::InvalidInput(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(ViewMetrics {
        view_id: view_id.to_string(),
        scene: scene_name.to_string(),
        target: target.as_str().to_string(),
        pearson,
        ause,
    })
}

/// Outcome of one synthetic end-to-end run with a depth-error target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOutcome {
    pub seed: u64,
    /// Per holdout-eval view Pearson of the GBDT prediction (0 when undefined).
    pub model_pearson: Vec<f64>,
    /// Per holdout-eval view Pearson of the plain Fisher map (0 when undefined).
    pub fisher_pearson: Vec<f64>,
}

impl SyntheticOutcome {
    pub fn model_mean(&self) -> f64 {
        self.model_pearson.iter().sum::<f64>() / self.model_pearson.len().max(1) as f64
    }

    pub fn fisher_mean_abs(&self) -> f64 {
        self.fisher_pearson.iter().map(|r| r.abs()).sum::<f64>() / self.fisher_pearson.len().max(1) as f64
    }
}

/// Generates a synthetic scene, fits the 13-map GBDT on the
/// holdout-train-reg views and scores it, together with the plain Fisher
/// baseline, on the holdout-eval views against true depth error.
pub fn synthetic_experiment(
    spec: &SynthSpec,
    rep_config: &RepresentationConfig,
    gbdt: &GbdtParams,
) -> Result<SyntheticOutcome> {
    let synth = generate(spec)?;
    let scene = &synth.degraded;
    let views = &synth.views;
    let logs = training_logs(scene, views);
    let reps = representations(scene, views, &logs, ErrorTarget::Depth, rep_config)?;
    let fisher = fisher_representations(
        scene,
        views,
        &FisherOptions {
            geometric: false,
            ..Default::default()
        },
    )?
    .select(&["fisherrf".to_string()])?;

    let reg: Vec<&View> = views.with_role(ViewRole::HoldoutTrainReg).collect();
    let reg_maps = reg
        .iter()
        .map(|v| feature_maps(scene, &reps, v))
        .collect::<Result<Vec<_>>>()?;
    let reg_err = reg
        .iter()
        .map(|v| view_error(scene, v, ErrorTarget::Depth).map(Option::unwrap))
        .collect::<Result<Vec<_>>>()?;
    let parts: Vec<DatasetView> = reg_maps
        .iter()
        .zip(&reg_err)
        .map(|(maps, target)| DatasetView {
            maps,
            target,
            mask: None,
        })
        .collect();
    let model = RegressorModel::Gbdt(fit_gbdt(&assemble_dataset(&parts, 1)?, gbdt)?);

    let mut model_pearson = Vec::new();
    let mut fisher_pearson = Vec::new();
    for v in views.with_role(ViewRole::HoldoutEval) {
        let err = view_error(scene, v, ErrorTarget::Depth)?.unwrap();
        let pred = predict(&model, &feature_maps(scene, &reps, v)?)?;
        model_pearson.push(pearson_or_zero(&pred, &err.values, Some(&err.valid))?);
        let fmap = feature_maps(scene, &fisher, v)?.image;
        fisher_pearson.push(pearson_or_zero(&fmap, &err.values, Some(&err.valid))?);
    }
    Ok(SyntheticOutcome {
        seed: spec.seed,
        model_pearson,
        fisher_pearson,
    })
}
