//! Per-primitive uncertainty representations built from training views,
//! and their rendering into uncertainty feature maps.
//!
//! Three kinds exist: an FoV counter, a visibility representation (maximum
//! over views of aggregated contribution factors) and an error
//! representation (mean over views of aggregated error-weighted
//! contribution factors). The latter two can be made direction dependent
//! with a rescaled von Mises-Fisher kernel and are then stored as SH
//! coefficients.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::{render_view, ChannelSource, ContributionLog, LogEntry};
use crate::scene::{Camera, GaussianScene, ImageBuffer, NEAR_PLANE};
use crate::sh::{self, ShFitter};

pub const DEFAULT_FOV_MARGIN: f64 = 0.1;
pub const DEFAULT_KAPPA: f64 = 8.0;
pub const DEFAULT_SH_DEGREE: usize = 4;
pub const DEFAULT_SPHERE_SAMPLES: usize = 256;

/// Canonical feature channel order.
pub const FEATURE_NAMES: [&str; 13] = [
    "fov",
    "vis-max-alpha",
    "vis-sum-alpha",
    "vis-mean-alpha",
    "vis-max-noalpha",
    "vis-sum-noalpha",
    "vis-mean-noalpha",
    "err-max-alpha",
    "err-sum-alpha",
    "err-mean-alpha",
    "err-max-noalpha",
    "err-sum-noalpha",
    "err-mean-noalpha",
];

pub fn feature_names() -> Vec<String> {
    FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RepresentationKind {
    FovCounter,
    Visibility,
    Error,
    /// Fisher-information variance baseline.
    Fisher,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    Max,
    Sum,
    Mean,
}

impl Aggregation {
    pub const ALL: [Aggregation; 3] = [Aggregation::Max, Aggregation::Sum, Aggregation::Mean];

    pub fn as_str(&self) -> &'static str {
        match self {
            Aggregation::Max => "max",
            Aggregation::Sum => "sum",
            Aggregation::Mean => "mean",
        }
    }
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Aggregation::Max),
            "sum" => Ok(Aggregation::Sum),
            "mean" => Ok(Aggregation::Mean),
            other => Err(Error::invalid(format!("unknown aggregation `{other}`"))),
        }
    }
}

/// How the error representation averages over training views.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViewMean {
    /// Divide by the number of training views.
    #[default]
    AllViews,
    /// Divide by the number of views in which the primitive is visible.
    VisibleViews,
}

/// One per-primitive feature channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveRepresentation {
    pub kind: RepresentationKind,
    pub agg: Aggregation,
    pub include_alpha: bool,
    /// `Some(L)` when values are SH coefficients of degree `L`.
    pub sh_degree: Option<usize>,
    pub kappa: Option<f64>,
    /// Per-primitive scalars, or `(L+1)^2` coefficients per primitive.
    pub values: Vec<f64>,
}

impl PrimitiveRepresentation {
    pub fn scalar(kind: RepresentationKind, agg: Aggregation, include_alpha: bool, values: Vec<f64>) -> Self {
        Self {
            kind,
            agg,
            include_alpha,
            sh_degree: None,
            kappa: None,
            values,
        }
    }

    pub fn is_directional(&self) -> bool {
        self.sh_degree.is_some()
    }

    pub fn stride(&self) -> usize {
        self.sh_degree.map_or(1, sh::coeff_count)
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.stride()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value of primitive `k` seen along `dir`; SH reconstructions are
    /// clamped below at 0.
    pub fn value_at(&self, k: usize, dir: &Vector3<f64>) -> f64 {
        match self.sh_degree {
            None => self.values[k],
            Some(l) => {
                let n = sh::coeff_count(l);
                sh::eval_unchecked(&self.values[k * n..(k + 1) * n], dir, l).max(0.0)
            }
        }
    }

    pub fn name(&self) -> String {
        let a = if self.include_alpha { "alpha" } else { "noalpha" };
        match self.kind {
            RepresentationKind::FovCounter => "fov".into(),
            RepresentationKind::Visibility => format!("vis-{}-{a}", self.agg.as_str()),
            RepresentationKind::Error => format!("err-{}-{a}", self.agg.as_str()),
            RepresentationKind::Fisher => "fisher".into(),
        }
    }
}

/// Per-pixel error values plus which pixels carry a valid target.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorMap {
    pub values: ImageBuffer,
    pub valid: Vec<bool>,
}

impl ErrorMap {
    pub fn new(values: ImageBuffer) -> Self {
        let valid = vec![true; values.pixel_count()];
        Self { values, valid }
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.data.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// Restricts validity to pixels where `mask` is nonzero.
    pub fn masked(&self, mask: &ImageBuffer) -> Self {
        let mut out = self.clone();
        for (v, m) in out.valid.iter_mut().zip(&mask.data) {
            *v &= *m > 0.0;
        }
        out
    }
}

/// What a pixel error map is computed from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorTarget {
    Depth,
    Render,
}

impl std::str::FromStr for ErrorTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "depth" => Ok(ErrorTarget::Depth),
            "render" => Ok(ErrorTarget::Render),
            other => Err(Error::invalid(format!("unknown target `{other}`"))),
        }
    }
}

impl ErrorTarget {
    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorTarget::Depth => "depth",
            ErrorTarget::Render => "render",
        }
    }
}

/// Per-pixel L1 error. Color: mean over channels. Depth: absolute
/// difference, with non-positive or non-finite ground truth excluded.
pub fn pixel_error_map(gt: &ImageBuffer, rendered: &ImageBuffer) -> Result<ErrorMap> {
    if !gt.same_size(rendered) || gt.channels != rendered.channels || gt.channels == 0 {
        return Err(Error::invalid(format!(
            "error map: ground truth {}x{}x{} vs rendered {}x{}x{}",
            gt.width, gt.height, gt.channels, rendered.width, rendered.height, rendered.channels
        )));
    }
    let ch = gt.channels;
    let n = gt.pixel_count();
    let mut values = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    for i in 0..n {
        let g = gt.pixel(i);
        let r = rendered.pixel(i);
        if ch == 1 {
            let ok = g[0].is_finite() && g[0] > 0.0;
            valid.push(ok);
            values.push(if ok { (g[0] - r[0]).abs() } else { 0.0 });
        } else {
            let e = g.iter().zip(r).map(|(a, b)| (a - b).abs()).sum::<f64>() / ch as f64;
            valid.push(true);
            values.push(e);
        }
    }
    Ok(ErrorMap {
        values: ImageBuffer {
            width: gt.width,
            height: gt.height,
            channels: 1,
            data: values,
        },
        valid,
    })
}

/// Counts, per primitive, the cameras whose frustum (extended by `margin`
/// of the image extent on each side) contains the primitive's mean.
pub fn fov_counter(scene: &GaussianScene, cameras: &[Camera], margin: f64) -> PrimitiveRepresentation {
    let values = scene
        .primitives
        .par_iter()
        .map(|p| {
            cameras
                .iter()
                .filter(|cam| in_extended_frustum(cam, &p.mean, margin))
                .count() as f64
        })
        .collect();
    PrimitiveRepresentation::scalar(RepresentationKind::FovCounter, Aggregation::Max, true, values)
}

pub fn in_extended_frustum(cam: &Camera, point: &Vector3<f64>, margin: f64) -> bool {
    let t = cam.to_camera(point);
    if t.z <= NEAR_PLANE {
        return false;
    }
    let Some(px) = cam.project_camera_point(&t) else {
        return false;
    };
    let (w, h) = (cam.width as f64, cam.height as f64);
    px.x >= -margin * w && px.x <= (1.0 + margin) * w && px.y >= -margin * h && px.y <= (1.0 + margin) * h
}

/// Aggregates the logged entries of one primitive in one view. `error`
/// supplies per-pixel error factors; invalid error pixels are skipped.
fn aggregate_entries(entries: &[LogEntry], error: Option<&ErrorMap>, agg: Aggregation, include_alpha: bool) -> f64 {
    let mut acc = 0.0;
    let mut count = 0usize;
    for e in entries {
        let mut w = if include_alpha {
            e.alpha * e.transmittance
        } else {
            e.transmittance
        };
        if let Some(err) = error {
            let px = e.pixel as usize;
            if !err.valid[px] {
                continue;
            }
            w *= err.values.data[px];
        }
        count += 1;
        match agg {
            Aggregation::Max => acc = f64::max(acc, w),
            Aggregation::Sum | Aggregation::Mean => acc += w,
        }
    }
    match agg {
        Aggregation::Mean if count > 0 => acc / count as f64,
        _ => acc,
    }
}

/// Per-view, per-primitive aggregates: `out[v][k]`, plus whether `k` had
/// any logged entry in view `v`.
fn view_aggregates(
    logs: &[ContributionLog],
    errors: Option<&[ErrorMap]>,
    agg: Aggregation,
    include_alpha: bool,
) -> Vec<(Vec<f64>, Vec<bool>)> {
    logs.iter()
        .enumerate()
        .map(|(v, log)| {
            let err = errors.map(|e| &e[v]);
            (0..log.n_gaussians())
                .into_par_iter()
                .map(|k| {
                    let entries = log.entries_for(k);
                    (aggregate_entries(entries, err, agg, include_alpha), !entries.is_empty())
                })
                .unzip()
        })
        .collect()
}

fn check_logs(logs: &[ContributionLog]) -> Result<usize> {
    let first = logs
        .first()
        .ok_or_else(|| Error::invalid("representation needs at least one training view"))?;
    let n = first.n_gaussians();
    if logs.iter().any(|l| l.n_gaussians() != n) {
        return Err(Error::invalid("contribution logs disagree on primitive count"));
    }
    Ok(n)
}

fn check_errors(logs: &[ContributionLog], errors: &[ErrorMap]) -> Result<()> {
    if logs.len() != errors.len() {
        return Err(Error::invalid(format!(
            "{} contribution logs but {} error maps",
            logs.len(),
            errors.len()
        )));
    }
    for (l, e) in logs.iter().zip(errors) {
        if e.values.width != l.width || e.values.height != l.height || e.values.channels != 1 {
            return Err(Error::invalid("error map dimensions do not match the view"));
        }
        if e.values.data.iter().any(|v| *v < 0.0) {
            return Err(Error::invalid("error maps must be non-negative"));
        }
    }
    Ok(())
}

/// Visibility representation: maximum over views of the aggregated
/// contribution factors.
pub fn visibility_representation(
    logs: &[ContributionLog],
    agg: Aggregation,
    include_alpha: bool,
) -> Result<PrimitiveRepresentation> {
    let n = check_logs(logs)?;
    let per_view = view_aggregates(logs, None, agg, include_alpha);
    let values = (0..n)
        .map(|k| per_view.iter().fold(0.0, |m, (a, _)| f64::max(m, a[k])))
        .collect();
    Ok(PrimitiveRepresentation::scalar(
        RepresentationKind::Visibility,
        agg,
        include_alpha,
        values,
    ))
}

/// Error representation: mean over views of the aggregated error-weighted
/// contribution factors.
pub fn error_representation(
    logs: &[ContributionLog],
    errors: &[ErrorMap],
    agg: Aggregation,
    include_alpha: bool,
    view_mean: ViewMean,
) -> Result<PrimitiveRepresentation> {
    let n = check_logs(logs)?;
    check_errors(logs, errors)?;
    let per_view = view_aggregates(logs, Some(errors), agg, include_alpha);
    let values = (0..n)
        .map(|k| {
            let sum: f64 = per_view.iter().map(|(a, _)| a[k]).sum();
            let denom = match view_mean {
                ViewMean::AllViews => per_view.len(),
                ViewMean::VisibleViews => per_view.iter().filter(|(_, seen)| seen[k]).count(),
            };
            if denom == 0 {
                0.0
            } else {
                sum / denom as f64
            }
        })
        .collect();
    Ok(PrimitiveRepresentation::scalar(
        RepresentationKind::Error,
        agg,
        include_alpha,
        values,
    ))
}

/// Rescaled von Mises-Fisher kernel `exp(kappa * nu.d - kappa)`, peak 1.
pub fn vmf_weight(nu: &Vector3<f64>, d: &Vector3<f64>, kappa: f64) -> f64 {
    (kappa * nu.dot(d) - kappa).exp()
}

/// A per-primitive function sampled on a fixed direction set.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledSphereFunction {
    pub n_dirs: usize,
    /// `values[k * n_dirs + i]`.
    pub values: Vec<f64>,
}

impl SampledSphereFunction {
    pub fn samples(&self, k: usize) -> &[f64] {
        &self.values[k * self.n_dirs..(k + 1) * self.n_dirs]
    }
}

/// Direction-dependent visibility (`errors == None`, max over views) or
/// error (`errors == Some`, mean over views) representation, evaluated at
/// `sample_dirs`. `view_dirs[v]` is the direction associated with view `v`.
#[allow(clippy::too_many_arguments)]
pub fn directional_representation(
    logs: &[ContributionLog],
    view_dirs: &[Vector3<f64>],
    errors: Option<&[ErrorMap]>,
    agg: Aggregation,
    include_alpha: bool,
    kappa: f64,
    sample_dirs: &[Vector3<f64>],
    view_mean: ViewMean,
) -> Result<SampledSphereFunction> {
    let n = check_logs(logs)?;
    if view_dirs.len() != logs.len() {
        return Err(Error::invalid("one view direction per training view required"));
    }
    if !(kappa > 0.0) {
        return Err(Error::invalid("kappa must be positive"));
    }
    if let Some(e) = errors {
        check_errors(logs, e)?;
    }
    let per_view = view_aggregates(logs, errors, agg, include_alpha);
    let nd = sample_dirs.len();
    let weights: Vec<Vec<f64>> = view_dirs
        .iter()
        .map(|nu| sample_dirs.iter().map(|d| vmf_weight(nu, d, kappa)).collect())
        .collect();
    let mut values = vec![0.0; n * nd];
    values
        .par_chunks_mut(nd.max(1))
        .enumerate()
        .for_each(|(k, out)| match errors {
            None => {
                for (v, (a, _)) in per_view.iter().enumerate() {
                    for (o, w) in out.iter_mut().zip(&weights[v]) {
                        *o = f64::max(*o, a[k] * w);
                    }
                }
            }
            Some(_) => {
                let denom = match view_mean {
                    ViewMean::AllViews => per_view.len(),
                    ViewMean::VisibleViews => per_view.iter().filter(|(_, s)| s[k]).count(),
                };
                if denom == 0 {
                    return;
                }
                for (v, (a, _)) in per_view.iter().enumerate() {
                    for (o, w) in out.iter_mut().zip(&weights[v]) {
                        *o += a[k] * w;
                    }
                }
                out.iter_mut().for_each(|o| *o /= denom as f64);
            }
        });
    Ok(SampledSphereFunction { n_dirs: nd, values })
}

/// Fits SH coefficients to every primitive's sampled sphere function.
pub fn encode_sh(sampled: &SampledSphereFunction, fitter: &ShFitter) -> Vec<f64> {
    let nc = sh::coeff_count(fitter.degree());
    let n = sampled.values.len() / sampled.n_dirs.max(1);
    let mut out = vec![0.0; n * nc];
    out.par_chunks_mut(nc).enumerate().for_each(|(k, c)| {
        fitter.fit_into(sampled.samples(k), c);
    });
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepresentationConfig {
    pub fov_margin: f64,
    pub directional: bool,
    pub kappa: f64,
    pub sh_degree: usize,
    pub sphere_samples: usize,
    pub view_mean: ViewMean,
}

impl Default for RepresentationConfig {
    fn default() -> Self {
        Self {
            fov_margin: DEFAULT_FOV_MARGIN,
            directional: false,
            kappa: DEFAULT_KAPPA,
            sh_degree: DEFAULT_SH_DEGREE,
            sphere_samples: DEFAULT_SPHERE_SAMPLES,
            view_mean: ViewMean::AllViews,
        }
    }
}

/// Builds the 13 representations in canonical channel order from the
/// training cameras, their contribution logs and their error maps.
pub fn build_representations(
    scene: &GaussianScene,
    cameras: &[Camera],
    logs: &[ContributionLog],
    errors: &[ErrorMap],
    config: &RepresentationConfig,
) -> Result<Vec<PrimitiveRepresentation>> {
    if cameras.len() != logs.len() {
        return Err(Error::invalid("one contribution log per training camera required"));
    }
    check_logs(logs)?;
    check_errors(logs, errors)?;
    if logs[0].n_gaussians() != scene.len() {
        return Err(Error::invalid("contribution logs do not match the scene"));
    }
    let mut reps = vec![fov_counter(scene, cameras, config.fov_margin)];

    let encoder = if config.directional {
        let dirs = sh::fibonacci_sphere(config.sphere_samples);
        let fitter = ShFitter::new(&dirs, config.sh_degree)?;
        let nus: Vec<_> = cameras.iter().map(|c| c.view_direction()).collect();
        Some((dirs, fitter, nus))
    } else {
        None
    };

    for kind in [RepresentationKind::Visibility, RepresentationKind::Error] {
        for include_alpha in [true, false] {
            for agg in Aggregation::ALL {
                let err = (kind == RepresentationKind::Error).then_some(errors);
                let rep = match &encoder {
                    None => match kind {
                        RepresentationKind::Visibility => visibility_representation(logs, agg, include_alpha)?,
                        _ => error_representation(logs, errors, agg, include_alpha, config.view_mean)?,
                    },
                    Some((dirs, fitter, nus)) => {
                        let sampled = directional_representation(
                            logs,
                            nus,
                            err,
                            agg,
                            include_alpha,
                            config.kappa,
                            dirs,
                            config.view_mean,
                        )?;
                        PrimitiveRepresentation {
                            kind,
                            agg,
                            include_alpha,
                            sh_degree: Some(config.sh_degree),
                            kappa: Some(config.kappa),
                            values: encode_sh(&sampled, fitter),
                        }
                    }
                };
                reps.push(rep);
            }
        }
    }
    debug_assert_eq!(reps.iter().map(|r| r.name()).collect::<Vec<_>>(), feature_names());
    Ok(reps)
}

/// A multi-channel feature image for one camera with its channel manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMaps {
    pub camera_id: String,
    pub names: Vec<String>,
    pub image: ImageBuffer,
}

impl FeatureMaps {
    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Keeps only the named channels, in the given order.
    pub fn select(&self, names: &[String]) -> Result<FeatureMaps> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.channel_index(n)
                    .ok_or_else(|| Error::invalid(format!("feature `{n}` not present")))
            })
            .collect::<Result<_>>()?;
        let px = self.image.pixel_count();
        let mut data = Vec::with_capacity(px * idx.len());
        for i in 0..px {
            let p = self.image.pixel(i);
            data.extend(idx.iter().map(|&c| p[c]));
        }
        Ok(FeatureMaps {
            camera_id: self.camera_id.clone(),
            names: names.to_vec(),
            image: ImageBuffer {
                width: self.image.width,
                height: self.image.height,
                channels: idx.len(),
                data,
            },
        })
    }
}

/// Renders representations as image channels, replacing primitive color
/// with the representation value along each primitive's view direction.
pub fn render_representations(
    scene: &GaussianScene,
    reps: &[PrimitiveRepresentation],
    names: &[String],
    camera: &Camera,
) -> Result<FeatureMaps> {
    if reps.is_empty() || reps.len() != names.len() {
        return Err(Error::invalid(format!(
            "{} representations for {} channel names",
            reps.len(),
            names.len()
        )));
    }
    if let Some(r) = reps
        .iter()
        .find(|r| r.len() != scene.len() || r.values.len() % r.stride() != 0)
    {
        return Err(Error::invalid(format!(
            "representation `{}` has {} entries for {} primitives",
            r.name(),
            r.len(),
            scene.len()
        )));
    }
    let ch = reps.len();
    let center = camera.center();
    let mut values = vec![0.0; scene.len() * ch];
    values.par_chunks_mut(ch).enumerate().for_each(|(k, out)| {
        let dir = crate::render::view_direction(&scene.primitives[k].mean, &center);
        for (o, r) in out.iter_mut().zip(reps) {
            *o = r.value_at(k, &dir);
        }
    });
    let out = render_view(
        scene,
        camera,
        ChannelSource::Values {
            channels: ch,
            values: &values,
        },
        false,
    )?;
    Ok(FeatureMaps {
        camera_id: camera.id.clone(),
        names: names.to_vec(),
        image: out.image,
    })
}

/// Renders the canonical 13-channel uncertainty feature maps.
pub fn render_feature_maps(
    scene: &GaussianScene,
    reps: &[PrimitiveRepresentation],
    camera: &Camera,
) -> Result<FeatureMaps> {
    if reps.len() != FEATURE_NAMES.len() {
        return Err(Error::invalid(format!(
            "expected {} representations, got {}",
            FEATURE_NAMES.len(),
            reps.len()
        )));
    }
    render_representations(scene, reps, &feature_names(), camera)
}
