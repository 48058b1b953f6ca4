//! Seeded desk-scale scenes with controlled reconstruction error.
//!
//! A "truth" scene provides ground-truth color and depth for every camera;
//! a degraded copy plays the role of the trained scene whose errors the
//! pipeline has to predict.

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::{render_view, ChannelSource};
use crate::representations::{pixel_error_map, ErrorMap};
use crate::scene::{normalize_quat, Camera, GaussianPrimitive, GaussianScene, ImageBuffer, View, ViewRole, ViewSet};
use crate::sh;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "amount")]
pub enum Degradation {
    /// Remove a fraction `p` of the primitives.
    Drop(f64),
    /// Add isotropic Gaussian noise of this standard deviation to the means.
    JitterMeans(f64),
    /// Add Gaussian noise of this standard deviation to the opacities.
    OpacityNoise(f64),
}

impl std::str::FromStr for Degradation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (mode, amount) = s
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("degradation `{s}` is not <mode>:<amount>")))?;
        let amount: f64 = amount
            .parse()
            .map_err(|_| Error::invalid(format!("bad degradation amount `{amount}`")))?;
        match mode {
            "drop" => Ok(Degradation::Drop(amount)),
            "jitter" => Ok(Degradation::JitterMeans(amount)),
            "opacity" => Ok(Degradation::OpacityNoise(amount)),
            other => Err(Error::invalid(format!("unknown degradation mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_gaussians: usize,
    pub world_radius: f64,
    /// Cameras per ring.
    pub ring_count: usize,
    pub ring_radius: f64,
    /// One ring per height.
    pub ring_heights: Vec<f64>,
    pub width: usize,
    pub height: usize,
    pub degradation: Degradation,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_gaussians: 500,
            world_radius: 1.0,
            ring_count: 12,
            ring_radius: 3.5,
            ring_heights: vec![-0.8, 0.8],
            width: 128,
            height: 128,
            degradation: Degradation::Drop(0.3),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_gaussians == 0 || self.ring_count == 0 || self.ring_heights.is_empty() {
            return Err(Error::invalid("synthetic counts must be at least 1"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("synthetic image size must be at least 1x1"));
        }
        if !(self.world_radius > 0.0) || !(self.ring_radius > self.world_radius) {
            return Err(Error::invalid("ring radius must exceed a positive world radius"));
        }
        match self.degradation {
            Degradation::Drop(p) if !(0.0..1.0).contains(&p) => {
                Err(Error::invalid(format!("drop fraction {p} outside [0, 1)")))
            }
            Degradation::JitterMeans(s) | Degradation::OpacityNoise(s) if !(s >= 0.0) => {
                Err(Error::invalid(format!("noise level {s} must be non-negative")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthScene {
    pub truth: GaussianScene,
    pub degraded: GaussianScene,
    pub views: ViewSet,
}

fn random_quat(rng: &mut ChaCha8Rng) -> [f64; 4] {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
        if let Ok(q) = normalize_quat(q) {
            return q;
        }
    }
}

/// Random primitives with means uniform in a ball of `radius`.
pub fn random_primitives(rng: &mut ChaCha8Rng, n: usize, sh_degree: usize, radius: f64) -> Vec<GaussianPrimitive> {
    let nc = sh::coeff_count(sh_degree);
    (0..n)
        .map(|_| {
            let mean = loop {
                let p = Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                if p.norm_squared() <= 1.0 {
                    break p * radius;
                }
            };
            let scale = Vector3::from_fn(|_, _| radius * (rng.random_range(0.03f64.ln()..0.12f64.ln())).exp());
            let rotation = random_quat(rng);
            let opacity = rng.random_range(0.3..1.0);
            let mut sh_color = vec![0.0; 3 * nc];
            for ch in 0..3 {
                sh_color[ch * nc] = rng.random_range(-1.2..1.2);
                for j in 1..nc {
                    sh_color[ch * nc + j] = rng.random_range(-0.3..0.3);
                }
            }
            GaussianPrimitive {
                mean,
                scale,
                rotation,
                opacity,
                sh_color,
            }
        })
        .collect()
}

/// A seeded random scene of `n` primitives in a ball of `radius`.
pub fn random_scene(seed: u64, n: usize, sh_degree: usize, radius: f64) -> GaussianScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GaussianScene {
        sh_degree,
        primitives: random_primitives(&mut rng, n, sh_degree, radius),
    }
}

/// Cameras on horizontal rings around the origin, all looking at it.
pub fn ring_cameras(spec: &SynthSpec) -> Result<Vec<Camera>> {
    let mut cams = Vec::new();
    for (r, &h) in spec.ring_heights.iter().enumerate() {
        for i in 0..spec.ring_count {
            let a = (i as f64 + 0.5 * r as f64) / spec.ring_count as f64 * std::f64::consts::TAU;
            let eye = Vector3::new(spec.ring_radius * a.cos(), h, spec.ring_radius * a.sin());
            let dist = eye.norm();
            let tan_half = 1.3 * spec.world_radius / (dist * dist - spec.world_radius.powi(2)).sqrt();
            let focal = 0.5 * spec.width.min(spec.height) as f64 / tan_half;
            cams.push(Camera::look_at(
                format!("{:03}", cams.len()),
                eye,
                Vector3::zeros(),
                Vector3::new(0.0, -1.0, 0.0),
                focal,
                spec.width,
                spec.height,
            )?);
        }
    }
    Ok(cams)
}

/// Every fourth camera is held out; the first held-out camera fits the
/// regressor and the remaining ones are for evaluation.
pub fn role_for(index: usize) -> ViewRole {
    match (index % 4, index) {
        (0, 0) => ViewRole::HoldoutTrainReg,
        (0, _) => ViewRole::HoldoutEval,
        _ => ViewRole::Train,
    }
}

fn degrade(truth: &GaussianScene, degradation: Degradation, rng: &mut ChaCha8Rng) -> Result<GaussianScene> {
    let mut out = truth.clone();
    match degradation {
        Degradation::Drop(p) => {
            let n = truth.len();
            let keep = ((1.0 - p) * n as f64).ceil() as usize;
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(rng);
            idx.truncate(keep.min(n));
            idx.sort_unstable();
            out.primitives = idx.into_iter().map(|i| truth.primitives[i].clone()).collect();
        }
        Degradation::JitterMeans(sigma) => {
            if sigma > 0.0 {
                let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
                for p in &mut out.primitives {
                    for k in 0..3 {
                        p.mean[k] += normal.sample(rng);
                    }
                }
            }
        }
        Degradation::OpacityNoise(sigma) => {
            if sigma > 0.0 {
                let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
                for p in &mut out.primitives {
                    p.opacity = (p.opacity + normal.sample(rng)).clamp(0.0, 1.0);
                }
            }
        }
    }
    Ok(out)
}

/// Generates truth and degraded scenes plus the view set with ground truth
/// rendered from the truth scene. Masks mark pixels with accumulated
/// truth opacity of at least one half.
pub fn generate(spec: &SynthSpec) -> Result<SynthScene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let truth = GaussianScene::new(1, random_primitives(&mut rng, spec.n_gaussians, 1, spec.world_radius))?;
    let degraded = degrade(&truth, spec.degradation, &mut rng)?;
    let n = truth.len();
    let ones = vec![1.0; n];
    let views = ring_cameras(spec)?
        .into_iter()
        .enumerate()
        .map(|(i, camera)| {
            let gt_color = render_view(&truth, &camera, ChannelSource::Color, false)?.image;
            let gt_depth = render_view(&truth, &camera, ChannelSource::Depth, false)?.image;
            let cover = render_view(
                &truth,
                &camera,
                ChannelSource::Values {
                    channels: 1,
                    values: &ones,
                },
                false,
            )?
            .image;
            let mask = ImageBuffer {
                data: cover.data.iter().map(|&c| if c >= 0.5 { 1.0 } else { 0.0 }).collect(),
                ..cover
            };
            Ok(View {
                camera,
                role: role_for(i),
                gt_color,
                gt_depth: Some(gt_depth),
                mask: Some(mask),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthScene {
        truth,
        degraded,
        views: ViewSet::new(views)?,
    })
}

/// Color and (when ground truth exists) depth error maps of `scene`
/// rendered into every view.
pub fn error_ground_truth(views: &[View], scene: &GaussianScene) -> Result<Vec<(ErrorMap, Option<ErrorMap>)>> {
    views
        .iter()
        .map(|v| {
            let color = render_view(scene, &v.camera, ChannelSource::Color, false)?.image;
            let color_err = pixel_error_map(&v.gt_color, &color)?;
            let depth_err = match &v.gt_depth {
                Some(gt) => {
                    let depth = render_view(scene, &v.camera, ChannelSource::Depth, false)?.image;
                    Some(pixel_error_map(gt, &depth)?)
                }
                None => None,
            };
            Ok((color_err, depth_err))
        })
        .collect()
}
