//! Diagonal Fisher information of the rendered color image with respect to
//! primitive parameters, and the variance-based uncertainty derived from it.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::{
    primitive_color, project_gaussian, view_direction, ChannelSource, PixelContribution, PixelRect, PreparedView,
    Replacement, Splat2D, ALPHA_MAX,
};
use crate::representations::{Aggregation, PrimitiveRepresentation, RepresentationKind};
use crate::scene::{Camera, GaussianPrimitive, GaussianScene, ImageBuffer};
use crate::sh;

pub const DEFAULT_FISHER_EPS: f64 = 1e-6;
pub const DEFAULT_FD_STEP: f64 = 1e-4;
const FD_STEP_FLOOR: f64 = 1e-6;

/// Parameter groups of a primitive, in storage order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamGroup {
    Mean,
    Scale,
    Rotation,
    Opacity,
    ShDc,
    ShRest,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 6] = [
        ParamGroup::Mean,
        ParamGroup::Scale,
        ParamGroup::Rotation,
        ParamGroup::Opacity,
        ParamGroup::ShDc,
        ParamGroup::ShRest,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ParamGroup::Mean => "mean",
            ParamGroup::Scale => "scale",
            ParamGroup::Rotation => "rotation",
            ParamGroup::Opacity => "opacity",
            ParamGroup::ShDc => "sh-dc",
            ParamGroup::ShRest => "sh-rest",
        }
    }

    /// Offsets of this group inside one primitive's parameter block.
    pub fn range(&self, sh_degree: usize) -> std::ops::Range<usize> {
        let rest = 3 * (sh::coeff_count(sh_degree) - 1);
        match self {
            ParamGroup::Mean => 0..3,
            ParamGroup::Scale => 3..6,
            ParamGroup::Rotation => 6..10,
            ParamGroup::Opacity => 10..11,
            ParamGroup::ShDc => 11..14,
            ParamGroup::ShRest => 14..14 + rest,
        }
    }
}

pub fn params_per_primitive(sh_degree: usize) -> usize {
    14 + 3 * (sh::coeff_count(sh_degree) - 1)
}

/// Feature names of the grouped maps followed by the plain baseline.
pub const FISHER_FEATURE_NAMES: [&str; 7] = [
    "fisher-mean",
    "fisher-scale",
    "fisher-rotation",
    "fisher-opacity",
    "fisher-sh-dc",
    "fisher-sh-rest",
    "fisherrf",
];

/// Per-primitive, per-parameter accumulated squared gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct FisherDiagonal {
    pub sh_degree: usize,
    pub n_gaussians: usize,
    /// `n_gaussians x params_per_primitive(sh_degree)`, row-major.
    pub values: Vec<f64>,
}

impl FisherDiagonal {
    pub fn zeros(sh_degree: usize, n_gaussians: usize) -> Self {
        Self {
            sh_degree,
            n_gaussians,
            values: vec![0.0; n_gaussians * params_per_primitive(sh_degree)],
        }
    }

    pub fn stride(&self) -> usize {
        params_per_primitive(self.sh_degree)
    }

    pub fn primitive(&self, k: usize) -> &[f64] {
        let p = self.stride();
        &self.values[k * p..(k + 1) * p]
    }

    pub fn group(&self, k: usize, g: ParamGroup) -> &[f64] {
        &self.primitive(k)[g.range(self.sh_degree)]
    }

    pub fn add(&mut self, other: &FisherDiagonal) -> Result<()> {
        if other.sh_degree != self.sh_degree || other.n_gaussians != self.n_gaussians {
            return Err(Error::invalid("fisher diagonals have different shapes"));
        }
        self.values.iter_mut().zip(&other.values).for_each(|(a, b)| *a += b);
        Ok(())
    }
}

/// Which gradients enter the Fisher accumulation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FisherOptions {
    /// Finite-difference mean / scale / rotation entries. Without it those
    /// groups stay zero.
    pub geometric: bool,
    pub fd_step: f64,
}

impl Default for FisherOptions {
    fn default() -> Self {
        Self {
            geometric: true,
            fd_step: DEFAULT_FD_STEP,
        }
    }
}

/// `dC_channel / dc_lm = alpha * T * Y_lm(dir)` for every coefficient of
/// one channel.
pub fn color_param_gradient(alpha: f64, transmittance: f64, basis: &[f64]) -> Vec<f64> {
    basis.iter().map(|y| alpha * transmittance * y).collect()
}

/// `dC/dg` for the entry at `target` of one pixel's front-to-back
/// contribution list, with `values[i]` the channel value of entry `i`.
/// Zero when the entry's alpha is clamped.
pub fn opacity_gradient(contribs: &[PixelContribution], values: &[f64], target: usize) -> f64 {
    let c = &contribs[target];
    if c.alpha >= ALPHA_MAX {
        return 0.0;
    }
    let behind: f64 = contribs[target + 1..]
        .iter()
        .zip(&values[target + 1..])
        .map(|(e, v)| v * e.alpha * e.transmittance)
        .sum();
    c.falloff * (c.transmittance * values[target] - behind / (1.0 - c.alpha))
}

/// Scalar geometric parameter of a primitive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "group", content = "component")]
pub enum GeometricParam {
    Mean(usize),
    Scale(usize),
    Rotation(usize),
}

impl GeometricParam {
    pub const ALL: [GeometricParam; 10] = [
        GeometricParam::Mean(0),
        GeometricParam::Mean(1),
        GeometricParam::Mean(2),
        GeometricParam::Scale(0),
        GeometricParam::Scale(1),
        GeometricParam::Scale(2),
        GeometricParam::Rotation(0),
        GeometricParam::Rotation(1),
        GeometricParam::Rotation(2),
        GeometricParam::Rotation(3),
    ];

    fn get(&self, p: &GaussianPrimitive) -> f64 {
        match *self {
            GeometricParam::Mean(i) => p.mean[i],
            GeometricParam::Scale(i) => p.scale[i],
            GeometricParam::Rotation(i) => p.rotation[i],
        }
    }

    fn set(&self, p: &mut GaussianPrimitive, v: f64) {
        match *self {
            GeometricParam::Mean(i) => p.mean[i] = v,
            GeometricParam::Scale(i) => p.scale[i] = v,
            GeometricParam::Rotation(i) => p.rotation[i] = v,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            GeometricParam::Mean(i) | GeometricParam::Scale(i) => i < 3,
            GeometricParam::Rotation(i) => i < 4,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("parameter component out of range: {self:?}")))
        }
    }
}

/// Step for a parameter of magnitude `|theta|`.
pub fn fd_step(theta: f64, relative: f64) -> f64 {
    (relative * theta.abs()).max(FD_STEP_FLOOR)
}

/// Central difference of the color render over `rect`, with the
/// renderer's discrete decisions (sort position, support, alpha threshold)
/// held at the unperturbed primitive.
fn central_difference(
    view: &PreparedView<'_>,
    colors: &[f64],
    anchor: &Splat2D,
    param: GeometricParam,
    step: f64,
    rect: PixelRect,
) -> Vec<f64> {
    let scene = view.scene();
    let k = anchor.gaussian_index;
    let center = view.camera().center();
    let base = &scene.primitives[k];
    let h = fd_step(param.get(base), step);
    let eval = |delta: f64| {
        let mut p = base.clone();
        param.set(&mut p, param.get(base) + delta);
        let col = primitive_color(&p, scene.sh_degree, &center);
        match project_gaussian(&p, k, view.camera()) {
            Some(s) => view.render_with_replacement(
                3,
                colors,
                k,
                Some(Replacement {
                    splat: &s,
                    values: &col,
                    anchor: Some(anchor),
                }),
                rect,
            ),
            None => view.render_with_replacement(3, colors, k, None, rect),
        }
    };
    let plus = eval(h);
    let minus = eval(-h);
    plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * h)).collect()
}

/// Per-pixel color gradient image (3 channels) of one geometric parameter,
/// by central differences with relative step `step`. All zero when the
/// primitive is culled in this view.
pub fn geometric_gradient_fd(
    scene: &GaussianScene,
    camera: &Camera,
    gaussian: usize,
    param: GeometricParam,
    step: f64,
) -> Result<ImageBuffer> {
    param.validate()?;
    if gaussian >= scene.len() {
        return Err(Error::invalid(format!("primitive {gaussian} out of range")));
    }
    let view = PreparedView::new(scene, camera);
    let (_, colors) = view.splat_values(&ChannelSource::Color)?;
    let mut img = ImageBuffer::zeros(camera.width, camera.height, 3);
    if let Some(anchor) = view.splats().iter().find(|s| s.gaussian_index == gaussian) {
        let rect = anchor.bbox;
        let block = central_difference(&view, &colors, anchor, param, step, rect);
        for y in rect.y0..rect.y1 {
            for x in rect.x0..rect.x1 {
                for c in 0..3 {
                    img.set(x, y, c, block[((y - rect.y0) * rect.width() + x - rect.x0) * 3 + c]);
                }
            }
        }
    }
    Ok(img)
}

/// Raw SH value per channel of primitive `k` along `dir`, before offset.
fn raw_color(p: &GaussianPrimitive, sh_degree: usize, dir: &Vector3<f64>) -> [f64; 3] {
    let n = sh::coeff_count(sh_degree);
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        *o = sh::sh_eval(&p.sh_color[c * n..(c + 1) * n], dir, sh_degree).unwrap_or(0.0);
    }
    out
}

/// Fisher diagonal contributed by one view.
pub fn view_fisher(scene: &GaussianScene, camera: &Camera, opts: &FisherOptions) -> Result<FisherDiagonal> {
    let deg = scene.sh_degree;
    let n = scene.len();
    let ncoef = sh::coeff_count(deg);
    let stride = params_per_primitive(deg);
    let view = PreparedView::new(scene, camera);
    let (_, colors) = view.splat_values(&ChannelSource::Color)?;

    // per pixel: (primitive, (alpha T)^2, sum over channels of (dC/dg)^2)
    let per_pixel = view.visit_pixels(|_, contribs| {
        // suffix sums of v * alpha * T behind each entry, per channel
        let mut behind = [0.0; 3];
        let mut out: Vec<(u32, f64, f64)> = contribs
            .iter()
            .rev()
            .map(|e| {
                let w = e.alpha * e.transmittance;
                let mut g2 = 0.0;
                for (c, b) in behind.iter_mut().enumerate() {
                    let v = colors[e.position * 3 + c];
                    if e.alpha < ALPHA_MAX {
                        g2 += (e.falloff * (e.transmittance * v - *b / (1.0 - e.alpha))).powi(2);
                    }
                    *b += v * w;
                }
                (e.gaussian_index as u32, w * w, g2)
            })
            .collect();
        out.reverse();
        out
    });
    let mut w2 = vec![0.0; n];
    let mut op = vec![0.0; n];
    for px in &per_pixel {
        for &(k, a, b) in px {
            w2[k as usize] += a;
            op[k as usize] += b;
        }
    }

    let center = camera.center();
    let mut fisher = FisherDiagonal::zeros(deg, n);
    fisher.values.par_chunks_mut(stride).enumerate().for_each(|(k, row)| {
        if w2[k] == 0.0 && op[k] == 0.0 {
            return;
        }
        let p = &scene.primitives[k];
        let dir = view_direction(&p.mean, &center);
        let basis = sh::basis_vec(deg, &dir);
        let raw = raw_color(p, deg, &dir);
        row[ParamGroup::Opacity.range(deg).start] = op[k];
        for c in 0..3 {
            // the 0.5 offset and clamp at zero cut the gradient
            if raw[c] + 0.5 < 0.0 {
                continue;
            }
            row[ParamGroup::ShDc.range(deg).start + c] = w2[k] * basis[0] * basis[0];
            let rest = ParamGroup::ShRest.range(deg).start + c * (ncoef - 1);
            for j in 1..ncoef {
                row[rest + j - 1] = w2[k] * basis[j] * basis[j];
            }
        }
    });

    if opts.geometric {
        let geo: Vec<(usize, [f64; 10])> = view
            .splats()
            .par_iter()
            .map(|anchor| {
                let mut acc = [0.0; 10];
                for (slot, param) in acc.iter_mut().zip(GeometricParam::ALL) {
                    let g = central_difference(&view, &colors, anchor, param, opts.fd_step, anchor.bbox);
                    *slot = g.iter().map(|v| v * v).sum();
                }
                (anchor.gaussian_index, acc)
            })
            .collect();
        for (k, acc) in geo {
            fisher.values[k * stride..k * stride + 10].copy_from_slice(&acc);
        }
    }
    Ok(fisher)
}

/// Fisher diagonal summed over training cameras in the given order.
pub fn fisher_diagonal(scene: &GaussianScene, cameras: &[Camera], opts: &FisherOptions) -> Result<FisherDiagonal> {
    let mut total = FisherDiagonal::zeros(scene.sh_degree, scene.len());
    for cam in cameras {
        total.add(&view_fisher(scene, cam, opts)?)?;
    }
    Ok(total)
}

/// Six group uncertainties `sum 1/(F + eps)` and the plain baseline (sum
/// over both color groups), in [`FISHER_FEATURE_NAMES`] order.
pub fn grouped_uncertainty(fisher: &FisherDiagonal, eps: f64) -> Result<Vec<PrimitiveRepresentation>> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::invalid("fisher regularizer must be finite and non-negative"));
    }
    let mut groups: Vec<Vec<f64>> = (0..6).map(|_| Vec::with_capacity(fisher.n_gaussians)).collect();
    for k in 0..fisher.n_gaussians {
        for (out, g) in groups.iter_mut().zip(ParamGroup::ALL) {
            out.push(fisher.group(k, g).iter().map(|f| 1.0 / (f + eps)).sum());
        }
    }
    let plain: Vec<f64> = groups[4].iter().zip(&groups[5]).map(|(a, b)| a + b).collect();
    groups.push(plain);
    Ok(groups
        .into_iter()
        .map(|v| PrimitiveRepresentation::scalar(RepresentationKind::Fisher, Aggregation::Sum, false, v))
        .collect())
}

pub fn fisher_feature_names() -> Vec<String> {
    FISHER_FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
}
