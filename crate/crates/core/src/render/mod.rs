//! Forward CPU rasterizer for Gaussian splats.
//!
//! Splats are sorted globally by camera-space depth (ties by primitive
//! index) and composited front to back. An entry contributes to a pixel
//! when `alpha >= 1/255` and its transmittance is at least `1e-3`;
//! traversal stops as soon as the transmittance drops below that.

mod raster;
mod reference;

pub use raster::{
    contribution_log, primitive_color, render_view, view_direction, ChannelSource, PixelContribution, PixelRect,
    PreparedView, RenderOutput, Replacement,
};
pub use reference::reference_render;

use nalgebra::{Matrix2, Matrix2x3, Vector2};

use crate::scene::{Camera, GaussianPrimitive};

pub const ALPHA_MIN: f64 = 1.0 / 255.0;
pub const ALPHA_MAX: f64 = 0.99;
pub const TRANSMITTANCE_MIN: f64 = 1e-3;
/// Low-pass dilation added to the projected covariance diagonal, px^2.
pub const DILATION: f64 = 0.3;

/// A primitive projected to the image plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Splat2D {
    pub gaussian_index: usize,
    pub mean2d: Vector2<f64>,
    pub cov2d: Matrix2<f64>,
    /// Inverse of `cov2d`.
    pub conic: Matrix2<f64>,
    /// Camera-space z.
    pub depth: f64,
    pub opacity: f64,
    pub bbox: PixelRect,
}

impl Splat2D {
    /// Gaussian falloff `exp(-0.5 d^T conic d)` at pixel center `(x, y)`.
    #[inline]
    pub fn falloff(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.mean2d.x;
        let dy = y - self.mean2d.y;
        let q = self.conic[(0, 0)] * dx * dx + 2.0 * self.conic[(0, 1)] * dx * dy + self.conic[(1, 1)] * dy * dy;
        (-0.5 * q).exp()
    }

    /// Clamped opacity at a pixel, and the unclamped falloff.
    #[inline]
    pub fn alpha(&self, x: f64, y: f64) -> (f64, f64) {
        let phi = self.falloff(x, y);
        ((self.opacity * phi).min(ALPHA_MAX), phi)
    }

    /// Sort key: depth, then primitive index.
    #[inline]
    pub(crate) fn precedes(&self, other: &Splat2D) -> bool {
        (self.depth, self.gaussian_index) < (other.depth, other.gaussian_index)
    }
}

/// Projects one primitive. Returns `None` when the mean lies at or behind
/// the near plane. The bounding box covers every pixel where the splat's
/// opacity can reach the `1/255` threshold; it may be empty.
pub fn project_gaussian(primitive: &GaussianPrimitive, gaussian_index: usize, camera: &Camera) -> Option<Splat2D> {
    let t = camera.to_camera(&primitive.mean);
    let mean2d = camera.project_camera_point(&t)?;
    let (tx, ty, tz) = (t.x, t.y, t.z);
    let jac = Matrix2x3::new(
        camera.fx / tz,
        0.0,
        -camera.fx * tx / (tz * tz),
        0.0,
        camera.fy / tz,
        -camera.fy * ty / (tz * tz),
    );
    let m = jac * camera.rotation;
    let mut cov2d = m * primitive.covariance() * m.transpose();
    cov2d[(0, 1)] = 0.5 * (cov2d[(0, 1)] + cov2d[(1, 0)]);
    cov2d[(1, 0)] = cov2d[(0, 1)];
    cov2d[(0, 0)] += DILATION;
    cov2d[(1, 1)] += DILATION;
    let det = cov2d.determinant();
    let conic = if det > 0.0 {
        Matrix2::new(cov2d[(1, 1)], -cov2d[(0, 1)], -cov2d[(1, 0)], cov2d[(0, 0)]) / det
    } else {
        Matrix2::zeros()
    };
    let bbox = support_rect(&mean2d, &cov2d, primitive.opacity, camera);
    Some(Splat2D {
        gaussian_index,
        mean2d,
        cov2d,
        conic,
        depth: tz,
        opacity: primitive.opacity,
        bbox: if det > 0.0 { bbox } else { PixelRect::EMPTY },
    })
}

fn support_rect(mean: &Vector2<f64>, cov: &Matrix2<f64>, opacity: f64, camera: &Camera) -> PixelRect {
    // g * exp(-q/2) >= 1/255  <=>  q <= 2 ln(255 g)
    let q_max = 2.0 * (opacity / ALPHA_MIN).ln();
    if !(q_max >= 0.0) {
        return PixelRect::EMPTY;
    }
    let pad = 1.0 + 1e-9;
    let hx = (q_max * cov[(0, 0)]).sqrt() * pad + 1e-9;
    let hy = (q_max * cov[(1, 1)]).sqrt() * pad + 1e-9;
    let x0 = (mean.x - hx).ceil().max(0.0);
    let y0 = (mean.y - hy).ceil().max(0.0);
    let x1 = ((mean.x + hx).floor() + 1.0).min(camera.width as f64);
    let y1 = ((mean.y + hy).floor() + 1.0).min(camera.height as f64);
    if !(x0 < x1 && y0 < y1) {
        return PixelRect::EMPTY;
    }
    PixelRect {
        x0: x0 as usize,
        y0: y0 as usize,
        x1: x1 as usize,
        y1: y1 as usize,
    }
}

/// One logged `(alpha, T)` pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contribution {
    pub gaussian_index: usize,
    pub alpha: f64,
    pub transmittance: f64,
}

/// Composites depth-sorted splats at a single pixel for one channel.
///
/// Returns the blended value and the contributing entries in traversal
/// order.
pub fn composite_pixel(splats: &[Splat2D], pixel: Vector2<f64>, channel_values: &[f64]) -> (f64, Vec<Contribution>) {
    assert_eq!(splats.len(), channel_values.len());
    let mut value = 0.0;
    let mut t = 1.0;
    let mut contributions = Vec::new();
    for (splat, v) in splats.iter().zip(channel_values) {
        if t < TRANSMITTANCE_MIN {
            break;
        }
        if splat.conic == Matrix2::zeros() {
            continue;
        }
        let (alpha, _) = splat.alpha(pixel.x, pixel.y);
        if alpha < ALPHA_MIN {
            continue;
        }
        value += v * alpha * t;
        contributions.push(Contribution {
            gaussian_index: splat.gaussian_index,
            alpha,
            transmittance: t,
        });
        t *= 1.0 - alpha;
    }
    (value, contributions)
}

/// Per-view record of which primitives contributed to which pixels.
///
/// Entries are grouped by primitive index; within a primitive they are
/// sorted by row-major pixel index.
#[derive(Clone, Debug, PartialEq)]
pub struct ContributionLog {
    pub width: usize,
    pub height: usize,
    offsets: Vec<usize>,
    entries: Vec<LogEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogEntry {
    pub pixel: u32,
    pub alpha: f64,
    pub transmittance: f64,
}

impl ContributionLog {
    /// Builds a log from `(gaussian, entry)` pairs already ordered by pixel.
    pub(crate) fn from_pixel_ordered(
        width: usize,
        height: usize,
        n_gaussians: usize,
        items: &[(u32, LogEntry)],
    ) -> Self {
        let mut counts = vec![0usize; n_gaussians + 1];
        for (g, _) in items {
            counts[*g as usize + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let offsets = counts.clone();
        let mut cursor = counts;
        let mut entries = vec![
            LogEntry {
                pixel: 0,
                alpha: 0.0,
                transmittance: 0.0
            };
            items.len()
        ];
        for (g, e) in items {
            let slot = &mut cursor[*g as usize];
            entries[*slot] = *e;
            *slot += 1;
        }
        Self {
            width,
            height,
            offsets,
            entries,
        }
    }

    pub fn from_parts(width: usize, height: usize, offsets: Vec<usize>, entries: Vec<LogEntry>) -> crate::Result<Self> {
        let ok = !offsets.is_empty()
            && offsets[0] == 0
            && offsets.windows(2).all(|w| w[0] <= w[1])
            && *offsets.last().unwrap() == entries.len()
            && entries.iter().all(|e| (e.pixel as usize) < width * height);
        if !ok {
            return Err(crate::Error::invalid("inconsistent contribution log"));
        }
        Ok(Self {
            width,
            height,
            offsets,
            entries,
        })
    }

    pub fn n_gaussians(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn entries_for(&self, gaussian: usize) -> &[LogEntry] {
        &self.entries[self.offsets[gaussian]..self.offsets[gaussian + 1]]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
