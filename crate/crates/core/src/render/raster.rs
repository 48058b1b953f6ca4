use nalgebra::Vector3;
use rayon::prelude::*;

use super::{project_gaussian, ContributionLog, LogEntry, Splat2D, ALPHA_MIN, TRANSMITTANCE_MIN};
use crate::error::{Error, Result};
use crate::scene::{Camera, GaussianPrimitive, GaussianScene, ImageBuffer};
use crate::sh;

const TILE: usize = 16;

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelRect {
    pub const EMPTY: PixelRect = PixelRect {
        x0: 0,
        y0: 0,
        x1: 0,
        y1: 0,
    };

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            x0: 0,
            y0: 0,
            x1: width,
            y1: height,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.x0 >= self.x1 || self.y0 >= self.y1
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn union(&self, other: &PixelRect) -> PixelRect {
        if self.is_empty() {
            return *other;
        }
        if other.is_empty() {
            return *self;
        }
        PixelRect {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }

    pub fn width(&self) -> usize {
        self.x1.saturating_sub(self.x0)
    }

    pub fn height(&self) -> usize {
        self.y1.saturating_sub(self.y0)
    }
}

/// What each primitive contributes to the composited channels.
#[derive(Clone, Copy, Debug)]
pub enum ChannelSource<'a> {
    /// View-dependent SH color (`+0.5` offset, clamped at 0), 3 channels.
    Color,
    /// Alpha-blended camera-space depth, not normalized by accumulated weight.
    Depth,
    /// Alpha-blended depth divided by the accumulated weight.
    NormalizedDepth,
    /// Arbitrary per-primitive values, primitive-major.
    Values { channels: usize, values: &'a [f64] },
}

/// One entry of a pixel's front-to-back traversal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelContribution {
    /// Position in the view's depth-sorted splat list.
    pub position: usize,
    pub gaussian_index: usize,
    pub alpha: f64,
    /// Unclamped falloff, `alpha = min(0.99, opacity * falloff)`.
    pub falloff: f64,
    pub transmittance: f64,
}

#[derive(Clone, Debug)]
pub struct RenderOutput {
    pub image: ImageBuffer,
    pub log: Option<ContributionLog>,
}

/// Splats of one view, depth-sorted and binned into screen tiles.
pub struct PreparedView<'a> {
    scene: &'a GaussianScene,
    camera: &'a Camera,
    splats: Vec<Splat2D>,
    tiles_x: usize,
    tile_offsets: Vec<usize>,
    tile_items: Vec<u32>,
}

impl<'a> PreparedView<'a> {
    pub fn new(scene: &'a GaussianScene, camera: &'a Camera) -> Self {
        let mut splats: Vec<Splat2D> = scene
            .primitives
            .par_iter()
            .enumerate()
            .filter_map(|(i, p)| project_gaussian(p, i, camera))
            .filter(|s| !s.bbox.is_empty())
            .collect();
        splats.sort_by(|a, b| {
            a.depth
                .total_cmp(&b.depth)
                .then(a.gaussian_index.cmp(&b.gaussian_index))
        });

        let tiles_x = camera.width.div_ceil(TILE);
        let tiles_y = camera.height.div_ceil(TILE);
        let mut counts = vec![0usize; tiles_x * tiles_y + 1];
        for s in &splats {
            for ty in s.bbox.y0 / TILE..=(s.bbox.y1 - 1) / TILE {
                for tx in s.bbox.x0 / TILE..=(s.bbox.x1 - 1) / TILE {
                    counts[ty * tiles_x + tx + 1] += 1;
                }
            }
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let mut cursor = counts.clone();
        let mut tile_items = vec![0u32; *counts.last().unwrap()];
        for (pos, s) in splats.iter().enumerate() {
            for ty in s.bbox.y0 / TILE..=(s.bbox.y1 - 1) / TILE {
                for tx in s.bbox.x0 / TILE..=(s.bbox.x1 - 1) / TILE {
                    let slot = &mut cursor[ty * tiles_x + tx];
                    tile_items[*slot] = pos as u32;
                    *slot += 1;
                }
            }
        }
        Self {
            scene,
            camera,
            splats,
            tiles_x,
            tile_offsets: counts,
            tile_items,
        }
    }

    pub fn camera(&self) -> &Camera {
        self.camera
    }

    pub fn scene(&self) -> &GaussianScene {
        self.scene
    }

    /// Depth-sorted splats with non-empty support.
    pub fn splats(&self) -> &[Splat2D] {
        &self.splats
    }

    fn tile_list(&self, x: usize, y: usize) -> &[u32] {
        let t = (y / TILE) * self.tiles_x + x / TILE;
        &self.tile_items[self.tile_offsets[t]..self.tile_offsets[t + 1]]
    }

    /// Front-to-back walk at pixel `(x, y)`. `skip` removes one primitive;
    /// `extra` inserts a replacement splat (reported with position `None`).
    /// Returns the final transmittance.
    #[inline]
    fn walk<F>(&self, x: usize, y: usize, skip: Option<usize>, extra: Option<Replacement<'_>>, mut f: F) -> f64
    where
        F: FnMut(Option<usize>, &Splat2D, f64, f64, f64),
    {
        let (px, py) = (x as f64, y as f64);
        let mut t = 1.0;
        let mut pending = extra.filter(|e| e.gate().bbox.contains(x, y));
        for &pos in self.tile_list(x, y) {
            let s = &self.splats[pos as usize];
            if let Some(e) = pending {
                if e.gate().precedes(s) {
                    pending = None;
                    if t < TRANSMITTANCE_MIN {
                        return t;
                    }
                    visit_replacement(&e, px, py, &mut t, &mut f);
                }
            }
            if Some(s.gaussian_index) == skip || !s.bbox.contains(x, y) {
                continue;
            }
            if t < TRANSMITTANCE_MIN {
                return t;
            }
            let (alpha, phi) = s.alpha(px, py);
            if alpha >= ALPHA_MIN {
                f(Some(pos as usize), s, alpha, phi, t);
                t *= 1.0 - alpha;
            }
        }
        if let Some(e) = pending {
            if t >= TRANSMITTANCE_MIN {
                visit_replacement(&e, px, py, &mut t, &mut f);
            }
        }
        t
    }

    /// Per-splat channel values in sorted-splat order.
    pub fn splat_values(&self, source: &ChannelSource<'_>) -> Result<(usize, Vec<f64>)> {
        match *source {
            ChannelSource::Color => {
                let center = self.camera.center();
                let values = self
                    .splats
                    .par_iter()
                    .flat_map_iter(|s| color_of(self.scene, s.gaussian_index, &center))
                    .collect();
                Ok((3, values))
            }
            ChannelSource::Depth | ChannelSource::NormalizedDepth => {
                Ok((1, self.splats.iter().map(|s| s.depth).collect()))
            }
            ChannelSource::Values { channels, values } => {
                if values.len() != channels * self.scene.len() {
                    return Err(Error::invalid(format!(
                        "value source has {} entries, expected {} x {channels}",
                        values.len(),
                        self.scene.len()
                    )));
                }
                let mut out = Vec::with_capacity(channels * self.splats.len());
                for s in &self.splats {
                    let i = s.gaussian_index * channels;
                    out.extend_from_slice(&values[i..i + channels]);
                }
                Ok((channels, out))
            }
        }
    }

    /// Composites per-splat values over the full image.
    pub fn render(
        &self,
        channels: usize,
        values: &[f64],
        normalize: bool,
        with_log: bool,
    ) -> (ImageBuffer, Option<ContributionLog>) {
        let (w, h) = (self.camera.width, self.camera.height);
        // per row: channel values and (primitive, entry) log records
        type Row = (Vec<f64>, Vec<(u32, LogEntry)>);
        let rows: Vec<Row> = (0..h)
            .into_par_iter()
            .map(|y| {
                let mut row = vec![0.0; w * channels];
                let mut log = Vec::new();
                for x in 0..w {
                    let px = &mut row[x * channels..(x + 1) * channels];
                    let mut wsum = 0.0;
                    self.walk(x, y, None, None, |pos, s, alpha, _, t| {
                        let pos = pos.unwrap();
                        let weight = alpha * t;
                        for (c, out) in px.iter_mut().enumerate() {
                            *out += values[pos * channels + c] * weight;
                        }
                        wsum += weight;
                        if with_log {
                            log.push((
                                s.gaussian_index as u32,
                                LogEntry {
                                    pixel: (y * w + x) as u32,
                                    alpha,
                                    transmittance: t,
                                },
                            ));
                        }
                    });
                    if normalize && wsum > 0.0 {
                        px.iter_mut().for_each(|v| *v /= wsum);
                    }
                }
                (row, log)
            })
            .collect();
        let mut data = Vec::with_capacity(w * h * channels);
        let mut items = Vec::new();
        for (row, log) in rows {
            data.extend_from_slice(&row);
            items.extend(log);
        }
        let image = ImageBuffer {
            width: w,
            height: h,
            channels,
            data,
        };
        let log = with_log.then(|| ContributionLog::from_pixel_ordered(w, h, self.scene.len(), &items));
        (image, log)
    }

    /// Calls `f` with the contribution list of every pixel; results come
    /// back in row-major pixel order.
    pub fn visit_pixels<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize, &[PixelContribution]) -> T + Sync,
    {
        let w = self.camera.width;
        (0..self.camera.height)
            .into_par_iter()
            .flat_map_iter(|y| {
                let mut buf = Vec::new();
                let f = &f;
                (0..w)
                    .map(move |x| {
                        buf.clear();
                        self.walk(x, y, None, None, |pos, s, alpha, falloff, t| {
                            buf.push(PixelContribution {
                                position: pos.unwrap(),
                                gaussian_index: s.gaussian_index,
                                alpha,
                                falloff,
                                transmittance: t,
                            });
                        });
                        f(y * w + x, &buf)
                    })
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    /// Renders `rect` with primitive `gaussian` replaced by `replacement`
    /// (or removed when `None`). Returns a `rect`-sized, channel-interleaved
    /// block.
    pub fn render_with_replacement(
        &self,
        channels: usize,
        values: &[f64],
        gaussian: usize,
        replacement: Option<Replacement<'_>>,
        rect: PixelRect,
    ) -> Vec<f64> {
        let rw = rect.width();
        let rows: Vec<Vec<f64>> = (rect.y0..rect.y1)
            .into_par_iter()
            .map(|y| {
                let mut row = vec![0.0; rw * channels];
                for x in rect.x0..rect.x1 {
                    let px = &mut row[(x - rect.x0) * channels..(x - rect.x0 + 1) * channels];
                    self.walk(x, y, Some(gaussian), replacement, |pos, _, alpha, _, t| {
                        let v = match pos {
                            Some(p) => &values[p * channels..(p + 1) * channels],
                            None => replacement.unwrap().values,
                        };
                        for (out, v) in px.iter_mut().zip(v) {
                            *out += v * alpha * t;
                        }
                    });
                }
                row
            })
            .collect();
        rows.concat()
    }
}

/// A splat substituted for one primitive during a partial re-render.
#[derive(Clone, Copy, Debug)]
pub struct Replacement<'r> {
    pub splat: &'r Splat2D,
    /// Channel values of the substitute.
    pub values: &'r [f64],
    /// When set, this splat fixes the substitute's sort position, pixel
    /// support and alpha-threshold decisions, so that only the smooth part
    /// of the compositing (alpha values) follows `splat`.
    pub anchor: Option<&'r Splat2D>,
}

impl Replacement<'_> {
    #[inline]
    fn gate(&self) -> &Splat2D {
        self.anchor.unwrap_or(self.splat)
    }
}

#[inline]
fn visit_replacement<F>(e: &Replacement<'_>, px: f64, py: f64, t: &mut f64, f: &mut F)
where
    F: FnMut(Option<usize>, &Splat2D, f64, f64, f64),
{
    let (gate_alpha, _) = e.gate().alpha(px, py);
    if gate_alpha >= ALPHA_MIN {
        let (alpha, phi) = e.splat.alpha(px, py);
        f(None, e.splat, alpha, phi, *t);
        *t *= 1.0 - alpha;
    }
}

/// View-dependent color of one primitive seen from `center`.
pub(crate) fn color_of(scene: &GaussianScene, index: usize, center: &Vector3<f64>) -> [f64; 3] {
    primitive_color(&scene.primitives[index], scene.sh_degree, center)
}

/// RGB of a primitive seen from `center`: SH value offset by 0.5 and
/// clamped at 0.
pub fn primitive_color(p: &GaussianPrimitive, sh_degree: usize, center: &Vector3<f64>) -> [f64; 3] {
    let dir = view_direction(&p.mean, center);
    let n = sh::coeff_count(sh_degree);
    let mut out = [0.0; 3];
    for (ch, o) in out.iter_mut().enumerate() {
        let v = sh::eval_unchecked(&p.sh_color[ch * n..(ch + 1) * n], &dir, sh_degree);
        *o = (v + 0.5).max(0.0);
    }
    out
}

/// Unit direction from the camera center to a point.
pub fn view_direction(point: &Vector3<f64>, center: &Vector3<f64>) -> Vector3<f64> {
    let d = point - center;
    let n = d.norm();
    if n > 0.0 {
        d / n
    } else {
        Vector3::z()
    }
}

/// Renders one view from the given per-primitive channel source.
pub fn render_view(
    scene: &GaussianScene,
    camera: &Camera,
    source: ChannelSource<'_>,
    with_log: bool,
) -> Result<RenderOutput> {
    let view = PreparedView::new(scene, camera);
    let (channels, values) = view.splat_values(&source)?;
    let normalize = matches!(source, ChannelSource::NormalizedDepth);
    let (image, log) = view.render(channels, &values, normalize, with_log);
    Ok(RenderOutput { image, log })
}

/// Contribution log of one view.
pub fn contribution_log(scene: &GaussianScene, camera: &Camera) -> ContributionLog {
    let view = PreparedView::new(scene, camera);
    view.render(0, &[], false, true).1.unwrap()
}
