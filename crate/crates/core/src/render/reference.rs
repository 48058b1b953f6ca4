use nalgebra::Matrix2;

use super::raster::{color_of, ChannelSource};
use super::{project_gaussian, ALPHA_MIN, TRANSMITTANCE_MIN};
use crate::error::{Error, Result};
use crate::scene::{Camera, GaussianScene, ImageBuffer};

/// Brute-force renderer: every pixel evaluates every projected primitive in
/// a full depth sort, with no tiles, no support boxes and no early exit
/// until the transmittance is below `1e-12`. Used as a test oracle for
/// [`super::render_view`].
pub fn reference_render(scene: &GaussianScene, camera: &Camera, source: ChannelSource<'_>) -> Result<ImageBuffer> {
    let mut splats: Vec<_> = scene
        .primitives
        .iter()
        .enumerate()
        .filter_map(|(i, p)| project_gaussian(p, i, camera))
        .collect();
    splats.sort_by(|a, b| {
        a.depth
            .partial_cmp(&b.depth)
            .unwrap()
            .then(a.gaussian_index.cmp(&b.gaussian_index))
    });
    let center = camera.center();
    let (channels, normalize) = match source {
        ChannelSource::Color => (3, false),
        ChannelSource::Depth => (1, false),
        ChannelSource::NormalizedDepth => (1, true),
        ChannelSource::Values { channels, values } => {
            if values.len() != channels * scene.len() {
                return Err(Error::invalid("value source length mismatch"));
            }
            (channels, false)
        }
    };
    let value_of = |i: usize, c: usize, depth: f64| -> f64 {
        match source {
            ChannelSource::Color => color_of(scene, i, &center)[c],
            ChannelSource::Depth | ChannelSource::NormalizedDepth => depth,
            ChannelSource::Values { channels, values } => values[i * channels + c],
        }
    };

    let mut img = ImageBuffer::zeros(camera.width, camera.height, channels);
    for y in 0..camera.height {
        for x in 0..camera.width {
            let mut t = 1.0f64;
            let mut acc = vec![0.0; channels];
            let mut wsum = 0.0;
            for s in &splats {
                if t < 1e-12 {
                    break;
                }
                if s.conic == Matrix2::zeros() {
                    continue;
                }
                let dx = x as f64 - s.mean2d.x;
                let dy = y as f64 - s.mean2d.y;
                let q = dx * (s.conic[(0, 0)] * dx + s.conic[(0, 1)] * dy)
                    + dy * (s.conic[(1, 0)] * dx + s.conic[(1, 1)] * dy);
                let alpha = (s.opacity * (-0.5 * q).exp()).min(super::ALPHA_MAX);
                if alpha < ALPHA_MIN {
                    continue;
                }
                if t >= TRANSMITTANCE_MIN {
                    for (c, a) in acc.iter_mut().enumerate() {
                        *a += value_of(s.gaussian_index, c, s.depth) * alpha * t;
                    }
                    wsum += alpha * t;
                }
                t *= 1.0 - alpha;
            }
            for (c, a) in acc.into_iter().enumerate() {
                let v = if normalize && wsum > 0.0 { a / wsum } else { a };
                img.set(x, y, c, v);
            }
        }
    }
    Ok(img)
}
