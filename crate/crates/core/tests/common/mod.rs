//! Oracles shared by the integration suites: finite-difference gradient
//! checks, an exhaustive split search and direct sparsification curves.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatue::fisher::opacity_gradient;
use splatue::regression::{Node, PixelDataset, Tree};
use splatue::render::{render_view, view_direction, ChannelSource, PreparedView};
use splatue::scene::{Camera, GaussianScene};
use splatue::sh;

/// Tally of compared pixels and those within tolerance.
#[derive(Clone, Copy, Debug, Default)]
pub struct GradTally {
    pub checked: usize,
    pub passed: usize,
}

impl GradTally {
    pub fn merge(&mut self, o: GradTally) {
        self.checked += o.checked;
        self.passed += o.passed;
    }

    pub fn fraction(&self) -> f64 {
        if self.checked == 0 {
            1.0
        } else {
            self.passed as f64 / self.checked as f64
        }
    }
}

fn rel_ok(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

fn color(scene: &GaussianScene, cam: &Camera) -> Vec<f64> {
    render_view(scene, cam, ChannelSource::Color, false).unwrap().image.data
}

/// Analytic `alpha T Y_lm` against central differences of the color
/// render, for coefficient `coef` of channel `ch` of primitive `k`.
pub fn check_color_gradient(scene: &GaussianScene, cam: &Camera, k: usize, ch: usize, coef: usize) -> GradTally {
    let n = sh::coeff_count(scene.sh_degree);
    let idx = ch * n + coef;
    let h = 1e-3;
    let mut plus = scene.clone();
    plus.primitives[k].sh_color[idx] += h;
    let mut minus = scene.clone();
    minus.primitives[k].sh_color[idx] -= h;
    let (cp, cm) = (color(&plus, cam), color(&minus, cam));

    let p = &scene.primitives[k];
    let dir = view_direction(&p.mean, &cam.center());
    let y = sh::basis_vec(scene.sh_degree, &dir);
    let raw = sh::sh_eval(&p.sh_color[ch * n..(ch + 1) * n], &dir, scene.sh_degree).unwrap();
    let view = PreparedView::new(scene, cam);
    let mut tally = GradTally::default();
    let per_pixel = view.visit_pixels(|px, contribs| {
        contribs
            .iter()
            .find(|c| c.gaussian_index == k)
            .map(|c| (px, c.alpha * c.transmittance))
    });
    for (px, w) in per_pixel.into_iter().flatten() {
        let analytic = if raw + 0.5 < 0.0 { 0.0 } else { w * y[coef] };
        if analytic.abs() <= 1e-8 {
            continue;
        }
        let fd = (cp[px * 3 + ch] - cm[px * 3 + ch]) / (2.0 * h);
        tally.checked += 1;
        tally.passed += usize::from(rel_ok(analytic, fd, 1e-4));
    }
    tally
}

/// Analytic opacity gradient against central differences, per channel, at
/// every pixel where primitive `k` contributes.
pub fn check_opacity_gradient(scene: &GaussianScene, cam: &Camera, k: usize) -> GradTally {
    let g = scene.primitives[k].opacity;
    let h = 1e-4 * g;
    let mut plus = scene.clone();
    plus.primitives[k].opacity = g + h;
    let mut minus = scene.clone();
    minus.primitives[k].opacity = g - h;
    let (cp, cm) = (color(&plus, cam), color(&minus, cam));

    let view = PreparedView::new(scene, cam);
    let (_, colors) = view.splat_values(&ChannelSource::Color).unwrap();
    let per_pixel = view.visit_pixels(|px, contribs| {
        let i = contribs.iter().position(|c| c.gaussian_index == k)?;
        let grads: Vec<f64> = (0..3)
            .map(|ch| {
                let v: Vec<f64> = contribs.iter().map(|c| colors[c.position * 3 + ch]).collect();
                opacity_gradient(contribs, &v, i)
            })
            .collect();
        Some((px, grads))
    });
    let mut tally = GradTally::default();
    for (px, grads) in per_pixel.into_iter().flatten() {
        for (ch, a) in grads.into_iter().enumerate() {
            if a.abs() <= 1e-8 {
                continue;
            }
            let fd = (cp[px * 3 + ch] - cm[px * 3 + ch]) / (2.0 * h);
            tally.checked += 1;
            tally.passed += usize::from(rel_ok(a, fd, 1e-4));
        }
    }
    tally
}

pub fn random_dataset(seed: u64, n: usize, f: usize) -> PixelDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features: Vec<f64> = (0..n * f).map(|_| rng.random::<f64>()).collect();
    let targets = (0..n)
        .map(|i| {
            let x = &features[i * f..(i + 1) * f];
            (3.0 * x[0]).sin() + x[1 % f] * x[1 % f] + 0.1 * rng.random::<f64>()
        })
        .collect();
    PixelDataset {
        features,
        targets,
        provenance: (0..n as u32).map(|i| (0, i)).collect(),
        feature_names: (0..f).map(|j| format!("x{j}")).collect(),
    }
}

/// Exhaustive recursive split search scoring every candidate by direct SSE.
pub fn naive_tree(ds: &PixelDataset, rows: &[usize], residual: &[f64], depth: usize, min_leaf: usize) -> NaiveNode {
    let sse = |idx: &[usize]| {
        let m = idx.iter().map(|&i| residual[i]).sum::<f64>() / idx.len() as f64;
        idx.iter().map(|&i| (residual[i] - m).powi(2)).sum::<f64>()
    };
    let mean = rows.iter().map(|&i| residual[i]).sum::<f64>() / rows.len() as f64;
    if depth == 0 {
        return NaiveNode::Leaf(mean);
    }
    let parent = sse(rows);
    let mut best: Option<(f64, usize, f64)> = None;
    for j in 0..ds.n_features() {
        let mut vals: Vec<f64> = rows.iter().map(|&i| ds.row(i)[j]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = w[0] + (w[1] - w[0]) / 2.0;
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| ds.row(i)[j] <= t);
            if l.len() < min_leaf || r.len() < min_leaf {
                continue;
            }
            let gain = parent - sse(&l) - sse(&r);
            if best.is_none_or(|b| gain > b.0 + 1e-9 * parent) {
                best = Some((gain, j, t));
            }
        }
    }
    match best {
        Some((g, j, t)) if g > 1e-12 * parent => {
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| ds.row(i)[j] <= t);
            NaiveNode::Split(
                j,
                t,
                Box::new(naive_tree(ds, &l, residual, depth - 1, min_leaf)),
                Box::new(naive_tree(ds, &r, residual, depth - 1, min_leaf)),
            )
        }
        _ => NaiveNode::Leaf(mean),
    }
}

#[derive(Debug)]
pub enum NaiveNode {
    Leaf(f64),
    Split(usize, f64, Box<NaiveNode>, Box<NaiveNode>),
}

pub fn same_structure(t: &Tree, i: usize, n: &NaiveNode) -> bool {
    match (&t.nodes[i], n) {
        (Node::Leaf { value }, NaiveNode::Leaf(v)) => (value - v).abs() < 1e-9,
        (
            Node::Split {
                feature,
                threshold,
                left,
                right,
            },
            NaiveNode::Split(j, th, l, r),
        ) => {
            feature == j
                && (threshold - th).abs() < 1e-12
                && same_structure(t, *left, l)
                && same_structure(t, *right, r)
        }
        _ => false,
    }
}

/// Direct re-evaluation: sort, drop, average, for every grid point.
pub fn brute_curve(err: &[f64], key: &[f64], steps: usize) -> Vec<f64> {
    let total: f64 = err.iter().sum();
    let n = err.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| key[b].partial_cmp(&key[a]).unwrap().then(a.cmp(&b)));
    (0..steps)
        .map(|k| {
            let removed = ((k * n) as f64 / steps as f64).ceil() as usize;
            let kept = &idx[removed..];
            kept.iter().map(|&i| err[i] / total).sum::<f64>() / kept.len() as f64
        })
        .collect()
}
