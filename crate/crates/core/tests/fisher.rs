mod common;

use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;
use splatue::fisher::{
    fisher_diagonal, geometric_gradient_fd, grouped_uncertainty, FisherDiagonal, FisherOptions, GeometricParam,
    ParamGroup,
};
use splatue::scene::{Camera, GaussianPrimitive, GaussianScene};
use splatue::sh::SH_C0;
use splatue::synthetic::{random_scene, ring_cameras, SynthSpec};

fn small_cameras(n: usize, size: usize) -> Vec<Camera> {
    ring_cameras(&SynthSpec {
        ring_count: n,
        ring_heights: vec![0.5],
        width: size,
        height: size,
        ..Default::default()
    })
    .unwrap()
}

fn isolated(mean: Vector3<f64>, sigma: f64, opacity: f64) -> GaussianScene {
    GaussianScene::new(
        0,
        vec![GaussianPrimitive {
            mean,
            scale: Vector3::new(sigma, 0.7 * sigma, sigma),
            rotation: [1.0, 0.0, 0.0, 0.0],
            opacity,
            sh_color: vec![0.4, 0.1, -0.2],
        }],
    )
    .unwrap()
}

fn axis_camera(size: usize) -> Camera {
    let c = size as f64 / 2.0;
    Camera::new(
        "axis",
        40.0,
        40.0,
        c,
        c,
        size,
        size,
        Matrix3::identity(),
        Vector3::zeros(),
    )
    .unwrap()
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let scene = random_scene(7, 80, 2, 1.0);
    let cams = small_cameras(3, 48);
    let mut color = common::GradTally::default();
    let mut opacity = common::GradTally::default();
    for cam in &cams {
        for k in (0..scene.len()).step_by(7) {
            for (ch, coef) in [(0, 0), (1, 2), (2, 7)] {
                color.merge(common::check_color_gradient(&scene, cam, k, ch, coef));
            }
            opacity.merge(common::check_opacity_gradient(&scene, cam, k));
        }
    }
    assert!(color.checked > 500 && opacity.checked > 500);
    assert!(color.fraction() >= 0.99, "{color:?}");
    assert!(opacity.fraction() >= 0.99, "{opacity:?}");
}

#[test]
fn single_splat_single_pixel_accumulation() {
    // one pixel fully covered by a saturated splat: alpha clamps to 0.99
    let scene = GaussianScene::new(
        0,
        vec![GaussianPrimitive {
            mean: Vector3::new(0.0, 0.0, 2.0),
            scale: Vector3::repeat(1.0),
            rotation: [1.0, 0.0, 0.0, 0.0],
            opacity: 1.0,
            sh_color: vec![0.3; 3],
        }],
    )
    .unwrap();
    let cam = Camera::new("px", 1.0, 1.0, 0.0, 0.0, 1, 1, Matrix3::identity(), Vector3::zeros()).unwrap();
    let f = fisher_diagonal(&scene, &[cam], &FisherOptions::default()).unwrap();
    let dc: f64 = f.group(0, ParamGroup::ShDc).iter().sum();
    assert!((dc - 3.0 * (0.99 * SH_C0).powi(2)).abs() < 1e-14);
    assert_eq!(f.group(0, ParamGroup::Opacity)[0], 0.0);
}

#[test]
fn invisible_primitive_has_zero_entries_and_views_add() {
    let mut scene = random_scene(3, 40, 1, 1.0);
    // push one primitive far behind every ring camera's back
    scene.primitives[5].mean = Vector3::new(0.0, 50.0, 0.0);
    let cams = small_cameras(2, 32);
    let opts = FisherOptions::default();
    let once = fisher_diagonal(&scene, &cams, &opts).unwrap();
    assert!(once.primitive(5).iter().all(|&v| v == 0.0));
    assert!(once.values.iter().all(|v| v.is_finite() && *v >= 0.0));
    assert!(once.values.iter().any(|&v| v > 0.0));

    let doubled: Vec<Camera> = cams.iter().chain(&cams).cloned().collect();
    let twice = fisher_diagonal(&scene, &doubled, &opts).unwrap();
    for (a, b) in once.values.iter().zip(&twice.values) {
        assert!((2.0 * a - b).abs() <= 1e-12 * b.abs());
    }
}

#[test]
fn translation_gradient_is_antisymmetric() {
    let scene = isolated(Vector3::new(0.0, 0.0, 3.0), 0.15, 0.8);
    let cam = axis_camera(32);
    let g = geometric_gradient_fd(&scene, &cam, 0, GeometricParam::Mean(0), 1e-4).unwrap();
    let c = 16usize;
    let mut max = 0.0f64;
    for y in 0..32 {
        for d in 1..16 {
            let (l, r) = (g.get(c - d, y, 0), g.get(c + d, y, 0));
            assert!((l + r).abs() <= 1e-6 * l.abs().max(r.abs()).max(1e-9), "{l} {r}");
            max = max.max(l.abs());
        }
        assert!(g.get(c, y, 0).abs() < 1e-6 * max.max(1.0));
    }
    assert!(max > 1e-3);
}

#[test]
fn culled_primitive_has_zero_gradient() {
    let scene = isolated(Vector3::new(0.0, 0.0, -3.0), 0.15, 0.8);
    let g = geometric_gradient_fd(&scene, &axis_camera(16), 0, GeometricParam::Scale(1), 1e-4).unwrap();
    assert!(g.data.iter().all(|&v| v == 0.0));
}

#[test]
fn finite_differences_converge_under_step_halving() {
    let scene = random_scene(2, 30, 1, 1.0);
    let cam = &small_cameras(1, 40)[0];
    for k in [0, 4, 11] {
        for param in GeometricParam::ALL {
            let a = geometric_gradient_fd(&scene, cam, k, param, 1e-4).unwrap();
            let b = geometric_gradient_fd(&scene, cam, k, param, 5e-5).unwrap();
            for (x, y) in a.data.iter().zip(&b.data) {
                if x.abs() > 1e-6 {
                    assert!((x - y).abs() < 0.05 * x.abs(), "{param:?}: {x} vs {y}");
                }
            }
        }
    }
}

#[test]
fn fisher_independent_of_thread_count() {
    let scene = random_scene(8, 40, 1, 1.0);
    let cams = small_cameras(2, 32);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| fisher_diagonal(&scene, &cams, &FisherOptions::default()).unwrap())
    };
    assert_eq!(run(1), run(4));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn uncertainty_is_antitone(base in prop::collection::vec(0.0f64..10.0, 14 * 3), bump in prop::collection::vec(0.0f64..5.0, 14 * 3)) {
        let a = FisherDiagonal { sh_degree: 0, n_gaussians: 3, values: base.clone() };
        let b = FisherDiagonal {
            sh_degree: 0,
            n_gaussians: 3,
            values: base.iter().zip(&bump).map(|(x, d)| x + d).collect(),
        };
        let ua = grouped_uncertainty(&a, 1e-6).unwrap();
        let ub = grouped_uncertainty(&b, 1e-6).unwrap();
        for (ra, rb) in ua.iter().zip(&ub) {
            for (x, y) in ra.values.iter().zip(&rb.values) {
                prop_assert!(y <= x);
            }
        }
    }
}
