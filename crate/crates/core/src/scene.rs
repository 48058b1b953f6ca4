//! Gaussian primitives, cameras, image buffers and view sets.
//!
//! All quantities are physical: scales are standard deviations in world
//! units and opacities are in `[0, 1]`. Conversions from the log/logit
//! parameterization of trained scene files happen at load time.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sh;

/// Near-plane distance in camera space, world units.
pub const NEAR_PLANE: f64 = 0.01;

const QUAT_TOL: f64 = 1e-6;
const ORTHO_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPrimitive {
    pub mean: Vector3<f64>,
    /// Per-axis standard deviations.
    pub scale: Vector3<f64>,
    /// Unit quaternion, `(w, x, y, z)`.
    pub rotation: [f64; 4],
    pub opacity: f64,
    /// Channel-major SH coefficients: `sh_color[ch * (L+1)^2 + j]`.
    pub sh_color: Vec<f64>,
}

impl GaussianPrimitive {
    pub fn validate(&self, sh_degree: usize) -> Result<()> {
        let finite = self.mean.iter().all(|v| v.is_finite())
            && self.scale.iter().all(|v| v.is_finite())
            && self.rotation.iter().all(|v| v.is_finite())
            && self.opacity.is_finite()
            && self.sh_color.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("primitive has non-finite parameters"));
        }
        if self.scale.iter().any(|&s| s <= 0.0) {
            return Err(Error::invalid(format!(
                "scale must be strictly positive, got {:?}",
                self.scale.as_slice()
            )));
        }
        let qn = self.rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (qn - 1.0).abs() > QUAT_TOL {
            return Err(Error::invalid(format!("quaternion norm {qn} is not 1")));
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(Error::invalid(format!("opacity {} outside [0, 1]", self.opacity)));
        }
        let expected = 3 * sh::coeff_count(sh_degree);
        if self.sh_color.len() != expected {
            return Err(Error::invalid(format!(
                "sh_color has {} coefficients, expected {expected}",
                self.sh_color.len()
            )));
        }
        Ok(())
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        quat_to_matrix(self.rotation)
    }

    pub fn covariance(&self) -> Matrix3<f64> {
        covariance_matrix(&self.scale, self.rotation)
    }
}

/// An ordered collection of primitives sharing one SH color degree.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GaussianScene {
    pub sh_degree: usize,
    pub primitives: Vec<GaussianPrimitive>,
}

impl GaussianScene {
    pub fn new(sh_degree: usize, primitives: Vec<GaussianPrimitive>) -> Result<Self> {
        if sh_degree > sh::MAX_DEGREE {
            return Err(Error::invalid(format!(
                "sh degree {sh_degree} exceeds maximum {}",
                sh::MAX_DEGREE
            )));
        }
        for (i, p) in primitives.iter().enumerate() {
            p.validate(sh_degree)
                .map_err(|e| Error::invalid(format!("primitive {i}: {e}")))?;
        }
        Ok(Self { sh_degree, primitives })
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }
}

/// Normalizes and converts a `(w, x, y, z)` quaternion to a rotation matrix.
pub fn quat_to_matrix(q: [f64; 4]) -> Matrix3<f64> {
    let uq = UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]));
    *uq.to_rotation_matrix().matrix()
}

pub fn normalize_quat(q: [f64; 4]) -> Result<[f64; 4]> {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !n.is_finite() || n == 0.0 {
        return Err(Error::invalid("quaternion has zero or non-finite norm"));
    }
    Ok([q[0] / n, q[1] / n, q[2] / n, q[3] / n])
}

fn covariance_matrix(scale: &Vector3<f64>, rotation: [f64; 4]) -> Matrix3<f64> {
    let r = quat_to_matrix(rotation);
    let s2 = Matrix3::from_diagonal(&scale.component_mul(scale));
    let cov = r * s2 * r.transpose();
    // exact symmetry
    (cov + cov.transpose()) * 0.5
}

/// World-space covariance `R diag(scale^2) R^T`.
pub fn covariance_3d(scale: &Vector3<f64>, rotation: [f64; 4]) -> Result<Matrix3<f64>> {
    if !scale.iter().chain(rotation.iter()).all(|v| v.is_finite()) {
        return Err(Error::invalid("covariance_3d: non-finite input"));
    }
    if scale.iter().any(|&s| s <= 0.0) {
        return Err(Error::invalid("covariance_3d: scale must be positive"));
    }
    let n = rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (n - 1.0).abs() > QUAT_TOL {
        return Err(Error::invalid("covariance_3d: quaternion not normalized"));
    }
    Ok(covariance_matrix(scale, rotation))
}

/// Pinhole camera with a world-to-camera rigid transform.
///
/// Camera space looks down `+z`, `x` to the right and `y` down; pixel
/// centers sit on integer coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub id: String,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Camera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: impl Into<String>,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        let cam = Self {
            id: id.into(),
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            rotation,
            translation,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(Error::invalid(format!(
                "camera {}: focal lengths must be positive",
                self.id
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid(format!(
                "camera {}: image size must be at least 1x1",
                self.id
            )));
        }
        let err = (self.rotation * self.rotation.transpose() - Matrix3::identity())
            .abs()
            .max();
        if !(err <= ORTHO_TOL) || self.rotation.determinant() < 0.0 {
            return Err(Error::invalid(format!(
                "camera {}: rotation is not orthonormal",
                self.id
            )));
        }
        if !self
            .translation
            .iter()
            .chain([self.cx, self.cy].iter())
            .all(|v| v.is_finite())
        {
            return Err(Error::invalid(format!("camera {}: non-finite pose", self.id)));
        }
        Ok(())
    }

    /// Camera placed at `eye` looking at `target`, with `up` the approximate
    /// world up direction. Principal point at the image center.
    pub fn look_at(
        id: impl Into<String>,
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        focal: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-9 {
            return Err(Error::invalid("look_at: up is parallel to view direction"));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        Self::new(
            id,
            focal,
            focal,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
            rotation,
            translation,
        )
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Forward (`+z`) axis of the camera in world coordinates.
    pub fn view_direction(&self) -> Vector3<f64> {
        self.rotation.row(2).transpose().normalize()
    }

    /// Projects a camera-space point; `None` at or behind the near plane.
    pub fn project_camera_point(&self, t: &Vector3<f64>) -> Option<Vector2<f64>> {
        if t.z <= NEAR_PLANE {
            return None;
        }
        Some(Vector2::new(
            self.fx * t.x / t.z + self.cx,
            self.fy * t.y / t.z + self.cy,
        ))
    }

    pub fn project(&self, p: &Vector3<f64>) -> Option<Vector2<f64>> {
        self.project_camera_point(&self.to_camera(p))
    }
}

/// Row-major, channel-interleaved image of `f64` samples.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl ImageBuffer {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::invalid(format!(
                "image data length {} != {width}x{height}x{channels}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("image sample {i} is not finite")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.data[index * self.channels..(index + 1) * self.channels]
    }

    /// Extracts one channel as a single-channel image.
    pub fn channel(&self, c: usize) -> ImageBuffer {
        let data = self.data.iter().skip(c).step_by(self.channels).copied().collect();
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    pub fn same_size(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn matches_camera(&self, cam: &Camera) -> bool {
        self.width == cam.width && self.height == cam.height
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViewRole {
    Train,
    HoldoutTrainReg,
    HoldoutEval,
}

impl ViewRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            ViewRole::Train => "train",
            ViewRole::HoldoutTrainReg => "holdout-train-reg",
            ViewRole::HoldoutEval => "holdout-eval",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct View {
    pub camera: Camera,
    pub role: ViewRole,
    /// 3 channels in `[0, 1]`.
    pub gt_color: ImageBuffer,
    /// 1 channel, world units.
    pub gt_depth: Option<ImageBuffer>,
    /// 1 channel; nonzero means included.
    pub mask: Option<ImageBuffer>,
}

impl View {
    pub fn validate(&self) -> Result<()> {
        let id = &self.camera.id;
        if !self.gt_color.matches_camera(&self.camera) || self.gt_color.channels != 3 {
            return Err(Error::invalid(format!("view {id}: color image does not match camera")));
        }
        if let Some(d) = &self.gt_depth {
            if !d.matches_camera(&self.camera) || d.channels != 1 {
                return Err(Error::invalid(format!("view {id}: depth image does not match camera")));
            }
        }
        if let Some(m) = &self.mask {
            if !m.matches_camera(&self.camera) || m.channels != 1 {
                return Err(Error::invalid(format!("view {id}: mask does not match camera")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ViewSet {
    pub views: Vec<View>,
}

impl ViewSet {
    pub fn new(views: Vec<View>) -> Result<Self> {
        for v in &views {
            v.validate()?;
        }
        Ok(Self { views })
    }

    pub fn with_role(&self, role: ViewRole) -> impl Iterator<Item = &View> {
        self.views.iter().filter(move |v| v.role == role)
    }

    pub fn cameras(&self, role: ViewRole) -> Vec<Camera> {
        self.with_role(role).map(|v| v.camera.clone()).collect()
    }
}
