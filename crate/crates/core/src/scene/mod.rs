//! Gaussian fields, cameras, images and datasets.
//!
//! Per-primitive parameters are stored pre-activation, the way the optimizer
//! sees them: log-scales, raw quaternions, opacity and color logits.

mod io;
mod synth;

pub use io::{
    load_dataset, load_field, load_raw_image, read_field, read_raw_image, save_dataset, save_field,
    save_png, save_raw_image, write_field, write_raw_image, CameraSet, CameraRecord,
};
pub use synth::{generate_synthetic_scene, SynthOptions};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Logistic sigmoid.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Inverse of [`sigmoid`], clamped away from the asymptotes.
#[inline]
pub fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

/// Rotation matrix of a unit quaternion stored as `[w, x, y, z]`.
pub fn quat_to_matrix(q: [f64; 4]) -> Matrix3<f64> {
    let [w, x, y, z] = q;
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Normalize a quaternion; the zero quaternion maps to identity.
pub fn normalize_quat(q: [f64; 4]) -> [f64; 4] {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 && n.is_finite() {
        [q[0] / n, q[1] / n, q[2] / n, q[3] / n]
    } else {
        [1.0, 0.0, 0.0, 0.0]
    }
}

/// Quaternion `[w, x, y, z]` of a rotation matrix.
pub fn matrix_to_quat(m: &Matrix3<f64>) -> [f64; 4] {
    let rot = nalgebra::Rotation3::from_matrix_unchecked(*m);
    let q = nalgebra::UnitQuaternion::from_rotation_matrix(&rot);
    normalize_quat([q.w, q.i, q.j, q.k])
}

/// Σ = R(q) · diag(s)² · R(q)ᵀ for activated scales `s` and quaternion `q`.
pub fn covariance_from_scale_rotation(s: [f64; 3], q: [f64; 4]) -> Result<Matrix3<f64>> {
    if s.iter().chain(q.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("covariance: non-finite scale or rotation"));
    }
    if s.iter().any(|&v| v <= 0.0) {
        return Err(Error::invalid("covariance: scales must be positive"));
    }
    let r = quat_to_matrix(normalize_quat(q));
    let m = r * Matrix3::from_diagonal(&Vector3::new(s[0], s[1], s[2]));
    Ok(m * m.transpose())
}

/// One primitive in pre-activation form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gaussian {
    pub position: [f64; 3],
    pub log_scale: [f64; 3],
    pub rotation: [f64; 4],
    pub opacity_logit: f64,
    pub color_logit: [f64; 3],
}

/// Structure-of-arrays set of 3D Gaussians.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GaussianField {
    pub positions: Vec<[f64; 3]>,
    pub log_scales: Vec<[f64; 3]>,
    pub rotations: Vec<[f64; 4]>,
    pub opacity_logits: Vec<f64>,
    pub color_logits: Vec<[f64; 3]>,
}

impl GaussianField {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            positions: Vec::with_capacity(n),
            log_scales: Vec::with_capacity(n),
            rotations: Vec::with_capacity(n),
            opacity_logits: Vec::with_capacity(n),
            color_logits: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn push(&mut self, g: Gaussian) {
        self.positions.push(g.position);
        self.log_scales.push(g.log_scale);
        self.rotations.push(g.rotation);
        self.opacity_logits.push(g.opacity_logit);
        self.color_logits.push(g.color_logit);
    }

    pub fn get(&self, i: usize) -> Gaussian {
        Gaussian {
            position: self.positions[i],
            log_scale: self.log_scales[i],
            rotation: self.rotations[i],
            opacity_logit: self.opacity_logits[i],
            color_logit: self.color_logits[i],
        }
    }

    pub fn scale(&self, i: usize) -> [f64; 3] {
        self.log_scales[i].map(f64::exp)
    }

    pub fn opacity(&self, i: usize) -> f64 {
        sigmoid(self.opacity_logits[i])
    }

    pub fn color(&self, i: usize) -> [f64; 3] {
        self.color_logits[i].map(sigmoid)
    }

    pub fn unit_rotation(&self, i: usize) -> [f64; 4] {
        normalize_quat(self.rotations[i])
    }

    pub fn covariance(&self, i: usize) -> Result<Matrix3<f64>> {
        covariance_from_scale_rotation(self.scale(i), self.rotations[i])
    }

    /// Keep the primitives whose mask entry is `true`.
    pub fn retain_mask(&mut self, keep: &[bool]) {
        assert_eq!(keep.len(), self.len());
        fn filter<T: Copy>(v: &mut Vec<T>, keep: &[bool]) {
            let mut it = keep.iter();
            v.retain(|_| *it.next().unwrap());
        }
        filter(&mut self.positions, keep);
        filter(&mut self.log_scales, keep);
        filter(&mut self.rotations, keep);
        filter(&mut self.opacity_logits, keep);
        filter(&mut self.color_logits, keep);
    }

    pub fn extend_from(&mut self, other: &GaussianField) {
        self.positions.extend_from_slice(&other.positions);
        self.log_scales.extend_from_slice(&other.log_scales);
        self.rotations.extend_from_slice(&other.rotations);
        self.opacity_logits.extend_from_slice(&other.opacity_logits);
        self.color_logits.extend_from_slice(&other.color_logits);
    }

    pub fn normalize_rotations(&mut self) {
        for q in &mut self.rotations {
            *q = normalize_quat(*q);
        }
    }

    /// Check array lengths and finiteness. Returns the first offending index.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.log_scales.len() != n
            || self.rotations.len() != n
            || self.opacity_logits.len() != n
            || self.color_logits.len() != n
        {
            return Err(Error::invalid("field arrays have mismatched lengths"));
        }
        for i in 0..n {
            let finite = self.positions[i].iter().all(|v| v.is_finite())
                && self.log_scales[i].iter().all(|v| v.is_finite())
                && self.rotations[i].iter().all(|v| v.is_finite())
                && self.opacity_logits[i].is_finite()
                && self.color_logits[i].iter().all(|v| v.is_finite());
            if !finite {
                return Err(Error::Render {
                    index: i,
                    message: "non-finite parameter".into(),
                });
            }
            if self.rotations[i].iter().all(|&v| v == 0.0) {
                return Err(Error::Render {
                    index: i,
                    message: "zero quaternion".into(),
                });
            }
        }
        Ok(())
    }

    /// Axis-aligned bounds of the centers, `None` when empty.
    pub fn position_bounds(&self) -> Option<SceneBounds> {
        let first = *self.positions.first()?;
        let mut b = SceneBounds {
            min: first,
            max: first,
        };
        for p in &self.positions {
            for k in 0..3 {
                b.min[k] = b.min[k].min(p[k]);
                b.max[k] = b.max[k].max(p[k]);
            }
        }
        Some(b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneBounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl SceneBounds {
    pub fn diagonal(&self) -> f64 {
        (0..3)
            .map(|k| (self.max[k] - self.min[k]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn center(&self) -> [f64; 3] {
        [0, 1, 2].map(|k| 0.5 * (self.min[k] + self.max[k]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    /// Square pixels, principal point at the image center.
    pub fn from_fov(width: usize, height: usize, fov_x_deg: f64) -> Self {
        let fx = 0.5 * width as f64 / (0.5 * fov_x_deg.to_radians()).tan();
        Self {
            fx,
            fy: fx,
            cx: 0.5 * width as f64,
            cy: 0.5 * height as f64,
            width,
            height,
        }
    }
}

/// Pinhole camera. The pose maps world points into the camera frame
/// (`x` right, `y` down, `z` forward): `p_cam = R p_world + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    /// World-to-camera rotation, `[w, x, y, z]`.
    pub rotation: [f64; 4],
    /// World-to-camera translation.
    pub translation: [f64; 3],
}

impl Camera {
    pub fn new(intrinsics: Intrinsics, rotation: [f64; 4], translation: [f64; 3]) -> Result<Self> {
        let cam = Self {
            intrinsics,
            rotation,
            translation,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.intrinsics;
        if !(k.fx > 0.0 && k.fy > 0.0) || !k.cx.is_finite() || !k.cy.is_finite() {
            return Err(Error::invalid("camera focal lengths must be positive"));
        }
        if k.width == 0 || k.height == 0 {
            return Err(Error::invalid("camera resolution must be at least 1x1"));
        }
        let n = self.rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !n.is_finite() || (n - 1.0).abs() > 1e-6 {
            return Err(Error::invalid("camera rotation must be a unit quaternion"));
        }
        if self.translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("camera translation must be finite"));
        }
        Ok(())
    }

    /// Camera looking from `eye` at `target`, with `up` as the world up hint.
    pub fn look_at(intrinsics: Intrinsics, eye: [f64; 3], target: [f64; 3], up: [f64; 3]) -> Self {
        let eye_v = Vector3::from(eye);
        let forward = (Vector3::from(target) - eye_v).normalize();
        let right = forward.cross(&Vector3::from(up)).normalize();
        let down = forward.cross(&right);
        let r = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let t = -(r * eye_v);
        Self {
            intrinsics,
            rotation: matrix_to_quat(&r),
            translation: [t.x, t.y, t.z],
        }
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        quat_to_matrix(self.rotation)
    }

    /// Camera center in world coordinates, `-Rᵀ t`.
    pub fn center(&self) -> [f64; 3] {
        let c = -(self.rotation_matrix().transpose() * Vector3::from(self.translation));
        [c.x, c.y, c.z]
    }

    /// Same orientation and intrinsics, relocated to `center`.
    pub fn with_center(&self, center: [f64; 3]) -> Self {
        let t = -(self.rotation_matrix() * Vector3::from(center));
        Self {
            translation: [t.x, t.y, t.z],
            ..*self
        }
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }
}

/// Row-major float image with 1 or 3 channels.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl ImageBuffer {
    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        let img = Self {
            width,
            height,
            channels,
            data,
        };
        img.validate()?;
        Ok(img)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::invalid(format!(
                "image must have 1 or 3 channels, got {}",
                self.channels
            )));
        }
        if self.data.len() != self.width * self.height * self.channels {
            return Err(Error::invalid(format!(
                "image data length {} does not match {}x{}x{}",
                self.data.len(),
                self.width,
                self.height,
                self.channels
            )));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("image contains non-finite values"));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn at_mut(&mut self, x: usize, y: usize, c: usize) -> &mut f64 {
        &mut self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Extract one channel as a single-channel image.
    pub fn channel(&self, c: usize) -> ImageBuffer {
        let data = self
            .data
            .chunks_exact(self.channels)
            .map(|px| px[c])
            .collect();
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }
}

/// Train/test split of a scene. Ground truth is optional and only used for
/// evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneDataset {
    pub train_cameras: Vec<Camera>,
    pub test_cameras: Vec<Camera>,
    pub train_images: Vec<ImageBuffer>,
    pub test_images: Vec<ImageBuffer>,
    pub test_depths: Option<Vec<ImageBuffer>>,
    pub test_alphas: Option<Vec<ImageBuffer>>,
    pub ground_truth: Option<GaussianField>,
    pub scene_bounds: SceneBounds,
    pub background: [f64; 3],
}

impl SceneDataset {
    pub fn validate(&self) -> Result<()> {
        if self.train_cameras.len() != self.train_images.len() {
            return Err(Error::invalid("train camera/image counts differ"));
        }
        if self.test_cameras.len() != self.test_images.len() {
            return Err(Error::invalid("test camera/image counts differ"));
        }
        let pairs = self
            .train_cameras
            .iter()
            .zip(&self.train_images)
            .chain(self.test_cameras.iter().zip(&self.test_images));
        for (cam, img) in pairs {
            cam.validate()?;
            if img.width != cam.width() || img.height != cam.height() || img.channels != 3 {
                return Err(Error::invalid("image resolution does not match its camera"));
            }
        }
        for extra in [&self.test_depths, &self.test_alphas].into_iter().flatten() {
            if extra.len() != self.test_cameras.len() {
                return Err(Error::invalid("test depth/alpha counts differ from cameras"));
            }
        }
        Ok(())
    }
}
