//! Differentiable CPU splatting.
//!
//! Gaussians are projected with the local affine (EWA) approximation, sorted
//! globally front to back by camera depth, and alpha-composited per pixel.
//! The forward pass records each pixel's contributor list so the backward
//! pass can replay it exactly.

mod backward;
mod forward;

pub use backward::{render_backward, FieldGradients, RenderGradients, Upstream};
pub use forward::{render, RenderOutput};

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector3};

use crate::scene::{normalize_quat, quat_to_matrix, sigmoid, Camera, GaussianField};

/// Primitives at or in front of this camera depth are culled.
pub const NEAR_PLANE: f64 = 0.01;
/// Isotropic low-pass term added to every projected covariance (pixels²).
pub const LOW_PASS: f64 = 0.3;
/// Per-pixel contributions with smaller alpha are skipped.
pub const MIN_ALPHA: f64 = 1.0 / 255.0;
/// Compositing stops before transmittance would drop below this.
pub const MIN_TRANSMITTANCE: f64 = 1e-4;
/// Floor on accumulated alpha when normalizing expected depth.
pub const DEPTH_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projected2DGaussian {
    pub source_index: usize,
    /// Pixel coordinates; pixel `(x, y)` has its center at `(x + 0.5, y + 0.5)`.
    pub mean2d: [f64; 2],
    /// `[xx, xy, yy]`, low-pass included.
    pub cov2d: [f64; 3],
    /// Inverse of `cov2d`, `[xx, xy, yy]`.
    pub conic: [f64; 3],
    /// Camera-space z.
    pub depth: f64,
    pub color: [f64; 3],
    pub opacity: f64,
    /// Half-size of the pixel box outside which alpha is below [`MIN_ALPHA`].
    pub extent: [f64; 2],
}

/// Intermediates of the projection, shared by the forward and backward pass.
pub(crate) struct Frame {
    pub quat_norm: f64,
    pub quat_unit: [f64; 4],
    pub rot_local: Matrix3<f64>,
    pub scale: Vector3<f64>,
    pub m: Matrix3<f64>,
    pub sigma: Matrix3<f64>,
    pub rot_cam: Matrix3<f64>,
    pub p_cam: Vector3<f64>,
    pub t: Matrix2x3<f64>,
    pub cov: Matrix2<f64>,
}

impl Frame {
    pub fn new(field: &GaussianField, i: usize, camera: &Camera) -> Self {
        let q = field.rotations[i];
        let quat_norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        let quat_unit = normalize_quat(q);
        let rot_local = quat_to_matrix(quat_unit);
        let scale = Vector3::from(field.scale(i));
        let m = rot_local * Matrix3::from_diagonal(&scale);
        let sigma = m * m.transpose();
        let rot_cam = camera.rotation_matrix();
        let p_cam = rot_cam * Vector3::from(field.positions[i]) + Vector3::from(camera.translation);
        let k = &camera.intrinsics;
        let z = p_cam.z;
        let j = Matrix2x3::new(
            k.fx / z,
            0.0,
            -k.fx * p_cam.x / (z * z),
            0.0,
            k.fy / z,
            -k.fy * p_cam.y / (z * z),
        );
        let t = j * rot_cam;
        let cov = t * sigma * t.transpose() + Matrix2::identity() * LOW_PASS;
        Self {
            quat_norm,
            quat_unit,
            rot_local,
            scale,
            m,
            sigma,
            rot_cam,
            p_cam,
            t,
            cov,
        }
    }
}

/// Project primitive `i` of `field` into `camera`. Returns `None` when the
/// primitive is culled: behind the near plane, centered more than 3σ outside
/// the image, or too transparent to ever pass the per-pixel alpha cutoff.
pub fn project_gaussian(field: &GaussianField, i: usize, camera: &Camera) -> Option<Projected2DGaussian> {
    let frame = Frame::new(field, i, camera);
    project_frame(field, i, camera, &frame)
}

pub(crate) fn project_frame(
    field: &GaussianField,
    i: usize,
    camera: &Camera,
    f: &Frame,
) -> Option<Projected2DGaussian> {
    let z = f.p_cam.z;
    if !(z > NEAR_PLANE) {
        return None;
    }
    let k = &camera.intrinsics;
    let mean = [
        k.fx * f.p_cam.x / z + k.cx,
        k.fy * f.p_cam.y / z + k.cy,
    ];
    let (a, b, c) = (f.cov[(0, 0)], f.cov[(0, 1)], f.cov[(1, 1)]);
    let det = a * c - b * b;
    if !(det > 0.0) || !mean[0].is_finite() || !mean[1].is_finite() {
        return None;
    }
    let (sx, sy) = (a.sqrt(), c.sqrt());
    let (w, h) = (k.width as f64, k.height as f64);
    if mean[0] < -3.0 * sx || mean[0] > w + 3.0 * sx || mean[1] < -3.0 * sy || mean[1] > h + 3.0 * sy {
        return None;
    }
    let opacity = sigmoid(field.opacity_logits[i]);
    let reach = 2.0 * (255.0 * opacity).ln();
    if !(reach > 0.0) {
        return None;
    }
    let m = reach.sqrt();
    Some(Projected2DGaussian {
        source_index: i,
        mean2d: mean,
        cov2d: [a, b, c],
        conic: [c / det, -b / det, a / det],
        depth: z,
        color: field.color(i),
        opacity,
        extent: [m * sx, m * sy],
    })
}
