//! Synthetic ground-truth scenes.
//!
//! A random set of opaque Gaussians inside `[-1, 1]³`, viewed by cameras on
//! an arc of radius ~4 facing the origin. Train and test images (and test
//! depth/alpha) are rendered from the ground-truth field itself, so the
//! generator's field doubles as the dense-view reference.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{logit, normalize_quat, Camera, Gaussian, GaussianField, Intrinsics, SceneBounds, SceneDataset};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::raster::render;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthOptions {
    pub seed: u64,
    pub n_gaussians: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub width: usize,
    pub height: usize,
    pub fov_x_deg: f64,
    pub camera_radius: f64,
    /// Azimuth span covered by the training cameras.
    pub arc_deg: f64,
    pub elevation_deg: f64,
    pub background: [f64; 3],
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            n_gaussians: 50,
            n_train: 3,
            n_test: 4,
            width: 64,
            height: 64,
            fov_x_deg: 50.0,
            camera_radius: 4.0,
            arc_deg: 90.0,
            elevation_deg: 15.0,
            background: [0.0; 3],
        }
    }
}

impl SynthOptions {
    pub fn new(seed: u64, n_gaussians: usize, n_train: usize, n_test: usize, res: (usize, usize)) -> Self {
        Self {
            seed,
            n_gaussians,
            n_train,
            n_test,
            width: res.0,
            height: res.1,
            ..Self::default()
        }
    }
}

fn random_quat(rng: &mut impl Rng) -> [f64; 4] {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        if q.iter().map(|v| v * v).sum::<f64>() > 1e-6 {
            return normalize_quat(q);
        }
    }
}

fn ring_camera(k: Intrinsics, radius: f64, azimuth_deg: f64, elevation_deg: f64) -> Camera {
    let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
    let eye = [
        radius * el.cos() * az.sin(),
        -radius * el.sin(),
        -radius * el.cos() * az.cos(),
    ];
    Camera::look_at(k, eye, [0.0; 3], [0.0, -1.0, 0.0])
}

/// Train azimuths evenly cover the arc end to end; test azimuths sit at the
/// half-steps of an `n_test` grid over the same arc, with elevation jitter.
pub fn arc_cameras(opts: &SynthOptions) -> (Vec<Camera>, Vec<Camera>) {
    let k = Intrinsics::from_fov(opts.width, opts.height, opts.fov_x_deg);
    let half = 0.5 * opts.arc_deg;
    let train = (0..opts.n_train)
        .map(|i| {
            let t = if opts.n_train > 1 {
                i as f64 / (opts.n_train - 1) as f64
            } else {
                0.5
            };
            ring_camera(k, opts.camera_radius, -half + t * opts.arc_deg, opts.elevation_deg)
        })
        .collect();
    let test = (0..opts.n_test)
        .map(|i| {
            let t = (i as f64 + 0.5) / opts.n_test as f64;
            let el = opts.elevation_deg + if i % 2 == 0 { 6.0 } else { -6.0 };
            ring_camera(k, opts.camera_radius, -half + t * opts.arc_deg, el)
        })
        .collect();
    (train, test)
}

pub fn generate_synthetic_scene(opts: &SynthOptions) -> Result<SceneDataset> {
    if opts.n_gaussians == 0 {
        return Err(Error::invalid("synthetic scene needs at least one Gaussian"));
    }
    if opts.n_train < 2 {
        return Err(Error::invalid(
            "synthetic scene needs at least two training views for pseudo-view sampling",
        ));
    }
    if opts.width == 0 || opts.height == 0 {
        return Err(Error::invalid("resolution must be at least 1x1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let bounds = SceneBounds {
        min: [-1.0; 3],
        max: [1.0; 3],
    };
    let mut gt = GaussianField::with_capacity(opts.n_gaussians);
    for _ in 0..opts.n_gaussians {
        let position = std::array::from_fn(|_| rng.random_range(-0.8..0.8));
        let log_scale = std::array::from_fn(|_| rng.random_range(0.04f64..0.18).ln());
        let rotation = random_quat(&mut rng);
        let opacity_logit = logit(rng.random_range(0.6..0.95));
        let color_logit = std::array::from_fn(|_| logit(rng.random_range(0.05..0.95)));
        gt.push(Gaussian {
            position,
            log_scale,
            rotation,
            opacity_logit,
            color_logit,
        });
    }
    let (train_cameras, test_cameras) = arc_cameras(opts);
    let bg = opts.background;
    let train_images = train_cameras
        .iter()
        .map(|c| render(&gt, c, bg, Exec::Parallel).map(|o| o.color))
        .collect::<Result<Vec<_>>>()?;
    let mut test_images = Vec::new();
    let mut test_depths = Vec::new();
    let mut test_alphas = Vec::new();
    for cam in &test_cameras {
        let out = render(&gt, cam, bg, Exec::Parallel)?;
        test_images.push(out.color);
        test_depths.push(out.depth);
        test_alphas.push(out.accum_alpha);
    }
    Ok(SceneDataset {
        train_cameras,
        test_cameras,
        train_images,
        test_images,
        test_depths: Some(test_depths),
        test_alphas: Some(test_alphas),
        ground_truth: Some(gt),
        scene_bounds: bounds,
        background: bg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_single_training_view() {
        let o = SynthOptions::new(1, 10, 1, 2, (16, 16));
        assert!(matches!(generate_synthetic_scene(&o), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn cameras_face_origin() {
        let o = SynthOptions::new(1, 10, 3, 4, (32, 32));
        let (train, test) = arc_cameras(&o);
        for cam in train.iter().chain(&test) {
            let c = cam.center();
            let r = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((r - 4.0).abs() < 1e-9);
            // Origin projects to the principal point.
            let p = cam.translation;
            assert!(p[0].abs() < 1e-9 && p[1].abs() < 1e-9 && (p[2] - 4.0).abs() < 1e-9);
        }
    }
}
