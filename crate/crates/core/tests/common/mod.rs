//! Shared fixtures for the integration and acceptance tests.

#![allow(dead_code)]

use corgs::coreg::{total_loss, LossWeights};
use corgs::raster::{render, render_backward, FieldGradients, Upstream};
use corgs::scene::{logit, normalize_quat, Camera, Gaussian, GaussianField, ImageBuffer, Intrinsics};
use corgs::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const BG: [f64; 3] = [0.1, 0.2, 0.3];

pub fn random_field(rng: &mut ChaCha8Rng, n: usize) -> GaussianField {
    let mut f = GaussianField::new();
    for _ in 0..n {
        let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        f.push(Gaussian {
            position: std::array::from_fn(|_| rng.random_range(-0.6..0.6)),
            log_scale: std::array::from_fn(|_| rng.random_range(0.06f64..0.3).ln()),
            rotation: normalize_quat(q).map(|v| v * rng.random_range(0.8..1.2)),
            opacity_logit: logit(rng.random_range(0.3..0.9)),
            color_logit: std::array::from_fn(|_| rng.random_range(-2.0..2.0)),
        });
    }
    f
}

pub fn jitter(rng: &mut ChaCha8Rng, f: &GaussianField, amount: f64) -> GaussianField {
    let mut g = f.clone();
    for p in &mut g.positions {
        for v in p.iter_mut() {
            *v += amount * rng.sample::<f64, _>(StandardNormal);
        }
    }
    for c in &mut g.color_logits {
        for v in c.iter_mut() {
            *v += 5.0 * amount * rng.sample::<f64, _>(StandardNormal);
        }
    }
    g
}

pub fn orbit_camera(w: usize, h: usize, azimuth_deg: f64) -> Camera {
    let a = azimuth_deg.to_radians();
    let eye = [3.0 * a.sin(), -0.5, -3.0 * a.cos()];
    Camera::look_at(Intrinsics::from_fov(w, h, 50.0), eye, [0.0; 3], [0.0, -1.0, 0.0])
}

/// Two co-trained fields, one training view with its target and one pseudo view.
pub struct GradScene {
    pub fields: Vec<GaussianField>,
    pub train_cam: Camera,
    pub gt: ImageBuffer,
    pub pseudo_cam: Camera,
    pub weights: LossWeights,
}

impl GradScene {
    pub fn random(seed: u64, n: usize, res: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_field(&mut rng, n);
        let b = jitter(&mut rng, &a, 0.05);
        let target = random_field(&mut rng, n);
        let train_cam = orbit_camera(res, res, rng.random_range(-20.0..20.0));
        let pseudo_cam = orbit_camera(res, res, rng.random_range(25.0..45.0));
        let gt = render(&target, &train_cam, BG, Exec::Sequential).unwrap().color;
        Self {
            fields: vec![a, b],
            train_cam,
            gt,
            pseudo_cam,
            weights: LossWeights::default(),
        }
    }

    /// Full objective: photometric loss of every field plus the pseudo-view
    /// co-regularization between them.
    pub fn loss(&self, fields: &[GaussianField]) -> f64 {
        let tr: Vec<ImageBuffer> = fields
            .iter()
            .map(|f| render(f, &self.train_cam, BG, Exec::Sequential).unwrap().color)
            .collect();
        let ps: Vec<ImageBuffer> = fields
            .iter()
            .map(|f| render(f, &self.pseudo_cam, BG, Exec::Sequential).unwrap().color)
            .collect();
        let trr: Vec<&ImageBuffer> = tr.iter().collect();
        let psr: Vec<&ImageBuffer> = ps.iter().collect();
        total_loss(&trr, &[&self.gt], &psr, self.weights).unwrap().total
    }

    pub fn grads(&self, exec: Exec) -> Vec<FieldGradients> {
        let tr: Vec<_> = self
            .fields
            .iter()
            .map(|f| render(f, &self.train_cam, BG, exec).unwrap())
            .collect();
        let ps: Vec<_> = self
            .fields
            .iter()
            .map(|f| render(f, &self.pseudo_cam, BG, exec).unwrap())
            .collect();
        let trr: Vec<&ImageBuffer> = tr.iter().map(|o| &o.color).collect();
        let psr: Vec<&ImageBuffer> = ps.iter().map(|o| &o.color).collect();
        let l = total_loss(&trr, &[&self.gt], &psr, self.weights).unwrap();
        (0..self.fields.len())
            .map(|k| {
                let up = Upstream {
                    color: &l.train_grads[k],
                    depth: None,
                };
                let mut g = render_backward(&self.fields[k], &self.train_cam, &tr[k], &up, exec)
                    .unwrap()
                    .grads;
                let up = Upstream {
                    color: &l.pseudo_grads[k],
                    depth: None,
                };
                let gp = render_backward(&self.fields[k], &self.pseudo_cam, &ps[k], &up, exec)
                    .unwrap()
                    .grads;
                g.add_assign(&gp);
                g
            })
            .collect()
    }
}

/// Parameters per primitive: position 3, log-scale 3, rotation 4, opacity 1, color 3.
pub const PARAMS_PER_PRIMITIVE: usize = 14;

pub fn param_mut(f: &mut GaussianField, row: usize, p: usize) -> &mut f64 {
    match p {
        0..=2 => &mut f.positions[row][p],
        3..=5 => &mut f.log_scales[row][p - 3],
        6..=9 => &mut f.rotations[row][p - 6],
        10 => &mut f.opacity_logits[row],
        _ => &mut f.color_logits[row][p - 11],
    }
}

pub fn param_grad(g: &FieldGradients, row: usize, p: usize) -> f64 {
    match p {
        0..=2 => g.positions[row][p],
        3..=5 => g.log_scales[row][p - 3],
        6..=9 => g.rotations[row][p - 6],
        10 => g.opacity_logits[row],
        _ => g.color_logits[row][p - 11],
    }
}

/// Outcome of a finite-difference check.
#[derive(Debug, Default)]
pub struct GradCheck {
    pub checked: usize,
    /// Candidates rejected because the loss is not smooth around them (a
    /// per-pixel cutoff or an L1 kink falls inside the stencil).
    pub rejected: usize,
    pub max_rel_err: f64,
    pub worst: String,
}

pub const FD_STEP: f64 = 1e-5;
/// Absolute floor in the relative-error denominator, far below the typical
/// gradient magnitude but above finite-difference round-off.
pub const REL_FLOOR: f64 = 1e-7;

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// Compare analytic gradients with central differences on `samples` random
/// parameter entries. An entry is accepted only when the central
/// differences at steps `h` and `h/2` agree, i.e. the loss is smooth over
/// the stencil.
pub fn check_gradients(scene: &GradScene, samples: usize, seed: u64) -> GradCheck {
    let grads = scene.grads(Exec::Parallel);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mut out = GradCheck::default();
    let fd = |k: usize, row: usize, p: usize, h: f64| {
        let mut fp = scene.fields.clone();
        *param_mut(&mut fp[k], row, p) += h;
        let mut fm = scene.fields.clone();
        *param_mut(&mut fm[k], row, p) -= h;
        (scene.loss(&fp) - scene.loss(&fm)) / (2.0 * h)
    };
    let mut attempts = 0;
    while out.checked < samples && attempts < samples * 20 {
        attempts += 1;
        let k = rng.random_range(0..scene.fields.len());
        let row = rng.random_range(0..scene.fields[k].len());
        let p = rng.random_range(0..PARAMS_PER_PRIMITIVE);
        let n1 = fd(k, row, p, FD_STEP);
        let n2 = fd(k, row, p, FD_STEP / 2.0);
        if rel_err(n1, n2) > 1e-5 {
            out.rejected += 1;
            continue;
        }
        let a = param_grad(&grads[k], row, p);
        let e = rel_err(a, n2);
        if e > out.max_rel_err {
            out.max_rel_err = e;
            out.worst = format!("field {k} row {row} param {p}: analytic {a:.6e} numeric {n2:.6e}");
        }
        out.checked += 1;
    }
    out
}
