use nalgebra::{Matrix2, Matrix3, Vector3};

use super::forward::{pixel_alpha, RenderOutput};
use super::{Frame, Projected2DGaussian, DEPTH_EPS};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::scene::{Camera, GaussianField, ImageBuffer};

/// Pixel rows per privatized gradient buffer. Fixed so the reduction order
/// does not depend on the thread count.
const ROWS_PER_CHUNK: usize = 4;

/// Gradients with the same layout as the pre-activation field arrays.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FieldGradients {
    pub positions: Vec<[f64; 3]>,
    pub log_scales: Vec<[f64; 3]>,
    pub rotations: Vec<[f64; 4]>,
    pub opacity_logits: Vec<f64>,
    pub color_logits: Vec<[f64; 3]>,
}

impl FieldGradients {
    pub fn zeros(n: usize) -> Self {
        Self {
            positions: vec![[0.0; 3]; n],
            log_scales: vec![[0.0; 3]; n],
            rotations: vec![[0.0; 4]; n],
            opacity_logits: vec![0.0; n],
            color_logits: vec![[0.0; 3]; n],
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn add_assign(&mut self, other: &FieldGradients) {
        assert_eq!(self.len(), other.len());
        fn add<const W: usize>(a: &mut [[f64; W]], b: &[[f64; W]]) {
            for (x, y) in a.iter_mut().zip(b) {
                for k in 0..W {
                    x[k] += y[k];
                }
            }
        }
        add(&mut self.positions, &other.positions);
        add(&mut self.log_scales, &other.log_scales);
        add(&mut self.rotations, &other.rotations);
        add(&mut self.color_logits, &other.color_logits);
        for (x, y) in self.opacity_logits.iter_mut().zip(&other.opacity_logits) {
            *x += y;
        }
    }

    /// Flat view in the order positions, log-scales, rotations, opacities, colors.
    pub fn flatten(&self) -> Vec<f64> {
        self.positions
            .iter()
            .flatten()
            .chain(self.log_scales.iter().flatten())
            .chain(self.rotations.iter().flatten())
            .chain(self.opacity_logits.iter())
            .chain(self.color_logits.iter().flatten())
            .copied()
            .collect()
    }

    pub fn all_zero(&self) -> bool {
        self.flatten().iter().all(|&v| v == 0.0)
    }

    pub fn all_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }
}

/// Output of [`render_backward`].
#[derive(Clone, Debug)]
pub struct RenderGradients {
    pub grads: FieldGradients,
    /// Norm of the screen-space mean gradient in normalized device units,
    /// the densification statistic. Zero for culled primitives.
    pub mean2d_grad_norm: Vec<f64>,
    pub visible: Vec<bool>,
}

/// Upstream gradients of the loss with respect to the rendered buffers.
#[derive(Clone, Copy, Debug)]
pub struct Upstream<'a> {
    pub color: &'a ImageBuffer,
    pub depth: Option<&'a ImageBuffer>,
}

// Per projected primitive: d/d mean2d (2), d/d conic as a full symmetric
// matrix [xx, xy, yy] (3), d/d opacity (1), d/d color (3), d/d depth (1).
type Grad2d = [f64; 10];

fn backward_rows(
    rows: std::ops::Range<usize>,
    out: &RenderOutput,
    upstream: &Upstream<'_>,
) -> Vec<Grad2d> {
    let w = out.color.width;
    let bg = out.background;
    let mut acc = vec![[0.0; 10]; out.projected.len()];
    let mut alphas: Vec<f64> = Vec::new();
    let mut trans: Vec<f64> = Vec::new();
    for y in rows {
        let py = y as f64 + 0.5;
        for x in 0..w {
            let pix = y * w + x;
            let (s, e) = (out.contrib_offsets[pix], out.contrib_offsets[pix + 1]);
            if s == e {
                continue;
            }
            let idx = &out.contrib_index[s..e];
            alphas.clear();
            alphas.extend_from_slice(&out.contrib_alpha[s..e]);
            trans.clear();
            let mut t = 1.0;
            let mut acc_alpha = 0.0;
            let mut depth_sum = 0.0;
            for (k, &a) in idx.iter().zip(&alphas) {
                trans.push(t);
                acc_alpha += a * t;
                depth_sum += out.projected[*k as usize].depth * a * t;
                t *= 1.0 - a;
            }
            let gc = [
                upstream.color.data[pix * 3],
                upstream.color.data[pix * 3 + 1],
                upstream.color.data[pix * 3 + 2],
            ];
            let gd = upstream.depth.map_or(0.0, |d| d.data[pix]);
            let denom = acc_alpha.max(DEPTH_EPS);
            let g_depth_sum = gd / denom;
            let g_acc = if acc_alpha > DEPTH_EPS {
                -gd * depth_sum / (acc_alpha * acc_alpha)
            } else {
                0.0
            };
            // Quantities composited behind the current primitive.
            let mut behind_c = bg;
            let mut behind_z = 0.0;
            let mut behind_a = 0.0;
            for j in (0..idx.len()).rev() {
                let g: &Projected2DGaussian = &out.projected[idx[j] as usize];
                let a = alphas[j];
                let t = trans[j];
                let mut d_alpha = 0.0;
                for ch in 0..3 {
                    d_alpha += gc[ch] * (g.color[ch] - behind_c[ch]);
                }
                d_alpha *= t;
                d_alpha += g_depth_sum * t * (g.depth - behind_z) + g_acc * t * (1.0 - behind_a);

                let entry = &mut acc[idx[j] as usize];
                for ch in 0..3 {
                    entry[6 + ch] += gc[ch] * a * t;
                    behind_c[ch] = g.color[ch] * a + (1.0 - a) * behind_c[ch];
                }
                entry[9] += g_depth_sum * a * t;
                behind_z = g.depth * a + (1.0 - a) * behind_z;
                behind_a = a + (1.0 - a) * behind_a;

                let (_, falloff, dx, dy) = pixel_alpha(g, x as f64 + 0.5, py)
                    .expect("contributor replay must reproduce the forward footprint");
                entry[5] += d_alpha * falloff;
                let d_power = d_alpha * a;
                let [ca, cb, cc] = g.conic;
                entry[0] += d_power * (ca * dx + cb * dy);
                entry[1] += d_power * (cb * dx + cc * dy);
                entry[2] += d_power * (-0.5 * dx * dx);
                entry[3] += d_power * (-0.5 * dx * dy);
                entry[4] += d_power * (-0.5 * dy * dy);
            }
        }
    }
    acc
}

struct PrimitiveGrad {
    position: [f64; 3],
    log_scale: [f64; 3],
    rotation: [f64; 4],
    opacity_logit: f64,
    color_logit: [f64; 3],
}

fn project_backward(field: &GaussianField, camera: &Camera, p: &Projected2DGaussian, g: &Grad2d) -> PrimitiveGrad {
    let i = p.source_index;
    let f = Frame::new(field, i, camera);
    let k = &camera.intrinsics;
    let conic = Matrix2::new(p.conic[0], p.conic[1], p.conic[1], p.conic[2]);
    let g_conic = Matrix2::new(g[2], g[3], g[3], g[4]);
    let g_cov = -(conic * g_conic * conic);
    let g_sigma: Matrix3<f64> = f.t.transpose() * g_cov * f.t;
    let g_t = 2.0 * g_cov * f.t * f.sigma;
    let g_j = g_t * f.rot_cam.transpose();

    let (px, py, z) = (f.p_cam.x, f.p_cam.y, f.p_cam.z);
    let (z2, z3) = (z * z, z * z * z);
    let (gmx, gmy) = (g[0], g[1]);
    let g_px = gmx * k.fx / z - g_j[(0, 2)] * k.fx / z2;
    let g_py = gmy * k.fy / z - g_j[(1, 2)] * k.fy / z2;
    let g_pz = -gmx * k.fx * px / z2 - gmy * k.fy * py / z2 - g_j[(0, 0)] * k.fx / z2
        + g_j[(0, 2)] * 2.0 * k.fx * px / z3
        - g_j[(1, 1)] * k.fy / z2
        + g_j[(1, 2)] * 2.0 * k.fy * py / z3
        + g[9];
    let g_mu = f.rot_cam.transpose() * Vector3::new(g_px, g_py, g_pz);

    let g_m = 2.0 * g_sigma * f.m;
    let mut g_rot = Matrix3::zeros();
    let mut g_log_scale = [0.0; 3];
    for c in 0..3 {
        let mut gs = 0.0;
        for r in 0..3 {
            g_rot[(r, c)] = g_m[(r, c)] * f.scale[c];
            gs += g_m[(r, c)] * f.rot_local[(r, c)];
        }
        g_log_scale[c] = gs * f.scale[c];
    }
    let [w, x, y, zq] = f.quat_unit;
    let gr = |r: usize, c: usize| g_rot[(r, c)];
    let g_qn = [
        2.0 * (-zq * gr(0, 1) + y * gr(0, 2) + zq * gr(1, 0) - x * gr(1, 2) - y * gr(2, 0) + x * gr(2, 1)),
        2.0 * (y * gr(0, 1) + zq * gr(0, 2) + y * gr(1, 0) - 2.0 * x * gr(1, 1) - w * gr(1, 2)
            + zq * gr(2, 0)
            + w * gr(2, 1)
            - 2.0 * x * gr(2, 2)),
        2.0 * (-2.0 * y * gr(0, 0) + x * gr(0, 1) + w * gr(0, 2) + x * gr(1, 0) + zq * gr(1, 2)
            - w * gr(2, 0)
            + zq * gr(2, 1)
            - 2.0 * y * gr(2, 2)),
        2.0 * (-2.0 * zq * gr(0, 0) - w * gr(0, 1) + x * gr(0, 2) + w * gr(1, 0) - 2.0 * zq * gr(1, 1)
            + y * gr(1, 2)
            + x * gr(2, 0)
            + y * gr(2, 1)),
    ];
    let dot: f64 = (0..4).map(|k| g_qn[k] * f.quat_unit[k]).sum();
    let rotation = std::array::from_fn(|k| (g_qn[k] - f.quat_unit[k] * dot) / f.quat_norm);

    let op = p.opacity;
    PrimitiveGrad {
        position: [g_mu.x, g_mu.y, g_mu.z],
        log_scale: g_log_scale,
        rotation,
        opacity_logit: g[5] * op * (1.0 - op),
        color_logit: std::array::from_fn(|c| g[6 + c] * p.color[c] * (1.0 - p.color[c])),
    }
}

/// Analytic adjoint of [`super::render`].
///
/// `output` must come from `render(field, camera, ..)`. Gradients are
/// accumulated into per-row-chunk buffers and summed in chunk order, so the
/// result is bit-identical across thread counts.
pub fn render_backward(
    field: &GaussianField,
    camera: &Camera,
    output: &RenderOutput,
    upstream: &Upstream<'_>,
    exec: Exec,
) -> Result<RenderGradients> {
    let (w, h) = (camera.width(), camera.height());
    if output.n_primitives != field.len() || output.camera != *camera {
        return Err(Error::invalid("render output does not belong to this field/camera"));
    }
    if upstream.color.width != w || upstream.color.height != h || upstream.color.channels != 3 {
        return Err(Error::invalid("upstream color gradient shape mismatch"));
    }
    if let Some(d) = upstream.depth {
        if d.width != w || d.height != h || d.channels != 1 {
            return Err(Error::invalid("upstream depth gradient shape mismatch"));
        }
    }
    let n_chunks = h.div_ceil(ROWS_PER_CHUNK);
    let partials = exec.map(n_chunks, |c| {
        let rows = c * ROWS_PER_CHUNK..((c + 1) * ROWS_PER_CHUNK).min(h);
        backward_rows(rows, output, upstream)
    });
    let mut total = vec![[0.0; 10]; output.projected.len()];
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            for k in 0..10 {
                t[k] += p[k];
            }
        }
    }
    let per_primitive = exec.map(output.projected.len(), |k| {
        project_backward(field, camera, &output.projected[k], &total[k])
    });

    let n = field.len();
    let mut grads = FieldGradients::zeros(n);
    let mut mean2d_grad_norm = vec![0.0; n];
    let mut visible = vec![false; n];
    let (half_w, half_h) = (0.5 * w as f64, 0.5 * h as f64);
    for ((p, g2), g) in output.projected.iter().zip(&total).zip(per_primitive) {
        let i = p.source_index;
        grads.positions[i] = g.position;
        grads.log_scales[i] = g.log_scale;
        grads.rotations[i] = g.rotation;
        grads.opacity_logits[i] = g.opacity_logit;
        grads.color_logits[i] = g.color_logit;
        mean2d_grad_norm[i] = (g2[0] * half_w).hypot(g2[1] * half_h);
        visible[i] = true;
    }
    Ok(RenderGradients {
        grads,
        mean2d_grad_norm,
        visible,
    })
}
