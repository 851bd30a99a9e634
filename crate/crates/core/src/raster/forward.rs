use super::{project_frame, Frame, Projected2DGaussian, DEPTH_EPS, MIN_ALPHA, MIN_TRANSMITTANCE};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::scene::{Camera, GaussianField, ImageBuffer};

/// Forward render plus the replay data needed by [`super::render_backward`].
#[derive(Clone, Debug)]
pub struct RenderOutput {
    pub color: ImageBuffer,
    /// Alpha-normalized expected depth.
    pub depth: ImageBuffer,
    pub accum_alpha: ImageBuffer,
    /// Transmittance left after the last contributor, per pixel.
    pub transmittance: Vec<f64>,
    /// Visible primitives in compositing order.
    pub projected: Vec<Projected2DGaussian>,
    pub background: [f64; 3],
    pub(crate) camera: Camera,
    pub(crate) n_primitives: usize,
    /// Pixel `p` composites `contrib_index[contrib_offsets[p]..contrib_offsets[p + 1]]`
    /// (indices into `projected`) front to back.
    pub(crate) contrib_offsets: Vec<usize>,
    pub(crate) contrib_index: Vec<u32>,
    pub(crate) contrib_alpha: Vec<f64>,
}

impl RenderOutput {
    pub fn contributor_count(&self, pixel: usize) -> usize {
        self.contrib_offsets[pixel + 1] - self.contrib_offsets[pixel]
    }

    /// Source indices of the primitives that passed culling.
    pub fn visible_mask(&self) -> Vec<bool> {
        let mut v = vec![false; self.n_primitives];
        for p in &self.projected {
            v[p.source_index] = true;
        }
        v
    }
}

struct RowResult {
    color: Vec<f64>,
    depth: Vec<f64>,
    alpha: Vec<f64>,
    transmittance: Vec<f64>,
    counts: Vec<usize>,
    index: Vec<u32>,
    alphas: Vec<f64>,
}

/// Project, sort and bin by pixel row. Shared with the backward pass.
pub(crate) fn prepare(
    field: &GaussianField,
    camera: &Camera,
    exec: Exec,
) -> (Vec<Projected2DGaussian>, Vec<Vec<u32>>) {
    let mut projected: Vec<Projected2DGaussian> = exec
        .map(field.len(), |i| {
            let frame = Frame::new(field, i, camera);
            project_frame(field, i, camera, &frame)
        })
        .into_iter()
        .flatten()
        .collect();
    projected.sort_by(|a, b| {
        a.depth
            .total_cmp(&b.depth)
            .then(a.source_index.cmp(&b.source_index))
    });
    let h = camera.height();
    let mut rows = vec![Vec::new(); h];
    for (k, p) in projected.iter().enumerate() {
        let lo = (p.mean2d[1] - p.extent[1] - 0.5).floor().max(0.0);
        let hi = (p.mean2d[1] + p.extent[1] - 0.5).ceil().min(h as f64 - 1.0);
        if lo > hi {
            continue;
        }
        for row in rows.iter_mut().take(hi as usize + 1).skip(lo as usize) {
            row.push(k as u32);
        }
    }
    (projected, rows)
}

/// Alpha of `g` at pixel center `(px, py)`, or `None` outside its footprint.
#[inline]
pub(crate) fn pixel_alpha(g: &Projected2DGaussian, px: f64, py: f64) -> Option<(f64, f64, f64, f64)> {
    let dx = px - g.mean2d[0];
    let dy = py - g.mean2d[1];
    if dx.abs() > g.extent[0] || dy.abs() > g.extent[1] {
        return None;
    }
    let [a, b, c] = g.conic;
    let power = -0.5 * (a * dx * dx + 2.0 * b * dx * dy + c * dy * dy);
    let falloff = power.exp();
    let alpha = g.opacity * falloff;
    if alpha < MIN_ALPHA {
        return None;
    }
    Some((alpha, falloff, dx, dy))
}

fn render_row(
    y: usize,
    width: usize,
    candidates: &[u32],
    projected: &[Projected2DGaussian],
    bg: [f64; 3],
) -> RowResult {
    let mut out = RowResult {
        color: Vec::with_capacity(width * 3),
        depth: Vec::with_capacity(width),
        alpha: Vec::with_capacity(width),
        transmittance: Vec::with_capacity(width),
        counts: Vec::with_capacity(width),
        index: Vec::new(),
        alphas: Vec::new(),
    };
    let py = y as f64 + 0.5;
    for x in 0..width {
        let px = x as f64 + 0.5;
        let mut t = 1.0;
        let mut c = [0.0; 3];
        let mut depth_sum = 0.0;
        let mut acc = 0.0;
        let mut n = 0;
        for &k in candidates {
            let g = &projected[k as usize];
            let Some((alpha, ..)) = pixel_alpha(g, px, py) else {
                continue;
            };
            let next_t = t * (1.0 - alpha);
            if next_t < MIN_TRANSMITTANCE {
                break;
            }
            let w = alpha * t;
            for ch in 0..3 {
                c[ch] += g.color[ch] * w;
            }
            depth_sum += g.depth * w;
            acc += w;
            t = next_t;
            out.index.push(k);
            out.alphas.push(alpha);
            n += 1;
        }
        for ch in 0..3 {
            out.color.push(c[ch] + t * bg[ch]);
        }
        out.depth.push(depth_sum / acc.max(DEPTH_EPS));
        out.alpha.push(acc);
        out.transmittance.push(t);
        out.counts.push(n);
    }
    out
}

/// Render color, normalized expected depth and accumulated alpha.
pub fn render(field: &GaussianField, camera: &Camera, background: [f64; 3], exec: Exec) -> Result<RenderOutput> {
    field.validate()?;
    camera.validate()?;
    if background.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("background must be finite"));
    }
    let (w, h) = (camera.width(), camera.height());
    let (projected, rows) = prepare(field, camera, exec);
    let results = exec.map(h, |y| render_row(y, w, &rows[y], &projected, background));

    let mut color = Vec::with_capacity(w * h * 3);
    let mut depth = Vec::with_capacity(w * h);
    let mut alpha = Vec::with_capacity(w * h);
    let mut transmittance = Vec::with_capacity(w * h);
    let mut contrib_offsets = Vec::with_capacity(w * h + 1);
    let total: usize = results.iter().map(|r| r.index.len()).sum();
    let mut contrib_index = Vec::with_capacity(total);
    let mut contrib_alpha = Vec::with_capacity(total);
    contrib_offsets.push(0);
    for r in results {
        color.extend(r.color);
        depth.extend(r.depth);
        alpha.extend(r.alpha);
        transmittance.extend(r.transmittance);
        for n in r.counts {
            contrib_offsets.push(contrib_offsets.last().unwrap() + n);
        }
        contrib_index.extend(r.index);
        contrib_alpha.extend(r.alphas);
    }
    Ok(RenderOutput {
        color: ImageBuffer { width: w, height: h, channels: 3, data: color },
        depth: ImageBuffer { width: w, height: h, channels: 1, data: depth },
        accum_alpha: ImageBuffer { width: w, height: h, channels: 1, data: alpha },
        transmittance,
        projected,
        background,
        camera: *camera,
        n_primitives: field.len(),
        contrib_offsets,
        contrib_index,
        contrib_alpha,
    })
}
