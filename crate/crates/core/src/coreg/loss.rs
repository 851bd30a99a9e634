//! Photometric and co-regularization losses with gradients with respect to
//! the rendered buffers.

use crate::error::{Error, Result};
use crate::metrics::ssim_with_grad;
use crate::scene::ImageBuffer;

/// Loss value plus gradients with respect to both inputs.
#[derive(Clone, Debug)]
pub struct PairLoss {
    pub value: f64,
    pub grad_a: ImageBuffer,
    pub grad_b: ImageBuffer,
}

/// Mean absolute difference. The subgradient at `a == b` is taken as 0.
pub fn l1(a: &ImageBuffer, b: &ImageBuffer) -> Result<PairLoss> {
    if !a.same_shape(b) {
        return Err(Error::invalid("l1: image shapes differ"));
    }
    let n = a.data.len() as f64;
    let mut grad_a = ImageBuffer::zeros(a.width, a.height, a.channels);
    let mut value = 0.0;
    for ((g, x), y) in grad_a.data.iter_mut().zip(&a.data).zip(&b.data) {
        let d = x - y;
        value += d.abs();
        *g = if d > 0.0 {
            1.0 / n
        } else if d < 0.0 {
            -1.0 / n
        } else {
            0.0
        };
    }
    let mut grad_b = grad_a.clone();
    grad_b.data.iter_mut().for_each(|v| *v = -*v);
    Ok(PairLoss {
        value: value / n,
        grad_a,
        grad_b,
    })
}

/// `(1 - λ) L1(a, b) + λ D-SSIM(a, b)` with gradients flowing into both
/// images. Used both as the photometric loss (`b` = ground truth) and as the
/// pseudo-view co-regularizer between two renders.
pub fn color_coreg_loss(a: &ImageBuffer, b: &ImageBuffer, lambda_dssim: f64) -> Result<PairLoss> {
    if !(0.0..=1.0).contains(&lambda_dssim) {
        return Err(Error::invalid(format!("lambda_dssim {lambda_dssim} outside [0, 1]")));
    }
    let mut out = l1(a, b)?;
    if a.data == b.data {
        // Both terms sit at their minimum; skip the SSIM pass so round-off
        // cannot leak into the gradient.
        return Ok(out);
    }
    let wl = 1.0 - lambda_dssim;
    out.value *= wl;
    out.grad_a.data.iter_mut().for_each(|v| *v *= wl);
    out.grad_b.data.iter_mut().for_each(|v| *v *= wl);
    if lambda_dssim > 0.0 {
        let s = ssim_with_grad(a, b)?;
        out.value += lambda_dssim * 0.5 * (1.0 - s.value);
        let k = -0.5 * lambda_dssim;
        for (g, d) in out.grad_a.data.iter_mut().zip(&s.grad_a.data) {
            *g += k * d;
        }
        for (g, d) in out.grad_b.data.iter_mut().zip(&s.grad_b.data) {
            *g += k * d;
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_dssim: f64,
    pub lambda_pseudo: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_dssim: 0.2,
            lambda_pseudo: 1.0,
        }
    }
}

/// Combined objective for N co-trained fields.
#[derive(Clone, Debug)]
pub struct TotalLoss {
    /// Sum over fields of the photometric loss plus the pairwise
    /// co-regularization terms, each pair counted once.
    pub total: f64,
    /// Per-field loss: its photometric term plus its share of the pseudo-view
    /// terms, `λp / (N - 1) Σ_{j≠k} R(k, j)`. For two fields this is
    /// `L_color + λp R`.
    pub per_field: Vec<f64>,
    pub color_terms: Vec<f64>,
    /// Mean pairwise pseudo-view term (0 without pseudo renders).
    pub pseudo_term: f64,
    /// Gradient with respect to each field's training-view render.
    pub train_grads: Vec<ImageBuffer>,
    /// Gradient with respect to each field's pseudo-view render; empty when
    /// no pseudo renders were given.
    pub pseudo_grads: Vec<ImageBuffer>,
}

/// Photometric loss of each field's render against its ground truth, plus
/// pseudo-view co-regularization across all pairs of `pseudo_renders` (pass
/// an empty slice to disable). `gts` holds one image shared by all fields or
/// one per field.
pub fn total_loss(
    train_renders: &[&ImageBuffer],
    gts: &[&ImageBuffer],
    pseudo_renders: &[&ImageBuffer],
    weights: LossWeights,
) -> Result<TotalLoss> {
    let n = train_renders.len();
    if n == 0 {
        return Err(Error::invalid("total_loss needs at least one render"));
    }
    if gts.len() != 1 && gts.len() != n {
        return Err(Error::invalid("total_loss needs one ground truth or one per field"));
    }
    if !pseudo_renders.is_empty() && pseudo_renders.len() != n {
        return Err(Error::invalid("pseudo renders must be given for every field"));
    }
    let mut color_terms = Vec::with_capacity(n);
    let mut train_grads = Vec::with_capacity(n);
    for (k, r) in train_renders.iter().enumerate() {
        let l = color_coreg_loss(r, gts[k.min(gts.len() - 1)], weights.lambda_dssim)?;
        color_terms.push(l.value);
        train_grads.push(l.grad_a);
    }
    let mut per_field = color_terms.clone();
    let mut total: f64 = color_terms.iter().sum();
    let mut pseudo_grads = Vec::new();
    let mut pseudo_term = 0.0;
    if n >= 2 && !pseudo_renders.is_empty() {
        let p0 = pseudo_renders[0];
        pseudo_grads = vec![ImageBuffer::zeros(p0.width, p0.height, p0.channels); n];
        let w = weights.lambda_pseudo / (n - 1) as f64;
        let mut pairs = 0usize;
        for i in 0..n {
            for j in i + 1..n {
                let r = color_coreg_loss(pseudo_renders[i], pseudo_renders[j], weights.lambda_dssim)?;
                pseudo_term += r.value;
                pairs += 1;
                total += w * r.value;
                per_field[i] += w * r.value;
                per_field[j] += w * r.value;
                for (g, d) in pseudo_grads[i].data.iter_mut().zip(&r.grad_a.data) {
                    *g += w * d;
                }
                for (g, d) in pseudo_grads[j].data.iter_mut().zip(&r.grad_b.data) {
                    *g += w * d;
                }
            }
        }
        pseudo_term /= pairs as f64;
    }
    Ok(TotalLoss {
        total,
        per_field,
        color_terms,
        pseudo_term,
        train_grads,
        pseudo_grads,
    })
}

/// `1 - Pearson(d_a, d_b)` over valid pixels.
#[derive(Clone, Debug)]
pub struct PearsonLoss {
    pub value: f64,
    pub grad_a: ImageBuffer,
    pub grad_b: ImageBuffer,
    /// Set when either input has zero variance on the valid pixels; the loss
    /// is then defined as 0 with zero gradients.
    pub degenerate: bool,
}

pub fn pearson_depth_coreg(da: &ImageBuffer, db: &ImageBuffer, valid: &[bool]) -> Result<PearsonLoss> {
    if !da.same_shape(db) || da.channels != 1 || valid.len() != da.data.len() {
        return Err(Error::invalid("pearson_depth_coreg: shape mismatch"));
    }
    let idx: Vec<usize> = (0..valid.len()).filter(|&i| valid[i]).collect();
    if idx.len() < 2 {
        return Err(Error::invalid("pearson_depth_coreg needs at least 2 valid pixels"));
    }
    let n = idx.len() as f64;
    let ma = idx.iter().map(|&i| da.data[i]).sum::<f64>() / n;
    let mb = idx.iter().map(|&i| db.data[i]).sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for &i in &idx {
        let (x, y) = (da.data[i] - ma, db.data[i] - mb);
        sab += x * y;
        saa += x * x;
        sbb += y * y;
    }
    let mut grad_a = ImageBuffer::zeros(da.width, da.height, 1);
    let mut grad_b = ImageBuffer::zeros(da.width, da.height, 1);
    if saa <= 0.0 || sbb <= 0.0 {
        log::warn!("pearson depth co-regularization: constant depth, loss set to 0");
        return Ok(PearsonLoss {
            value: 0.0,
            grad_a,
            grad_b,
            degenerate: true,
        });
    }
    let denom = (saa * sbb).sqrt();
    let r = sab / denom;
    // Centering terms cancel in the gradient because the centered inputs sum
    // to zero.
    for &i in &idx {
        let (x, y) = (da.data[i] - ma, db.data[i] - mb);
        grad_a.data[i] = -(y / denom - r * x / saa);
        grad_b.data[i] = -(x / denom - r * y / sbb);
    }
    Ok(PearsonLoss {
        value: 1.0 - r,
        grad_a,
        grad_b,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identical_images_zero_loss_and_gradient() {
        let a = ImageBuffer::filled(12, 12, 3, 0.3);
        let l = color_coreg_loss(&a, &a, 0.2).unwrap();
        assert_eq!(l.value, 0.0);
        assert!(l.grad_a.data.iter().all(|&g| g == 0.0));
        assert!(l.grad_b.data.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn pure_l1_constant_images() {
        let a = ImageBuffer::filled(4, 4, 3, 0.5);
        let b = ImageBuffer::filled(4, 4, 3, 0.7);
        assert_relative_eq!(color_coreg_loss(&a, &b, 0.0).unwrap().value, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn l1_plus_dssim_by_hand() {
        // One window position and no variance: SSIM reduces to the
        // luminance term (2 * 0.2 * 0.5 + C1) / (0.2² + 0.5² + C1).
        let a = ImageBuffer::filled(11, 11, 3, 0.2);
        let b = ImageBuffer::filled(11, 11, 3, 0.5);
        let c1 = 1e-4;
        let ssim = (0.2 + c1) / (0.29 + c1);
        let expected = 0.8 * 0.3 + 0.2 * (1.0 - ssim) / 2.0;
        assert_relative_eq!(color_coreg_loss(&a, &b, 0.2).unwrap().value, expected, epsilon = 1e-12);

        // A two-level image against its mean: L1 is 0.25 and SSIM has a
        // single window whose weights sum to 1 over both halves.
        let mut c = ImageBuffer::filled(11, 11, 1, 0.25);
        let win = crate::metrics::gaussian_window();
        for y in 0..11 {
            for x in 0..11 {
                if (x + y) % 2 == 0 {
                    *c.at_mut(x, y, 0) = 0.75;
                }
            }
        }
        let wsum: f64 = (0..11)
            .flat_map(|y| (0..11).map(move |x| (x, y)))
            .filter(|(x, y)| (x + y) % 2 == 0)
            .map(|(x, y)| win[x] * win[y])
            .sum();
        let mu = 0.25 + 0.5 * wsum;
        let var = 0.25 * wsum * (1.0 - wsum);
        let m = ImageBuffer::filled(11, 11, 1, mu);
        let l1_cm: f64 = c.data.iter().map(|v| (v - mu).abs()).sum::<f64>() / 121.0;
        let s = (2.0 * mu * mu + c1) * 9e-4 / ((2.0 * mu * mu + c1) * (var + 9e-4));
        let expected = 0.8 * l1_cm + 0.2 * (1.0 - s) / 2.0;
        assert_relative_eq!(color_coreg_loss(&c, &m, 0.2).unwrap().value, expected, epsilon = 1e-12);
    }

    #[test]
    fn shape_mismatch_is_invalid() {
        let a = ImageBuffer::zeros(4, 4, 3);
        let b = ImageBuffer::zeros(4, 5, 3);
        assert!(matches!(color_coreg_loss(&a, &b, 0.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn lambda_pseudo_zero_is_independent() {
        let gt = ImageBuffer::filled(12, 12, 3, 0.5);
        let a = ImageBuffer::filled(12, 12, 3, 0.4);
        let b = ImageBuffer::filled(12, 12, 3, 0.8);
        let w = LossWeights {
            lambda_dssim: 0.2,
            lambda_pseudo: 0.0,
        };
        let t = total_loss(&[&a, &b], &[&gt], &[&a, &b], w).unwrap();
        assert_eq!(t.per_field, t.color_terms);
        assert!(t.pseudo_grads.iter().all(|g| g.data.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn pearson_cases() {
        let a = ImageBuffer::from_vec(2, 2, 1, vec![1.0, 2.0, 3.0, 5.0]).unwrap();
        let valid = vec![true; 4];
        let b = ImageBuffer::from_vec(2, 2, 1, a.data.iter().map(|v| 2.0 * v + 1.0).collect()).unwrap();
        assert!(pearson_depth_coreg(&a, &b, &valid).unwrap().value.abs() < 1e-12);
        let c = ImageBuffer::from_vec(2, 2, 1, a.data.iter().map(|v| 10.0 - v).collect()).unwrap();
        assert_relative_eq!(pearson_depth_coreg(&a, &c, &valid).unwrap().value, 2.0, epsilon = 1e-12);
        let k = ImageBuffer::filled(2, 2, 1, 3.0);
        let l = pearson_depth_coreg(&k, &a, &valid).unwrap();
        assert!(l.degenerate && l.value == 0.0);
    }

    #[test]
    fn pearson_gradient_matches_finite_differences() {
        let a = ImageBuffer::from_vec(3, 2, 1, vec![1.0, 2.5, 3.0, 5.0, 2.0, 4.0]).unwrap();
        let b = ImageBuffer::from_vec(3, 2, 1, vec![2.0, 2.0, 3.5, 4.0, 1.0, 6.0]).unwrap();
        let valid = vec![true, true, false, true, true, true];
        let l = pearson_depth_coreg(&a, &b, &valid).unwrap();
        let h = 1e-6;
        for i in 0..6 {
            let mut ap = a.clone();
            let mut am = a.clone();
            ap.data[i] += h;
            am.data[i] -= h;
            let fd = (pearson_depth_coreg(&ap, &b, &valid).unwrap().value
                - pearson_depth_coreg(&am, &b, &valid).unwrap().value)
                / (2.0 * h);
            assert!((fd - l.grad_a.data[i]).abs() < 1e-8);
        }
    }
}
