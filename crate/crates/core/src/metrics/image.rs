//! PSNR and SSIM on `[0, 1]` images.
//!
//! SSIM uses an 11×11 Gaussian window (σ = 1.5), C1 = 0.01², C2 = 0.03²,
//! valid window positions only, averaged over positions and channels.

use crate::error::{Error, Result};
use crate::scene::ImageBuffer;

/// PSNR reported for identical images.
pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

fn check_shapes(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::invalid(format!(
            "image shapes differ: {}x{}x{} vs {}x{}x{}",
            a.width, a.height, a.channels, b.width, b.height, b.channels
        )));
    }
    Ok(())
}

/// Mean squared error over all pixels and channels.
pub fn mse(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    check_shapes(a, b)?;
    if a.data.is_empty() {
        return Err(Error::invalid("empty image"));
    }
    let s: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(s / a.data.len() as f64)
}

/// PSNR from a mean squared error (peak 1), capped at [`PSNR_CAP`].
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (-10.0 * mse.log10()).min(PSNR_CAP)
    }
}

pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

/// Normalized 1D Gaussian window.
pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let c = (SSIM_WINDOW / 2) as f64;
    let mut w: [f64; SSIM_WINDOW] =
        std::array::from_fn(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Valid-mode separable filter of a single-channel plane.
fn filter_valid(src: &[f64], w: usize, h: usize, win: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = (0..SSIM_WINDOW).map(|k| win[k] * row[x + k]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|k| win[k] * tmp[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: scatters a valid-size map back to full size.
fn filter_transpose(src: &[f64], w: usize, h: usize, win: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..oh {
        for x in 0..ow {
            let v = src[y * ow + x];
            for k in 0..SSIM_WINDOW {
                tmp[(y + k) * ow + x] += win[k] * v;
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..ow {
            let v = tmp[y * ow + x];
            for k in 0..SSIM_WINDOW {
                out[y * w + x + k] += win[k] * v;
            }
        }
    }
    out
}

/// SSIM value with gradients with respect to both inputs.
#[derive(Clone, Debug)]
pub struct SsimGrad {
    pub value: f64,
    pub grad_a: ImageBuffer,
    pub grad_b: ImageBuffer,
}

fn ssim_impl(a: &ImageBuffer, b: &ImageBuffer, want_grad: bool) -> Result<SsimGrad> {
    check_shapes(a, b)?;
    let (w, h, nc) = (a.width, a.height, a.channels);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "SSIM needs images at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {w}x{h}"
        )));
    }
    let win = gaussian_window();
    let positions = ((w + 1 - SSIM_WINDOW) * (h + 1 - SSIM_WINDOW)) as f64;
    let norm = 1.0 / (positions * nc as f64);
    let mut total = 0.0;
    let mut grad_a = ImageBuffer::zeros(w, h, nc);
    let mut grad_b = ImageBuffer::zeros(w, h, nc);
    for ch in 0..nc {
        let pa: Vec<f64> = a.channel(ch).data;
        let pb: Vec<f64> = b.channel(ch).data;
        let sq = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();
        let mu_a = filter_valid(&pa, w, h, &win);
        let mu_b = filter_valid(&pb, w, h, &win);
        let e_aa = filter_valid(&sq(&pa, &pa), w, h, &win);
        let e_bb = filter_valid(&sq(&pb, &pb), w, h, &win);
        let e_ab = filter_valid(&sq(&pa, &pb), w, h, &win);
        let n = mu_a.len();
        // Per-position partials of s with respect to (mu_a, E[aa], E[ab]) and
        // (mu_b, E[bb], E[ab]).
        let mut d_mu_a = vec![0.0; n];
        let mut d_mu_b = vec![0.0; n];
        let mut d_eaa = vec![0.0; n];
        let mut d_ebb = vec![0.0; n];
        let mut d_eab = vec![0.0; n];
        for p in 0..n {
            let (ma, mb) = (mu_a[p], mu_b[p]);
            let va = e_aa[p] - ma * ma;
            let vb = e_bb[p] - mb * mb;
            let cov = e_ab[p] - ma * mb;
            let n1 = 2.0 * ma * mb + SSIM_C1;
            let n2 = 2.0 * cov + SSIM_C2;
            let d1 = ma * ma + mb * mb + SSIM_C1;
            let d2 = va + vb + SSIM_C2;
            let s = n1 * n2 / (d1 * d2);
            total += s;
            if want_grad {
                let dd = d1 * d2;
                let inv = 1.0 / d1 - 1.0 / d2;
                d_mu_a[p] = 2.0 * mb * (n2 - n1) / dd - s * 2.0 * ma * inv;
                d_mu_b[p] = 2.0 * ma * (n2 - n1) / dd - s * 2.0 * mb * inv;
                d_eaa[p] = -s / d2;
                d_ebb[p] = -s / d2;
                d_eab[p] = 2.0 * n1 / dd;
            }
        }
        if want_grad {
            let t_mu_a = filter_transpose(&d_mu_a, w, h, &win);
            let t_mu_b = filter_transpose(&d_mu_b, w, h, &win);
            let t_eaa = filter_transpose(&d_eaa, w, h, &win);
            let t_ebb = filter_transpose(&d_ebb, w, h, &win);
            let t_eab = filter_transpose(&d_eab, w, h, &win);
            for q in 0..w * h {
                grad_a.data[q * nc + ch] = norm * (t_mu_a[q] + 2.0 * pa[q] * t_eaa[q] + pb[q] * t_eab[q]);
                grad_b.data[q * nc + ch] = norm * (t_mu_b[q] + 2.0 * pb[q] * t_ebb[q] + pa[q] * t_eab[q]);
            }
        }
    }
    Ok(SsimGrad {
        value: total * norm,
        grad_a,
        grad_b,
    })
}

pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    Ok(ssim_impl(a, b, false)?.value)
}

pub fn ssim_with_grad(a: &ImageBuffer, b: &ImageBuffer) -> Result<SsimGrad> {
    ssim_impl(a, b, true)
}

/// Structural dissimilarity, `(1 - SSIM) / 2`.
pub fn dssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    Ok(0.5 * (1.0 - ssim(a, b)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, c: usize) -> ImageBuffer {
        let data = (0..w * h * c).map(|_| rng.random::<f64>()).collect();
        ImageBuffer::from_vec(w, h, c, data).unwrap()
    }

    #[test]
    fn psnr_cases() {
        let a = ImageBuffer::filled(4, 4, 3, 0.3);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
        assert_relative_eq!(psnr_from_mse(0.01), 20.0, epsilon = 1e-12);
        let z = ImageBuffer::zeros(4, 4, 3);
        let h = ImageBuffer::filled(4, 4, 3, 0.5);
        assert_relative_eq!(psnr(&z, &h).unwrap(), 6.020599913279624, epsilon = 1e-9);
    }

    #[test]
    fn psnr_shape_mismatch() {
        assert!(psnr(&ImageBuffer::zeros(4, 4, 3), &ImageBuffer::zeros(4, 4, 1)).is_err());
    }

    #[test]
    fn ssim_identical_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_image(&mut rng, 16, 14, 3);
        assert_relative_eq!(ssim(&a, &a).unwrap(), 1.0, epsilon = 1e-12);
        assert!(dssim(&a, &a).unwrap().abs() < 1e-12);
    }

    #[test]
    fn ssim_constant_black_vs_white() {
        // Both variances vanish, so the contrast/structure factor is C2/C2 = 1
        // and only the luminance term C1 / (1 + C1) remains.
        let a = ImageBuffer::zeros(12, 12, 1);
        let b = ImageBuffer::filled(12, 12, 1, 1.0);
        let s = ssim(&a, &b).unwrap();
        assert_relative_eq!(s, SSIM_C1 / (1.0 + SSIM_C1), epsilon = 1e-15);
        assert!(s < 1e-3);
    }

    #[test]
    fn ssim_requires_window_size() {
        assert!(ssim(&ImageBuffer::zeros(10, 20, 1), &ImageBuffer::zeros(10, 20, 1)).is_err());
    }

    #[test]
    fn ssim_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_image(&mut rng, 13, 12, 3);
        let b = random_image(&mut rng, 13, 12, 3);
        let g = ssim_with_grad(&a, &b).unwrap();
        let h = 1e-5;
        for q in (0..a.data.len()).step_by(7) {
            let mut ap = a.clone();
            let mut am = a.clone();
            ap.data[q] += h;
            am.data[q] -= h;
            let fd = (ssim(&ap, &b).unwrap() - ssim(&am, &b).unwrap()) / (2.0 * h);
            assert!((fd - g.grad_a.data[q]).abs() < 1e-8, "a[{q}] {fd} vs {}", g.grad_a.data[q]);
            let mut bp = b.clone();
            let mut bm = b.clone();
            bp.data[q] += h;
            bm.data[q] -= h;
            let fd = (ssim(&a, &bp).unwrap() - ssim(&a, &bm).unwrap()) / (2.0 * h);
            assert!((fd - g.grad_b.data[q]).abs() < 1e-8);
        }
    }
}
