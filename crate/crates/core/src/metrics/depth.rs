use crate::error::{Error, Result};
use crate::scene::ImageBuffer;

/// Accumulated alpha a pixel needs in every render to count for depth metrics.
pub const DEPTH_VALID_ALPHA: f64 = 0.5;

/// Pixels where every given accumulated-alpha buffer reaches `DEPTH_VALID_ALPHA`.
pub fn depth_valid_mask(alphas: &[&ImageBuffer]) -> Vec<bool> {
    let n = alphas.first().map_or(0, |a| a.data.len());
    (0..n)
        .map(|p| alphas.iter().all(|a| a.data[p] >= DEPTH_VALID_ALPHA))
        .collect()
}

/// Mean of `|d - d*| / d*` over valid pixels. `NaN` when no pixel is valid.
pub fn abs_error_rel(pred: &ImageBuffer, gt: &ImageBuffer, valid: &[bool]) -> Result<f64> {
    if !pred.same_shape(gt) || pred.channels != 1 || valid.len() != pred.data.len() {
        return Err(Error::invalid("abs_error_rel: depth maps and mask must share one 1-channel shape"));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((&d, &g), &v) in pred.data.iter().zip(&gt.data).zip(valid) {
        if !v {
            continue;
        }
        if !(g > 0.0) {
            return Err(Error::invalid("abs_error_rel: ground-truth depth must be positive on valid pixels"));
        }
        sum += (d - g).abs() / g;
        n += 1;
    }
    Ok(if n == 0 { f64::NAN } else { sum / n as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identical_is_zero() {
        let d = ImageBuffer::filled(4, 4, 1, 2.5);
        assert_eq!(abs_error_rel(&d, &d, &[true; 16]).unwrap(), 0.0);
    }

    #[test]
    fn uniform_ten_percent() {
        let p = ImageBuffer::filled(4, 4, 1, 1.1);
        let g = ImageBuffer::filled(4, 4, 1, 1.0);
        assert_relative_eq!(abs_error_rel(&p, &g, &[true; 16]).unwrap(), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn half_doubled() {
        let mut p = ImageBuffer::filled(4, 2, 1, 1.0);
        for v in p.data.iter_mut().take(4) {
            *v = 2.0;
        }
        let g = ImageBuffer::filled(4, 2, 1, 1.0);
        assert_eq!(abs_error_rel(&p, &g, &[true; 8]).unwrap(), 0.5);
    }

    #[test]
    fn scale_covariant() {
        let p = ImageBuffer::from_vec(3, 1, 1, vec![1.2, 3.0, 0.7]).unwrap();
        let g = ImageBuffer::from_vec(3, 1, 1, vec![1.0, 2.0, 1.0]).unwrap();
        let c = 3.7;
        let ps = ImageBuffer::from_vec(3, 1, 1, p.data.iter().map(|v| v * c).collect()).unwrap();
        let gs = ImageBuffer::from_vec(3, 1, 1, g.data.iter().map(|v| v * c).collect()).unwrap();
        let m = [true; 3];
        assert_relative_eq!(abs_error_rel(&p, &g, &m).unwrap(), abs_error_rel(&ps, &gs, &m).unwrap(), epsilon = 1e-14);
    }

    #[test]
    fn mask_from_alpha() {
        let a = ImageBuffer::from_vec(3, 1, 1, vec![0.2, 0.6, 0.9]).unwrap();
        let b = ImageBuffer::from_vec(3, 1, 1, vec![0.9, 0.4, 0.5]).unwrap();
        assert_eq!(depth_valid_mask(&[&a, &b]), vec![false, false, true]);
    }
}
