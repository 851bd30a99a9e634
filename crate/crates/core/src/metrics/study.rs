//! Percentile-masking study: does hiding the pixels where two fields
//! disagree most leave a better reconstruction behind?

use std::fmt::Write as _;

use super::depth::{abs_error_rel, depth_valid_mask};
use super::image::psnr_from_mse;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::raster::render;
use crate::scene::{GaussianField, ImageBuffer, SceneDataset};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StudyKind {
    /// Score = channel-mean absolute color difference.
    Color,
    /// Score = `|d_a - d_b| / ((d_a + d_b) / 2)` where both renders are valid, else 0.
    Depth,
}

impl StudyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StudyKind::Color => "color",
            StudyKind::Depth => "depth",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub percentile: f64,
    pub masked_fraction: f64,
    pub remaining_psnr: f64,
    pub remaining_abs_error_rel: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyRow {
    pub view: usize,
    pub kind: StudyKind,
    pub point: CurvePoint,
}

/// Default percentile grid, 0..=90 in steps of 10.
pub fn default_percentiles() -> Vec<f64> {
    (0..10).map(|p| p as f64 * 10.0).collect()
}

pub fn color_scores(a: &ImageBuffer, b: &ImageBuffer) -> Result<Vec<f64>> {
    if !a.same_shape(b) {
        return Err(Error::invalid("score images differ in shape"));
    }
    let c = a.channels;
    Ok(a.data
        .chunks_exact(c)
        .zip(b.data.chunks_exact(c))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()).sum::<f64>() / c as f64)
        .collect())
}

pub fn depth_scores(da: &ImageBuffer, db: &ImageBuffer, valid: &[bool]) -> Vec<f64> {
    da.data
        .iter()
        .zip(&db.data)
        .zip(valid)
        .map(|((&a, &b), &v)| if v && a + b > 0.0 { (a - b).abs() / (0.5 * (a + b)) } else { 0.0 })
        .collect()
}

/// Depth inputs for the remaining-region depth error.
pub struct DepthEval<'a> {
    pub pred: &'a ImageBuffer,
    pub gt: &'a ImageBuffer,
    pub valid: &'a [bool],
}

/// For each percentile `p`, mask the top `p`% scoring pixels (ties broken by
/// lower pixel index first) and measure `render` against `gt` on the rest.
pub fn masked_curve(
    render: &ImageBuffer,
    gt: &ImageBuffer,
    scores: &[f64],
    percentiles: &[f64],
    depth: Option<DepthEval<'_>>,
) -> Result<Vec<CurvePoint>> {
    if !render.same_shape(gt) || scores.len() != render.pixel_count() {
        return Err(Error::invalid("masked_curve: shape mismatch"));
    }
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    let c = render.channels;
    let mut out = Vec::with_capacity(percentiles.len());
    for &p in percentiles {
        if !(0.0..100.0).contains(&p) {
            return Err(Error::invalid(format!("percentile {p} outside [0, 100)")));
        }
        let k = ((p / 100.0) * n as f64).floor() as usize;
        let mut keep = vec![true; n];
        for &i in &order[..k] {
            keep[i] = false;
        }
        let mut sq = 0.0;
        let mut cnt = 0usize;
        for (pix, _) in keep.iter().enumerate().filter(|(_, &k)| k) {
            for ch in 0..c {
                let d = render.data[pix * c + ch] - gt.data[pix * c + ch];
                sq += d * d;
            }
            cnt += c;
        }
        let remaining_abs_error_rel = match &depth {
            Some(d) => {
                let m: Vec<bool> = keep.iter().zip(d.valid).map(|(&a, &b)| a && b).collect();
                abs_error_rel(d.pred, d.gt, &m)?
            }
            None => f64::NAN,
        };
        out.push(CurvePoint {
            percentile: p,
            masked_fraction: k as f64 / n as f64,
            remaining_psnr: psnr_from_mse(sq / cnt as f64),
            remaining_abs_error_rel,
        });
    }
    Ok(out)
}

/// Run the masking study for `field_a` (the evaluated field) against ground
/// truth, using disagreement with `field_b` as the score.
pub fn disagreement_study(
    field_a: &GaussianField,
    field_b: &GaussianField,
    dataset: &SceneDataset,
    views: &[usize],
    percentiles: &[f64],
    kind: StudyKind,
    exec: Exec,
) -> Result<Vec<StudyRow>> {
    let mut rows = Vec::new();
    let bg = dataset.background;
    for &v in views {
        let cam = dataset
            .test_cameras
            .get(v)
            .ok_or_else(|| Error::invalid(format!("test view {v} out of range")))?;
        let ra = render(field_a, cam, bg, exec)?;
        let rb = render(field_b, cam, bg, exec)?;
        let gt = &dataset.test_images[v];
        let gt_depth = dataset.test_depths.as_ref().map(|d| &d[v]);
        let gt_alpha = dataset.test_alphas.as_ref().map(|a| &a[v]);
        let mut alphas = vec![&ra.accum_alpha];
        if let Some(a) = gt_alpha {
            alphas.push(a);
        }
        let valid_gt = depth_valid_mask(&alphas);
        let scores = match kind {
            StudyKind::Color => color_scores(&ra.color, &rb.color)?,
            StudyKind::Depth => {
                let valid = depth_valid_mask(&[&ra.accum_alpha, &rb.accum_alpha]);
                depth_scores(&ra.depth, &rb.depth, &valid)
            }
        };
        let depth = gt_depth.map(|g| DepthEval {
            pred: &ra.depth,
            gt: g,
            valid: &valid_gt,
        });
        for point in masked_curve(&ra.color, gt, &scores, percentiles, depth)? {
            rows.push(StudyRow { view: v, kind, point });
        }
    }
    Ok(rows)
}

pub const STUDY_CSV_HEADER: &str =
    "# corgs-study v1\nview,kind,percentile,masked_fraction,remaining_psnr,remaining_abs_error_rel\n";

pub fn study_csv(rows: &[StudyRow]) -> String {
    let mut s = String::from(STUDY_CSV_HEADER);
    for r in rows {
        let p = &r.point;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.view,
            r.kind.as_str(),
            p.percentile,
            p.masked_fraction,
            p.remaining_psnr,
            p.remaining_abs_error_rel
        );
    }
    s
}

/// Spearman rank correlation with average ranks for ties. `NaN` if either
/// input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = 0.5 * (i + j) as f64 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        f64::NAN
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn four_pixel_hand_case() {
        // Errors per pixel (1 channel): 0.4, 0.0, 0.2, 0.1; scores rank the
        // pixels 0 > 2 > 3 > 1.
        let render = ImageBuffer::from_vec(2, 2, 1, vec![0.4, 0.5, 0.7, 0.1]).unwrap();
        let gt = ImageBuffer::from_vec(2, 2, 1, vec![0.0, 0.5, 0.5, 0.0]).unwrap();
        let scores = [0.9, 0.0, 0.5, 0.3];
        let c = masked_curve(&render, &gt, &scores, &[0.0, 25.0, 50.0, 75.0], None).unwrap();
        let mse = [
            (0.16 + 0.0 + 0.04 + 0.01) / 4.0,
            (0.0 + 0.04 + 0.01) / 3.0,
            (0.0 + 0.01) / 2.0,
            0.0,
        ];
        for (pt, m) in c.iter().zip(mse) {
            assert_relative_eq!(pt.remaining_psnr, psnr_from_mse(m), epsilon = 1e-12);
        }
        assert_eq!(c[3].remaining_psnr, 99.0);
        assert_eq!(c[2].masked_fraction, 0.5);
    }

    #[test]
    fn ties_mask_lower_index_first() {
        let render = ImageBuffer::from_vec(4, 1, 1, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let gt = ImageBuffer::zeros(4, 1, 1);
        let c = masked_curve(&render, &gt, &[0.0; 4], &[25.0], None).unwrap();
        assert_eq!(c[0].remaining_psnr, 99.0);
    }

    #[test]
    fn full_mask_is_rejected() {
        let img = ImageBuffer::zeros(2, 2, 1);
        assert!(masked_curve(&img, &img, &[0.0; 4], &[100.0], None).is_err());
    }

    #[test]
    fn spearman_basics() {
        assert_relative_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 35.0]), 1.0);
        assert_relative_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
        assert!(spearman(&[1.0, 2.0], &[1.0, 1.0]).is_nan());
    }
}
