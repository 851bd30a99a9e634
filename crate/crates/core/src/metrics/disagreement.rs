use super::depth::{abs_error_rel, depth_valid_mask};
use super::image::psnr;
use super::registration::fitness_rmse;
use crate::error::Result;
use crate::exec::Exec;
use crate::raster::render;
use crate::scene::{Camera, GaussianField};

/// Point and rendering disagreement between two fields.
#[derive(Clone, Debug, PartialEq)]
pub struct DisagreementReport {
    /// `NaN` when either field is empty.
    pub fitness: f64,
    pub rmse: f64,
    pub psnr_between: Vec<f64>,
    /// Depth error of `b` with `a` as the reference.
    pub depth_abs_error_rel: Vec<f64>,
}

impl DisagreementReport {
    pub fn mean_psnr_between(&self) -> f64 {
        mean_finite(&self.psnr_between)
    }

    pub fn mean_depth_abs_error_rel(&self) -> f64 {
        mean_finite(&self.depth_abs_error_rel)
    }
}

fn mean_finite(v: &[f64]) -> f64 {
    let f: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
    if f.is_empty() {
        f64::NAN
    } else {
        f.iter().sum::<f64>() / f.len() as f64
    }
}

pub fn disagreement(
    a: &GaussianField,
    b: &GaussianField,
    views: &[Camera],
    tau: f64,
    background: [f64; 3],
    exec: Exec,
) -> Result<DisagreementReport> {
    let (fitness, rmse) = if a.is_empty() || b.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        let r = fitness_rmse(a, b, tau, exec)?;
        (r.fitness, r.rmse)
    };
    let mut psnr_between = Vec::with_capacity(views.len());
    let mut depth_abs_error_rel = Vec::with_capacity(views.len());
    for cam in views {
        let ra = render(a, cam, background, exec)?;
        let rb = render(b, cam, background, exec)?;
        psnr_between.push(psnr(&ra.color, &rb.color)?);
        let valid = depth_valid_mask(&[&ra.accum_alpha, &rb.accum_alpha]);
        depth_abs_error_rel.push(abs_error_rel(&rb.depth, &ra.depth, &valid)?);
    }
    Ok(DisagreementReport {
        fitness,
        rmse,
        psnr_between,
        depth_abs_error_rel,
    })
}
