use std::fmt::Write as _;

use super::depth::{abs_error_rel, depth_valid_mask};
use super::image::{psnr, ssim};
use super::registration::{fitness_rmse, Registration};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::raster::render;
use crate::scene::{GaussianField, SceneDataset};

#[derive(Clone, Debug, PartialEq)]
pub struct ViewEval {
    pub view: usize,
    pub psnr: f64,
    pub ssim: f64,
    /// `NaN` when the dataset has no test depth or no pixel is valid.
    pub abs_error_rel: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub views: Vec<ViewEval>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub mean_abs_error_rel: f64,
    pub registration: Option<Registration>,
}

fn mean_finite(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.filter(|x| x.is_finite()).fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Score `field` on every test view. With `registration_tau`, also report
/// fitness/RMSE against the dataset's ground-truth field.
pub fn evaluate(
    field: &GaussianField,
    dataset: &SceneDataset,
    registration_tau: Option<f64>,
    exec: Exec,
) -> Result<EvalSummary> {
    if dataset.test_cameras.is_empty() {
        return Err(Error::invalid("evaluation needs at least one test view"));
    }
    let mut views = Vec::with_capacity(dataset.test_cameras.len());
    for (v, cam) in dataset.test_cameras.iter().enumerate() {
        let out = render(field, cam, dataset.background, exec)?;
        let gt = &dataset.test_images[v];
        let ssim_v = if gt.width >= 11 && gt.height >= 11 {
            ssim(&out.color, gt)?
        } else {
            f64::NAN
        };
        let abs_rel = match (&dataset.test_depths, &dataset.test_alphas) {
            (Some(d), Some(a)) => {
                let valid = depth_valid_mask(&[&out.accum_alpha, &a[v]]);
                abs_error_rel(&out.depth, &d[v], &valid)?
            }
            _ => f64::NAN,
        };
        views.push(ViewEval {
            view: v,
            psnr: psnr(&out.color, gt)?,
            ssim: ssim_v,
            abs_error_rel: abs_rel,
        });
    }
    let registration = match registration_tau {
        Some(tau) => {
            let gt = dataset
                .ground_truth
                .as_ref()
                .ok_or_else(|| Error::invalid("registration metrics need a ground-truth field"))?;
            if field.is_empty() {
                None
            } else {
                Some(fitness_rmse(field, gt, tau, exec)?)
            }
        }
        None => None,
    };
    Ok(EvalSummary {
        mean_psnr: mean_finite(views.iter().map(|v| v.psnr)),
        mean_ssim: mean_finite(views.iter().map(|v| v.ssim)),
        mean_abs_error_rel: mean_finite(views.iter().map(|v| v.abs_error_rel)),
        views,
        registration,
    })
}

pub const EVAL_CSV_HEADER: &str = "# corgs-eval v1\nview,psnr,ssim,abs_error_rel,fitness,rmse\n";

/// One row per view plus a trailing `mean` row; registration columns are
/// only filled on the `mean` row.
pub fn eval_csv(s: &EvalSummary) -> String {
    let mut out = String::from(EVAL_CSV_HEADER);
    for v in &s.views {
        let _ = writeln!(out, "{},{},{},{},,", v.view, v.psnr, v.ssim, v.abs_error_rel);
    }
    let (f, r) = s.registration.map_or((String::new(), String::new()), |r| {
        (r.fitness.to_string(), r.rmse.to_string())
    });
    let _ = writeln!(
        out,
        "mean,{},{},{},{},{}",
        s.mean_psnr, s.mean_ssim, s.mean_abs_error_rel, f, r
    );
    out
}
