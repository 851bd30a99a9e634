//! Image, depth and point-registration metrics, evaluation and the
//! disagreement masking study.

mod depth;
mod disagreement;
mod eval;
mod image;
mod registration;
mod study;

pub use depth::{abs_error_rel, depth_valid_mask, DEPTH_VALID_ALPHA};
pub use disagreement::{disagreement, DisagreementReport};
pub use eval::{eval_csv, evaluate, EvalSummary, ViewEval, EVAL_CSV_HEADER};
pub use image::{
    gaussian_window, mse, psnr, psnr_from_mse, ssim, ssim_with_grad, dssim, SsimGrad, PSNR_CAP, SSIM_C1, SSIM_C2,
    SSIM_SIGMA, SSIM_WINDOW,
};
pub use registration::{fitness_rmse, Registration};
pub use study::{
    color_scores, default_percentiles, depth_scores, disagreement_study, masked_curve, spearman, study_csv,
    CurvePoint, DepthEval, StudyKind, StudyRow, STUDY_CSV_HEADER,
};
