//! Co-regularized sparse-view Gaussian splatting on the CPU.
//!
//! Two (or more) Gaussian radiance fields are trained side by side on the same
//! sparse views. Their point-level and render-level disagreement drives
//! co-pruning and pseudo-view co-regularization. The crate also carries the
//! measurement machinery used to study that disagreement: registration
//! fitness/RMSE, PSNR/SSIM, depth error and percentile-masking curves.

pub mod coreg;
pub mod error;
pub mod exec;
pub mod metrics;
pub mod raster;
pub mod scene;
pub mod train;

pub use error::{Error, Result};
pub use exec::Exec;
pub use scene::{Camera, GaussianField, ImageBuffer, Intrinsics, SceneBounds, SceneDataset};
