//! Point-cloud registration metrics between Gaussian centers.

use crate::coreg::knn_match;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::scene::GaussianField;

/// Fitness/RMSE in both directions and their average.
///
/// Fitness is the fraction of source points whose nearest target lies within
/// `tau`; RMSE is the root mean square of those inlier distances. A direction
/// with no inliers has `rmse = NaN`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Registration {
    pub fitness: f64,
    pub rmse: f64,
    pub fitness_ab: f64,
    pub fitness_ba: f64,
    pub rmse_ab: f64,
    pub rmse_ba: f64,
    pub inliers_ab: usize,
    pub inliers_ba: usize,
}

fn directional(distances: &[f64], tau: f64) -> (f64, f64, usize) {
    let mut n = 0usize;
    let mut sq = 0.0;
    for &d in distances {
        if d <= tau {
            n += 1;
            sq += d * d;
        }
    }
    let fitness = n as f64 / distances.len() as f64;
    let rmse = if n > 0 { (sq / n as f64).sqrt() } else { f64::NAN };
    (fitness, rmse, n)
}

pub fn fitness_rmse(a: &GaussianField, b: &GaussianField, tau: f64, exec: Exec) -> Result<Registration> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("fitness/rmse needs two nonempty fields"));
    }
    if !(tau > 0.0) {
        return Err(Error::invalid("tau must be positive"));
    }
    let ab = knn_match(a, b, exec);
    let ba = knn_match(b, a, exec);
    let (fitness_ab, rmse_ab, inliers_ab) = directional(&ab.distances, tau);
    let (fitness_ba, rmse_ba, inliers_ba) = directional(&ba.distances, tau);
    Ok(Registration {
        fitness: 0.5 * (fitness_ab + fitness_ba),
        rmse: 0.5 * (rmse_ab + rmse_ba),
        fitness_ab,
        fitness_ba,
        rmse_ab,
        rmse_ba,
        inliers_ab,
        inliers_ba,
    })
}
