use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;

use super::config::TrainConfig;
use super::optim::OptimizerState;
use crate::error::{Error, Result};
use crate::scene::{logit, quat_to_matrix, sigmoid, Gaussian, GaussianField, SceneBounds};

/// Scale divisor applied to split children.
pub const SPLIT_SCALE_DIVISOR: f64 = 1.6;
/// Cap applied to every opacity at a reset.
pub const OPACITY_RESET_VALUE: f64 = 0.01;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DensifyReport {
    pub n_cloned: usize,
    pub n_split: usize,
    pub n_pruned: usize,
}

/// Two children of primitive `i`, centered at samples from `N(μ, Σ)` with
/// scales divided by [`SPLIT_SCALE_DIVISOR`].
pub fn split_children<R: Rng + ?Sized>(field: &GaussianField, i: usize, rng: &mut R) -> [Gaussian; 2] {
    let parent = field.get(i);
    let r = quat_to_matrix(field.unit_rotation(i));
    let s = field.scale(i);
    let shrink = SPLIT_SCALE_DIVISOR.ln();
    std::array::from_fn(|_| {
        let z = Vector3::new(
            s[0] * rng.sample::<f64, _>(StandardNormal),
            s[1] * rng.sample::<f64, _>(StandardNormal),
            s[2] * rng.sample::<f64, _>(StandardNormal),
        );
        let d = r * z;
        Gaussian {
            position: std::array::from_fn(|k| parent.position[k] + d[k]),
            log_scale: parent.log_scale.map(|v| v - shrink),
            ..parent
        }
    })
}

/// Clone small primitives with large view-space gradients, split large ones,
/// then prune transparent ones. Optimizer rows follow the field: new rows
/// start at zero, removed rows are dropped.
pub fn densify_and_prune<R: Rng + ?Sized>(
    field: &mut GaussianField,
    state: &mut OptimizerState,
    grad_norms: &[f64],
    config: &TrainConfig,
    extent: f64,
    rng: &mut R,
) -> Result<DensifyReport> {
    let n = field.len();
    if grad_norms.len() != n || state.len() != n {
        return Err(Error::invalid("densification statistics do not match field size"));
    }
    let size_limit = config.percent_dense * extent;
    let mut report = DensifyReport::default();
    let mut split_parent = vec![false; n];
    let mut new_rows = GaussianField::new();
    for i in 0..n {
        if !(grad_norms[i] > config.densify_grad_threshold) {
            continue;
        }
        let max_scale = field.scale(i).into_iter().fold(0.0, f64::max);
        if max_scale <= size_limit {
            new_rows.push(field.get(i));
            report.n_cloned += 1;
        } else {
            split_parent[i] = true;
            report.n_split += 1;
        }
    }
    for i in (0..n).filter(|&i| split_parent[i]) {
        for child in split_children(field, i, rng) {
            new_rows.push(child);
        }
    }
    field.extend_from(&new_rows);
    state.push_zero_rows(new_rows.len());

    let threshold = config.prune_opacity_threshold;
    let keep: Vec<bool> = (0..field.len())
        .map(|i| {
            let parent_gone = i < n && split_parent[i];
            !parent_gone && sigmoid(field.opacity_logits[i]) >= threshold
        })
        .collect();
    report.n_pruned = keep
        .iter()
        .enumerate()
        .filter(|&(i, &k)| !k && !(i < n && split_parent[i]))
        .count();
    if keep.iter().any(|&k| !k) {
        field.retain_mask(&keep);
        state.retain_rows(&keep);
    }
    debug_assert_eq!(field.len(), state.len());
    Ok(report)
}

/// Clamp every opacity to at most [`OPACITY_RESET_VALUE`] and clear the
/// opacity moments.
pub fn reset_opacity(field: &mut GaussianField, state: &mut OptimizerState) {
    let cap = logit(OPACITY_RESET_VALUE);
    for o in &mut field.opacity_logits {
        *o = o.min(cap);
    }
    state.reset_opacity_moments();
}

/// `n` primitives uniform in `bounds`. Each scale is the root mean squared
/// distance to its three nearest neighbors; opacity `opacity`, color 0.5.
pub fn init_field<R: Rng + ?Sized>(bounds: &SceneBounds, n: usize, opacity: f64, rng: &mut R) -> GaussianField {
    let positions: Vec<[f64; 3]> = (0..n)
        .map(|_| std::array::from_fn(|k| rng.random_range(bounds.min[k]..=bounds.max[k])))
        .collect();
    let mut field = GaussianField::with_capacity(n);
    let fallback = 0.01 * bounds.diagonal();
    for (i, p) in positions.iter().enumerate() {
        let mut d2: Vec<f64> = positions
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, q)| (0..3).map(|k| (p[k] - q[k]).powi(2)).sum())
            .collect();
        d2.sort_by(f64::total_cmp);
        let k = d2.len().min(3);
        let scale = if k == 0 {
            fallback
        } else {
            (d2[..k].iter().sum::<f64>() / k as f64).sqrt().max(1e-7)
        };
        field.push(Gaussian {
            position: *p,
            log_scale: [scale.ln(); 3],
            rotation: [1.0, 0.0, 0.0, 0.0],
            opacity_logit: logit(opacity),
            color_logit: [0.0; 3],
        });
    }
    field
}
