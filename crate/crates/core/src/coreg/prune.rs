use super::knn::{knn_match, nonmatching_mask};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::scene::GaussianField;
use crate::train::OptimizerState;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CoPruneReport {
    pub n_pruned: Vec<usize>,
    /// Fields left untouched because every primitive was marked.
    pub skipped: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Prune masks for every field, computed on the unmodified inputs. A
/// primitive is marked when its nearest neighbor in ANY other field lies
/// farther than `tau`.
pub fn co_prune_masks(fields: &[GaussianField], tau: f64, exec: Exec) -> Vec<Vec<bool>> {
    (0..fields.len())
        .map(|a| {
            let mut mask = vec![false; fields[a].len()];
            for (b, other) in fields.iter().enumerate() {
                if a == b {
                    continue;
                }
                let m = nonmatching_mask(&knn_match(&fields[a], other, exec), tau);
                for (x, y) in mask.iter_mut().zip(m) {
                    *x |= y;
                }
            }
            mask
        })
        .collect()
}

/// Remove non-matching primitives from every field. `states` is either
/// empty or holds one optimizer state per field, whose rows are dropped in
/// step with the field.
pub fn co_prune(
    fields: &mut [GaussianField],
    states: &mut [OptimizerState],
    tau: f64,
    exec: Exec,
) -> Result<CoPruneReport> {
    if fields.len() < 2 {
        return Err(Error::invalid("co-pruning needs at least two fields"));
    }
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("tau must be positive, got {tau}")));
    }
    if !states.is_empty() && states.len() != fields.len() {
        return Err(Error::invalid("one optimizer state per field expected"));
    }
    let masks = co_prune_masks(fields, tau, exec);
    let mut report = CoPruneReport::default();
    for (k, mask) in masks.iter().enumerate() {
        let n = mask.iter().filter(|&&m| m).count();
        if n > 0 && n == fields[k].len() {
            report.skipped.push(k);
            report
                .warnings
                .push(format!("co-pruning would empty field {k} ({n} primitives); skipped"));
            report.n_pruned.push(0);
            continue;
        }
        if n > 0 {
            let keep: Vec<bool> = mask.iter().map(|&m| !m).collect();
            fields[k].retain_mask(&keep);
            if let Some(s) = states.get_mut(k) {
                s.retain_rows(&keep);
            }
        }
        report.n_pruned.push(n);
    }
    for w in &report.warnings {
        log::warn!("{w}");
    }
    Ok(report)
}
