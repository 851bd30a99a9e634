//! Co-regularization between simultaneously trained fields: point matching
//! and co-pruning, pseudo-view sampling and the disagreement losses.

mod knn;
mod loss;
mod prune;
mod pseudo;

pub use knn::{knn_match, knn_match_points, nonmatching_mask, KdTree, MatchResult};
pub use loss::{color_coreg_loss, l1, pearson_depth_coreg, total_loss, LossWeights, PairLoss, PearsonLoss, TotalLoss};
pub use prune::{co_prune, co_prune_masks, CoPruneReport};
pub use pseudo::{midpoint_views, nearest_camera, pseudo_view_between, sample_pseudo_view, slerp, PseudoView};
