//! Evaluation up to rotation and relabeling: subspace accuracy, cluster
//! agreement, pair-ranking AUC and assignment margins.

pub mod alignment;
pub mod metrics;
pub mod report;

pub use alignment::{permutation_align, procrustes_align, rel_acc, rel_err, PermutationAlignment, RotationAlignment};
pub use metrics::{ami, auc, margin_stats, median, quantiles, score_pairs, MarginStats};
pub use report::{evaluate, EvalReport, EvalTruth, MethodOutput};
