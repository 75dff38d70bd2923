//! Block-coordinate optimization of the composite loss.

pub mod config;
pub mod em;
pub mod feature;
pub mod fit;

pub use config::{FitConfig, FitTrace, OuterRecord, StopReason};
pub use em::{em_concept_update, init_concept_level, ConceptStart, ConceptUpdate};
pub use feature::{feature_refine, init_feature_level, least_squares_loadings, warm_start, FeatureFit};
pub use fit::{assign_clusters, fit, Assignment, FitResult};
