//! Comparison pipelines: impute missing source rows, embed by SVD of the
//! concatenated sources, then cluster.

pub mod cluster;
pub mod impute;

pub use cluster::{cluster_centers, hclust, kmeans_euclidean, ClusterCenters, KMeansFit};
pub use impute::{impute_missing, svd_concat_embed, ImputedUniverse};
