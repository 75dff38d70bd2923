//! Directional statistics on the unit sphere.

pub mod bessel;
pub mod kmeans;
pub mod vmf;

pub use bessel::{ln_gamma, log_bessel_i};
pub use kmeans::{spherical_kmeans, SphericalKMeans};
pub use vmf::{
    concentration_from_resultant, log_normalizer, mean_resultant_ratio, sample_vmf, vmf_log_density, UnitVector,
    VmfParams,
};
