//! Joint alignment of partially overlapping embedding sources into a shared
//! spherical latent space, with von Mises-Fisher mixture clustering.

pub mod assignment;
pub mod baselines;
pub mod directional;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod model;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Real;

pub type ModelStateF64 = model::ModelState<f64>;
pub type FeatureUniverseF64 = model::FeatureUniverse<f64>;
pub type SourceSetF64 = model::SourceSet<f64>;
pub type PriorMatrixF64 = model::PriorMatrix<f64>;
pub type FitResultF64 = optim::FitResult<f64>;
