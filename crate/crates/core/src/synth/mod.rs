//! Ground-truth scenario generation.

pub mod scenario;
pub mod toy;

pub use scenario::{
    build_anchor_priors, default_sources, generate_relational_pairs, generate_scenario, AnchorPriors, GeneratedPairs,
    ObservationModel, PairFractions, ScenarioConfig, ScenarioTruth, SourceSpec,
};
pub use toy::{random_problem, RandomProblem};
