//! Allocation of project delay costs among activities with stochastic
//! durations, using the Shapley value of the expected-cost game.
//!
//! The main entry points are [`allocation::shapley_det`] for problems with
//! known planned durations and [`allocation::shapley_stoch`] for problems
//! whose planned durations are random. Both are exact for small instances
//! and fall back to reproducible permutation sampling otherwise.

pub mod allocation;
pub mod cli;
pub mod distributions;
pub mod error;
pub mod experiments;
pub mod file;
pub mod game;
pub mod project;
pub mod stats;

pub use allocation::{
    balancedness_residual, exact_shapley, shapley_det, shapley_stoch, Allocation, Method,
    SamplingPlan,
};
pub use distributions::{DurationDistribution, RngStream};
pub use error::{Error, Result};
pub use game::{
    CharacteristicFunction, Coalition, DeterministicProblem, SampleMatrix, StochasticProblem,
};
pub use project::{ActivityId, CostFunction, Project, ThresholdCost};
