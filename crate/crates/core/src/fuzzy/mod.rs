//! Mamdani fuzzy controller that picks a question difficulty level from a
//! learner's education, age and previous standing.
//!
//! Inference uses min for AND and implication, max for aggregation and the
//! centroid for defuzzification. The centroid is computed exactly from the
//! vertices of the aggregated piecewise-linear shape.

mod membership;
mod output;
mod system;
mod variable;

pub use membership::{MembershipFunction, MembershipSpec};
pub use output::{defuzzify_centroid, AggregatedOutput};
pub use system::{
    free_inputs, round_level, write_surface_csv, CrispInput, FuzzySystem, Inference, InputVar,
    Rule, SurfacePoint, DEFAULT_CONFIG, LEVEL_COUNT,
};
pub use variable::{LinguisticVariable, Term, Universe};

#[derive(Debug, thiserror::Error)]
pub enum FuzzyError {
    /// No rule fired. Unreachable for a system whose inputs are covered.
    #[error("aggregated output is identically zero")]
    ZeroActivation,
    #[error("invalid membership function: {0}")]
    InvalidMembership(String),
    #[error("invalid fuzzy system: {0}")]
    InvalidSystem(String),
    #[error("fuzzy config: {0}")]
    Config(String),
}
