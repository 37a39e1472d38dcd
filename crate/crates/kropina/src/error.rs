//! Crate-wide error type.
//!
//! Everything that can go wrong, from a parse error in a component
//! expression up to a disagreement between the two curvature routes, is a
//! variant here so that callers (and the CLI) see one `Result` type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed source text in the expression grammar.
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },

    /// Identifier that is neither a function name nor a chart coordinate.
    #[error("unknown identifier `{name}` at position {position}")]
    UnknownIdentifier { name: String, position: usize },

    /// Evaluation left the domain of a subexpression (1/0, ln of a
    /// non-positive value, sqrt of a negative value, overflow).
    #[error("domain error in `{subexpression}`: {reason}")]
    Domain {
        subexpression: String,
        reason: String,
    },

    /// Chart-level misuse: wrong dimension, mismatched charts, bad bounds.
    #[error("chart error: {0}")]
    Chart(String),

    /// Structural problem with tensor components (counts, symmetry).
    #[error("shape error: {0}")]
    Shape(String),

    /// Metric evaluation produced a non-positive eigenvalue.
    #[error("metric not positive definite at {point:?}: eigenvalue {eigenvalue:.6e}")]
    NotPositiveDefinite { point: Vec<f64>, eigenvalue: f64 },

    /// Metric too close to singular for the residual budgets to mean anything.
    #[error("metric ill-conditioned at {point:?}: condition number {condition:.3e}")]
    IllConditioned { point: Vec<f64>, condition: f64 },

    /// Direction too close to the cone where the metric degenerates
    /// (the covector contraction with y is not positive enough).
    #[error(
        "singular direction: alignment {alignment:.3e} is below the threshold {threshold:.1e}"
    )]
    SingularDirection { alignment: f64, threshold: f64 },

    /// Navigation vector field drifted away from unit length.
    #[error("unit-length violation at {point:?}: | |W| - 1 | = {deviation:.3e}")]
    UnitLength { point: Vec<f64>, deviation: f64 },

    /// An operation that requires a Killing field was given something else.
    #[error(
        "vector field is not Killing: max |R_ij| = {max_residual:.3e} exceeds {tolerance:.1e}"
    )]
    NotKilling { max_residual: f64, tolerance: f64 },

    /// Finite-difference cross-check at half step disagreed too much.
    #[error(
        "finite-difference step failure: half-step disagreement {disagreement:.3e} exceeds {limit:.1e}"
    )]
    StepSize { disagreement: f64, limit: f64 },

    /// The flag-curvature model tensor vanished; nothing to fit against.
    #[error("degenerate flag-curvature model: norm {norm:.3e} below 1e-12")]
    DegenerateModel { norm: f64 },

    /// The two independent classification routes disagree. This signals a
    /// bug in the toolkit, never a property of the input.
    #[error("inconsistent classification verdicts: {0}")]
    InconsistentVerdict(String),

    /// Invalid sampling or tolerance configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Sampling could not find admissible points or directions.
    #[error("sampling error: {0}")]
    Sampling(String),

    /// Problem reading or validating a manifold description file.
    #[error("manifold file error: {0}")]
    SpecFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
