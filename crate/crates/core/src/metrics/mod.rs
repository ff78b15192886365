//! Scoring math: Gaussian fitting, Fréchet audio distance, forced-choice
//! classification and confidence statistics.

pub mod choice;
pub mod confidence;
pub mod fad;
pub mod gaussian;

use thiserror::Error;

pub use choice::{candidate_set, forced_choice, select_distractors, ForcedChoiceResult, DEFAULT_SCALE};
pub use confidence::{summarize_confidence, ConfidenceSummary};
pub use fad::{
    categorize_fad, fad_between, frechet_distance, frechet_distance_with, FadCategory, FadMode,
    FadResult, Stabilize, DEFAULT_EPS,
};
pub use gaussian::{fit_gaussian, GaussianStats};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("need at least 2 vectors, got {0}")]
    TooFewVectors(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("non-finite value in input")]
    NonFinite,
    #[error("covariance is not symmetric")]
    NotSymmetric,
    #[error("covariance is not positive semi-definite")]
    NotPsd,
    #[error("eigendecomposition did not converge")]
    NumericalFailure,
    #[error("stabilization eps must be finite and >= 0, got {0}")]
    InvalidEps(f64),
    #[error("FAD score must be >= 0, got {0}")]
    NegativeScore(f64),
    #[error("universe too small: need {needed} labels, have {got}")]
    UniverseTooSmall { needed: usize, got: usize },
    #[error("target {0:?} must appear exactly once among the labels")]
    UnknownTarget(String),
    #[error("expected 5 candidates, got {0}")]
    BadCandidateCount(usize),
    #[error("zero-length embedding vector")]
    ZeroVector,
    #[error("softmax scale must be positive, got {0}")]
    InvalidScale(f64),
    #[error("no values to summarize")]
    EmptyInput,
    #[error("confidence {0} outside [0, 1]")]
    OutOfRange(f64),
}
