//! Frame-drop patterns, replacement methods and frame weights applied to
//! score matrices.

mod filter;
mod mask;
mod replace;
mod spec;

use thiserror::Error;

pub use filter::{design_interp_filter, InterpFilter, FILTER_TAPS};
pub use mask::{
    adjust_mask_to_rate, mask_landmark, mask_or, mask_random, mask_regular, mask_subtract,
    FrameMask, LandmarkRegime,
};
pub use replace::{
    apply_replacement, apply_weights, temporal_means, weighted, Replacement, WeightVector,
};
pub use spec::{mix_seed, FramePlan, PatternTerm, RandomCount, StrategySpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrategyError {
    #[error("invalid pattern: {0}")]
    InvalidPattern(String),
    #[error("shape mismatch: expected {expected} frames, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("invalid weight {0}")]
    InvalidWeight(f64),
    #[error("bad strategy string: {0}")]
    Parse(String),
}
