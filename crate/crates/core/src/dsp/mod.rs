//! Respiration signal chain: Butterworth filtering, breathing extraction
//! from the pitch carrier, normalization, resampling, peak detection and
//! validation against a reference belt.

use thiserror::Error;

pub mod extract;
pub mod filter;
pub mod peaks;
pub mod stats;
pub mod validate;

pub use extract::{
    extract_breathing, normalize, resample, EpochConfig, Extractor, Normalizer, Resampler,
};
pub use filter::{design_butterworth, filter_stream, Biquad, FilterKind, FilterSpec, SosCascade, SosFilter};
pub use peaks::{detect_peaks, Extremum, PeakList};
pub use stats::pearson_r;
pub use validate::{simulate_belt, validate_against_reference};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DspError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("insufficient data: need {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("no complete breathing cycle found")]
    NoPeaks,
    #[error("series is constant; correlation undefined")]
    DegenerateSeries,
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
}
