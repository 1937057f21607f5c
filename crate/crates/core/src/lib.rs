//! Breathing biofeedback toolkit.
//!
//! Synthesizes breathing patterns from a trait lexicon, recovers breathing
//! from IMU orientation, encodes it for visual, audio and haptic feedback,
//! streams it between paired endpoints and scores mimic trials.

pub mod dsp;
pub mod encoders;
pub mod features;
pub mod imu;
pub mod patterns;
pub mod session;
pub mod signal;
pub mod wire;

pub use dsp::{detect_peaks, pearson_r, DspError, Extremum, PeakList};
pub use encoders::{EncodeError, ModalityFrame};
pub use features::{features_from_signal, BreathFeatures, FeatureError};
pub use imu::{fuse_pitch, ImuError, ImuSample, Quaternion, Vec3};
pub use patterns::{compose, synthesize, BreathWaveform, CanonicalPattern, PatternError, PatternSpec, TraitId};
pub use session::{build_schedule, run_trial, Modality, SessionError, Trial, TrialResult, TrialSchedule};
pub use signal::{Format, Signal, SignalError};
pub use wire::{Frame, FrameType, JsonFrame, WireError};
