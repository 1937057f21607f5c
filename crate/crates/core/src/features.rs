//! Breathing features measured from a stream and its extrema.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::peaks::{Kind, PeakList};
use crate::dsp::stats::{mean, std_dev};
use crate::signal::Signal;

/// A sample belongs to a hold while its first difference stays below this
/// fraction of the steepest first difference between the neighbouring
/// extrema. Relative to slope rather than range so a slow, smooth crest is
/// not read as a hold.
pub const HOLD_SLOPE_FRAC: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("need at least 2 peaks, got {0}")]
    InsufficientCycles(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreathFeatures {
    pub pace_bpm: f64,
    /// Mean exhale minus mean inhale, seconds.
    pub inout_diff_s: f64,
    pub hold_in_s: f64,
    pub hold_out_s: f64,
    pub amplitude_mean: f64,
    /// Coefficient of variation of cycle durations.
    pub variability: f64,
}

#[derive(Debug, Clone, Copy)]
struct Span {
    kind: Kind,
    left: usize,
    right: usize,
    value: f64,
}

fn index_of(stream: &Signal, t_s: f64) -> usize {
    (((t_s - stream.t0_s) * stream.rate_hz).round().max(0.0) as usize).min(stream.len() - 1)
}

pub fn features_from_signal(stream: &Signal, peaks: &PeakList) -> Result<BreathFeatures, FeatureError> {
    if peaks.peaks.len() < 2 || stream.is_empty() {
        return Err(FeatureError::InsufficientCycles(peaks.peaks.len()));
    }
    let x = &stream.values;
    let n = x.len();
    let rate = stream.rate_hz;

    let peak_t: Vec<f64> = peaks.peaks.iter().map(|e| e.t_s).collect();
    let cycles: Vec<f64> = peak_t.windows(2).map(|w| w[1] - w[0]).collect();
    let pace_bpm = 60.0 / mean(&cycles);
    let variability = std_dev(&cycles) / mean(&cycles);

    let merged = peaks.merged();
    let at: Vec<usize> = merged.iter().map(|(_, e)| index_of(stream, e.t_s)).collect();

    let spans: Vec<Span> = merged
        .into_iter()
        .enumerate()
        .map(|(k, (kind, e))| {
            let a = if k > 0 { at[k - 1] } else { 0 };
            let b = if k + 1 < at.len() { at[k + 1] } else { n - 1 };
            let at = at[k];
            let steepest = (a..b).map(|i| (x[i + 1] - x[i]).abs()).fold(0.0, f64::max);
            let flat = HOLD_SLOPE_FRAC * steepest;
            let mut left = at;
            while left > 0 && (x[left] - x[left - 1]).abs() < flat {
                left -= 1;
            }
            let mut right = at;
            while right + 1 < n && (x[right + 1] - x[right]).abs() < flat {
                right += 1;
            }
            Span {
                kind,
                left,
                right,
                value: e.value,
            }
        })
        .collect();

    let hold_of = |kind: Kind| {
        let interior: Vec<f64> = spans
            .iter()
            .filter(|s| s.kind == kind && s.left > 0 && s.right + 1 < n)
            .map(|s| (s.right - s.left) as f64 / rate)
            .collect();
        if interior.is_empty() {
            0.0
        } else {
            mean(&interior)
        }
    };

    let mut inhale = Vec::new();
    let mut exhale = Vec::new();
    let mut amplitude = Vec::new();
    for w in spans.windows(2) {
        let (a, b) = (w[0], w[1]);
        let secs = b.left.saturating_sub(a.right) as f64 / rate;
        match a.kind {
            Kind::Trough => {
                inhale.push(secs);
                amplitude.push(b.value - a.value);
            }
            Kind::Peak => exhale.push(secs),
        }
    }
    if amplitude.is_empty() {
        // Stream opens on a peak with no trough before it; use the one after.
        amplitude.extend(spans.windows(2).map(|w| (w[0].value - w[1].value).abs()));
    }
    let inout_diff_s = match (inhale.is_empty(), exhale.is_empty()) {
        (false, false) => mean(&exhale) - mean(&inhale),
        _ => 0.0,
    };

    Ok(BreathFeatures {
        pace_bpm,
        inout_diff_s,
        hold_in_s: hold_of(Kind::Peak),
        hold_out_s: hold_of(Kind::Trough),
        amplitude_mean: if amplitude.is_empty() { 0.0 } else { mean(&amplitude).clamp(0.0, 1.0) },
        variability,
    })
}

