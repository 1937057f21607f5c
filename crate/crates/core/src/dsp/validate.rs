//! Comparison of a pendant stream with a reference belt stream, and a
//! belt model for producing such references from a known waveform.

use super::filter::{design_butterworth, FilterSpec, SosFilter};
use super::stats::{moving_average, pearson_r};
use super::DspError;
use crate::patterns::BreathWaveform;
use crate::signal::Signal;

pub const BAND_LOW_HZ: f64 = 0.1;
pub const BAND_HIGH_HZ: f64 = 1.0;
pub const BAND_ORDER: usize = 3;
pub const SMOOTH_S: f64 = 0.5;

pub const BELT_TAU_RISE_S: f64 = 0.1;
pub const BELT_TAU_FALL_S: f64 = 0.8;
pub const BELT_SATURATION: f64 = 0.3;

/// Band-pass 0.1–1 Hz (settled on the first sample) followed by a 0.5 s
/// moving average.
pub fn preprocess(values: &[f64], rate_hz: f64) -> Result<Vec<f64>, DspError> {
    let bp = design_butterworth(&FilterSpec::bandpass(
        BAND_LOW_HZ,
        BAND_HIGH_HZ,
        BAND_ORDER,
        rate_hz,
    ))?;
    let mut f = SosFilter::new(&bp);
    if let Some(&x0) = values.first() {
        f.settle(x0);
    }
    let filtered = f.process(values);
    Ok(moving_average(&filtered, smooth_len(rate_hz)))
}

pub(crate) fn smooth_len(rate_hz: f64) -> usize {
    ((SMOOTH_S * rate_hz).round() as usize).max(1)
}

pub fn validate_against_reference(
    pendant: &[f64],
    reference: &[f64],
    rate_hz: f64,
) -> Result<f64, DspError> {
    if pendant.len() != reference.len() {
        return Err(DspError::LengthMismatch(pendant.len(), reference.len()));
    }
    let a = preprocess(pendant, rate_hz)?;
    let b = preprocess(reference, rate_hz)?;
    pearson_r(&a, &b)
}

/// Stretch-belt model: the rubber follows inhalation quickly but relaxes
/// slowly, then compresses mildly at large stretch.
pub fn simulate_belt(waveform: &BreathWaveform) -> Signal {
    let dt = 1.0 / waveform.sample_rate_hz;
    let k_rise = 1.0 - (-dt / BELT_TAU_RISE_S).exp();
    let k_fall = 1.0 - (-dt / BELT_TAU_FALL_S).exp();
    let mut lag = 0.0;
    let values = waveform
        .samples
        .iter()
        .map(|&x| {
            let k = if x > lag { k_rise } else { k_fall };
            lag += (x - lag) * k;
            lag / (1.0 + BELT_SATURATION * lag)
        })
        .collect();
    Signal::new(waveform.sample_rate_hz, values)
}
