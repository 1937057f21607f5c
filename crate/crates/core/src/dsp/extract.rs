//! Real-time breathing extraction from the pitch carrier.
//!
//! Each stage is a small streaming state machine with a batch wrapper, so
//! the socket receiver and the offline tools run the same code.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::filter::{design_butterworth, FilterSpec, SosFilter};
use super::DspError;
use crate::signal::Signal;

pub const CARRIER_RATE_HZ: f64 = 24.0;
pub const EXTRACT_LOWPASS_HZ: f64 = 1.0;
pub const EXTRACT_LOWPASS_ORDER: usize = 3;
pub const NORMALIZE_WINDOW_S: f64 = 30.0;
pub const RANGE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochConfig {
    pub epoch_s: f64,
    pub slide_s: f64,
}

impl Default for EpochConfig {
    fn default() -> Self {
        EpochConfig {
            epoch_s: 0.5,
            slide_s: 0.125,
        }
    }
}

impl EpochConfig {
    pub fn validate(&self) -> Result<(), DspError> {
        if !(self.slide_s > 0.0 && self.slide_s <= self.epoch_s && self.epoch_s.is_finite()) {
            return Err(DspError::InvalidSpec(format!(
                "epoch config needs 0 < slide ({}) <= epoch ({})",
                self.slide_s, self.epoch_s
            )));
        }
        Ok(())
    }

    fn lengths(&self, rate_hz: f64) -> Result<(usize, usize), DspError> {
        self.validate()?;
        let epoch = (self.epoch_s * rate_hz).round() as usize;
        let slide = (self.slide_s * rate_hz).round() as usize;
        if slide == 0 || epoch < slide {
            return Err(DspError::InvalidSpec(format!(
                "epoch config too short for {rate_hz} Hz input"
            )));
        }
        Ok((epoch, slide))
    }
}

/// Low-pass, then sliding epochs whose means form the output stream. The
/// filter starts settled on the first sample.
///
/// Output sample `k` is the mean of the epoch ending at input sample
/// `epoch_len - 1 + k * slide_len` and carries that sample's timestamp.
#[derive(Debug, Clone)]
pub struct Extractor {
    lowpass: SosFilter,
    epoch_len: usize,
    slide_len: usize,
    window: VecDeque<f64>,
    until_next: usize,
    seen: usize,
    rate_hz: f64,
}

impl Extractor {
    pub fn new(rate_hz: f64, epoch: EpochConfig) -> Result<Self, DspError> {
        let (epoch_len, slide_len) = epoch.lengths(rate_hz)?;
        let lp = design_butterworth(&FilterSpec::lowpass(
            EXTRACT_LOWPASS_HZ,
            EXTRACT_LOWPASS_ORDER,
            rate_hz,
        ))?;
        Ok(Extractor {
            lowpass: SosFilter::new(&lp),
            epoch_len,
            slide_len,
            window: VecDeque::with_capacity(epoch_len),
            until_next: epoch_len,
            seen: 0,
            rate_hz,
        })
    }

    pub fn output_rate_hz(&self) -> f64 {
        self.rate_hz / self.slide_len as f64
    }

    /// Input-sample offset of the first output.
    pub fn first_output_index(&self) -> usize {
        self.epoch_len - 1
    }

    /// Feeds one sample; returns an epoch mean when one completes.
    pub fn push(&mut self, x: f64) -> Option<f64> {
        if self.seen == 0 {
            self.lowpass.settle(x);
        }
        let y = self.lowpass.step(x);
        if self.window.len() == self.epoch_len {
            self.window.pop_front();
        }
        self.window.push_back(y);
        self.seen += 1;
        self.until_next -= 1;
        if self.until_next == 0 {
            self.until_next = self.slide_len;
            Some(self.window.iter().sum::<f64>() / self.epoch_len as f64)
        } else {
            None
        }
    }
}

/// Batch extraction of a whole pitch stream.
pub fn extract_breathing(pitch: &Signal, epoch: EpochConfig) -> Result<Signal, DspError> {
    let mut ex = Extractor::new(pitch.rate_hz, epoch)?;
    if pitch.len() < ex.epoch_len {
        return Err(DspError::InsufficientData {
            needed: ex.epoch_len,
            got: pitch.len(),
        });
    }
    let out: Vec<f64> = pitch.values.iter().filter_map(|&x| ex.push(x)).collect();
    Ok(Signal {
        rate_hz: ex.output_rate_hz(),
        t0_s: pitch.time_at(ex.first_output_index()),
        values: out,
    })
}

/// Sliding min-max normalization over a trailing window (grows from the
/// start until full). A range below [`RANGE_FLOOR`] maps to 0.5.
#[derive(Debug, Clone)]
pub struct Normalizer {
    window: usize,
    index: usize,
    // Monotonic deques of (index, value).
    mins: VecDeque<(usize, f64)>,
    maxs: VecDeque<(usize, f64)>,
}

impl Normalizer {
    pub fn new(rate_hz: f64, window_s: f64) -> Self {
        Normalizer {
            window: ((window_s * rate_hz).round() as usize).max(1),
            index: 0,
            mins: VecDeque::new(),
            maxs: VecDeque::new(),
        }
    }

    pub fn push(&mut self, x: f64) -> f64 {
        let i = self.index;
        self.index += 1;
        while self.mins.back().is_some_and(|&(_, v)| v >= x) {
            self.mins.pop_back();
        }
        self.mins.push_back((i, x));
        while self.maxs.back().is_some_and(|&(_, v)| v <= x) {
            self.maxs.pop_back();
        }
        self.maxs.push_back((i, x));
        let oldest = (i + 1).saturating_sub(self.window);
        while self.mins.front().is_some_and(|&(j, _)| j < oldest) {
            self.mins.pop_front();
        }
        while self.maxs.front().is_some_and(|&(j, _)| j < oldest) {
            self.maxs.pop_front();
        }
        let lo = self.mins.front().expect("current sample").1;
        let hi = self.maxs.front().expect("current sample").1;
        let range = hi - lo;
        if range < RANGE_FLOOR {
            0.5
        } else {
            ((x - lo) / range).clamp(0.0, 1.0)
        }
    }
}

pub fn normalize(raw: &Signal) -> Signal {
    let mut n = Normalizer::new(raw.rate_hz, NORMALIZE_WINDOW_S);
    Signal {
        rate_hz: raw.rate_hz,
        t0_s: raw.t0_s,
        values: raw.values.iter().map(|&x| n.push(x)).collect(),
    }
}

/// Linear-interpolation resampler onto a uniform grid anchored at the
/// first input sample. Never extrapolates past the newest input.
#[derive(Debug, Clone)]
pub struct Resampler {
    in_rate: f64,
    out_rate: f64,
    n_in: u64,
    prev: Option<f64>,
    next_out: u64,
}

impl Resampler {
    pub fn new(in_rate: f64, out_rate: f64) -> Result<Self, DspError> {
        if !(in_rate > 0.0 && out_rate > 0.0 && in_rate.is_finite() && out_rate.is_finite()) {
            return Err(DspError::InvalidSpec(format!(
                "resample rates must be > 0 (got {in_rate} -> {out_rate})"
            )));
        }
        Ok(Resampler {
            in_rate,
            out_rate,
            n_in: 0,
            prev: None,
            next_out: 0,
        })
    }

    /// Output grid time (relative to the first input) of output `j`, in input samples.
    fn pos(&self, j: u64) -> f64 {
        j as f64 * self.in_rate / self.out_rate
    }

    /// Feeds one input sample, appending every output it completes.
    pub fn push(&mut self, x: f64, out: &mut Vec<f64>) {
        let idx = self.n_in;
        self.n_in += 1;
        const EPS: f64 = 1e-9;
        loop {
            let p = self.pos(self.next_out);
            if p > idx as f64 + EPS {
                break;
            }
            let v = match self.prev {
                Some(prev) if p < idx as f64 - EPS => {
                    let frac = p - (idx - 1) as f64;
                    prev + (x - prev) * frac
                }
                _ => x,
            };
            out.push(v);
            self.next_out += 1;
        }
        self.prev = Some(x);
    }
}

pub fn resample(stream: &Signal, target_hz: f64) -> Result<Signal, DspError> {
    if (stream.rate_hz - target_hz).abs() < 1e-12 {
        return Ok(stream.clone());
    }
    let mut r = Resampler::new(stream.rate_hz, target_hz)?;
    let mut out = Vec::new();
    for &x in &stream.values {
        r.push(x, &mut out);
    }
    Ok(Signal {
        rate_hz: target_hz,
        t0_s: stream.t0_s,
        values: out,
    })
}
