//! Butterworth design as cascaded second-order sections, and a streaming
//! transposed direct-form II runner.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::DspError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Lowpass,
    Highpass,
    Bandpass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub cutoffs_hz: Vec<f64>,
    pub order: usize,
    pub sample_rate_hz: f64,
}

impl FilterSpec {
    pub fn lowpass(cutoff_hz: f64, order: usize, sample_rate_hz: f64) -> Self {
        FilterSpec {
            kind: FilterKind::Lowpass,
            cutoffs_hz: vec![cutoff_hz],
            order,
            sample_rate_hz,
        }
    }

    pub fn highpass(cutoff_hz: f64, order: usize, sample_rate_hz: f64) -> Self {
        FilterSpec {
            kind: FilterKind::Highpass,
            cutoffs_hz: vec![cutoff_hz],
            order,
            sample_rate_hz,
        }
    }

    pub fn bandpass(low_hz: f64, high_hz: f64, order: usize, sample_rate_hz: f64) -> Self {
        FilterSpec {
            kind: FilterKind::Bandpass,
            cutoffs_hz: vec![low_hz, high_hz],
            order,
            sample_rate_hz,
        }
    }

    pub fn validate(&self) -> Result<(), DspError> {
        let fs = self.sample_rate_hz;
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(DspError::InvalidSpec(format!("sample rate {fs} Hz")));
        }
        if self.order == 0 {
            return Err(DspError::InvalidSpec("order must be >= 1".into()));
        }
        let expected = match self.kind {
            FilterKind::Bandpass => 2,
            _ => 1,
        };
        if self.cutoffs_hz.len() != expected {
            return Err(DspError::InvalidSpec(format!(
                "{:?} takes {expected} cutoff(s), got {}",
                self.kind,
                self.cutoffs_hz.len()
            )));
        }
        for &c in &self.cutoffs_hz {
            if !(c > 0.0 && c < fs / 2.0) {
                return Err(DspError::InvalidSpec(format!(
                    "cutoff {c} Hz outside (0, {}) Hz",
                    fs / 2.0
                )));
            }
        }
        if self.kind == FilterKind::Bandpass && self.cutoffs_hz[0] >= self.cutoffs_hz[1] {
            return Err(DspError::InvalidSpec("bandpass needs low < high".into()));
        }
        Ok(())
    }
}

/// Normalized biquad: `a0` is implicitly 1. First-order sections have
/// `b[2] == a[1] == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Complex response at `freq_hz`, as (re, im).
    pub fn response(&self, freq_hz: f64, sample_rate_hz: f64) -> (f64, f64) {
        let w = 2.0 * PI * freq_hz / sample_rate_hz;
        // z^-1 = e^{-jw}
        let (c1, s1) = (w.cos(), -w.sin());
        let (c2, s2) = ((2.0 * w).cos(), -(2.0 * w).sin());
        let num = (self.b[0] + self.b[1] * c1 + self.b[2] * c2, self.b[1] * s1 + self.b[2] * s2);
        let den = (1.0 + self.a[0] * c1 + self.a[1] * c2, self.a[0] * s1 + self.a[1] * s2);
        let d = den.0 * den.0 + den.1 * den.1;
        (
            (num.0 * den.0 + num.1 * den.1) / d,
            (num.1 * den.0 - num.0 * den.1) / d,
        )
    }
}

/// A designed cascade, kept with the rate it was designed for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SosCascade {
    pub sample_rate_hz: f64,
    pub sections: Vec<Biquad>,
}

impl SosCascade {
    pub fn gain_at(&self, freq_hz: f64) -> f64 {
        let (mut re, mut im) = (1.0, 0.0);
        for s in &self.sections {
            let (r, i) = s.response(freq_hz, self.sample_rate_hz);
            (re, im) = (re * r - im * i, re * i + im * r);
        }
        (re * re + im * im).sqrt()
    }

    pub fn gain_db_at(&self, freq_hz: f64) -> f64 {
        20.0 * self.gain_at(freq_hz).log10()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }
}

/// Butterworth design by bilinear transform with the cutoff prewarped.
/// Bandpass is a highpass at the low edge cascaded with a lowpass at the
/// high edge, each of the given order.
pub fn design_butterworth(spec: &FilterSpec) -> Result<SosCascade, DspError> {
    spec.validate()?;
    let fs = spec.sample_rate_hz;
    let sections = match spec.kind {
        FilterKind::Lowpass => prototype(spec.order, spec.cutoffs_hz[0], fs, false),
        FilterKind::Highpass => prototype(spec.order, spec.cutoffs_hz[0], fs, true),
        FilterKind::Bandpass => {
            let mut s = prototype(spec.order, spec.cutoffs_hz[0], fs, true);
            s.extend(prototype(spec.order, spec.cutoffs_hz[1], fs, false));
            s
        }
    };
    Ok(SosCascade {
        sample_rate_hz: fs,
        sections,
    })
}

fn prototype(order: usize, cutoff_hz: f64, fs: f64, highpass: bool) -> Vec<Biquad> {
    let k = (PI * cutoff_hz / fs).tan();
    let k2 = k * k;
    let mut out = Vec::with_capacity(order.div_ceil(2));
    for i in 0..order / 2 {
        // Analog section s^2 + a s + 1, poles at angle (2i+1)pi/(2N) from the jw axis.
        let theta = PI * (2 * i + 1) as f64 / (2 * order) as f64;
        let a = 2.0 * theta.sin();
        let a0 = 1.0 + a * k + k2;
        let den = [(2.0 * k2 - 2.0) / a0, (1.0 - a * k + k2) / a0];
        let b = if highpass {
            [1.0 / a0, -2.0 / a0, 1.0 / a0]
        } else {
            [k2 / a0, 2.0 * k2 / a0, k2 / a0]
        };
        out.push(Biquad { b, a: den });
    }
    if order % 2 == 1 {
        let a0 = 1.0 + k;
        let b = if highpass {
            [1.0 / a0, -1.0 / a0, 0.0]
        } else {
            [k / a0, k / a0, 0.0]
        };
        out.push(Biquad {
            b,
            a: [(k - 1.0) / a0, 0.0],
        });
    }
    out
}

/// Streaming runner; state persists between `process` calls, so any
/// chunking of the input produces identical output.
#[derive(Debug, Clone)]
pub struct SosFilter {
    sections: Vec<Biquad>,
    state: Vec<[f64; 2]>,
}

impl SosFilter {
    pub fn new(cascade: &SosCascade) -> Self {
        SosFilter {
            sections: cascade.sections.clone(),
            state: vec![[0.0; 2]; cascade.sections.len()],
        }
    }

    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|s| *s = [0.0; 2]);
    }

    /// Sets the state to the steady state for a constant input `x`, so a
    /// stream starting at `x` produces no start-up transient.
    pub fn settle(&mut self, x: f64) {
        let mut u = x;
        for (s, z) in self.sections.iter().zip(self.state.iter_mut()) {
            let den = 1.0 + s.a[0] + s.a[1];
            let y = if den.abs() > f64::EPSILON {
                (s.b[0] + s.b[1] + s.b[2]) / den * u
            } else {
                0.0
            };
            z[1] = s.b[2] * u - s.a[1] * y;
            z[0] = s.b[1] * u - s.a[0] * y + z[1];
            u = y;
        }
    }

    #[inline]
    pub fn step(&mut self, x: f64) -> f64 {
        let mut v = x;
        for (s, z) in self.sections.iter().zip(self.state.iter_mut()) {
            let y = s.b[0] * v + z[0];
            z[0] = s.b[1] * v - s.a[0] * y + z[1];
            z[1] = s.b[2] * v - s.a[1] * y;
            v = y;
        }
        v
    }

    pub fn process(&mut self, input: &[f64]) -> Vec<f64> {
        input.iter().map(|&x| self.step(x)).collect()
    }
}

/// Filters a whole buffer from zero state.
pub fn filter_stream(cascade: &SosCascade, samples: &[f64]) -> Vec<f64> {
    SosFilter::new(cascade).process(samples)
}
