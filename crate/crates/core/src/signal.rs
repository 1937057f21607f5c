//! Uniformly sampled scalar streams and their text formats.
//!
//! Two interchangeable encodings are supported: CSV with a `t_s,value`
//! header, and JSONL with one `{"t": .., "v": ..}` object per line.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(csv::Error),
    #[error("json on line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("stream has {0} samples, need at least 2 to infer a rate")]
    TooShort(usize),
    #[error("stream is not uniformly sampled (step {step} s deviates from {expected} s)")]
    NonUniform { step: f64, expected: f64 },
}

impl From<csv::Error> for SignalError {
    fn from(e: csv::Error) -> Self {
        if !e.is_io_error() {
            return SignalError::Csv(e);
        }
        match e.into_kind() {
            csv::ErrorKind::Io(io) => SignalError::Io(io),
            _ => unreachable!("is_io_error"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Jsonl,
}

/// A uniformly sampled stream starting at `t0_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub rate_hz: f64,
    pub t0_s: f64,
    pub values: Vec<f64>,
}

impl Signal {
    pub fn new(rate_hz: f64, values: Vec<f64>) -> Self {
        Signal {
            rate_hz,
            t0_s: 0.0,
            values,
        }
    }

    pub fn with_start(mut self, t0_s: f64) -> Self {
        self.t0_s = t0_s;
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time_at(&self, i: usize) -> f64 {
        self.t0_s + i as f64 / self.rate_hz
    }

    pub fn duration_s(&self) -> f64 {
        self.values.len() as f64 / self.rate_hz
    }

    /// Samples `[start_s, start_s + len_s)` relative to the stream start.
    pub fn slice_s(&self, start_s: f64, len_s: f64) -> Signal {
        let a = ((start_s * self.rate_hz).round() as usize).min(self.len());
        let b = (((start_s + len_s) * self.rate_hz).round() as usize).min(self.len());
        Signal {
            rate_hz: self.rate_hz,
            t0_s: self.time_at(a),
            values: self.values[a..b].to_vec(),
        }
    }

    pub fn write<W: Write>(&self, out: W, format: Format) -> Result<(), SignalError> {
        match format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(out);
                w.write_record(["t_s", "value"])?;
                for (i, v) in self.values.iter().enumerate() {
                    w.write_record([self.time_at(i).to_string(), v.to_string()])?;
                }
                w.flush()?;
            }
            Format::Jsonl => {
                let mut out = std::io::BufWriter::new(out);
                for (i, &v) in self.values.iter().enumerate() {
                    let rec = JsonSample {
                        t: self.time_at(i),
                        v,
                    };
                    serde_json::to_writer(&mut out, &rec).map_err(std::io::Error::from)?;
                    out.write_all(b"\n")?;
                }
                out.flush()?;
            }
        }
        Ok(())
    }

    pub fn to_text(&self, format: Format) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf, format).expect("writing to memory");
        String::from_utf8(buf).expect("formats are utf-8")
    }

    /// Reads either format, detected from the first non-blank character.
    /// The rate is inferred from the timestamps.
    pub fn read<R: BufRead>(input: R) -> Result<Signal, SignalError> {
        let samples = read_timed(input)?;
        from_timed(&samples)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonSample {
    t: f64,
    v: f64,
}

#[derive(Debug, Deserialize)]
struct CsvSample {
    t_s: f64,
    value: f64,
}

/// Raw `(t_s, value)` pairs from either text format.
pub fn read_timed<R: BufRead>(mut input: R) -> Result<Vec<(f64, f64)>, SignalError> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let is_json = text.trim_start().starts_with('{');
    if is_json {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str::<JsonSample>(l)
                    .map(|s| (s.t, s.v))
                    .map_err(|source| SignalError::Json { line: i + 1, source })
            })
            .collect()
    } else {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        rdr.deserialize::<CsvSample>()
            .map(|r| r.map(|s| (s.t_s, s.value)).map_err(SignalError::from))
            .collect()
    }
}

fn from_timed(samples: &[(f64, f64)]) -> Result<Signal, SignalError> {
    if samples.len() < 2 {
        return Err(SignalError::TooShort(samples.len()));
    }
    let mut steps: Vec<f64> = samples.windows(2).map(|w| w[1].0 - w[0].0).collect();
    steps.sort_by(f64::total_cmp);
    let step = steps[steps.len() / 2];
    if step <= 0.0 {
        return Err(SignalError::NonUniform {
            step,
            expected: step,
        });
    }
    for w in samples.windows(2) {
        let d = w[1].0 - w[0].0;
        if (d - step).abs() > 0.25 * step {
            return Err(SignalError::NonUniform { step: d, expected: step });
        }
    }
    // Text timestamps are rounded; snap the rate to 1e-6 Hz.
    let rate = ((1.0 / step) * 1e6).round() / 1e6;
    Ok(Signal {
        rate_hz: rate,
        t0_s: samples[0].0,
        values: samples.iter().map(|s| s.1).collect(),
    })
}
