//! Randomized trial schedules and mimic-trial scoring.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::validate::preprocess;
use crate::dsp::{detect_peaks, pearson_r, DspError};
use crate::features::{features_from_signal, BreathFeatures};
use crate::patterns::{compose, parse_traits, synthesize, CanonicalPattern, PatternError, PatternSpec, MIN_SYNTH_RATE_HZ};
use crate::signal::Signal;

pub const TRIAL_S: f64 = 40.0;
pub const MAX_LAG_S: f64 = 2.0;
pub const TRIAL_START_PREFIX: &str = "trial_start:";
pub const TRIAL_END: &str = "trial_end";

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("input covers {got_s:.2} s, trial needs {needed_s:.2} s")]
    InsufficientData { needed_s: f64, got_s: f64 },
    #[error("input rate {0} Hz is below 8 Hz")]
    RateTooLow(f64),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error("unknown modality {0:?}")]
    UnknownModality(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad trial marker {0:?}")]
    BadMarker(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Visual,
    Audio,
    Haptic,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Visual, Modality::Audio, Modality::Haptic];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Visual => "visual",
            Modality::Audio => "audio",
            Modality::Haptic => "haptic",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = SessionError;
    fn from_str(s: &str) -> Result<Self, SessionError> {
        Modality::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| SessionError::UnknownModality(s.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Trial {
    pub pattern: CanonicalPattern,
    pub modality: Modality,
}

impl Trial {
    /// Marker label that opens this trial on the wire.
    pub fn start_label(&self) -> String {
        format!("trial_start:pattern={};modality={}", self.pattern.name(), self.modality)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSchedule {
    pub seed: u64,
    pub trials: Vec<Trial>,
}

impl TrialSchedule {
    /// Synthesis seed for trial `index` (matters only for Variable).
    pub fn trial_seed(&self, index: usize) -> u64 {
        self.seed.wrapping_add(index as u64)
    }

    /// CSV with header `index,pattern,modality`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SessionError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "pattern", "modality"])?;
        for (i, t) in self.trials.iter().enumerate() {
            w.write_record([i.to_string(), t.pattern.name().to_owned(), t.modality.to_string()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Start marker for trial `index`, carrying its index and seed.
    pub fn start_label(&self, index: usize) -> String {
        format!("{};index={index};seed={}", self.trials[index].start_label(), self.trial_seed(index))
    }

    /// The schedule's targets back to back, each `trial_s` long.
    pub fn synthesize_targets(&self, trial_s: f64, rate_hz: f64) -> Result<Signal, SessionError> {
        let mut values = Vec::new();
        for (i, t) in self.trials.iter().enumerate() {
            values.extend(synthesize(&t.pattern.spec(), trial_s, rate_hz, self.trial_seed(i))?.samples);
        }
        Ok(Signal::new(rate_hz, values))
    }
}

/// Every (pattern, modality) pair once, shuffled by Fisher–Yates under `seed`.
pub fn build_schedule(seed: u64) -> TrialSchedule {
    let mut trials: Vec<Trial> = CanonicalPattern::ALL
        .iter()
        .flat_map(|&pattern| Modality::ALL.iter().map(move |&modality| Trial { pattern, modality }))
        .collect();
    trials.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    TrialSchedule { seed, trials }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub correlation: f64,
    /// Positive when the input trails the target.
    pub best_lag_s: f64,
    pub target_features: Option<BreathFeatures>,
    /// `None` when no breathing cycle could be found in the input.
    pub input_features: Option<BreathFeatures>,
    pub pace_delta_bpm: Option<f64>,
}

/// One line of a session results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub pattern: String,
    pub modality: Option<Modality>,
    pub seed: u64,
    #[serde(flatten)]
    pub result: TrialResult,
}

/// Highest Pearson r of `target[i]` against `input[i + lag]` over integer
/// lags within `max_lag` samples. Returns `(r, lag)`.
pub fn best_lag_correlation(target: &[f64], input: &[f64], max_lag: usize) -> Result<(f64, isize), DspError> {
    let n = target.len().min(input.len());
    let max_lag = max_lag.min(n.saturating_sub(3)) as isize;
    let mut best: Option<(f64, isize)> = None;
    for lag in -max_lag..=max_lag {
        let (t0, i0) = if lag >= 0 { (0, lag as usize) } else { ((-lag) as usize, 0) };
        let len = n - lag.unsigned_abs();
        match pearson_r(&target[t0..t0 + len], &input[i0..i0 + len]) {
            Ok(r) if best.is_none_or(|(b, _)| r > b) => best = Some((r, lag)),
            Ok(_) | Err(DspError::DegenerateSeries) => {}
            Err(e) => return Err(e),
        }
    }
    best.ok_or(DspError::DegenerateSeries)
}

fn features_of(s: &Signal) -> Option<BreathFeatures> {
    let peaks = detect_peaks(s).ok()?;
    features_from_signal(s, &peaks).ok()
}

/// Scores an input breathing stream against a target pattern synthesized
/// at the input's rate.
pub fn run_trial(target: &PatternSpec, input: &Signal, duration_s: f64, seed: u64) -> Result<TrialResult, SessionError> {
    let rate = input.rate_hz;
    if rate < MIN_SYNTH_RATE_HZ {
        return Err(SessionError::RateTooLow(rate));
    }
    let n = (duration_s * rate).round() as usize;
    if input.len() < n || n == 0 {
        return Err(SessionError::InsufficientData {
            needed_s: duration_s,
            got_s: input.duration_s(),
        });
    }
    let target_sig = synthesize(target, duration_s, rate, seed)?.to_signal();
    let input_sig = Signal::new(rate, input.values[..n].to_vec());
    let a = preprocess(&target_sig.values, rate)?;
    let b = preprocess(&input_sig.values, rate)?;
    let (correlation, lag) = best_lag_correlation(&a, &b, (MAX_LAG_S * rate).round() as usize)?;

    let target_features = features_of(&target_sig);
    let input_features = features_of(&input_sig);
    let pace_delta_bpm = match (&target_features, &input_features) {
        (Some(t), Some(i)) => Some(i.pace_bpm - t.pace_bpm),
        _ => None,
    };
    Ok(TrialResult {
        correlation,
        best_lag_s: lag as f64 / rate,
        target_features,
        input_features,
        pace_delta_bpm,
    })
}

/// Parsed `trial_start:pattern=P;modality=M[;index=I][;seed=S]` marker.
/// `pattern` accepts any compatible trait combination.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialStart {
    pub pattern_name: String,
    pub pattern: PatternSpec,
    pub modality: Option<Modality>,
    pub index: Option<usize>,
    pub seed: u64,
}

pub fn parse_trial_start(label: &str) -> Result<TrialStart, SessionError> {
    let bad = || SessionError::BadMarker(label.to_owned());
    let body = label.strip_prefix(TRIAL_START_PREFIX).ok_or_else(bad)?;
    let mut start = TrialStart {
        pattern_name: String::new(),
        pattern: PatternSpec::baseline(),
        modality: None,
        index: None,
        seed: 0,
    };
    let mut have_pattern = false;
    for kv in body.split(';').filter(|kv| !kv.trim().is_empty()) {
        let (k, v) = kv.split_once('=').ok_or_else(bad)?;
        let v = v.trim();
        match k.trim() {
            "pattern" => {
                start.pattern = compose(parse_traits(v)?)?;
                start.pattern_name = v.to_owned();
                have_pattern = true;
            }
            "modality" => start.modality = Some(v.parse()?),
            "index" => start.index = Some(v.parse().map_err(|_| bad())?),
            "seed" => start.seed = v.parse().map_err(|_| bad())?,
            _ => {}
        }
    }
    if !have_pattern {
        return Err(bad());
    }
    Ok(start)
}

/// Scores a stream recorded back to back against `schedule`, one
/// `trial_s` segment per trial. Trailing incomplete trials are skipped.
pub fn run_schedule(schedule: &TrialSchedule, input: &Signal, trial_s: f64) -> Result<Vec<TrialRecord>, SessionError> {
    let per_trial = (trial_s * input.rate_hz).round() as usize;
    let complete = input.len().checked_div(per_trial).unwrap_or(0);
    if complete == 0 {
        return Err(SessionError::InsufficientData {
            needed_s: trial_s,
            got_s: input.duration_s(),
        });
    }
    schedule
        .trials
        .iter()
        .enumerate()
        .take(complete)
        .map(|(i, t)| {
            let seg = Signal::new(input.rate_hz, input.values[i * per_trial..(i + 1) * per_trial].to_vec());
            let seed = schedule.trial_seed(i);
            Ok(TrialRecord {
                index: i,
                pattern: t.pattern.name().to_owned(),
                modality: Some(t.modality),
                seed,
                result: run_trial(&t.pattern.spec(), &seg, trial_s, seed)?,
            })
        })
        .collect()
}

/// Scores every `trial_start` marker in a live recording. `samples` carries
/// its own start time; marker times are on the same clock, in seconds. Each
/// trial is scored on the `trial_s` seconds following its start marker.
pub fn score_marked_stream(
    samples: &Signal,
    markers: &[(f64, String)],
    trial_s: f64,
) -> Vec<(TrialStart, Result<TrialRecord, SessionError>)> {
    let mut out = Vec::new();
    for (t, label) in markers {
        if !label.starts_with(TRIAL_START_PREFIX) {
            continue;
        }
        let start = match parse_trial_start(label) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("skipping marker: {e}");
                continue;
            }
        };
        let seg = samples.slice_s(t - samples.t0_s, trial_s);
        let result = run_trial(&start.pattern, &seg, trial_s, start.seed).map(|result| TrialRecord {
            index: start.index.unwrap_or(out.len()),
            pattern: start.pattern_name.clone(),
            modality: start.modality,
            seed: start.seed,
            result,
        });
        out.push((start, result));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modality_names() {
        assert_eq!("Audio".parse::<Modality>().unwrap(), Modality::Audio);
        assert!("smell".parse::<Modality>().is_err());
    }

    #[test]
    fn schedule_csv() {
        let s = build_schedule(3);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 31);
        assert!(text.starts_with("index,pattern,modality\n0,"));
    }

    #[test]
    fn start_label_format() {
        let t = Trial {
            pattern: CanonicalPattern::Fast,
            modality: Modality::Audio,
        };
        assert_eq!(t.start_label(), "trial_start:pattern=Fast;modality=audio");
    }

    #[test]
    fn trial_start_parsing() {
        let s = build_schedule(5);
        let p = parse_trial_start(&s.start_label(3)).unwrap();
        assert_eq!(p.pattern, s.trials[3].pattern.spec());
        assert_eq!(p.modality, Some(s.trials[3].modality));
        assert_eq!((p.index, p.seed), (Some(3), 8));
        let p = parse_trial_start("trial_start:pattern=Slow+HoldIn").unwrap();
        assert_eq!(p.pattern, CanonicalPattern::SlowHoldIn.spec());
        assert!(parse_trial_start("trial_start:modality=audio").is_err());
        assert!(parse_trial_start("trial_start:pattern=Fast,Slow").is_err());
        assert!(parse_trial_start("trial_end").is_err());
    }

    #[test]
    fn short_input_rejected() {
        let s = Signal::new(8.0, vec![0.0; 100]);
        assert!(matches!(
            run_trial(&PatternSpec::baseline(), &s, 40.0, 0),
            Err(SessionError::InsufficientData { .. })
        ));
        let s = Signal::new(4.0, vec![0.0; 400]);
        assert!(matches!(run_trial(&PatternSpec::baseline(), &s, 40.0, 0), Err(SessionError::RateTooLow(_))));
    }

    #[test]
    fn constant_input_is_degenerate() {
        let s = Signal::new(8.0, vec![0.5; 320]);
        assert!(matches!(
            run_trial(&PatternSpec::baseline(), &s, 40.0, 0),
            Err(SessionError::Dsp(DspError::DegenerateSeries))
        ));
    }
}
