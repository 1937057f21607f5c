//! Breathing-trait lexicon and waveform synthesis.
//!
//! A pattern is the baseline breath (15 breaths/min, equal inhale and
//! exhale, no holds, amplitude 0.6) modified by at most one trait per
//! feature axis. Waveforms are normalized chest inflation: 0 is fully
//! exhaled, 1 is fully inflated.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::Signal;

pub const BASELINE_PACE_BPM: f64 = 15.0;
pub const FAST_PACE_BPM: f64 = 30.0;
pub const SLOW_PACE_BPM: f64 = 7.5;
pub const BASELINE_AMPLITUDE: f64 = 0.6;
pub const DEEP_AMPLITUDE: f64 = 1.0;
pub const SHALLOW_AMPLITUDE: f64 = 0.2;
pub const HOLD_S: f64 = 2.0;
/// Difference between exhale and inhale for Plus/Minus.
pub const INOUT_SHIFT_S: f64 = 1.0;
pub const VARIABLE_FRAC: f64 = 0.5;
pub const MIN_SYNTH_RATE_HZ: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PatternError {
    #[error("conflicting traits on the {axis} axis: {a} and {b}")]
    ConflictingTraits {
        axis: &'static str,
        a: TraitId,
        b: TraitId,
    },
    #[error("invalid pattern spec: {0}")]
    InvalidSpec(String),
    #[error("unknown trait or pattern name `{0}`")]
    UnknownTrait(String),
}

/// The ten identifiers of the breathing-trait lexicon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TraitId {
    Baseline,
    Fast,
    Slow,
    Plus,
    Minus,
    HoldIn,
    HoldOut,
    Deep,
    Shallow,
    Variable,
}

/// Feature axis a trait modifies. At most one trait per axis may be composed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Pace,
    InOut,
    Hold,
    Amplitude,
    Variability,
}

impl Axis {
    fn name(self) -> &'static str {
        match self {
            Axis::Pace => "pace",
            Axis::InOut => "in/out",
            Axis::Hold => "hold",
            Axis::Amplitude => "amplitude",
            Axis::Variability => "variability",
        }
    }
}

impl TraitId {
    pub const ALL: [TraitId; 10] = [
        TraitId::Baseline,
        TraitId::Fast,
        TraitId::Slow,
        TraitId::Plus,
        TraitId::Minus,
        TraitId::HoldIn,
        TraitId::HoldOut,
        TraitId::Deep,
        TraitId::Shallow,
        TraitId::Variable,
    ];

    /// `None` for Baseline, which modifies nothing.
    pub fn axis(self) -> Option<Axis> {
        match self {
            TraitId::Baseline => None,
            TraitId::Fast | TraitId::Slow => Some(Axis::Pace),
            TraitId::Plus | TraitId::Minus => Some(Axis::InOut),
            TraitId::HoldIn | TraitId::HoldOut => Some(Axis::Hold),
            TraitId::Deep | TraitId::Shallow => Some(Axis::Amplitude),
            TraitId::Variable => Some(Axis::Variability),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TraitId::Baseline => "Baseline",
            TraitId::Fast => "Fast",
            TraitId::Slow => "Slow",
            TraitId::Plus => "Plus",
            TraitId::Minus => "Minus",
            TraitId::HoldIn => "HoldIn",
            TraitId::HoldOut => "HoldOut",
            TraitId::Deep => "Deep",
            TraitId::Shallow => "Shallow",
            TraitId::Variable => "Variable",
        }
    }
}

impl fmt::Display for TraitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TraitId {
    type Err = PatternError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .flat_map(char::to_lowercase)
            .collect();
        TraitId::ALL
            .into_iter()
            .find(|t| t.name().to_lowercase() == key)
            .ok_or_else(|| PatternError::UnknownTrait(s.to_string()))
    }
}

/// The numeric modification a single trait applies to a spec.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TraitDelta {
    pub pace_bpm: Option<f64>,
    /// Seconds moved from exhale to inhale (negative lengthens the exhale).
    pub inout_shift_s: Option<f64>,
    pub hold_in_s: Option<f64>,
    pub hold_out_s: Option<f64>,
    pub amplitude: Option<f64>,
    pub variability_frac: Option<f64>,
}

/// Parametric description of one breathing pattern.
///
/// `inhale_s + exhale_s` is the base cycle `60 / pace_bpm`; holds extend the
/// cycle beyond it, so a pattern with holds breathes slower than `pace_bpm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternSpec {
    pub pace_bpm: f64,
    pub inhale_s: f64,
    pub exhale_s: f64,
    pub hold_in_s: f64,
    pub hold_out_s: f64,
    pub amplitude: f64,
    pub variability_frac: f64,
}

impl PatternSpec {
    pub fn baseline() -> Self {
        let half = 30.0 / BASELINE_PACE_BPM;
        PatternSpec {
            pace_bpm: BASELINE_PACE_BPM,
            inhale_s: half,
            exhale_s: half,
            hold_in_s: 0.0,
            hold_out_s: 0.0,
            amplitude: BASELINE_AMPLITUDE,
            variability_frac: 0.0,
        }
    }

    /// Full cycle length including holds.
    pub fn cycle_s(&self) -> f64 {
        self.inhale_s + self.hold_in_s + self.exhale_s + self.hold_out_s
    }

    /// Breaths per minute actually produced, holds included.
    pub fn effective_pace_bpm(&self) -> f64 {
        60.0 / self.cycle_s()
    }

    pub fn validate(&self) -> Result<(), PatternError> {
        let fields = [
            ("pace_bpm", self.pace_bpm),
            ("inhale_s", self.inhale_s),
            ("exhale_s", self.exhale_s),
            ("hold_in_s", self.hold_in_s),
            ("hold_out_s", self.hold_out_s),
            ("amplitude", self.amplitude),
            ("variability_frac", self.variability_frac),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(PatternError::InvalidSpec(format!("{name} is not finite")));
        }
        if self.pace_bpm <= 0.0 {
            return Err(PatternError::InvalidSpec("pace_bpm must be > 0".into()));
        }
        if fields[1..5].iter().any(|(_, v)| *v < 0.0) {
            return Err(PatternError::InvalidSpec("durations must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.amplitude) {
            return Err(PatternError::InvalidSpec("amplitude must be in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.variability_frac) {
            return Err(PatternError::InvalidSpec(
                "variability_frac must be in [0, 1]".into(),
            ));
        }
        let base = 60.0 / self.pace_bpm;
        if ((self.inhale_s + self.exhale_s) - base).abs() > 1e-9 * base.max(1.0) {
            return Err(PatternError::InvalidSpec(format!(
                "inhale_s + exhale_s = {} but 60/pace_bpm = {base}",
                self.inhale_s + self.exhale_s
            )));
        }
        Ok(())
    }

    fn apply(&mut self, delta: &TraitDelta) {
        if let Some(pace) = delta.pace_bpm {
            // Re-split the new base cycle with the current in/out offset kept.
            let shift = (self.inhale_s - self.exhale_s) / 2.0;
            let half = 30.0 / pace;
            self.pace_bpm = pace;
            self.inhale_s = half + shift;
            self.exhale_s = half - shift;
        }
        if let Some(shift) = delta.inout_shift_s {
            let half = 30.0 / self.pace_bpm;
            self.inhale_s = half + shift / 2.0;
            self.exhale_s = half - shift / 2.0;
        }
        if let Some(h) = delta.hold_in_s {
            self.hold_in_s = h;
        }
        if let Some(h) = delta.hold_out_s {
            self.hold_out_s = h;
        }
        if let Some(a) = delta.amplitude {
            self.amplitude = a;
        }
        if let Some(v) = delta.variability_frac {
            self.variability_frac = v;
        }
    }
}

impl Default for PatternSpec {
    fn default() -> Self {
        Self::baseline()
    }
}

/// Numeric modification assigned to one trait. Baseline yields the full
/// baseline spec.
pub fn trait_delta(t: TraitId) -> TraitDelta {
    let mut d = TraitDelta::default();
    match t {
        TraitId::Baseline => {
            let b = PatternSpec::baseline();
            d.pace_bpm = Some(b.pace_bpm);
            d.inout_shift_s = Some(0.0);
            d.hold_in_s = Some(0.0);
            d.hold_out_s = Some(0.0);
            d.amplitude = Some(b.amplitude);
            d.variability_frac = Some(0.0);
        }
        TraitId::Fast => d.pace_bpm = Some(FAST_PACE_BPM),
        TraitId::Slow => d.pace_bpm = Some(SLOW_PACE_BPM),
        // Plus: breathing out takes longer than in.
        TraitId::Plus => d.inout_shift_s = Some(-INOUT_SHIFT_S),
        TraitId::Minus => d.inout_shift_s = Some(INOUT_SHIFT_S),
        TraitId::HoldIn => d.hold_in_s = Some(HOLD_S),
        TraitId::HoldOut => d.hold_out_s = Some(HOLD_S),
        TraitId::Deep => d.amplitude = Some(DEEP_AMPLITUDE),
        TraitId::Shallow => d.amplitude = Some(SHALLOW_AMPLITUDE),
        TraitId::Variable => d.variability_frac = Some(VARIABLE_FRAC),
    }
    d
}

/// Applies every trait delta to the baseline. Order of `traits` is irrelevant.
pub fn compose<I>(traits: I) -> Result<PatternSpec, PatternError>
where
    I: IntoIterator<Item = TraitId>,
{
    let set: BTreeSet<TraitId> = traits.into_iter().collect();
    let mut seen: Vec<(Axis, TraitId)> = Vec::new();
    for &t in &set {
        if let Some(axis) = t.axis() {
            if let Some(&(_, other)) = seen.iter().find(|(a, _)| *a == axis) {
                return Err(PatternError::ConflictingTraits {
                    axis: axis.name(),
                    a: other,
                    b: t,
                });
            }
            seen.push((axis, t));
        }
    }
    let mut spec = PatternSpec::baseline();
    // Pace before in/out so the shift is applied to the final base cycle.
    let mut ordered: Vec<TraitId> = set.into_iter().collect();
    ordered.sort_by_key(|t| match t.axis() {
        None => 0,
        Some(Axis::Pace) => 1,
        Some(_) => 2,
    });
    for t in ordered {
        spec.apply(&trait_delta(t));
    }
    spec.validate()?;
    Ok(spec)
}

/// Parses `"Fast,Deep"`, `"Slow+HoldIn"` or a single trait name.
pub fn parse_traits(s: &str) -> Result<Vec<TraitId>, PatternError> {
    s.split([',', '+'])
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(TraitId::from_str)
        .collect()
}

/// One of the ten patterns used in the trial protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CanonicalPattern {
    Baseline,
    Fast,
    Slow,
    Plus,
    Minus,
    SlowHoldIn,
    SlowHoldOut,
    FastDeep,
    FastShallow,
    Variable,
}

impl CanonicalPattern {
    pub const ALL: [CanonicalPattern; 10] = [
        CanonicalPattern::Baseline,
        CanonicalPattern::Fast,
        CanonicalPattern::Slow,
        CanonicalPattern::Plus,
        CanonicalPattern::Minus,
        CanonicalPattern::SlowHoldIn,
        CanonicalPattern::SlowHoldOut,
        CanonicalPattern::FastDeep,
        CanonicalPattern::FastShallow,
        CanonicalPattern::Variable,
    ];

    pub fn traits(self) -> &'static [TraitId] {
        use TraitId::*;
        match self {
            CanonicalPattern::Baseline => &[Baseline],
            CanonicalPattern::Fast => &[Fast],
            CanonicalPattern::Slow => &[Slow],
            CanonicalPattern::Plus => &[Plus],
            CanonicalPattern::Minus => &[Minus],
            CanonicalPattern::SlowHoldIn => &[Slow, HoldIn],
            CanonicalPattern::SlowHoldOut => &[Slow, HoldOut],
            CanonicalPattern::FastDeep => &[Fast, Deep],
            CanonicalPattern::FastShallow => &[Fast, Shallow],
            CanonicalPattern::Variable => &[Variable],
        }
    }

    pub fn spec(self) -> PatternSpec {
        compose(self.traits().iter().copied()).expect("canonical traits are compatible")
    }

    pub fn name(self) -> &'static str {
        match self {
            CanonicalPattern::Baseline => "Baseline",
            CanonicalPattern::Fast => "Fast",
            CanonicalPattern::Slow => "Slow",
            CanonicalPattern::Plus => "Plus",
            CanonicalPattern::Minus => "Minus",
            CanonicalPattern::SlowHoldIn => "Slow+HoldIn",
            CanonicalPattern::SlowHoldOut => "Slow+HoldOut",
            CanonicalPattern::FastDeep => "Fast+Deep",
            CanonicalPattern::FastShallow => "Fast+Shallow",
            CanonicalPattern::Variable => "Variable",
        }
    }
}

impl fmt::Display for CanonicalPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CanonicalPattern {
    type Err = PatternError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted: BTreeSet<TraitId> = parse_traits(s)?.into_iter().collect();
        CanonicalPattern::ALL
            .into_iter()
            .find(|p| p.traits().iter().copied().collect::<BTreeSet<_>>() == wanted)
            .ok_or_else(|| PatternError::UnknownTrait(s.to_string()))
    }
}

/// The ten protocol patterns in their documented order.
pub fn canonical_patterns() -> Vec<PatternSpec> {
    CanonicalPattern::ALL.iter().map(|p| p.spec()).collect()
}

/// Uniformly sampled breathing signal plus the sample index of each cycle start.
#[derive(Debug, Clone, PartialEq)]
pub struct BreathWaveform {
    pub sample_rate_hz: f64,
    pub samples: Vec<f64>,
    pub cycle_marks: Vec<usize>,
}

impl BreathWaveform {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    pub fn to_signal(&self) -> Signal {
        Signal::new(self.sample_rate_hz, self.samples.clone())
    }
}

#[derive(Debug, Clone, Copy)]
struct Cycle {
    start_s: f64,
    inhale_s: f64,
    hold_in_s: f64,
    exhale_s: f64,
    hold_out_s: f64,
    amplitude: f64,
}

impl Cycle {
    fn len(&self) -> f64 {
        self.inhale_s + self.hold_in_s + self.exhale_s + self.hold_out_s
    }

    fn value_at(&self, t: f64) -> f64 {
        use std::f64::consts::PI;
        let mut tau = t - self.start_s;
        if tau < self.inhale_s {
            return self.amplitude * 0.5 * (1.0 - (PI * tau / self.inhale_s).cos());
        }
        tau -= self.inhale_s;
        if tau < self.hold_in_s {
            return self.amplitude;
        }
        tau -= self.hold_in_s;
        if tau < self.exhale_s {
            return self.amplitude * 0.5 * (1.0 + (PI * tau / self.exhale_s).cos());
        }
        0.0
    }
}

// Smallest perturbation factor for durations, so no cycle collapses to zero.
const MIN_DURATION_FACTOR: f64 = 0.05;

fn perturbed_cycle(spec: &PatternSpec, start_s: f64, rng: &mut ChaCha8Rng) -> Cycle {
    let v = spec.variability_frac;
    let mut c = Cycle {
        start_s,
        inhale_s: spec.inhale_s,
        hold_in_s: spec.hold_in_s,
        exhale_s: spec.exhale_s,
        hold_out_s: spec.hold_out_s,
        amplitude: spec.amplitude,
    };
    if v == 0.0 {
        return c;
    }
    let factor = |rng: &mut ChaCha8Rng| 1.0 + v * rng.random_range(-1.0..=1.0);
    let base = spec.inhale_s + spec.exhale_s;
    let base_cycle = base * factor(rng).max(MIN_DURATION_FACTOR);
    let inhale_frac = (spec.inhale_s / base * factor(rng)).clamp(0.05, 0.95);
    c.inhale_s = base_cycle * inhale_frac;
    c.exhale_s = base_cycle - c.inhale_s;
    c.amplitude = (spec.amplitude * factor(rng)).clamp(0.0, 1.0);
    if spec.hold_in_s > 0.0 {
        c.hold_in_s = spec.hold_in_s * factor(rng).max(MIN_DURATION_FACTOR);
    }
    if spec.hold_out_s > 0.0 {
        c.hold_out_s = spec.hold_out_s * factor(rng).max(MIN_DURATION_FACTOR);
    }
    c
}

/// Renders `duration_s` of breathing at `rate_hz`.
///
/// Each cycle is a raised-cosine rise over the inhale, a plateau at the
/// amplitude for the hold-in, a raised-cosine fall over the exhale and a
/// plateau at zero for the hold-out. With nonzero variability each cycle
/// draws its own pace, in/out split, amplitude and holds.
pub fn synthesize(
    spec: &PatternSpec,
    duration_s: f64,
    rate_hz: f64,
    seed: u64,
) -> Result<BreathWaveform, PatternError> {
    spec.validate()?;
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(PatternError::InvalidSpec("duration must be > 0".into()));
    }
    if !(rate_hz >= MIN_SYNTH_RATE_HZ && rate_hz.is_finite()) {
        return Err(PatternError::InvalidSpec(format!(
            "rate must be >= {MIN_SYNTH_RATE_HZ} Hz"
        )));
    }
    let n = (duration_s * rate_hz + 1e-9).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n);
    let mut cycle_marks = Vec::new();
    let mut cycle = perturbed_cycle(spec, 0.0, &mut rng);
    let mut next_mark = 0usize;
    for i in 0..n {
        let t = i as f64 / rate_hz;
        while t >= cycle.start_s + cycle.len() {
            let start = cycle.start_s + cycle.len();
            cycle = perturbed_cycle(spec, start, &mut rng);
        }
        // First sample at or after the cycle start.
        let mark = (cycle.start_s * rate_hz - 1e-9).ceil().max(0.0) as usize;
        if mark >= next_mark && mark <= i {
            cycle_marks.push(mark);
            next_mark = mark + 1;
        }
        samples.push(cycle.value_at(t).clamp(0.0, 1.0));
    }
    Ok(BreathWaveform {
        sample_rate_hz: rate_hz,
        samples,
        cycle_marks,
    })
}

/// Cycle durations of a synthesized waveform, derived from its marks.
pub fn cycle_durations_s(w: &BreathWaveform) -> Vec<f64> {
    w.cycle_marks
        .windows(2)
        .map(|p| (p[1] - p[0]) as f64 / w.sample_rate_hz)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_delta_is_full_spec() {
        let mut s = PatternSpec {
            pace_bpm: 60.0,
            inhale_s: 0.2,
            exhale_s: 0.8,
            hold_in_s: 3.0,
            hold_out_s: 1.0,
            amplitude: 0.1,
            variability_frac: 0.3,
        };
        s.apply(&trait_delta(TraitId::Baseline));
        assert_eq!(s, PatternSpec::baseline());
        assert_eq!(s.inhale_s, 2.0);
        assert_eq!(s.exhale_s, 2.0);
    }

    #[test]
    fn single_trait_deltas() {
        assert_eq!(trait_delta(TraitId::Deep).amplitude, Some(1.0));
        assert_eq!(trait_delta(TraitId::Shallow).amplitude, Some(0.2));
        assert_eq!(trait_delta(TraitId::HoldIn).hold_in_s, Some(2.0));
        assert_eq!(trait_delta(TraitId::HoldOut).hold_out_s, Some(2.0));
        assert_eq!(trait_delta(TraitId::Fast).pace_bpm, Some(30.0));
        assert_eq!(trait_delta(TraitId::Slow).pace_bpm, Some(7.5));
        assert_eq!(trait_delta(TraitId::Variable).variability_frac, Some(0.5));
    }

    #[test]
    fn compose_empty_is_baseline() {
        assert_eq!(compose([]).unwrap(), PatternSpec::baseline());
    }

    #[test]
    fn compose_slow_hold_in() {
        let s = compose([TraitId::Slow, TraitId::HoldIn]).unwrap();
        assert_eq!(s.pace_bpm, 7.5);
        assert_eq!(s.inhale_s, 4.0);
        assert_eq!(s.exhale_s, 4.0);
        assert_eq!(s.hold_in_s, 2.0);
        assert_eq!(s.hold_out_s, 0.0);
        assert_eq!(s.amplitude, 0.6);
    }

    #[test]
    fn compose_conflicts() {
        let err = compose([TraitId::Fast, TraitId::Slow]).unwrap_err();
        assert!(matches!(err, PatternError::ConflictingTraits { axis: "pace", .. }));
        assert!(compose([TraitId::Deep, TraitId::Shallow]).is_err());
        assert!(compose([TraitId::HoldIn, TraitId::HoldOut]).is_err());
        assert!(compose([TraitId::Plus, TraitId::Minus]).is_err());
    }

    #[test]
    fn plus_minus_keep_the_base_cycle() {
        let plus = compose([TraitId::Plus]).unwrap();
        assert_eq!((plus.inhale_s, plus.exhale_s), (1.5, 2.5));
        let minus = compose([TraitId::Minus]).unwrap();
        assert_eq!((minus.inhale_s, minus.exhale_s), (2.5, 1.5));
        let fast_plus = compose([TraitId::Plus, TraitId::Fast]).unwrap();
        assert_eq!((fast_plus.inhale_s, fast_plus.exhale_s), (0.5, 1.5));
    }

    #[test]
    fn canonical_order() {
        let all = canonical_patterns();
        assert_eq!(all.len(), 10);
        assert_eq!(all[0], PatternSpec::baseline());
        assert_eq!(all[5].pace_bpm, 7.5);
        assert_eq!(all[5].hold_in_s, 2.0);
        assert_eq!(all[6].pace_bpm, 7.5);
        assert_eq!(all[6].hold_out_s, 2.0);
        assert_eq!(all[7].amplitude, 1.0);
        assert_eq!(all[8].amplitude, 0.2);
        assert_eq!(all[9].variability_frac, 0.5);
        for s in &all {
            s.validate().unwrap();
        }
    }

    #[test]
    fn parse_names() {
        assert_eq!(parse_traits("Fast,Deep").unwrap(), vec![TraitId::Fast, TraitId::Deep]);
        assert_eq!(parse_traits("hold-in").unwrap(), vec![TraitId::HoldIn]);
        assert!(parse_traits("Sideways").is_err());
        assert_eq!(
            "Slow+HoldOut".parse::<CanonicalPattern>().unwrap(),
            CanonicalPattern::SlowHoldOut
        );
        assert_eq!("Deep,Fast".parse::<CanonicalPattern>().unwrap(), CanonicalPattern::FastDeep);
    }

    #[test]
    fn zero_amplitude_is_silent() {
        let spec = PatternSpec {
            amplitude: 0.0,
            ..PatternSpec::baseline()
        };
        let w = synthesize(&spec, 10.0, 24.0, 3).unwrap();
        assert!(w.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn rejects_bad_arguments() {
        let b = PatternSpec::baseline();
        assert!(synthesize(&b, 0.0, 24.0, 0).is_err());
        assert!(synthesize(&b, 10.0, 4.0, 0).is_err());
        let bad = PatternSpec {
            inhale_s: 3.0,
            ..b
        };
        assert!(matches!(synthesize(&bad, 10.0, 24.0, 0), Err(PatternError::InvalidSpec(_))));
    }

    #[test]
    fn hold_out_plateau_is_zero() {
        let spec = compose([TraitId::Slow, TraitId::HoldOut]).unwrap();
        let w = synthesize(&spec, 10.0, 24.0, 0).unwrap();
        // Hold-out covers [8 s, 10 s).
        assert!(w.samples[8 * 24..].iter().all(|&s| s == 0.0));
        assert!(w.samples[4 * 24 - 1] > 0.59);
    }
}
