//! Peak and trough detection on a breathing stream.
//!
//! Extrema are found as first-difference sign changes of a high-passed,
//! smoothed copy of the stream, pruned by prominence and spacing, and then
//! relocated onto the unfiltered stream so reported times and values are
//! those of the breath itself rather than of the filtered copy.

use serde::{Deserialize, Serialize};

use super::filter::{design_butterworth, FilterSpec, SosFilter};
use super::stats::{iqr, moving_average, pearson_r};
use super::DspError;
use crate::signal::Signal;

pub const HIGHPASS_HZ: f64 = 0.1;
pub const HIGHPASS_ORDER: usize = 3;
pub const SMOOTH_S: f64 = 0.5;
pub const MIN_SPACING_S: f64 = 1.0;
/// Minimum prominence as a fraction of the smoothed stream's IQR.
pub const MIN_PROMINENCE_IQR: f64 = 0.1;
pub const MIN_STREAM_S: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub t_s: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PeakList {
    pub peaks: Vec<Extremum>,
    pub troughs: Vec<Extremum>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Peak,
    Trough,
}

impl PeakList {
    /// Peaks and troughs merged in time order.
    pub fn merged(&self) -> Vec<(Kind, Extremum)> {
        let mut all: Vec<(Kind, Extremum)> = self
            .peaks
            .iter()
            .map(|&e| (Kind::Peak, e))
            .chain(self.troughs.iter().map(|&e| (Kind::Trough, e)))
            .collect();
        all.sort_by(|a, b| a.1.t_s.total_cmp(&b.1.t_s));
        all
    }

    /// Strictly increasing times with peaks and troughs alternating.
    pub fn is_well_formed(&self) -> bool {
        let m = self.merged();
        m.windows(2)
            .all(|w| w[0].1.t_s < w[1].1.t_s && w[0].0 != w[1].0)
    }
}

#[derive(Debug, Clone, Copy)]
struct Cand {
    idx: usize,
    kind: Kind,
    value: f64,
}

impl Cand {
    fn beats(&self, other: &Cand) -> bool {
        match self.kind {
            Kind::Peak => self.value > other.value,
            Kind::Trough => self.value < other.value,
        }
    }
}

/// Sign changes of the first difference. Flat runs resolve to their first sample.
fn sign_changes(x: &[f64]) -> Vec<Cand> {
    let mut out = Vec::new();
    let mut last_sign = 0i8;
    let mut run_end = 0usize;
    for i in 1..x.len() {
        let d = x[i] - x[i - 1];
        let sign = if d > 0.0 {
            1
        } else if d < 0.0 {
            -1
        } else {
            0
        };
        if sign == 0 {
            continue;
        }
        if last_sign != 0 && sign != last_sign {
            let kind = if last_sign > 0 { Kind::Peak } else { Kind::Trough };
            out.push(Cand {
                idx: run_end,
                kind,
                value: x[run_end],
            });
        }
        last_sign = sign;
        run_end = i;
    }
    out
}

fn merge_same_kind(c: &mut Vec<Cand>) {
    let mut out: Vec<Cand> = Vec::with_capacity(c.len());
    for &e in c.iter() {
        match out.last_mut() {
            Some(last) if last.kind == e.kind => {
                if e.beats(last) {
                    *last = e;
                }
            }
            _ => out.push(e),
        }
    }
    *c = out;
}

fn prune_prominence(c: &mut Vec<Cand>, threshold: f64) {
    loop {
        merge_same_kind(c);
        let smallest = c
            .windows(2)
            .enumerate()
            .map(|(i, w)| (i, (w[0].value - w[1].value).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match smallest {
            Some((i, d)) if d < threshold => {
                if i > 0 && c[i + 1].beats(&c[i - 1]) {
                    c[i - 1] = c[i + 1];
                }
                if i + 2 < c.len() && c[i].beats(&c[i + 2]) {
                    c[i + 2] = c[i];
                }
                c.drain(i..=i + 1);
                c.sort_by_key(|e| e.idx);
                c.dedup_by_key(|e| e.idx);
            }
            _ => break,
        }
    }
}

fn prune_spacing(c: &mut Vec<Cand>, min_gap: usize) {
    loop {
        merge_same_kind(c);
        // Same-kind neighbours sit two apart once alternation holds.
        let close = (0..c.len().saturating_sub(2)).find(|&i| c[i + 2].idx - c[i].idx < min_gap);
        match close {
            Some(i) => {
                let drop = if c[i].beats(&c[i + 2]) { i + 2 } else { i };
                // Removing one same-kind member and the extremum between them keeps alternation.
                let lo = drop.min(i + 1);
                c.drain(lo..=lo + 1);
            }
            None => break,
        }
    }
}

/// Shift (in samples) by which `smooth` trails `raw`, within ±`max_lag`.
fn estimate_lag(raw: &[f64], smooth: &[f64], max_lag: usize) -> isize {
    let n = raw.len();
    let max_lag = max_lag.min(n / 4) as isize;
    let mut best = (0isize, f64::NEG_INFINITY);
    for lag in -max_lag..=max_lag {
        // smooth[i] ~ raw[i - lag]
        let (s0, r0) = if lag >= 0 {
            (lag as usize, 0usize)
        } else {
            (0usize, (-lag) as usize)
        };
        let len = n - lag.unsigned_abs();
        if let Ok(r) = pearson_r(&smooth[s0..s0 + len], &raw[r0..r0 + len]) {
            if r > best.1 {
                best = (lag, r);
            }
        }
    }
    best.0
}

fn median(mut v: Vec<usize>) -> usize {
    v.sort_unstable();
    v[v.len() / 2]
}

/// Detects breath peaks and troughs.
pub fn detect_peaks(stream: &Signal) -> Result<PeakList, DspError> {
    let rate = stream.rate_hz;
    let n = stream.len();
    let need = (MIN_STREAM_S * rate).ceil() as usize;
    if n < need {
        return Err(DspError::InsufficientData { needed: need, got: n });
    }
    let hp = design_butterworth(&FilterSpec::highpass(HIGHPASS_HZ, HIGHPASS_ORDER, rate))?;
    let mut hp = SosFilter::new(&hp);
    hp.settle(stream.values[0]);
    let filtered = hp.process(&stream.values);
    let smooth = moving_average(&filtered, ((SMOOTH_S * rate).round() as usize).max(1));

    let mut cands = sign_changes(&smooth);
    prune_prominence(&mut cands, MIN_PROMINENCE_IQR * iqr(&smooth));
    prune_spacing(&mut cands, (MIN_SPACING_S * rate).round() as usize);

    let peak_idx: Vec<usize> = cands.iter().filter(|c| c.kind == Kind::Peak).map(|c| c.idx).collect();
    if peak_idx.len() < 2 {
        return Err(DspError::NoPeaks);
    }
    let spacing = median(peak_idx.windows(2).map(|w| w[1] - w[0]).collect());
    let lag = estimate_lag(&stream.values, &smooth, spacing / 2);
    let half_window = (spacing / 4).max(1) as isize;

    let raw = &stream.values;
    let last = n as isize - 1;
    let mut refined: Vec<Cand> = cands
        .iter()
        .filter_map(|c| {
            let center = c.idx as isize - lag;
            if center < 0 || center > last {
                return None;
            }
            let lo = (center - half_window).max(0) as usize;
            let hi = (center + half_window).min(last) as usize;
            // Ties resolve to the last sample: an extremum is where the stream turns.
            let mut best = lo;
            for i in lo..=hi {
                let better = match c.kind {
                    Kind::Peak => raw[i] >= raw[best],
                    Kind::Trough => raw[i] <= raw[best],
                };
                if better {
                    best = i;
                }
            }
            // An extremum on the first or last sample cannot be confirmed.
            (best > 0 && best < n - 1).then_some(Cand {
                idx: best,
                kind: c.kind,
                value: raw[best],
            })
        })
        .collect();
    refined.sort_by_key(|c| c.idx);
    refined.dedup_by_key(|c| c.idx);
    prune_prominence(&mut refined, MIN_PROMINENCE_IQR * iqr(raw));

    let mut list = PeakList::default();
    for c in &refined {
        let e = Extremum {
            t_s: stream.time_at(c.idx),
            value: c.value,
        };
        match c.kind {
            Kind::Peak => list.peaks.push(e),
            Kind::Trough => list.troughs.push(e),
        }
    }
    if list.peaks.len() < 2 {
        return Err(DspError::NoPeaks);
    }
    Ok(list)
}
