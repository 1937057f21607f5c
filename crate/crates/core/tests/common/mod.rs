//! Independent reference computations shared by integration tests.
#![allow(dead_code)]

use rustfft::{num_complex::Complex, FftPlanner};

/// Welch power spectrum: Hann windows of `seg` samples, 50% overlap.
pub fn welch(x: &[f64], seg: usize, rate_hz: f64) -> Vec<(f64, f64)> {
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(seg);
    let win: Vec<f64> = (0..seg)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / seg as f64).cos())
        .collect();
    let mut acc = vec![0.0; seg / 2 + 1];
    let mut count = 0;
    let mut start = 0;
    while start + seg <= x.len() {
        let mut buf: Vec<Complex<f64>> = (0..seg).map(|i| Complex::new(x[start + i] * win[i], 0.0)).collect();
        fft.process(&mut buf);
        for (a, c) in acc.iter_mut().zip(&buf) {
            *a += c.norm_sqr();
        }
        count += 1;
        start += seg / 2;
    }
    acc.iter()
        .enumerate()
        .map(|(k, p)| (k as f64 * rate_hz / seg as f64, p / count as f64))
        .collect()
}

/// Least-squares slope of power (dB) against log2(frequency), with the
/// spectrum first averaged into sixth-octave bands so each octave carries
/// equal weight.
pub fn slope_db_per_octave(spectrum: &[(f64, f64)], lo: f64, hi: f64) -> f64 {
    let bands_per_oct = 6.0;
    let n_bands = ((hi / lo).log2() * bands_per_oct).floor() as usize;
    let mut pts = Vec::new();
    for b in 0..n_bands {
        let f0 = lo * 2f64.powf(b as f64 / bands_per_oct);
        let f1 = lo * 2f64.powf((b + 1) as f64 / bands_per_oct);
        let inside: Vec<f64> = spectrum.iter().filter(|(f, _)| *f >= f0 && *f < f1).map(|p| p.1).collect();
        if !inside.is_empty() {
            let mean = inside.iter().sum::<f64>() / inside.len() as f64;
            pts.push(((f0 * f1).sqrt().log2(), 10.0 * mean.log10()));
        }
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Textbook two-pass Pearson correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Pitch from the rotation matrix third row: R[2][0] = -sin(pitch).
pub fn pitch_from_matrix(w: f64, x: f64, y: f64, z: f64) -> f64 {
    let r20 = 2.0 * (x * z - w * y);
    (-r20).clamp(-1.0, 1.0).asin()
}
