//! Mappings from a normalized breathing value to feedback intensities, and
//! the pink-noise carrier used for audio.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BRIGHTNESS_GAMMA: f64 = 2.2;
/// Breathing floor before the log; 10·log2(2^-6) = -60 dB.
pub const AUDIO_FLOOR: f64 = 1.0 / 64.0;
pub const PINK_ROWS: u32 = 16;

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("breathing value {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("pink noise needs at least one sample")]
    Empty,
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
}

fn check(b: f64) -> Result<f64, EncodeError> {
    if (0.0..=1.0).contains(&b) {
        Ok(b)
    } else {
        Err(EncodeError::OutOfRange(b))
    }
}

pub fn visual_brightness(b: f64) -> Result<f64, EncodeError> {
    Ok(check(b)?.powf(BRIGHTNESS_GAMMA))
}

/// Loudness in dB, `10 * log2(b)`, with `b` floored at [`AUDIO_FLOOR`].
pub fn audio_loudness_db(b: f64) -> Result<f64, EncodeError> {
    Ok(10.0 * check(b)?.max(AUDIO_FLOOR).log2())
}

pub fn audio_gain(b: f64) -> Result<f64, EncodeError> {
    Ok(10f64.powf(audio_loudness_db(b)? / 20.0))
}

pub fn haptic_intensity(b: f64) -> Result<f64, EncodeError> {
    check(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModalityFrame {
    pub t_us: u64,
    pub brightness: f64,
    pub audio_gain: f64,
    pub haptic_intensity: f64,
}

impl ModalityFrame {
    /// Encodes one value; inputs slightly outside [0, 1] from upstream
    /// rounding are clamped rather than rejected.
    pub fn encode(t_us: u64, b: f64) -> Self {
        let b = if b.is_nan() { 0.0 } else { b.clamp(0.0, 1.0) };
        ModalityFrame {
            t_us,
            brightness: visual_brightness(b).expect("clamped"),
            audio_gain: audio_gain(b).expect("clamped"),
            haptic_intensity: haptic_intensity(b).expect("clamped"),
        }
    }
}

/// Voss–McCartney generator: row `k` is redrawn every `2^k` samples (chosen
/// by the trailing zeros of a counter) and a white term is added each sample.
#[derive(Debug, Clone)]
pub struct PinkNoise {
    rng: ChaCha8Rng,
    rows: [f64; PINK_ROWS as usize],
    sum: f64,
    counter: u64,
}

impl PinkNoise {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = [0.0; PINK_ROWS as usize];
        for r in rows.iter_mut() {
            *r = rng.random_range(-1.0..1.0);
        }
        let sum = rows.iter().sum();
        PinkNoise {
            rng,
            rows,
            sum,
            counter: 0,
        }
    }

    /// Next raw sample in roughly `[-(rows+1), rows+1]`.
    pub fn next_raw(&mut self) -> f64 {
        self.counter = self.counter.wrapping_add(1);
        let k = self.counter.trailing_zeros();
        if k < PINK_ROWS {
            let fresh = self.rng.random_range(-1.0..1.0);
            self.sum += fresh - self.rows[k as usize];
            self.rows[k as usize] = fresh;
        }
        self.sum + self.rng.random_range(-1.0..1.0)
    }
}

/// A zero-mean pink-noise buffer scaled to peak magnitude 1. `rate_hz` does
/// not alter the samples; the spectrum scales with whatever rate they are
/// played at.
pub fn pink_noise(seed: u64, n_samples: usize, rate_hz: f64) -> Result<Vec<f64>, EncodeError> {
    let _ = rate_hz;
    if n_samples == 0 {
        return Err(EncodeError::Empty);
    }
    let mut g = PinkNoise::new(seed);
    let mut buf: Vec<f64> = (0..n_samples).map(|_| g.next_raw()).collect();
    let mean = buf.iter().sum::<f64>() / n_samples as f64;
    let peak = buf.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    let scale = if peak > 0.0 { 1.0 / peak } else { 0.0 };
    for v in buf.iter_mut() {
        *v = (*v - mean) * scale;
    }
    Ok(buf)
}

/// Writes pink noise whose amplitude follows `gains` (one value per frame,
/// held for `rate_hz / frame_rate_hz` samples) as 16-bit mono PCM.
pub fn write_modulated_wav(
    path: &Path,
    gains: &[f64],
    frame_rate_hz: f64,
    rate_hz: u32,
    seed: u64,
) -> Result<(), EncodeError> {
    let per_frame = (rate_hz as f64 / frame_rate_hz).round().max(1.0) as usize;
    let n = (gains.len() * per_frame).max(1);
    let noise = pink_noise(seed, n, rate_hz as f64)?;
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for (i, s) in noise.iter().enumerate() {
        let g = gains.get(i / per_frame).copied().unwrap_or(0.0);
        w.write_sample((s * g * i16::MAX as f64).round() as i16)?;
    }
    w.finalize()?;
    Ok(())
}
