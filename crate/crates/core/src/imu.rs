//! Orientation from 9-DOF samples and the pitch carrier of chest motion.
//!
//! Fusion is Madgwick's gradient-descent filter: gyroscope integration
//! corrected by a normalized gradient step toward the measured gravity
//! (and, when present, magnetic) direction. The step is capped near the
//! minimum so it cannot overshoot. Without a magnetometer the 6-DOF variant
//! is used; yaw is irrelevant to breathing.

use std::io::{Read, Write};
use std::ops::{Add, Mul, Neg, Sub};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::patterns::BreathWaveform;
use crate::signal::Signal;

pub const DEFAULT_BETA: f64 = 0.1;
/// Reference magnetic field in the earth frame, µT (no east component).
pub const EARTH_FIELD_UT: [f64; 3] = [20.0, 0.0, -45.0];
const ACCEL_EPS: f64 = 1e-6;
/// Near the minimum the objective gradient is about this multiple of the
/// quaternion error per reference vector; with both references it is at
/// most twice that. The correction step is capped at the error so it never
/// steps past the minimum, which otherwise leaves a `beta * dt` limit cycle.
const GRADIENT_TO_ERROR: f64 = 8.0;

#[derive(Debug, Error)]
pub enum ImuError {
    #[error("accelerometer norm below {ACCEL_EPS}; gradient undefined")]
    DegenerateSample,
    #[error("dt must be > 0, got {0}")]
    BadTimestep(f64),
    #[error("beta must be > 0, got {0}")]
    BadGain(f64),
    #[error("pitch amplitude must be in (0, 30] degrees, got {0}")]
    BadAmplitude(f64),
    #[error("timestamps must strictly increase ({prev} then {next} µs)")]
    NonMonotonic { prev: u64, next: u64 },
    #[error("csv: {0}")]
    Csv(csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("stream needs at least 2 samples")]
    TooShort,
}

impl From<csv::Error> for ImuError {
    fn from(e: csv::Error) -> Self {
        if !e.is_io_error() {
            return ImuError::Csv(e);
        }
        match e.into_kind() {
            csv::ErrorKind::Io(io) => ImuError::Io(io),
            _ => unreachable!("is_io_error"),
        }
    }
}

pub type Vec3 = [f64; 3];

fn norm3(v: Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quaternion { w, x, y, z }
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let n = norm3(axis);
        let (s, c) = (angle / 2.0).sin_cos();
        Quaternion::new(c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n)
    }

    /// Rotation about the body y (pitch) axis.
    pub fn from_pitch(theta: f64) -> Self {
        Self::from_axis_angle([0.0, 1.0, 0.0], theta)
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(self) -> Self {
        self * (1.0 / self.norm())
    }

    pub fn conj(self) -> Self {
        Quaternion::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn dot(&self, o: &Quaternion) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    /// Angle of the rotation taking `self` to `other`.
    pub fn angle_to(&self, other: &Quaternion) -> f64 {
        2.0 * self.dot(other).abs().min(1.0).acos()
    }

    /// Row-major rotation matrix (body to earth).
    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        let Quaternion { w, x, y, z } = *self;
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    /// Expresses an earth-frame vector in the body frame.
    pub fn earth_to_body(&self, v: Vec3) -> Vec3 {
        let m = self.to_matrix();
        [
            m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
            m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
            m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
        ]
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;
    fn mul(self, r: Quaternion) -> Quaternion {
        Quaternion::new(
            self.w * r.w - self.x * r.x - self.y * r.y - self.z * r.z,
            self.w * r.x + self.x * r.w + self.y * r.z - self.z * r.y,
            self.w * r.y - self.x * r.z + self.y * r.w + self.z * r.x,
            self.w * r.z + self.x * r.y - self.y * r.x + self.z * r.w,
        )
    }
}

impl Mul<f64> for Quaternion {
    type Output = Quaternion;
    fn mul(self, s: f64) -> Quaternion {
        Quaternion::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }
}

impl Add for Quaternion {
    type Output = Quaternion;
    fn add(self, r: Quaternion) -> Quaternion {
        Quaternion::new(self.w + r.w, self.x + r.x, self.y + r.y, self.z + r.z)
    }
}

impl Sub for Quaternion {
    type Output = Quaternion;
    fn sub(self, r: Quaternion) -> Quaternion {
        self + (-r)
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;
    fn neg(self) -> Quaternion {
        self * -1.0
    }
}

/// Pitch in [-π/2, π/2], aerospace ZYX convention.
pub fn pitch_of(q: &Quaternion) -> f64 {
    (2.0 * (q.w * q.y - q.x * q.z)).clamp(-1.0, 1.0).asin()
}

/// One raw 9-DOF reading: accel in g, gyro in rad/s, mag in µT.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub t_us: u64,
    pub accel: Vec3,
    pub gyro: Vec3,
    pub mag: Option<Vec3>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionState {
    pub orientation: Quaternion,
    beta: f64,
}

impl Default for FusionState {
    fn default() -> Self {
        FusionState {
            orientation: Quaternion::IDENTITY,
            beta: DEFAULT_BETA,
        }
    }
}

impl FusionState {
    pub fn new(beta: f64) -> Result<Self, ImuError> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(ImuError::BadGain(beta));
        }
        Ok(FusionState {
            orientation: Quaternion::IDENTITY,
            beta,
        })
    }

    pub fn with_orientation(mut self, q: Quaternion) -> Self {
        self.orientation = q.normalized();
        self
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Objective gradient for the gravity reference (0, 0, 1).
fn gravity_gradient(q: &Quaternion, a: Vec3) -> Quaternion {
    let Quaternion { w, x, y, z } = *q;
    let f = [
        2.0 * (x * z - w * y) - a[0],
        2.0 * (w * x + y * z) - a[1],
        2.0 * (0.5 - x * x - y * y) - a[2],
    ];
    // J^T f
    Quaternion::new(
        -2.0 * y * f[0] + 2.0 * x * f[1],
        2.0 * z * f[0] + 2.0 * w * f[1] - 4.0 * x * f[2],
        -2.0 * w * f[0] + 2.0 * z * f[1] - 4.0 * y * f[2],
        2.0 * x * f[0] + 2.0 * y * f[1],
    )
}

/// Objective gradient for an earth field (bx, 0, bz).
fn field_gradient(q: &Quaternion, m: Vec3, bx: f64, bz: f64) -> Quaternion {
    let Quaternion { w, x, y, z } = *q;
    let f = [
        2.0 * bx * (0.5 - y * y - z * z) + 2.0 * bz * (x * z - w * y) - m[0],
        2.0 * bx * (x * y - w * z) + 2.0 * bz * (w * x + y * z) - m[1],
        2.0 * bx * (w * y + x * z) + 2.0 * bz * (0.5 - x * x - y * y) - m[2],
    ];
    Quaternion::new(
        -2.0 * bz * y * f[0] + (-2.0 * bx * z + 2.0 * bz * x) * f[1] + 2.0 * bx * y * f[2],
        2.0 * bz * z * f[0] + (2.0 * bx * y + 2.0 * bz * w) * f[1] + (2.0 * bx * z - 4.0 * bz * x) * f[2],
        (-4.0 * bx * y - 2.0 * bz * w) * f[0] + (2.0 * bx * x + 2.0 * bz * z) * f[1] + (2.0 * bx * w - 4.0 * bz * y) * f[2],
        (-4.0 * bx * z + 2.0 * bz * x) * f[0] + (-2.0 * bx * w + 2.0 * bz * y) * f[1] + 2.0 * bx * x * f[2],
    )
}

/// One filter update over `dt` seconds.
pub fn fuse_step(state: &FusionState, sample: &ImuSample, dt: f64) -> Result<FusionState, ImuError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(ImuError::BadTimestep(dt));
    }
    let an = norm3(sample.accel);
    if an.is_nan() || an < ACCEL_EPS {
        return Err(ImuError::DegenerateSample);
    }
    let q = state.orientation;
    let a = [sample.accel[0] / an, sample.accel[1] / an, sample.accel[2] / an];
    let g = sample.gyro;
    let q_dot_gyro = q * Quaternion::new(0.0, g[0], g[1], g[2]) * 0.5;

    let mut grad = gravity_gradient(&q, a);
    if let Some(m) = sample.mag.filter(|m| norm3(*m) > 0.0) {
        let mn = norm3(m);
        let m = [m[0] / mn, m[1] / mn, m[2] / mn];
        // Measured field rotated to the earth frame defines the reference.
        let h = q * Quaternion::new(0.0, m[0], m[1], m[2]) * q.conj();
        let bx = (h.x * h.x + h.y * h.y).sqrt();
        grad = grad + field_gradient(&q, m, bx, h.z);
    }
    let gn = grad.norm();
    let q_dot = if gn > 0.0 {
        let rate = state.beta.min(gn / (GRADIENT_TO_ERROR * dt));
        q_dot_gyro - grad * (rate / gn)
    } else {
        q_dot_gyro
    };
    Ok(FusionState {
        orientation: (q + q_dot * dt).normalized(),
        beta: state.beta,
    })
}

/// Runs the filter over a stream and returns pitch in radians at the
/// stream's rate. The first sample uses the median sample period as `dt`.
pub fn fuse_pitch(samples: &[ImuSample], beta: f64) -> Result<Signal, ImuError> {
    if samples.len() < 2 {
        return Err(ImuError::TooShort);
    }
    for w in samples.windows(2) {
        if w[1].t_us <= w[0].t_us {
            return Err(ImuError::NonMonotonic {
                prev: w[0].t_us,
                next: w[1].t_us,
            });
        }
    }
    let mut steps: Vec<u64> = samples.windows(2).map(|w| w[1].t_us - w[0].t_us).collect();
    steps.sort_unstable();
    let period_s = steps[steps.len() / 2] as f64 * 1e-6;
    let mut state = FusionState::new(beta)?;
    let mut prev_t = None;
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        let dt = prev_t.map_or(period_s, |p: u64| (s.t_us - p) as f64 * 1e-6);
        state = fuse_step(&state, s, dt)?;
        prev_t = Some(s.t_us);
        out.push(pitch_of(&state.orientation));
    }
    // Mean rate over the whole record, snapped to 1 mHz: per-sample
    // timestamps carry microsecond rounding.
    let span_s = (samples[samples.len() - 1].t_us - samples[0].t_us) as f64 * 1e-6;
    let rate = (((samples.len() - 1) as f64 / span_s) * 1e3).round() / 1e3;
    Ok(Signal::new(rate, out).with_start(samples[0].t_us as f64 * 1e-6))
}

/// Renders an IMU stream for a device whose pitch follows the waveform:
/// `pitch = amplitude_deg * (sample - mean)`. Gravity and the earth field
/// are rotated into the body frame; the gyro carries the backward-difference
/// pitch rate so the filter integrates exactly onto the true pitch.
/// Gaussian noise of `noise_std` (channel units) is added to every channel.
pub fn simulate_imu(
    waveform: &BreathWaveform,
    pitch_amplitude_deg: f64,
    noise_std: f64,
    seed: u64,
) -> Result<Vec<ImuSample>, ImuError> {
    if !(pitch_amplitude_deg > 0.0 && pitch_amplitude_deg <= 30.0) {
        return Err(ImuError::BadAmplitude(pitch_amplitude_deg));
    }
    let rate = waveform.sample_rate_hz;
    let n = waveform.samples.len();
    let mean = if n == 0 {
        0.0
    } else {
        waveform.samples.iter().sum::<f64>() / n as f64
    };
    let pitch: Vec<f64> = waveform
        .samples
        .iter()
        .map(|s| (pitch_amplitude_deg * (s - mean)).to_radians())
        .collect();
    let noise = Normal::new(0.0, noise_std.max(0.0)).expect("std >= 0");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jitter = |v: Vec3| -> Vec3 {
        if noise_std > 0.0 {
            [
                v[0] + noise.sample(&mut rng),
                v[1] + noise.sample(&mut rng),
                v[2] + noise.sample(&mut rng),
            ]
        } else {
            v
        }
    };
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let q = Quaternion::from_pitch(pitch[i]);
        let rate_y = if i == 0 { 0.0 } else { (pitch[i] - pitch[i - 1]) * rate };
        let accel = jitter(q.earth_to_body([0.0, 0.0, 1.0]));
        let gyro = jitter([0.0, rate_y, 0.0]);
        let mag = jitter(q.earth_to_body(EARTH_FIELD_UT));
        out.push(ImuSample {
            t_us: (i as f64 * 1e6 / rate).round() as u64,
            accel,
            gyro,
            mag: Some(mag),
        });
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct ImuRow {
    t_us: u64,
    ax: f64,
    ay: f64,
    az: f64,
    gx: f64,
    gy: f64,
    gz: f64,
    mx: Option<f64>,
    my: Option<f64>,
    mz: Option<f64>,
}

/// CSV with header `t_us,ax,ay,az,gx,gy,gz,mx,my,mz`; empty mag columns mean no magnetometer.
pub fn write_imu_csv<W: Write>(out: W, samples: &[ImuSample]) -> Result<(), ImuError> {
    let mut w = csv::Writer::from_writer(out);
    for s in samples {
        let m = s.mag;
        w.serialize(ImuRow {
            t_us: s.t_us,
            ax: s.accel[0],
            ay: s.accel[1],
            az: s.accel[2],
            gx: s.gyro[0],
            gy: s.gyro[1],
            gz: s.gyro[2],
            mx: m.map(|m| m[0]),
            my: m.map(|m| m[1]),
            mz: m.map(|m| m[2]),
        })?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_imu_csv<R: Read>(input: R) -> Result<Vec<ImuSample>, ImuError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut out = Vec::new();
    for row in rdr.deserialize::<ImuRow>() {
        let r = row?;
        let mag = match (r.mx, r.my, r.mz) {
            (Some(x), Some(y), Some(z)) => Some([x, y, z]),
            _ => None,
        };
        out.push(ImuSample {
            t_us: r.t_us,
            accel: [r.ax, r.ay, r.az],
            gyro: [r.gx, r.gy, r.gz],
            mag,
        });
    }
    Ok(out)
}
