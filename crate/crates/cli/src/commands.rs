use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use breeze_core::dsp::{extract_breathing, normalize, resample, validate_against_reference, EpochConfig};
use breeze_core::encoders::{audio_gain, haptic_intensity, visual_brightness, write_modulated_wav, ModalityFrame};
use breeze_core::features::features_from_signal;
use breeze_core::imu::{fuse_pitch, read_imu_csv, simulate_imu, write_imu_csv};
use breeze_core::patterns::{synthesize, PatternSpec};
use breeze_core::session::build_schedule;
use breeze_core::signal::{Format, Signal};
use breeze_core::{detect_peaks, dsp::simulate_belt, Extremum, PeakList};
use serde::{Deserialize, Serialize};

use crate::io::{open_input, open_output, read_signal, read_text, write_json_line};
use crate::{net, Command, IoArgs};

/// A stream annotated with its extrema, as emitted by `peaks`.
#[derive(Debug, Serialize, Deserialize)]
struct PeaksDoc {
    rate_hz: f64,
    t0_s: f64,
    peaks: Vec<Extremum>,
    troughs: Vec<Extremum>,
    values: Vec<f64>,
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth {
            pattern,
            schedule_seed,
            duration,
            rate,
            seed,
            imu,
            belt,
            pitch_amplitude,
            noise,
            format,
            io,
        } => synth(
            pattern,
            schedule_seed,
            duration,
            rate,
            seed,
            SynthOut {
                imu,
                belt,
                pitch_amplitude,
                noise,
                format: format.into(),
            },
            &io,
        ),
        Command::Fuse { beta, format, io } => {
            let samples = read_imu_csv(open_input(&io.input)?).context("reading IMU csv")?;
            write_signal(&fuse_pitch(&samples, beta)?, format.into(), &io)
        }
        Command::Extract {
            normalize: norm,
            resample: to,
            format,
            io,
        } => {
            let mut s = extract_breathing(&read_signal(&io.input)?, EpochConfig::default())?;
            if norm {
                s = normalize(&s);
            }
            if let Some(hz) = to {
                s = resample(&s, hz)?;
            }
            write_signal(&s, format.into(), &io)
        }
        Command::Peaks { io } => {
            let s = read_signal(&io.input)?;
            let p = detect_peaks(&s)?;
            let doc = PeaksDoc {
                rate_hz: s.rate_hz,
                t0_s: s.t0_s,
                peaks: p.peaks,
                troughs: p.troughs,
                values: s.values,
            };
            let mut out = open_output(&io.output)?;
            write_json_line(&mut out, &doc)?;
            out.flush()?;
            Ok(())
        }
        Command::Features { io } => {
            let text = read_text(&io.input)?;
            let (s, p) = match serde_json::from_str::<PeaksDoc>(&text) {
                Ok(d) => (
                    Signal::new(d.rate_hz, d.values).with_start(d.t0_s),
                    PeakList {
                        peaks: d.peaks,
                        troughs: d.troughs,
                    },
                ),
                Err(_) => {
                    let s = Signal::read(text.as_bytes()).context("reading stream")?;
                    let p = detect_peaks(&s)?;
                    (s, p)
                }
            };
            let f = features_from_signal(&s, &p)?;
            let mut out = open_output(&io.output)?;
            write_json_line(&mut out, &f)?;
            out.flush()?;
            Ok(())
        }
        Command::Encode {
            wav,
            audio_rate,
            seed,
            format,
            io,
        } => encode(wav.as_deref(), audio_rate, seed, format.into(), &io),
        Command::Validate { reference, io } => {
            let pendant = read_signal(&io.input)?;
            let reference = read_signal(&Some(reference))?;
            if (pendant.rate_hz - reference.rate_hz).abs() > 1e-6 {
                bail!("rates differ: {} Hz vs {} Hz", pendant.rate_hz, reference.rate_hz);
            }
            let r = validate_against_reference(&pendant.values, &reference.values, pendant.rate_hz)?;
            let mut out = open_output(&io.output)?;
            write_json_line(&mut out, &serde_json::json!({ "r": r }))?;
            out.flush()?;
            Ok(())
        }
        Command::Serve {
            tcp,
            ws,
            bind,
            trial_s,
            results,
        } => net::serve(tcp, ws, &bind, trial_s, &results),
        Command::Client {
            connect,
            speed,
            schedule_seed,
            trial_s,
            io,
        } => net::client(&connect, speed, schedule_seed, trial_s, &io),
        Command::Session { command } => net::session(command),
        Command::Schedule { seed, format, io } => {
            let s = build_schedule(seed);
            let mut out = open_output(&io.output)?;
            match Format::from(format) {
                Format::Csv => s.write_csv(&mut out)?,
                Format::Jsonl => {
                    for (i, t) in s.trials.iter().enumerate() {
                        let line = serde_json::json!({
                            "index": i,
                            "pattern": t.pattern.name(),
                            "modality": t.modality,
                            "seed": s.trial_seed(i),
                        });
                        write_json_line(&mut out, &line)?;
                    }
                }
            }
            out.flush()?;
            Ok(())
        }
    }
}

fn write_signal(s: &Signal, format: Format, io: &IoArgs) -> Result<()> {
    let mut out = open_output(&io.output)?;
    s.write(&mut out, format)?;
    out.flush()?;
    Ok(())
}

struct SynthOut {
    imu: bool,
    belt: bool,
    pitch_amplitude: f64,
    noise: f64,
    format: Format,
}

fn synth(
    pattern: Option<PatternSpec>,
    schedule_seed: Option<u64>,
    duration: f64,
    rate: f64,
    seed: u64,
    how: SynthOut,
    io: &IoArgs,
) -> Result<()> {
    let waveform = match (pattern, schedule_seed) {
        (Some(p), _) => synthesize(&p, duration, rate, seed)?,
        (None, Some(s)) => {
            let all = build_schedule(s).synthesize_targets(duration, rate)?;
            breeze_core::BreathWaveform {
                sample_rate_hz: rate,
                samples: all.values,
                cycle_marks: Vec::new(),
            }
        }
        (None, None) => unreachable!("clap requires one of them"),
    };
    if how.imu {
        let samples = simulate_imu(&waveform, how.pitch_amplitude, how.noise, seed)?;
        let mut out = open_output(&io.output)?;
        write_imu_csv(&mut out, &samples)?;
        out.flush()?;
        return Ok(());
    }
    let s = if how.belt {
        simulate_belt(&waveform)
    } else {
        waveform.to_signal()
    };
    write_signal(&s, how.format, io)
}

fn encode(wav: Option<&Path>, audio_rate: u32, seed: u64, format: Format, io: &IoArgs) -> Result<()> {
    let s = read_signal(&io.input)?;
    let mut frames = Vec::with_capacity(s.len());
    for (i, &b) in s.values.iter().enumerate() {
        let t_us = (s.time_at(i).max(0.0) * 1e6).round() as u64;
        let frame = (|| {
            Ok::<_, breeze_core::EncodeError>(ModalityFrame {
                t_us,
                brightness: visual_brightness(b)?,
                audio_gain: audio_gain(b)?,
                haptic_intensity: haptic_intensity(b)?,
            })
        })()
        .with_context(|| format!("sample {i}; normalize the stream first (`extract --normalize`)"))?;
        frames.push(frame);
    }
    let mut out = open_output(&io.output)?;
    match format {
        Format::Jsonl => {
            for f in &frames {
                write_json_line(&mut out, f)?;
            }
        }
        Format::Csv => {
            writeln!(out, "t_us,brightness,audio_gain,haptic_intensity")?;
            for f in &frames {
                writeln!(out, "{},{},{},{}", f.t_us, f.brightness, f.audio_gain, f.haptic_intensity)?;
            }
        }
    }
    out.flush()?;
    if let Some(path) = wav {
        let gains: Vec<f64> = frames.iter().map(|f| f.audio_gain).collect();
        write_modulated_wav(path, &gains, s.rate_hz, audio_rate, seed)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
