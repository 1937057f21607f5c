use std::io::Write;
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use breeze_core::session::{build_schedule, run_schedule, score_marked_stream, TrialRecord, TRIAL_END};
use breeze_core::signal::Signal;
use breeze_core::wire::{
    run_pair_session, run_receiver, spawn_tcp_server, spawn_ws_server, LogEntry, Role, SenderInput, SessionConfig,
    WsConfig, WsEvent,
};

use crate::io::{open_append, open_output, read_signal, write_json_line};
use crate::{IoArgs, SessionCommand};

pub fn serve(tcp: Option<u16>, ws: Option<u16>, bind: &str, trial_s: f64, results: &Option<PathBuf>) -> Result<()> {
    let mut handles = Vec::new();
    if let Some(port) = tcp {
        let l = TcpListener::bind((bind, port)).with_context(|| format!("binding tcp {bind}:{port}"))?;
        let h = spawn_tcp_server(l, SessionConfig::default(), |peer, r| match r {
            Ok(r) => eprintln!("{peer}: session done {}", serde_json::to_string(&r.stats).unwrap_or_default()),
            Err(e) => eprintln!("{peer}: session failed: {e}"),
        })?;
        eprintln!("frames on tcp://{}", h.local_addr());
        handles.push(h);
    }
    if let Some(port) = ws {
        let l = TcpListener::bind((bind, port)).with_context(|| format!("binding ws {bind}:{port}"))?;
        let sink = Mutex::new(open_append(results)?);
        let config = WsConfig {
            trial_s,
            ..WsConfig::default()
        };
        let h = spawn_ws_server(l, config, move |e| match e {
            WsEvent::Opened(peer) => log::info!("{peer}: websocket opened"),
            WsEvent::TrialResult { peer, start, result } => {
                log::info!("{peer}: trial {} r={:.3}", start.pattern_name, result.correlation);
                let rec = TrialRecord {
                    index: start.index.unwrap_or(0),
                    pattern: start.pattern_name,
                    modality: start.modality,
                    seed: start.seed,
                    result,
                };
                let mut out = sink.lock().expect("results sink");
                if let Err(e) = write_json_line(&mut *out, &rec).and_then(|_| Ok(out.flush()?)) {
                    eprintln!("writing result: {e}");
                }
            }
            WsEvent::TrialAborted { peer, start, reason } => {
                eprintln!("{peer}: trial {} aborted: {reason}", start.pattern_name)
            }
            WsEvent::Closed(peer, Err(e)) => eprintln!("{peer}: websocket closed: {e}"),
            WsEvent::Closed(peer, Ok(())) => log::info!("{peer}: websocket closed"),
        })?;
        eprintln!("json mirror on ws://{}", h.local_addr());
        handles.push(h);
    }
    for h in handles {
        h.join();
    }
    Ok(())
}

pub fn client(connect: &str, speed: f64, schedule_seed: Option<u64>, trial_s: f64, io: &IoArgs) -> Result<()> {
    if !speed.is_finite() || speed <= 0.0 {
        bail!("--speed must be positive");
    }
    let samples = read_signal(&io.input)?;
    let mut markers = Vec::new();
    if let Some(seed) = schedule_seed {
        let schedule = build_schedule(seed);
        let complete = (samples.duration_s() / trial_s + 1e-9).floor() as usize;
        for i in 0..complete.min(schedule.trials.len()) {
            let t = samples.t0_s + i as f64 * trial_s;
            markers.push((t, schedule.start_label(i)));
            markers.push((t + trial_s, TRIAL_END.to_string()));
        }
    }
    let config = SessionConfig {
        sample_rate_hz: samples.rate_hz,
        speed,
        ..SessionConfig::default()
    };
    let stream = TcpStream::connect(connect).with_context(|| format!("connecting to {connect}"))?;
    let report = run_pair_session(Role::Sender(SenderInput { samples, markers }), stream, &config)?;
    let mut out = open_output(&io.output)?;
    for f in &report.feedback {
        write_json_line(&mut out, f)?;
    }
    out.flush()?;
    eprintln!("{}", serde_json::to_string(&report.stats)?);
    Ok(())
}

pub fn session(cmd: SessionCommand) -> Result<()> {
    let SessionCommand::Run {
        schedule_seed,
        input,
        listen,
        trial_s,
        output,
    } = cmd;
    let schedule = build_schedule(schedule_seed);
    let records = if input == "live" {
        score_live(&schedule, &listen, trial_s)?
    } else {
        let s = read_signal(&Some(PathBuf::from(&input)))?;
        run_schedule(&schedule, &s, trial_s)?
    };
    if records.len() < schedule.trials.len() {
        eprintln!("scored {} of {} trials", records.len(), schedule.trials.len());
    }
    let mut out = open_append(&output)?;
    for r in &records {
        write_json_line(&mut out, r)?;
    }
    out.flush()?;
    Ok(())
}

/// Accepts one sender, records its stream and scores it. Trials come from
/// the sender's markers when present, else from the schedule back to back.
fn score_live(schedule: &breeze_core::TrialSchedule, listen: &str, trial_s: f64) -> Result<Vec<TrialRecord>> {
    let listener = TcpListener::bind(listen).with_context(|| format!("binding {listen}"))?;
    eprintln!("waiting for a sender on {}", listener.local_addr()?);
    let (stream, peer) = listener.accept()?;
    eprintln!("{peer} connected");
    let reader = stream.try_clone()?;
    let mut samples: Vec<(u64, f64)> = Vec::new();
    let mut markers: Vec<(f64, String)> = Vec::new();
    let config = SessionConfig {
        idle_timeout: std::time::Duration::from_secs(60),
        ..SessionConfig::default()
    };
    let stats = run_receiver(reader, stream, &config, |e| match e {
        LogEntry::Sample { t_us, value } => samples.push((*t_us, *value)),
        LogEntry::Marker { t_us, label } => markers.push((*t_us as f64 / 1e6, label.clone())),
        _ => {}
    })?;
    log::info!("live session: {}", serde_json::to_string(&stats)?);
    if samples.len() < 2 {
        bail!("sender delivered {} samples", samples.len());
    }
    let span_s = (samples[samples.len() - 1].0 - samples[0].0) as f64 / 1e6;
    let rate = (((samples.len() - 1) as f64 / span_s) * 1e3).round() / 1e3;
    let signal = Signal::new(rate, samples.iter().map(|s| s.1).collect()).with_start(samples[0].0 as f64 / 1e6);

    let scored = score_marked_stream(&signal, &markers, trial_s);
    if scored.is_empty() {
        return Ok(run_schedule(schedule, &signal, trial_s)?);
    }
    let mut records = Vec::new();
    for (start, r) in scored {
        match r {
            Ok(rec) => {
                if let Some(t) = start.index.and_then(|i| schedule.trials.get(i)) {
                    if t.pattern.spec() != start.pattern {
                        log::warn!("trial {} pattern {} differs from the schedule's {}", rec.index, rec.pattern, t.pattern);
                    }
                }
                records.push(rec);
            }
            Err(e) => eprintln!("trial {} not scored: {e}", start.pattern_name),
        }
    }
    Ok(records)
}
