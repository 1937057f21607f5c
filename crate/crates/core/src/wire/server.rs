//! Long-running listeners: a TCP frame server hosting one receiver session
//! per connection, and a WebSocket server speaking the JSON mirror that also
//! scores mimic trials.

use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde_json::Value;
use tungstenite::{Message, WebSocket};

use super::frame::MAX_MARKER_BYTES;
use super::json::JsonFrame;
use super::pair::{
    run_pair_session, Role, SessionConfig, SessionReport, CONTROL_STREAM, FEEDBACK_STREAM, SAMPLE_STREAM, TARGET_STREAM,
};
use super::pipeline::FeedbackPipeline;
use super::WireError;
use crate::dsp::validate::preprocess;
use crate::encoders::ModalityFrame;
use crate::patterns::synthesize;
use crate::session::{
    best_lag_correlation, parse_trial_start, run_trial, TrialResult, TrialStart, MAX_LAG_S, TRIAL_END, TRIAL_START_PREFIX,
};
use crate::signal::Signal;

const ACCEPT_POLL: Duration = Duration::from_millis(20);

/// A listener running on its own thread.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting; sessions already running finish on their own.
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    /// Blocks until the accept loop exits, which only happens on a listener
    /// error.
    pub fn join(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn spawn_accept_loop<F>(listener: TcpListener, on_conn: F) -> io::Result<ServerHandle>
where
    F: Fn(TcpStream, SocketAddr) + Send + Sync + 'static,
{
    let addr = listener.local_addr()?;
    listener.set_nonblocking(true)?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let on_conn = Arc::new(on_conn);
    let thread = thread::spawn(move || {
        while !flag.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, peer)) => {
                    if let Err(e) = stream.set_nonblocking(false) {
                        log::warn!("{peer}: {e}");
                        continue;
                    }
                    let f = on_conn.clone();
                    thread::spawn(move || f(stream, peer));
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(ACCEPT_POLL),
                Err(e) => {
                    log::error!("accept failed: {e}");
                    break;
                }
            }
        }
    });
    Ok(ServerHandle {
        addr,
        stop,
        thread: Some(thread),
    })
}

/// Accepts frame connections and runs the receiver role on each, one thread
/// per session. `on_done` sees every finished session.
pub fn spawn_tcp_server<F>(listener: TcpListener, config: SessionConfig, on_done: F) -> io::Result<ServerHandle>
where
    F: Fn(SocketAddr, Result<SessionReport, WireError>) + Send + Sync + 'static,
{
    spawn_accept_loop(listener, move |stream, peer| {
        log::info!("{peer}: frame session opened");
        on_done(peer, run_pair_session(Role::Receiver, stream, &config));
    })
}

#[derive(Debug, Clone)]
pub struct WsConfig {
    pub sample_rate_hz: f64,
    pub feedback_rate_hz: f64,
    pub trial_s: f64,
    /// Stream time between live score markers.
    pub score_interval_s: f64,
    /// Live scores start once this much of the trial has arrived.
    pub min_score_s: f64,
}

impl Default for WsConfig {
    fn default() -> Self {
        WsConfig {
            sample_rate_hz: 24.0,
            feedback_rate_hz: super::pipeline::FEEDBACK_RATE_HZ,
            trial_s: crate::session::TRIAL_S,
            score_interval_s: 0.25,
            min_score_s: 4.0,
        }
    }
}

#[derive(Debug)]
pub enum WsEvent {
    Opened(SocketAddr),
    TrialResult {
        peer: SocketAddr,
        start: TrialStart,
        result: TrialResult,
    },
    TrialAborted {
        peer: SocketAddr,
        start: TrialStart,
        reason: String,
    },
    Closed(SocketAddr, Result<(), WireError>),
}

/// Accepts WebSocket clients speaking the JSON frame mirror. Each sample
/// batch on the sample stream is answered with feedback on the feedback
/// stream; `trial_start`/`trial_end` markers bracket a scored trial with
/// `score:` markers streamed while it runs.
pub fn spawn_ws_server<F>(listener: TcpListener, config: WsConfig, on_event: F) -> io::Result<ServerHandle>
where
    F: Fn(WsEvent) + Send + Sync + 'static,
{
    let on_event = Arc::new(on_event);
    spawn_accept_loop(listener, move |stream, peer| {
        on_event(WsEvent::Opened(peer));
        let result = match tungstenite::accept(stream) {
            Ok(ws) => WsSession::new(ws, peer, &config, on_event.as_ref()).run(),
            Err(e) => Err(WireError::ProtocolViolation(format!("websocket handshake: {e}"))),
        };
        on_event(WsEvent::Closed(peer, result));
    })
}

struct ActiveTrial {
    start: TrialStart,
    t0_us: u64,
    values: Vec<f64>,
    /// Target at the input rate, synthesized once for live scoring.
    target: Vec<f64>,
    next_score_s: f64,
}

struct WsSession<'a, F: Fn(WsEvent)> {
    ws: WebSocket<TcpStream>,
    peer: SocketAddr,
    config: &'a WsConfig,
    on_event: &'a F,
    rate_hz: f64,
    pipeline: Option<FeedbackPipeline>,
    trial: Option<ActiveTrial>,
    outputs: Vec<(u64, f64)>,
}

impl<'a, F: Fn(WsEvent)> WsSession<'a, F> {
    fn new(ws: WebSocket<TcpStream>, peer: SocketAddr, config: &'a WsConfig, on_event: &'a F) -> Self {
        WsSession {
            ws,
            peer,
            config,
            on_event,
            rate_hz: config.sample_rate_hz,
            pipeline: None,
            trial: None,
            outputs: Vec::new(),
        }
    }

    fn send(&mut self, f: &JsonFrame) -> Result<(), WireError> {
        self.ws.send(Message::text(f.to_json())).map_err(ws_err)
    }

    fn marker(&mut self, t_us: u64, label: String) -> Result<(), WireError> {
        self.send(&JsonFrame::Marker {
            stream_id: CONTROL_STREAM,
            t_us,
            label,
        })
    }

    fn run(mut self) -> Result<(), WireError> {
        let result = self.serve();
        if let Some(t) = self.trial.take() {
            (self.on_event)(WsEvent::TrialAborted {
                peer: self.peer,
                start: t.start,
                reason: "connection closed mid-trial".into(),
            });
        }
        result
    }

    fn serve(&mut self) -> Result<(), WireError> {
        loop {
            let msg = match self.ws.read() {
                Ok(m) => m,
                Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(()),
                Err(e) => return Err(ws_err(e)),
            };
            let text = match msg {
                Message::Text(t) => t,
                Message::Close(_) => return Ok(()),
                Message::Binary(_) => {
                    self.marker(0, "error:binary frames are not accepted here".into())?;
                    continue;
                }
                _ => continue,
            };
            let frame = match JsonFrame::parse(&text) {
                Ok(f) => f,
                Err(e) => {
                    self.marker(0, format!("error:{e}"))?;
                    continue;
                }
            };
            if !self.handle(frame)? {
                let _ = self.ws.close(None);
                // Drain until the close handshake completes.
                while self.ws.read().is_ok() {}
                return Ok(());
            }
        }
    }

    /// Returns false once the peer said Bye.
    fn handle(&mut self, frame: JsonFrame) -> Result<bool, WireError> {
        match frame {
            JsonFrame::Hello { t_us, info, .. } => {
                if let Some(r) = info
                    .split_whitespace()
                    .filter_map(|kv| kv.strip_prefix("rate_hz="))
                    .find_map(|v| v.parse::<f64>().ok())
                    .filter(|r| *r > 0.0)
                {
                    self.rate_hz = r;
                }
                self.pipeline = None;
                let info = format!("breeze/1 role=receiver rate_hz={}", self.rate_hz);
                self.send(&JsonFrame::Ack {
                    stream_id: CONTROL_STREAM,
                    t_us,
                    info,
                })?;
            }
            JsonFrame::SampleBatch {
                stream_id: SAMPLE_STREAM,
                t_us,
                values,
            } => self.on_samples(t_us, &values)?,
            JsonFrame::SampleBatch { .. } | JsonFrame::Ack { .. } => {}
            JsonFrame::Marker { t_us, label, .. } => self.on_marker(t_us, &label)?,
            JsonFrame::Bye { t_us, .. } => {
                self.send(&JsonFrame::Bye {
                    stream_id: CONTROL_STREAM,
                    t_us,
                })?;
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn on_samples(&mut self, t_us: u64, values: &[f32]) -> Result<(), WireError> {
        if self.pipeline.is_none() {
            let p = FeedbackPipeline::new(self.rate_hz, self.config.feedback_rate_hz)
                .map_err(|e| WireError::ProtocolViolation(e.to_string()))?;
            self.pipeline = Some(p);
        }
        let mut outputs = std::mem::take(&mut self.outputs);
        outputs.clear();
        let pipeline = self.pipeline.as_mut().expect("created above");
        for (i, &v) in values.iter().enumerate() {
            let t = t_us + (i as f64 * 1e6 / self.rate_hz).round() as u64;
            pipeline.push(t, v as f64, &mut outputs);
        }
        for &(ft, b) in &outputs {
            let m = ModalityFrame::encode(ft, b);
            self.send(&JsonFrame::SampleBatch {
                stream_id: FEEDBACK_STREAM,
                t_us: ft,
                values: vec![m.brightness as f32, m.audio_gain as f32, m.haptic_intensity as f32],
            })?;
        }
        self.outputs = outputs;

        let rate = self.rate_hz;
        let Some(trial) = self.trial.as_mut() else {
            return Ok(());
        };
        trial.values.extend(values.iter().map(|&v| v as f64));
        let elapsed_s = trial.values.len() as f64 / rate;
        if elapsed_s + 1e-9 < trial.next_score_s {
            return Ok(());
        }
        while trial.next_score_s <= elapsed_s + 1e-9 {
            trial.next_score_s += self.config.score_interval_s;
        }
        let label = live_score(trial, rate, elapsed_s);
        let t = trial.t0_us + (elapsed_s * 1e6).round() as u64;
        self.marker(t, label)
    }

    fn on_marker(&mut self, t_us: u64, label: &str) -> Result<(), WireError> {
        if label.starts_with(TRIAL_START_PREFIX) {
            let start = match parse_trial_start(label) {
                Ok(s) => s,
                Err(e) => return self.marker(t_us, format!("error:{e}")),
            };
            if let Some(prev) = self.trial.take() {
                (self.on_event)(WsEvent::TrialAborted {
                    peer: self.peer,
                    start: prev.start,
                    reason: "superseded by a new trial_start".into(),
                });
            }
            let target = match synthesize(&start.pattern, self.config.trial_s, self.rate_hz, start.seed) {
                Ok(w) => w.samples,
                Err(e) => return self.marker(t_us, format!("error:{e}")),
            };
            // The target at the feedback rate, for display.
            if let Ok(w) = synthesize(&start.pattern, self.config.trial_s, self.config.feedback_rate_hz, start.seed) {
                self.send(&JsonFrame::SampleBatch {
                    stream_id: TARGET_STREAM,
                    t_us,
                    values: w.samples.iter().map(|&v| v as f32).collect(),
                })?;
            }
            self.trial = Some(ActiveTrial {
                start,
                t0_us: t_us,
                values: Vec::new(),
                target,
                next_score_s: self.config.min_score_s,
            });
        } else if label == TRIAL_END {
            let Some(trial) = self.trial.take() else {
                return self.marker(t_us, "error:trial_end without an active trial".into());
            };
            let input = Signal::new(self.rate_hz, trial.values);
            match run_trial(&trial.start.pattern, &input, self.config.trial_s, trial.start.seed) {
                Ok(result) => {
                    self.marker(t_us, result_label(&result))?;
                    (self.on_event)(WsEvent::TrialResult {
                        peer: self.peer,
                        start: trial.start,
                        result,
                    });
                }
                Err(e) => {
                    self.marker(t_us, format!("trial_error:{e}"))?;
                    (self.on_event)(WsEvent::TrialAborted {
                        peer: self.peer,
                        start: trial.start,
                        reason: e.to_string(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// `score:r=R;lag_s=L;elapsed_s=E`, with `r=nan` when either series is flat.
fn live_score(trial: &ActiveTrial, rate: f64, elapsed_s: f64) -> String {
    let n = trial.values.len().min(trial.target.len());
    let scored = preprocess(&trial.target[..n], rate)
        .and_then(|a| preprocess(&trial.values[..n], rate).map(|b| (a, b)))
        .and_then(|(a, b)| best_lag_correlation(&a, &b, (MAX_LAG_S * rate).round() as usize));
    match scored {
        Ok((r, lag)) => format!("score:r={r:.4};lag_s={:.3};elapsed_s={elapsed_s:.2}", lag as f64 / rate),
        Err(_) => format!("score:r=nan;elapsed_s={elapsed_s:.2}"),
    }
}

/// `trial_result:{json}` with numbers rounded so the label fits a marker.
fn result_label(result: &TrialResult) -> String {
    fn round(v: &mut Value) {
        match v {
            Value::Number(n) => {
                if let Some(f) = n.as_f64().filter(|_| !n.is_i64() && !n.is_u64()) {
                    *v = Value::from((f * 1e6).round() / 1e6);
                }
            }
            Value::Object(m) => m.values_mut().for_each(round),
            Value::Array(a) => a.iter_mut().for_each(round),
            _ => {}
        }
    }
    let mut v = serde_json::to_value(result).unwrap_or(Value::Null);
    round(&mut v);
    let label = format!("trial_result:{v}");
    if label.len() <= MAX_MARKER_BYTES {
        return label;
    }
    format!(
        "trial_result:{}",
        serde_json::json!({
            "correlation": v["correlation"],
            "best_lag_s": v["best_lag_s"],
            "pace_delta_bpm": v["pace_delta_bpm"],
        })
    )
}

fn ws_err(e: tungstenite::Error) -> WireError {
    match e {
        tungstenite::Error::Io(e) => WireError::Io(e),
        tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed => WireError::Disconnected,
        other => WireError::ProtocolViolation(other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::BreathFeatures;

    #[test]
    fn result_label_fits_a_marker() {
        let f = BreathFeatures {
            pace_bpm: 15.000000000000002,
            inout_diff_s: -0.123456789012345,
            hold_in_s: 0.0,
            hold_out_s: 2.0000000000000004,
            amplitude_mean: 0.584_123_456_789_012_3,
            variability: 0.012345678901234567,
        };
        let r = TrialResult {
            correlation: 0.987654321098765,
            best_lag_s: 0.125,
            target_features: Some(f),
            input_features: Some(f),
            pace_delta_bpm: Some(1e-15),
        };
        let label = result_label(&r);
        assert!(label.len() <= MAX_MARKER_BYTES);
        let back: TrialResult = serde_json::from_str(label.strip_prefix("trial_result:").unwrap()).unwrap();
        assert!((back.correlation - r.correlation).abs() < 1e-6);
        assert_eq!(back.target_features.unwrap().hold_out_s, 2.0);
    }
}
