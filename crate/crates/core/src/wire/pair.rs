use std::collections::{HashMap, VecDeque};
use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::frame::{encode_frame, Frame, FrameReader, FrameType};
use super::pipeline::{FeedbackPipeline, FEEDBACK_RATE_HZ};
use super::queue::FrameQueue;
use super::WireError;
use crate::dsp::stats::quantile;
use crate::encoders::ModalityFrame;
use crate::signal::Signal;

pub const CONTROL_STREAM: u16 = 0;
pub const SAMPLE_STREAM: u16 = 1;
/// Feedback batches carry `[brightness, audio_gain, haptic_intensity]`.
pub const FEEDBACK_STREAM: u16 = 2;
pub const TARGET_STREAM: u16 = 3;
const MAX_BACKSTEP_US: u64 = 1_000_000;

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub sample_rate_hz: f64,
    pub batch_s: f64,
    pub feedback_rate_hz: f64,
    /// Pacing multiplier; 1.0 streams in real time.
    pub speed: f64,
    pub queue_capacity: usize,
    pub handshake_timeout: Duration,
    /// Longest silence tolerated from the peer once the session is running.
    pub idle_timeout: Duration,
    /// How long the sender waits for trailing feedback after its Bye.
    pub drain_timeout: Duration,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            sample_rate_hz: 24.0,
            batch_s: 0.125,
            feedback_rate_hz: FEEDBACK_RATE_HZ,
            speed: 1.0,
            queue_capacity: 256,
            handshake_timeout: Duration::from_secs(5),
            idle_timeout: Duration::from_secs(10),
            drain_timeout: Duration::from_secs(2),
        }
    }
}

/// What the sender streams: the 24 Hz carrier and timestamped marker labels
/// (seconds on the stream's clock).
#[derive(Debug, Clone)]
pub struct SenderInput {
    pub samples: Signal,
    pub markers: Vec<(f64, String)>,
}

pub enum Role {
    Sender(SenderInput),
    Receiver,
}

/// Splits a connected byte stream into independently owned halves.
pub trait Transport {
    type R: Read + Send + 'static;
    type W: Write + Send + 'static;
    fn split(self) -> std::io::Result<(Self::R, Self::W)>;
}

impl Transport for TcpStream {
    type R = TcpStream;
    type W = TcpStream;
    fn split(self) -> std::io::Result<(TcpStream, TcpStream)> {
        self.set_nodelay(true)?;
        let w = self.try_clone()?;
        Ok((self, w))
    }
}

impl<R: Read + Send + 'static, W: Write + Send + 'static> Transport for (R, W) {
    type R = R;
    type W = W;
    fn split(self) -> std::io::Result<(R, W)> {
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub count: usize,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

impl LatencySummary {
    fn from_ms(ms: &[f64]) -> Option<Self> {
        if ms.is_empty() {
            return None;
        }
        Some(LatencySummary {
            count: ms.len(),
            p50_ms: quantile(ms, 0.5),
            p95_ms: quantile(ms, 0.95),
            max_ms: ms.iter().cloned().fold(f64::MIN, f64::max),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionStats {
    pub frames_sent: u64,
    pub frames_received: u64,
    pub samples_sent: u64,
    pub samples_received: u64,
    pub feedback_frames: u64,
    pub markers: u64,
    pub dropped_frames: u64,
    pub latency: Option<LatencySummary>,
    /// Both sides exchanged Bye.
    pub clean_shutdown: bool,
    pub duration_s: f64,
}

/// Receiver-side record of everything that arrived or was produced, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogEntry {
    Sample { t_us: u64, value: f64 },
    Marker { t_us: u64, label: String },
    Breathing { t_us: u64, value: f64 },
    Feedback(ModalityFrame),
}

#[derive(Debug, Clone, Default)]
pub struct SessionReport {
    pub stats: SessionStats,
    /// Feedback received by the sender.
    pub feedback: Vec<ModalityFrame>,
    /// Receiver log.
    pub log: Vec<LogEntry>,
}

pub fn run_pair_session<T: Transport>(role: Role, transport: T, config: &SessionConfig) -> Result<SessionReport, WireError> {
    let (r, w) = transport.split()?;
    match role {
        Role::Sender(input) => run_sender(r, w, &input, config),
        Role::Receiver => {
            let mut log = Vec::new();
            let stats = run_receiver(r, w, config, |e| log.push(e.clone()))?;
            Ok(SessionReport {
                stats,
                feedback: Vec::new(),
                log,
            })
        }
    }
}

struct Endpoint {
    queue: Arc<FrameQueue>,
    sent: Arc<AtomicU64>,
    writer: Option<JoinHandle<Result<(), WireError>>>,
    inbox: Receiver<Result<Option<Frame>, WireError>>,
}

impl Endpoint {
    fn start<R: Read + Send + 'static, W: Write + Send + 'static>(reader: R, mut writer: W, capacity: usize) -> Self {
        let queue = Arc::new(FrameQueue::new(capacity));
        let sent = Arc::new(AtomicU64::new(0));
        let (q, s) = (queue.clone(), sent.clone());
        let writer = thread::spawn(move || -> Result<(), WireError> {
            loop {
                match q.pop(Duration::from_millis(50)) {
                    Some(f) => {
                        let bytes = encode_frame(&f)?;
                        writer.write_all(&bytes)?;
                        writer.flush()?;
                        s.fetch_add(1, Ordering::Relaxed);
                    }
                    None if q.is_closed_and_empty() => return Ok(()),
                    None => {}
                }
            }
        });
        let (tx, inbox) = mpsc::channel();
        thread::spawn(move || {
            let mut fr = FrameReader::new(reader);
            loop {
                let next = fr.next_frame();
                let done = !matches!(next, Ok(Some(_)));
                if tx.send(next).is_err() || done {
                    break;
                }
            }
        });
        Endpoint {
            queue,
            sent,
            writer: Some(writer),
            inbox,
        }
    }

    fn recv(&self, timeout: Duration) -> Result<Option<Frame>, WireError> {
        match self.inbox.recv_timeout(timeout) {
            Ok(r) => r,
            Err(RecvTimeoutError::Timeout) => Err(WireError::Timeout),
            Err(RecvTimeoutError::Disconnected) => Ok(None),
        }
    }

    fn finish(&mut self) -> Result<(), WireError> {
        self.queue.close();
        match self.writer.take() {
            Some(h) => h.join().unwrap_or(Err(WireError::Disconnected)),
            None => Ok(()),
        }
    }
}

impl Drop for Endpoint {
    fn drop(&mut self) {
        self.queue.close();
    }
}

fn handshake(ep: &Endpoint, timeout: Duration, expect: FrameType) -> Result<Frame, WireError> {
    match ep.recv(timeout) {
        Ok(Some(f)) if f.frame_type == expect => Ok(f),
        Ok(Some(f)) => Err(WireError::ProtocolViolation(format!(
            "expected {expect:?} to open the session, got {:?}",
            f.frame_type
        ))),
        Ok(None) => Err(WireError::Disconnected),
        Err(WireError::Timeout) => Err(WireError::HandshakeTimeout),
        Err(e) => Err(e),
    }
}

fn info_value<'a>(info: &'a str, key: &str) -> Option<&'a str> {
    info.split_whitespace()
        .filter_map(|kv| kv.split_once('='))
        .find(|(k, _)| *k == key)
        .map(|(_, v)| v)
}

fn us(t_s: f64) -> u64 {
    (t_s.max(0.0) * 1e6).round() as u64
}

fn run_sender<R: Read + Send + 'static, W: Write + Send + 'static>(
    reader: R,
    writer: W,
    input: &SenderInput,
    config: &SessionConfig,
) -> Result<SessionReport, WireError> {
    let started = Instant::now();
    let mut ep = Endpoint::start(reader, writer, config.queue_capacity);
    let rate = input.samples.rate_hz;
    ep.queue.push(Frame::hello(CONTROL_STREAM, 0, &format!("breeze/1 role=sender rate_hz={rate}")));
    handshake(&ep, config.handshake_timeout, FrameType::Ack)?;

    let mut report = SessionReport::default();
    let mut stats = SessionStats::default();
    let mut latencies_ms = Vec::new();
    // (time of the batch's last sample, when it was queued)
    let mut in_flight: VecDeque<(u64, Instant)> = VecDeque::new();
    let mut peer_bye = false;

    let mut handle = |f: Frame,
                      stats: &mut SessionStats,
                      in_flight: &mut VecDeque<(u64, Instant)>,
                      report: &mut SessionReport|
     -> Result<bool, WireError> {
        stats.frames_received += 1;
        match f.frame_type {
            FrameType::SampleBatch if f.stream_id == FEEDBACK_STREAM => {
                let v = f.sample_values()?;
                if v.len() != 3 {
                    return Err(WireError::ProtocolViolation(format!("feedback batch of {} values", v.len())));
                }
                while in_flight.len() > 1 && in_flight[0].0 < f.t_us {
                    in_flight.pop_front();
                }
                if let Some(&(_, at)) = in_flight.front() {
                    latencies_ms.push(at.elapsed().as_secs_f64() * 1e3);
                }
                stats.feedback_frames += 1;
                report.feedback.push(ModalityFrame {
                    t_us: f.t_us,
                    brightness: v[0] as f64,
                    audio_gain: v[1] as f64,
                    haptic_intensity: v[2] as f64,
                });
                Ok(false)
            }
            FrameType::SampleBatch | FrameType::Marker => Ok(false),
            FrameType::Bye => Ok(true),
            other => Err(WireError::ProtocolViolation(format!("unexpected {other:?} mid-session"))),
        }
    };

    let batch_len = ((config.batch_s * rate).round() as usize).max(1);
    let mut markers: Vec<(u64, &str)> = input.markers.iter().map(|(t, l)| (us(*t), l.as_str())).collect();
    markers.sort_by_key(|m| m.0);
    let mut next_marker = 0;
    let t_of = |i: usize| us(input.samples.time_at(i));
    let mut last_t = 0;

    let clock = Instant::now();
    for (k, chunk) in input.samples.values.chunks(batch_len).enumerate() {
        let due = clock + Duration::from_secs_f64((k + 1) as f64 * config.batch_s / config.speed);
        loop {
            let now = Instant::now();
            if now >= due {
                break;
            }
            match ep.recv(due - now) {
                Ok(Some(f)) => peer_bye |= handle(f, &mut stats, &mut in_flight, &mut report)?,
                Ok(None) | Err(WireError::Timeout) => {}
                Err(e) => return Err(e),
            }
        }
        if peer_bye {
            break;
        }
        let base = k * batch_len;
        let mut start = 0;
        for j in 0..chunk.len() {
            let t = t_of(base + j);
            // A marker goes out just before the first sample at or after its time.
            while next_marker < markers.len() && markers[next_marker].0 <= t {
                if j > start {
                    push_batch(&ep, t_of(base + start), &chunk[start..j]);
                }
                start = j;
                let (mt, label) = markers[next_marker];
                ep.queue.push(Frame::marker(SAMPLE_STREAM, mt, label)?);
                stats.markers += 1;
                next_marker += 1;
            }
        }
        if start < chunk.len() {
            push_batch(&ep, t_of(base + start), &chunk[start..]);
        }
        last_t = t_of(base + chunk.len() - 1);
        in_flight.push_back((last_t, Instant::now()));
        stats.samples_sent += chunk.len() as u64;
    }
    for &(mt, label) in &markers[next_marker..] {
        ep.queue.push(Frame::marker(SAMPLE_STREAM, mt.max(last_t), label)?);
        stats.markers += 1;
    }
    ep.queue.push(Frame::bye(CONTROL_STREAM, last_t));

    let deadline = Instant::now() + config.drain_timeout;
    while !peer_bye {
        let now = Instant::now();
        if now >= deadline {
            break;
        }
        match ep.recv(deadline - now) {
            Ok(Some(f)) => peer_bye |= handle(f, &mut stats, &mut in_flight, &mut report)?,
            Ok(None) | Err(WireError::Timeout) => break,
            Err(e) => return Err(e),
        }
    }
    ep.finish()?;
    stats.frames_sent = ep.sent.load(Ordering::Relaxed);
    stats.dropped_frames = ep.queue.dropped();
    stats.latency = LatencySummary::from_ms(&latencies_ms);
    stats.clean_shutdown = peer_bye;
    stats.duration_s = started.elapsed().as_secs_f64();
    report.stats = stats;
    Ok(report)
}

fn push_batch(ep: &Endpoint, t_us: u64, values: &[f64]) {
    let v: Vec<f32> = values.iter().map(|&x| x as f32).collect();
    ep.queue.push(Frame::samples(SAMPLE_STREAM, t_us, &v));
}

/// Receiver role: acknowledges the sender, runs every incoming sample
/// through the feedback pipeline and returns a feedback frame per output.
/// `on_event` sees each log entry as it happens.
pub fn run_receiver<R, W, F>(reader: R, writer: W, config: &SessionConfig, mut on_event: F) -> Result<SessionStats, WireError>
where
    R: Read + Send + 'static,
    W: Write + Send + 'static,
    F: FnMut(&LogEntry),
{
    let started = Instant::now();
    let mut ep = Endpoint::start(reader, writer, config.queue_capacity);
    let result = receive_loop(&ep, config, &mut on_event);
    let finished = ep.finish();
    let mut stats = result?;
    finished?;
    stats.frames_sent = ep.sent.load(Ordering::Relaxed);
    stats.dropped_frames = ep.queue.dropped();
    stats.duration_s = started.elapsed().as_secs_f64();
    Ok(stats)
}

fn receive_loop<F: FnMut(&LogEntry)>(ep: &Endpoint, config: &SessionConfig, on_event: &mut F) -> Result<SessionStats, WireError> {
    let hello = handshake(ep, config.handshake_timeout, FrameType::Hello)?;
    let mut stats = SessionStats {
        frames_received: 1,
        ..Default::default()
    };
    let rate = info_value(hello.text().unwrap_or(""), "rate_hz")
        .and_then(|v| v.parse::<f64>().ok())
        .filter(|r| *r > 0.0)
        .unwrap_or(config.sample_rate_hz);
    ep.queue.push(Frame::ack(CONTROL_STREAM, hello.t_us, &format!("breeze/1 role=receiver rate_hz={rate}")));
    let mut pipeline = FeedbackPipeline::new(rate, config.feedback_rate_hz)
        .map_err(|e| WireError::ProtocolViolation(e.to_string()))?;
    let mut last_t: HashMap<u16, u64> = HashMap::new();
    let mut outputs = Vec::new();

    loop {
        let f = match ep.recv(config.idle_timeout) {
            Ok(Some(f)) => f,
            Ok(None) => return Ok(stats),
            Err(WireError::UnknownType(t)) => {
                return Err(WireError::ProtocolViolation(format!("unknown frame type 0x{t:02x} mid-session")))
            }
            Err(e) => return Err(e),
        };
        stats.frames_received += 1;
        let prev = last_t.entry(f.stream_id).or_insert(f.t_us);
        if f.t_us + MAX_BACKSTEP_US < *prev {
            return Err(WireError::ProtocolViolation(format!(
                "stream {} went back in time from {} to {} us",
                f.stream_id, prev, f.t_us
            )));
        }
        *prev = (*prev).max(f.t_us);
        match f.frame_type {
            FrameType::SampleBatch => {
                let values = f.sample_values()?;
                for (i, &v) in values.iter().enumerate() {
                    let t = f.t_us + us(i as f64 / rate);
                    stats.samples_received += 1;
                    on_event(&LogEntry::Sample { t_us: t, value: v as f64 });
                    outputs.clear();
                    pipeline.push(t, v as f64, &mut outputs);
                    for &(ft, b) in &outputs {
                        on_event(&LogEntry::Breathing { t_us: ft, value: b });
                        let m = ModalityFrame::encode(ft, b);
                        on_event(&LogEntry::Feedback(m));
                        ep.queue.push(Frame::samples(
                            FEEDBACK_STREAM,
                            ft,
                            &[m.brightness as f32, m.audio_gain as f32, m.haptic_intensity as f32],
                        ));
                        stats.feedback_frames += 1;
                    }
                }
            }
            FrameType::Marker => {
                stats.markers += 1;
                on_event(&LogEntry::Marker {
                    t_us: f.t_us,
                    label: f.text()?.to_owned(),
                });
            }
            FrameType::Bye => {
                ep.queue.push(Frame::bye(CONTROL_STREAM, f.t_us));
                stats.clean_shutdown = true;
                return Ok(stats);
            }
            other => return Err(WireError::ProtocolViolation(format!("unexpected {other:?} mid-session"))),
        }
    }
}
