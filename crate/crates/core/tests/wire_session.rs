use std::io::Write;
use std::net::{TcpListener, TcpStream};
use std::thread;
use std::time::Duration;

use breeze_core::patterns::{synthesize, PatternSpec};
use breeze_core::wire::{
    encode_frame, run_pair_session, Frame, LogEntry, Role, SenderInput, SessionConfig, WireError, SAMPLE_STREAM,
};

fn fast() -> SessionConfig {
    SessionConfig {
        speed: 20.0,
        ..SessionConfig::default()
    }
}

fn pair(input: SenderInput, config: SessionConfig) -> (breeze_core::wire::SessionReport, breeze_core::wire::SessionReport) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let rc = config.clone();
    let rx = thread::spawn(move || {
        let (s, _) = listener.accept().unwrap();
        run_pair_session(Role::Receiver, s, &rc).unwrap()
    });
    let s = TcpStream::connect(addr).unwrap();
    let tx = run_pair_session(Role::Sender(input), s, &config).unwrap();
    (tx, rx.join().unwrap())
}

#[test]
fn forty_seconds_yield_four_hundred_feedback_frames() {
    let w = synthesize(&PatternSpec::baseline(), 40.0, 24.0, 0).unwrap();
    let (tx, rx) = pair(
        SenderInput {
            samples: w.to_signal(),
            markers: vec![],
        },
        fast(),
    );
    assert!((396..=404).contains(&tx.feedback.len()), "{}", tx.feedback.len());
    assert_eq!(rx.stats.feedback_frames as usize, tx.feedback.len());
    assert_eq!(rx.stats.samples_received, 960);
    assert!(tx.stats.clean_shutdown && rx.stats.clean_shutdown);
    assert_eq!(tx.stats.dropped_frames, 0);
    assert!(tx.feedback.windows(2).all(|p| p[0].t_us < p[1].t_us));
    let lat = tx.stats.latency.unwrap();
    assert!(lat.p95_ms < 50.0, "{lat:?}");
}

#[test]
fn markers_arrive_between_bracketing_samples() {
    let w = synthesize(&PatternSpec::baseline(), 12.0, 24.0, 0).unwrap();
    let marks = vec![(0.0, "trial_start:pattern=Baseline;modality=visual".to_string()), (5.02, "mid".into()), (11.99, "trial_end".into())];
    let (_, rx) = pair(
        SenderInput {
            samples: w.to_signal(),
            markers: marks.clone(),
        },
        fast(),
    );
    let seq: Vec<&LogEntry> = rx
        .log
        .iter()
        .filter(|e| matches!(e, LogEntry::Sample { .. } | LogEntry::Marker { .. }))
        .collect();
    for (t_s, label) in &marks {
        let t = (t_s * 1e6).round() as u64;
        let i = seq
            .iter()
            .position(|e| matches!(e, LogEntry::Marker { label: l, .. } if l == label))
            .unwrap();
        let before = seq[..i].iter().rev().find_map(|e| match e {
            LogEntry::Sample { t_us, .. } => Some(*t_us),
            _ => None,
        });
        let after = seq[i + 1..].iter().find_map(|e| match e {
            LogEntry::Sample { t_us, .. } => Some(*t_us),
            _ => None,
        });
        assert!(before.is_none_or(|b| b < t), "{label}: {before:?} !< {t}");
        assert!(after.is_none_or(|a| a >= t), "{label}: {after:?} !>= {t}");
    }
}

fn raw_receiver() -> (TcpStream, thread::JoinHandle<Result<breeze_core::wire::SessionReport, WireError>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let h = thread::spawn(move || {
        let (s, _) = listener.accept().unwrap();
        let cfg = SessionConfig {
            handshake_timeout: Duration::from_millis(300),
            ..SessionConfig::default()
        };
        run_pair_session(Role::Receiver, s, &cfg)
    });
    (TcpStream::connect(addr).unwrap(), h)
}

fn send(s: &mut TcpStream, f: Frame) {
    s.write_all(&encode_frame(&f).unwrap()).unwrap();
}

#[test]
fn bye_mid_stream_finalizes() {
    let (mut s, h) = raw_receiver();
    send(&mut s, Frame::hello(0, 0, "breeze/1 role=sender rate_hz=24"));
    for k in 0..40u64 {
        send(&mut s, Frame::samples(SAMPLE_STREAM, k * 125_000, &[0.1, 0.2, 0.3]));
    }
    send(&mut s, Frame::bye(0, 5_000_000));
    let r = h.join().unwrap().unwrap();
    assert!(r.stats.clean_shutdown);
    assert_eq!(r.stats.samples_received, 120);
    assert!(r.stats.feedback_frames > 0);
}

#[test]
fn silent_peer_times_out() {
    let (_s, h) = raw_receiver();
    assert!(matches!(h.join().unwrap(), Err(WireError::HandshakeTimeout)));
}

#[test]
fn time_reversal_is_a_violation() {
    let (mut s, h) = raw_receiver();
    send(&mut s, Frame::hello(0, 0, "breeze/1 rate_hz=24"));
    send(&mut s, Frame::samples(SAMPLE_STREAM, 5_000_000, &[0.1]));
    send(&mut s, Frame::samples(SAMPLE_STREAM, 3_000_000, &[0.1]));
    assert!(matches!(h.join().unwrap(), Err(WireError::ProtocolViolation(_))));
}

#[test]
fn unknown_type_mid_session_is_a_violation() {
    let (mut s, h) = raw_receiver();
    send(&mut s, Frame::hello(0, 0, ""));
    let mut bad = encode_frame(&Frame::bye(0, 0)).unwrap();
    bad[4] = 0x7f;
    s.write_all(&bad).unwrap();
    assert!(matches!(h.join().unwrap(), Err(WireError::ProtocolViolation(_))));
}

/// Writes slowly; reads one Ack then end of stream.
struct SlowPeer {
    ack: Vec<u8>,
}

impl std::io::Read for SlowPeer {
    fn read(&mut self, out: &mut [u8]) -> std::io::Result<usize> {
        let n = self.ack.len().min(out.len());
        out[..n].copy_from_slice(&self.ack[..n]);
        self.ack.drain(..n);
        Ok(n)
    }
}

struct SlowSink;

impl Write for SlowSink {
    fn write(&mut self, b: &[u8]) -> std::io::Result<usize> {
        thread::sleep(Duration::from_millis(2));
        Ok(b.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

#[test]
fn slow_consumer_drops_oldest_within_bound() {
    let w = synthesize(&PatternSpec::baseline(), 40.0, 24.0, 0).unwrap();
    let cfg = SessionConfig {
        speed: 400.0,
        queue_capacity: 8,
        drain_timeout: Duration::from_millis(50),
        ..SessionConfig::default()
    };
    let ack = encode_frame(&Frame::ack(0, 0, "")).unwrap();
    let input = SenderInput {
        samples: w.to_signal(),
        markers: vec![],
    };
    let r = run_pair_session(Role::Sender(input), (SlowPeer { ack }, SlowSink), &cfg).unwrap();
    assert!(r.stats.dropped_frames > 0);
    // Hello, 320 batches and Bye: each one was either written or dropped.
    assert_eq!(r.stats.frames_sent + r.stats.dropped_frames, 322);
}
