//! Frame format and paired streaming between a sensor endpoint and a
//! feedback endpoint.
//!
//! Frame layout (little-endian, no padding):
//! `"BRZ1" | type u8 | stream_id u16 | t_us u64 | payload_len u16 | payload`.

use thiserror::Error;

pub mod frame;
pub mod json;
pub mod pair;
pub mod pipeline;
pub mod queue;
pub mod server;

pub use frame::{decode_frame, encode_frame, Frame, FrameReader, FrameType, HEADER_LEN, MAX_MARKER_BYTES};
pub use json::JsonFrame;
pub use pair::{
    run_pair_session, run_receiver, LatencySummary, LogEntry, Role, SenderInput, SessionConfig, SessionReport,
    SessionStats, Transport, CONTROL_STREAM, FEEDBACK_STREAM, SAMPLE_STREAM, TARGET_STREAM,
};
pub use pipeline::{FeedbackPipeline, FEEDBACK_RATE_HZ};
pub use queue::FrameQueue;
pub use server::{spawn_tcp_server, spawn_ws_server, ServerHandle, WsConfig, WsEvent};

#[derive(Debug, Error)]
pub enum WireError {
    #[error("payload of {0} bytes exceeds 65535")]
    PayloadTooLarge(usize),
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unknown frame type 0x{0:02x}")]
    UnknownType(u8),
    #[error("truncated frame: need {needed} bytes")]
    Truncated { needed: usize },
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
    #[error("no handshake within the timeout")]
    HandshakeTimeout,
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("timed out waiting for the peer")]
    Timeout,
    #[error("peer disconnected mid-frame")]
    Disconnected,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
