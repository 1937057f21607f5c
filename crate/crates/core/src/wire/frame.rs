use std::io::Read;

use super::WireError;

pub const MAGIC: [u8; 4] = *b"BRZ1";
pub const HEADER_LEN: usize = 17;
pub const MAX_PAYLOAD: usize = u16::MAX as usize;
pub const MAX_MARKER_BYTES: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FrameType {
    Hello = 0x01,
    Ack = 0x02,
    SampleBatch = 0x03,
    Marker = 0x04,
    Bye = 0x05,
}

impl TryFrom<u8> for FrameType {
    type Error = WireError;
    fn try_from(b: u8) -> Result<Self, WireError> {
        Ok(match b {
            0x01 => FrameType::Hello,
            0x02 => FrameType::Ack,
            0x03 => FrameType::SampleBatch,
            0x04 => FrameType::Marker,
            0x05 => FrameType::Bye,
            other => return Err(WireError::UnknownType(other)),
        })
    }
}

/// One protocol unit. Payload meaning depends on the type: text for
/// Hello/Ack/Bye, little-endian `f32`s for SampleBatch, a UTF-8 label for
/// Marker.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub frame_type: FrameType,
    pub stream_id: u16,
    pub t_us: u64,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(frame_type: FrameType, stream_id: u16, t_us: u64, payload: Vec<u8>) -> Self {
        Frame {
            frame_type,
            stream_id,
            t_us,
            payload,
        }
    }

    pub fn hello(stream_id: u16, t_us: u64, info: &str) -> Self {
        Self::new(FrameType::Hello, stream_id, t_us, info.as_bytes().to_vec())
    }

    pub fn ack(stream_id: u16, t_us: u64, info: &str) -> Self {
        Self::new(FrameType::Ack, stream_id, t_us, info.as_bytes().to_vec())
    }

    pub fn bye(stream_id: u16, t_us: u64) -> Self {
        Self::new(FrameType::Bye, stream_id, t_us, Vec::new())
    }

    pub fn samples(stream_id: u16, t_us: u64, values: &[f32]) -> Self {
        let payload = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        Self::new(FrameType::SampleBatch, stream_id, t_us, payload)
    }

    pub fn marker(stream_id: u16, t_us: u64, label: &str) -> Result<Self, WireError> {
        if label.len() > MAX_MARKER_BYTES {
            return Err(WireError::MalformedPayload(format!(
                "marker label is {} bytes, limit {MAX_MARKER_BYTES}",
                label.len()
            )));
        }
        Ok(Self::new(FrameType::Marker, stream_id, t_us, label.as_bytes().to_vec()))
    }

    pub fn sample_values(&self) -> Result<Vec<f32>, WireError> {
        if self.frame_type != FrameType::SampleBatch || !self.payload.len().is_multiple_of(4) {
            return Err(WireError::MalformedPayload("not a sample batch".into()));
        }
        Ok(self
            .payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    /// Payload as text (marker label, hello/ack info).
    pub fn text(&self) -> Result<&str, WireError> {
        std::str::from_utf8(&self.payload).map_err(|e| WireError::MalformedPayload(e.to_string()))
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }

    fn check_payload(&self) -> Result<(), WireError> {
        match self.frame_type {
            FrameType::SampleBatch if !self.payload.len().is_multiple_of(4) => Err(WireError::MalformedPayload(format!(
                "sample batch payload of {} bytes is not whole f32s",
                self.payload.len()
            ))),
            FrameType::Marker if self.payload.len() > MAX_MARKER_BYTES => Err(WireError::MalformedPayload(format!(
                "marker label is {} bytes, limit {MAX_MARKER_BYTES}",
                self.payload.len()
            ))),
            FrameType::Marker => self.text().map(|_| ()),
            _ => Ok(()),
        }
    }
}

pub fn encode_frame(frame: &Frame) -> Result<Vec<u8>, WireError> {
    let mut out = Vec::with_capacity(frame.encoded_len());
    encode_frame_into(frame, &mut out)?;
    Ok(out)
}

pub fn encode_frame_into(frame: &Frame, out: &mut Vec<u8>) -> Result<(), WireError> {
    if frame.payload.len() > MAX_PAYLOAD {
        return Err(WireError::PayloadTooLarge(frame.payload.len()));
    }
    frame.check_payload()?;
    out.extend_from_slice(&MAGIC);
    out.push(frame.frame_type as u8);
    out.extend_from_slice(&frame.stream_id.to_le_bytes());
    out.extend_from_slice(&frame.t_us.to_le_bytes());
    out.extend_from_slice(&(frame.payload.len() as u16).to_le_bytes());
    out.extend_from_slice(&frame.payload);
    Ok(())
}

/// Parses one frame from the front of `buf`, returning it with the number of
/// bytes consumed. `Truncated` means the buffer holds a valid prefix.
pub fn decode_frame(buf: &[u8]) -> Result<(Frame, usize), WireError> {
    let magic_len = buf.len().min(4);
    if buf[..magic_len] != MAGIC[..magic_len] {
        let mut got = [0u8; 4];
        got[..magic_len].copy_from_slice(&buf[..magic_len]);
        return Err(WireError::BadMagic(got));
    }
    if buf.len() < HEADER_LEN {
        if buf.len() > 4 {
            FrameType::try_from(buf[4])?;
        }
        return Err(WireError::Truncated { needed: HEADER_LEN });
    }
    let frame_type = FrameType::try_from(buf[4])?;
    let stream_id = u16::from_le_bytes([buf[5], buf[6]]);
    let t_us = u64::from_le_bytes(buf[7..15].try_into().expect("8 bytes"));
    let len = u16::from_le_bytes([buf[15], buf[16]]) as usize;
    let total = HEADER_LEN + len;
    if buf.len() < total {
        return Err(WireError::Truncated { needed: total });
    }
    let frame = Frame {
        frame_type,
        stream_id,
        t_us,
        payload: buf[HEADER_LEN..total].to_vec(),
    };
    frame.check_payload()?;
    Ok((frame, total))
}

/// Buffered frame reader over a byte stream.
pub struct FrameReader<R> {
    inner: R,
    buf: Vec<u8>,
}

impl<R: Read> FrameReader<R> {
    pub fn new(inner: R) -> Self {
        FrameReader {
            inner,
            buf: Vec::with_capacity(4096),
        }
    }

    /// Next frame, or `None` on a clean end of stream between frames.
    pub fn next_frame(&mut self) -> Result<Option<Frame>, WireError> {
        let mut chunk = [0u8; 4096];
        loop {
            if !self.buf.is_empty() {
                match decode_frame(&self.buf) {
                    Ok((frame, used)) => {
                        self.buf.drain(..used);
                        return Ok(Some(frame));
                    }
                    Err(WireError::Truncated { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
            let n = match self.inner.read(&mut chunk) {
                Ok(n) => n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(e.into()),
            };
            if n == 0 {
                return if self.buf.is_empty() {
                    Ok(None)
                } else {
                    Err(WireError::Disconnected)
                };
            }
            self.buf.extend_from_slice(&chunk[..n]);
        }
    }
}
