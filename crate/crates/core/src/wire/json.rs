//! JSON mirror of [`Frame`] for WebSocket clients.

use serde::{Deserialize, Serialize};

use super::frame::{Frame, FrameType};
use super::WireError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum JsonFrame {
    Hello {
        #[serde(default)]
        stream_id: u16,
        #[serde(default)]
        t_us: u64,
        #[serde(default)]
        info: String,
    },
    Ack {
        #[serde(default)]
        stream_id: u16,
        #[serde(default)]
        t_us: u64,
        #[serde(default)]
        info: String,
    },
    SampleBatch {
        stream_id: u16,
        t_us: u64,
        values: Vec<f32>,
    },
    Marker {
        #[serde(default)]
        stream_id: u16,
        t_us: u64,
        label: String,
    },
    Bye {
        #[serde(default)]
        stream_id: u16,
        #[serde(default)]
        t_us: u64,
    },
}

impl TryFrom<&Frame> for JsonFrame {
    type Error = WireError;
    fn try_from(f: &Frame) -> Result<Self, WireError> {
        let (stream_id, t_us) = (f.stream_id, f.t_us);
        Ok(match f.frame_type {
            FrameType::Hello => JsonFrame::Hello {
                stream_id,
                t_us,
                info: f.text()?.to_owned(),
            },
            FrameType::Ack => JsonFrame::Ack {
                stream_id,
                t_us,
                info: f.text()?.to_owned(),
            },
            FrameType::SampleBatch => JsonFrame::SampleBatch {
                stream_id,
                t_us,
                values: f.sample_values()?,
            },
            FrameType::Marker => JsonFrame::Marker {
                stream_id,
                t_us,
                label: f.text()?.to_owned(),
            },
            FrameType::Bye => JsonFrame::Bye { stream_id, t_us },
        })
    }
}

impl TryFrom<&JsonFrame> for Frame {
    type Error = WireError;
    fn try_from(j: &JsonFrame) -> Result<Self, WireError> {
        Ok(match j {
            JsonFrame::Hello { stream_id, t_us, info } => Frame::hello(*stream_id, *t_us, info),
            JsonFrame::Ack { stream_id, t_us, info } => Frame::ack(*stream_id, *t_us, info),
            JsonFrame::SampleBatch { stream_id, t_us, values } => Frame::samples(*stream_id, *t_us, values),
            JsonFrame::Marker { stream_id, t_us, label } => Frame::marker(*stream_id, *t_us, label)?,
            JsonFrame::Bye { stream_id, t_us } => Frame::bye(*stream_id, *t_us),
        })
    }
}

impl JsonFrame {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain data")
    }

    pub fn parse(text: &str) -> Result<Self, WireError> {
        serde_json::from_str(text).map_err(|e| WireError::MalformedPayload(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_batch_shape() {
        let j = JsonFrame::try_from(&Frame::samples(2, 100, &[0.5, 1.0])).unwrap();
        assert_eq!(
            j.to_json(),
            r#"{"type":"sample_batch","stream_id":2,"t_us":100,"values":[0.5,1.0]}"#
        );
    }

    #[test]
    fn frames_round_trip_through_json() {
        let frames = [
            Frame::hello(0, 1, "breeze role=ui"),
            Frame::ack(0, 2, "ok"),
            Frame::samples(1, 3, &[0.1, -2.5, f32::MAX]),
            Frame::marker(1, 4, "trial_start:pattern=Fast;modality=audio").unwrap(),
            Frame::bye(0, 5),
        ];
        for f in &frames {
            let j = JsonFrame::try_from(f).unwrap();
            let back = JsonFrame::parse(&j.to_json()).unwrap();
            assert_eq!(Frame::try_from(&back).unwrap(), *f);
        }
    }

    #[test]
    fn minimal_client_messages() {
        assert!(matches!(JsonFrame::parse(r#"{"type":"hello"}"#), Ok(JsonFrame::Hello { .. })));
        assert!(JsonFrame::parse(r#"{"type":"warp"}"#).is_err());
    }
}
