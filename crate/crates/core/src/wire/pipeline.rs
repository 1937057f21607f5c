use crate::dsp::extract::NORMALIZE_WINDOW_S;
use crate::dsp::{DspError, EpochConfig, Extractor, Normalizer, Resampler};
use crate::encoders::ModalityFrame;

pub const FEEDBACK_RATE_HZ: f64 = 10.0;

/// Streaming receiver chain: extract (24 Hz to 8 Hz), normalize, resample
/// to the feedback rate. Outputs carry the source-clock time they describe.
#[derive(Debug, Clone)]
pub struct FeedbackPipeline {
    extractor: Extractor,
    normalizer: Normalizer,
    resampler: Resampler,
    in_rate_hz: f64,
    out_rate_hz: f64,
    t0_us: Option<u64>,
    emitted: u64,
    scratch: Vec<f64>,
}

impl FeedbackPipeline {
    pub fn new(in_rate_hz: f64, out_rate_hz: f64) -> Result<Self, DspError> {
        let extractor = Extractor::new(in_rate_hz, EpochConfig::default())?;
        let mid = extractor.output_rate_hz();
        Ok(FeedbackPipeline {
            extractor,
            normalizer: Normalizer::new(mid, NORMALIZE_WINDOW_S),
            resampler: Resampler::new(mid, out_rate_hz)?,
            in_rate_hz,
            out_rate_hz,
            t0_us: None,
            emitted: 0,
            scratch: Vec::new(),
        })
    }

    pub fn input_rate_hz(&self) -> f64 {
        self.in_rate_hz
    }

    /// Feeds one input sample stamped `t_us`; appends `(t_us, breathing)` outputs.
    pub fn push(&mut self, t_us: u64, x: f64, out: &mut Vec<(u64, f64)>) {
        let t0 = *self.t0_us.get_or_insert(t_us);
        if let Some(raw) = self.extractor.push(x) {
            let b = self.normalizer.push(raw);
            self.scratch.clear();
            self.resampler.push(b, &mut self.scratch);
            let lead_s = self.extractor.first_output_index() as f64 / self.in_rate_hz;
            for &v in &self.scratch {
                let t = lead_s + self.emitted as f64 / self.out_rate_hz;
                out.push((t0 + (t * 1e6).round() as u64, v));
                self.emitted += 1;
            }
        }
    }

    /// Like [`push`](Self::push) but encodes each output for all modalities.
    pub fn push_encoded(&mut self, t_us: u64, x: f64, out: &mut Vec<ModalityFrame>) {
        let mut tmp = Vec::new();
        self.push(t_us, x, &mut tmp);
        out.extend(tmp.into_iter().map(|(t, b)| ModalityFrame::encode(t, b)));
    }
}
