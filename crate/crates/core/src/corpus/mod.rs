//! Transcript ingestion, quality gating and format diversification.

mod io;
mod render;
pub mod synth;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{parse_transcript_file, write_jsonl, write_transcript_line, InputFormat};
pub use render::{
    render_transcript, sample_style, style_grid, RenderStyle, SpeakerTagScheme, TimestampFormat,
    TurnSeparator,
};

/// Slack used when comparing accumulated floating-point sums against thresholds.
const GATE_EPSILON: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("input is not valid UTF-8: {0}")]
    MalformedEncoding(#[from] std::str::Utf8Error),
    #[error("line {line}: {message}")]
    SchemaViolation { line: usize, message: String },
}

impl CorpusError {
    pub(crate) fn schema(line: usize, message: impl Into<String>) -> Self {
        CorpusError::SchemaViolation {
            line,
            message: message.into(),
        }
    }
}

/// One speaker turn.
///
/// Timing is absent for transcripts ingested from tagged plain text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptTurn {
    #[serde(rename = "speaker")]
    pub speaker_label: String,
    #[serde(rename = "start", default, skip_serializing_if = "Option::is_none")]
    pub start_seconds: Option<f64>,
    #[serde(rename = "end", default, skip_serializing_if = "Option::is_none")]
    pub end_seconds: Option<f64>,
    pub text: String,
    #[serde(rename = "confidence")]
    pub asr_confidence: f64,
}

impl TranscriptTurn {
    pub fn timed(speaker: &str, start: f64, end: f64, text: &str, confidence: f64) -> Self {
        Self {
            speaker_label: speaker.to_string(),
            start_seconds: Some(start),
            end_seconds: Some(end),
            text: text.to_string(),
            asr_confidence: confidence,
        }
    }

    pub fn untimed(speaker: &str, text: &str) -> Self {
        Self {
            speaker_label: speaker.to_string(),
            start_seconds: None,
            end_seconds: None,
            text: text.to_string(),
            asr_confidence: 1.0,
        }
    }

    fn check(&self) -> Result<(), String> {
        if self.speaker_label.trim().is_empty() {
            return Err("speaker label is empty".into());
        }
        if self.text.trim().is_empty() {
            return Err("turn text is empty".into());
        }
        if !(0.0..=1.0).contains(&self.asr_confidence) {
            return Err(format!("confidence {} outside [0, 1]", self.asr_confidence));
        }
        match (self.start_seconds, self.end_seconds) {
            (Some(s), Some(e)) => {
                if !(s.is_finite() && e.is_finite()) || s < 0.0 || e < 0.0 {
                    return Err("timing must be finite and non-negative".into());
                }
                if e < s {
                    return Err(format!("end_seconds {e} < start_seconds {s}"));
                }
            }
            (None, None) => {}
            _ => return Err("start and end must both be present or both absent".into()),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub id: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    pub turns: Vec<TranscriptTurn>,
}

impl Transcript {
    /// Checks every structural invariant, returning a description of the first violation.
    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("transcript id is empty".into());
        }
        if self.turns.is_empty() {
            return Err("transcript has no turns".into());
        }
        let timed = self.turns[0].start_seconds.is_some();
        let mut prev_start = f64::NEG_INFINITY;
        for (i, turn) in self.turns.iter().enumerate() {
            turn.check().map_err(|e| format!("turn {i}: {e}"))?;
            if turn.start_seconds.is_some() != timed {
                return Err(format!("turn {i}: mixes timed and untimed turns"));
            }
            if let Some(start) = turn.start_seconds {
                if start < prev_start {
                    return Err(format!(
                        "turn {i}: start {start} precedes previous start {prev_start}"
                    ));
                }
                prev_start = start;
            }
        }
        Ok(())
    }

    /// Span from the first turn's start to the last turn's end, if timed.
    pub fn duration_seconds(&self) -> Option<f64> {
        let first = self.turns.first()?.start_seconds?;
        let last = self.turns.last()?.end_seconds?;
        Some(last - first)
    }

    pub fn mean_confidence(&self) -> f64 {
        if self.turns.is_empty() {
            return 0.0;
        }
        self.turns.iter().map(|t| t.asr_confidence).sum::<f64>() / self.turns.len() as f64
    }

    pub fn distinct_speakers(&self) -> usize {
        self.turns
            .iter()
            .map(|t| t.speaker_label.as_str())
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// Speaker labels in order of first appearance.
    pub fn speakers_in_order(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for t in &self.turns {
            if !seen.contains(&t.speaker_label.as_str()) {
                seen.push(t.speaker_label.as_str());
            }
        }
        seen
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QualityPolicy {
    pub min_duration_seconds: f64,
    pub min_mean_confidence: f64,
    pub min_speakers: usize,
}

impl Default for QualityPolicy {
    fn default() -> Self {
        Self {
            min_duration_seconds: 120.0,
            min_mean_confidence: 0.80,
            min_speakers: 2,
        }
    }
}

impl QualityPolicy {
    pub fn validate(&self) -> Result<(), String> {
        if self.min_duration_seconds.is_nan() || self.min_duration_seconds < 0.0 {
            return Err("min_duration_seconds must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.min_mean_confidence) {
            return Err("min_mean_confidence must lie in [0, 1]".into());
        }
        if self.min_speakers < 1 {
            return Err("min_speakers must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Duration,
    Confidence,
    Speakers,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::Duration => "duration",
            RejectReason::Confidence => "confidence",
            RejectReason::Speakers => "speakers",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Keep,
    Reject(RejectReason),
}

impl Decision {
    pub fn is_keep(self) -> bool {
        matches!(self, Decision::Keep)
    }
}

/// Applies the duration, confidence and speaker-count gates in that order.
///
/// Thresholds are inclusive. Untimed transcripts skip the duration gate.
pub fn quality_filter(t: &Transcript, policy: &QualityPolicy) -> Decision {
    if let Some(duration) = t.duration_seconds() {
        if duration + GATE_EPSILON < policy.min_duration_seconds {
            return Decision::Reject(RejectReason::Duration);
        }
    }
    if t.mean_confidence() + GATE_EPSILON < policy.min_mean_confidence {
        return Decision::Reject(RejectReason::Confidence);
    }
    if t.distinct_speakers() < policy.min_speakers {
        return Decision::Reject(RejectReason::Speakers);
    }
    Decision::Keep
}
