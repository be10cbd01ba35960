//! Audio ingestion, dataset manifests, enrollment/test segmentation and the
//! synthetic speaker generator.

mod manifest;
mod segment;
mod synth;
mod wav;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::SAMPLE_RATE_HZ;

pub use manifest::{load_manifest, write_manifest};
pub use segment::{split_enroll_test, split_segments, Segments, ENROLL_SECONDS, TEST_SECONDS};
pub use synth::{synth_utterance, SyntheticSpeakerProfile};
pub use wav::{read_wav, write_wav};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: not a RIFF/WAVE file")]
    NotWav { path: PathBuf },
    #[error("{path}: unsupported format: {detail}")]
    UnsupportedFormat { path: PathBuf, detail: String },
    #[error("{path}: truncated file")]
    TruncatedFile { path: PathBuf },
    #[error("manifest line {line}: {detail}")]
    ParseError { line: u64, detail: String },
    #[error("manifest line {line}: duplicate utterance id `{id}`")]
    DuplicateId { line: u64, id: String },
    #[error("manifest line {line}: unknown split `{value}`")]
    UnknownSplit { line: u64, value: String },
    #[error("invalid synthetic profile: {0}")]
    InvalidProfile(String),
    #[error("invalid clip: {0}")]
    InvalidClip(String),
    #[error("speaker {speaker_id}: insufficient speech ({available_s:.2} s available, {required_s:.2} s required)")]
    InsufficientData {
        speaker_id: String,
        available_s: f64,
        required_s: f64,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// Mono 16 kHz audio with utterance metadata.
///
/// Samples are finite and lie in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    utterance_id: String,
    speaker_id: String,
}

impl AudioClip {
    pub fn new(
        samples: Vec<f64>,
        utterance_id: impl Into<String>,
        speaker_id: impl Into<String>,
    ) -> Result<Self> {
        if let Some((i, s)) = samples
            .iter()
            .enumerate()
            .find(|(_, s)| !s.is_finite() || s.abs() > 1.0)
        {
            return Err(CorpusError::InvalidClip(format!(
                "sample {i} = {s} is outside [-1, 1]"
            )));
        }
        Ok(Self {
            samples,
            utterance_id: utterance_id.into(),
            speaker_id: speaker_id.into(),
        })
    }

    /// Like [`AudioClip::new`] but rejects any rate other than 16 kHz.
    pub fn with_rate(
        samples: Vec<f64>,
        sample_rate_hz: u32,
        utterance_id: impl Into<String>,
        speaker_id: impl Into<String>,
    ) -> Result<Self> {
        if sample_rate_hz != SAMPLE_RATE_HZ {
            return Err(CorpusError::InvalidClip(format!(
                "sample rate {sample_rate_hz} Hz (only {SAMPLE_RATE_HZ} Hz is supported)"
            )));
        }
        Self::new(samples, utterance_id, speaker_id)
    }

    pub fn empty(utterance_id: impl Into<String>, speaker_id: impl Into<String>) -> Self {
        Self {
            samples: Vec::new(),
            utterance_id: utterance_id.into(),
            speaker_id: speaker_id.into(),
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        SAMPLE_RATE_HZ
    }

    pub fn utterance_id(&self) -> &str {
        &self.utterance_id
    }

    pub fn speaker_id(&self) -> &str {
        &self.speaker_id
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / SAMPLE_RATE_HZ as f64
    }

    /// Same audio under new labels.
    pub fn relabel(self, utterance_id: impl Into<String>, speaker_id: impl Into<String>) -> Self {
        Self {
            samples: self.samples,
            utterance_id: utterance_id.into(),
            speaker_id: speaker_id.into(),
        }
    }

    /// Sub-range of the samples, labels kept.
    pub fn slice(&self, range: std::ops::Range<usize>, utterance_id: impl Into<String>) -> Self {
        Self {
            samples: self.samples[range].to_vec(),
            utterance_id: utterance_id.into(),
            speaker_id: self.speaker_id.clone(),
        }
    }

    /// Multiplies every sample by `gain`, failing if the result leaves `[-1, 1]`.
    pub fn scaled(&self, gain: f64) -> Result<Self> {
        Self::new(
            self.samples.iter().map(|s| s * gain).collect(),
            self.utterance_id.clone(),
            self.speaker_id.clone(),
        )
    }
}

/// Age grouping of a speaker: K-2, 3-6 and 7-10 grades.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GradeGroup {
    Ag1,
    Ag2,
    Ag3,
    Unknown,
}

impl GradeGroup {
    pub const LABELLED: [GradeGroup; 3] = [GradeGroup::Ag1, GradeGroup::Ag2, GradeGroup::Ag3];

    pub fn as_str(self) -> &'static str {
        match self {
            GradeGroup::Ag1 => "AG1",
            GradeGroup::Ag2 => "AG2",
            GradeGroup::Ag3 => "AG3",
            GradeGroup::Unknown => "UNKNOWN",
        }
    }
}

impl fmt::Display for GradeGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GradeGroup {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "AG1" => Ok(GradeGroup::Ag1),
            "AG2" => Ok(GradeGroup::Ag2),
            "AG3" => Ok(GradeGroup::Ag3),
            "UNKNOWN" => Ok(GradeGroup::Unknown),
            other => Err(format!("unknown grade group `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Enroll,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Enroll => "ENROLL",
            Split::Test => "TEST",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One row of a corpus manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtteranceRecord {
    pub utterance_id: String,
    pub speaker_id: String,
    pub grade_group: GradeGroup,
    pub split: Split,
    pub path: PathBuf,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_rejects_out_of_range_and_non_finite() {
        assert!(AudioClip::new(vec![0.0, 1.5], "u", "s").is_err());
        assert!(AudioClip::new(vec![f64::NAN], "u", "s").is_err());
        assert!(AudioClip::new(vec![-1.0, 1.0], "u", "s").is_ok());
    }

    #[test]
    fn clip_rejects_other_rates() {
        assert!(AudioClip::with_rate(vec![0.0; 10], 8000, "u", "s").is_err());
        assert!(AudioClip::with_rate(vec![0.0; 10], 16000, "u", "s").is_ok());
    }

    #[test]
    fn grade_group_round_trips() {
        for g in [
            GradeGroup::Ag1,
            GradeGroup::Ag2,
            GradeGroup::Ag3,
            GradeGroup::Unknown,
        ] {
            assert_eq!(g.as_str().parse::<GradeGroup>().unwrap(), g);
        }
        assert!("AG4".parse::<GradeGroup>().is_err());
    }
}
