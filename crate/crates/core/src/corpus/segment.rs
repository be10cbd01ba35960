//! Enrollment/test cutting on post-SAD speech.
//!
//! Speech is measured after speech activity detection and taken greedily in
//! manifest order: the first 48 s become enrollment, each following full 10 s
//! becomes one test chunk, and any remainder shorter than 10 s is dropped.

use log::warn;

use super::{AudioClip, CorpusError, Result};
use crate::features::detect_speech;
use crate::SAMPLE_RATE_HZ;

pub const ENROLL_SECONDS: f64 = 48.0;
pub const TEST_SECONDS: f64 = 10.0;

const ENROLL_SAMPLES: usize = 48 * SAMPLE_RATE_HZ as usize;
const TEST_SAMPLES: usize = 10 * SAMPLE_RATE_HZ as usize;

#[derive(Debug, Clone)]
pub struct Segments {
    pub enrollment: AudioClip,
    pub tests: Vec<AudioClip>,
}

fn speech_of(clips: &[AudioClip]) -> Vec<f64> {
    clips
        .iter()
        .flat_map(|c| detect_speech(c).samples().to_vec())
        .collect()
}

fn speaker_of(clips: &[AudioClip]) -> String {
    clips
        .first()
        .map(|c| c.speaker_id().to_string())
        .unwrap_or_default()
}

fn enrollment_from(speech: &[f64], speaker_id: &str) -> Result<AudioClip> {
    if speech.len() < ENROLL_SAMPLES {
        return Err(CorpusError::InsufficientData {
            speaker_id: speaker_id.to_string(),
            available_s: speech.len() as f64 / SAMPLE_RATE_HZ as f64,
            required_s: ENROLL_SECONDS,
        });
    }
    AudioClip::new(
        speech[..ENROLL_SAMPLES].to_vec(),
        format!("{speaker_id}#enroll"),
        speaker_id,
    )
}

fn test_chunks(speech: &[f64], speaker_id: &str) -> Result<Vec<AudioClip>> {
    let tests = speech
        .chunks_exact(TEST_SAMPLES)
        .enumerate()
        .map(|(i, chunk)| AudioClip::new(chunk.to_vec(), format!("{speaker_id}#t{i}"), speaker_id))
        .collect::<Result<Vec<_>>>()?;
    if tests.is_empty() {
        warn!(
            "speaker {speaker_id}: only {:.2} s of speech left after enrollment, no test segments",
            speech.len() as f64 / SAMPLE_RATE_HZ as f64
        );
    }
    Ok(tests)
}

/// Cuts one speaker's clips into a 48 s enrollment and consecutive 10 s tests.
///
/// Fails with `InsufficientData` below 48 s of speech; with less than 58 s the
/// test list is empty and a warning is logged.
pub fn split_segments(clips: &[AudioClip]) -> Result<Segments> {
    let speaker_id = speaker_of(clips);
    let speech = speech_of(clips);
    let enrollment = enrollment_from(&speech, &speaker_id)?;
    let tests = test_chunks(&speech[ENROLL_SAMPLES..], &speaker_id)?;
    Ok(Segments { enrollment, tests })
}

/// Manifest-aware variant: enrollment comes from the ENROLL clips only and
/// tests from the TEST clips only. With no TEST clips it falls back to
/// [`split_segments`] over the enrollment material.
pub fn split_enroll_test(enroll: &[AudioClip], test: &[AudioClip]) -> Result<Segments> {
    if test.is_empty() {
        return split_segments(enroll);
    }
    let speaker_id = speaker_of(enroll);
    let enrollment = enrollment_from(&speech_of(enroll), &speaker_id)?;
    let tests = test_chunks(&speech_of(test), &speaker_id)?;
    Ok(Segments { enrollment, tests })
}
