//! Minimal RIFF/WAVE codec: 16-bit little-endian PCM, mono, 16 kHz only.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{AudioClip, CorpusError, Result};
use crate::SAMPLE_RATE_HZ;

const PCM_FORMAT: u16 = 1;

fn u16_at(bytes: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([bytes[at], bytes[at + 1]])
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

/// Reads a PCM WAV file into an [`AudioClip`], scaling samples by 1/32768.
///
/// The utterance id is the file stem; the speaker id is left empty.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let samples = decode(&bytes, path)?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    AudioClip::new(samples, stem, "")
}

fn decode(bytes: &[u8], path: &Path) -> Result<Vec<f64>> {
    let not_wav = || CorpusError::NotWav {
        path: path.to_path_buf(),
    };
    let truncated = || CorpusError::TruncatedFile {
        path: path.to_path_buf(),
    };
    let unsupported = |detail: String| CorpusError::UnsupportedFormat {
        path: path.to_path_buf(),
        detail,
    };

    if bytes.len() < 12 {
        return Err(if bytes.starts_with(b"RIFF") || bytes.is_empty() {
            truncated()
        } else {
            not_wav()
        });
    }
    if &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(not_wav());
    }

    let mut pos = 12;
    let mut format_seen = false;
    loop {
        if pos + 8 > bytes.len() {
            return Err(truncated());
        }
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body = pos + 8;
        match id {
            b"fmt " => {
                if size < 16 || body + 16 > bytes.len() {
                    return Err(truncated());
                }
                let format = u16_at(bytes, body);
                let channels = u16_at(bytes, body + 2);
                let rate = u32_at(bytes, body + 4);
                let bits = u16_at(bytes, body + 14);
                if format != PCM_FORMAT {
                    return Err(unsupported(format!("format tag {format} (PCM only)")));
                }
                if channels != 1 {
                    return Err(unsupported(format!("{channels} channels (mono only)")));
                }
                if rate != SAMPLE_RATE_HZ {
                    return Err(unsupported(format!("{rate} Hz (16000 Hz only)")));
                }
                if bits != 16 {
                    return Err(unsupported(format!("{bits}-bit samples (16-bit only)")));
                }
                format_seen = true;
            }
            b"data" => {
                if !format_seen {
                    return Err(unsupported("data chunk before fmt chunk".into()));
                }
                if body + size > bytes.len() || !size.is_multiple_of(2) {
                    return Err(truncated());
                }
                return Ok(bytes[body..body + size]
                    .chunks_exact(2)
                    .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0)
                    .collect());
            }
            _ => {}
        }
        // chunks are word aligned
        pos = body + size + (size & 1);
    }
}

/// Quantizes a clip to 16-bit PCM and writes it as a mono 16 kHz WAV file.
pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let path = path.as_ref();
    let data_len = clip.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&PCM_FORMAT.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&SAMPLE_RATE_HZ.to_le_bytes());
    out.extend_from_slice(&(SAMPLE_RATE_HZ * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in clip.samples() {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = fs::File::create(path).map_err(io_err)?;
    file.write_all(&out).map_err(io_err)
}
