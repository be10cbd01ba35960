//! Speech activity detection, framing, windowing and magnitude spectra.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{FeatureError, Result, FFT_SIZE, FRAME_LEN, HOP_LEN, N_BINS, SAD_RANGE_DB};
use crate::corpus::AudioClip;

/// Hamming window of one 20 ms frame: `0.54 - 0.46 cos(2 pi n / 319)`.
pub fn hamming() -> &'static [f64; FRAME_LEN] {
    static WINDOW: OnceLock<[f64; FRAME_LEN]> = OnceLock::new();
    WINDOW.get_or_init(|| {
        let mut w = [0.0; FRAME_LEN];
        for (n, v) in w.iter_mut().enumerate() {
            *v = 0.54 - 0.46 * (2.0 * PI * n as f64 / (FRAME_LEN - 1) as f64).cos();
        }
        w
    })
}

/// Number of full frames in `len` samples.
pub fn frame_count(len: usize) -> usize {
    if len < FRAME_LEN {
        0
    } else {
        (len - FRAME_LEN) / HOP_LEN + 1
    }
}

fn frame_energy_db(frame: &[f64]) -> f64 {
    let e: f64 = frame.iter().map(|s| s * s).sum();
    10.0 * e.max(1e-20).log10()
}

/// Energy-based speech activity detection.
///
/// Frames (20 ms, 10 ms hop) whose energy lies more than 30 dB below the
/// loudest frame are discarded. Each kept frame contributes its leading 10 ms
/// hop (the last frame of the clip contributes all of its samples), and the
/// pieces are concatenated in order, so continuous speech passes through
/// unchanged. Taking whole frames everywhere would splice silent frame tails
/// together and leave all-zero frames in the output. Clips shorter than one
/// frame are treated as a single frame.
pub fn detect_speech(clip: &AudioClip) -> AudioClip {
    let samples = clip.samples();
    let frames: Vec<(usize, usize, usize)> = if samples.len() < FRAME_LEN {
        vec![(0, samples.len(), samples.len())]
    } else {
        let n = frame_count(samples.len());
        (0..n)
            .map(|t| {
                let end = t * HOP_LEN + FRAME_LEN;
                let own = if t + 1 == n {
                    end
                } else {
                    t * HOP_LEN + HOP_LEN
                };
                (t * HOP_LEN, own, end)
            })
            .collect()
    };
    let energies: Vec<f64> = frames
        .iter()
        .map(|&(a, _, b)| frame_energy_db(&samples[a..b]))
        .collect();
    let max_db = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor_db = frame_energy_db(&[]);
    let threshold = max_db - SAD_RANGE_DB;

    let mut kept = Vec::with_capacity(samples.len());
    for (&(a, hop_end, _), &e) in frames.iter().zip(&energies) {
        if e > threshold && e > floor_db {
            kept.extend_from_slice(&samples[a..hop_end]);
        }
    }
    // kept samples are copies of valid input samples
    AudioClip::new(kept, clip.utterance_id(), clip.speaker_id())
        .expect("SAD output is a subset of a valid clip")
}

/// Splits a clip into Hamming-windowed 320-sample frames with a 160-sample hop.
pub fn frame_and_window(clip: &AudioClip) -> Result<Vec<[f64; FRAME_LEN]>> {
    let samples = clip.samples();
    if samples.len() < FRAME_LEN {
        return Err(FeatureError::TooShort {
            samples: samples.len(),
        });
    }
    let w = hamming();
    Ok((0..frame_count(samples.len()))
        .map(|t| {
            let src = &samples[t * HOP_LEN..t * HOP_LEN + FRAME_LEN];
            let mut frame = [0.0; FRAME_LEN];
            for ((f, s), w) in frame.iter_mut().zip(src).zip(w) {
                *f = s * w;
            }
            frame
        })
        .collect())
}

/// Reusable 512-point FFT for magnitude spectra.
pub struct SpectrumAnalyzer {
    fft: Arc<dyn Fft<f64>>,
    buffer: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl Default for SpectrumAnalyzer {
    fn default() -> Self {
        Self::new()
    }
}

impl SpectrumAnalyzer {
    pub fn new() -> Self {
        let fft = FftPlanner::new().plan_fft_forward(FFT_SIZE);
        let scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
        Self {
            fft,
            buffer: vec![Complex::default(); FFT_SIZE],
            scratch,
        }
    }

    /// Zero-pads `frame` to 512 points and writes `|X(k)|` for bins 0..=256.
    pub fn magnitudes_into(&mut self, frame: &[f64], out: &mut [f64]) {
        assert_eq!(frame.len(), FRAME_LEN);
        assert_eq!(out.len(), N_BINS);
        for (b, &x) in self.buffer.iter_mut().zip(frame) {
            *b = Complex::new(x, 0.0);
        }
        for b in &mut self.buffer[FRAME_LEN..] {
            *b = Complex::default();
        }
        self.fft
            .process_with_scratch(&mut self.buffer, &mut self.scratch);
        for (o, b) in out.iter_mut().zip(&self.buffer) {
            *o = b.norm();
        }
    }
}

/// Magnitude spectrum (257 bins) of one windowed frame.
pub fn magnitude_spectrum(frame: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; N_BINS];
    SpectrumAnalyzer::new().magnitudes_into(frame, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn clip(samples: Vec<f64>) -> AudioClip {
        AudioClip::new(samples, "u", "s").unwrap()
    }

    fn sine(freq: f64, amp: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / 16000.0).sin())
            .collect()
    }

    #[test]
    fn silence_gives_empty_output() {
        assert!(detect_speech(&clip(vec![0.0; 16000])).is_empty());
        assert!(detect_speech(&clip(vec![])).is_empty());
    }

    #[test]
    fn tone_then_silence_keeps_about_one_second() {
        let mut s = sine(440.0, 0.5, 16000);
        s.extend(vec![0.0; 16000]);
        // enumerate frame energies directly; passing frames form a prefix
        let energy = |t: usize| -> f64 { s[t * 160..t * 160 + 320].iter().map(|x| x * x).sum() };
        let max = (0..199).map(energy).fold(0.0, f64::max);
        let passing: Vec<usize> = (0..199).filter(|&t| energy(t) > max * 1e-3).collect();
        assert_eq!(passing, (0..passing.len()).collect::<Vec<_>>());
        let expected_len = passing.len() * 160;

        let out = detect_speech(&clip(s));
        assert_eq!(out.len(), expected_len);
        assert!((out.len() as i64 - 16000).abs() <= FRAME_LEN as i64);
    }

    #[test]
    fn spliced_bursts_leave_no_silent_frame() {
        // bursts of 0.31 s separated by 0.2 s of digital silence
        let mut s = Vec::new();
        for _ in 0..4 {
            s.extend(sine(700.0, 0.5, 4960));
            s.extend(vec![0.0; 3200]);
        }
        let out = detect_speech(&clip(s));
        let longest_zero_run = out
            .samples()
            .split(|x| *x != 0.0)
            .map(<[f64]>::len)
            .max()
            .unwrap();
        assert!(longest_zero_run < FRAME_LEN, "{longest_zero_run}");
    }

    #[test]
    fn all_speech_is_kept() {
        let s = sine(300.0, 0.4, 16000);
        let out = detect_speech(&clip(s.clone()));
        assert!((out.len() as i64 - s.len() as i64).abs() <= FRAME_LEN as i64);
        assert_eq!(out.samples(), &s[..out.len()]);
    }

    #[test]
    fn frame_counts() {
        assert_eq!(frame_and_window(&clip(vec![0.1; 16000])).unwrap().len(), 99);
        assert_eq!(frame_and_window(&clip(vec![0.1; 320])).unwrap().len(), 1);
        assert!(matches!(
            frame_and_window(&clip(vec![0.1; 319])),
            Err(FeatureError::TooShort { samples: 319 })
        ));
    }

    #[test]
    fn window_sum() {
        // independent sum of the closed-form coefficients
        let mut direct = 0.0;
        for n in 0..320 {
            direct += 0.54 - 0.46 * (2.0 * PI * n as f64 / 319.0).cos();
        }
        let frames = frame_and_window(&clip(vec![1.0; 320])).unwrap();
        let sum: f64 = frames[0].iter().sum();
        assert!((sum - direct).abs() < 1e-9);
        // 0.54 * 320 - 0.46 * 1
        assert!((sum - 172.34).abs() < 1e-9);
    }

    #[test]
    fn spectrum_of_zero_and_impulse() {
        assert!(magnitude_spectrum(&[0.0; FRAME_LEN])
            .iter()
            .all(|&m| m == 0.0));
        let mut impulse = vec![0.0; 320];
        impulse[0] = 1.0;
        let frames = frame_and_window(&clip(impulse)).unwrap();
        let spec = magnitude_spectrum(&frames[0]);
        assert_eq!(spec.len(), 257);
        assert!(spec.iter().all(|&m| (m - 0.08).abs() < 1e-12));
    }

    #[test]
    fn one_khz_peaks_at_bin_32() {
        let s = sine(1000.0, 1.0, 320);
        // naive DFT oracle over the 257 bins
        let oracle_argmax = (0..257)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (n, x) in s.iter().enumerate() {
                    let ph = -2.0 * PI * (k * n) as f64 / 512.0;
                    re += x * ph.cos();
                    im += x * ph.sin();
                }
                (re * re + im * im).sqrt()
            })
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0;
        assert_eq!(oracle_argmax, 32);
        let spec = magnitude_spectrum(&s);
        let argmax = spec
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(argmax, 32);
    }

    proptest! {
        #[test]
        fn frame_count_formula(len in 320usize..20_000) {
            let frames = frame_and_window(&clip(vec![0.01; len])).unwrap();
            prop_assert_eq!(frames.len(), (len - 320) / 160 + 1);
        }
    }
}
