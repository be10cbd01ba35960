//! Long-run spectra of synthetic speakers, measured with a naive DFT.

use std::f64::consts::PI;

use kidsr::corpus::synth_utterance;
use kidsr::SyntheticSpeakerProfile;

fn profile(formants_hz: [f64; 4]) -> SyntheticSpeakerProfile {
    SyntheticSpeakerProfile {
        speaker_id: "p".into(),
        f0_hz: 250.0,
        formants_hz,
        formant_bandwidths_hz: [80.0, 100.0, 150.0, 200.0],
        noise_mix: 0.1,
        seed: 3,
    }
}

/// Welch average: 512-sample Hann frames, 50 % overlap, direct DFT.
fn welch_power(x: &[f64]) -> Vec<f64> {
    const N: usize = 512;
    let hann: Vec<f64> = (0..N)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / N as f64).cos())
        .collect();
    let mut power = vec![0.0; N / 2 + 1];
    let mut frames = 0;
    let mut start = 0;
    while start + N <= x.len() {
        let frame: Vec<f64> = (0..N).map(|n| x[start + n] * hann[n]).collect();
        for (k, p) in power.iter_mut().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, v) in frame.iter().enumerate() {
                let ph = 2.0 * PI * (k * n) as f64 / N as f64;
                re += v * ph.cos();
                im -= v * ph.sin();
            }
            *p += re * re + im * im;
        }
        frames += 1;
        start += N / 2;
    }
    power.iter().map(|p| p / frames as f64).collect()
}

/// Share of total power between 2 and 4 kHz, in dB.
fn band_ratio_db(power: &[f64]) -> f64 {
    let hz = |k: usize| k as f64 * 16000.0 / 512.0;
    let band: f64 = power
        .iter()
        .enumerate()
        .filter(|(k, _)| (2000.0..=4000.0).contains(&hz(*k)))
        .map(|(_, p)| p)
        .sum();
    let total: f64 = power.iter().sum();
    10.0 * (band / total).log10()
}

#[test]
fn formant_shift_changes_mid_band_energy() {
    let low = synth_utterance(&profile([500.0, 1500.0, 2500.0, 3500.0]), 4.0, 1).unwrap();
    let high = synth_utterance(&profile([900.0, 2100.0, 3300.0, 4500.0]), 4.0, 1).unwrap();
    let r_low = band_ratio_db(&welch_power(low.samples()));
    let r_high = band_ratio_db(&welch_power(high.samples()));
    let diff = (r_low - r_high).abs();
    println!("2-4 kHz share: {r_low:.2} dB vs {r_high:.2} dB (difference {diff:.2} dB)");
    assert!(diff > 3.0, "difference {diff:.2} dB");
}
