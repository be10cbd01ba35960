//! Seeded source-filter speech synthesis used as a stand-in for a licensed
//! children's speech corpus.
//!
//! Each speaker is a glottal impulse train at `f0` passed through a cascade of
//! four two-pole formant resonators. Utterances are built from short
//! syllable-like segments: every segment picks one of a small shared set of
//! vowel shapes, which moves the speaker's formants by fixed ratios, so all
//! speakers share "linguistic" variation while keeping their own vocal tract.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{AudioClip, CorpusError, GradeGroup, Result};
use crate::SAMPLE_RATE_HZ;

const FS: f64 = SAMPLE_RATE_HZ as f64;
const PEAK: f64 = 0.5;
/// Coefficients are refreshed every this many samples while formants glide.
const COEFF_BLOCK: usize = 16;
const MIN_FORMANT_GAP_HZ: f64 = 150.0;
const MAX_FORMANT_HZ: f64 = 7600.0;

/// Formant multipliers for the shared vowel inventory.
const VOWELS: [[f64; 4]; 7] = [
    [1.00, 1.00, 1.00, 1.00],
    [0.70, 1.30, 1.08, 1.03],
    [1.35, 0.82, 0.95, 0.98],
    [0.78, 0.68, 0.92, 0.97],
    [1.18, 1.15, 1.03, 1.01],
    [0.92, 0.86, 0.97, 0.99],
    [1.05, 1.22, 1.05, 1.02],
];

/// Voice parameters of one synthetic speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpeakerProfile {
    pub speaker_id: String,
    pub f0_hz: f64,
    pub formants_hz: [f64; 4],
    pub formant_bandwidths_hz: [f64; 4],
    pub noise_mix: f64,
    pub seed: u64,
}

impl SyntheticSpeakerProfile {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CorpusError::InvalidProfile(msg));
        let all = std::iter::once(self.f0_hz)
            .chain(self.formants_hz)
            .chain(self.formant_bandwidths_hz)
            .chain(std::iter::once(self.noise_mix));
        if all.into_iter().any(|v| !v.is_finite()) {
            return bad("non-finite parameter".into());
        }
        if !(180.0..=420.0).contains(&self.f0_hz) {
            return bad(format!("f0 {} Hz outside [180, 420]", self.f0_hz));
        }
        if self.formants_hz.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!(
                "formants {:?} not strictly increasing",
                self.formants_hz
            ));
        }
        if self.formants_hz[0] <= 0.0 || self.formants_hz[3] >= 7000.0 {
            return bad(format!(
                "formants {:?} outside (0, 7000) Hz",
                self.formants_hz
            ));
        }
        if self.formant_bandwidths_hz.iter().any(|&b| b <= 0.0) {
            return bad("non-positive formant bandwidth".into());
        }
        if !(0.0..=0.5).contains(&self.noise_mix) {
            return bad(format!("noise mix {} outside [0, 0.5]", self.noise_mix));
        }
        Ok(())
    }

    /// Draws a child-like speaker. Younger grade groups get higher pitch and
    /// proportionally higher formants.
    pub fn random<R: Rng + ?Sized>(
        speaker_id: impl Into<String>,
        group: GradeGroup,
        rng: &mut R,
    ) -> Self {
        let (f0_lo, f0_hi, scale) = match group {
            GradeGroup::Ag1 => (260.0, 420.0, 1.15),
            GradeGroup::Ag2 => (220.0, 360.0, 1.07),
            GradeGroup::Ag3 => (180.0, 300.0, 1.00),
            GradeGroup::Unknown => (180.0, 420.0, 1.07),
        };
        let ranges = [
            (500.0, 850.0),
            (1300.0, 2200.0),
            (2500.0, 3300.0),
            (3700.0, 4600.0),
        ];
        let bw_ranges = [(60.0, 120.0), (80.0, 160.0), (120.0, 220.0), (180.0, 300.0)];
        let mut formants_hz = [0.0; 4];
        let mut formant_bandwidths_hz = [0.0; 4];
        for i in 0..4 {
            formants_hz[i] = scale * rng.random_range(ranges[i].0..ranges[i].1);
            formant_bandwidths_hz[i] = rng.random_range(bw_ranges[i].0..bw_ranges[i].1);
        }
        Self {
            speaker_id: speaker_id.into(),
            f0_hz: rng.random_range(f0_lo..f0_hi),
            formants_hz,
            formant_bandwidths_hz,
            noise_mix: rng.random_range(0.02..0.3),
            seed: rng.random(),
        }
    }
}

/// Klatt-style two-pole resonator with unity gain at DC.
#[derive(Debug, Clone, Copy, Default)]
struct Resonator {
    a: f64,
    b: f64,
    c: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn tune(&mut self, freq_hz: f64, bandwidth_hz: f64) {
        let r = (-PI * bandwidth_hz / FS).exp();
        self.c = -r * r;
        self.b = 2.0 * r * (2.0 * PI * freq_hz / FS).cos();
        self.a = 1.0 - self.b - self.c;
    }

    fn process(&mut self, x: f64) -> f64 {
        let y = self.a * x + self.b * self.y1 + self.c * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

#[derive(Debug, Clone, Copy)]
enum Segment {
    Voiced {
        len: usize,
        vowel: usize,
        f0_scale: f64,
    },
    Gap {
        len: usize,
    },
}

fn plan_segments(n_samples: usize, rng: &mut ChaCha8Rng) -> Vec<Segment> {
    let mut plan = Vec::new();
    let mut t = 0usize;
    while t < n_samples {
        let phrase_end = t + (rng.random_range(1.7..2.3) * FS) as usize;
        while t < phrase_end.min(n_samples) {
            let len = (rng.random_range(0.12..0.25) * FS) as usize;
            plan.push(Segment::Voiced {
                len,
                vowel: rng.random_range(0..VOWELS.len()),
                f0_scale: 1.0 + 0.08 * rng.random_range(-1.0..1.0),
            });
            t += len;
        }
        let len = (rng.random_range(0.15..0.25) * FS) as usize;
        plan.push(Segment::Gap { len });
        t += len;
    }
    plan
}

fn vowel_formants(base: &[f64; 4], vowel: usize) -> [f64; 4] {
    let mut f = [0.0; 4];
    for i in 0..4 {
        f[i] = base[i] * VOWELS[vowel][i];
        if i > 0 {
            f[i] = f[i].max(f[i - 1] + MIN_FORMANT_GAP_HZ);
        }
    }
    for v in f.iter_mut() {
        *v = v.min(MAX_FORMANT_HZ);
    }
    f
}

/// Synthesizes `duration_s` seconds of speech-like audio for `profile`.
///
/// Output peaks at exactly 0.5 and contains ~200 ms silent gaps roughly every
/// two seconds. Identical `(profile, duration_s, seed)` gives identical samples.
pub fn synth_utterance(
    profile: &SyntheticSpeakerProfile,
    duration_s: f64,
    seed: u64,
) -> Result<AudioClip> {
    profile.validate()?;
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(CorpusError::InvalidProfile(format!(
            "duration {duration_s} s must be positive"
        )));
    }
    let n = (duration_s * FS).round() as usize;
    let utterance_id = format!("{}_{seed}", profile.speaker_id);
    if n == 0 {
        return Ok(AudioClip::empty(utterance_id, profile.speaker_id.clone()));
    }

    let mut rng =
        ChaCha8Rng::seed_from_u64(profile.seed ^ seed.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let plan = plan_segments(n, &mut rng);

    let noise_gain = profile.noise_mix * (profile.f0_hz / FS).sqrt();
    let pulse_gain = 1.0 - profile.noise_mix;
    let glide = (-1.0 / (0.02 * FS)).exp();

    let mut resonators = [Resonator::default(); 4];
    let mut current = profile.formants_hz;
    for (r, (&f, &bw)) in resonators
        .iter_mut()
        .zip(current.iter().zip(&profile.formant_bandwidths_hz))
    {
        r.tune(f, bw);
    }

    let mut out = Vec::with_capacity(n);
    let mut phase = 1.0;
    let mut f0 = profile.f0_hz;
    for segment in plan {
        match segment {
            Segment::Gap { len } => {
                for _ in 0..len {
                    if out.len() == n {
                        break;
                    }
                    out.push(0.0);
                }
                for r in resonators.iter_mut() {
                    r.y1 = 0.0;
                    r.y2 = 0.0;
                }
            }
            Segment::Voiced {
                len,
                vowel,
                f0_scale,
            } => {
                let target = vowel_formants(&profile.formants_hz, vowel);
                let f0_target = profile.f0_hz * f0_scale;
                for i in 0..len {
                    if out.len() == n {
                        break;
                    }
                    if i % COEFF_BLOCK == 0 {
                        let g = glide.powi(COEFF_BLOCK as i32);
                        for j in 0..4 {
                            current[j] = target[j] + (current[j] - target[j]) * g;
                            resonators[j].tune(current[j], profile.formant_bandwidths_hz[j]);
                        }
                        f0 = f0_target + (f0 - f0_target) * g;
                    }
                    // raised-sine syllable envelope, floor 0.35
                    let env = 0.35 + 0.65 * (PI * (i as f64 + 0.5) / len as f64).sin();
                    phase += f0 / FS;
                    let pulse = if phase >= 1.0 {
                        phase -= 1.0;
                        1.0
                    } else {
                        0.0
                    };
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    let mut y = env * (pulse_gain * pulse + noise_gain * noise);
                    for r in resonators.iter_mut() {
                        y = r.process(y);
                    }
                    out.push(y);
                }
            }
        }
    }

    let peak = out.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        let g = PEAK / peak;
        out.iter_mut().for_each(|s| *s *= g);
    }
    AudioClip::new(out, utterance_id, profile.speaker_id.clone())
}
