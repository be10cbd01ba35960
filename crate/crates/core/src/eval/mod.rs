//! Trial generation, score normalization, EER and identification, plus the
//! sub-band sweep and full-band experiment harnesses.

mod experiment;
mod report;

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::CorpusError;
use crate::features::{BandMode, FeatureError};
use crate::gmm::GmmError;
use crate::svm::SvmError;

pub use experiment::{
    fullband_eval, subband_sweep, Backend, EvalCorpus, Grouping, ModelSet, PopulationOutcome,
    SpeakerData, SpeakerModel, SynthCorpusConfig, SyntheticCorpus, SystemConfig, TestRepr,
    CLASS_REPEATS, CLASS_SIZE,
};
pub use report::{
    write_reports_csv, write_scores_csv, write_sweep_csv, REPORT_HEADER, SCORES_HEADER,
    SWEEP_HEADER,
};

/// Impostor models scored per test utterance.
pub const IMPOSTORS_PER_TEST: usize = 10;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least {needed} enrolled speakers, found {found}")]
    TooFewSpeakers { needed: usize, found: usize },
    #[error("empty score set")]
    EmptyScoreSet,
    #[error("group {group} has {size} speakers, {required} required")]
    GroupTooSmall {
        group: String,
        size: usize,
        required: usize,
    },
    #[error("corpus has no grade-group labels")]
    MissingGroupLabels,
    #[error("test utterance {utterance} belongs to unenrolled speaker {speaker}")]
    UnknownSpeaker { utterance: String, speaker: String },
    #[error("sub-band {index}: {source}")]
    SubBand {
        index: usize,
        #[source]
        source: Box<EvalError>,
    },
    #[error("utterance {id}: {source}")]
    Utterance {
        id: String,
        #[source]
        source: Box<EvalError>,
    },
    #[error("model set and test representation belong to different back-ends")]
    BackendMismatch,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Gmm(#[from] GmmError),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl EvalError {
    pub(crate) fn in_utterance(self, id: &str) -> Self {
        EvalError::Utterance {
            id: id.to_string(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Back-end used to model speakers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum System {
    GmmUbm,
    GmmSvm,
}

impl System {
    pub fn as_str(self) -> &'static str {
        match self {
            System::GmmUbm => "gmm-ubm",
            System::GmmSvm => "gmm-svm",
        }
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for System {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "gmm-ubm" => Ok(System::GmmUbm),
            "gmm-svm" => Ok(System::GmmSvm),
            other => Err(format!(
                "unknown system `{other}` (expected gmm-ubm or gmm-svm)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub test_utterance_id: String,
    pub model_speaker_id: String,
    pub is_target: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub trial: Trial,
    pub raw_score: f64,
    pub normalized_score: f64,
}

/// A test utterance and its true speaker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestRef {
    pub utterance_id: String,
    pub speaker_id: String,
}

/// One row of a sub-band sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub subband_index: usize,
    pub span_lo_hz: f64,
    pub span_hi_hz: f64,
    pub eer_percent: f64,
    pub id_percent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Which speaker population was evaluated (e.g. `SCHOOL`, `AG2-classroom`).
    pub population: String,
    pub system: System,
    pub band_mode: BandMode,
    pub k: usize,
    pub eer_percent: f64,
    pub id_accuracy_percent: f64,
    pub n_trials: usize,
    pub n_tests: usize,
    pub seed: u64,
    /// For sweeps: one row per sub-band; the headline rates are their means.
    pub per_subband_rows: Option<Vec<SweepRow>>,
}

/// One target trial plus ten impostors drawn without replacement from the
/// other enrolled speakers, per test utterance.
pub fn generate_trials(tests: &[TestRef], enrolled: &[String], seed: u64) -> Result<Vec<Trial>> {
    let needed = IMPOSTORS_PER_TEST + 1;
    if enrolled.len() < needed {
        return Err(EvalError::TooFewSpeakers {
            needed,
            found: enrolled.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials = Vec::with_capacity(tests.len() * needed);
    for t in tests {
        let Some(target) = enrolled.iter().position(|s| *s == t.speaker_id) else {
            return Err(EvalError::UnknownSpeaker {
                utterance: t.utterance_id.clone(),
                speaker: t.speaker_id.clone(),
            });
        };
        trials.push(Trial {
            test_utterance_id: t.utterance_id.clone(),
            model_speaker_id: t.speaker_id.clone(),
            is_target: true,
        });
        let mut picks: Vec<usize> = sample(&mut rng, enrolled.len() - 1, IMPOSTORS_PER_TEST)
            .into_iter()
            .map(|i| if i >= target { i + 1 } else { i })
            .collect();
        picks.sort_unstable();
        trials.extend(picks.into_iter().map(|i| Trial {
            test_utterance_id: t.utterance_id.clone(),
            model_speaker_id: enrolled[i].clone(),
            is_target: false,
        }));
    }
    Ok(trials)
}

/// Subtracts the maximum of the set from every score.
pub fn max_normalize(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    scores.iter().map(|s| s - max).collect()
}

/// Pooled equal error rate in percent.
///
/// A trial is accepted when `score >= threshold`. Operating points are taken
/// at every distinct pooled score plus `+inf`; the EER is interpolated
/// linearly between the two points that bracket the FAR/FRR crossing.
pub fn compute_eer(target_scores: &[f64], impostor_scores: &[f64]) -> Result<f64> {
    if target_scores.is_empty() || impostor_scores.is_empty() {
        return Err(EvalError::EmptyScoreSet);
    }
    let mut targets = target_scores.to_vec();
    let mut impostors = impostor_scores.to_vec();
    targets.sort_by(f64::total_cmp);
    impostors.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = targets.iter().chain(&impostors).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);

    let (nt, ni) = (targets.len() as f64, impostors.len() as f64);
    let (mut ti, mut ii) = (0usize, 0usize);
    let mut prev: Option<(f64, f64)> = None;
    for &th in &thresholds {
        // number of scores strictly below the threshold
        while ti < targets.len() && targets[ti] < th {
            ti += 1;
        }
        while ii < impostors.len() && impostors[ii] < th {
            ii += 1;
        }
        let frr = ti as f64 / nt;
        let far = (impostors.len() - ii) as f64 / ni;
        if far - frr <= 0.0 {
            let eer = match prev {
                Some((pfar, pfrr)) => interpolate((pfar, pfrr), (far, frr)),
                None => far,
            };
            return Ok(100.0 * eer);
        }
        prev = Some((far, frr));
    }
    unreachable!("FRR reaches 1 at +inf")
}

/// Point on the segment between two (FAR, FRR) operating points where they meet.
pub(crate) fn interpolate(a: (f64, f64), b: (f64, f64)) -> f64 {
    let da = a.0 - a.1;
    let db = b.0 - b.1;
    let lambda = if da - db == 0.0 { 0.0 } else { da / (da - db) };
    a.0 + lambda * (b.0 - a.0)
}

/// Index of the best-scoring candidate; ties go to the lexicographically
/// smallest speaker id. `None` for an empty set.
pub fn identify_index<S: AsRef<str>>(speaker_ids: &[S], scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        best = match best {
            None => Some(i),
            Some(b) => {
                let better = s > scores[b]
                    || (s == scores[b] && speaker_ids[i].as_ref() < speaker_ids[b].as_ref());
                Some(if better { i } else { b })
            }
        };
    }
    best
}

/// Closed-set identification of one clip's features against a model set.
pub fn identify(models: &ModelSet, test: &TestRepr) -> Result<String> {
    let scores = models.score(test)?;
    let idx = identify_index(models.speaker_ids(), &scores).ok_or(EvalError::TooFewSpeakers {
        needed: 1,
        found: 0,
    })?;
    Ok(models.speaker_ids()[idx].clone())
}

pub(crate) fn derive_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn speakers(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i:02}")).collect()
    }

    fn tests_for(spk: &[String], per: usize) -> Vec<TestRef> {
        spk.iter()
            .flat_map(|s| {
                (0..per).map(move |i| TestRef {
                    utterance_id: format!("{s}#t{i}"),
                    speaker_id: s.clone(),
                })
            })
            .collect()
    }

    #[test]
    fn eleven_speakers_use_everyone() {
        let spk = speakers(11);
        let tests = vec![TestRef {
            utterance_id: "u".into(),
            speaker_id: "s03".into(),
        }];
        let trials = generate_trials(&tests, &spk, 1).unwrap();
        assert_eq!(trials.len(), 11);
        let mut models: Vec<&str> = trials.iter().map(|t| t.model_speaker_id.as_str()).collect();
        models.sort();
        assert_eq!(models, spk.iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(trials.iter().filter(|t| t.is_target).count(), 1);
    }

    #[test]
    fn trial_counts_and_determinism() {
        let spk = speakers(30);
        let tests = tests_for(&spk, 2);
        let a = generate_trials(&tests, &spk, 9).unwrap();
        let b = generate_trials(&tests, &spk, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 660);
        assert_eq!(a.iter().filter(|t| t.is_target).count(), 60);
        for chunk in a.chunks(11) {
            let target = &chunk[0];
            assert!(target.is_target);
            let mut ids: Vec<&str> = chunk.iter().map(|t| t.model_speaker_id.as_str()).collect();
            ids.sort();
            ids.dedup();
            assert_eq!(ids.len(), 11);
            assert!(chunk[1..]
                .iter()
                .all(|t| !t.is_target && t.model_speaker_id != target.model_speaker_id));
        }
        let c = generate_trials(&tests, &spk, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn too_few_speakers() {
        let spk = speakers(10);
        assert!(matches!(
            generate_trials(&tests_for(&spk, 1), &spk, 0),
            Err(EvalError::TooFewSpeakers {
                needed: 11,
                found: 10
            })
        ));
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(max_normalize(&[-10.0, -12.0, -9.0]), vec![-1.0, -3.0, 0.0]);
        assert_eq!(max_normalize(&[4.2]), vec![0.0]);
    }

    #[test]
    fn eer_examples() {
        assert_eq!(compute_eer(&[5.0, 6.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(compute_eer(&[1.0, 2.0], &[5.0, 6.0]).unwrap(), 100.0);
        assert_eq!(compute_eer(&[2.0, 1.0], &[0.0, 3.0]).unwrap(), 50.0);
        assert!(matches!(
            compute_eer(&[], &[1.0]),
            Err(EvalError::EmptyScoreSet)
        ));
        assert!(matches!(
            compute_eer(&[1.0], &[]),
            Err(EvalError::EmptyScoreSet)
        ));
        // identical scores everywhere
        assert_eq!(compute_eer(&[1.0, 1.0], &[1.0]).unwrap(), 50.0);
    }

    #[test]
    fn identification_examples() {
        assert_eq!(identify_index(&["only"], &[-3.0]), Some(0));
        assert_eq!(identify_index(&["b", "a"], &[1.0, 1.0]), Some(1));
        assert_eq!(identify_index(&["a", "b", "c"], &[0.1, 0.7, 0.2]), Some(1));
        assert_eq!(identify_index::<&str>(&[], &[]), None);
    }

    #[test]
    fn system_parsing() {
        assert_eq!("gmm-ubm".parse::<System>().unwrap(), System::GmmUbm);
        assert_eq!("GMM_SVM".parse::<System>().unwrap(), System::GmmSvm);
        assert!("svm".parse::<System>().is_err());
    }
}
