//! Experiment harnesses: corpus preparation, back-end wiring and the
//! sub-band / full-band evaluation loops.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use log::{info, warn};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{
    compute_eer, derive_seed, generate_trials, identify_index, max_normalize, EvalError,
    EvalReport, Result, ScoreRecord, SweepRow, System, TestRef,
};
use crate::corpus::{
    self, read_wav, split_enroll_test, synth_utterance, AudioClip, CorpusError, GradeGroup, Split,
    SyntheticSpeakerProfile, UtteranceRecord,
};
use crate::features::{
    self, build_filterbank, features_from_energies, BandMode, FeatureMatrix, LogEnergies,
    SubBandSpec,
};
use crate::gmm::{self, DiagGmm, EmConfig};
use crate::svm::{self, LinearSvmModel, Supervector};

/// Speakers per simulated class.
pub const CLASS_SIZE: usize = 30;
/// Random classes drawn per grade group.
pub const CLASS_REPEATS: usize = 4;

/// One enrolled speaker: 48 s of enrollment speech plus 10 s test chunks.
#[derive(Debug, Clone)]
pub struct SpeakerData {
    pub speaker_id: String,
    pub grade_group: GradeGroup,
    pub enrollment: AudioClip,
    pub tests: Vec<AudioClip>,
}

/// Speakers ready for evaluation, in manifest order.
#[derive(Debug, Clone, Default)]
pub struct EvalCorpus {
    pub speakers: Vec<SpeakerData>,
}

/// Generated profiles plus every utterance with its manifest record.
pub type SyntheticCorpus = (
    Vec<SyntheticSpeakerProfile>,
    Vec<(UtteranceRecord, AudioClip)>,
);

/// Shape of a generated synthetic corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthCorpusConfig {
    pub n_speakers: usize,
    pub enroll_utterances: usize,
    pub test_utterances: usize,
    pub utterance_seconds: f64,
}

impl Default for SynthCorpusConfig {
    fn default() -> Self {
        // 60 s of enrollment audio leaves > 48 s after SAD; 30 s of test
        // audio yields two 10 s chunks.
        Self {
            n_speakers: 30,
            enroll_utterances: 6,
            test_utterances: 3,
            utterance_seconds: 10.0,
        }
    }
}

impl SynthCorpusConfig {
    /// Profiles and utterances of a synthetic corpus. Grade groups are
    /// assigned round-robin; WAV paths are relative (`wav/<speaker>/<utt>.wav`).
    pub fn generate(&self, seed: u64) -> Result<SyntheticCorpus> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let profiles: Vec<(SyntheticSpeakerProfile, GradeGroup)> = (0..self.n_speakers)
            .map(|i| {
                let group = GradeGroup::LABELLED[i % GradeGroup::LABELLED.len()];
                let id = format!("spk{i:03}");
                (SyntheticSpeakerProfile::random(id, group, &mut rng), group)
            })
            .collect();
        let n_utt = self.enroll_utterances + self.test_utterances;
        let jobs: Vec<(usize, usize)> = (0..profiles.len())
            .flat_map(|s| (0..n_utt).map(move |u| (s, u)))
            .collect();
        let utterances = jobs
            .par_iter()
            .map(|&(s, u)| {
                let (profile, group) = &profiles[s];
                let clip = synth_utterance(profile, self.utterance_seconds, u as u64)?;
                let record = UtteranceRecord {
                    utterance_id: clip.utterance_id().to_string(),
                    speaker_id: profile.speaker_id.clone(),
                    grade_group: *group,
                    split: if u < self.enroll_utterances {
                        Split::Enroll
                    } else {
                        Split::Test
                    },
                    path: Path::new("wav")
                        .join(&profile.speaker_id)
                        .join(format!("{}.wav", clip.utterance_id())),
                };
                Ok((record, clip))
            })
            .collect::<std::result::Result<Vec<_>, CorpusError>>()?;
        Ok((profiles.into_iter().map(|(p, _)| p).collect(), utterances))
    }
}

impl EvalCorpus {
    /// Groups utterances by speaker (first-appearance order) and cuts
    /// enrollment and tests. Speakers with too little speech are skipped
    /// with a warning.
    pub fn from_utterances(utterances: Vec<(UtteranceRecord, AudioClip)>) -> Result<Self> {
        let mut order: Vec<String> = Vec::new();
        let mut by_speaker: HashMap<String, (GradeGroup, Vec<AudioClip>, Vec<AudioClip>)> =
            HashMap::new();
        for (rec, clip) in utterances {
            let clip = clip.relabel(rec.utterance_id.clone(), rec.speaker_id.clone());
            let entry = by_speaker.entry(rec.speaker_id.clone()).or_insert_with(|| {
                order.push(rec.speaker_id.clone());
                (rec.grade_group, Vec::new(), Vec::new())
            });
            match rec.split {
                Split::Enroll => entry.1.push(clip),
                Split::Test => entry.2.push(clip),
            }
        }
        let jobs: Vec<(String, GradeGroup, Vec<AudioClip>, Vec<AudioClip>)> = order
            .into_iter()
            .map(|id| {
                let (g, e, t) = by_speaker.remove(&id).expect("speaker recorded");
                (id, g, e, t)
            })
            .collect();
        let prepared: Vec<Option<SpeakerData>> = jobs
            .into_par_iter()
            .map(|(speaker_id, grade_group, enroll, test)| {
                if enroll.is_empty() {
                    warn!("speaker {speaker_id}: no ENROLL utterances, skipped");
                    return Ok(None);
                }
                match split_enroll_test(&enroll, &test) {
                    Ok(seg) => Ok(Some(SpeakerData {
                        speaker_id,
                        grade_group,
                        enrollment: seg.enrollment,
                        tests: seg.tests,
                    })),
                    Err(CorpusError::InsufficientData { available_s, .. }) => {
                        warn!(
                            "speaker {speaker_id}: only {available_s:.2} s of enrollment speech, skipped"
                        );
                        Ok(None)
                    }
                    Err(e) => Err(EvalError::from(e)),
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            speakers: prepared.into_iter().flatten().collect(),
        })
    }

    /// Reads every WAV referenced by a manifest. Relative paths are resolved
    /// against the manifest's directory.
    pub fn from_manifest(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let records = corpus::load_manifest(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let utterances = records
            .into_par_iter()
            .map(|rec| {
                let wav = if rec.path.is_absolute() {
                    rec.path.clone()
                } else {
                    base.join(&rec.path)
                };
                let clip = read_wav(&wav)
                    .map_err(|e| EvalError::from(e).in_utterance(&rec.utterance_id))?;
                Ok((rec, clip))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_utterances(utterances)
    }

    /// Generates a synthetic corpus in memory.
    pub fn synthetic(config: &SynthCorpusConfig, seed: u64) -> Result<Self> {
        let (_, utterances) = config.generate(seed)?;
        Self::from_utterances(utterances)
    }

    pub fn len(&self) -> usize {
        self.speakers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speakers.is_empty()
    }

    pub fn speaker_ids(&self) -> Vec<String> {
        self.speakers.iter().map(|s| s.speaker_id.clone()).collect()
    }

    pub fn test_count(&self) -> usize {
        self.speakers.iter().map(|s| s.tests.len()).sum()
    }
}

/// Back-end hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemConfig {
    pub system: System,
    pub k: usize,
    pub relevance: f64,
    pub c_param: f64,
    pub em: EmConfig,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            system: System::GmmSvm,
            k: 64,
            relevance: 16.0,
            c_param: 1.0,
            em: EmConfig::default(),
        }
    }
}

/// A trained UBM together with the configuration that uses it.
#[derive(Debug, Clone)]
pub struct Backend {
    config: SystemConfig,
    band_mode: BandMode,
    ubm: Arc<DiagGmm>,
}

/// What a test utterance is reduced to before scoring.
#[derive(Debug, Clone)]
pub enum TestRepr {
    /// Normalized features and their average UBM log-likelihood.
    Frames {
        features: FeatureMatrix,
        ubm_ll: f64,
    },
    Supervector(Supervector),
}

#[derive(Debug, Clone)]
pub enum SpeakerModel {
    Gmm(DiagGmm),
    Svm(LinearSvmModel),
}

/// Per-speaker enrollment material: an adapted GMM or three supervectors.
#[derive(Debug, Clone)]
enum Enrolled {
    Gmm(DiagGmm),
    Supervectors(Vec<Supervector>),
}

impl Backend {
    /// Trains the UBM on the pooled frames of `training`.
    pub fn train<'a>(
        training: impl IntoIterator<Item = &'a FeatureMatrix>,
        band_mode: BandMode,
        config: SystemConfig,
    ) -> Result<Self> {
        let pooled = FeatureMatrix::stack(training)?;
        info!(
            "training {}-component UBM on {} frames ({band_mode})",
            config.k,
            pooled.n_frames()
        );
        let ubm = gmm::train_ubm(&pooled, config.k, &config.em)?;
        Ok(Self::from_ubm(ubm, band_mode, config))
    }

    pub fn from_ubm(ubm: DiagGmm, band_mode: BandMode, config: SystemConfig) -> Self {
        Self {
            config,
            band_mode,
            ubm: Arc::new(ubm),
        }
    }

    pub fn ubm(&self) -> &DiagGmm {
        &self.ubm
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn band_mode(&self) -> BandMode {
        self.band_mode
    }

    /// Mean-only MAP adaptation of the UBM to `features`.
    pub fn adapt(&self, features: &FeatureMatrix) -> Result<DiagGmm> {
        let stats = gmm::accumulate_stats(&self.ubm, features)?;
        Ok(gmm::map_adapt(&self.ubm, &stats, self.config.relevance))
    }

    pub fn supervector(
        &self,
        features: &FeatureMatrix,
        speaker_id: &str,
        segment_index: usize,
    ) -> Result<Supervector> {
        Ok(svm::features_supervector(
            features,
            &self.ubm,
            self.config.relevance,
            speaker_id,
            segment_index,
        )?)
    }

    pub fn test_repr(&self, features: FeatureMatrix, speaker_id: &str) -> Result<TestRepr> {
        Ok(match self.config.system {
            System::GmmUbm => TestRepr::Frames {
                ubm_ll: gmm::log_likelihood(&self.ubm, &features)?,
                features,
            },
            System::GmmSvm => TestRepr::Supervector(self.supervector(&features, speaker_id, 0)?),
        })
    }

    /// Test representation of a clip.
    pub fn clip_repr(&self, clip: &AudioClip) -> Result<TestRepr> {
        let feats = features::extract(clip, self.band_mode)?;
        self.test_repr(feats, clip.speaker_id())
    }

    /// One-vs-rest SVMs for a population, given each speaker's enrollment
    /// supervectors; background = every other speaker's supervectors.
    pub fn train_svms(&self, supervectors: &[&[Supervector]]) -> Result<Vec<LinearSvmModel>> {
        (0..supervectors.len())
            .into_par_iter()
            .map(|i| {
                let background: Vec<Supervector> = supervectors
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .flat_map(|(_, s)| s.iter().cloned())
                    .collect();
                Ok(svm::train_one_vs_rest(
                    supervectors[i],
                    &background,
                    self.config.c_param,
                )?)
            })
            .collect()
    }

    /// Builds a model set for `ids` from enrollment clips.
    pub fn enroll_clips(&self, enrollments: &[&AudioClip]) -> Result<ModelSet> {
        let enrolled = enrollments
            .par_iter()
            .map(|clip| {
                let r = match self.config.system {
                    System::GmmUbm => {
                        let feats = features::extract(clip, self.band_mode)?;
                        Enrolled::Gmm(self.adapt(&feats)?)
                    }
                    System::GmmSvm => Enrolled::Supervectors(svm::enrollment_supervectors(
                        clip,
                        &self.ubm,
                        self.band_mode,
                        self.config.relevance,
                    )?),
                };
                Ok(r)
            })
            .collect::<Result<Vec<_>>>()?;
        let ids: Vec<String> = enrollments
            .iter()
            .map(|c| c.speaker_id().to_string())
            .collect();
        let refs: Vec<&Enrolled> = enrolled.iter().collect();
        self.model_set(ids, &refs)
    }

    fn model_set(&self, speaker_ids: Vec<String>, enrolled: &[&Enrolled]) -> Result<ModelSet> {
        let models = match self.config.system {
            System::GmmUbm => enrolled
                .iter()
                .map(|e| match e {
                    Enrolled::Gmm(g) => Ok(SpeakerModel::Gmm(g.clone())),
                    Enrolled::Supervectors(_) => Err(EvalError::BackendMismatch),
                })
                .collect::<Result<Vec<_>>>()?,
            System::GmmSvm => {
                let svs = enrolled
                    .iter()
                    .map(|e| match e {
                        Enrolled::Supervectors(s) => Ok(s.as_slice()),
                        Enrolled::Gmm(_) => Err(EvalError::BackendMismatch),
                    })
                    .collect::<Result<Vec<_>>>()?;
                self.train_svms(&svs)?
                    .into_iter()
                    .map(SpeakerModel::Svm)
                    .collect()
            }
        };
        ModelSet::new(self.clone(), speaker_ids, models)
    }
}

/// Enrolled speaker models sharing one back-end.
#[derive(Debug, Clone)]
pub struct ModelSet {
    backend: Backend,
    speaker_ids: Vec<String>,
    models: Vec<SpeakerModel>,
}

impl ModelSet {
    pub fn new(
        backend: Backend,
        speaker_ids: Vec<String>,
        models: Vec<SpeakerModel>,
    ) -> Result<Self> {
        let consistent = models.iter().all(|m| {
            matches!(
                (m, backend.config.system),
                (SpeakerModel::Gmm(_), System::GmmUbm) | (SpeakerModel::Svm(_), System::GmmSvm)
            )
        });
        if !consistent || speaker_ids.len() != models.len() {
            return Err(EvalError::BackendMismatch);
        }
        Ok(Self {
            backend,
            speaker_ids,
            models,
        })
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn speaker_ids(&self) -> &[String] {
        &self.speaker_ids
    }

    pub fn models(&self) -> &[SpeakerModel] {
        &self.models
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Raw scores of one test against every model: the log-likelihood ratio
    /// to the UBM for GMM-UBM, the SVM margin for GMM-SVM.
    pub fn score(&self, test: &TestRepr) -> Result<Vec<f64>> {
        self.models
            .iter()
            .map(|m| match (m, test) {
                (SpeakerModel::Gmm(g), TestRepr::Frames { features, ubm_ll }) => {
                    Ok(gmm::log_likelihood(g, features)? - ubm_ll)
                }
                (SpeakerModel::Svm(s), TestRepr::Supervector(sv)) => Ok(svm::svm_score(s, sv)?),
                _ => Err(EvalError::BackendMismatch),
            })
            .collect()
    }

    /// Scores every test, runs identification and pooled verification.
    pub fn evaluate(
        &self,
        tests: &[(TestRef, TestRepr)],
        seed: u64,
        population: &str,
    ) -> Result<PopulationOutcome> {
        let matrix = tests
            .par_iter()
            .map(|(r, repr)| {
                self.score(repr)
                    .map_err(|e| e.in_utterance(&r.utterance_id))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut decisions = Vec::with_capacity(tests.len());
        let mut correct = 0usize;
        for ((r, _), scores) in tests.iter().zip(&matrix) {
            let best =
                identify_index(&self.speaker_ids, scores).ok_or(EvalError::TooFewSpeakers {
                    needed: 1,
                    found: 0,
                })?;
            let predicted = self.speaker_ids[best].clone();
            correct += usize::from(predicted == r.speaker_id);
            decisions.push((r.utterance_id.clone(), predicted));
        }

        let refs: Vec<TestRef> = tests.iter().map(|(r, _)| r.clone()).collect();
        let trials = generate_trials(&refs, &self.speaker_ids, seed)?;
        let index: HashMap<&str, usize> = self
            .speaker_ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let mut records = Vec::with_capacity(trials.len());
        let per_test = trials.len() / tests.len().max(1);
        for (t, set) in trials.chunks(per_test.max(1)).enumerate() {
            let raw: Vec<f64> = set
                .iter()
                .map(|tr| matrix[t][index[tr.model_speaker_id.as_str()]])
                .collect();
            let norm = max_normalize(&raw);
            records.extend(
                set.iter()
                    .zip(raw)
                    .zip(norm)
                    .map(|((tr, r), n)| ScoreRecord {
                        trial: tr.clone(),
                        raw_score: r,
                        normalized_score: n,
                    }),
            );
        }
        let (targets, impostors): (Vec<&ScoreRecord>, Vec<&ScoreRecord>) =
            records.iter().partition(|r| r.trial.is_target);
        let eer = compute_eer(
            &targets
                .iter()
                .map(|r| r.normalized_score)
                .collect::<Vec<_>>(),
            &impostors
                .iter()
                .map(|r| r.normalized_score)
                .collect::<Vec<_>>(),
        )?;
        let cfg = &self.backend.config;
        let report = EvalReport {
            population: population.to_string(),
            system: cfg.system,
            band_mode: self.backend.band_mode,
            k: cfg.k,
            eer_percent: eer,
            id_accuracy_percent: 100.0 * correct as f64 / tests.len() as f64,
            n_trials: records.len(),
            n_tests: tests.len(),
            seed,
            per_subband_rows: None,
        };
        Ok(PopulationOutcome {
            report,
            scores: records,
            decisions,
        })
    }
}

/// Result of evaluating one speaker population.
#[derive(Debug, Clone)]
pub struct PopulationOutcome {
    pub report: EvalReport,
    pub scores: Vec<ScoreRecord>,
    /// `(test utterance id, identified speaker id)` in test order.
    pub decisions: Vec<(String, String)>,
}

/// How full-band speakers are grouped into populations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Grouping {
    AgeGroups,
    Classroom,
    School,
}

impl Grouping {
    pub fn as_str(self) -> &'static str {
        match self {
            Grouping::AgeGroups => "age-groups",
            Grouping::Classroom => "classroom",
            Grouping::School => "school",
        }
    }
}

impl std::fmt::Display for Grouping {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Grouping {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "age-groups" | "age" => Ok(Grouping::AgeGroups),
            "classroom" | "class" => Ok(Grouping::Classroom),
            "school" => Ok(Grouping::School),
            other => Err(format!(
                "unknown grouping `{other}` (expected age-groups, classroom or school)"
            )),
        }
    }
}

/// Filterbank log-energies of everything a speaker contributes.
struct SpeakerEnergies {
    enrollment: LogEnergies,
    segments: Vec<LogEnergies>,
    tests: Vec<LogEnergies>,
}

fn speaker_energies(corpus: &EvalCorpus, with_segments: bool) -> Result<Vec<SpeakerEnergies>> {
    corpus
        .speakers
        .par_iter()
        .map(|s| {
            let energies = |clip: &AudioClip| {
                features::log_energies(clip)
                    .map_err(|e| EvalError::from(e).in_utterance(clip.utterance_id()))
            };
            let segments = if with_segments {
                svm::enrollment_segments(&s.enrollment)
                    .map_err(|e| EvalError::from(e).in_utterance(s.enrollment.utterance_id()))?
                    .iter()
                    .map(energies)
                    .collect::<Result<Vec<_>>>()?
            } else {
                Vec::new()
            };
            Ok(SpeakerEnergies {
                enrollment: energies(&s.enrollment)?,
                segments,
                tests: s.tests.iter().map(energies).collect::<Result<_>>()?,
            })
        })
        .collect()
}

/// Everything needed to evaluate any population in one band.
struct BandState {
    backend: Backend,
    enrolled: Vec<Enrolled>,
    tests: Vec<Vec<(TestRef, TestRepr)>>,
}

fn band_state(
    corpus: &EvalCorpus,
    energies: &[SpeakerEnergies],
    band_mode: BandMode,
    config: SystemConfig,
) -> Result<BandState> {
    let enroll_feats = energies
        .par_iter()
        .zip(&corpus.speakers)
        .map(|(e, s)| {
            features_from_energies(&e.enrollment, band_mode)
                .map_err(|err| EvalError::from(err).in_utterance(s.enrollment.utterance_id()))
        })
        .collect::<Result<Vec<_>>>()?;
    let backend = Backend::train(&enroll_feats, band_mode, config)?;

    let per_speaker = energies
        .par_iter()
        .zip(&corpus.speakers)
        .zip(&enroll_feats)
        .map(|((e, s), feats)| {
            let ctx = |err: EvalError| err.in_utterance(s.enrollment.utterance_id());
            let enrolled = match config.system {
                System::GmmUbm => Enrolled::Gmm(backend.adapt(feats).map_err(ctx)?),
                System::GmmSvm => Enrolled::Supervectors(
                    e.segments
                        .iter()
                        .enumerate()
                        .map(|(i, seg)| {
                            let f = features_from_energies(seg, band_mode)?;
                            backend.supervector(&f, &s.speaker_id, i)
                        })
                        .collect::<Result<Vec<_>>>()
                        .map_err(ctx)?,
                ),
            };
            let tests = e
                .tests
                .iter()
                .zip(&s.tests)
                .map(|(te, clip)| {
                    let repr = features_from_energies(te, band_mode)
                        .map_err(EvalError::from)
                        .and_then(|f| backend.test_repr(f, &s.speaker_id))
                        .map_err(|err| err.in_utterance(clip.utterance_id()))?;
                    Ok((
                        TestRef {
                            utterance_id: clip.utterance_id().to_string(),
                            speaker_id: s.speaker_id.clone(),
                        },
                        repr,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((enrolled, tests))
        })
        .collect::<Result<Vec<_>>>()?;
    let (enrolled, tests) = per_speaker.into_iter().unzip();
    Ok(BandState {
        backend,
        enrolled,
        tests,
    })
}

impl BandState {
    fn evaluate(
        &self,
        corpus: &EvalCorpus,
        members: &[usize],
        seed: u64,
        population: &str,
    ) -> Result<PopulationOutcome> {
        let ids = members
            .iter()
            .map(|&i| corpus.speakers[i].speaker_id.clone())
            .collect();
        let enrolled: Vec<&Enrolled> = members.iter().map(|&i| &self.enrolled[i]).collect();
        let models = self.backend.model_set(ids, &enrolled)?;
        let tests: Vec<(TestRef, TestRepr)> = members
            .iter()
            .flat_map(|&i| self.tests[i].iter().cloned())
            .collect();
        if tests.is_empty() {
            return Err(EvalError::EmptyScoreSet);
        }
        models.evaluate(&tests, seed, population)
    }
}

fn check_population(corpus: &EvalCorpus) -> Result<()> {
    let needed = super::IMPOSTORS_PER_TEST + 1;
    if corpus.len() < needed {
        return Err(EvalError::TooFewSpeakers {
            needed,
            found: corpus.len(),
        });
    }
    Ok(())
}

/// Runs the full pipeline separately in each of the 21 sub-bands over all
/// speakers. Headline rates of the returned report are the row means.
pub fn subband_sweep(corpus: &EvalCorpus, config: SystemConfig, seed: u64) -> Result<EvalReport> {
    check_population(corpus)?;
    let energies = speaker_energies(corpus, config.system == System::GmmSvm)?;
    let fb = build_filterbank();
    let members: Vec<usize> = (0..corpus.len()).collect();
    let mut rows = Vec::with_capacity(crate::features::N_SUBBANDS);
    let mut last = None;
    for spec in SubBandSpec::all() {
        let n = spec.index();
        let wrap = |e: EvalError| EvalError::SubBand {
            index: n,
            source: Box::new(e),
        };
        let state = band_state(corpus, &energies, BandMode::SubBand(spec), config).map_err(wrap)?;
        let outcome = state
            .evaluate(corpus, &members, seed, "all")
            .map_err(wrap)?;
        let (lo, hi) = spec.span_hz(&fb);
        info!(
            "sub-band {n:2} [{lo:.0}, {hi:.0}] Hz: EER {:.2}%, ID {:.2}%",
            outcome.report.eer_percent, outcome.report.id_accuracy_percent
        );
        rows.push(SweepRow {
            subband_index: n,
            span_lo_hz: lo,
            span_hi_hz: hi,
            eer_percent: outcome.report.eer_percent,
            id_percent: outcome.report.id_accuracy_percent,
        });
        last = Some(outcome.report);
    }
    let mut report = last.expect("21 sub-bands");
    let mean = |f: fn(&SweepRow) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
    report.eer_percent = mean(|r| r.eer_percent);
    report.id_accuracy_percent = mean(|r| r.id_percent);
    report.per_subband_rows = Some(rows);
    Ok(report)
}

/// Full-band evaluation under one of the population groupings.
///
/// * `AgeGroups`: one report per non-empty labelled grade group.
/// * `Classroom`: per grade group, four random classes of 30 speakers; the
///   report averages their rates and sums their trial counts.
/// * `School`: one population of every speaker.
pub fn fullband_eval(
    corpus: &EvalCorpus,
    config: SystemConfig,
    grouping: Grouping,
    seed: u64,
) -> Result<Vec<EvalReport>> {
    let populations: Vec<(GradeGroup, Vec<usize>)> = match grouping {
        Grouping::School => {
            check_population(corpus)?;
            Vec::new()
        }
        _ => {
            let groups: Vec<(GradeGroup, Vec<usize>)> = GradeGroup::LABELLED
                .iter()
                .map(|&g| {
                    let members = (0..corpus.len())
                        .filter(|&i| corpus.speakers[i].grade_group == g)
                        .collect::<Vec<_>>();
                    (g, members)
                })
                .filter(|(g, m)| {
                    if m.is_empty() {
                        warn!("grade group {g} has no speakers, skipped");
                    }
                    !m.is_empty()
                })
                .collect();
            if groups.is_empty() {
                return Err(EvalError::MissingGroupLabels);
            }
            let required = match grouping {
                Grouping::Classroom => CLASS_SIZE,
                _ => super::IMPOSTORS_PER_TEST + 1,
            };
            if let Some((g, m)) = groups.iter().find(|(_, m)| m.len() < required) {
                return Err(EvalError::GroupTooSmall {
                    group: g.to_string(),
                    size: m.len(),
                    required,
                });
            }
            groups
        }
    };

    let energies = speaker_energies(corpus, config.system == System::GmmSvm)?;
    let state = band_state(corpus, &energies, BandMode::FullBand, config)?;
    match grouping {
        Grouping::School => {
            let all: Vec<usize> = (0..corpus.len()).collect();
            Ok(vec![state.evaluate(corpus, &all, seed, "SCHOOL")?.report])
        }
        Grouping::AgeGroups => populations
            .iter()
            .map(|(g, m)| Ok(state.evaluate(corpus, m, seed, g.as_str())?.report))
            .collect(),
        Grouping::Classroom => populations
            .iter()
            .enumerate()
            .map(|(gi, (g, m))| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, gi as u64 + 1));
                let mut reports = Vec::with_capacity(CLASS_REPEATS);
                for rep in 0..CLASS_REPEATS {
                    let mut picks = sample(&mut rng, m.len(), CLASS_SIZE).into_vec();
                    picks.sort_unstable();
                    let class: Vec<usize> = picks.into_iter().map(|i| m[i]).collect();
                    let label = format!("{g}-class{}", rep + 1);
                    let trial_seed = derive_seed(seed, 1000 * (gi as u64 + 1) + rep as u64);
                    reports.push(state.evaluate(corpus, &class, trial_seed, &label)?.report);
                }
                let n = reports.len() as f64;
                let mut avg = reports[0].clone();
                avg.population = format!("{g}-classroom");
                avg.seed = seed;
                avg.eer_percent = reports.iter().map(|r| r.eer_percent).sum::<f64>() / n;
                avg.id_accuracy_percent =
                    reports.iter().map(|r| r.id_accuracy_percent).sum::<f64>() / n;
                avg.n_trials = reports.iter().map(|r| r.n_trials).sum();
                avg.n_tests = reports.iter().map(|r| r.n_tests).sum();
                Ok(avg)
            })
            .collect(),
    }
}
