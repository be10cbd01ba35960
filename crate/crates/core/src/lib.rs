//! Text-independent speaker recognition for children's speech.
//!
//! The crate is organised as a pipeline:
//!
//! - [`corpus`]: WAV ingestion, CSV manifests, enrollment/test segmentation and a
//!   seeded source-filter speaker synthesizer.
//! - [`features`]: energy SAD, framing, the 24-filter Mel bank, sub-band and
//!   full-band MFCCs, per-utterance mean/variance normalization.
//! - [`gmm`]: diagonal-covariance GMMs, binary-splitting EM for the UBM and
//!   mean-only MAP adaptation.
//! - [`svm`]: GMM mean supervectors and one-vs-rest linear SVM speaker models.
//! - [`eval`]: trial generation, max score normalization, EER, identification and
//!   the sub-band / full-band experiment harnesses.
//! - [`cli`]: configuration parsing and subcommand dispatch for the `kidsr` binary.

pub mod cli;
pub mod corpus;
pub mod eval;
pub mod features;
pub mod gmm;
pub mod svm;

pub use corpus::{AudioClip, GradeGroup, Split, SyntheticSpeakerProfile, UtteranceRecord};
pub use eval::{EvalReport, System};
pub use features::{BandMode, FeatureMatrix, MelFilterbank, SubBandSpec};
pub use gmm::{DiagGmm, SufficientStats};
pub use svm::{LinearSvmModel, Supervector};

/// Sample rate of every clip handled by the toolkit.
pub const SAMPLE_RATE_HZ: u32 = 16_000;
