//! GMM mean supervectors and one-vs-rest linear SVM speaker models.
//!
//! A supervector stacks the MAP-adapted component means, each coordinate
//! scaled by `sqrt(w_k) / sigma_kd` of the UBM, so the inner product of two
//! supervectors is the linear KL-divergence kernel between their GMMs.

mod io;
mod smo;

use thiserror::Error;

use crate::corpus::AudioClip;
use crate::features::{self, BandMode, FeatureError};
use crate::gmm::{self, DiagGmm, GmmError};
use crate::SAMPLE_RATE_HZ;

pub use io::{read_svm, write_svm, SVM_MAGIC, SVM_VERSION};

/// Enrollment audio is split into this many equal segments.
pub const ENROLL_SEGMENTS: usize = 3;
const MIN_ENROLL_SAMPLES: usize = 48 * SAMPLE_RATE_HZ as usize;

#[derive(Debug, Error)]
pub enum SvmError {
    #[error("adapted model does not match the UBM: {0}")]
    ModelMismatch(String),
    #[error("insufficient enrollment data: {available_s:.2} s (need {required_s:.2} s)")]
    InsufficientData { available_s: f64, required_s: f64 },
    #[error("degenerate training data: {0}")]
    DegenerateData(String),
    #[error("dimension mismatch: model has {model}, input has {input}")]
    DimMismatch { model: usize, input: usize },
    #[error("invalid C parameter {0}")]
    InvalidC(f64),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Gmm(#[from] GmmError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SvmError>;

#[derive(Debug, Clone, PartialEq)]
pub struct Supervector {
    pub speaker_id: String,
    pub segment_index: usize,
    values: Vec<f64>,
}

impl Supervector {
    pub fn new(speaker_id: impl Into<String>, segment_index: usize, values: Vec<f64>) -> Self {
        Self {
            speaker_id: speaker_id.into(),
            segment_index,
            values,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Stacks `sqrt(w_k) * mean_kd / sqrt(var_kd)` over components in index order.
pub fn build_supervector(
    adapted: &DiagGmm,
    ubm: &DiagGmm,
    speaker_id: impl Into<String>,
    segment_index: usize,
) -> Result<Supervector> {
    if adapted.k() != ubm.k() || adapted.dim() != ubm.dim() {
        return Err(SvmError::ModelMismatch(format!(
            "shape {}x{} vs {}x{}",
            adapted.k(),
            adapted.dim(),
            ubm.k(),
            ubm.dim()
        )));
    }
    if adapted.weights() != ubm.weights() || adapted.variances() != ubm.variances() {
        return Err(SvmError::ModelMismatch(
            "weights or variances differ from the UBM".into(),
        ));
    }
    let mut values = Vec::with_capacity(ubm.k() * ubm.dim());
    for c in 0..ubm.k() {
        let sw = ubm.weights()[c].sqrt();
        values.extend(
            adapted
                .mean(c)
                .iter()
                .zip(ubm.variance(c))
                .map(|(m, v)| sw * m / v.sqrt()),
        );
    }
    Ok(Supervector::new(speaker_id, segment_index, values))
}

/// Features -> MAP adaptation -> supervector for one clip.
pub fn clip_supervector(
    clip: &AudioClip,
    ubm: &DiagGmm,
    band_mode: BandMode,
    relevance: f64,
    segment_index: usize,
) -> Result<Supervector> {
    let feats = features::extract(clip, band_mode)?;
    features_supervector(&feats, ubm, relevance, clip.speaker_id(), segment_index)
}

pub fn features_supervector(
    feats: &features::FeatureMatrix,
    ubm: &DiagGmm,
    relevance: f64,
    speaker_id: &str,
    segment_index: usize,
) -> Result<Supervector> {
    let stats = gmm::accumulate_stats(ubm, feats)?;
    let adapted = gmm::map_adapt(ubm, &stats, relevance);
    build_supervector(&adapted, ubm, speaker_id, segment_index)
}

/// Splits 48 s of enrollment into three equal-length segments.
pub fn enrollment_segments(enrollment: &AudioClip) -> Result<Vec<AudioClip>> {
    if enrollment.len() < MIN_ENROLL_SAMPLES {
        return Err(SvmError::InsufficientData {
            available_s: enrollment.duration_s(),
            required_s: MIN_ENROLL_SAMPLES as f64 / SAMPLE_RATE_HZ as f64,
        });
    }
    let seg = enrollment.len() / ENROLL_SEGMENTS;
    Ok((0..ENROLL_SEGMENTS)
        .map(|i| {
            enrollment.slice(
                i * seg..(i + 1) * seg,
                format!("{}#seg{i}", enrollment.utterance_id()),
            )
        })
        .collect())
}

/// One supervector per enrollment segment.
pub fn enrollment_supervectors(
    enrollment: &AudioClip,
    ubm: &DiagGmm,
    band_mode: BandMode,
    relevance: f64,
) -> Result<Vec<Supervector>> {
    enrollment_segments(enrollment)?
        .iter()
        .enumerate()
        .map(|(i, seg)| clip_supervector(seg, ubm, band_mode, relevance, i))
        .collect()
}

/// Per-speaker linear SVM: `score(x) = <w, x> + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvmModel {
    pub speaker_id: String,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c_param: f64,
    /// KKT violation left by the solver.
    pub kkt_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Trains a soft-margin linear SVM with the target speaker labelled +1.
pub fn train_one_vs_rest(
    target: &[Supervector],
    background: &[Supervector],
    c_param: f64,
) -> Result<LinearSvmModel> {
    if !(c_param.is_finite() && c_param > 0.0) {
        return Err(SvmError::InvalidC(c_param));
    }
    if target.is_empty() || background.is_empty() {
        return Err(SvmError::DegenerateData(format!(
            "{} target and {} background vectors",
            target.len(),
            background.len()
        )));
    }
    let dim = target[0].len();
    let points: Vec<&[f64]> = target
        .iter()
        .chain(background)
        .map(|s| s.values())
        .collect();
    if let Some(bad) = points.iter().find(|p| p.len() != dim) {
        return Err(SvmError::DimMismatch {
            model: dim,
            input: bad.len(),
        });
    }
    if points.iter().all(|p| *p == points[0]) {
        return Err(SvmError::DegenerateData("all points identical".into()));
    }
    let labels: Vec<f64> = target
        .iter()
        .map(|_| 1.0)
        .chain(background.iter().map(|_| -1.0))
        .collect();

    let n = points.len();
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let k = dot(points[i], points[j]);
            gram[i * n + j] = k;
            gram[j * n + i] = k;
        }
    }
    let sol = smo::SmoSolver::new(&gram, &labels, c_param).solve();
    log::trace!("SMO finished after {} iterations", sol.iterations);

    let mut weights = vec![0.0; dim];
    for ((p, a), y) in points.iter().zip(&sol.alpha).zip(&labels) {
        if *a != 0.0 {
            for (w, x) in weights.iter_mut().zip(*p) {
                *w += a * y * x;
            }
        }
    }
    Ok(LinearSvmModel {
        speaker_id: target[0].speaker_id.clone(),
        weights,
        bias: sol.bias,
        c_param,
        kkt_residual: sol.residual,
    })
}

/// Uncalibrated margin `<w, x> + b`.
pub fn svm_score(model: &LinearSvmModel, sv: &Supervector) -> Result<f64> {
    if sv.len() != model.weights.len() {
        return Err(SvmError::DimMismatch {
            model: model.weights.len(),
            input: sv.len(),
        });
    }
    Ok(dot(&model.weights, sv.values()) + model.bias)
}

/// Regularized hinge loss `1/2 |w|^2 + C sum_i max(0, 1 - y_i (<w, x_i> + b))`.
pub fn primal_objective(
    weights: &[f64],
    bias: f64,
    points: &[&[f64]],
    labels: &[f64],
    c_param: f64,
) -> f64 {
    let hinge: f64 = points
        .iter()
        .zip(labels)
        .map(|(x, y)| (1.0 - y * (dot(weights, x) + bias)).max(0.0))
        .sum();
    0.5 * dot(weights, weights) + c_param * hinge
}

impl LinearSvmModel {
    pub fn objective(&self, target: &[Supervector], background: &[Supervector]) -> f64 {
        let points: Vec<&[f64]> = target
            .iter()
            .chain(background)
            .map(|s| s.values())
            .collect();
        let labels: Vec<f64> = target
            .iter()
            .map(|_| 1.0)
            .chain(background.iter().map(|_| -1.0))
            .collect();
        primal_objective(&self.weights, self.bias, &points, &labels, self.c_param)
    }
}
