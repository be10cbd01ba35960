//! MFCC front-end.
//!
//! `extract` runs: energy SAD -> 20 ms Hamming frames (10 ms hop) -> 512-point
//! magnitude spectrum -> log energies of the 24-filter Mel bank -> DCT-II ->
//! per-utterance mean/variance normalization.
//!
//! Sub-band mode keeps all four coefficients c0..c3 of filters `N..N+3`;
//! full-band mode keeps c1..c19 of all 24 filters. No pre-emphasis, no deltas.

mod dct;
mod dump;
mod filterbank;
mod frames;

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use thiserror::Error;

use crate::corpus::AudioClip;

pub use dct::Dct;
pub use dump::{read_features, write_features, FEATURE_MAGIC, FEATURE_VERSION};
pub use filterbank::{
    build_filterbank, region_span_hz, MelFilter, MelFilterbank, SubBandSpec, CENTER_FREQUENCIES_HZ,
};
pub use frames::{
    detect_speech, frame_and_window, frame_count, hamming, magnitude_spectrum, SpectrumAnalyzer,
};

pub const FRAME_LEN: usize = 320;
pub const HOP_LEN: usize = 160;
pub const FFT_SIZE: usize = 512;
pub const N_BINS: usize = FFT_SIZE / 2 + 1;
pub const N_FILTERS: usize = 24;
pub const N_SUBBANDS: usize = 21;
pub const SUBBAND_WIDTH: usize = 4;
pub const SUBBAND_DIM: usize = 4;
pub const FULLBAND_DIM: usize = 19;
pub const LOG_FLOOR: f64 = 1e-10;
pub const SAD_RANGE_DB: f64 = 30.0;
/// Columns whose variance falls below this are zeroed by CMVN.
pub const DEGENERATE_VARIANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("clip too short for one frame ({samples} samples, need 320)")]
    TooShort { samples: usize },
    #[error("too few frames for normalization ({frames}, need 2)")]
    TooFewFrames { frames: usize },
    #[error("invalid sub-band index {0} (expected 1..=21)")]
    InvalidSubBand(usize),
    #[error("feature matrix: {0}")]
    Shape(String),
    #[error("feature file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FeatureError>;

/// Which part of the spectrum a feature matrix describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BandMode {
    FullBand,
    SubBand(SubBandSpec),
}

impl BandMode {
    pub fn subband(index: usize) -> Result<Self> {
        SubBandSpec::new(index)
            .map(BandMode::SubBand)
            .ok_or(FeatureError::InvalidSubBand(index))
    }

    pub fn dim(self) -> usize {
        match self {
            BandMode::FullBand => FULLBAND_DIM,
            BandMode::SubBand(_) => SUBBAND_DIM,
        }
    }

    /// 0 for full band, otherwise the sub-band index.
    pub fn code(self) -> u32 {
        match self {
            BandMode::FullBand => 0,
            BandMode::SubBand(s) => s.index() as u32,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(BandMode::FullBand),
            n => Self::subband(n as usize),
        }
    }
}

impl fmt::Display for BandMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BandMode::FullBand => f.write_str("fullband"),
            BandMode::SubBand(s) => write!(f, "subband:{}", s.index()),
        }
    }
}

impl FromStr for BandMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        if s == "fullband" || s == "full" {
            return Ok(BandMode::FullBand);
        }
        let idx = s
            .strip_prefix("subband:")
            .or_else(|| s.strip_prefix("sub:"))
            .ok_or_else(|| format!("invalid band `{s}` (expected `fullband` or `subband:N`)"))?;
        let n: usize = idx
            .parse()
            .map_err(|_| format!("invalid sub-band index `{idx}`"))?;
        BandMode::subband(n).map_err(|e| e.to_string())
    }
}

/// Frames x coefficients, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    band_mode: BandMode,
    n_frames: usize,
    values: Vec<f64>,
    normalized: bool,
}

impl FeatureMatrix {
    pub fn new(band_mode: BandMode, values: Vec<f64>, normalized: bool) -> Result<Self> {
        let dim = band_mode.dim();
        if !values.len().is_multiple_of(dim) {
            return Err(FeatureError::Shape(format!(
                "{} values is not a multiple of dim {dim}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::Shape("non-finite value".into()));
        }
        Ok(Self {
            band_mode,
            n_frames: values.len() / dim,
            values,
            normalized,
        })
    }

    pub fn empty(band_mode: BandMode) -> Self {
        Self {
            band_mode,
            n_frames: 0,
            values: Vec::new(),
            normalized: false,
        }
    }

    /// Concatenates the rows of several matrices with the same band mode.
    pub fn stack<'a>(mats: impl IntoIterator<Item = &'a FeatureMatrix>) -> Result<Self> {
        let mut iter = mats.into_iter().peekable();
        let Some(first) = iter.peek() else {
            return Err(FeatureError::Shape("nothing to stack".into()));
        };
        let band_mode = first.band_mode;
        let mut normalized = true;
        let mut values = Vec::new();
        for m in iter {
            if m.band_mode != band_mode {
                return Err(FeatureError::Shape(format!(
                    "cannot stack {} with {band_mode}",
                    m.band_mode
                )));
            }
            normalized &= m.normalized;
            values.extend_from_slice(&m.values);
        }
        let dim = band_mode.dim();
        Ok(Self {
            band_mode,
            n_frames: values.len() / dim,
            values,
            normalized,
        })
    }

    pub fn band_mode(&self) -> BandMode {
        self.band_mode
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn dim(&self) -> usize {
        self.band_mode.dim()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let d = self.dim();
        &self.values[t * d..(t + 1) * d]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.dim())
    }

    /// Per-column population mean and variance.
    pub fn column_moments(&self) -> Vec<(f64, f64)> {
        let d = self.dim();
        let n = self.n_frames as f64;
        (0..d)
            .map(|j| {
                let mean = self.rows().map(|r| r[j]).sum::<f64>() / n;
                let var = self.rows().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
                (mean, var)
            })
            .collect()
    }
}

fn filterbank() -> &'static MelFilterbank {
    static FB: OnceLock<MelFilterbank> = OnceLock::new();
    FB.get_or_init(build_filterbank)
}

fn dct4() -> &'static Dct {
    static D: OnceLock<Dct> = OnceLock::new();
    D.get_or_init(|| Dct::new(SUBBAND_WIDTH))
}

fn dct24() -> &'static Dct {
    static D: OnceLock<Dct> = OnceLock::new();
    D.get_or_init(|| Dct::new(N_FILTERS))
}

/// `ln(max(sum_bins w_k(bin) |X(bin)|^2, 1e-10))` for each of the 24 filters.
pub fn log_filterbank_energies(spectrum: &[f64], fb: &MelFilterbank) -> [f64; N_FILTERS] {
    let power: Vec<f64> = spectrum.iter().map(|m| m * m).collect();
    let mut out = [0.0; N_FILTERS];
    for (k, e) in out.iter_mut().enumerate() {
        *e = fb.apply(k, &power).max(LOG_FLOOR).ln();
    }
    out
}

/// Orthonormal DCT-II of the four energies of one sub-band, c0..c3.
pub fn subband_mfcc(energies: &[f64; N_FILTERS], spec: SubBandSpec) -> [f64; SUBBAND_DIM] {
    let band = &energies[spec.filter_lo() - 1..spec.filter_hi()];
    let dct = dct4();
    let mut out = [0.0; SUBBAND_DIM];
    for (j, c) in out.iter_mut().enumerate() {
        *c = dct.coefficient(band, j);
    }
    out
}

/// Orthonormal DCT-II of all 24 energies, coefficients c1..c19.
pub fn fullband_mfcc(energies: &[f64; N_FILTERS]) -> [f64; FULLBAND_DIM] {
    let dct = dct24();
    let mut out = [0.0; FULLBAND_DIM];
    for (j, c) in out.iter_mut().enumerate() {
        *c = dct.coefficient(energies, j + 1);
    }
    out
}

/// Per-utterance, per-dimension standardization (population variance).
/// Columns with variance below 1e-12 become all zero.
pub fn cmvn(features: &FeatureMatrix) -> Result<FeatureMatrix> {
    if features.n_frames < 2 {
        return Err(FeatureError::TooFewFrames {
            frames: features.n_frames,
        });
    }
    let moments = features.column_moments();
    let d = features.dim();
    let mut values = features.values.clone();
    for row in values.chunks_exact_mut(d) {
        for (v, &(mean, var)) in row.iter_mut().zip(&moments) {
            *v = if var < DEGENERATE_VARIANCE {
                0.0
            } else {
                (*v - mean) / var.sqrt()
            };
        }
    }
    Ok(FeatureMatrix {
        band_mode: features.band_mode,
        n_frames: features.n_frames,
        values,
        normalized: true,
    })
}

/// Per-frame log Mel energies of the speech portion of a clip.
///
/// Computing these once lets every band mode be derived without repeating
/// SAD and FFT work.
#[derive(Debug, Clone, PartialEq)]
pub struct LogEnergies {
    frames: Vec<[f64; N_FILTERS]>,
}

impl LogEnergies {
    pub fn frames(&self) -> &[[f64; N_FILTERS]] {
        &self.frames
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }
}

/// SAD, framing, spectra and log filterbank energies for a clip.
pub fn log_energies(clip: &AudioClip) -> Result<LogEnergies> {
    let speech = detect_speech(clip);
    let frames = frame_and_window(&speech)?;
    let fb = filterbank();
    let mut analyzer = SpectrumAnalyzer::new();
    let mut spectrum = vec![0.0; N_BINS];
    let frames = frames
        .iter()
        .map(|f| {
            analyzer.magnitudes_into(f, &mut spectrum);
            log_filterbank_energies(&spectrum, fb)
        })
        .collect();
    Ok(LogEnergies { frames })
}

/// Cepstra for one band mode, then CMVN.
pub fn features_from_energies(
    energies: &LogEnergies,
    band_mode: BandMode,
) -> Result<FeatureMatrix> {
    let mut values = Vec::with_capacity(energies.n_frames() * band_mode.dim());
    for e in &energies.frames {
        match band_mode {
            BandMode::FullBand => values.extend_from_slice(&fullband_mfcc(e)),
            BandMode::SubBand(spec) => values.extend_from_slice(&subband_mfcc(e, spec)),
        }
    }
    let raw = FeatureMatrix::new(band_mode, values, false)?;
    cmvn(&raw)
}

/// Full front-end for one clip.
pub fn extract(clip: &AudioClip, band_mode: BandMode) -> Result<FeatureMatrix> {
    features_from_energies(&log_energies(clip)?, band_mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn zero_spectrum_hits_floor() {
        let e = log_filterbank_energies(&[0.0; N_BINS], filterbank());
        assert!(e.iter().all(|&v| v == LOG_FLOOR.ln()));
    }

    #[test]
    fn energy_is_local_to_filter_support() {
        let fb = filterbank();
        let f5 = fb.filter(5);
        let mut spec = vec![0.0; N_BINS];
        for (b, s) in spec.iter_mut().enumerate() {
            let hz = b as f64 * 31.25;
            if hz > f5.lower_hz && hz < f5.upper_hz {
                *s = 1.0;
            }
        }
        let e = log_filterbank_energies(&spec, fb);
        for k in 1..=N_FILTERS {
            let fk = fb.filter(k);
            let disjoint = fk.upper_hz <= f5.lower_hz || fk.lower_hz >= f5.upper_hz;
            if disjoint {
                assert_eq!(e[k - 1], LOG_FLOOR.ln(), "filter {k}");
                assert!(e[4] > e[k - 1]);
            }
        }
    }

    #[test]
    fn white_spectrum_grows_with_width() {
        let fb = filterbank();
        // oracle: sum of sampled weights per filter
        let widths: Vec<f64> = (0..N_FILTERS)
            .map(|k| (0..N_BINS).map(|b| fb.weight(k, b)).sum())
            .collect();
        let e = log_filterbank_energies(&[1.0; N_BINS], fb);
        for k in 0..N_FILTERS {
            assert!((e[k] - widths[k].ln()).abs() < 1e-12);
        }
        assert!(e[23] > e[0]);
        let mut order: Vec<usize> = (0..N_FILTERS).collect();
        order.sort_by(|&a, &b| widths[a].total_cmp(&widths[b]));
        for w in order.windows(2) {
            assert!(e[w[0]] <= e[w[1]]);
        }
    }

    #[test]
    fn subband_dct_examples() {
        let spec = SubBandSpec::new(3).unwrap();
        let mut e = [0.0; N_FILTERS];
        e[2..6].copy_from_slice(&[1.5; 4]);
        let c = subband_mfcc(&e, spec);
        assert!((c[0] - 3.0).abs() < 1e-12);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-12));

        e[2..6].copy_from_slice(&[1.0, -1.0, 1.0, -1.0]);
        assert!(subband_mfcc(&e, spec)[0].abs() < 1e-12);

        e[2..6].copy_from_slice(&[0.3, -2.0, 4.5, 1.25]);
        let back = dct4().inverse(&subband_mfcc(&e, spec));
        for (a, b) in back.iter().zip(&e[2..6]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fullband_dct_examples() {
        assert!(fullband_mfcc(&[-4.0; N_FILTERS])
            .iter()
            .all(|v| v.abs() < 1e-12));

        let mut e = [0.0; N_FILTERS];
        for (k, v) in e.iter_mut().enumerate() {
            *v = (PI * (k as f64 + 0.5) / 24.0).cos();
        }
        let c = fullband_mfcc(&e);
        assert!(c[0].abs() > 0.5);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn cmvn_examples() {
        let m = FeatureMatrix::new(
            BandMode::FullBand,
            {
                let mut v = vec![0.0; 2 * 19];
                v[0] = 1.0;
                v[19] = 3.0;
                v
            },
            false,
        )
        .unwrap();
        let n = cmvn(&m).unwrap();
        assert_eq!(n.row(0)[0], -1.0);
        assert_eq!(n.row(1)[0], 1.0);
        assert!(n.is_normalized());

        let sub = BandMode::subband(1).unwrap();
        let m = FeatureMatrix::new(
            sub,
            vec![5.0, 1.0, 2.0, 0.0, 5.0, 2.0, 3.0, 0.0, 5.0, 4.0, 1.0, 0.0],
            false,
        )
        .unwrap();
        let n = cmvn(&m).unwrap();
        assert!(n.rows().all(|r| r[0] == 0.0 && r[3] == 0.0));
        for &(mean, var) in &n.column_moments()[1..3] {
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-6);
        }

        let one = FeatureMatrix::new(sub, vec![1.0; 4], false).unwrap();
        assert!(matches!(
            cmvn(&one),
            Err(FeatureError::TooFewFrames { frames: 1 })
        ));
    }

    #[test]
    fn band_mode_parsing() {
        assert_eq!("fullband".parse::<BandMode>().unwrap(), BandMode::FullBand);
        assert_eq!(
            "subband:15".parse::<BandMode>().unwrap(),
            BandMode::subband(15).unwrap()
        );
        assert!("subband:22".parse::<BandMode>().is_err());
        assert!("mid".parse::<BandMode>().is_err());
        for n in 0..=21 {
            let m = BandMode::from_code(n).unwrap();
            assert_eq!(m.code(), n);
            assert_eq!(m.to_string().parse::<BandMode>().unwrap(), m);
        }
    }

    #[test]
    fn silence_cannot_be_extracted() {
        let clip = AudioClip::new(vec![0.0; 32000], "u", "s").unwrap();
        assert!(matches!(
            extract(&clip, BandMode::FullBand),
            Err(FeatureError::TooShort { samples: 0 })
        ));
    }
}
