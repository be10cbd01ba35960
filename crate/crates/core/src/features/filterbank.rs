use super::{FFT_SIZE, N_BINS, N_FILTERS, N_SUBBANDS, SUBBAND_WIDTH};
use crate::SAMPLE_RATE_HZ;

/// Nominal centre frequencies of the 24 Mel-spaced band-pass filters, in Hz.
pub const CENTER_FREQUENCIES_HZ: [f64; N_FILTERS] = [
    156.0, 281.0, 406.0, 500.0, 625.0, 750.0, 875.0, 1000.0, 1125.0, 1281.0, 1437.0, 1625.0,
    1843.0, 2062.0, 2343.0, 2656.0, 3000.0, 3375.0, 3812.0, 4312.0, 4906.0, 5531.0, 6281.0, 7093.0,
];

/// One triangular filter. Its cut-offs are the centres of its neighbours.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MelFilter {
    pub lower_hz: f64,
    pub center_hz: f64,
    pub upper_hz: f64,
}

impl MelFilter {
    /// Continuous triangular response: 1 at the centre, 0 outside `(lower, upper)`.
    pub fn response(&self, freq_hz: f64) -> f64 {
        if freq_hz <= self.lower_hz || freq_hz >= self.upper_hz {
            0.0
        } else if freq_hz <= self.center_hz {
            (freq_hz - self.lower_hz) / (self.center_hz - self.lower_hz)
        } else {
            (self.upper_hz - freq_hz) / (self.upper_hz - self.center_hz)
        }
    }
}

/// The fixed 24-filter bank sampled at FFT bin centre frequencies.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    filters: Vec<MelFilter>,
    /// Per filter: first bin with non-zero weight and the weights from there on.
    weights: Vec<(usize, Vec<f64>)>,
    fft_size: usize,
    sample_rate_hz: u32,
}

pub fn build_filterbank() -> MelFilterbank {
    let nyquist = SAMPLE_RATE_HZ as f64 / 2.0;
    let filters: Vec<MelFilter> = (0..N_FILTERS)
        .map(|i| MelFilter {
            lower_hz: if i == 0 {
                0.0
            } else {
                CENTER_FREQUENCIES_HZ[i - 1]
            },
            center_hz: CENTER_FREQUENCIES_HZ[i],
            upper_hz: if i + 1 == N_FILTERS {
                nyquist
            } else {
                CENTER_FREQUENCIES_HZ[i + 1]
            },
        })
        .collect();

    let bin_hz = SAMPLE_RATE_HZ as f64 / FFT_SIZE as f64;
    let weights = filters
        .iter()
        .map(|f| {
            let w: Vec<f64> = (0..N_BINS).map(|b| f.response(b as f64 * bin_hz)).collect();
            let first = w.iter().position(|&v| v > 0.0).unwrap_or(0);
            let last = w.iter().rposition(|&v| v > 0.0).unwrap_or(0);
            (first, w[first..=last].to_vec())
        })
        .collect();

    MelFilterbank {
        filters,
        weights,
        fft_size: FFT_SIZE,
        sample_rate_hz: SAMPLE_RATE_HZ,
    }
}

impl MelFilterbank {
    pub fn filters(&self) -> &[MelFilter] {
        &self.filters
    }

    /// 1-based filter lookup, matching the conventional numbering.
    pub fn filter(&self, number: usize) -> &MelFilter {
        &self.filters[number - 1]
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    /// Weight of filter `k` (0-based) at FFT bin `bin`.
    pub fn weight(&self, k: usize, bin: usize) -> f64 {
        let (first, w) = &self.weights[k];
        if bin < *first {
            0.0
        } else {
            w.get(bin - first).copied().unwrap_or(0.0)
        }
    }

    /// `sum_bins weight * power[bin]` for filter `k`.
    pub(crate) fn apply(&self, k: usize, power: &[f64]) -> f64 {
        let (first, w) = &self.weights[k];
        w.iter().zip(&power[*first..]).map(|(a, b)| a * b).sum()
    }
}

/// A sub-band: the four adjacent filters `index .. index + 3` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubBandSpec {
    index: u8,
}

impl SubBandSpec {
    pub fn new(index: usize) -> Option<Self> {
        (1..=N_SUBBANDS)
            .contains(&index)
            .then_some(Self { index: index as u8 })
    }

    pub fn all() -> impl Iterator<Item = SubBandSpec> {
        (1..=N_SUBBANDS).map(|n| SubBandSpec { index: n as u8 })
    }

    pub fn index(self) -> usize {
        self.index as usize
    }

    pub fn filter_lo(self) -> usize {
        self.index()
    }

    pub fn filter_hi(self) -> usize {
        self.index() + SUBBAND_WIDTH - 1
    }

    /// `[lower edge of filter_lo, upper edge of filter_hi]` in Hz.
    pub fn span_hz(self, fb: &MelFilterbank) -> (f64, f64) {
        (
            fb.filter(self.filter_lo()).lower_hz,
            fb.filter(self.filter_hi()).upper_hz,
        )
    }
}

/// Joint frequency span of sub-bands `first..=last`.
pub fn region_span_hz(fb: &MelFilterbank, first: usize, last: usize) -> Option<(f64, f64)> {
    let lo = SubBandSpec::new(first)?.span_hz(fb).0;
    let hi = SubBandSpec::new(last)?.span_hz(fb).1;
    Some((lo, hi))
}
