//! Diagonal-covariance Gaussian mixtures: binary-splitting EM for the UBM,
//! mean-only MAP adaptation and average log-likelihood scoring.
//!
//! All frame loops run over fixed-size chunks whose partial sums are reduced
//! in chunk order, so results are bit-identical for any thread count.

mod io;

use std::f64::consts::PI;

use rayon::prelude::*;
use thiserror::Error;

use crate::features::FeatureMatrix;

pub use io::{read_gmm, write_gmm, GMM_MAGIC, GMM_VERSION};

/// Frames per parallel work unit.
const CHUNK: usize = 2048;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Error)]
pub enum GmmError {
    #[error("too few frames: {frames} frames for {k} components (need at least {required})")]
    TooFewFrames {
        frames: usize,
        k: usize,
        required: usize,
    },
    #[error("component count {0} is not a power of two")]
    InvalidComponentCount(usize),
    #[error("non-finite feature value")]
    NonFiniteInput,
    #[error("dimension mismatch: model has {model}, features have {features}")]
    DimMismatch { model: usize, features: usize },
    #[error("no frames to score")]
    NoFrames,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GmmError>;

/// K-component diagonal GMM. Means and variances are stored row-major, one
/// row of `dim` values per component.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGmm {
    k: usize,
    dim: usize,
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
}

impl DiagGmm {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(GmmError::InvalidModel("no components".into()));
        }
        if !means.len().is_multiple_of(k) || means.is_empty() || variances.len() != means.len() {
            return Err(GmmError::InvalidModel(format!(
                "{} weights, {} means, {} variances",
                k,
                means.len(),
                variances.len()
            )));
        }
        let all = weights.iter().chain(&means).chain(&variances);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(GmmError::InvalidModel("non-finite parameter".into()));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(GmmError::InvalidModel("negative weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(GmmError::InvalidModel(format!("weights sum to {total}")));
        }
        if variances.iter().any(|&v| v <= 0.0) {
            return Err(GmmError::InvalidModel("non-positive variance".into()));
        }
        Ok(Self {
            k,
            dim: means.len() / k,
            weights,
            means,
            variances,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn mean(&self, c: usize) -> &[f64] {
        &self.means[c * self.dim..(c + 1) * self.dim]
    }

    pub fn variance(&self, c: usize) -> &[f64] {
        &self.variances[c * self.dim..(c + 1) * self.dim]
    }

    fn check_dim(&self, features: &FeatureMatrix) -> Result<()> {
        if features.dim() != self.dim {
            return Err(GmmError::DimMismatch {
                model: self.dim,
                features: features.dim(),
            });
        }
        Ok(())
    }
}

/// Per-component constants for fast log-density evaluation.
struct Evaluator<'a> {
    gmm: &'a DiagGmm,
    /// ln w_k - 0.5 * sum_d ln(2 pi var_kd); -inf for empty components.
    log_norm: Vec<f64>,
    inv_var: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    fn new(gmm: &'a DiagGmm) -> Self {
        let log_norm = (0..gmm.k)
            .map(|c| {
                let w = gmm.weights[c];
                if w > 0.0 {
                    w.ln() - 0.5 * gmm.variance(c).iter().map(|v| LN_2PI + v.ln()).sum::<f64>()
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        let inv_var = gmm.variances.iter().map(|v| 1.0 / v).collect();
        Self {
            gmm,
            log_norm,
            inv_var,
        }
    }

    /// Fills `log_joint[c] = ln(w_c N(x; mu_c, var_c))` and returns the frame
    /// log-likelihood.
    fn frame(&self, x: &[f64], log_joint: &mut [f64]) -> f64 {
        let d = self.gmm.dim;
        let mut max = f64::NEG_INFINITY;
        for (c, lj) in log_joint.iter_mut().enumerate() {
            let mu = &self.gmm.means[c * d..(c + 1) * d];
            let iv = &self.inv_var[c * d..(c + 1) * d];
            let mut q = 0.0;
            for i in 0..d {
                let z = x[i] - mu[i];
                q += z * z * iv[i];
            }
            *lj = self.log_norm[c] - 0.5 * q;
            max = max.max(*lj);
        }
        let s: f64 = log_joint.iter().map(|&l| (l - max).exp()).sum();
        max + s.ln()
    }
}

/// Soft counts and moments accumulated over frames.
#[derive(Debug, Clone, PartialEq)]
struct Moments {
    ll: f64,
    n: Vec<f64>,
    first: Vec<f64>,
    second: Option<Vec<f64>>,
}

impl Moments {
    fn zeros(k: usize, dim: usize, with_second: bool) -> Self {
        Self {
            ll: 0.0,
            n: vec![0.0; k],
            first: vec![0.0; k * dim],
            second: with_second.then(|| vec![0.0; k * dim]),
        }
    }

    fn add(&mut self, other: &Moments) {
        self.ll += other.ll;
        for (a, b) in self.n.iter_mut().zip(&other.n) {
            *a += b;
        }
        for (a, b) in self.first.iter_mut().zip(&other.first) {
            *a += b;
        }
        if let (Some(a), Some(b)) = (self.second.as_mut(), other.second.as_ref()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

fn e_step(gmm: &DiagGmm, data: &[f64], with_second: bool) -> Moments {
    let (k, d) = (gmm.k, gmm.dim);
    let eval = Evaluator::new(gmm);
    let partials: Vec<Moments> = data
        .par_chunks(CHUNK * d)
        .map(|chunk| {
            let mut m = Moments::zeros(k, d, with_second);
            let mut lj = vec![0.0; k];
            for x in chunk.chunks_exact(d) {
                let ll = eval.frame(x, &mut lj);
                m.ll += ll;
                for c in 0..k {
                    let g = (lj[c] - ll).exp();
                    if g == 0.0 {
                        continue;
                    }
                    m.n[c] += g;
                    let f = &mut m.first[c * d..(c + 1) * d];
                    for i in 0..d {
                        f[i] += g * x[i];
                    }
                    if let Some(s) = m.second.as_mut() {
                        let s = &mut s[c * d..(c + 1) * d];
                        for i in 0..d {
                            s[i] += g * x[i] * x[i];
                        }
                    }
                }
            }
            m
        })
        .collect();
    let mut total = Moments::zeros(k, d, with_second);
    for p in &partials {
        total.add(p);
    }
    total
}

/// EM training schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    /// EM iterations run after each binary split.
    pub iterations_per_split: usize,
    /// Split offset in units of the component standard deviation.
    pub split_offset: f64,
    /// Variance floor as a fraction of the global per-dimension variance.
    pub variance_floor_ratio: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            iterations_per_split: 10,
            split_offset: 0.2,
            variance_floor_ratio: 1e-3,
        }
    }
}

/// Log-likelihood history of one splitting stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageTrace {
    pub k: usize,
    /// Total data log-likelihood before each EM iteration, plus the final value.
    pub log_likelihoods: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingTrace {
    pub stages: Vec<StageTrace>,
}

impl TrainingTrace {
    /// Largest drop of total log-likelihood between consecutive EM iterations
    /// of any stage (0 when monotone).
    pub fn max_decrease(&self) -> f64 {
        self.stages
            .iter()
            .flat_map(|s| s.log_likelihoods.windows(2).map(|w| w[0] - w[1]))
            .fold(0.0, f64::max)
    }
}

fn m_step(gmm: &mut DiagGmm, stats: &Moments, total_frames: f64, floor: &[f64]) {
    let d = gmm.dim;
    let second = stats.second.as_ref().expect("EM needs second moments");
    for c in 0..gmm.k {
        let n = stats.n[c];
        gmm.weights[c] = n / total_frames;
        if n <= 0.0 {
            continue;
        }
        for i in 0..d {
            let mean = stats.first[c * d + i] / n;
            let var = second[c * d + i] / n - mean * mean;
            gmm.means[c * d + i] = mean;
            gmm.variances[c * d + i] = var.max(floor[i]);
        }
    }
}

fn split(gmm: &DiagGmm, offset: f64) -> DiagGmm {
    let d = gmm.dim;
    let mut weights = Vec::with_capacity(2 * gmm.k);
    let mut means = Vec::with_capacity(2 * gmm.k * d);
    let mut variances = Vec::with_capacity(2 * gmm.k * d);
    for c in 0..gmm.k {
        for sign in [1.0, -1.0] {
            weights.push(gmm.weights[c] / 2.0);
            means.extend(
                gmm.mean(c)
                    .iter()
                    .zip(gmm.variance(c))
                    .map(|(m, v)| m + sign * offset * v.sqrt()),
            );
            variances.extend_from_slice(gmm.variance(c));
        }
    }
    DiagGmm {
        k: 2 * gmm.k,
        dim: d,
        weights,
        means,
        variances,
    }
}

/// Trains a `k`-component UBM by binary splitting from the global Gaussian.
pub fn train_ubm(features: &FeatureMatrix, k: usize, config: &EmConfig) -> Result<DiagGmm> {
    train_ubm_traced(features, k, config).map(|(g, _)| g)
}

/// [`train_ubm`] that also returns the per-iteration log-likelihoods.
pub fn train_ubm_traced(
    features: &FeatureMatrix,
    k: usize,
    config: &EmConfig,
) -> Result<(DiagGmm, TrainingTrace)> {
    if k == 0 || !k.is_power_of_two() {
        return Err(GmmError::InvalidComponentCount(k));
    }
    let frames = features.n_frames();
    if frames < 10 * k || frames == 0 {
        return Err(GmmError::TooFewFrames {
            frames,
            k,
            required: 10 * k.max(1),
        });
    }
    let data = features.values();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(GmmError::NonFiniteInput);
    }
    let d = features.dim();
    let n = frames as f64;

    let moments = features.column_moments();
    let global_var: Vec<f64> = moments.iter().map(|&(_, v)| v).collect();
    let floor: Vec<f64> = global_var
        .iter()
        .map(|v| (v * config.variance_floor_ratio).max(f64::MIN_POSITIVE))
        .collect();
    let mut gmm = DiagGmm {
        k: 1,
        dim: d,
        weights: vec![1.0],
        means: moments.iter().map(|&(m, _)| m).collect(),
        variances: global_var
            .iter()
            .zip(&floor)
            .map(|(v, f)| v.max(*f))
            .collect(),
    };

    let mut trace = TrainingTrace::default();
    trace.stages.push(StageTrace {
        k: 1,
        log_likelihoods: vec![e_step(&gmm, data, false).ll],
    });

    while gmm.k < k {
        gmm = split(&gmm, config.split_offset);
        let mut lls = Vec::with_capacity(config.iterations_per_split + 1);
        for _ in 0..config.iterations_per_split {
            let stats = e_step(&gmm, data, true);
            lls.push(stats.ll);
            m_step(&mut gmm, &stats, n, &floor);
        }
        lls.push(e_step(&gmm, data, false).ll);
        log::debug!(
            "UBM stage k={} ll/frame={:.6}",
            gmm.k,
            lls.last().unwrap() / n
        );
        trace.stages.push(StageTrace {
            k: gmm.k,
            log_likelihoods: lls,
        });
    }
    renormalize(&mut gmm.weights);
    Ok((gmm, trace))
}

fn renormalize(weights: &mut [f64]) {
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
}

/// Zeroth and first order Baum-Welch statistics of frames against a UBM.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    dim: usize,
    /// Soft count per component.
    pub n: Vec<f64>,
    /// `sum_t gamma_t(k) x_t`, row-major k x dim.
    pub first_moment: Vec<f64>,
}

impl SufficientStats {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn total_count(&self) -> f64 {
        self.n.iter().sum()
    }

    pub fn first(&self, c: usize) -> &[f64] {
        &self.first_moment[c * self.dim..(c + 1) * self.dim]
    }
}

pub fn accumulate_stats(ubm: &DiagGmm, features: &FeatureMatrix) -> Result<SufficientStats> {
    ubm.check_dim(features)?;
    let m = e_step(ubm, features.values(), false);
    Ok(SufficientStats {
        dim: ubm.dim,
        n: m.n,
        first_moment: m.first,
    })
}

/// Mean-only MAP adaptation with relevance factor `relevance`.
///
/// `alpha_k = n_k / (n_k + r)`; components with no data keep the UBM mean.
/// Weights and variances are copied from the UBM.
pub fn map_adapt(ubm: &DiagGmm, stats: &SufficientStats, relevance: f64) -> DiagGmm {
    assert!(relevance >= 0.0, "relevance factor must be non-negative");
    assert_eq!(stats.dim, ubm.dim, "statistics do not match the UBM");
    let d = ubm.dim;
    let mut means = ubm.means.clone();
    for c in 0..ubm.k {
        let n = stats.n[c];
        if n <= 0.0 {
            continue;
        }
        let alpha = n / (n + relevance);
        for i in 0..d {
            let data_mean = stats.first_moment[c * d + i] / n;
            means[c * d + i] = alpha * data_mean + (1.0 - alpha) * ubm.means[c * d + i];
        }
    }
    DiagGmm {
        k: ubm.k,
        dim: d,
        weights: ubm.weights.clone(),
        means,
        variances: ubm.variances.clone(),
    }
}

/// Average per-frame log-likelihood over all components.
pub fn log_likelihood(gmm: &DiagGmm, features: &FeatureMatrix) -> Result<f64> {
    gmm.check_dim(features)?;
    if features.n_frames() == 0 {
        return Err(GmmError::NoFrames);
    }
    let eval = Evaluator::new(gmm);
    let d = gmm.dim;
    let partials: Vec<f64> = features
        .values()
        .par_chunks(CHUNK * d)
        .map(|chunk| {
            let mut lj = vec![0.0; gmm.k];
            chunk.chunks_exact(d).map(|x| eval.frame(x, &mut lj)).sum()
        })
        .collect();
    Ok(partials.iter().sum::<f64>() / features.n_frames() as f64)
}

/// Density of a single diagonal Gaussian, used by tests as a hand oracle.
#[doc(hidden)]
pub fn gaussian_density(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(var)
        .map(|((x, m), v)| (-(x - m).powi(2) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt())
        .product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::BandMode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn sub() -> BandMode {
        BandMode::subband(1).unwrap()
    }

    /// Places 1-D values in the first column of a 4-D sub-band matrix.
    fn column(values: &[f64]) -> FeatureMatrix {
        let mut v = Vec::new();
        for &x in values {
            v.extend_from_slice(&[x, 0.0, 0.0, 0.0]);
        }
        FeatureMatrix::new(sub(), v, false).unwrap()
    }

    fn one_d(weights: &[f64], means: &[f64], vars: &[f64]) -> DiagGmm {
        let spread = |v: &[f64], fill: f64| -> Vec<f64> {
            v.iter().flat_map(|&x| [x, fill, fill, fill]).collect()
        };
        DiagGmm::new(weights.to_vec(), spread(means, 0.0), spread(vars, 1.0)).unwrap()
    }

    #[test]
    fn single_gaussian_closed_form() {
        let mut vals = vec![-1.0, 1.0];
        vals.extend(std::iter::repeat_n([-1.0, 1.0], 4).flatten());
        let g = train_ubm(&column(&vals), 1, &EmConfig::default()).unwrap();
        assert_eq!(g.weights(), &[1.0]);
        assert!(g.mean(0)[0].abs() < 1e-12);
        assert!((g.variance(0)[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_clusters_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut vals: Vec<f64> = Vec::new();
        for i in 0..2000 {
            let c = if i % 2 == 0 { -10.0 } else { 10.0 };
            vals.push(c + noise.sample(&mut rng));
        }
        // closed-form per-cluster ML oracle
        let ml = |sign: f64| {
            let xs: Vec<f64> = vals
                .iter()
                .copied()
                .filter(|x| x.signum() == sign)
                .collect();
            xs.iter().sum::<f64>() / xs.len() as f64
        };
        // run EM to convergence so the fixed point can be compared exactly
        let config = EmConfig {
            iterations_per_split: 200,
            ..EmConfig::default()
        };
        let (g, trace) = train_ubm_traced(&column(&vals), 2, &config).unwrap();
        let mut means: Vec<f64> = (0..2).map(|c| g.mean(c)[0]).collect();
        means.sort_by(f64::total_cmp);
        assert!((means[0] - ml(-1.0)).abs() < 1e-6);
        assert!((means[1] - ml(1.0)).abs() < 1e-6);
        assert!((means[0] + 10.0).abs() < 0.2 && (means[1] - 10.0).abs() < 0.2);
        for w in g.weights() {
            assert!((w - 0.5).abs() < 0.05);
        }
        assert!(trace.max_decrease() <= 1e-8 * vals.len() as f64);
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = column(&[0.0, 1.0, 2.0]);
        assert!(matches!(
            train_ubm(&m, 3, &EmConfig::default()),
            Err(GmmError::InvalidComponentCount(3))
        ));
        assert!(matches!(
            train_ubm(&m, 2, &EmConfig::default()),
            Err(GmmError::TooFewFrames { .. })
        ));
    }

    #[test]
    fn stats_examples() {
        let ubm = one_d(&[0.5, 0.5], &[-20.0, 20.0], &[1.0, 1.0]);
        let empty = FeatureMatrix::empty(sub());
        let s = accumulate_stats(&ubm, &empty).unwrap();
        assert!(s.n.iter().all(|&v| v == 0.0));
        assert!(s.first_moment.iter().all(|&v| v == 0.0));

        let single = one_d(&[1.0], &[0.0], &[2.0]);
        let data = column(&[1.0, 2.0, 4.0]);
        let s = accumulate_stats(&single, &data).unwrap();
        assert_eq!(s.n, vec![3.0]);
        assert_eq!(s.first(0), &[7.0, 0.0, 0.0, 0.0]);

        // frame sitting on the first mean: hand-evaluated densities
        let x = [-20.0, 0.0, 0.0, 0.0];
        let p0 = 0.5 * gaussian_density(&x, &[-20.0, 0.0, 0.0, 0.0], &[1.0; 4]);
        let p1 = 0.5 * gaussian_density(&x, &[20.0, 0.0, 0.0, 0.0], &[1.0; 4]);
        let expected = p0 / (p0 + p1);
        let s = accumulate_stats(&ubm, &column(&[-20.0])).unwrap();
        assert!(s.n[0] > 1.0 - 1e-6);
        assert!((s.n[0] - expected).abs() < 1e-12);

        let wrong = FeatureMatrix::new(BandMode::FullBand, vec![0.0; 19], false).unwrap();
        assert!(matches!(
            accumulate_stats(&ubm, &wrong),
            Err(GmmError::DimMismatch { .. })
        ));
    }

    #[test]
    fn map_examples() {
        let ubm = one_d(&[1.0], &[0.0], &[1.0]);
        let zero = SufficientStats {
            dim: 4,
            n: vec![0.0],
            first_moment: vec![0.0; 4],
        };
        assert_eq!(map_adapt(&ubm, &zero, 16.0), ubm);

        let stats = accumulate_stats(&ubm, &column(&[2.0; 16])).unwrap();
        let adapted = map_adapt(&ubm, &stats, 16.0);
        assert!((adapted.mean(0)[0] - 1.0).abs() < 1e-12);
        assert_eq!(adapted.weights(), ubm.weights());
        assert_eq!(adapted.variances(), ubm.variances());

        let exact = map_adapt(&ubm, &stats, 0.0);
        assert_eq!(exact.mean(0)[0], stats.first(0)[0] / stats.n[0]);
    }

    #[test]
    fn likelihood_examples() {
        let g = one_d(&[1.0], &[0.0], &[1.0]);
        let ll = log_likelihood(&g, &column(&[0.0])).unwrap();
        // the three zero-padded dimensions have unit variance as well
        assert!((ll - 4.0 * -0.5 * (2.0 * PI).ln()).abs() < 1e-12);
        let per_dim = ll / 4.0;
        assert!((per_dim + 0.918939).abs() < 1e-6);

        let data = column(&[0.3, -1.2, 2.5]);
        let doubled = column(&[0.3, -1.2, 2.5, 0.3, -1.2, 2.5]);
        let a = log_likelihood(&g, &data).unwrap();
        let b = log_likelihood(&g, &doubled).unwrap();
        assert!((a - b).abs() < 1e-12);

        let pair = one_d(&[0.5, 0.5], &[0.0, 0.0], &[1.0, 1.0]);
        assert!((log_likelihood(&pair, &data).unwrap() - a).abs() < 1e-12);

        assert!(matches!(
            log_likelihood(&g, &FeatureMatrix::empty(sub())),
            Err(GmmError::NoFrames)
        ));
    }

    #[test]
    fn training_is_deterministic_and_floored() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let vals: Vec<f64> = (0..4000 * 4).map(|_| noise.sample(&mut rng)).collect();
        let m = FeatureMatrix::new(sub(), vals, false).unwrap();
        let a = train_ubm(&m, 8, &EmConfig::default()).unwrap();
        let b = train_ubm(&m, 8, &EmConfig::default()).unwrap();
        assert_eq!(a, b);
        let floor: Vec<f64> = m.column_moments().iter().map(|&(_, v)| v * 1e-3).collect();
        for c in 0..a.k() {
            for (v, f) in a.variance(c).iter().zip(&floor) {
                assert!(v >= f);
            }
        }
        assert!((a.weights().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
