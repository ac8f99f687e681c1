//! The 14 Haralick texture statistics and their direction-aggregated 28-vector.
//!
//! Gray levels are 1-based in the textbook formulas (`i, j in 1..=N_g`, sums
//! `i + j in 2..=2 N_g`). Arrays here are 0-based; every statistic that depends
//! on absolute level values (means, sum average, sum variance) adds the offset
//! back, so the results match the 1-based definitions exactly.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glcm::{glcm_all_directions, QuantizedImage};

pub const NUM_FEATURES: usize = 14;

pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "angular_second_moment",
    "contrast",
    "correlation",
    "sum_of_squares_variance",
    "inverse_difference_moment",
    "sum_average",
    "sum_variance",
    "sum_entropy",
    "entropy",
    "difference_variance",
    "difference_entropy",
    "info_measure_correlation_1",
    "info_measure_correlation_2",
    "maximal_correlation_coefficient",
];

const NORMALIZATION_TOL: f64 = 1e-9;

#[inline]
fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// Marginal distributions and entropies of a joint gray-level probability matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GlcmMarginals {
    pub levels: usize,
    /// Row sums.
    pub p_x: Vec<f64>,
    /// Column sums.
    pub p_y: Vec<f64>,
    /// `p_sum[s]` is the mass on `i + j = s + 2` (1-based levels), `s in 0..2 N_g - 1`.
    pub p_sum: Vec<f64>,
    /// `p_diff[n]` is the mass on `|i - j| = n`.
    pub p_diff: Vec<f64>,
    pub mu_x: f64,
    pub mu_y: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub hx: f64,
    pub hy: f64,
    pub hxy: f64,
    pub hxy1: f64,
    pub hxy2: f64,
}

fn levels_of(p: &[f64]) -> Result<usize> {
    let n = (p.len() as f64).sqrt().round() as usize;
    if n == 0 || n * n != p.len() {
        return Err(Error::InvalidInput(format!(
            "probability matrix must be square, got {} entries",
            p.len()
        )));
    }
    Ok(n)
}

pub fn compute_marginals(p: &[f64]) -> Result<GlcmMarginals> {
    let n = levels_of(p)?;
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidInput(
            "probabilities must be finite and nonnegative".into(),
        ));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::InvalidInput(format!(
            "probability matrix sums to {total}, not 1"
        )));
    }

    let mut p_x = vec![0.0; n];
    let mut p_y = vec![0.0; n];
    let mut p_sum = vec![0.0; 2 * n - 1];
    let mut p_diff = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let c = p[i * n + j];
            p_x[i] += c;
            p_y[j] += c;
            p_sum[i + j] += c;
            p_diff[i.abs_diff(j)] += c;
        }
    }

    let level = |i: usize| (i + 1) as f64;
    let mu_x: f64 = p_x.iter().enumerate().map(|(i, &v)| level(i) * v).sum();
    let mu_y: f64 = p_y.iter().enumerate().map(|(j, &v)| level(j) * v).sum();
    let var_x: f64 = p_x
        .iter()
        .enumerate()
        .map(|(i, &v)| (level(i) - mu_x).powi(2) * v)
        .sum();
    let var_y: f64 = p_y
        .iter()
        .enumerate()
        .map(|(j, &v)| (level(j) - mu_y).powi(2) * v)
        .sum();

    let hx = -p_x.iter().copied().map(plogp).sum::<f64>();
    let hy = -p_y.iter().copied().map(plogp).sum::<f64>();
    let hxy = -p.iter().copied().map(plogp).sum::<f64>();

    let mut hxy1 = 0.0;
    let mut hxy2 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let prod = p_x[i] * p_y[j];
            if prod > 0.0 {
                let log_prod = prod.ln();
                hxy1 -= p[i * n + j] * log_prod;
                hxy2 -= prod * log_prod;
            }
        }
    }

    Ok(GlcmMarginals {
        levels: n,
        p_x,
        p_y,
        p_sum,
        p_diff,
        mu_x,
        mu_y,
        sigma_x: var_x.sqrt(),
        sigma_y: var_y.sqrt(),
        hx,
        hy,
        hxy,
        hxy1,
        hxy2,
    })
}

/// Set when a statistic was undefined for the input and replaced by 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureFlags {
    /// `sigma_x * sigma_y == 0`; correlation reported as 0.
    pub degenerate_correlation: bool,
    /// `max(HX, HY) == 0`; first information measure reported as 0.
    pub degenerate_info_measure: bool,
}

/// The 14 statistics, `values[k]` holding feature `f(k+1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HaralickFeatures {
    pub values: [f64; NUM_FEATURES],
    pub flags: FeatureFlags,
}

impl HaralickFeatures {
    /// Feature by its 1-based number.
    pub fn f(&self, number: usize) -> f64 {
        self.values[number - 1]
    }
}

/// Eigenvalues of `Q(i,j) = sum_k p(i,k) p(j,k) / (p_x(i) p_y(k))`, descending.
///
/// Rows with `p_x(i) = 0` are dropped. `Q` is similar to the symmetric matrix
/// `D^-1/2 M D^-1/2` (with `D = diag(p_x)`), so its spectrum is real.
pub fn correlation_spectrum(p: &[f64], m: &GlcmMarginals) -> Vec<f64> {
    let n = m.levels;
    let rows: Vec<usize> = (0..n).filter(|&i| m.p_x[i] > 0.0).collect();
    let cols: Vec<usize> = (0..n).filter(|&k| m.p_y[k] > 0.0).collect();
    let dim = rows.len();
    if dim == 0 {
        return Vec::new();
    }
    let sym = DMatrix::from_fn(dim, dim, |a, b| {
        let (i, j) = (rows[a], rows[b]);
        let s: f64 = cols.iter().map(|&k| p[i * n + k] * p[j * n + k] / m.p_y[k]).sum();
        s / (m.p_x[i] * m.p_x[j]).sqrt()
    });
    let mut eig: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    eig
}

pub fn compute_features(p: &[f64]) -> Result<HaralickFeatures> {
    let m = compute_marginals(p)?;
    let n = m.levels;
    let mut flags = FeatureFlags::default();

    let mut asm = 0.0;
    let mut idm = 0.0;
    let mut covariance = 0.0;
    for i in 0..n {
        for j in 0..n {
            let c = p[i * n + j];
            asm += c * c;
            let d = i.abs_diff(j) as f64;
            idm += c / (1.0 + d * d);
            covariance += ((i + 1) as f64 - m.mu_x) * ((j + 1) as f64 - m.mu_y) * c;
        }
    }

    let contrast: f64 = m.p_diff.iter().enumerate().map(|(d, &v)| (d * d) as f64 * v).sum();

    let sigma_prod = m.sigma_x * m.sigma_y;
    let correlation = if sigma_prod > 0.0 {
        covariance / sigma_prod
    } else {
        flags.degenerate_correlation = true;
        0.0
    };

    let sum_of_squares = m.sigma_x * m.sigma_x;

    let sum_level = |s: usize| (s + 2) as f64;
    let sum_average: f64 = m.p_sum.iter().enumerate().map(|(s, &v)| sum_level(s) * v).sum();
    let sum_entropy = -m.p_sum.iter().copied().map(plogp).sum::<f64>();
    let sum_variance: f64 = m
        .p_sum
        .iter()
        .enumerate()
        .map(|(s, &v)| (sum_level(s) - sum_entropy).powi(2) * v)
        .sum();

    let entropy = m.hxy;

    let diff_mean: f64 = m.p_diff.iter().enumerate().map(|(d, &v)| d as f64 * v).sum();
    let diff_variance: f64 = m
        .p_diff
        .iter()
        .enumerate()
        .map(|(d, &v)| (d as f64 - diff_mean).powi(2) * v)
        .sum();
    let diff_entropy = -m.p_diff.iter().copied().map(plogp).sum::<f64>();

    let hmax = m.hx.max(m.hy);
    let imc1 = if hmax > 0.0 {
        (m.hxy - m.hxy1) / hmax
    } else {
        flags.degenerate_info_measure = true;
        0.0
    };
    let imc2 = (1.0 - (-2.0 * (m.hxy2 - m.hxy)).exp()).max(0.0).sqrt();

    let spectrum = correlation_spectrum(p, &m);
    let max_corr = spectrum.get(1).map_or(0.0, |&l| l.clamp(0.0, 1.0).sqrt());

    Ok(HaralickFeatures {
        values: [
            asm,
            contrast,
            correlation,
            sum_of_squares,
            idm,
            sum_average,
            sum_variance,
            sum_entropy,
            entropy,
            diff_variance,
            diff_entropy,
            imc1,
            imc2,
            max_corr,
        ],
        flags,
    })
}

/// Per-feature mean and range (max - min) over the four directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HaralickVector28 {
    pub mean: [f64; NUM_FEATURES],
    pub range: [f64; NUM_FEATURES],
}

impl HaralickVector28 {
    /// Means first, then ranges.
    pub fn to_vec(&self) -> Vec<f64> {
        self.mean.iter().chain(self.range.iter()).copied().collect()
    }

    pub fn column_names() -> Vec<String> {
        (1..=NUM_FEATURES)
            .map(|k| format!("f{k}_mean"))
            .chain((1..=NUM_FEATURES).map(|k| format!("f{k}_range")))
            .collect()
    }
}

pub fn aggregate_directions(features: &[HaralickFeatures; 4]) -> HaralickVector28 {
    let mut mean = [0.0; NUM_FEATURES];
    let mut range = [0.0; NUM_FEATURES];
    for k in 0..NUM_FEATURES {
        let vals = features.map(|f| f.values[k]);
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // sorted summation keeps the mean independent of input order
        let mut sorted = vals;
        sorted.sort_by(f64::total_cmp);
        mean[k] = sorted.iter().sum::<f64>() / 4.0;
        range[k] = hi - lo;
    }
    HaralickVector28 { mean, range }
}

/// GLCMs in all four directions, their features, and the 28-vector.
pub fn haralick_vector(img: &QuantizedImage, distance: usize) -> Result<HaralickVector28> {
    let glcms = glcm_all_directions(img, distance)?;
    let [a, b, c, d] = &glcms;
    let features = [
        compute_features(a.probs())?,
        compute_features(b.probs())?,
        compute_features(c.probs())?,
        compute_features(d.probs())?,
    ];
    Ok(aggregate_directions(&features))
}
