//! Soft-margin kernel SVM trained by sequential minimal optimization.
//!
//! The dual is solved in the form
//!
//! ```text
//! min_a  1/2 a^T Q a - e^T a    s.t.  0 <= a_i <= C,  y^T a = 0
//! ```
//!
//! with `Q_ij = y_i y_j K(x_i, x_j)`. Each step picks the maximal violating pair
//! and solves the two-variable subproblem analytically.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_C: f64 = 1.0;
/// KKT tolerance every trained model is guaranteed to meet.
pub const DEFAULT_TOLERANCE: f64 = 1e-3;
/// Default SMO stopping gap. A pair gap of 1e-3 can still leave the dual
/// objective about 2e-4 short of optimal, so training stops well inside it.
pub const DEFAULT_STOPPING_GAP: f64 = 1e-5;
/// Curvature floor for non-PSD pairs.
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum KernelSpec {
    Linear,
    /// `exp(-||u - v||^2 / (2 sigma^2))`
    Rbf {
        sigma: f64,
    },
    /// `tanh(a <u, v> + b)`, the "MLP" kernel.
    Sigmoid {
        a: f64,
        b: f64,
    },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Rbf { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(Error::param("sigma", "RBF sigma must be positive"))
            }
            KernelSpec::Sigmoid { a, b } if !(a.is_finite() && b.is_finite()) => {
                Err(Error::param("mlp", "sigmoid parameters must be finite"))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        if u.len() != v.len() {
            return Err(Error::DimensionMismatch {
                expected: u.len(),
                found: v.len(),
            });
        }
        Ok(self.eval_unchecked(u, v))
    }

    #[inline]
    fn eval_unchecked(&self, u: &[f64], v: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => dot(u, v),
            KernelSpec::Rbf { sigma } => {
                let d2: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * sigma * sigma)).exp()
            }
            KernelSpec::Sigmoid { a, b } => (a * dot(u, v) + b).tanh(),
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Linear => write!(f, "linear"),
            KernelSpec::Rbf { sigma } => write!(f, "rbf(sigma={sigma})"),
            KernelSpec::Sigmoid { a, b } => write!(f, "mlp(a={a}, b={b})"),
        }
    }
}

#[inline]
fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn kernel_eval(spec: &KernelSpec, u: &[f64], v: &[f64]) -> Result<f64> {
    spec.eval(u, v)
}

/// Binary class label; serialized as `+1` / `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    /// `sign(v)` with 0 mapped to `Positive`.
    pub fn from_value(v: f64) -> Self {
        if v >= 0.0 {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    /// The tag used in manifests: `stroke` for positive, `nonstroke` for negative.
    pub fn tag(self) -> &'static str {
        match self {
            Label::Positive => "stroke",
            Label::Negative => "nonstroke",
        }
    }
}

impl From<Label> for i8 {
    fn from(l: Label) -> i8 {
        match l {
            Label::Positive => 1,
            Label::Negative => -1,
        }
    }
}

impl TryFrom<i8> for Label {
    type Error = String;

    fn try_from(v: i8) -> Result<Self, String> {
        match v {
            1 => Ok(Label::Positive),
            -1 => Ok(Label::Negative),
            other => Err(format!("label must be +1 or -1, got {other}")),
        }
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "stroke" | "+1" | "1" | "positive" | "pos" => Ok(Label::Positive),
            "nonstroke" | "non-stroke" | "-1" | "negative" | "neg" => Ok(Label::Negative),
            other => Err(Error::InvalidInput(format!("unrecognized label `{other}`"))),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Labeled vectors with both classes present and a common dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    samples: Vec<Vec<f64>>,
    labels: Vec<Label>,
}

impl TrainingSet {
    pub fn new(samples: Vec<Vec<f64>>, labels: Vec<Label>) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: samples.len(),
                found: labels.len(),
            });
        }
        let dim = samples.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(Error::DegenerateTrainingSet(
                "no samples or zero-dimensional features".into(),
            ));
        }
        for s in &samples {
            if s.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: s.len(),
                });
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("training sample".into()));
            }
        }
        let positives = labels.iter().filter(|&&l| l == Label::Positive).count();
        if positives == 0 || positives == labels.len() {
            return Err(Error::DegenerateTrainingSet("both classes must be present".into()));
        }
        Ok(Self { samples, labels })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples[0].len()
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoParams {
    /// Stop once the maximal KKT violation `m(a) - M(a)` falls below this.
    pub tol: f64,
    /// Iteration cap; `None` means `max(10^7, 100 n)`.
    pub max_iter: Option<usize>,
}

impl Default for SmoParams {
    fn default() -> Self {
        Self {
            tol: DEFAULT_STOPPING_GAP,
            max_iter: None,
        }
    }
}

/// Raw dual solution over the whole training set.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    /// Some kernel-matrix entry violates `K_ii > 0` or `|K_ij| <= sqrt(K_ii K_jj)`.
    pub non_psd_warning: bool,
}

fn kernel_matrix(data: &TrainingSet, kernel: &KernelSpec) -> Vec<Vec<f64>> {
    let n = data.len();
    let xs = data.samples();
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval_unchecked(&xs[i], &xs[j]);
            k[i][j] = v;
            k[j][i] = v;
        }
    }
    k
}

fn looks_non_psd(k: &[Vec<f64>]) -> bool {
    let n = k.len();
    (0..n).any(|i| {
        k[i][i] <= 0.0 || (0..n).any(|j| k[i][j].abs() > (k[i][i] * k[j][j]).max(0.0).sqrt() * (1.0 + 1e-12) + 1e-15)
    })
}

/// Solve the soft-margin dual with maximal-violating-pair SMO.
pub fn solve_dual(data: &TrainingSet, kernel: &KernelSpec, c: f64, params: &SmoParams) -> Result<DualSolution> {
    kernel.validate()?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::param("C", format!("must be positive, got {c}")));
    }
    if !(params.tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }
    let n = data.len();
    let y: Vec<f64> = data.labels().iter().map(|l| l.sign()).collect();
    let k = kernel_matrix(data, kernel);
    let q = |i: usize, j: usize| y[i] * y[j] * k[i][j];

    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let max_iter = params.max_iter.unwrap_or_else(|| (100 * n).max(10_000_000));

    let in_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let in_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let mut iterations = 0;
    loop {
        let mut i = usize::MAX;
        let mut j = usize::MAX;
        let mut g_max = f64::NEG_INFINITY;
        let mut g_min = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], y[t]) && v > g_max {
                g_max = v;
                i = t;
            }
            if in_low(alpha[t], y[t]) && v < g_min {
                g_min = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || g_max - g_min < params.tol {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::NotConverged(iterations));
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        if y[i] != y[j] {
            let mut quad = k[i][i] + k[j][j] + 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let mut quad = k[i][i] + k[j][j] - 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = ai;
        alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(i, t) * di + q(j, t) * dj;
        }
    }

    // bias: average over free vectors, else midpoint of the feasible interval
    let mut upper = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut free_count = 0usize;
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else {
            free_count += 1;
            free_sum += yg;
        }
    }
    let rho = if free_count > 0 {
        free_sum / free_count as f64
    } else {
        (upper + lower) / 2.0
    };

    Ok(DualSolution {
        alphas: alpha,
        bias: -rho,
        iterations,
        non_psd_warning: looks_non_psd(&k),
    })
}

/// Trained classifier: support vectors with their duals and labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: KernelSpec,
    #[serde(rename = "C")]
    pub c: f64,
    pub bias: f64,
    /// `||w|| = sqrt(sum_ij a_i a_j y_i y_j K(x_i, x_j))`.
    pub w_norm: f64,
    pub support_vectors: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    pub sv_labels: Vec<Label>,
    #[serde(default)]
    pub non_psd_warning: bool,
}

pub fn train_svm(data: &TrainingSet, kernel: &KernelSpec, c: f64) -> Result<SvmModel> {
    train_svm_with(data, kernel, c, &SmoParams::default())
}

pub fn train_svm_with(data: &TrainingSet, kernel: &KernelSpec, c: f64, params: &SmoParams) -> Result<SvmModel> {
    let sol = solve_dual(data, kernel, c, params)?;
    SvmModel::from_dual(data, kernel, c, &sol)
}

impl SvmModel {
    /// Keep the vectors with nonzero duals.
    pub fn from_dual(data: &TrainingSet, kernel: &KernelSpec, c: f64, sol: &DualSolution) -> Result<Self> {
        let mut support_vectors = Vec::new();
        let mut alphas = Vec::new();
        let mut sv_labels = Vec::new();
        for (t, &a) in sol.alphas.iter().enumerate() {
            if a > 0.0 {
                support_vectors.push(data.samples()[t].clone());
                alphas.push(a);
                sv_labels.push(data.labels()[t]);
            }
        }

        let mut w2 = 0.0;
        for (s, xs) in support_vectors.iter().enumerate() {
            let coef_s = alphas[s] * sv_labels[s].sign();
            for (t, xt) in support_vectors.iter().enumerate() {
                w2 += coef_s * alphas[t] * sv_labels[t].sign() * kernel.eval_unchecked(xs, xt);
            }
        }
        // an indefinite kernel can make the quadratic form negative; keep its magnitude
        // a zero norm is kept (decision values still work) but `score` will refuse it
        let w_norm = w2.abs().sqrt();
        if !w_norm.is_finite() {
            return Err(Error::NonFinite("hyperplane norm".into()));
        }

        Ok(Self {
            kernel: *kernel,
            c,
            bias: sol.bias,
            w_norm,
            support_vectors,
            alphas,
            sv_labels,
            non_psd_warning: sol.non_psd_warning || w2 < 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.support_vectors.first().map_or(0, Vec::len)
    }

    /// `f(x) = sum_i a_i y_i K(x_i, x) + b`.
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let sum: f64 = self
            .support_vectors
            .iter()
            .zip(&self.alphas)
            .zip(&self.sv_labels)
            .map(|((sv, a), l)| a * l.sign() * self.kernel.eval_unchecked(sv, x))
            .sum();
        Ok(sum + self.bias)
    }

    /// `sign(f(x))`, with `f(x) = 0` classified positive.
    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        Ok(Label::from_value(self.decision_value(x)?))
    }

    /// Signed geometric distance `f(x) / ||w||` to the separating hyperplane.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if !(self.w_norm > 0.0) {
            return Err(Error::DegenerateModel("zero hyperplane norm".into()));
        }
        Ok(self.decision_value(x)? / self.w_norm)
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        let n = self.support_vectors.len();
        if n == 0 {
            return Err(Error::validation("support_vectors", "model has no support vectors"));
        }
        if self.alphas.len() != n || self.sv_labels.len() != n {
            return Err(Error::validation(
                "alphas",
                "alphas, labels and support vectors differ in length",
            ));
        }
        let dim = self.dim();
        if self
            .support_vectors
            .iter()
            .any(|s| s.len() != dim || s.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::validation(
                "support_vectors",
                "inconsistent dimension or non-finite entry",
            ));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::validation("C", "must be positive"));
        }
        if self.alphas.iter().any(|&a| !(a > 0.0 && a <= self.c)) {
            return Err(Error::validation("alphas", "every dual must lie in (0, C]"));
        }
        let balance: f64 = self.alphas.iter().zip(&self.sv_labels).map(|(a, l)| a * l.sign()).sum();
        if balance.abs() > 1e-8 * (1.0 + self.c * n as f64) {
            return Err(Error::validation(
                "alphas",
                format!("sum a_i y_i = {balance} is not zero"),
            ));
        }
        if !(self.w_norm > 0.0 && self.w_norm.is_finite()) {
            return Err(Error::validation("w_norm", "must be positive"));
        }
        if !self.bias.is_finite() {
            return Err(Error::validation("bias", "must be finite"));
        }
        Ok(())
    }
}
