//! Non-negative matrix factorization `A ~ V H` under the Frobenius loss, using
//! multiplicative updates, plus out-of-sample encoding against a fixed basis.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Added to every update denominator.
const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmfConfig {
    pub rank: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for NmfConfig {
    fn default() -> Self {
        Self {
            rank: 8,
            max_iters: 500,
            rel_tol: 1e-6,
            seed: 0,
        }
    }
}

impl NmfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank < 1 {
            return Err(Error::param("rank", "must be at least 1"));
        }
        if self.max_iters < 1 {
            return Err(Error::param("max_iters", "must be at least 1"));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::param("rel_tol", "must be positive"));
        }
        Ok(())
    }
}

/// Learned nonnegative basis (`rows x rank`).
#[derive(Debug, Clone, PartialEq)]
pub struct NmfModel {
    basis: DMatrix<f64>,
    column_norms: Vec<f64>,
    train_residual: f64,
    config: NmfConfig,
}

impl NmfModel {
    /// Rebuild a model from stored parts, checking its invariants.
    pub fn from_parts(basis: DMatrix<f64>, train_residual: f64, config: NmfConfig) -> Result<Self> {
        config.validate()?;
        if basis.ncols() != config.rank {
            return Err(Error::validation(
                "rank",
                format!("basis has {} columns but rank is {}", basis.ncols(), config.rank),
            ));
        }
        if basis.nrows() <= config.rank {
            return Err(Error::validation(
                "rows",
                "rank must be smaller than the data dimension",
            ));
        }
        if basis.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::validation("basis", "entries must be finite and nonnegative"));
        }
        if !(train_residual.is_finite() && train_residual >= 0.0) {
            return Err(Error::validation("train_residual", "must be finite and nonnegative"));
        }
        let column_norms = basis.column_iter().map(|c| c.norm()).collect();
        Ok(Self {
            basis,
            column_norms,
            train_residual,
            config,
        })
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn rank(&self) -> usize {
        self.config.rank
    }

    pub fn rows(&self) -> usize {
        self.basis.nrows()
    }

    pub fn column_norms(&self) -> &[f64] {
        &self.column_norms
    }

    /// `||A - V H||_F` at the end of training.
    pub fn train_residual(&self) -> f64 {
        self.train_residual
    }

    pub fn config(&self) -> &NmfConfig {
        &self.config
    }
}

#[derive(Debug, Clone)]
pub struct Factorization {
    pub model: NmfModel,
    /// `rank x n` weights, one column per input column.
    pub weights: DMatrix<f64>,
    /// `||A - V H||_F^2` at initialization and after every iteration.
    pub objective_trace: Vec<f64>,
}

fn check_nonnegative<'a>(values: impl IntoIterator<Item = &'a f64>, what: &str) -> Result<()> {
    for v in values {
        if !v.is_finite() {
            return Err(Error::NonFinite(what.to_string()));
        }
        if *v < 0.0 {
            return Err(Error::InvalidInput(format!("{what} has negative entry {v}")));
        }
    }
    Ok(())
}

fn uniform_positive(rng: &mut ChaCha8Rng) -> f64 {
    // gen() is in [0, 1); flip it to (0, 1]
    1.0 - rng.gen::<f64>()
}

fn objective(a: &DMatrix<f64>, v: &DMatrix<f64>, h: &DMatrix<f64>) -> f64 {
    (a - v * h).norm_squared()
}

/// Multiplicative-update step for `h` with `v` fixed: `h <- h * (V^T A) / (V^T V h + eps)`.
fn update_weights(h: &mut DMatrix<f64>, vta: &DMatrix<f64>, vtv: &DMatrix<f64>) {
    let denom = vtv * &*h;
    h.zip_zip_apply(vta, &denom, |x, num, den| *x *= num / (den + EPS));
}

/// Stopping rule shared by training and encoding.
fn converged(prev: f64, cur: f64, rel_tol: f64) -> bool {
    cur == 0.0 || prev <= 0.0 || (prev - cur) / prev < rel_tol
}

/// Factorize the columns of `a` (`m x n`, nonnegative) onto `rank` basis vectors.
pub fn nmf_factorize(a: &DMatrix<f64>, cfg: &NmfConfig) -> Result<Factorization> {
    cfg.validate()?;
    check_nonnegative(a.iter(), "data matrix")?;
    let (m, n) = a.shape();
    let r = cfg.rank;
    if r >= m.min(n) {
        return Err(Error::param(
            "rank",
            format!("rank {r} must be smaller than both dimensions of the {m}x{n} data matrix"),
        ));
    }

    let mean = a.mean();
    let scale = if mean > 0.0 { (mean / r as f64).sqrt() } else { 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut v = DMatrix::from_fn(m, r, |_, _| uniform_positive(&mut rng) * scale);
    let mut h = DMatrix::from_fn(r, n, |_, _| uniform_positive(&mut rng) * scale);

    let mut trace = Vec::with_capacity(cfg.max_iters + 1);
    trace.push(objective(a, &v, &h));

    for _ in 0..cfg.max_iters {
        // V <- V * (A H^T) / (V H H^T + eps)
        let aht = a * h.transpose();
        let denom = &v * (&h * h.transpose());
        v.zip_zip_apply(&aht, &denom, |x, num, den| *x *= num / (den + EPS));

        let vt = v.transpose();
        update_weights(&mut h, &(&vt * a), &(&vt * &v));

        let cur = objective(a, &v, &h);
        let prev = *trace.last().expect("trace is nonempty");
        trace.push(cur);
        if converged(prev, cur, cfg.rel_tol) {
            break;
        }
    }

    let residual = trace.last().expect("trace is nonempty").sqrt();
    let model = NmfModel::from_parts(v, residual, *cfg)?;
    Ok(Factorization {
        model,
        weights: h,
        objective_trace: trace,
    })
}

/// Nonnegative encoding `h` minimizing `||a - V h||^2`, solved exactly with the
/// Lawson-Hanson active-set method on the `r x r` normal equations.
///
/// Multiplicative updates stall when the optimum has zero components (the
/// gradient vanishes there too), so they are only used for training. The active
/// set result is positively homogeneous in `a` and does not depend on a seed.
pub fn nmf_encode(model: &NmfModel, a: &[f64]) -> Result<Vec<f64>> {
    if a.len() != model.rows() {
        return Err(Error::DimensionMismatch {
            expected: model.rows(),
            found: a.len(),
        });
    }
    check_nonnegative(a, "sample vector")?;
    let v = &model.basis;
    let a = DVector::from_column_slice(a);
    let vta = v.tr_mul(&a);
    let vtv = v.tr_mul(v);
    Ok(nnls_gram(&vtv, &vta).iter().copied().collect())
}

/// Solve `min ||a - V h||, h >= 0` given `G = V^T V` and `b = V^T a`.
fn nnls_gram(g: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let r = b.len();
    let mut x = DVector::zeros(r);
    let scale = b.amax();
    if scale == 0.0 {
        return x;
    }
    let tol = 1e-12 * scale * (1.0 + g.amax());
    let mut passive = vec![false; r];

    for _ in 0..3 * r + 10 {
        let w = b - g * &x;
        let next = (0..r)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = next else { break };
        passive[j] = true;

        loop {
            let s = solve_passive(g, b, &passive);
            if (0..r).all(|i| !passive[i] || s[i] > 0.0) {
                x = s;
                break;
            }
            // step toward s until the first passive coordinate hits zero
            let step = (0..r)
                .filter(|&i| passive[i] && s[i] <= 0.0)
                .map(|i| x[i] / (x[i] - s[i]))
                .fold(f64::INFINITY, f64::min);
            x += (s - &x) * step;
            for i in 0..r {
                if passive[i] && x[i] <= tol * f64::EPSILON {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    x.iter_mut().for_each(|v| *v = v.max(0.0));
    x
}

/// Unconstrained least squares restricted to the passive coordinates.
fn solve_passive(g: &DMatrix<f64>, b: &DVector<f64>, passive: &[bool]) -> DVector<f64> {
    let idx: Vec<usize> = (0..passive.len()).filter(|&i| passive[i]).collect();
    let k = idx.len();
    let gp = DMatrix::from_fn(k, k, |i, j| g[(idx[i], idx[j])]);
    let bp = DVector::from_fn(k, |i, _| b[idx[i]]);
    let sol = match gp.clone().cholesky() {
        Some(ch) => ch.solve(&bp),
        // dependent basis columns: fall back to the minimum-norm solution
        None => gp
            .pseudo_inverse(1e-14)
            .map(|pinv| pinv * &bp)
            .unwrap_or_else(|_| DVector::zeros(k)),
    };
    let mut s = DVector::zeros(passive.len());
    for (i, &t) in idx.iter().enumerate() {
        s[t] = sol[i];
    }
    s
}

/// `V h` for an encoding `h`.
pub fn reconstruct(model: &NmfModel, h: &[f64]) -> Result<Vec<f64>> {
    if h.len() != model.rank() {
        return Err(Error::DimensionMismatch {
            expected: model.rank(),
            found: h.len(),
        });
    }
    let out = &model.basis * DVector::from_column_slice(h);
    Ok(out.iter().copied().collect())
}
