//! Reference implementations used as test oracles. None of this code calls into
//! the library's numeric routines; it works from the textbook definitions with
//! plain loops.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use texturekit::glcm::QuantizedImage;
use texturekit::svm::{KernelSpec, Label, TrainingSet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_levels(rng: &mut ChaCha8Rng, height: usize, width: usize, levels: usize) -> Vec<Vec<usize>> {
    (0..height)
        .map(|_| (0..width).map(|_| rng.gen_range(0..levels)).collect())
        .collect()
}

pub fn to_quantized(grid: &[Vec<usize>], levels: usize) -> QuantizedImage {
    let data = grid.iter().flatten().map(|&v| v as u16).collect();
    QuantizedImage::new(grid[0].len(), grid.len(), levels, data).unwrap()
}

/// Enumerate every ordered pair of pixels and keep those at the given offset.
pub fn brute_force_glcm(grid: &[Vec<usize>], levels: usize, dr: isize, dc: isize) -> Vec<Vec<u64>> {
    let mut counts = vec![vec![0u64; levels]; levels];
    let pixels: Vec<(isize, isize, usize)> = grid
        .iter()
        .enumerate()
        .flat_map(|(r, row)| row.iter().enumerate().map(move |(c, &v)| (r as isize, c as isize, v)))
        .collect();
    for &(r1, c1, a) in &pixels {
        for &(r2, c2, b) in &pixels {
            if r2 - r1 == dr && c2 - c1 == dc {
                counts[a][b] += 1;
                counts[b][a] += 1;
            }
        }
    }
    counts
}

/// Random probability matrix; roughly `zero_fraction` of the cells are zero.
pub fn random_probs(rng: &mut ChaCha8Rng, n: usize, symmetric: bool, zero_fraction: f64) -> Vec<Vec<f64>> {
    let mut p = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if symmetric && j < i {
                p[i][j] = p[j][i];
                continue;
            }
            if rng.gen::<f64>() >= zero_fraction {
                p[i][j] = rng.gen::<f64>();
            }
        }
    }
    if p.iter().flatten().all(|&v| v == 0.0) {
        p[0][0] = 1.0;
    }
    let total: f64 = p.iter().flatten().sum();
    p.iter_mut().flatten().for_each(|v| *v /= total);
    p
}

pub fn flatten(p: &[Vec<f64>]) -> Vec<f64> {
    p.iter().flatten().copied().collect()
}

fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// The 14 statistics straight from their definitions, with 1-based gray levels.
pub fn naive_haralick(p: &[Vec<f64>]) -> [f64; 14] {
    let ng = p.len();
    let lvl = |i: usize| (i + 1) as f64;

    let mut px = vec![0.0; ng];
    let mut py = vec![0.0; ng];
    for i in 0..ng {
        for j in 0..ng {
            px[i] += p[i][j];
            py[j] += p[i][j];
        }
    }
    let mu_x: f64 = (0..ng).map(|i| lvl(i) * px[i]).sum();
    let mu_y: f64 = (0..ng).map(|j| lvl(j) * py[j]).sum();
    let sd_x = (0..ng).map(|i| (lvl(i) - mu_x).powi(2) * px[i]).sum::<f64>().sqrt();
    let sd_y = (0..ng).map(|j| (lvl(j) - mu_y).powi(2) * py[j]).sum::<f64>().sqrt();

    let mut f1 = 0.0;
    for row in p {
        for &v in row {
            f1 += v * v;
        }
    }

    let mut f2 = 0.0;
    for n in 0..ng {
        let mut s = 0.0;
        for i in 0..ng {
            for j in 0..ng {
                if i.abs_diff(j) == n {
                    s += p[i][j];
                }
            }
        }
        f2 += (n * n) as f64 * s;
    }

    let mut sum_ij = 0.0;
    for i in 0..ng {
        for j in 0..ng {
            sum_ij += lvl(i) * lvl(j) * p[i][j];
        }
    }
    let f3 = if sd_x * sd_y > 0.0 {
        (sum_ij - mu_x * mu_y) / (sd_x * sd_y)
    } else {
        0.0
    };

    let mut f4 = 0.0;
    let mut f5 = 0.0;
    let mut f9 = 0.0;
    for i in 0..ng {
        for j in 0..ng {
            f4 += (lvl(i) - mu_x).powi(2) * p[i][j];
            f5 += p[i][j] / (1.0 + (lvl(i) - lvl(j)).powi(2));
            f9 -= xlogx(p[i][j]);
        }
    }

    // k runs over 2..=2 Ng
    let mut p_sum = vec![0.0; 2 * ng + 1];
    for (k, slot) in p_sum.iter_mut().enumerate().skip(2) {
        for i in 0..ng {
            for j in 0..ng {
                if (i + 1) + (j + 1) == k {
                    *slot += p[i][j];
                }
            }
        }
    }
    let f6: f64 = (2..=2 * ng).map(|k| k as f64 * p_sum[k]).sum();
    let f8: f64 = -(2..=2 * ng).map(|k| xlogx(p_sum[k])).sum::<f64>();
    let f7: f64 = (2..=2 * ng).map(|k| (k as f64 - f8).powi(2) * p_sum[k]).sum();

    let mut p_diff = vec![0.0; ng];
    for (k, slot) in p_diff.iter_mut().enumerate() {
        for i in 0..ng {
            for j in 0..ng {
                if i.abs_diff(j) == k {
                    *slot += p[i][j];
                }
            }
        }
    }
    let diff_mean: f64 = (0..ng).map(|k| k as f64 * p_diff[k]).sum();
    let f10: f64 = (0..ng).map(|k| (k as f64 - diff_mean).powi(2) * p_diff[k]).sum();
    let f11: f64 = -(0..ng).map(|k| xlogx(p_diff[k])).sum::<f64>();

    let hx: f64 = -px.iter().map(|&v| xlogx(v)).sum::<f64>();
    let hy: f64 = -py.iter().map(|&v| xlogx(v)).sum::<f64>();
    let mut hxy1 = 0.0;
    let mut hxy2 = 0.0;
    for i in 0..ng {
        for j in 0..ng {
            let q = px[i] * py[j];
            if q > 0.0 {
                hxy1 -= p[i][j] * q.ln();
                hxy2 -= q * q.ln();
            }
        }
    }
    let hmax = hx.max(hy);
    let f12 = if hmax > 0.0 { (f9 - hxy1) / hmax } else { 0.0 };
    let f13 = (1.0 - (-2.0 * (hxy2 - f9)).exp()).max(0.0).sqrt();

    let f14 = second_eigenvalue_of_q(p, &px, &py).map_or(0.0, |l| l.clamp(0.0, 1.0).sqrt());

    [f1, f2, f3, f4, f5, f6, f7, f8, f9, f10, f11, f12, f13, f14]
}

/// Second-largest eigenvalue of the (non-symmetric) matrix `Q`, rows with
/// zero marginal removed, via a general real Schur decomposition.
pub fn second_eigenvalue_of_q(p: &[Vec<f64>], px: &[f64], py: &[f64]) -> Option<f64> {
    let ng = p.len();
    let rows: Vec<usize> = (0..ng).filter(|&i| px[i] > 0.0).collect();
    let d = rows.len();
    let mut q = DMatrix::zeros(d, d);
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in rows.iter().enumerate() {
            let mut s = 0.0;
            for k in 0..ng {
                if py[k] > 0.0 {
                    s += p[i][k] * p[j][k] / (px[i] * py[k]);
                }
            }
            q[(a, b)] = s;
        }
    }
    let mut eig: Vec<f64> = q.complex_eigenvalues().iter().map(|z| z.re).collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    eig.get(1).copied()
}

pub fn labels(ys: &[i8]) -> Vec<Label> {
    ys.iter().map(|&y| Label::try_from(y).unwrap()).collect()
}

pub fn random_training_set(rng: &mut ChaCha8Rng, n: usize, dim: usize, overlap: f64) -> TrainingSet {
    loop {
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let y: i8 = if rng.gen_bool(0.5) { 1 } else { -1 };
            let shift = y as f64 * (1.0 - overlap);
            xs.push((0..dim).map(|_| rng.gen_range(-1.0..1.0) + shift).collect::<Vec<f64>>());
            ys.push(y);
        }
        if ys.contains(&1) && ys.contains(&-1) {
            return TrainingSet::new(xs, labels(&ys)).unwrap();
        }
    }
}

pub fn gram(data: &TrainingSet, kernel: &KernelSpec) -> Vec<Vec<f64>> {
    let xs = data.samples();
    xs.iter()
        .map(|u| xs.iter().map(|v| kernel.eval(u, v).unwrap()).collect())
        .collect()
}

/// `sum a - 1/2 a^T Q a` with `Q_ij = y_i y_j K_ij`.
pub fn dual_objective(alpha: &[f64], y: &[f64], k: &[Vec<f64>]) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * k[i][j];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Project onto `{0 <= a <= C, y.a = 0}` by bisection on the multiplier.
fn project(z: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |lam: f64| -> Vec<f64> { z.iter().zip(y).map(|(zi, yi)| (zi - lam * yi).clamp(0.0, c)).collect() };
    let balance = |a: &[f64]| a.iter().zip(y).map(|(ai, yi)| ai * yi).sum::<f64>();
    let (mut lo, mut hi) = (-1e6, 1e6);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        // balance is non-increasing in lambda
        if balance(&at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Maximize the SVM dual by accelerated projected gradient ascent.
pub fn projected_gradient_dual(y: &[f64], k: &[Vec<f64>], c: f64, iters: usize) -> Vec<f64> {
    let n = y.len();
    let q = |i: usize, j: usize| y[i] * y[j] * k[i][j];
    // Gershgorin bound on the largest eigenvalue of Q
    let lip = (0..n)
        .map(|i| (0..n).map(|j| q(i, j).abs()).sum::<f64>())
        .fold(0.0, f64::max)
        .max(1e-12);
    let step = 1.0 / lip;
    let mut a = vec![0.0; n];
    let mut momentum = a.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let grad: Vec<f64> = (0..n)
            .map(|i| 1.0 - (0..n).map(|j| q(i, j) * momentum[j]).sum::<f64>())
            .collect();
        let z: Vec<f64> = momentum.iter().zip(&grad).map(|(m, g)| m + step * g).collect();
        let next = project(&z, y, c);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        momentum = next
            .iter()
            .zip(&a)
            .map(|(x, prev)| x + (t - 1.0) / t_next * (x - prev))
            .collect();
        a = next;
        t = t_next;
    }
    a
}

/// Largest KKT violation of a dual solution, measured on `y f(x)`.
pub fn kkt_violation(alpha: &[f64], bias: f64, y: &[f64], k: &[Vec<f64>], c: f64) -> f64 {
    let n = alpha.len();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let f: f64 = (0..n).map(|j| alpha[j] * y[j] * k[j][i]).sum::<f64>() + bias;
        let margin = y[i] * f;
        let bound_eps = 1e-12 * c.max(1.0);
        let v = if alpha[i] <= bound_eps {
            (1.0 - margin).max(0.0)
        } else if alpha[i] >= c - bound_eps {
            (margin - 1.0).max(0.0)
        } else {
            (margin - 1.0).abs()
        };
        worst = worst.max(v);
    }
    worst
}
