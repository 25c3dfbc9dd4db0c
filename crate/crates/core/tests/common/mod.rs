//! Reference computations written without the library's numerics.
#![allow(dead_code)]

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Exact E[min of k draws with replacement] by enumerating all n^k tuples.
pub fn bootstrap_exact(pool: &[f64], k: usize) -> f64 {
    let n = pool.len();
    let total = n.pow(k as u32);
    let mut sum = 0.0;
    for code in 0..total {
        let mut c = code;
        let mut m = f64::INFINITY;
        for _ in 0..k {
            m = m.min(pool[c % n]);
            c /= n;
        }
        sum += m;
    }
    sum / total as f64
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting and
/// returns `(x, ln det a)`. `a` must be positive definite.
pub fn solve_naive(a: &[Vec<f64>], b: &[f64]) -> (Vec<f64>, f64) {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(row, &bi)| row.iter().copied().chain([bi]).collect()).collect();
    let mut log_det = 0.0;
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        m.swap(col, pivot);
        let p = m[col][col];
        log_det += p.abs().ln();
        for row in col + 1..n {
            let f = m[row][col] / p;
            for c in col..=n {
                m[row][c] -= f * m[col][c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
        x[i] = (m[i][n] - s) / m[i][i];
    }
    (x, log_det)
}

pub fn matern52_naive(a: &[f64], b: &[f64], l: f64, s: f64) -> f64 {
    let r = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let t = (5.0f64).sqrt() * r / l;
    s * (1.0 + t + t * t / 3.0) * (-t).exp()
}

pub fn gram(x: &[Vec<f64>], l: f64, s: f64, noise: f64) -> Vec<Vec<f64>> {
    x.iter()
        .enumerate()
        .map(|(i, a)| x.iter().enumerate().map(|(j, b)| matern52_naive(a, b, l, s) + if i == j { noise } else { 0.0 }).collect())
        .collect()
}

/// Population-standardized targets.
pub fn standardize(y: &[f64]) -> Vec<f64> {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    y.iter().map(|v| (v - mean) / sd).collect()
}

pub fn log_marginal_likelihood(x: &[Vec<f64>], y_std: &[f64], l: f64, s: f64, noise: f64) -> f64 {
    let (alpha, log_det) = solve_naive(&gram(x, l, s, noise), y_std);
    let fit: f64 = y_std.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    -0.5 * fit - 0.5 * log_det - 0.5 * y_std.len() as f64 * (2.0 * std::f64::consts::PI).ln()
}

/// Posterior mean and variance (standardized units) at `q`.
pub fn posterior_naive(x: &[Vec<f64>], y_std: &[f64], l: f64, s: f64, noise: f64, q: &[f64]) -> (f64, f64) {
    let k = gram(x, l, s, noise);
    let kq: Vec<f64> = x.iter().map(|a| matern52_naive(a, q, l, s)).collect();
    let (alpha, _) = solve_naive(&k, y_std);
    let (v, _) = solve_naive(&k, &kq);
    let mu = kq.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    let var = s - kq.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
    (mu, var)
}

/// Monte-Carlo estimate of E[max(best - xi - Y, 0)], Y ~ N(mu, sigma²),
/// with its standard error.
pub fn ei_monte_carlo(mu: f64, sigma: f64, best: f64, xi: f64, n: usize, rng: &mut impl Rng) -> (f64, f64) {
    let mut sum = 0.0;
    let mut sq = 0.0;
    for _ in 0..n {
        let z: f64 = StandardNormal.sample(rng);
        let v = (best - xi - (mu + sigma * z)).max(0.0);
        sum += v;
        sq += v * v;
    }
    let mean = sum / n as f64;
    let var = (sq / n as f64 - mean * mean).max(0.0);
    (mean, (var / n as f64).sqrt())
}

/// Expected improvement by composite Simpson quadrature over the region below the kink.
pub fn ei_quadrature(mu: f64, sigma: f64, best: f64, xi: f64) -> f64 {
    let k = (best - xi - mu) / sigma;
    let lo = k.min(0.0) - 40.0;
    let n = 400_000;
    let h = (k - lo) / n as f64;
    let f = |z: f64| (best - xi - mu - sigma * z) * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut sum = f(lo) + f(k);
    for i in 1..n {
        sum += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

/// Minimizes `f` over a box by a dense grid followed by shrinking pattern search.
pub fn grid_minimize(f: impl Fn(f64, f64) -> f64, lo: [f64; 2], hi: [f64; 2], n: usize) -> (f64, [f64; 2]) {
    let mut best = (f64::INFINITY, [0.0, 0.0]);
    for i in 0..=n {
        for j in 0..=n {
            let x = lo[0] + (hi[0] - lo[0]) * i as f64 / n as f64;
            let y = lo[1] + (hi[1] - lo[1]) * j as f64 / n as f64;
            let v = f(x, y);
            if v < best.0 {
                best = (v, [x, y]);
            }
        }
    }
    let mut step = (hi[0] - lo[0]) / n as f64;
    while step > 1e-12 {
        let [x, y] = best.1;
        let mut moved = false;
        for (dx, dy) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
            let v = f(x + dx, y + dy);
            if v < best.0 {
                best = (v, [x + dx, y + dy]);
                moved = true;
            }
        }
        if !moved {
            step /= 2.0;
        }
    }
    best
}
