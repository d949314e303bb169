//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use lingua_dp::trainer::{BatchSampler, LabeledDataset};
use lingua_dp::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Random orthogonal matrix by Gram-Schmidt on Gaussian columns.
pub fn orthogonal(rng: &mut impl Rng, d: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    while basis.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}

/// `X · Q` with `Q` given as rows.
pub fn times(x: &Matrix, q: &[Vec<f64>]) -> Matrix {
    let d = q.len();
    let mut data = Vec::with_capacity(x.rows() * d);
    for r in 0..x.rows() {
        let row = x.row(r);
        for j in 0..d {
            data.push((0..d).map(|k| row[k] * q[k][j]).sum());
        }
    }
    Matrix::from_vec(x.rows(), d, data).unwrap()
}

/// Cross-entropy loss of a linear softmax model, layout `W (c x d)` then `b (c)`.
pub fn linear_loss(theta: &[f64], x: &[f64], y: usize, c: usize) -> f64 {
    let d = x.len();
    let logits: Vec<f64> = (0..c).map(|k| theta[c * d + k] + (0..d).map(|j| theta[k * d + j] * x[j]).sum::<f64>()).collect();
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    lse - logits[y]
}

/// Hand-derived gradient: `(p − e_y) xᵀ` for weights, `p − e_y` for biases.
pub fn linear_grad(theta: &[f64], x: &[f64], y: usize, c: usize) -> Vec<f64> {
    let d = x.len();
    let logits: Vec<f64> = (0..c).map(|k| theta[c * d + k] + (0..d).map(|j| theta[k * d + j] * x[j]).sum::<f64>()).collect();
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    let mut g = vec![0.0; c * d + c];
    for k in 0..c {
        let r = e[k] / z - if k == y { 1.0 } else { 0.0 };
        for j in 0..d {
            g[k * d + j] = r * x[j];
        }
        g[c * d + k] = r;
    }
    g
}

/// Central finite-difference gradient.
pub fn fd_grad(f: impl Fn(&[f64]) -> f64, theta: &[f64], h: f64) -> Vec<f64> {
    let mut t = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            let orig = t[i];
            t[i] = orig + h;
            let up = f(&t);
            t[i] = orig - h;
            let down = f(&t);
            t[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Warmup-then-linear-decay schedule written out directly.
pub fn reference_lr(step: usize, base: f64, warmup: usize, total: usize) -> f64 {
    if step <= warmup {
        base * step as f64 / warmup as f64
    } else {
        base * (total - step) as f64 / (total - warmup) as f64
    }
}

/// Plain minibatch SGD on the linear model, no clipping, noise or decay.
/// Returns the parameters after every step.
pub fn reference_sgd(
    data: &LabeledDataset,
    classes: usize,
    theta0: Vec<f64>,
    seed: u64,
    batch: usize,
    base_lr: f64,
    warmup: usize,
    total: usize,
) -> Vec<Vec<f64>> {
    let mut sampler = BatchSampler::new(seed, data.len(), batch);
    let mut theta = theta0;
    let mut out = Vec::with_capacity(total);
    for t in 1..=total {
        let idx = sampler.next_batch();
        let mut g = vec![0.0; theta.len()];
        for &i in &idx {
            for (a, b) in g.iter_mut().zip(linear_grad(&theta, data.x(i), data.labels[i], classes)) {
                *a += b;
            }
        }
        let lr = reference_lr(t, base_lr, warmup, total);
        for (p, gi) in theta.iter_mut().zip(&g) {
            *p -= lr * gi / idx.len() as f64;
        }
        out.push(theta.clone());
    }
    out
}

/// Closed-form Gaussian mechanism (q = 1): minimize over integer orders
/// `T α / (2σ²) + ln(1 − 1/α) − (ln δ + ln α)/(α − 1)`.
pub fn gaussian_epsilon(sigma: f64, steps: u64, delta: f64, orders: &[u32]) -> f64 {
    orders
        .iter()
        .map(|&a| {
            let a = a as f64;
            steps as f64 * a / (2.0 * sigma * sigma) + (1.0 - 1.0 / a).ln() - (delta.ln() + a.ln()) / (a - 1.0)
        })
        .fold(f64::INFINITY, f64::min)
        .max(0.0)
}

/// Direct binomial sum for the sampled Gaussian mechanism, small orders only.
pub fn naive_rdp(q: f64, sigma: f64, alpha: u32) -> f64 {
    let mut sum = 0.0;
    let mut binom = 1.0;
    for k in 0..=alpha {
        if k > 0 {
            binom = binom * (alpha - k + 1) as f64 / k as f64;
        }
        let kf = k as f64;
        sum += binom * (1.0 - q).powi((alpha - k) as i32) * q.powi(k as i32) * (kf * (kf - 1.0) / (2.0 * sigma * sigma)).exp();
    }
    sum.ln() / (alpha as f64 - 1.0)
}

/// Small separable two-language dataset with `n` rows per class.
pub fn toy_dataset(seed: u64, n: usize, d: usize, classes: usize) -> LabeledDataset {
    let mut r = rng(seed);
    let centers: Vec<Vec<f64>> = (0..classes).map(|_| (0..d).map(|_| 2.0 * r.sample::<f64, _>(StandardNormal)).collect()).collect();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut langs = Vec::new();
    for i in 0..n * classes {
        let y = i % classes;
        rows.extend(centers[y].iter().map(|c| c + 0.5 * r.sample::<f64, _>(StandardNormal)));
        labels.push(y);
        langs.push(if i < n * classes / 2 { "aa".to_string() } else { "bb".to_string() });
    }
    LabeledDataset::new(Matrix::from_vec(n * classes, d, rows).unwrap(), labels, langs).unwrap()
}
