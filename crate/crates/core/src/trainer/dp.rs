//! Per-sample clipping and the noisy aggregate of DP-SGD.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::norm;

/// Scales `g` by `min(1, c / ||g||)`.
pub fn clip(g: &[f64], c: f64) -> Vec<f64> {
    let mut out = g.to_vec();
    clip_in_place(&mut out, c);
    out
}

pub fn clip_in_place(g: &mut [f64], c: f64) {
    let n = norm(g);
    if n > c {
        let scale = c / n;
        g.iter_mut().for_each(|v| *v *= scale);
    }
}

/// `(Σ g_i + ξ) / B` with `ξ ~ N(0, σ²C² I)` drawn from `rng`. No draws are
/// made when `sigma == 0`.
pub fn dp_aggregate<R: Rng>(
    per_sample_clipped: &[Vec<f64>],
    sigma: f64,
    clip_threshold: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let first = per_sample_clipped.first().ok_or(Error::EmptyBatch)?;
    let mut sum = vec![0.0; first.len()];
    for g in per_sample_clipped {
        if g.len() != sum.len() {
            return Err(Error::ShapeMismatch("per-sample gradients differ in length".into()));
        }
        sum.iter_mut().zip(g).for_each(|(s, v)| *s += v);
    }
    add_noise_and_average(&mut sum, per_sample_clipped.len(), sigma, clip_threshold, rng);
    Ok(sum)
}

pub(crate) fn add_noise_and_average<R: Rng>(
    sum: &mut [f64],
    batch: usize,
    sigma: f64,
    clip_threshold: f64,
    rng: &mut R,
) {
    if sigma > 0.0 {
        let std = sigma * clip_threshold;
        for s in sum.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *s += std * z;
        }
    }
    let b = batch as f64;
    sum.iter_mut().for_each(|s| *s /= b);
}
