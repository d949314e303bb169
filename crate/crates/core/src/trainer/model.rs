//! Softmax classifier with an optional tanh hidden layer.
//!
//! Parameter layout (layer-major, row-major within a layer):
//! linear: `W (c x d)`, `b (c)`; hidden: `W1 (h x d)`, `b1 (h)`, `W2 (c x h)`, `b2 (c)`.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSpec {
    pub input_dim: usize,
    /// 0 selects the linear model.
    pub hidden_dim: usize,
    pub num_classes: usize,
}

impl ModelSpec {
    pub fn linear(input_dim: usize, num_classes: usize) -> Self {
        Self { input_dim, hidden_dim: 0, num_classes }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.num_classes == 0 {
            return Err(Error::Config(format!("invalid model spec {self:?}")));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        let (d, h, c) = (self.input_dim, self.hidden_dim, self.num_classes);
        if h == 0 {
            c * d + c
        } else {
            h * d + h + c * h + c
        }
    }

    /// Recovers the hidden width from a parameter count, if one fits.
    pub fn infer(input_dim: usize, num_classes: usize, num_params: usize) -> Option<Self> {
        let linear = Self::linear(input_dim, num_classes);
        if linear.num_params() == num_params {
            return Some(linear);
        }
        let per_unit = input_dim + 1 + num_classes;
        let rest = num_params.checked_sub(num_classes)?;
        (rest % per_unit == 0 && rest > 0)
            .then(|| Self { input_dim, hidden_dim: rest / per_unit, num_classes })
    }

    fn check(&self, theta: &[f64], x: &[f64], y: Option<usize>) -> Result<()> {
        if theta.len() != self.num_params() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                theta.len()
            )));
        }
        if x.len() != self.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "expected input of dim {}, got {}",
                self.input_dim,
                x.len()
            )));
        }
        if let Some(y) = y {
            if y >= self.num_classes {
                return Err(Error::ShapeMismatch(format!(
                    "label {y} out of range for {} classes",
                    self.num_classes
                )));
            }
        }
        Ok(())
    }

    /// Random initial parameters: weights `N(0, 1/fan_in)`, biases zero.
    pub fn init_params<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut theta = vec![0.0; self.num_params()];
        let (d, h, c) = (self.input_dim, self.hidden_dim, self.num_classes);
        let mut fill = |slice: &mut [f64], fan_in: usize| {
            let normal = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("valid std");
            slice.iter_mut().for_each(|v| *v = normal.sample(rng));
        };
        if h == 0 {
            fill(&mut theta[..c * d], d);
        } else {
            fill(&mut theta[..h * d], d);
            let w2 = h * d + h;
            fill(&mut theta[w2..w2 + c * h], h);
        }
        theta
    }

    fn hidden(&self, theta: &[f64], x: &[f64]) -> Vec<f64> {
        let (d, h) = (self.input_dim, self.hidden_dim);
        let (w1, b1) = theta[..h * d + h].split_at(h * d);
        (0..h)
            .map(|j| (b1[j] + w1[j * d..(j + 1) * d].iter().zip(x).map(|(w, v)| w * v).sum::<f64>()).tanh())
            .collect()
    }

    fn affine(w: &[f64], b: &[f64], input: &[f64]) -> Vec<f64> {
        let n = input.len();
        b.iter()
            .enumerate()
            .map(|(k, bk)| bk + w[k * n..(k + 1) * n].iter().zip(input).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    pub fn logits(&self, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.check(theta, x, None)?;
        Ok(self.logits_unchecked(theta, x).0)
    }

    /// Returns `(logits, hidden activations)`.
    fn logits_unchecked(&self, theta: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (d, h, c) = (self.input_dim, self.hidden_dim, self.num_classes);
        if h == 0 {
            let (w, b) = theta.split_at(c * d);
            (Self::affine(w, b, x), Vec::new())
        } else {
            let a = self.hidden(theta, x);
            let (w2, b2) = theta[h * d + h..].split_at(c * h);
            (Self::affine(w2, b2, &a), a)
        }
    }

    pub fn probs(&self, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(theta, x)?))
    }

    /// Cross-entropy loss and class probabilities.
    pub fn forward_loss(&self, theta: &[f64], x: &[f64], y: usize) -> Result<(f64, Vec<f64>)> {
        self.check(theta, x, Some(y))?;
        let (logits, _) = self.logits_unchecked(theta, x);
        Ok(loss_and_probs(&logits, y))
    }

    /// Analytic gradient of [`forward_loss`](Self::forward_loss) with respect to theta.
    pub fn grad(&self, theta: &[f64], x: &[f64], y: usize) -> Result<Vec<f64>> {
        self.check(theta, x, Some(y))?;
        Ok(self.grad_with_loss(theta, x, y).0)
    }

    /// Gradient plus the loss and probabilities at `theta`.
    pub(crate) fn grad_with_loss(&self, theta: &[f64], x: &[f64], y: usize) -> (Vec<f64>, f64, Vec<f64>) {
        let (d, h, c) = (self.input_dim, self.hidden_dim, self.num_classes);
        let (logits, a) = self.logits_unchecked(theta, x);
        let (loss, probs) = loss_and_probs(&logits, y);
        let mut dlogits = probs.clone();
        dlogits[y] -= 1.0;
        let mut g = vec![0.0; theta.len()];
        if h == 0 {
            let (gw, gb) = g.split_at_mut(c * d);
            for k in 0..c {
                for (gv, xv) in gw[k * d..(k + 1) * d].iter_mut().zip(x) {
                    *gv = dlogits[k] * xv;
                }
                gb[k] = dlogits[k];
            }
        } else {
            let off2 = h * d + h;
            let w2 = &theta[off2..off2 + c * h];
            let (g1, g2) = g.split_at_mut(off2);
            let (gw2, gb2) = g2.split_at_mut(c * h);
            for k in 0..c {
                for (gv, av) in gw2[k * h..(k + 1) * h].iter_mut().zip(&a) {
                    *gv = dlogits[k] * av;
                }
                gb2[k] = dlogits[k];
            }
            let (gw1, gb1) = g1.split_at_mut(h * d);
            for j in 0..h {
                let da: f64 = (0..c).map(|k| w2[k * h + j] * dlogits[k]).sum();
                let dz = da * (1.0 - a[j] * a[j]);
                for (gv, xv) in gw1[j * d..(j + 1) * d].iter_mut().zip(x) {
                    *gv = dz * xv;
                }
                gb1[j] = dz;
            }
        }
        (g, loss, probs)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn loss_and_probs(logits: &[f64], y: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    let lse = max + sum.ln();
    let probs = softmax(logits);
    (lse - logits[y], probs)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = k;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_params_give_uniform() {
        let spec = ModelSpec::linear(3, 4);
        let theta = vec![0.0; spec.num_params()];
        let (loss, p) = spec.forward_loss(&theta, &[1.0, -2.0, 0.5], 2).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-15);
        assert!(p.iter().all(|v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn saturated_true_logit() {
        let spec = ModelSpec::linear(1, 2);
        // logits = (30, 0) at x = 1
        let theta = [30.0, 0.0, 0.0, 0.0];
        let (loss, p) = spec.forward_loss(&theta, &[1.0], 0).unwrap();
        assert!(loss < 1e-12);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_loss() {
        let spec = ModelSpec::linear(1, 2);
        let theta = [1.0, 0.0, 0.0, 0.0];
        let (loss, _) = spec.forward_loss(&theta, &[1.0], 0).unwrap();
        assert!((loss - (1.0 + (-1f64).exp()).ln()).abs() < 1e-15);
        assert!((loss - 0.31326).abs() < 1e-5);
    }

    #[test]
    fn hand_gradient_at_zero() {
        let spec = ModelSpec::linear(1, 2);
        let x = 1.7;
        let g = spec.grad(&[0.0; 4], &[x], 0).unwrap();
        assert_eq!(g, vec![-0.5 * x, 0.5 * x, -0.5, 0.5]);
    }

    #[test]
    fn shape_errors() {
        let spec = ModelSpec::linear(2, 2);
        assert!(spec.forward_loss(&[0.0; 5], &[1.0, 1.0], 0).is_err());
        assert!(spec.forward_loss(&[0.0; 6], &[1.0], 0).is_err());
        assert!(spec.forward_loss(&[0.0; 6], &[1.0, 1.0], 2).is_err());
    }

    #[test]
    fn infer_round_trips() {
        for h in [0, 1, 5, 16] {
            let spec = ModelSpec { input_dim: 8, hidden_dim: h, num_classes: 3 };
            assert_eq!(ModelSpec::infer(8, 3, spec.num_params()), Some(spec));
        }
    }

    #[test]
    fn init_is_seeded() {
        let spec = ModelSpec { input_dim: 4, hidden_dim: 3, num_classes: 2 };
        let a = spec.init_params(&mut ChaCha8Rng::seed_from_u64(5));
        let b = spec.init_params(&mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
        // biases stay zero
        assert_eq!(&a[12..15], &[0.0; 3]);
    }
}
