//! Checkpoint-based training-data influence (TracInCP), the influence
//! uniformity score over translation tuples, leave-one-out retraining and the
//! instance-interpretability margin.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::dot;
use crate::trainer::{train, train_excluding, Checkpoint, LabeledDataset, ModelSpec, TrainConfig};

/// Anything with a per-example loss gradient over a flat parameter vector.
pub trait GradientModel: Sync {
    type Target: Copy + Send + Sync;

    fn num_params(&self) -> usize;

    fn gradient(&self, theta: &[f64], x: &[f64], target: Self::Target) -> Result<Vec<f64>>;
}

impl GradientModel for ModelSpec {
    type Target = usize;

    fn num_params(&self) -> usize {
        ModelSpec::num_params(self)
    }

    fn gradient(&self, theta: &[f64], x: &[f64], target: usize) -> Result<Vec<f64>> {
        self.grad(theta, x, target)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Example<'a, T> {
    pub x: &'a [f64],
    pub target: T,
}

impl<'a> Example<'a, usize> {
    pub fn from_dataset(dataset: &'a LabeledDataset, i: usize) -> Self {
        Example { x: dataset.x(i), target: dataset.labels[i] }
    }
}

/// Checkpoints with strictly increasing steps and a shared parameter count.
#[derive(Debug, Clone)]
pub struct CheckpointSet {
    checkpoints: Vec<Checkpoint>,
}

impl CheckpointSet {
    pub fn new(checkpoints: Vec<Checkpoint>) -> Result<Self> {
        let first = checkpoints
            .first()
            .ok_or_else(|| Error::Config("at least one checkpoint is required".into()))?;
        if checkpoints.windows(2).any(|w| w[0].step >= w[1].step) {
            return Err(Error::Config("checkpoint steps must be strictly increasing".into()));
        }
        if checkpoints.iter().any(|c| c.theta.len() != first.theta.len()) {
            return Err(Error::ShapeMismatch("checkpoints differ in parameter count".into()));
        }
        Ok(Self { checkpoints })
    }

    /// Keeps only the last `k` checkpoints.
    pub fn last(mut self, k: usize) -> Self {
        if k > 0 && self.checkpoints.len() > k {
            self.checkpoints.drain(..self.checkpoints.len() - k);
        }
        self
    }

    pub fn checkpoints(&self) -> &[Checkpoint] {
        &self.checkpoints
    }

    pub fn num_params(&self) -> usize {
        self.checkpoints[0].theta.len()
    }

    /// Every learning rate multiplied by `c`.
    pub fn scale_learning_rates(&self, c: f64) -> Self {
        let checkpoints = self
            .checkpoints
            .iter()
            .map(|ck| Checkpoint { eta: ck.eta * c, ..ck.clone() })
            .collect();
        Self { checkpoints }
    }

    fn check_model<M: GradientModel>(&self, model: &M) -> Result<()> {
        if model.num_params() != self.num_params() {
            return Err(Error::ShapeMismatch(format!(
                "model has {} parameters, checkpoints have {}",
                model.num_params(),
                self.num_params()
            )));
        }
        Ok(())
    }

    /// Gradients of each example at each checkpoint: `out[i][j]` is checkpoint i, example j.
    fn gradients<M: GradientModel>(&self, model: &M, examples: &[Example<'_, M::Target>]) -> Result<Vec<Vec<Vec<f64>>>> {
        self.check_model(model)?;
        self.checkpoints
            .iter()
            .map(|ck| examples.iter().map(|z| model.gradient(&ck.theta, z.x, z.target)).collect())
            .collect()
    }
}

/// `Σ_i η_i ∇ℓ(θ_i, z) · ∇ℓ(θ_i, z')`.
pub fn tracin_cp<M: GradientModel>(
    z: Example<'_, M::Target>,
    z_prime: Example<'_, M::Target>,
    cks: &CheckpointSet,
    model: &M,
) -> Result<f64> {
    let grads = cks.gradients(model, &[z, z_prime])?;
    Ok(cks.checkpoints.iter().zip(&grads).map(|(ck, g)| ck.eta * dot(&g[0], &g[1])).sum())
}

pub fn self_influence<M: GradientModel>(z: Example<'_, M::Target>, cks: &CheckpointSet, model: &M) -> Result<f64> {
    let grads = cks.gradients(model, &[z])?;
    Ok(cks.checkpoints.iter().zip(&grads).map(|(ck, g)| ck.eta * dot(&g[0], &g[0])).sum())
}

/// All pairwise TracInCP scores within a tuple: `out[k][j] = TracInCP(z_k, z_j)`.
pub fn influence_matrix<M: GradientModel>(
    tuple: &[Example<'_, M::Target>],
    cks: &CheckpointSet,
    model: &M,
) -> Result<Vec<Vec<f64>>> {
    let grads = cks.gradients(model, tuple)?;
    let l = tuple.len();
    let mut scores = vec![vec![0.0; l]; l];
    for (ck, g) in cks.checkpoints.iter().zip(&grads) {
        for k in 0..l {
            for j in 0..l {
                scores[k][j] += ck.eta * dot(&g[k], &g[j]);
            }
        }
    }
    Ok(scores)
}

/// Row `anchor` of [`influence_matrix`].
pub fn influence_vector<M: GradientModel>(
    anchor: usize,
    tuple: &[Example<'_, M::Target>],
    cks: &CheckpointSet,
    model: &M,
) -> Result<Vec<f64>> {
    if tuple.len() < 2 {
        return Err(Error::TooFewLanguages(tuple.len()));
    }
    if anchor >= tuple.len() {
        return Err(Error::ShapeMismatch(format!("anchor {anchor} outside tuple of {}", tuple.len())));
    }
    let grads = cks.gradients(model, tuple)?;
    let mut out = vec![0.0; tuple.len()];
    for (ck, g) in cks.checkpoints.iter().zip(&grads) {
        for (j, o) in out.iter_mut().enumerate() {
            *o += ck.eta * dot(&g[anchor], &g[j]);
        }
    }
    Ok(out)
}

fn stable_softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Entropy with logarithm base `p.len()`, `0 ln 0 = 0`.
fn normalized_entropy(p: &[f64]) -> f64 {
    let h: f64 = p.iter().filter(|&&v| v > 0.0).map(|v| -v * v.ln()).sum();
    h / (p.len() as f64).ln()
}

/// Largest probability in the softmax of one anchor's scores.
pub fn influence_peak(scores: &[f64]) -> f64 {
    stable_softmax(scores).into_iter().fold(0.0, f64::max)
}

/// Mean normalized entropy of the per-anchor softmax over a square score matrix.
pub fn infu_from_scores(scores: &[Vec<f64>]) -> Result<f64> {
    let l = scores.len();
    if l < 2 {
        return Err(Error::TooFewLanguages(l));
    }
    if scores.iter().any(|row| row.len() != l) {
        return Err(Error::ShapeMismatch("influence score matrix must be square".into()));
    }
    if scores.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("influence scores"));
    }
    let mean = scores.iter().map(|row| normalized_entropy(&stable_softmax(row))).sum::<f64>() / l as f64;
    crate::metrics::clamp_to_range(mean, 0.0, 1.0, "InfU")
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceProfile {
    pub tuple_index: usize,
    /// `scores[k][j] = TracInCP(i_k, i_j)`.
    pub scores: Vec<Vec<f64>>,
    pub infu: f64,
}

pub fn infu<M: GradientModel>(tuple: &[Example<'_, M::Target>], cks: &CheckpointSet, model: &M) -> Result<f64> {
    if tuple.len() < 2 {
        return Err(Error::TooFewLanguages(tuple.len()));
    }
    infu_from_scores(&influence_matrix(tuple, cks, model)?)
}

/// Influence profiles for every translation tuple of `dataset`.
pub fn dataset_profiles(dataset: &LabeledDataset, cks: &CheckpointSet, spec: &ModelSpec) -> Result<Vec<InfluenceProfile>> {
    let tuples = dataset.tuples()?;
    tuples
        .par_iter()
        .enumerate()
        .map(|(t, members)| {
            let examples: Vec<_> = members.iter().map(|&i| Example::from_dataset(dataset, i)).collect();
            if examples.len() < 2 {
                return Err(Error::TooFewLanguages(examples.len()));
            }
            let scores = influence_matrix(&examples, cks, spec)?;
            let infu = infu_from_scores(&scores)?;
            Ok(InfluenceProfile { tuple_index: t, scores, infu })
        })
        .collect()
}

/// Number of noise seeds averaged by leave-one-out estimates under noise.
pub const LOO_NOISE_SEEDS: u64 = 10;

/// Retraining oracle for leave-one-out influence on one event
/// ("the model assigns `event_class` at `eval_point`").
///
/// Removal runs reuse the full run's seed, batch schedule and noise draws;
/// the removed example simply contributes no gradient. With noise, every
/// probability is averaged over [`LOO_NOISE_SEEDS`] noise seeds.
#[derive(Debug, Clone)]
pub struct LooOracle<'a> {
    dataset: &'a LabeledDataset,
    spec: ModelSpec,
    config: TrainConfig,
    eval_point: Vec<f64>,
    event_class: usize,
    noise_seeds: Vec<u64>,
    full_probability: f64,
}

impl<'a> LooOracle<'a> {
    pub fn new(
        dataset: &'a LabeledDataset,
        spec: ModelSpec,
        config: TrainConfig,
        eval_point: &[f64],
        event_class: usize,
    ) -> Result<Self> {
        if dataset.len() < 2 {
            return Err(Error::Config("leave-one-out needs at least 2 examples".into()));
        }
        if event_class >= spec.num_classes || eval_point.len() != spec.input_dim {
            return Err(Error::ShapeMismatch("eval point or event class does not fit the model".into()));
        }
        let sigma = config.resolve_sigma(dataset.len())?;
        let base = config.noise_seed.unwrap_or(config.seed);
        let noise_seeds = if sigma > 0.0 { (0..LOO_NOISE_SEEDS).map(|k| base.wrapping_add(k)).collect() } else { vec![base] };
        // Pin σ so the removal runs use the same noise level.
        let config = TrainConfig { noise_multiplier: sigma, target_epsilon: None, ..config };
        let mut oracle = Self {
            dataset,
            spec,
            config,
            eval_point: eval_point.to_vec(),
            event_class,
            noise_seeds,
            full_probability: 0.0,
        };
        oracle.full_probability = oracle.event_probability(None)?;
        Ok(oracle)
    }

    pub fn is_stochastic(&self) -> bool {
        self.noise_seeds.len() > 1
    }

    pub fn full_probability(&self) -> f64 {
        self.full_probability
    }

    fn event_probability(&self, excluded: Option<usize>) -> Result<f64> {
        let mut total = 0.0;
        for &noise_seed in &self.noise_seeds {
            let config = TrainConfig { noise_seed: Some(noise_seed), ..self.config.clone() };
            let out = match excluded {
                None => train(self.dataset, &self.spec, &config)?,
                Some(i) => train_excluding(self.dataset, &self.spec, &config, i)?,
            };
            total += self.spec.probs(&out.theta, &self.eval_point)?[self.event_class];
        }
        Ok(total / self.noise_seeds.len() as f64)
    }

    /// Probability of the event after retraining without `index`.
    pub fn removed_probability(&self, index: usize) -> Result<f64> {
        if index >= self.dataset.len() {
            return Err(Error::ShapeMismatch(format!("index {index} outside dataset of {}", self.dataset.len())));
        }
        self.event_probability(Some(index))
    }

    /// `P(M(D) ∈ Y) − P(M(D \ {x}) ∈ Y)`.
    pub fn influence(&self, index: usize) -> Result<f64> {
        Ok(self.full_probability - self.removed_probability(index)?)
    }

    /// Leave-one-out influence of every example, computed in parallel.
    pub fn all_influences(&self) -> Result<Vec<f64>> {
        (0..self.dataset.len()).into_par_iter().map(|i| self.influence(i)).collect()
    }
}

pub fn loo_influence(
    dataset: &LabeledDataset,
    x_index: usize,
    spec: &ModelSpec,
    config: &TrainConfig,
    eval_point: &[f64],
    event_class: usize,
) -> Result<f64> {
    LooOracle::new(dataset, *spec, config.clone(), eval_point, event_class)?.influence(x_index)
}

/// Point estimate of the interpretability margin exponent:
/// `ln((p − p_d) / (p − p_2))`, where `p_d` and `p_2` are the event
/// probabilities after removing the most and second-most influential points.
pub fn interpretability_margin(p: f64, p_d: f64, p_2: f64) -> Result<f64> {
    if !(p.is_finite() && p_d.is_finite() && p_2.is_finite()) {
        return Err(Error::NonFinite("interpretability margin inputs"));
    }
    if p <= p_2 || p <= p_d {
        return Err(Error::UndefinedMargin(format!(
            "removals must lower the event probability (p = {p}, p_d = {p_d}, p_2 = {p_2})"
        )));
    }
    Ok(((p - p_d) / (p - p_2)).ln())
}
