//! Desk-scale DP-SGD / DP-AdamW training of a small softmax classifier.

mod checkpoint;
mod dataset;
mod dp;
mod model;
mod optim;
mod schedule;

pub use checkpoint::{read_checkpoint_dir, Checkpoint, CKPT_MAGIC};
pub use dataset::{format_labels, parse_labels, LabeledDataset, FEATURES_FILE, LABELS_FILE};
pub use dp::{clip, clip_in_place, dp_aggregate};
pub use model::{argmax, softmax, ModelSpec};
pub use optim::{optimizer_step, Optimizer, OptimizerState};
pub use schedule::lr_at;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::accountant::{default_orders, sigma_for, SigmaSearch};
use crate::error::{Error, Result};
use crate::matrix::norm;

const BATCH_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;
const DIVERGENCE_LOSS: f64 = 1e6;

/// Where gradients are clipped to the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClipMode {
    /// Clip every per-sample gradient (DP-SGD).
    PerSample,
    /// Clip the averaged batch gradient.
    Batch,
    /// Per-sample when noise is added, batch-level otherwise.
    Auto,
}

impl fmt::Display for ClipMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClipMode::PerSample => "per_sample",
            ClipMode::Batch => "batch",
            ClipMode::Auto => "auto",
        })
    }
}

impl FromStr for ClipMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_sample" => Ok(ClipMode::PerSample),
            "batch" => Ok(ClipMode::Batch),
            "auto" => Ok(ClipMode::Auto),
            other => Err(Error::Config(format!("unknown clip mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub batch_size: usize,
    pub clip_threshold: f64,
    /// 0 trains without noise.
    pub noise_multiplier: f64,
    pub weight_decay: f64,
    pub optimizer: Optimizer,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub clip_mode: ClipMode,
    /// Seeds batch sampling and initialization.
    pub seed: u64,
    /// Seeds the noise stream; defaults to `seed`.
    pub noise_seed: Option<u64>,
    pub checkpoint_interval: usize,
    /// When set, overrides `noise_multiplier` through the accountant.
    pub target_epsilon: Option<f64>,
    /// Defaults to `1e-4 / N`.
    pub delta: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            base_lr: 0.05,
            warmup_steps: 50,
            total_steps: 300,
            batch_size: 16,
            clip_threshold: 0.1,
            noise_multiplier: 0.0,
            weight_decay: 0.01,
            optimizer: Optimizer::AdamW,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            clip_mode: ClipMode::Auto,
            seed: 0,
            noise_seed: None,
            checkpoint_interval: 100,
            target_epsilon: None,
            delta: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, dataset_len: usize) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return bad("base_lr must be positive");
        }
        if self.total_steps == 0 || self.warmup_steps >= self.total_steps {
            return bad("need total_steps > warmup_steps and total_steps > 0");
        }
        if self.batch_size == 0 || self.batch_size > dataset_len {
            return Err(Error::Config(format!(
                "batch_size {} must be in 1..={dataset_len}",
                self.batch_size
            )));
        }
        if !(self.clip_threshold > 0.0) {
            return bad("clip_threshold must be positive");
        }
        if !(self.noise_multiplier >= 0.0 && self.noise_multiplier.is_finite()) {
            return bad("noise_multiplier must be finite and >= 0");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be >= 0");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps > 0.0)
        {
            return bad("adam betas must be in [0, 1) and adam_eps positive");
        }
        if self.checkpoint_interval == 0 {
            return bad("checkpoint_interval must be positive");
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d < 1.0) {
                return bad("delta must be in (0, 1)");
            }
        }
        Ok(())
    }

    pub fn delta_for(&self, dataset_len: usize) -> f64 {
        self.delta.unwrap_or(1e-4 / dataset_len as f64)
    }

    /// The noise multiplier to train with: from `target_epsilon` via the
    /// accountant when set, else `noise_multiplier`.
    pub fn resolve_sigma(&self, dataset_len: usize) -> Result<f64> {
        match self.target_epsilon {
            None => Ok(self.noise_multiplier),
            Some(eps) => sigma_for(
                eps,
                self.batch_size as f64 / dataset_len as f64,
                self.total_steps as u64,
                self.delta_for(dataset_len),
                &default_orders(),
                SigmaSearch::default(),
            ),
        }
    }

    fn per_sample_clipping(&self, sigma: f64) -> bool {
        match self.clip_mode {
            ClipMode::PerSample => true,
            ClipMode::Batch => false,
            ClipMode::Auto => sigma > 0.0,
        }
    }
}

/// Fixed-size batches drawn without replacement, indices ascending.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    rng: ChaCha8Rng,
    dataset_len: usize,
    batch_size: usize,
}

impl BatchSampler {
    pub fn new(seed: u64, dataset_len: usize, batch_size: usize) -> Self {
        Self { rng: stream(seed, BATCH_STREAM), dataset_len, batch_size }
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        let mut idx = sample(&mut self.rng, self.dataset_len, self.batch_size).into_vec();
        idx.sort_unstable();
        idx
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Initial parameters for a run with the given seed.
pub fn initial_params(spec: &ModelSpec, seed: u64) -> Vec<f64> {
    spec.init_params(&mut stream(seed, INIT_STREAM))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub lr: f64,
    /// Mean batch loss before the update.
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub theta: Vec<f64>,
    pub checkpoints: Vec<Checkpoint>,
    pub log: Vec<StepLog>,
    pub sigma: f64,
}

/// Step-wise trainer; [`train`] runs it to completion.
pub struct Trainer<'a> {
    dataset: &'a LabeledDataset,
    spec: ModelSpec,
    config: TrainConfig,
    sigma: f64,
    state: OptimizerState,
    sampler: BatchSampler,
    noise_rng: ChaCha8Rng,
    step: usize,
    checkpoints: Vec<Checkpoint>,
    excluded: Option<usize>,
}

impl<'a> Trainer<'a> {
    pub fn new(dataset: &'a LabeledDataset, spec: ModelSpec, config: TrainConfig) -> Result<Self> {
        spec.validate()?;
        config.validate(dataset.len())?;
        if dataset.dim() != spec.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "dataset dim {} vs model input {}",
                dataset.dim(),
                spec.input_dim
            )));
        }
        dataset.check_classes(spec.num_classes)?;
        let sigma = config.resolve_sigma(dataset.len())?;
        let state = OptimizerState::new(initial_params(&spec, config.seed));
        Ok(Self {
            dataset,
            spec,
            sampler: BatchSampler::new(config.seed, dataset.len(), config.batch_size),
            noise_rng: stream(config.noise_seed.unwrap_or(config.seed), NOISE_STREAM),
            config,
            sigma,
            state,
            step: 0,
            checkpoints: Vec::new(),
            excluded: None,
        })
    }

    /// Drops example `index` from every batch while keeping the batch
    /// schedule, noise draws and normalization of the full run.
    pub fn excluding(mut self, index: usize) -> Result<Self> {
        if index >= self.dataset.len() {
            return Err(Error::ShapeMismatch(format!("index {index} outside dataset of {}", self.dataset.len())));
        }
        self.excluded = Some(index);
        Ok(self)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn theta(&self) -> &[f64] {
        &self.state.theta
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.config.total_steps
    }

    /// Runs one update (1-based step `t` uses `lr_at(t)`).
    pub fn step(&mut self) -> Result<StepLog> {
        if self.is_done() {
            return Err(Error::OutOfRange { step: self.step + 1, total: self.config.total_steps });
        }
        let t = self.step + 1;
        let lr = lr_at(t, &self.config)?;
        let batch = self.sampler.next_batch();
        let c = self.config.clip_threshold;
        let per_sample = self.config.per_sample_clipping(self.sigma);

        let mut sum = vec![0.0; self.state.theta.len()];
        let (mut loss_sum, mut correct, mut used) = (0.0, 0usize, 0usize);
        for &i in batch.iter().filter(|&&i| Some(i) != self.excluded) {
            let (mut g, loss, probs) =
                self.spec.grad_with_loss(&self.state.theta, self.dataset.x(i), self.dataset.labels[i]);
            if per_sample {
                clip_in_place(&mut g, c);
                debug_assert!(norm(&g) <= c * (1.0 + 1e-12));
            }
            sum.iter_mut().zip(&g).for_each(|(s, v)| *s += v);
            loss_sum += loss;
            correct += usize::from(argmax(&probs) == self.dataset.labels[i]);
            used += 1;
        }
        dp::add_noise_and_average(&mut sum, batch.len(), self.sigma, c, &mut self.noise_rng);
        if !per_sample {
            clip_in_place(&mut sum, c);
        }
        let loss = if used == 0 { 0.0 } else { loss_sum / used as f64 };
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            return Err(Error::Diverged { step: t, reason: format!("loss {loss}") });
        }
        optimizer_step(&mut self.state, &sum, lr, &self.config);
        if self.state.theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { step: t, reason: "non-finite parameters".into() });
        }
        self.step = t;
        if t % self.config.checkpoint_interval == 0 {
            self.checkpoints.push(Checkpoint {
                step: u32::try_from(t).map_err(|_| Error::Config("step count exceeds u32".into()))?,
                eta: lr,
                theta: self.state.theta.clone(),
            });
        }
        let accuracy = if used == 0 { 0.0 } else { correct as f64 / used as f64 };
        Ok(StepLog { step: t, lr, loss, accuracy })
    }

    pub fn run(mut self) -> Result<TrainOutput> {
        let mut log = Vec::with_capacity(self.config.total_steps);
        while !self.is_done() {
            log.push(self.step()?);
        }
        Ok(TrainOutput { theta: self.state.theta, checkpoints: self.checkpoints, log, sigma: self.sigma })
    }
}

pub fn train(dataset: &LabeledDataset, spec: &ModelSpec, config: &TrainConfig) -> Result<TrainOutput> {
    Trainer::new(dataset, *spec, config.clone())?.run()
}

/// [`train`] with example `index` contributing a zero gradient at every step.
pub fn train_excluding(
    dataset: &LabeledDataset,
    spec: &ModelSpec,
    config: &TrainConfig,
    index: usize,
) -> Result<TrainOutput> {
    Trainer::new(dataset, *spec, config.clone())?.excluding(index)?.run()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_loss: f64,
    pub per_language_loss: BTreeMap<String, f64>,
}

pub fn evaluate(theta: &[f64], spec: &ModelSpec, dataset: &LabeledDataset) -> Result<Evaluation> {
    if dataset.is_empty() {
        return Err(Error::ShapeMismatch("cannot evaluate on an empty dataset".into()));
    }
    let mut correct = 0usize;
    let mut total_loss = 0.0;
    let mut per_lang: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for i in 0..dataset.len() {
        let y = dataset.labels[i];
        let (loss, probs) = spec.forward_loss(theta, dataset.x(i), y)?;
        correct += usize::from(argmax(&probs) == y);
        total_loss += loss;
        let e = per_lang.entry(dataset.languages[i].clone()).or_insert((0.0, 0));
        e.0 += loss;
        e.1 += 1;
    }
    let n = dataset.len() as f64;
    Ok(Evaluation {
        accuracy: correct as f64 / n,
        mean_loss: total_loss / n,
        per_language_loss: per_lang.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    fn separable() -> LabeledDataset {
        let rows: Vec<[f64; 2]> =
            (0..20).map(|i| if i % 2 == 0 { [1.0 + i as f64 * 0.1, 0.5] } else { [-1.0 - i as f64 * 0.1, -0.5] }).collect();
        let labels = (0..20).map(|i| i % 2).collect();
        let langs = (0..20).map(|i| if i < 10 { "a".into() } else { "b".into() }).collect();
        LabeledDataset::new(Matrix::from_rows(&rows).unwrap(), labels, langs).unwrap()
    }

    #[test]
    fn checkpoint_cadence() {
        let d = separable();
        let cfg = TrainConfig { total_steps: 300, batch_size: 4, ..TrainConfig::default() };
        let out = train(&d, &ModelSpec::linear(2, 2), &cfg).unwrap();
        let steps: Vec<u32> = out.checkpoints.iter().map(|c| c.step).collect();
        assert_eq!(steps, vec![100, 200, 300]);
        for ck in &out.checkpoints {
            assert_eq!(ck.eta, lr_at(ck.step as usize, &cfg).unwrap());
        }
        assert_eq!(out.log.len(), 300);
    }

    #[test]
    fn deterministic() {
        let d = separable();
        let cfg = TrainConfig { noise_multiplier: 1.0, batch_size: 5, ..TrainConfig::default() };
        let spec = ModelSpec { input_dim: 2, hidden_dim: 3, num_classes: 2 };
        let a = train(&d, &spec, &cfg).unwrap();
        let b = train(&d, &spec, &cfg).unwrap();
        assert_eq!(a.theta, b.theta);
    }

    #[test]
    fn noiseless_ignores_noise_seed() {
        let d = separable();
        let cfg = TrainConfig { batch_size: 5, ..TrainConfig::default() };
        let spec = ModelSpec::linear(2, 2);
        let a = train(&d, &spec, &cfg).unwrap();
        let b = train(&d, &spec, &TrainConfig { noise_seed: Some(99), ..cfg }).unwrap();
        assert_eq!(a.theta, b.theta);
    }

    #[test]
    fn learns_separable_data() {
        let d = separable();
        let cfg = TrainConfig { batch_size: 10, base_lr: 0.1, ..TrainConfig::default() };
        let spec = ModelSpec::linear(2, 2);
        let out = train(&d, &spec, &cfg).unwrap();
        assert_eq!(evaluate(&out.theta, &spec, &d).unwrap().accuracy, 1.0);
    }

    #[test]
    fn zero_theta_accuracy_follows_tie_rule() {
        let d = separable();
        let spec = ModelSpec::linear(2, 2);
        let ev = evaluate(&vec![0.0; spec.num_params()], &spec, &d).unwrap();
        assert_eq!(ev.accuracy, 0.5);
        assert_eq!(ev.per_language_loss.len(), 2);
    }

    #[test]
    fn rejects_oversized_batch() {
        let d = separable();
        let cfg = TrainConfig { batch_size: 21, ..TrainConfig::default() };
        assert!(matches!(train(&d, &ModelSpec::linear(2, 2), &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn excluding_is_deterministic_and_checked() {
        let d = separable();
        let spec = ModelSpec::linear(2, 2);
        let cfg = TrainConfig { batch_size: 20, total_steps: 60, warmup_steps: 5, ..TrainConfig::default() };
        let a = train_excluding(&d, &spec, &cfg, 3).unwrap();
        let b = train_excluding(&d, &spec, &cfg, 3).unwrap();
        assert_eq!(a.theta, b.theta);
        let full = train(&d, &spec, &cfg).unwrap();
        assert_ne!(a.theta, full.theta);
        assert!(matches!(train_excluding(&d, &spec, &cfg, 20), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn divergence_is_reported() {
        let mut d = separable();
        // flip every other label so no finite weights fit the data
        for i in (0..20).step_by(4) {
            d.labels[i] = 1 - d.labels[i];
        }
        let cfg = TrainConfig {
            optimizer: Optimizer::Sgd,
            clip_threshold: 1e300,
            base_lr: 1e200,
            warmup_steps: 0,
            weight_decay: 0.0,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let r = train(&d, &ModelSpec::linear(2, 2), &cfg);
        assert!(matches!(r, Err(Error::Diverged { .. })), "{r:?}");
    }

    #[test]
    fn infinite_target_means_no_noise() {
        let d = separable();
        let cfg = TrainConfig { target_epsilon: Some(f64::INFINITY), noise_multiplier: 3.0, ..TrainConfig::default() };
        assert_eq!(cfg.resolve_sigma(d.len()).unwrap(), 0.0);
    }
}
