//! Seeded end-to-end experiments on synthetic parallel data.
//!
//! * `theorem2`: fully compressed data gives equal per-language losses,
//!   identical representations and uniform influence.
//! * `theorem1`: more training noise flattens the influence of a planted
//!   outlier and shrinks its leave-one-out dominance.
//! * `fig2-correlation`: retrieval precision tracks influence uniformity
//!   across compression levels.
//! * LOO agreement: self-influence ranks examples like leave-one-out
//!   retraining does on a convex model.
//!
//! Each run returns per-seed rows plus named checks with a verdict.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::fmt::g17;
use crate::influence::{
    dataset_profiles, influence_matrix, influence_peak, interpretability_margin, self_influence, CheckpointSet,
    Example, LooOracle,
};
use crate::metrics::{linguistic_fairness_gap, pairwise_report, pearson, spearman_rho, MetricKind};
use crate::synth::{dataset_from_set, gen_classification_data, gen_parallel_set, plant_outlier, SynthSpec};
use crate::trainer::{evaluate, train, ClipMode, ModelSpec, Optimizer, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentName {
    Theorem1,
    Theorem2,
    Fig2Correlation,
}

impl ExperimentName {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentName::Theorem1 => "theorem1",
            ExperimentName::Theorem2 => "theorem2",
            ExperimentName::Fig2Correlation => "fig2-correlation",
        }
    }
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theorem1" => Ok(ExperimentName::Theorem1),
            "theorem2" => Ok(ExperimentName::Theorem2),
            "fig2-correlation" => Ok(ExperimentName::Fig2Correlation),
            other => Err(Error::Config(format!(
                "unknown experiment {other:?} (expected theorem1, theorem2 or fig2-correlation)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Human-readable pass condition, e.g. `>= 0.8`.
    pub condition: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub name: String,
    /// CSV header of `rows`.
    pub header: String,
    pub rows: Vec<String>,
    pub checks: Vec<Check>,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn runs_csv(&self) -> String {
        let mut s = format!("{}\n", self.header);
        for r in &self.rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("check,value,condition,verdict\n");
        for c in &self.checks {
            let verdict = if c.passed { "pass" } else { "fail" };
            s.push_str(&format!("{},{},{},{verdict}\n", c.name, g17(c.value), c.condition));
        }
        let overall = if self.passed() { "pass" } else { "fail" };
        s.push_str(&format!("{},,,{overall}\n", self.name));
        s
    }
}

fn check(name: &str, value: f64, condition: &str, passed: bool) -> Check {
    Check { name: name.to_string(), value, condition: condition.to_string(), passed }
}

/// Median with the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] > w[1])
}

fn seed_list(cfg: &RunConfig, default: std::ops::Range<u64>) -> Vec<u64> {
    cfg.int_list("seeds").unwrap_or_else(|| default.collect())
}

fn hidden_dim(cfg: &RunConfig) -> Result<usize> {
    Ok(cfg.model_spec(1, 1)?.hidden_dim)
}

fn checkpoint_count(cfg: &RunConfig, default: usize) -> usize {
    cfg.int("influence_checkpoints").map_or(default, |k| k as usize)
}

/// Trains and returns the last `k` checkpoints.
fn train_checkpoints(
    data: &crate::trainer::LabeledDataset,
    spec: &ModelSpec,
    cfg: &TrainConfig,
    k: usize,
) -> Result<(Vec<f64>, CheckpointSet)> {
    let out = train(data, spec, cfg)?;
    Ok((out.theta, CheckpointSet::new(out.checkpoints)?.last(k)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Theorem2Params {
    pub synth: SynthSpec,
    pub train: TrainConfig,
    pub hidden_dim: usize,
    pub seeds: Vec<u64>,
    pub influence_checkpoints: usize,
}

impl Default for Theorem2Params {
    fn default() -> Self {
        Self {
            synth: SynthSpec { num_languages: 4, tuples: 200, dim: 8, classes: 2, lambda: 1.0, ..SynthSpec::default() },
            train: TrainConfig { total_steps: 300, noise_multiplier: 0.0, ..TrainConfig::default() },
            hidden_dim: 0,
            seeds: vec![0],
            influence_checkpoints: 3,
        }
    }
}

impl Theorem2Params {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let base = Self::default();
        Ok(Self {
            synth: cfg.synth_spec(base.synth)?,
            train: cfg.train_config(base.train)?,
            hidden_dim: hidden_dim(cfg)?,
            seeds: seed_list(cfg, 0..1),
            influence_checkpoints: checkpoint_count(cfg, base.influence_checkpoints),
        })
    }
}

pub fn theorem2(p: &Theorem2Params) -> Result<ExperimentReport> {
    const TOL: f64 = 1e-9;
    let results: Vec<(u64, Vec<(String, f64)>)> = p
        .seeds
        .par_iter()
        .map(|&seed| -> Result<_> {
            let synth = SynthSpec { seed: p.synth.seed.wrapping_add(seed), ..p.synth.clone() };
            let (set, labels) = gen_parallel_set(&synth)?;
            let data = dataset_from_set(&set, &labels)?;
            let spec = ModelSpec { input_dim: synth.dim, hidden_dim: p.hidden_dim, num_classes: synth.classes };
            let cfg = TrainConfig { seed, ..p.train.clone() };
            let (theta, cks) = train_checkpoints(&data, &spec, &cfg, p.influence_checkpoints)?;
            let eval = evaluate(&theta, &spec, &data)?;
            let gap = linguistic_fairness_gap(&eval.per_language_loss)?;
            let mut q: Vec<(String, f64)> =
                eval.per_language_loss.iter().map(|(l, v)| (format!("loss_{l}"), *v)).collect();
            q.push(("fairness_variance".into(), gap.variance));
            q.push(("fairness_max_gap".into(), gap.max_gap));
            for kind in [MetricKind::Retrieval, MetricKind::Cka, MetricKind::Rsa] {
                q.push((kind.name().to_string(), pairwise_report(&set, kind)?.aggregate));
            }
            let profiles = dataset_profiles(&data, &cks, &spec)?;
            let worst = profiles.iter().map(|pr| (pr.infu - 1.0).abs()).fold(0.0, f64::max);
            let min_infu = profiles.iter().map(|pr| pr.infu).fold(f64::INFINITY, f64::min);
            q.push(("infu_min".into(), min_infu));
            q.push(("infu_max_deviation".into(), worst));
            Ok((seed, q))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let (mut var, mut metric_dev, mut infu_dev) = (0.0f64, 0.0f64, 0.0f64);
    for (seed, q) in &results {
        for (name, v) in q {
            rows.push(format!("{seed},{name},{}", g17(*v)));
            match name.as_str() {
                "fairness_variance" => var = var.max(*v),
                "retrieval" | "cka" | "rsa" => metric_dev = metric_dev.max((v - 1.0).abs()),
                "infu_max_deviation" => infu_dev = infu_dev.max(*v),
                _ => {}
            }
        }
    }
    let checks = vec![
        check("fairness_variance", var, "== 0", var == 0.0),
        check("compression_metric_deviation", metric_dev, "<= 1e-9", metric_dev <= TOL),
        check("infu_deviation", infu_dev, "<= 1e-9", infu_dev <= TOL),
    ];
    Ok(ExperimentReport { name: "theorem2".into(), header: "seed,quantity,value".into(), rows, checks })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Theorem1Params {
    pub synth: SynthSpec,
    pub train: TrainConfig,
    pub hidden_dim: usize,
    pub sigmas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub outlier_magnitude: f64,
    pub influence_checkpoints: usize,
}

impl Default for Theorem1Params {
    fn default() -> Self {
        Self {
            synth: SynthSpec { num_languages: 2, tuples: 32, dim: 8, classes: 3, lambda: 0.5, ..SynthSpec::default() },
            train: TrainConfig { clip_mode: ClipMode::PerSample, ..TrainConfig::default() },
            hidden_dim: 0,
            sigmas: vec![0.0, 0.5, 2.0],
            seeds: (0..20).collect(),
            outlier_magnitude: 4.0,
            influence_checkpoints: 3,
        }
    }
}

impl Theorem1Params {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let base = Self::default();
        Ok(Self {
            synth: cfg.synth_spec(base.synth)?,
            train: cfg.train_config(base.train)?,
            hidden_dim: hidden_dim(cfg)?,
            sigmas: cfg.float_list("sigmas").unwrap_or(base.sigmas),
            seeds: seed_list(cfg, 0..20),
            outlier_magnitude: cfg.float("outlier_magnitude").unwrap_or(base.outlier_magnitude),
            influence_checkpoints: checkpoint_count(cfg, base.influence_checkpoints),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutlierRun {
    pub sigma: f64,
    pub seed: u64,
    pub planted_index: usize,
    /// Largest softmax probability in the planted anchor's influence row.
    pub influence_peak: f64,
    /// Example whose removal lowers the event probability the most.
    pub top_index: usize,
    pub epsilon_i: f64,
}

/// Margin from leave-one-out effects. When only one removal lowers the event
/// probability the margin is unbounded (`+∞`); when none does it is 0.
fn margin_from_effects(p: f64, effects: &[f64]) -> Result<(usize, f64)> {
    let mut order: Vec<usize> = (0..effects.len()).collect();
    order.sort_by(|&a, &b| effects[b].total_cmp(&effects[a]).then(a.cmp(&b)));
    let (top, second) = (order[0], order[1]);
    let (p_d, p_2) = (p - effects[top], p - effects[second]);
    match interpretability_margin(p, p_d, p_2) {
        Ok(e) => Ok((top, e)),
        Err(Error::UndefinedMargin(_)) if effects[top] > 0.0 => Ok((top, f64::INFINITY)),
        Err(Error::UndefinedMargin(_)) => Ok((top, 0.0)),
        Err(e) => Err(e),
    }
}

pub fn outlier_run(p: &Theorem1Params, sigma: f64, seed: u64) -> Result<OutlierRun> {
    let synth = SynthSpec { seed: p.synth.seed.wrapping_add(seed), ..p.synth.clone() };
    let clean = gen_classification_data(&synth)?;
    let (data, planted) = plant_outlier(&clean, p.outlier_magnitude, seed)?;
    let spec = ModelSpec { input_dim: synth.dim, hidden_dim: p.hidden_dim, num_classes: synth.classes };
    let cfg = TrainConfig { seed, noise_multiplier: sigma, noise_seed: None, target_epsilon: None, ..p.train.clone() };

    let (_, cks) = train_checkpoints(&data, &spec, &cfg, p.influence_checkpoints)?;
    let tuples = data.tuples()?;
    let members = tuples.iter().find(|t| t.contains(&planted)).expect("every index belongs to a tuple");
    let anchor = members.iter().position(|&i| i == planted).expect("planted index is in its tuple");
    let examples: Vec<_> = members.iter().map(|&i| Example::from_dataset(&data, i)).collect();
    let scores = influence_matrix(&examples, &cks, &spec)?;
    let peak = influence_peak(&scores[anchor]);

    let oracle = LooOracle::new(&data, spec, cfg, data.x(planted), data.labels[planted])?;
    let effects = oracle.all_influences()?;
    let (top_index, epsilon_i) = margin_from_effects(oracle.full_probability(), &effects)?;
    Ok(OutlierRun { sigma, seed, planted_index: planted, influence_peak: peak, top_index, epsilon_i })
}

pub fn theorem1(p: &Theorem1Params) -> Result<ExperimentReport> {
    if p.sigmas.len() < 2 {
        return Err(Error::Config("theorem1 needs at least two sigma levels".into()));
    }
    let jobs: Vec<(f64, u64)> = p.sigmas.iter().flat_map(|&s| p.seeds.iter().map(move |&seed| (s, seed))).collect();
    let runs: Vec<OutlierRun> = jobs.par_iter().map(|&(s, seed)| outlier_run(p, s, seed)).collect::<Result<_>>()?;

    let rows = runs
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{}",
                g17(r.sigma),
                r.seed,
                r.planted_index,
                g17(r.influence_peak),
                r.top_index,
                g17(r.epsilon_i)
            )
        })
        .collect();
    let mut checks = Vec::new();
    let mut peaks = Vec::new();
    let mut margins = Vec::new();
    for &s in &p.sigmas {
        let at: Vec<&OutlierRun> = runs.iter().filter(|r| r.sigma == s).collect();
        let peak = median(&at.iter().map(|r| r.influence_peak).collect::<Vec<_>>());
        let margin = median(&at.iter().map(|r| r.epsilon_i).collect::<Vec<_>>());
        checks.push(check(&format!("median_influence_peak_sigma_{}", g17(s)), peak, "reported", true));
        checks.push(check(&format!("median_epsilon_i_sigma_{}", g17(s)), margin, "reported", true));
        peaks.push(peak);
        margins.push(margin);
    }
    let peak_ok = strictly_decreasing(&peaks);
    let margin_ok = strictly_decreasing(&margins);
    checks.push(check("influence_peak_decreasing", f64::from(u8::from(peak_ok)), "== 1", peak_ok));
    checks.push(check("epsilon_i_decreasing", f64::from(u8::from(margin_ok)), "== 1", margin_ok));
    Ok(ExperimentReport {
        name: "theorem1".into(),
        header: "sigma,seed,planted_index,influence_peak,top_loo_index,epsilon_i".into(),
        rows,
        checks,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig2Params {
    pub synth: SynthSpec,
    pub train: TrainConfig,
    pub hidden_dim: usize,
    pub lambdas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub influence_checkpoints: usize,
}

impl Default for Fig2Params {
    fn default() -> Self {
        Self {
            synth: SynthSpec { num_languages: 4, tuples: 50, dim: 16, classes: 2, ..SynthSpec::default() },
            train: TrainConfig { base_lr: 0.5, total_steps: 300, noise_multiplier: 0.0, ..TrainConfig::default() },
            hidden_dim: 0,
            lambdas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            seeds: (0..10).collect(),
            influence_checkpoints: 3,
        }
    }
}

impl Fig2Params {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let base = Self::default();
        Ok(Self {
            synth: cfg.synth_spec(base.synth)?,
            train: cfg.train_config(base.train)?,
            hidden_dim: hidden_dim(cfg)?,
            lambdas: cfg.float_list("lambdas").unwrap_or(base.lambdas),
            seeds: seed_list(cfg, 0..10),
            influence_checkpoints: checkpoint_count(cfg, base.influence_checkpoints),
        })
    }
}

/// Mean retrieval precision and mean InfU of one trained run.
pub fn compression_point(p: &Fig2Params, lambda: f64, seed: u64) -> Result<(f64, f64)> {
    let synth = SynthSpec { lambda, seed: p.synth.seed.wrapping_add(seed), ..p.synth.clone() };
    let (set, labels) = gen_parallel_set(&synth)?;
    let data = dataset_from_set(&set, &labels)?;
    let spec = ModelSpec { input_dim: synth.dim, hidden_dim: p.hidden_dim, num_classes: synth.classes };
    let cfg = TrainConfig { seed, ..p.train.clone() };
    let (_, cks) = train_checkpoints(&data, &spec, &cfg, p.influence_checkpoints)?;
    let retrieval = pairwise_report(&set, MetricKind::Retrieval)?.aggregate;
    let profiles = dataset_profiles(&data, &cks, &spec)?;
    let infu = profiles.iter().map(|pr| pr.infu).sum::<f64>() / profiles.len() as f64;
    Ok((retrieval, infu))
}

pub fn fig2_correlation(p: &Fig2Params) -> Result<ExperimentReport> {
    let jobs: Vec<(f64, u64)> = p.lambdas.iter().flat_map(|&l| p.seeds.iter().map(move |&s| (l, s))).collect();
    let points: Vec<(f64, f64)> =
        jobs.par_iter().map(|&(l, s)| compression_point(p, l, s)).collect::<Result<_>>()?;
    let rows = jobs
        .iter()
        .zip(&points)
        .map(|((l, s), (r, i))| format!("{},{s},{},{}", g17(*l), g17(*r), g17(*i)))
        .collect();
    let retrieval: Vec<f64> = points.iter().map(|p| p.0).collect();
    let infu: Vec<f64> = points.iter().map(|p| p.1).collect();
    let r = pearson(&retrieval, &infu)?;
    let checks = vec![check("pearson_r", r.rho, ">= 0.8", !r.degenerate && r.rho >= 0.8)];
    Ok(ExperimentReport { name: "fig2-correlation".into(), header: "lambda,seed,retrieval,infu".into(), rows, checks })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LooAgreementParams {
    pub synth: SynthSpec,
    pub train: TrainConfig,
    pub influence_checkpoints: usize,
}

impl Default for LooAgreementParams {
    fn default() -> Self {
        Self {
            synth: SynthSpec { num_languages: 2, tuples: 16, dim: 8, classes: 2, lambda: 0.5, ..SynthSpec::default() },
            train: TrainConfig {
                optimizer: Optimizer::Sgd,
                base_lr: 0.5,
                warmup_steps: 0,
                total_steps: 300,
                batch_size: 32,
                clip_threshold: 1e6,
                weight_decay: 0.0,
                checkpoint_interval: 10,
                ..TrainConfig::default()
            },
            influence_checkpoints: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LooAgreement {
    pub self_influence: Vec<f64>,
    /// Leave-one-out effect of each example on its own label probability.
    pub loo: Vec<f64>,
    pub spearman: f64,
}

/// Self-influence against self leave-one-out on a linear model without noise.
pub fn loo_agreement(p: &LooAgreementParams) -> Result<LooAgreement> {
    let data = gen_classification_data(&p.synth)?;
    let spec = ModelSpec::linear(p.synth.dim, p.synth.classes);
    let cfg = TrainConfig { noise_multiplier: 0.0, target_epsilon: None, ..p.train.clone() };
    let (_, cks) = train_checkpoints(&data, &spec, &cfg, p.influence_checkpoints)?;
    let self_inf: Vec<f64> =
        (0..data.len()).map(|i| self_influence(Example::from_dataset(&data, i), &cks, &spec)).collect::<Result<_>>()?;
    let loo: Vec<f64> = (0..data.len())
        .into_par_iter()
        .map(|i| LooOracle::new(&data, spec, cfg.clone(), data.x(i), data.labels[i])?.influence(i))
        .collect::<Result<_>>()?;
    let magnitudes: Vec<f64> = loo.iter().map(|v| v.abs()).collect();
    let rho = spearman_rho(&self_inf, &magnitudes)?.rho;
    Ok(LooAgreement { self_influence: self_inf, loo, spearman: rho })
}

pub fn run(name: ExperimentName, cfg: &RunConfig) -> Result<ExperimentReport> {
    match name {
        ExperimentName::Theorem1 => theorem1(&Theorem1Params::from_config(cfg)?),
        ExperimentName::Theorem2 => theorem2(&Theorem2Params::from_config(cfg)?),
        ExperimentName::Fig2Correlation => fig2_correlation(&Fig2Params::from_config(cfg)?),
    }
}
