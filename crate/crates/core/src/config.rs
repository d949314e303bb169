//! Flat `key = value` run configuration.
//!
//! Keys mirror the field names of [`TrainConfig`], [`SynthSpec`] and the
//! accountant parameters. Unknown keys and unparsable values are rejected
//! at parse time. `#` starts a comment line.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::synth::SynthSpec;
use crate::trainer::{ClipMode, ModelSpec, Optimizer, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Float,
    Int,
    Optimizer,
    ClipMode,
    FloatList,
    IntList,
}

const KEYS: &[(&str, Kind)] = &[
    // training
    ("base_lr", Kind::Float),
    ("warmup_steps", Kind::Int),
    ("total_steps", Kind::Int),
    ("batch_size", Kind::Int),
    ("clip_threshold", Kind::Float),
    ("noise_multiplier", Kind::Float),
    ("weight_decay", Kind::Float),
    ("optimizer", Kind::Optimizer),
    ("adam_beta1", Kind::Float),
    ("adam_beta2", Kind::Float),
    ("adam_eps", Kind::Float),
    ("clip_mode", Kind::ClipMode),
    ("seed", Kind::Int),
    ("noise_seed", Kind::Int),
    ("checkpoint_interval", Kind::Int),
    ("target_epsilon", Kind::Float),
    ("delta", Kind::Float),
    ("hidden_dim", Kind::Int),
    // synthetic data
    ("num_languages", Kind::Int),
    ("tuples", Kind::Int),
    ("dim", Kind::Int),
    ("classes", Kind::Int),
    ("lambda", Kind::Float),
    ("noise_scale", Kind::Float),
    ("offset_scale", Kind::Float),
    ("data_seed", Kind::Int),
    // accountant
    ("q", Kind::Float),
    ("sigma", Kind::Float),
    ("steps", Kind::Int),
    // experiments
    ("seeds", Kind::IntList),
    ("lambdas", Kind::FloatList),
    ("sigmas", Kind::FloatList),
    ("outlier_magnitude", Kind::Float),
    ("influence_checkpoints", Kind::Int),
];

fn parse_float(s: &str) -> Option<f64> {
    f64::from_str(s).ok().filter(|v| !v.is_nan())
}

fn check_value(kind: Kind, v: &str) -> bool {
    let list_ok = |f: &dyn Fn(&str) -> bool| !v.is_empty() && v.split(',').all(|p| f(p.trim()));
    match kind {
        Kind::Float => parse_float(v).is_some(),
        Kind::Int => v.parse::<u64>().is_ok(),
        Kind::Optimizer => v.parse::<Optimizer>().is_ok(),
        Kind::ClipMode => v.parse::<ClipMode>().is_ok(),
        Kind::FloatList => list_ok(&|p| parse_float(p).is_some()),
        Kind::IntList => list_ok(&|p| p.parse::<u64>().is_ok()),
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected key = value", lineno + 1)));
            };
            let (key, value) = (key.trim(), value.trim());
            let Some(&(_, kind)) = KEYS.iter().find(|(k, _)| *k == key) else {
                return Err(Error::Config(format!("line {}: unknown key {key:?}", lineno + 1)));
            };
            if !check_value(kind, value) {
                return Err(Error::Config(format!("line {}: bad value {value:?} for {key}", lineno + 1)));
            }
            if values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {key}", lineno + 1)));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn float(&self, key: &str) -> Option<f64> {
        self.values.get(key).and_then(|v| parse_float(v))
    }

    pub fn int(&self, key: &str) -> Option<u64> {
        self.values.get(key).and_then(|v| v.parse().ok())
    }

    fn usize(&self, key: &str) -> Result<Option<usize>> {
        self.int(key)
            .map(|v| usize::try_from(v).map_err(|_| Error::Config(format!("{key} too large"))))
            .transpose()
    }

    pub fn float_list(&self, key: &str) -> Option<Vec<f64>> {
        self.values.get(key).map(|v| v.split(',').filter_map(|p| parse_float(p.trim())).collect())
    }

    pub fn int_list(&self, key: &str) -> Option<Vec<u64>> {
        self.values.get(key).map(|v| v.split(',').filter_map(|p| p.trim().parse().ok()).collect())
    }

    /// Overlays the configured training keys on `base`.
    pub fn train_config(&self, base: TrainConfig) -> Result<TrainConfig> {
        let mut c = base;
        macro_rules! set {
            ($field:ident, float) => {
                if let Some(v) = self.float(stringify!($field)) {
                    c.$field = v;
                }
            };
            ($field:ident, usize) => {
                if let Some(v) = self.usize(stringify!($field))? {
                    c.$field = v;
                }
            };
        }
        set!(base_lr, float);
        set!(warmup_steps, usize);
        set!(total_steps, usize);
        set!(batch_size, usize);
        set!(clip_threshold, float);
        set!(noise_multiplier, float);
        set!(weight_decay, float);
        set!(adam_beta1, float);
        set!(adam_beta2, float);
        set!(adam_eps, float);
        set!(checkpoint_interval, usize);
        if let Some(v) = self.values.get("optimizer") {
            c.optimizer = v.parse()?;
        }
        if let Some(v) = self.values.get("clip_mode") {
            c.clip_mode = v.parse()?;
        }
        if let Some(v) = self.int("seed") {
            c.seed = v;
        }
        if let Some(v) = self.int("noise_seed") {
            c.noise_seed = Some(v);
        }
        if let Some(v) = self.float("target_epsilon") {
            c.target_epsilon = Some(v);
        }
        if let Some(v) = self.float("delta") {
            c.delta = Some(v);
        }
        Ok(c)
    }

    pub fn model_spec(&self, input_dim: usize, num_classes: usize) -> Result<ModelSpec> {
        Ok(ModelSpec { input_dim, hidden_dim: self.usize("hidden_dim")?.unwrap_or(0), num_classes })
    }

    /// Overlays the configured synthetic-data keys on `base`.
    pub fn synth_spec(&self, base: SynthSpec) -> Result<SynthSpec> {
        let mut s = base;
        if let Some(v) = self.usize("num_languages")? {
            s.num_languages = v;
        }
        if let Some(v) = self.usize("tuples")? {
            s.tuples = v;
        }
        if let Some(v) = self.usize("dim")? {
            s.dim = v;
        }
        if let Some(v) = self.usize("classes")? {
            s.classes = v;
        }
        if let Some(v) = self.float("lambda") {
            s.lambda = v;
        }
        if let Some(v) = self.float("noise_scale") {
            s.noise_scale = v;
        }
        if let Some(v) = self.float("offset_scale") {
            s.offset_scale = v;
        }
        if let Some(v) = self.int("data_seed") {
            s.seed = v;
        }
        Ok(s)
    }
}
