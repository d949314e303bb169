use std::fmt;
use std::str::FromStr;

use crate::error::Error;

use super::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    Sgd,
    AdamW,
}

impl fmt::Display for Optimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Optimizer::Sgd => "sgd",
            Optimizer::AdamW => "adamw",
        })
    }
}

impl FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "sgd" => Ok(Optimizer::Sgd),
            "adamw" => Ok(Optimizer::AdamW),
            other => Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

/// Parameters plus AdamW moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub theta: Vec<f64>,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub steps_taken: u64,
}

impl OptimizerState {
    pub fn new(theta: Vec<f64>) -> Self {
        let n = theta.len();
        Self { theta, first_moment: vec![0.0; n], second_moment: vec![0.0; n], steps_taken: 0 }
    }
}

/// SGD: `θ ← θ − η g − η λ θ`. AdamW: bias-corrected moments with decoupled decay.
pub fn optimizer_step(state: &mut OptimizerState, grad: &[f64], eta: f64, config: &TrainConfig) {
    state.steps_taken += 1;
    let wd = config.weight_decay;
    match config.optimizer {
        Optimizer::Sgd => {
            for (t, g) in state.theta.iter_mut().zip(grad) {
                *t -= eta * g + eta * wd * *t;
            }
        }
        Optimizer::AdamW => {
            let (b1, b2) = (config.adam_beta1, config.adam_beta2);
            let k = state.steps_taken as i32;
            let c1 = 1.0 - b1.powi(k);
            let c2 = 1.0 - b2.powi(k);
            for i in 0..state.theta.len() {
                let g = grad[i];
                let m = b1 * state.first_moment[i] + (1.0 - b1) * g;
                let v = b2 * state.second_moment[i] + (1.0 - b2) * g * g;
                state.first_moment[i] = m;
                state.second_moment[i] = v;
                let update = (m / c1) / ((v / c2).sqrt() + config.adam_eps);
                let t = &mut state.theta[i];
                *t -= eta * (update + wd * *t);
            }
        }
    }
}
