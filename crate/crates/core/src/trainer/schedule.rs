use crate::error::{Error, Result};

use super::TrainConfig;

/// Linear warm-up to `base_lr` over `warmup_steps`, then linear decay to 0
/// at `total_steps`.
pub fn lr_at(step: usize, config: &TrainConfig) -> Result<f64> {
    let (warmup, total) = (config.warmup_steps, config.total_steps);
    if step > total {
        return Err(Error::OutOfRange { step, total });
    }
    let base = config.base_lr;
    if step <= warmup {
        if warmup == 0 {
            return Ok(base);
        }
        return Ok(base * step as f64 / warmup as f64);
    }
    Ok(base * (total - step) as f64 / (total - warmup) as f64)
}
