//! Rényi-DP accounting for the sampled Gaussian mechanism, conversion to
//! (ε, δ)-DP, and the noise-multiplier search used to hit a target ε.

use crate::error::{Error, Result};

/// Integer orders 2..=512.
pub fn default_orders() -> Vec<u32> {
    (2..=512).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MechanismParams {
    /// Sampling rate `B / N`.
    pub q: f64,
    pub sigma: f64,
    pub steps: u64,
    pub delta: f64,
    pub orders: Vec<u32>,
}

impl MechanismParams {
    pub fn new(q: f64, sigma: f64, steps: u64, delta: f64) -> Self {
        Self { q, sigma, steps, delta, orders: default_orders() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::Domain(format!("sampling rate {} not in (0, 1]", self.q)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Domain(format!("noise multiplier {} must be positive", self.sigma)));
        }
        if self.steps == 0 {
            return Err(Error::Domain("steps must be positive".into()));
        }
        check_delta(self.delta)?;
        check_orders(&self.orders)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacySpending {
    pub epsilon: f64,
    pub best_order: u32,
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("delta {delta} not in (0, 1)")))
    }
}

fn check_orders(orders: &[u32]) -> Result<()> {
    if orders.is_empty() {
        return Err(Error::EmptyOrders);
    }
    if orders[0] < 2 || orders.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("orders must be strictly ascending integers >= 2".into()));
    }
    Ok(())
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max == f64::INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// One-step RDP of the sampled Gaussian mechanism at integer order `alpha`:
/// `1/(α-1) · ln Σ_k C(α,k) (1-q)^(α-k) q^k exp(k(k-1) / (2σ²))`.
pub fn rdp_step(q: f64, sigma: f64, alpha: u32) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(format!("sampling rate {q} not in [0, 1]")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Domain(format!("noise multiplier {sigma} must be positive")));
    }
    if alpha < 2 {
        return Err(Error::Domain(format!("order {alpha} must be an integer >= 2")));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    let a = alpha as f64;
    let ln_q = q.ln();
    let ln_1mq = (-q).ln_1p();
    // x^0 contributes 1 even when x == 0.
    let pow = |ln_base: f64, e: u32| if e == 0 { 0.0 } else { e as f64 * ln_base };
    let mut ln_binom = 0.0;
    let mut terms = Vec::with_capacity(alpha as usize + 1);
    for k in 0..=alpha {
        if k > 0 {
            ln_binom += ((alpha - k + 1) as f64).ln() - (k as f64).ln();
        }
        let kf = k as f64;
        terms.push(
            ln_binom + pow(ln_1mq, alpha - k) + pow(ln_q, k) + kf * (kf - 1.0) / (2.0 * sigma * sigma),
        );
    }
    Ok((log_sum_exp(&terms) / (a - 1.0)).max(0.0))
}

/// RDP composes additively over steps.
pub fn compose(per_step_rdp: f64, steps: u64) -> f64 {
    per_step_rdp * steps as f64
}

/// Converts RDP values to (ε, δ)-DP using
/// `ε = min_α [ rdp(α) + ln(1 - 1/α) - (ln δ + ln α) / (α - 1) ]`, floored at 0.
pub fn rdp_to_dp(rdp_at_orders: &[(u32, f64)], delta: f64) -> Result<PrivacySpending> {
    if rdp_at_orders.is_empty() {
        return Err(Error::EmptyOrders);
    }
    check_delta(delta)?;
    let mut best: Option<PrivacySpending> = None;
    for &(alpha, rdp) in rdp_at_orders {
        if alpha < 2 {
            return Err(Error::Domain(format!("order {alpha} must be >= 2")));
        }
        let a = alpha as f64;
        let eps = rdp + (1.0 - 1.0 / a).ln() - (delta.ln() + a.ln()) / (a - 1.0);
        if !eps.is_finite() {
            continue;
        }
        if best.is_none_or(|b| eps < b.epsilon) {
            best = Some(PrivacySpending { epsilon: eps, best_order: alpha });
        }
    }
    let best = best.ok_or(Error::Unbounded)?;
    Ok(PrivacySpending { epsilon: best.epsilon.max(0.0), ..best })
}

pub fn epsilon_for(params: &MechanismParams) -> Result<PrivacySpending> {
    params.validate()?;
    let rdp = params
        .orders
        .iter()
        .map(|&a| Ok((a, compose(rdp_step(params.q, params.sigma, a)?, params.steps))))
        .collect::<Result<Vec<_>>>()?;
    rdp_to_dp(&rdp, params.delta)
}

/// Bisection settings for [`sigma_for`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaSearch {
    pub lo: f64,
    pub hi: f64,
    /// Stop once `(target - ε(σ)) / target` falls below this.
    pub rel_tol: f64,
}

impl Default for SigmaSearch {
    fn default() -> Self {
        Self { lo: 1e-3, hi: 1e3, rel_tol: 1e-4 }
    }
}

/// Smallest noise multiplier whose ε does not exceed `target_epsilon`.
/// An infinite target returns 0 (non-private training).
pub fn sigma_for(
    target_epsilon: f64,
    q: f64,
    steps: u64,
    delta: f64,
    orders: &[u32],
    search: SigmaSearch,
) -> Result<f64> {
    if target_epsilon == f64::INFINITY {
        return Ok(0.0);
    }
    if !(target_epsilon > 0.0) {
        return Err(Error::Domain(format!("target epsilon {target_epsilon} must be positive")));
    }
    let eps = |sigma: f64| {
        let params = MechanismParams { q, sigma, steps, delta, orders: orders.to_vec() };
        epsilon_for(&params).map(|s| s.epsilon)
    };
    let unsat = Error::Unsatisfiable { target: target_epsilon, lo: search.lo, hi: search.hi };
    let (mut lo, mut hi) = (search.lo, search.hi);
    let mut eps_hi = eps(hi)?;
    if eps_hi > target_epsilon || eps(lo)? <= target_epsilon {
        return Err(unsat);
    }
    // Invariant: ε(lo) > target >= ε(hi). Bisect in log space.
    for _ in 0..200 {
        if (target_epsilon - eps_hi) / target_epsilon <= search.rel_tol || hi / lo - 1.0 < 1e-14 {
            break;
        }
        let mid = (lo * hi).sqrt();
        let e = eps(mid)?;
        if e <= target_epsilon {
            hi = mid;
            eps_hi = e;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
