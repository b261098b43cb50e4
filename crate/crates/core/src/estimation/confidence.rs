use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Bounds;

/// Confidence-region settings shared by the estimators and the agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceConfig {
    /// Tail probability.
    pub delta: f64,
    /// Unscaled ellipsoid radius for the conversion vectors.
    pub gamma: f64,
    /// Truncation threshold of the online Newton update.
    pub truncation: f64,
    /// Multiplier applied to every confidence width.
    pub width_scale: f64,
}

impl ConfidenceConfig {
    /// Theory constants for `customers` customers, optionally overridden.
    pub fn new(
        bounds: &Bounds,
        customers: usize,
        delta: f64,
        width_scale: f64,
        gamma: Option<f64>,
        truncation: Option<f64>,
    ) -> Result<Self> {
        let cfg = Self {
            delta,
            gamma: gamma.unwrap_or_else(|| theta_gamma(bounds, customers, delta, 1.0)),
            truncation: truncation
                .unwrap_or_else(|| truncation_threshold(bounds, customers, delta)),
            width_scale,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if !(self.width_scale >= 0.0 && self.width_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "width_scale must be a finite nonnegative number, got {}",
                self.width_scale
            )));
        }
        if !(self.gamma >= 0.0 && self.truncation > 0.0) {
            return Err(Error::InvalidConfig(
                "gamma and truncation must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Ellipsoid radius actually used for optimism.
    pub fn scaled_gamma(&self) -> f64 {
        self.width_scale * self.gamma
    }
}

fn log_design_growth(dim: f64, customers: f64) -> f64 {
    (1.0 + customers / (2.0 * dim)).ln()
}

/// Radius `gamma` of the conversion-vector confidence ellipsoid, times `width_scale`.
pub fn theta_gamma(bounds: &Bounds, customers: usize, delta: f64, width_scale: f64) -> f64 {
    let d = bounds.dim as f64;
    let t = customers as f64;
    let bxt = bounds.context_bound * bounds.theta_bound;
    let growth = log_design_growth(d, t);
    let value = 896.0 * d * bxt * (1.0 + bxt) * (4.0 * t / delta).ln() * growth
        + 2.0 * bxt * bxt
        + 48.0 * d * bxt * growth;
    width_scale * value
}

/// Truncation threshold of the online Newton update.
pub fn truncation_threshold(bounds: &Bounds, customers: usize, delta: f64) -> f64 {
    let d = bounds.dim as f64;
    let t = customers as f64;
    let bxt = bounds.context_bound * bounds.theta_bound;
    2.0 * (bxt * (1.0 + bxt) * (4.0 * t / delta).ln() * d * log_design_growth(d, t)).sqrt()
}

/// Half-width of the delay-factor confidence interval after `n` observations.
///
/// `gamma` is the unscaled ellipsoid radius; `width_scale` is applied once to
/// the whole expression. Returns infinity when `n = 0`.
pub fn delay_radius(
    n: u64,
    gamma: f64,
    bounds: &Bounds,
    customers: usize,
    delta: f64,
    width_scale: f64,
) -> f64 {
    if n == 0 {
        return f64::INFINITY;
    }
    let d = bounds.dim as f64;
    let h = bounds.horizon as f64;
    let first_stage =
        4.0 * h * bounds.delay_bound * (d * log_design_growth(d, customers as f64) * gamma).sqrt();
    let poisson = (2.0
        * std::f64::consts::E
        * bounds.delay_bound
        * bounds.context_bound
        * bounds.theta_bound
        * (2.0 / delta).ln())
    .sqrt();
    width_scale * (first_stage + poisson) / (bounds.b * (n as f64).sqrt())
}

/// Exploration block size `ceil(32 log(H T) / (e B_d B_x B_theta b^2))`.
pub fn exploration_block_size(bounds: &Bounds, customers: usize) -> usize {
    let ht = (bounds.horizon * customers) as f64;
    let denom = std::f64::consts::E
        * bounds.delay_bound
        * bounds.context_bound
        * bounds.theta_bound
        * bounds.b
        * bounds.b;
    (32.0 * ht.ln() / denom).ceil().max(1.0) as usize
}
