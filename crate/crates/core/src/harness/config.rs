use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agent::{AgentConfig, PlannerMode};
use crate::environment::{BidMode, InstanceSpec};
use crate::error::{Error, Result};
use crate::estimation::{exploration_block_size, ConfidenceConfig};
use crate::model::Bounds;
use crate::planning::default_bid_grid;

/// Policies a run can compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// The optimistic learning agent.
    Learner,
    Aggressive,
    Random,
    Passive,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::Learner,
        PolicyKind::Aggressive,
        PolicyKind::Random,
        PolicyKind::Passive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Learner => "learner",
            PolicyKind::Aggressive => "aggressive",
            PolicyKind::Random => "random",
            PolicyKind::Passive => "passive",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown policy {s:?}")))
    }
}

/// Bid semantics of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BidSemantics {
    /// Wins and losses are forced; a forced win pays the realized HOB.
    ForcedOutcome,
    /// Real second-price bids capped at `max_bid`.
    Auction,
}

/// Scalar bounds of the config file; horizon and dimension live at the top level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsConfig {
    pub b: f64,
    pub context_bound: f64,
    pub theta_bound: f64,
    pub delay_bound: f64,
    pub max_bid: f64,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            b: 0.01,
            context_bound: 10.0,
            theta_bound: 10.0,
            delay_bound: 5.0,
            max_bid: 100.0,
        }
    }
}

/// Full description of an experiment. Every key is optional in the TOML file
/// and defaults to the reference preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub horizon: usize,
    /// Customers per trial.
    pub customers: usize,
    pub trials: usize,
    pub seed: u64,
    pub bounds: BoundsConfig,
    pub instance: InstanceSpec,
    /// Exploration block size; derived from the bounds when absent.
    pub n_underbar: Option<usize>,
    pub delta: f64,
    pub width_scale: f64,
    /// Overrides the theoretical ellipsoid radius.
    pub gamma: Option<f64>,
    /// Overrides the theoretical truncation threshold.
    pub truncation: Option<f64>,
    pub planner: PlannerMode,
    pub bid_mode: BidSemantics,
    /// Log-spaced points of the DP bid grid (plus zero).
    pub grid_size: usize,
    pub sigma_floor: f64,
    pub policies: Vec<PolicyKind>,
    /// Checkpoints for the summary table and the order fit; scaled from the
    /// reference grid when absent.
    pub checkpoints: Option<Vec<usize>>,
    /// Multiple of the cross-trial standard deviation reported as half-width.
    pub half_width: f64,
    /// Customers per trial on which the grid-DP oracle is compared against
    /// the outcome oracle.
    pub oracle_gap_samples: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            horizon: 3,
            customers: 20_000,
            trials: 5,
            seed: 2024,
            bounds: BoundsConfig::default(),
            instance: InstanceSpec::default(),
            n_underbar: Some(600),
            delta: 0.01,
            width_scale: 1e-9,
            gamma: None,
            truncation: Some(100_000.0),
            planner: PlannerMode::Outcome,
            bid_mode: BidSemantics::ForcedOutcome,
            grid_size: 256,
            sigma_floor: AgentConfig::DEFAULT_SIGMA_FLOOR,
            policies: PolicyKind::ALL.to_vec(),
            checkpoints: None,
            half_width: 0.5,
            oracle_gap_samples: 50,
        }
    }
}

const REFERENCE_CHECKPOINTS: [usize; 5] = [500, 5000, 10_000, 15_000, 20_000];
const REFERENCE_CUSTOMERS: usize = 20_000;

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn bounds(&self) -> Bounds {
        Bounds {
            b: self.bounds.b,
            context_bound: self.bounds.context_bound,
            theta_bound: self.bounds.theta_bound,
            delay_bound: self.bounds.delay_bound,
            max_bid: self.bounds.max_bid,
            horizon: self.horizon,
            dim: self.dim,
        }
    }

    pub fn bid_mode(&self) -> BidMode {
        match self.bid_mode {
            BidSemantics::ForcedOutcome => BidMode::ForcedOutcome,
            BidSemantics::Auction => BidMode::Auction {
                max_bid: self.bounds.max_bid,
            },
        }
    }

    pub fn n_underbar(&self) -> usize {
        self.n_underbar
            .unwrap_or_else(|| exploration_block_size(&self.bounds(), self.customers))
    }

    pub fn checkpoints(&self) -> Vec<usize> {
        match &self.checkpoints {
            Some(c) => c.clone(),
            None => scaled_checkpoints(self.customers),
        }
    }

    pub fn bid_grid(&self) -> Vec<f64> {
        default_bid_grid(self.bounds.b, self.bounds.max_bid, self.grid_size)
    }

    pub fn agent_config(&self) -> Result<AgentConfig> {
        let bounds = self.bounds();
        Ok(AgentConfig {
            bounds,
            customers: self.customers,
            n_underbar: self.n_underbar(),
            confidence: ConfidenceConfig::new(
                &bounds,
                self.customers,
                self.delta,
                self.width_scale,
                self.gamma,
                self.truncation,
            )?,
            planner: self.planner,
            bid_mode: self.bid_mode(),
            bid_grid: self.bid_grid(),
            sigma_floor: self.sigma_floor,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.bounds().validate()?;
        self.instance.validate()?;
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.customers == 0 {
            return bad("customers must be at least 1".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.n_underbar == Some(0) {
            return bad("n_underbar must be at least 1".into());
        }
        if self.grid_size < 2 {
            return bad("grid_size must be at least 2".into());
        }
        if !(self.sigma_floor > 0.0) {
            return bad("sigma_floor must be positive".into());
        }
        if !(self.half_width >= 0.0) {
            return bad("half_width must be nonnegative".into());
        }
        if self.policies.is_empty() {
            return bad("at least one policy is required".into());
        }
        let mut seen = self.policies.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.policies.len() {
            return bad("policies must be distinct".into());
        }
        let cps = self.checkpoints();
        if cps.is_empty()
            || cps.windows(2).any(|w| w[0] >= w[1])
            || cps[0] == 0
            || *cps.last().unwrap_or(&0) > self.customers
        {
            return bad(format!(
                "checkpoints must be strictly increasing within 1..={}, got {cps:?}",
                self.customers
            ));
        }
        ConfidenceConfig::new(
            &self.bounds(),
            self.customers,
            self.delta,
            self.width_scale,
            self.gamma,
            self.truncation,
        )?;
        Ok(())
    }
}

/// The reference checkpoints rescaled to `customers`, deduplicated.
pub fn scaled_checkpoints(customers: usize) -> Vec<usize> {
    let mut out: Vec<usize> = REFERENCE_CHECKPOINTS
        .iter()
        .map(|&c| {
            let scaled = (c as u128 * customers as u128 + REFERENCE_CUSTOMERS as u128 / 2)
                / REFERENCE_CUSTOMERS as u128;
            (scaled as usize).clamp(1, customers)
        })
        .collect();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_preset() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.checkpoints(), vec![500, 5000, 10_000, 15_000, 20_000]);
        assert_eq!(cfg.agent_config().unwrap().exploration_customers(), 2400);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml_str("horizonn = 3").is_err());
        assert!(ExperimentConfig::from_toml_str("[bounds]\nbb = 1.0").is_err());
    }

    #[test]
    fn nested_keys_parse() {
        let cfg = ExperimentConfig::from_toml_str(
            "customers = 2000\npolicies = [\"learner\", \"passive\"]\nbid_mode = \"auction\"\n\
             [instance.theta]\nscale = 2.0\noffset = 0.5\n",
        )
        .unwrap();
        assert_eq!(cfg.checkpoints(), vec![50, 500, 1000, 1500, 2000]);
        assert_eq!(cfg.instance.theta.scale, 2.0);
        assert_eq!(cfg.bid_mode(), BidMode::Auction { max_bid: 100.0 });
    }

    #[test]
    fn bad_checkpoints_rejected() {
        assert!(ExperimentConfig::from_toml_str("checkpoints = [10, 5]").is_err());
        assert!(ExperimentConfig::from_toml_str("checkpoints = [30000]").is_err());
        assert!(ExperimentConfig::from_toml_str("trials = 0").is_err());
    }
}
