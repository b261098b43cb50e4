//! The learning agent (explore, then plan optimistically, estimating after
//! every customer) and the fixed baseline policies.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{BidMode, BidRule, EpisodeLog};
use crate::error::{Error, Result};
use crate::estimation::{
    delay_radius, split_episode, ConfidenceConfig, DelayObservation, EstimatorBank,
};
use crate::model::{
    AuctionModel, Bounds, Context, ExposureState, HobDistribution, Recency, ThetaIndex, TrueModel,
};
use crate::planning::{best_outcome_plan, dp_policy, OutcomePlan, PlanParams, PolicyTable};

/// Planner used during exploitation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlannerMode {
    /// Enumerate outcome plans.
    Outcome,
    /// Dynamic program over the bid grid.
    Dp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub bounds: Bounds,
    /// Total number of customers `T` the constants are tuned for.
    pub customers: usize,
    /// Exploration block size; exploration covers `(H + 1) * n_underbar` customers.
    pub n_underbar: usize,
    pub confidence: ConfidenceConfig,
    pub planner: PlannerMode,
    pub bid_mode: BidMode,
    /// Ascending bid grid used by the DP planner.
    pub bid_grid: Vec<f64>,
    /// Lower bound on the estimated HOB scale when planning.
    pub sigma_floor: f64,
}

impl AgentConfig {
    pub const DEFAULT_SIGMA_FLOOR: f64 = 1e-3;

    pub fn exploration_customers(&self) -> usize {
        (self.bounds.horizon + 1) * self.n_underbar
    }
}

/// Exploration outcome plan for customer `t` (1-based).
///
/// Block `l = min((t - 1) / n_underbar, H)`; block `H` loses every round,
/// otherwise rounds 1 and `l + 1` are won.
pub fn exploration_plan(t: usize, n_underbar: usize, horizon: usize) -> OutcomePlan {
    let block = (t.saturating_sub(1) / n_underbar.max(1)).min(horizon);
    let mut plan = OutcomePlan::all_lose(horizon);
    if block < horizon {
        plan.0[0] = true;
        plan.0[block] = true;
    }
    plan
}

/// What the agent does with one customer.
#[derive(Debug, Clone, PartialEq)]
pub enum EpisodePolicy {
    Plan(OutcomePlan),
    Table(PolicyTable),
}

impl BidRule for EpisodePolicy {
    fn bid(&self, h: usize, state: &ExposureState) -> f64 {
        match self {
            EpisodePolicy::Plan(p) => p.bid(h, state),
            EpisodePolicy::Table(t) => t.bid(h, state),
        }
    }
}

/// Learner state. `customers_seen` counts ingested episodes; the next
/// customer is `customers_seen + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub config: AgentConfig,
    pub bank: EstimatorBank,
    pub customers_seen: usize,
}

/// Serializable part of an agent's state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSnapshot {
    pub customers_seen: usize,
    pub estimators: EstimatorBank,
}

impl Agent {
    pub fn new(config: AgentConfig) -> Self {
        let bank = EstimatorBank::new(config.bounds.dim, config.bounds.horizon);
        Self {
            config,
            bank,
            customers_seen: 0,
        }
    }

    pub fn snapshot(&self) -> AgentSnapshot {
        AgentSnapshot {
            customers_seen: self.customers_seen,
            estimators: self.bank.clone(),
        }
    }

    pub fn restore(config: AgentConfig, snapshot: AgentSnapshot) -> Self {
        Self {
            config,
            bank: snapshot.estimators,
            customers_seen: snapshot.customers_seen,
        }
    }

    pub fn next_customer(&self) -> usize {
        self.customers_seen + 1
    }

    pub fn is_exploring(&self) -> bool {
        self.next_customer() <= self.config.exploration_customers()
    }

    /// Point estimates without optimism.
    pub fn point_params(&self, x: &Context) -> PlanParams {
        let b = &self.config.bounds;
        PlanParams {
            mu: self.bank.theta.iter().map(|e| e.mean(x)).collect(),
            delay: self
                .bank
                .delay
                .iter()
                .map(|e| e.estimate().unwrap_or(0.0))
                .collect(),
            hob: self.estimated_hob(x),
        }
        .clamp_delays(b.delay_bound)
    }

    fn estimated_hob(&self, x: &Context) -> Vec<HobDistribution> {
        self.bank
            .auction
            .iter()
            .map(|e| {
                let scale = e.sigma().unwrap_or(0.0).max(self.config.sigma_floor);
                HobDistribution::new(e.predict(x), scale)
            })
            .collect()
    }

    /// Optimistic planning inputs: upper confidence conversion means and
    /// delay factors, with the estimated HOB law.
    pub fn optimistic_params(&self, x: &Context) -> PlanParams {
        let cfg = &self.config;
        let b = &cfg.bounds;
        let gamma = cfg.confidence.scaled_gamma();
        let mu = self
            .bank
            .theta
            .iter()
            .map(|e| e.optimistic_mean(x, gamma, b.b))
            .collect();
        let delay = self
            .bank
            .delay
            .iter()
            .map(|e| match e.estimate() {
                Some(d) => {
                    let radius = delay_radius(
                        e.count,
                        cfg.confidence.gamma,
                        b,
                        cfg.customers,
                        cfg.confidence.delta,
                        cfg.confidence.width_scale,
                    );
                    (d + radius).clamp(0.0, b.delay_bound)
                }
                None => b.delay_bound,
            })
            .collect();
        PlanParams {
            mu,
            delay,
            hob: self.estimated_hob(x),
        }
    }

    /// Policy for the next customer.
    pub fn act(&self, x: &Context) -> Result<EpisodePolicy> {
        let horizon = self.config.bounds.horizon;
        if self.is_exploring() {
            return Ok(EpisodePolicy::Plan(exploration_plan(
                self.next_customer(),
                self.config.n_underbar,
                horizon,
            )));
        }
        let params = self.optimistic_params(x);
        Ok(match self.config.planner {
            PlannerMode::Outcome => EpisodePolicy::Plan(best_outcome_plan(&params)?.0),
            PlannerMode::Dp => EpisodePolicy::Table(dp_policy(&params, &self.config.bid_grid)),
        })
    }

    /// Ingests the episode of the next customer.
    pub fn update(&mut self, log: &EpisodeLog) -> Result<()> {
        if log.customer != self.next_customer() {
            return Err(Error::OutOfOrder {
                expected: self.next_customer(),
                got: log.customer,
            });
        }
        self.ingest(log)
    }

    /// Ingests an episode without the ordering check.
    pub fn ingest(&mut self, log: &EpisodeLog) -> Result<()> {
        let b = self.config.bounds;
        if log.records.len() != b.horizon || log.context.dim() != b.dim {
            return Err(Error::Domain(format!(
                "episode of customer {} does not match horizon {} / dim {}",
                log.customer, b.horizon, b.dim
            )));
        }
        let x = &log.context;

        for rec in &log.records {
            self.bank.auction[rec.h - 1].ridge_update(x, rec.hob.ln());
        }

        let split = split_episode(log);
        for (slot, rounds) in split.win.iter().enumerate() {
            let index = ThetaIndex::from_slot(slot);
            for &h in rounds {
                let rec = &log.records[h - 1];
                let routed = if rec.won {
                    rec.state.win_index() == index
                } else {
                    index == ThetaIndex::NaturalDemand && rec.state.since_last == Recency::Never
                };
                if !routed {
                    return Err(Error::Provenance(format!(
                        "round {h} in state {} routed to theta[{index}]",
                        rec.state
                    )));
                }
                self.bank.theta[slot].crtm_update(
                    x,
                    rec.conversions as f64,
                    self.config.confidence.truncation,
                    b.theta_bound,
                );
            }
        }

        for (i, rounds) in split.delay.iter().enumerate() {
            let lag = i + 1;
            let mut observations = Vec::with_capacity(rounds.len());
            for &h in rounds {
                let rec = &log.records[h - 1];
                if rec.won || rec.state.since_last != Recency::Lag(lag) {
                    return Err(Error::Provenance(format!(
                        "round {h} in state {} routed to delay[{lag}]",
                        rec.state
                    )));
                }
                observations.push(DelayObservation {
                    conversions: rec.conversions as f64,
                    carried: rec.state.lose_index(),
                });
            }
            if !observations.is_empty() {
                self.bank.delay[i].tsmle_update(&observations, x, &self.bank.theta, b.b);
            }
        }

        self.customers_seen += 1;
        Ok(())
    }

    /// Overwrites the estimators with the true parameters (testing aid).
    pub fn inject_truth(&mut self, model: &TrueModel, auction: &AuctionModel) {
        for (est, theta) in self.bank.theta.iter_mut().zip(&model.theta) {
            est.theta_hat = theta.clone();
        }
        for (est, &d) in self.bank.delay.iter_mut().zip(&model.delay) {
            est.numerator = d;
            est.denominator = 1.0;
            est.count = est.count.max(1);
        }
        for (est, (beta, &sigma)) in self
            .bank
            .auction
            .iter_mut()
            .zip(auction.beta.iter().zip(&auction.sigma))
        {
            let dim = beta.len();
            est.gram = crate::estimation::identity(dim, 1.0);
            est.moment = beta.clone();
            est.residual_sq_sum = sigma * sigma;
            est.count = 1;
        }
    }
}

impl PlanParams {
    fn clamp_delays(mut self, cap: f64) -> Self {
        self.delay.iter_mut().for_each(|d| *d = d.clamp(0.0, cap));
        self
    }
}

/// Non-adaptive comparison policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselinePolicy {
    /// Win every round.
    Aggressive,
    /// Uniform over all outcome plans.
    Random,
    /// Lose every round.
    Passive,
}

pub fn baseline_act<R: Rng + ?Sized>(
    policy: BaselinePolicy,
    horizon: usize,
    rng: &mut R,
) -> OutcomePlan {
    match policy {
        BaselinePolicy::Aggressive => OutcomePlan::all_win(horizon),
        BaselinePolicy::Passive => OutcomePlan::all_lose(horizon),
        BaselinePolicy::Random => {
            OutcomePlan::from_code(rng.random_range(0..(1u64 << horizon)), horizon)
        }
    }
}
