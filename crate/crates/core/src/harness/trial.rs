use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, PolicyKind};
use crate::agent::{baseline_act, Agent, AgentSnapshot, BaselinePolicy};
use crate::environment::{
    generate_instance, run_episode, sample_context, BidMode, BidRule, EpisodeKey, EpisodeLog,
};
use crate::error::{Error, Result};
use crate::model::{AuctionModel, Context, ExposureState, ThetaIndex, TrueModel};
use crate::parallel::{map_indexed, Execution};
use crate::planning::{best_outcome_plan, dp_policy, evaluate_policy, PlanParams};
use crate::rng::{Purpose, RandomSource};

const MAX_CONTEXT_DRAWS: usize = 1000;

/// A generated instance, as written to `instance_{k}.snapshot`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    pub trial: usize,
    pub model: TrueModel,
    pub auction: AuctionModel,
}

/// Cumulative regret of one policy over the customers of a trial.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretCurve {
    pub policy: PolicyKind,
    /// Oracle value minus realized reward, accumulated.
    pub realized: Vec<f64>,
    /// Oracle value minus the expected reward of the chosen policy under the
    /// true parameters, accumulated.
    pub expected: Vec<f64>,
}

/// Outcome oracle minus grid-DP oracle on a subsample of customers.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OracleGap {
    pub samples: usize,
    pub mean: f64,
    pub max_abs: f64,
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub trial: usize,
    pub instance: Instance,
    pub curves: Vec<RegretCurve>,
    /// Learner episodes, when requested.
    pub logs: Option<Vec<EpisodeLog>>,
    /// Final learner state.
    pub agent: Option<AgentSnapshot>,
    pub oracle_gap: OracleGap,
    /// Delay-bucket sizes when exploration ended, by lag.
    pub exploration_counts: Option<Vec<u64>>,
}

impl TrialOutcome {
    pub fn curve(&self, policy: PolicyKind) -> Option<&RegretCurve> {
        self.curves.iter().find(|c| c.policy == policy)
    }
}

pub fn generate_trial_instance(config: &ExperimentConfig, trial: usize) -> Result<Instance> {
    let source = RandomSource::new(config.seed);
    let (model, auction) = generate_instance(
        &config.instance,
        &config.bounds(),
        &mut source.stream(trial, 0, 0, Purpose::Instance),
    )?;
    Ok(Instance {
        trial,
        model,
        auction,
    })
}

/// Context of customer `t`, clamped onto the context ball. In strict mode
/// draws whose smallest conversion mean falls below `b` are redrawn.
pub fn customer_context(
    config: &ExperimentConfig,
    model: &TrueModel,
    trial: usize,
    t: usize,
) -> Result<Context> {
    let source = RandomSource::new(config.seed);
    let mut rng = source.stream(trial, t, 0, Purpose::Context);
    for _ in 0..MAX_CONTEXT_DRAWS {
        let x = sample_context(&config.instance, config.dim, &mut rng)
            .clamp_norm(config.bounds.context_bound);
        let floor_ok =
            ThetaIndex::all(config.horizon).all(|i| model.mean(i, &x) >= config.bounds.b);
        if !config.instance.strict_bounds || floor_ok {
            return Ok(x);
        }
    }
    Err(Error::Domain(format!(
        "no context above the conversion floor after {MAX_CONTEXT_DRAWS} draws"
    )))
}

struct Capped<'a> {
    rule: &'a dyn BidRule,
    mode: BidMode,
}

impl BidRule for Capped<'_> {
    fn bid(&self, h: usize, state: &ExposureState) -> f64 {
        let raw = self.rule.bid(h, state);
        match self.mode {
            BidMode::Auction { max_bid } => raw.min(max_bid),
            BidMode::ForcedOutcome => raw,
        }
    }
}

fn expected_value(rule: &dyn BidRule, params: &PlanParams, mode: BidMode) -> f64 {
    evaluate_policy(&Capped { rule, mode }, params)
}

fn baseline_kind(policy: PolicyKind) -> Option<BaselinePolicy> {
    match policy {
        PolicyKind::Learner => None,
        PolicyKind::Aggressive => Some(BaselinePolicy::Aggressive),
        PolicyKind::Random => Some(BaselinePolicy::Random),
        PolicyKind::Passive => Some(BaselinePolicy::Passive),
    }
}

/// Runs every configured policy against the same instance, contexts and
/// noise streams of trial `trial`.
pub fn run_trial(config: &ExperimentConfig, trial: usize, emit_logs: bool) -> Result<TrialOutcome> {
    let source = RandomSource::new(config.seed);
    let instance = generate_trial_instance(config, trial)?;
    let (model, auction) = (&instance.model, &instance.auction);
    let agent_config = config.agent_config()?;
    let exploration_end = agent_config.exploration_customers();
    let n_underbar = agent_config.n_underbar;
    let mode = config.bid_mode();
    let mut agent = config
        .policies
        .contains(&PolicyKind::Learner)
        .then(|| Agent::new(agent_config));
    let mut logs = (emit_logs && agent.is_some()).then(Vec::new);
    let mut exploration_counts = None;

    let customers = config.customers;
    let mut curves: Vec<RegretCurve> = config
        .policies
        .iter()
        .map(|&policy| RegretCurve {
            policy,
            realized: Vec::with_capacity(customers),
            expected: Vec::with_capacity(customers),
        })
        .collect();
    let mut totals = vec![(0.0f64, 0.0f64); curves.len()];

    let gap_stride = customers
        .checked_div(config.oracle_gap_samples)
        .map_or(0, |s| s.max(1));
    let grid = config.bid_grid();
    let mut gap = OracleGap::default();
    let mut gap_sum = 0.0;

    for t in 1..=customers {
        let step = |e: Error| Error::Trial {
            trial,
            customer: t,
            source: Box::new(e),
        };
        let x = customer_context(config, model, trial, t).map_err(step)?;
        let params = PlanParams::from_truth(&x, model, auction);
        let (_, oracle) = best_outcome_plan(&params).map_err(step)?;
        if gap_stride > 0 && (t - 1) % gap_stride == 0 && gap.samples < config.oracle_gap_samples {
            let diff = oracle - dp_policy(&params, &grid).value;
            gap.samples += 1;
            gap_sum += diff;
            gap.max_abs = gap.max_abs.max(diff.abs());
        }
        let key = EpisodeKey {
            source,
            trial,
            customer: t,
        };

        for (curve, total) in curves.iter_mut().zip(totals.iter_mut()) {
            let (realized, expected) = match baseline_kind(curve.policy) {
                None => {
                    let agent = agent.as_mut().expect("learner configured");
                    let policy = agent.act(&x).map_err(step)?;
                    let log = run_episode(&policy, &x, model, auction, key, mode).map_err(step)?;
                    let expected = expected_value(&policy, &params, mode);
                    agent.update(&log).map_err(step)?;
                    if agent.customers_seen == exploration_end {
                        let counts: Vec<u64> = agent.bank.delay.iter().map(|d| d.count).collect();
                        if mode == BidMode::ForcedOutcome
                            && counts.iter().any(|&c| c < n_underbar as u64)
                        {
                            return Err(step(Error::Domain(format!(
                                "forced exploration left delay counts {counts:?} below {n_underbar}"
                            ))));
                        }
                        exploration_counts = Some(counts);
                    }
                    let realized = log.realized_reward;
                    if let Some(logs) = logs.as_mut() {
                        logs.push(log);
                    }
                    (realized, expected)
                }
                Some(kind) => {
                    let mut rng = source.stream(trial, t, 0, Purpose::Policy);
                    let plan = baseline_act(kind, config.horizon, &mut rng);
                    let log = run_episode(&plan, &x, model, auction, key, mode).map_err(step)?;
                    (log.realized_reward, expected_value(&plan, &params, mode))
                }
            };
            total.0 += oracle - realized;
            total.1 += oracle - expected;
            curve.realized.push(total.0);
            curve.expected.push(total.1);
        }
    }

    if gap.samples > 0 {
        gap.mean = gap_sum / gap.samples as f64;
    }
    Ok(TrialOutcome {
        trial,
        instance,
        curves,
        logs,
        agent: agent.map(|a| a.snapshot()),
        oracle_gap: gap,
        exploration_counts,
    })
}

/// Runs all trials; results come back in trial order regardless of
/// `execution`. The first failing trial aborts the experiment.
pub fn run_trials(
    config: &ExperimentConfig,
    execution: Execution,
    emit_logs: bool,
) -> Result<Vec<TrialOutcome>> {
    config.validate()?;
    map_indexed(config.trials, execution, |k| {
        run_trial(config, k, emit_logs)
    })
    .into_iter()
    .collect()
}
