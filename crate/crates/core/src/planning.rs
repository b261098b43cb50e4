//! Planning over one customer's episode: outcome-sequence enumeration,
//! backward induction over a bid grid, the continuation-value bid and the
//! oracle value.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::environment::BidRule;
use crate::error::{Error, Result};
use crate::model::{
    reachable_states, reward_for_bid, AuctionModel, Context, DelayIndex, ExposureState,
    HobDistribution, ThetaIndex, TrueModel,
};

/// Largest horizon for which all `2^H` outcome plans are enumerated.
pub const MAX_ENUMERATION_HORIZON: usize = 20;

/// Context-resolved planning inputs: scalar conversion means, delay factors
/// and per-round HOB laws. They may be true, estimated or optimistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanParams {
    /// `<theta_l, x>` in [`ThetaIndex::slot`] order.
    pub mu: Vec<f64>,
    /// Delay factors for lags `1..horizon`.
    pub delay: Vec<f64>,
    pub hob: Vec<HobDistribution>,
}

impl PlanParams {
    pub fn from_truth(x: &Context, model: &TrueModel, auction: &AuctionModel) -> Self {
        let horizon = model.horizon();
        Self {
            mu: ThetaIndex::all(horizon).map(|i| model.mean(i, x)).collect(),
            delay: model.delay.clone(),
            hob: (1..=horizon).map(|h| auction.hob(h, x)).collect(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.hob.len()
    }

    pub fn mu(&self, index: ThetaIndex) -> f64 {
        self.mu[index.slot()]
    }

    pub fn delay(&self, index: DelayIndex) -> f64 {
        match index {
            DelayIndex::Never => 1.0,
            DelayIndex::Lag(k) => self.delay[k - 1],
        }
    }

    /// Conversion mean of a lost round.
    pub fn lose_value(&self, state: ExposureState) -> f64 {
        self.delay(state.delay_index()) * self.mu(state.lose_index())
    }

    /// Conversion mean of a won round.
    pub fn win_value(&self, state: ExposureState) -> f64 {
        self.mu(state.win_index())
    }

    /// Expected reward of bidding `bid` in round `h`.
    pub fn round_reward(&self, h: usize, state: ExposureState, bid: f64) -> f64 {
        reward_for_bid(
            self.lose_value(state),
            self.win_value(state),
            &self.hob[h - 1],
            bid,
        )
    }
}

/// Target outcome per round (`true` = win).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OutcomePlan(pub Vec<bool>);

impl OutcomePlan {
    pub fn all_win(horizon: usize) -> Self {
        OutcomePlan(vec![true; horizon])
    }

    pub fn all_lose(horizon: usize) -> Self {
        OutcomePlan(vec![false; horizon])
    }

    /// Plan number `code` in lexicographic order (lose before win), round 1
    /// being the most significant position.
    pub fn from_code(code: u64, horizon: usize) -> Self {
        OutcomePlan(
            (0..horizon)
                .map(|h| (code >> (horizon - 1 - h)) & 1 == 1)
                .collect(),
        )
    }

    pub fn horizon(&self) -> usize {
        self.0.len()
    }

    pub fn wins(&self, h: usize) -> bool {
        self.0[h - 1]
    }
}

impl BidRule for OutcomePlan {
    fn bid(&self, h: usize, _state: &ExposureState) -> f64 {
        if self.wins(h) {
            f64::INFINITY
        } else {
            0.0
        }
    }
}

impl fmt::Display for OutcomePlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &w in &self.0 {
            f.write_str(if w { "W" } else { "L" })?;
        }
        Ok(())
    }
}

/// Bids for every reachable `(round, state)` and the expected value they earn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    /// `rounds[h - 1]` maps each reachable state of round `h` to its bid.
    pub rounds: Vec<BTreeMap<ExposureState, f64>>,
    /// Expected total reward from the initial state.
    pub value: f64,
}

impl BidRule for PolicyTable {
    fn bid(&self, h: usize, state: &ExposureState) -> f64 {
        self.rounds[h - 1].get(state).copied().unwrap_or(0.0)
    }
}

/// Expected value of a fixed outcome plan.
///
/// Forced wins pay the unconditional HOB mean. Round rewards are summed from
/// the last round backwards, the same association as backward induction.
pub fn outcome_value(plan: &OutcomePlan, params: &PlanParams) -> f64 {
    let mut state = ExposureState::INITIAL;
    let mut rewards = Vec::with_capacity(plan.horizon());
    for (i, &win) in plan.0.iter().enumerate() {
        let bid = if win { f64::INFINITY } else { 0.0 };
        rewards.push(params.round_reward(i + 1, state, bid));
        state = state.next(win);
    }
    rewards.iter().rev().fold(0.0, |acc, &r| r + acc)
}

/// Best of all `2^H` outcome plans; ties go to the lexicographically smallest.
pub fn best_outcome_plan(params: &PlanParams) -> Result<(OutcomePlan, f64)> {
    let horizon = params.horizon();
    if horizon > MAX_ENUMERATION_HORIZON {
        return Err(Error::EnumerationCap {
            horizon,
            cap: MAX_ENUMERATION_HORIZON,
        });
    }
    let mut best = OutcomePlan::all_lose(horizon);
    let mut best_value = outcome_value(&best, params);
    for code in 1..(1u64 << horizon) {
        let plan = OutcomePlan::from_code(code, horizon);
        let value = outcome_value(&plan, params);
        if value > best_value {
            best = plan;
            best_value = value;
        }
    }
    Ok((best, best_value))
}

/// Default grid: 0 plus `points` log-spaced bids in `[b / 100, max_bid]`.
pub fn default_bid_grid(b: f64, max_bid: f64, points: usize) -> Vec<f64> {
    let lo = (b * 1e-2).ln();
    let hi = max_bid.ln();
    let mut grid = vec![0.0];
    match points {
        0 => {}
        1 => grid.push(max_bid),
        n => grid.extend((0..n).map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp())),
    }
    grid
}

fn successor_value(values: &BTreeMap<ExposureState, f64>, state: ExposureState) -> f64 {
    values.get(&state).copied().unwrap_or(0.0)
}

/// `Q_h(s, a)` given continuation values of round `h + 1`.
fn q_value(
    params: &PlanParams,
    h: usize,
    state: ExposureState,
    bid: f64,
    next: &BTreeMap<ExposureState, f64>,
) -> f64 {
    let win = params.hob[h - 1].cdf(bid);
    params.round_reward(h, state, bid)
        + win * successor_value(next, state.next(true))
        + (1.0 - win) * successor_value(next, state.next(false))
}

/// Backward induction that picks each state's bid with `choose`.
fn backward<F>(params: &PlanParams, mut choose: F) -> PolicyTable
where
    F: FnMut(usize, ExposureState, &BTreeMap<ExposureState, f64>) -> (f64, f64),
{
    let horizon = params.horizon();
    let states = reachable_states(horizon);
    let mut rounds = vec![BTreeMap::new(); horizon];
    let mut next: BTreeMap<ExposureState, f64> = BTreeMap::new();
    for h in (1..=horizon).rev() {
        let mut current = BTreeMap::new();
        for &s in &states[h - 1] {
            let (bid, value) = choose(h, s, &next);
            rounds[h - 1].insert(s, bid);
            current.insert(s, value);
        }
        next = current;
    }
    let value = successor_value(&next, ExposureState::INITIAL);
    PolicyTable { rounds, value }
}

/// Dynamic program over a bid grid. The grid should be ascending; ties go to
/// the earlier (lower) bid. An infinite grid point is a forced win.
pub fn dp_policy(params: &PlanParams, grid: &[f64]) -> PolicyTable {
    backward(params, |h, s, next| {
        let mut best = (0.0, f64::NEG_INFINITY);
        for &bid in grid {
            let q = q_value(params, h, s, bid, next);
            if q > best.1 {
                best = (bid, q);
            }
        }
        best
    })
}

/// Truthful second-price bid given continuation values, clamped to `[0, max_bid]`.
pub fn closed_form_bid(
    state: ExposureState,
    params: &PlanParams,
    next: &BTreeMap<ExposureState, f64>,
    max_bid: f64,
) -> f64 {
    let marginal = params.win_value(state) - params.lose_value(state)
        + successor_value(next, state.next(true))
        - successor_value(next, state.next(false));
    marginal.clamp(0.0, max_bid)
}

/// Policy that bids [`closed_form_bid`] everywhere; optimal over `[0, max_bid]`.
pub fn closed_form_policy(params: &PlanParams, max_bid: f64) -> PolicyTable {
    backward(params, |h, s, next| {
        let bid = closed_form_bid(s, params, next, max_bid);
        (bid, q_value(params, h, s, bid, next))
    })
}

/// Expected total reward of any bid rule under `params`.
pub fn evaluate_policy(rule: &dyn BidRule, params: &PlanParams) -> f64 {
    backward(params, |h, s, next| {
        let bid = rule.bid(h, &s);
        (bid, q_value(params, h, s, bid, next))
    })
    .value
}

/// Which benchmark defines the oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMode {
    /// Best outcome plan, forced wins paying the unconditional HOB mean.
    OutcomeEnumeration,
    /// Best bid policy on a grid.
    Dp { grid: Vec<f64> },
}

pub fn oracle_value(
    x: &Context,
    model: &TrueModel,
    auction: &AuctionModel,
    mode: &OracleMode,
) -> Result<f64> {
    let params = PlanParams::from_truth(x, model, auction);
    match mode {
        OracleMode::OutcomeEnumeration => best_outcome_plan(&params).map(|(_, v)| v),
        OracleMode::Dp { grid } => Ok(dp_policy(&params, grid).value),
    }
}
