//! Deterministic model of the bidding CMDP: exposure states, conversion
//! means, the lognormal highest-other-bid (HOB) distribution and the expected
//! per-round reward of a second-price bid.
//!
//! Nothing in here draws random numbers or mutates shared state; every
//! function is a pure map from its arguments.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Structural constants shared by the model, the estimators and the agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    /// Floor on every conversion mean `<theta_l, x>`.
    pub b: f64,
    /// Bound on the Euclidean norm of contexts.
    pub context_bound: f64,
    /// Bound on the Euclidean norm of every conversion vector.
    pub theta_bound: f64,
    /// Cap on the delay factors.
    pub delay_bound: f64,
    /// Largest admissible bid.
    pub max_bid: f64,
    /// Rounds per customer.
    pub horizon: usize,
    /// Context dimension.
    pub dim: usize,
}

impl Bounds {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("b", self.b),
            ("context_bound", self.context_bound),
            ("theta_bound", self.theta_bound),
            ("delay_bound", self.delay_bound),
            ("max_bid", self.max_bid),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidBounds(format!(
                    "{name} must be positive and finite, got {value}"
                )));
            }
        }
        if self.horizon == 0 {
            return Err(Error::InvalidBounds("horizon must be at least 1".into()));
        }
        if self.dim == 0 {
            return Err(Error::InvalidBounds("dim must be at least 1".into()));
        }
        if self.b > self.context_bound * self.theta_bound {
            return Err(Error::InvalidBounds(format!(
                "conversion floor {} exceeds context_bound * theta_bound = {}",
                self.b,
                self.context_bound * self.theta_bound
            )));
        }
        Ok(())
    }
}

/// Index of a conversion vector `theta_l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ThetaIndex {
    /// Baseline conversions of a customer that has never seen an ad.
    NaturalDemand,
    /// Conversions in the round of a customer's first impression.
    FirstExposure,
    /// Conversions of an impression shown `k` rounds after the previous one.
    Lag(usize),
}

impl ThetaIndex {
    /// Number of conversion vectors for a horizon: natural demand, first
    /// exposure and lags `1..horizon`.
    pub fn count(horizon: usize) -> usize {
        horizon + 1
    }

    pub fn all(horizon: usize) -> impl Iterator<Item = ThetaIndex> {
        (0..Self::count(horizon)).map(Self::from_slot)
    }

    /// Dense storage slot: natural demand 0, first exposure 1, `Lag(k)` at `1 + k`.
    pub fn slot(self) -> usize {
        match self {
            ThetaIndex::NaturalDemand => 0,
            ThetaIndex::FirstExposure => 1,
            ThetaIndex::Lag(k) => 1 + k,
        }
    }

    pub fn from_slot(slot: usize) -> Self {
        match slot {
            0 => ThetaIndex::NaturalDemand,
            1 => ThetaIndex::FirstExposure,
            k => ThetaIndex::Lag(k - 1),
        }
    }

    pub fn is_valid(self, horizon: usize) -> bool {
        match self {
            ThetaIndex::Lag(k) => k >= 1 && k < horizon,
            _ => true,
        }
    }
}

impl fmt::Display for ThetaIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThetaIndex::NaturalDemand => f.write_str("natural"),
            ThetaIndex::FirstExposure => f.write_str("first"),
            ThetaIndex::Lag(k) => write!(f, "lag{k}"),
        }
    }
}

/// Index of a delay factor `d_l`. `Never` is pinned to 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DelayIndex {
    Never,
    Lag(usize),
}

/// Rounds since the most recent won impression (first state coordinate).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Recency {
    Never,
    Lag(usize),
}

/// Gap between the two most recent won impressions (second state coordinate).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PriorGap {
    /// No impression has been won yet.
    NeverBefore,
    /// Exactly one impression has been won.
    OnlyOne,
    Gap(usize),
}

/// Exposure state of a customer at the start of a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ExposureState {
    pub since_last: Recency,
    pub prior_gap: PriorGap,
}

impl ExposureState {
    pub const INITIAL: ExposureState = ExposureState {
        since_last: Recency::Never,
        prior_gap: PriorGap::NeverBefore,
    };

    pub fn new(since_last: Recency, prior_gap: PriorGap) -> Self {
        Self {
            since_last,
            prior_gap,
        }
    }

    /// State after this round given its outcome.
    pub fn next(self, won: bool) -> Self {
        if won {
            let prior_gap = match self.since_last {
                Recency::Never => PriorGap::OnlyOne,
                Recency::Lag(l) => PriorGap::Gap(l),
            };
            ExposureState::new(Recency::Lag(1), prior_gap)
        } else {
            let since_last = match self.since_last {
                Recency::Never => Recency::Never,
                Recency::Lag(l) => Recency::Lag(l + 1),
            };
            ExposureState::new(since_last, self.prior_gap)
        }
    }

    /// Conversion vector that drives a won round.
    pub fn win_index(self) -> ThetaIndex {
        match self.since_last {
            Recency::Never => ThetaIndex::FirstExposure,
            Recency::Lag(l) => ThetaIndex::Lag(l),
        }
    }

    /// Conversion vector carried over into a lost round.
    pub fn lose_index(self) -> ThetaIndex {
        match self.prior_gap {
            PriorGap::NeverBefore => ThetaIndex::NaturalDemand,
            PriorGap::OnlyOne => ThetaIndex::FirstExposure,
            PriorGap::Gap(k) => ThetaIndex::Lag(k),
        }
    }

    /// Delay factor applied to a lost round.
    pub fn delay_index(self) -> DelayIndex {
        match self.since_last {
            Recency::Never => DelayIndex::Never,
            Recency::Lag(l) => DelayIndex::Lag(l),
        }
    }

    /// Whether the state can occur at some round of a `horizon`-round episode.
    pub fn is_valid(self, horizon: usize) -> bool {
        match (self.since_last, self.prior_gap) {
            (Recency::Never, PriorGap::NeverBefore) => true,
            (Recency::Never, _) | (_, PriorGap::NeverBefore) => false,
            (Recency::Lag(l), PriorGap::OnlyOne) => l >= 1 && l < horizon,
            (Recency::Lag(l), PriorGap::Gap(k)) => l >= 1 && k >= 1 && l + k < horizon,
        }
    }
}

impl fmt::Display for ExposureState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s1 = match self.since_last {
            Recency::Never => "NEVER".to_string(),
            Recency::Lag(l) => l.to_string(),
        };
        let s2 = match self.prior_gap {
            PriorGap::NeverBefore => "NEVERBEFORE".to_string(),
            PriorGap::OnlyOne => "ONLYONE".to_string(),
            PriorGap::Gap(k) => k.to_string(),
        };
        write!(f, "[{s1}, {s2}]")
    }
}

/// Transition of the exposure state machine.
pub fn next_state(state: ExposureState, won: bool) -> ExposureState {
    state.next(won)
}

/// States reachable from the initial state, grouped by round (`result[h - 1]`
/// holds round `h`). Each round's list is sorted.
pub fn reachable_states(horizon: usize) -> Vec<Vec<ExposureState>> {
    let mut rounds = Vec::with_capacity(horizon);
    let mut current = vec![ExposureState::INITIAL];
    for _ in 0..horizon {
        rounds.push(current.clone());
        let mut next: Vec<ExposureState> = current
            .iter()
            .flat_map(|s| [s.next(false), s.next(true)])
            .collect();
        next.sort();
        next.dedup();
        current = next;
    }
    rounds
}

/// Customer feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Context(pub Vec<f64>);

impl Context {
    pub fn new(values: Vec<f64>) -> Self {
        Context(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        dot(&self.0, other)
    }

    pub fn norm(&self) -> f64 {
        self.dot(&self.0).sqrt()
    }

    /// Rescales onto the ball of radius `bound` if the norm exceeds it.
    pub fn clamp_norm(mut self, bound: f64) -> Self {
        let norm = self.norm();
        if norm > bound {
            let scale = bound / norm;
            self.0.iter_mut().for_each(|v| *v *= scale);
        }
        self
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// True conversion vectors and delay factors of an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrueModel {
    /// Conversion vectors in slot order (see [`ThetaIndex::slot`]).
    pub theta: Vec<Vec<f64>>,
    /// Delay factors for lags `1..horizon`.
    pub delay: Vec<f64>,
}

impl TrueModel {
    pub fn horizon(&self) -> usize {
        self.theta.len() - 1
    }

    pub fn theta(&self, index: ThetaIndex) -> &[f64] {
        &self.theta[index.slot()]
    }

    pub fn delay(&self, index: DelayIndex) -> f64 {
        match index {
            DelayIndex::Never => 1.0,
            DelayIndex::Lag(k) => self.delay[k - 1],
        }
    }

    pub fn mean(&self, index: ThetaIndex, x: &Context) -> f64 {
        x.dot(self.theta(index))
    }

    pub fn validate(&self, bounds: &Bounds) -> Result<()> {
        if self.theta.len() != ThetaIndex::count(bounds.horizon)
            || self.delay.len() != bounds.horizon.saturating_sub(1)
        {
            return Err(Error::InvalidConfig(
                "model tables do not match the horizon".into(),
            ));
        }
        for (slot, theta) in self.theta.iter().enumerate() {
            let norm = dot(theta, theta).sqrt();
            if theta.len() != bounds.dim || norm > bounds.theta_bound * (1.0 + 1e-12) {
                return Err(Error::InvalidConfig(format!(
                    "theta[{}] violates dimension or norm bound",
                    ThetaIndex::from_slot(slot)
                )));
            }
        }
        if self
            .delay
            .iter()
            .any(|d| !(0.0..=bounds.delay_bound).contains(d))
        {
            return Err(Error::InvalidConfig("delay factor out of range".into()));
        }
        Ok(())
    }
}

/// Per-round lognormal HOB parameters: `log m_h ~ N(<x, beta_h>, sigma_h^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuctionModel {
    pub beta: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
}

impl AuctionModel {
    pub fn horizon(&self) -> usize {
        self.sigma.len()
    }

    /// HOB distribution of round `h` (1-based) for context `x`.
    pub fn hob(&self, h: usize, x: &Context) -> HobDistribution {
        HobDistribution::new(x.dot(&self.beta[h - 1]), self.sigma[h - 1])
    }
}

/// Standard normal CDF.
///
/// Evaluated as `erfc(-z / sqrt(2)) / 2` with the FreeBSD-derived `libm`
/// `erfc`, whose error is within an ulp or two, far below the 1e-12 absolute
/// budget. The complementary form keeps relative accuracy in the lower tail.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

/// Lognormal law of the highest other bid for one round and context.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HobDistribution {
    /// Mean of `log m`.
    pub loc: f64,
    /// Standard deviation of `log m`.
    pub scale: f64,
}

impl HobDistribution {
    pub fn new(loc: f64, scale: f64) -> Self {
        Self { loc, scale }
    }

    /// Win probability `P(m <= bid)`; a bid of 0 never wins, an infinite bid always does.
    pub fn cdf(&self, bid: f64) -> f64 {
        if bid <= 0.0 {
            0.0
        } else if bid == f64::INFINITY {
            1.0
        } else {
            normal_cdf((bid.ln() - self.loc) / self.scale)
        }
    }

    /// Unconditional mean `exp(loc + scale^2 / 2)`.
    pub fn mean(&self) -> f64 {
        (self.loc + 0.5 * self.scale * self.scale).exp()
    }

    /// `E[m 1{m <= bid}]` via the lognormal truncated-mean identity.
    pub fn partial_mean(&self, bid: f64) -> f64 {
        if bid <= 0.0 {
            0.0
        } else if bid == f64::INFINITY {
            self.mean()
        } else {
            let s2 = self.scale * self.scale;
            self.mean() * normal_cdf((bid.ln() - self.loc - s2) / self.scale)
        }
    }

    /// `int_0^bid F(v) dv = bid F(bid) - E[m 1{m <= bid}]`.
    pub fn integrated_cdf(&self, bid: f64) -> f64 {
        if bid <= 0.0 {
            0.0
        } else {
            bid * self.cdf(bid) - self.partial_mean(bid)
        }
    }

    /// Second-price payment conditional on winning: `E[m | m <= bid]`.
    pub fn expected_payment_given_win(&self, bid: f64) -> Result<f64> {
        let win = self.cdf(bid);
        if win <= 0.0 {
            return Err(Error::Domain(format!(
                "payment undefined: win probability of bid {bid} is zero"
            )));
        }
        Ok((self.partial_mean(bid) / win).min(bid))
    }
}

/// Expected one-round reward from scalar means, the HOB law and a bid.
///
/// `lose_value` is the delayed conversion mean collected on a loss and
/// `win_value` the conversion mean of a won impression.
pub fn reward_for_bid(lose_value: f64, win_value: f64, hob: &HobDistribution, bid: f64) -> f64 {
    let win = hob.cdf(bid);
    if win <= 0.0 {
        return lose_value;
    }
    let payment = (hob.partial_mean(bid) / win).min(bid);
    lose_value * (1.0 - win) + (win_value - payment) * win
}

/// Poisson rate of conversions in a round with the given state and outcome.
pub fn conversion_mean(
    state: ExposureState,
    won: bool,
    x: &Context,
    model: &TrueModel,
) -> Result<f64> {
    let rate = if won {
        model.mean(state.win_index(), x)
    } else {
        model.delay(state.delay_index()) * model.mean(state.lose_index(), x)
    };
    if rate < 0.0 || rate.is_nan() {
        return Err(Error::Domain(format!(
            "negative conversion rate {rate} in state {state}"
        )));
    }
    Ok(rate)
}

pub fn win_probability(h: usize, bid: f64, x: &Context, auction: &AuctionModel) -> f64 {
    auction.hob(h, x).cdf(bid)
}

pub fn expected_payment_given_win(
    h: usize,
    bid: f64,
    x: &Context,
    auction: &AuctionModel,
) -> Result<f64> {
    auction.hob(h, x).expected_payment_given_win(bid)
}

pub fn expected_round_reward(
    h: usize,
    state: ExposureState,
    bid: f64,
    x: &Context,
    model: &TrueModel,
    auction: &AuctionModel,
) -> f64 {
    let lose = model.delay(state.delay_index()) * model.mean(state.lose_index(), x);
    let win = model.mean(state.win_index(), x);
    reward_for_bid(lose, win, &auction.hob(h, x), bid)
}
