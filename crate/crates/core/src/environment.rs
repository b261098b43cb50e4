//! Stochastic simulator: HOB and conversion sampling, episode execution and
//! random instance generation.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    conversion_mean, AuctionModel, Bounds, Context, ExposureState, PriorGap, Recency, ThetaIndex,
    TrueModel,
};
use crate::parallel::{map_indexed, Execution};
use crate::rng::{Purpose, RandomSource};

/// Anything that can pick a bid for round `h` in a given state.
///
/// A bid of `f64::INFINITY` requests a forced win and a bid of 0 opts out.
pub trait BidRule {
    fn bid(&self, h: usize, state: &ExposureState) -> f64;
}

impl<F> BidRule for F
where
    F: Fn(usize, &ExposureState) -> f64,
{
    fn bid(&self, h: usize, state: &ExposureState) -> f64 {
        self(h, state)
    }
}

/// How bids are turned into outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BidMode {
    /// Bids are capped at `max_bid` and win iff they reach the sampled HOB.
    Auction { max_bid: f64 },
    /// Policies pick outcomes directly: an infinite bid always wins and pays
    /// the realized HOB, a zero bid always loses.
    ForcedOutcome,
}

/// One round of an episode. The HOB is recorded whether or not the bid won.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub h: usize,
    pub state: ExposureState,
    pub bid: f64,
    pub hob: f64,
    pub won: bool,
    pub payment: f64,
    pub conversions: u64,
    pub forced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub trial: usize,
    /// 1-based customer index.
    pub customer: usize,
    pub context: Context,
    pub records: Vec<RoundRecord>,
    pub realized_reward: f64,
}

impl EpisodeLog {
    /// Checks the record count, the initial state and the transition chain.
    pub fn check_chain(&self, horizon: usize) -> Result<()> {
        if self.records.len() != horizon {
            return Err(Error::Domain(format!(
                "episode has {} records, expected {horizon}",
                self.records.len()
            )));
        }
        let mut state = ExposureState::INITIAL;
        for (i, rec) in self.records.iter().enumerate() {
            if rec.h != i + 1 || rec.state != state {
                return Err(Error::Domain(format!(
                    "record {} breaks the state chain: {} != {}",
                    i + 1,
                    rec.state,
                    state
                )));
            }
            state = state.next(rec.won);
        }
        Ok(())
    }
}

/// `scale * |N(0, 1)| + offset`, drawn elementwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfNormal {
    pub scale: f64,
    pub offset: f64,
}

impl HalfNormal {
    pub const fn new(scale: f64, offset: f64) -> Self {
        Self { scale, offset }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.scale * z.abs() + self.offset
    }

    pub fn sample_vec<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| self.sample(rng)).collect()
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.offset > 0.0
            && self.offset.is_finite()
            && self.scale >= 0.0
            && self.scale.is_finite())
        {
            return Err(Error::InvalidConfig(format!(
                "{name}: need offset > 0 and scale >= 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Sampling recipe for random instances and contexts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InstanceSpec {
    pub theta: HalfNormal,
    pub delay: HalfNormal,
    pub beta: HalfNormal,
    pub sigma: HalfNormal,
    pub context: HalfNormal,
    /// Reject recipes that can violate the conversion floor, and resample
    /// contexts that do.
    pub strict_bounds: bool,
}

impl Default for InstanceSpec {
    fn default() -> Self {
        Self {
            theta: HalfNormal::new(5.0, 0.1),
            delay: HalfNormal::new(1.0, 0.1),
            beta: HalfNormal::new(1.0, 0.1),
            sigma: HalfNormal::new(1.0, 0.1),
            context: HalfNormal::new(1.0, 0.1),
            strict_bounds: false,
        }
    }
}

impl InstanceSpec {
    pub fn validate(&self) -> Result<()> {
        self.theta.validate("theta")?;
        self.delay.validate("delay")?;
        self.beta.validate("beta")?;
        self.sigma.validate("sigma")?;
        self.context.validate("context")
    }

    /// Smallest conversion mean the recipe can produce before context norm
    /// clamping. All entries are positive, so `<theta, x>` is at least the
    /// smallest context entry times the entry sum of theta, which in turn is
    /// at least `dim * offset` unclamped and at least `theta_bound` after
    /// rescaling onto the norm ball.
    pub fn guaranteed_mean_floor(&self, bounds: &Bounds) -> f64 {
        let theta_sum = (bounds.dim as f64 * self.theta.offset).min(bounds.theta_bound);
        self.context.offset * theta_sum
    }
}

pub fn sample_hob<R: Rng + ?Sized>(
    h: usize,
    x: &Context,
    auction: &AuctionModel,
    rng: &mut R,
) -> f64 {
    let hob = auction.hob(h, x);
    let z: f64 = rng.sample(StandardNormal);
    (hob.loc + hob.scale * z).exp()
}

pub fn sample_conversions<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u64 {
    if rate <= 0.0 {
        return 0;
    }
    match Poisson::new(rate) {
        Ok(dist) => dist.sample(rng) as u64,
        Err(_) => 0,
    }
}

pub fn sample_context<R: Rng + ?Sized>(spec: &InstanceSpec, dim: usize, rng: &mut R) -> Context {
    Context::new(spec.context.sample_vec(dim, rng))
}

fn clamp_norm(mut v: Vec<f64>, bound: f64) -> Vec<f64> {
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm > bound {
        let scale = bound / norm;
        v.iter_mut().for_each(|a| *a *= scale);
    }
    v
}

/// Draws a full instance. Conversion vectors are rescaled onto the
/// `theta_bound` ball and delays clamped to `[0, delay_bound]`.
pub fn generate_instance<R: Rng + ?Sized>(
    spec: &InstanceSpec,
    bounds: &Bounds,
    rng: &mut R,
) -> Result<(TrueModel, AuctionModel)> {
    spec.validate()?;
    bounds.validate()?;
    if spec.strict_bounds && spec.guaranteed_mean_floor(bounds) < bounds.b {
        return Err(Error::InvalidConfig(format!(
            "recipe can produce conversion means below b = {} (guaranteed floor {})",
            bounds.b,
            spec.guaranteed_mean_floor(bounds)
        )));
    }
    let horizon = bounds.horizon;
    let theta = (0..ThetaIndex::count(horizon))
        .map(|_| clamp_norm(spec.theta.sample_vec(bounds.dim, rng), bounds.theta_bound))
        .collect();
    let delay = (1..horizon)
        .map(|_| spec.delay.sample(rng).clamp(0.0, bounds.delay_bound))
        .collect();
    let beta = (0..horizon)
        .map(|_| spec.beta.sample_vec(bounds.dim, rng))
        .collect();
    let sigma = (0..horizon).map(|_| spec.sigma.sample(rng)).collect();
    Ok((TrueModel { theta, delay }, AuctionModel { beta, sigma }))
}

/// Identifies the random streams of one episode.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeKey {
    pub source: RandomSource,
    pub trial: usize,
    pub customer: usize,
}

/// Runs one customer episode.
///
/// Round `h` draws its HOB from the `(trial, customer, h, Hob)` stream and its
/// conversions from `(trial, customer, h, Conversion)`, independently of the
/// policy.
pub fn run_episode(
    policy: &dyn BidRule,
    x: &Context,
    model: &TrueModel,
    auction: &AuctionModel,
    key: EpisodeKey,
    mode: BidMode,
) -> Result<EpisodeLog> {
    let horizon = model.horizon();
    let mut state = ExposureState::INITIAL;
    let mut records = Vec::with_capacity(horizon);
    let mut realized = 0.0;
    for h in 1..=horizon {
        let raw = policy.bid(h, &state);
        if raw.is_nan() || raw < 0.0 {
            return Err(Error::Domain(format!("invalid bid {raw} at round {h}")));
        }
        let bid = match mode {
            BidMode::Auction { max_bid } => raw.min(max_bid),
            BidMode::ForcedOutcome => raw,
        };
        let hob = sample_hob(
            h,
            x,
            auction,
            &mut key.source.stream(key.trial, key.customer, h, Purpose::Hob),
        );
        let won = bid >= hob;
        let payment = if won { hob } else { 0.0 };
        let rate = conversion_mean(state, won, x, model)?;
        let conversions = sample_conversions(
            rate,
            &mut key
                .source
                .stream(key.trial, key.customer, h, Purpose::Conversion),
        );
        realized += conversions as f64 - payment;
        records.push(RoundRecord {
            h,
            state,
            bid,
            hob,
            won,
            payment,
            conversions,
            forced: matches!(mode, BidMode::ForcedOutcome),
        });
        state = state.next(won);
    }
    Ok(EpisodeLog {
        trial: key.trial,
        customer: key.customer,
        context: x.clone(),
        records,
        realized_reward: realized,
    })
}

/// Realized rewards of `episodes` independent replays of a fixed policy for
/// one context; replay `i` uses customer key `i + 1` of `trial`.
pub fn simulate_rewards(
    policy: &(dyn BidRule + Sync),
    x: &Context,
    model: &TrueModel,
    auction: &AuctionModel,
    source: RandomSource,
    trial: usize,
    episodes: usize,
    mode: BidMode,
    execution: Execution,
) -> Result<Vec<f64>> {
    const CHUNK: usize = 4096;
    let chunks = episodes.div_ceil(CHUNK);
    let parts = map_indexed(chunks, execution, |c| {
        let start = c * CHUNK;
        let end = (start + CHUNK).min(episodes);
        (start..end)
            .map(|i| {
                let key = EpisodeKey {
                    source,
                    trial,
                    customer: i + 1,
                };
                run_episode(policy, x, model, auction, key, mode).map(|log| log.realized_reward)
            })
            .collect::<Result<Vec<f64>>>()
    });
    let mut out = Vec::with_capacity(episodes);
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}

const FIXED_COLUMNS: [&str; 10] = [
    "trial",
    "t",
    "h",
    "s1",
    "s2",
    "bid",
    "hob",
    "won",
    "payment",
    "conversions",
];

fn s1_token(r: Recency) -> String {
    match r {
        Recency::Never => "NEVER".into(),
        Recency::Lag(l) => l.to_string(),
    }
}

fn s2_token(g: PriorGap) -> String {
    match g {
        PriorGap::NeverBefore => "NEVERBEFORE".into(),
        PriorGap::OnlyOne => "ONLYONE".into(),
        PriorGap::Gap(k) => k.to_string(),
    }
}

/// Writes episode logs as CSV: the ten fixed columns followed by the context
/// coordinates `x1..xd`.
pub fn write_episode_csv<W: Write>(writer: W, logs: &[EpisodeLog]) -> Result<()> {
    let dim = logs.first().map_or(0, |l| l.context.dim());
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((1..=dim).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for log in logs {
        for rec in &log.records {
            let mut row = vec![
                log.trial.to_string(),
                log.customer.to_string(),
                rec.h.to_string(),
                s1_token(rec.state.since_last),
                s2_token(rec.state.prior_gap),
                rec.bid.to_string(),
                rec.hob.to_string(),
                u8::from(rec.won).to_string(),
                rec.payment.to_string(),
                rec.conversions.to_string(),
            ];
            row.extend(log.context.as_slice().iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Parses logs written by [`write_episode_csv`]. `forced` is set from
/// `forced_mode` since the file does not carry it.
pub fn read_episode_csv<R: Read>(reader: R, forced_mode: bool) -> Result<Vec<EpisodeLog>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    let schema = |line: u64, message: String| Error::Schema { line, message };
    if header.len() < FIXED_COLUMNS.len()
        || header
            .iter()
            .take(FIXED_COLUMNS.len())
            .ne(FIXED_COLUMNS.iter().copied())
    {
        return Err(schema(1, format!("unexpected header {header:?}")));
    }
    let dim = header.len() - FIXED_COLUMNS.len();
    for (i, name) in header.iter().skip(FIXED_COLUMNS.len()).enumerate() {
        if name != format!("x{}", i + 1) {
            return Err(schema(1, format!("unexpected context column {name}")));
        }
    }

    let mut logs: Vec<EpisodeLog> = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != header.len() {
            return Err(schema(
                line,
                format!("expected {} fields, got {}", header.len(), row.len()),
            ));
        }
        let int = |i: usize| -> Result<usize> {
            row[i]
                .parse::<usize>()
                .map_err(|e| schema(line, format!("{}: {e}", FIXED_COLUMNS[i])))
        };
        let float = |s: &str, name: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| schema(line, format!("{name}: {e}")))
        };
        let trial = int(0)?;
        let customer = int(1)?;
        let h = int(2)?;
        let since_last = match &row[3] {
            "NEVER" => Recency::Never,
            s => Recency::Lag(s.parse().map_err(|e| schema(line, format!("s1: {e}")))?),
        };
        let prior_gap = match &row[4] {
            "NEVERBEFORE" => PriorGap::NeverBefore,
            "ONLYONE" => PriorGap::OnlyOne,
            s => PriorGap::Gap(s.parse().map_err(|e| schema(line, format!("s2: {e}")))?),
        };
        let bid = float(&row[5], "bid")?;
        let hob = float(&row[6], "hob")?;
        let won = match &row[7] {
            "1" => true,
            "0" => false,
            s => return Err(schema(line, format!("won: expected 0 or 1, got {s}"))),
        };
        let payment = float(&row[8], "payment")?;
        let conversions = row[9]
            .parse::<u64>()
            .map_err(|e| schema(line, format!("conversions: {e}")))?;
        let context = (0..dim)
            .map(|i| float(&row[FIXED_COLUMNS.len() + i], "context"))
            .collect::<Result<Vec<f64>>>()?;

        let record = RoundRecord {
            h,
            state: ExposureState::new(since_last, prior_gap),
            bid,
            hob,
            won,
            payment,
            conversions,
            forced: forced_mode,
        };
        let reward = conversions as f64 - payment;
        match logs.last_mut() {
            Some(log) if log.trial == trial && log.customer == customer => {
                if h != log.records.len() + 1 {
                    return Err(schema(line, format!("round {h} out of sequence")));
                }
                if log.context.as_slice() != context.as_slice() {
                    return Err(schema(line, "context changes within an episode".into()));
                }
                log.records.push(record);
                log.realized_reward += reward;
            }
            _ => {
                if h != 1 {
                    return Err(schema(line, format!("episode starts at round {h}")));
                }
                logs.push(EpisodeLog {
                    trial,
                    customer,
                    context: Context::new(context),
                    records: vec![record],
                    realized_reward: reward,
                });
            }
        }
    }
    Ok(logs)
}
