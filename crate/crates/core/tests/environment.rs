use adlab_core::environment::{
    generate_instance, read_episode_csv, run_episode, sample_context, sample_conversions,
    sample_hob, simulate_rewards, write_episode_csv, BidMode, EpisodeKey, HalfNormal, InstanceSpec,
};
use adlab_core::model::{
    conversion_mean, AuctionModel, Bounds, Context, ExposureState, PriorGap, Recency, ThetaIndex,
    TrueModel,
};
use adlab_core::planning::{outcome_value, OutcomePlan, PlanParams};
use adlab_core::{Execution, Purpose, RandomSource};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bounds() -> Bounds {
    Bounds {
        b: 0.01,
        context_bound: 10.0,
        theta_bound: 10.0,
        delay_bound: 5.0,
        max_bid: 100.0,
        horizon: 3,
        dim: 2,
    }
}

fn small_instance() -> (TrueModel, AuctionModel, Context) {
    (
        TrueModel {
            theta: vec![
                vec![0.5, 0.2],
                vec![1.5, 0.8],
                vec![1.0, 0.6],
                vec![0.9, 0.4],
            ],
            delay: vec![0.7, 0.3],
        },
        AuctionModel {
            beta: vec![vec![0.2, 0.1], vec![0.1, 0.3], vec![0.0, 0.2]],
            sigma: vec![0.5, 0.6, 0.4],
        },
        Context::new(vec![1.0, 0.5]),
    )
}

fn key(seed: u64, customer: usize) -> EpisodeKey {
    EpisodeKey {
        source: RandomSource::new(seed),
        trial: 0,
        customer,
    }
}

#[test]
fn hob_moments() {
    let (_, a, x) = small_instance();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 1_000_000;
    let draws: Vec<f64> = (0..n).map(|_| sample_hob(2, &x, &a, &mut rng)).collect();
    let hob = a.hob(2, &x);
    let mean = draws.iter().sum::<f64>() / n as f64;
    assert!((mean / hob.mean() - 1.0).abs() < 0.01);
    for bid in [0.5, 1.0, 1.5, 3.0] {
        let freq = draws.iter().filter(|&&m| m <= bid).count() as f64 / n as f64;
        assert!((freq - hob.cdf(bid)).abs() < 0.005, "bid {bid}");
    }
}

#[test]
fn degenerate_hob_is_deterministic() {
    let a = AuctionModel {
        beta: vec![vec![0.3, 0.4]],
        sigma: vec![0.0],
    };
    let x = Context::new(vec![1.0, 1.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(sample_hob(1, &x, &a, &mut rng), 0.7f64.exp());
}

#[test]
fn poisson_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    assert!((0..1000).all(|_| sample_conversions(0.0, &mut rng) == 0));
    let n = 1_000_000;
    let mean = (0..n)
        .map(|_| sample_conversions(3.7, &mut rng) as f64)
        .sum::<f64>()
        / n as f64;
    assert!((3.694..=3.706).contains(&mean), "{mean}");
    let draws: Vec<f64> = (0..n)
        .map(|_| sample_conversions(5.0, &mut rng) as f64)
        .collect();
    let m = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / (n as f64 - 1.0);
    assert!((var / m - 1.0).abs() < 0.02);
}

#[test]
fn all_zero_bids_lose_everything() {
    let (m, a, x) = small_instance();
    let zero = |_: usize, _: &ExposureState| 0.0;
    for mode in [BidMode::ForcedOutcome, BidMode::Auction { max_bid: 100.0 }] {
        let log = run_episode(&zero, &x, &m, &a, key(1, 1), mode).unwrap();
        assert!(log
            .records
            .iter()
            .all(|r| !r.won && r.payment == 0.0 && r.hob > 0.0));
        assert!(log
            .records
            .iter()
            .all(|r| r.state == ExposureState::INITIAL));
    }
}

#[test]
fn forced_win_all_trace() {
    let (m, a, x) = small_instance();
    let log = run_episode(
        &OutcomePlan::all_win(3),
        &x,
        &m,
        &a,
        key(2, 9),
        BidMode::ForcedOutcome,
    )
    .unwrap();
    let states: Vec<ExposureState> = log.records.iter().map(|r| r.state).collect();
    assert_eq!(
        states,
        vec![
            ExposureState::INITIAL,
            ExposureState::new(Recency::Lag(1), PriorGap::OnlyOne),
            ExposureState::new(Recency::Lag(1), PriorGap::Gap(1)),
        ]
    );
    let paid: f64 = log.records.iter().map(|r| r.payment).sum();
    let hobs: f64 = log.records.iter().map(|r| r.hob).sum();
    assert_eq!(paid, hobs);
    let conv: f64 = log.records.iter().map(|r| r.conversions as f64).sum();
    assert_eq!(
        log.realized_reward,
        log.records
            .iter()
            .map(|r| r.conversions as f64 - r.payment)
            .sum::<f64>()
    );
    assert!((log.realized_reward - (conv - hobs)).abs() < 1e-9);
    log.check_chain(3).unwrap();
}

#[test]
fn auction_mode_caps_bids() {
    let (m, a, x) = small_instance();
    let log = run_episode(
        &OutcomePlan::all_win(3),
        &x,
        &m,
        &a,
        key(2, 9),
        BidMode::Auction { max_bid: 1.1 },
    )
    .unwrap();
    for r in &log.records {
        assert_eq!(r.bid, 1.1);
        assert_eq!(r.won, r.bid >= r.hob);
        assert_eq!(r.payment, if r.won { r.hob } else { 0.0 });
    }
}

#[test]
fn paired_streams_are_policy_independent() {
    let (m, a, x) = small_instance();
    let win = run_episode(
        &OutcomePlan::all_win(3),
        &x,
        &m,
        &a,
        key(4, 2),
        BidMode::ForcedOutcome,
    )
    .unwrap();
    let lose = run_episode(
        &OutcomePlan::all_lose(3),
        &x,
        &m,
        &a,
        key(4, 2),
        BidMode::ForcedOutcome,
    )
    .unwrap();
    let hobs = |l: &adlab_core::EpisodeLog| l.records.iter().map(|r| r.hob).collect::<Vec<_>>();
    assert_eq!(hobs(&win), hobs(&lose));
    let again = run_episode(
        &OutcomePlan::all_win(3),
        &x,
        &m,
        &a,
        key(4, 2),
        BidMode::ForcedOutcome,
    )
    .unwrap();
    assert_eq!(win, again);
}

#[test]
fn realized_reward_matches_outcome_value() {
    let (m, a, x) = small_instance();
    let params = PlanParams::from_truth(&x, &m, &a);
    for code in [0u64, 2, 5, 7] {
        let plan = OutcomePlan::from_code(code, 3);
        let n = 100_000;
        let rewards = simulate_rewards(
            &plan,
            &x,
            &m,
            &a,
            RandomSource::new(77 + code),
            0,
            n,
            BidMode::ForcedOutcome,
            Execution::Parallel,
        )
        .unwrap();
        let mean = rewards.iter().sum::<f64>() / n as f64;
        let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n as f64 - 1.0);
        let se = (var / n as f64).sqrt();
        let target = outcome_value(&plan, &params);
        assert!(
            (mean - target).abs() <= 3.0 * se,
            "plan {plan}: {mean} vs {target} (se {se})"
        );
    }
}

#[test]
fn empirical_conversions_by_bucket() {
    let (m, a, x) = small_instance();
    let plan = OutcomePlan(vec![true, false, false]);
    let n = 50_000;
    let mut sums = [0.0f64; 3];
    let mut sq = [0.0f64; 3];
    let mut states = [ExposureState::INITIAL; 3];
    let mut won = [false; 3];
    for c in 1..=n {
        let log = run_episode(&plan, &x, &m, &a, key(8, c), BidMode::ForcedOutcome).unwrap();
        for (i, r) in log.records.iter().enumerate() {
            sums[i] += r.conversions as f64;
            sq[i] += (r.conversions * r.conversions) as f64;
            states[i] = r.state;
            won[i] = r.won;
        }
    }
    for i in 0..3 {
        let mean = sums[i] / n as f64;
        let var = sq[i] / n as f64 - mean * mean;
        let rate = conversion_mean(states[i], won[i], &x, &m).unwrap();
        assert!(
            (mean - rate).abs() <= 3.0 * (var / n as f64).sqrt(),
            "round {}",
            i + 1
        );
    }
}

#[test]
fn degenerate_recipe_and_shapes() {
    let flat = HalfNormal::new(0.0, 0.1);
    let spec = InstanceSpec {
        theta: flat,
        delay: flat,
        beta: flat,
        sigma: flat,
        context: flat,
        strict_bounds: false,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (m, a) = generate_instance(&spec, &bounds(), &mut rng).unwrap();
    assert!(m.theta.iter().flatten().all(|&v| v == 0.1));
    assert!(m.delay.iter().all(|&v| v == 0.1));
    assert!(a.beta.iter().flatten().all(|&v| v == 0.1));
    assert!(a.sigma.iter().all(|&v| v == 0.1));
    assert_eq!(
        sample_context(&spec, 2, &mut rng),
        Context::new(vec![0.1, 0.1])
    );

    let (m, a) = generate_instance(&InstanceSpec::default(), &bounds(), &mut rng).unwrap();
    assert_eq!(m.theta.len(), ThetaIndex::count(3));
    assert_eq!(m.theta.len(), 4);
    assert_eq!(m.delay.len(), 2);
    assert_eq!(a.beta.len(), 3);
    assert_eq!(a.sigma.len(), 3);
    m.validate(&bounds()).unwrap();
}

#[test]
fn instances_are_seed_deterministic() {
    let src = RandomSource::new(42);
    let one = generate_instance(
        &InstanceSpec::default(),
        &bounds(),
        &mut src.stream(3, 0, 0, Purpose::Instance),
    )
    .unwrap();
    let two = generate_instance(
        &InstanceSpec::default(),
        &bounds(),
        &mut src.stream(3, 0, 0, Purpose::Instance),
    )
    .unwrap();
    assert_eq!(one, two);
}

#[test]
fn strict_mode_rejects_weak_recipe() {
    let mut spec = InstanceSpec {
        strict_bounds: true,
        ..InstanceSpec::default()
    };
    let mut b = bounds();
    b.b = 1.0;
    assert!(generate_instance(&spec, &b, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    spec.strict_bounds = false;
    assert!(generate_instance(&spec, &b, &mut ChaCha8Rng::seed_from_u64(0)).is_ok());
}

#[test]
fn context_component_mean() {
    let spec = InstanceSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 1_000_000;
    let mean = (0..n)
        .map(|_| sample_context(&spec, 1, &mut rng).0[0])
        .sum::<f64>()
        / n as f64;
    let target = (2.0 / std::f64::consts::PI).sqrt() + 0.1;
    assert!((target - 0.8979).abs() < 1e-4);
    assert!((mean / target - 1.0).abs() < 0.01);
}

#[test]
fn episode_csv_round_trip() {
    let (m, a, x) = small_instance();
    let logs: Vec<_> = (1..=20)
        .map(|c| {
            let plan = OutcomePlan::from_code(c as u64 % 8, 3);
            run_episode(&plan, &x, &m, &a, key(5, c), BidMode::ForcedOutcome).unwrap()
        })
        .collect();
    let mut buf = Vec::new();
    write_episode_csv(&mut buf, &logs).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("trial,t,h,s1,s2,bid,hob,won,payment,conversions,x1,x2\n"));
    assert!(text.contains("NEVER,NEVERBEFORE"));
    assert!(text.contains(",ONLYONE,"));
    let back = read_episode_csv(buf.as_slice(), true).unwrap();
    assert_eq!(back, logs);
}

#[test]
fn episode_csv_reports_bad_lines() {
    let text = "trial,t,h,s1,s2,bid,hob,won,payment,conversions,x1\n\
                0,1,1,NEVER,NEVERBEFORE,0,1.5,0,0,2,1.0\n\
                0,1,2,NEVER,NEVERBEFORE,0,oops,0,0,1,1.0\n";
    match read_episode_csv(text.as_bytes(), true) {
        Err(adlab_core::Error::Schema { line, .. }) => assert_eq!(line, 3),
        other => panic!("unexpected {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn logs_are_chain_consistent(seed in 0u64..1000, code in 0u64..8, auction in any::<bool>()) {
        let (m, a, x) = small_instance();
        let mode = if auction { BidMode::Auction { max_bid: 2.0 } } else { BidMode::ForcedOutcome };
        let log = run_episode(&OutcomePlan::from_code(code, 3), &x, &m, &a, key(seed, 1), mode).unwrap();
        prop_assert!(log.check_chain(3).is_ok());
        prop_assert_eq!(log.records[0].state, ExposureState::INITIAL);
        for r in &log.records {
            prop_assert!(r.hob > 0.0);
            prop_assert_eq!(r.won, r.bid >= r.hob);
        }
    }
}
