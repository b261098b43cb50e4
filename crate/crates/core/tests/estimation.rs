use adlab_core::environment::{EpisodeLog, RoundRecord};
use adlab_core::estimation::{
    delay_radius, exploration_block_size, project_to_ball, split_episode, theta_gamma,
    truncation_threshold, AuctionEstimator, ConfidenceConfig, DelayEstimator, DelayObservation,
    ThetaEstimator,
};
use adlab_core::model::{Bounds, Context, ExposureState, ThetaIndex};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

fn unit_bounds(b: f64) -> Bounds {
    Bounds {
        b,
        context_bound: 1.0,
        theta_bound: 1.0,
        delay_bound: 1.0,
        max_bid: 1.0,
        horizon: 3,
        dim: 2,
    }
}

fn log_from_outcomes(outcomes: &[bool]) -> EpisodeLog {
    let mut state = ExposureState::INITIAL;
    let mut records = Vec::new();
    for (i, &won) in outcomes.iter().enumerate() {
        records.push(RoundRecord {
            h: i + 1,
            state,
            bid: if won { f64::INFINITY } else { 0.0 },
            hob: 1.0,
            won,
            payment: if won { 1.0 } else { 0.0 },
            conversions: 1,
            forced: true,
        });
        state = state.next(won);
    }
    EpisodeLog {
        trial: 0,
        customer: 1,
        context: Context::new(vec![1.0, 1.0]),
        records,
        realized_reward: 0.0,
    }
}

fn v_matrix(est: &ThetaEstimator) -> DMatrix<f64> {
    let n = est.dim();
    DMatrix::from_row_slice(n, n, &est.v)
}

fn v_dist(v: &DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let d = a - b;
    (d.transpose() * v * &d)[(0, 0)]
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * 0.2
}

#[test]
fn worked_trajectory_split() {
    let log = log_from_outcomes(&[false, false, true, false, false, true, false]);
    let split = split_episode(&log);
    assert_eq!(split.win_bucket(ThetaIndex::FirstExposure), &[3]);
    assert_eq!(split.win_bucket(ThetaIndex::Lag(3)), &[6]);
    assert_eq!(split.win_bucket(ThetaIndex::NaturalDemand), &[1, 2]);
    assert_eq!(split.delay_bucket(1), &[4, 7]);
    assert_eq!(split.delay_bucket(2), &[5]);
    let total: usize = split.win.iter().map(Vec::len).sum::<usize>()
        + split.delay.iter().map(Vec::len).sum::<usize>();
    assert_eq!(total, 7);
}

#[test]
fn exploration_pattern_split() {
    // block l = 2 of H = 3: wins at rounds 1 and 3
    let split = split_episode(&log_from_outcomes(&[true, false, true]));
    assert_eq!(split.win_bucket(ThetaIndex::FirstExposure), &[1]);
    assert_eq!(split.win_bucket(ThetaIndex::Lag(2)), &[3]);
    assert_eq!(split.delay_bucket(1), &[2]);
    let all_lose = split_episode(&log_from_outcomes(&[false; 3]));
    assert_eq!(all_lose.win_bucket(ThetaIndex::NaturalDemand), &[1, 2, 3]);
}

#[test]
fn crtm_hand_arithmetic() {
    let mut est = ThetaEstimator::new(ThetaIndex::FirstExposure, 2);
    est.crtm_update(&Context::new(vec![1.0, 0.0]), 1.0, 1e300, 10.0);
    assert_eq!(est.v, vec![1.5, 0.0, 0.0, 1.0]);
    assert!((est.theta_hat[0] - 2.0 / 3.0).abs() < 1e-12);
    assert!(est.theta_hat[1].abs() < 1e-12);
}

#[test]
fn truncated_observation_is_zero_gradient() {
    let mut est = ThetaEstimator::new(ThetaIndex::NaturalDemand, 2);
    est.crtm_update(&Context::new(vec![1.0, 0.0]), 50.0, 1.0, 10.0);
    assert_eq!(est.theta_hat, vec![0.0, 0.0]);
    assert_eq!(est.v, vec![1.5, 0.0, 0.0, 1.0]);
}

#[test]
fn fixed_point_under_exact_prediction() {
    let mut est = ThetaEstimator::new(ThetaIndex::Lag(1), 2);
    est.theta_hat = vec![0.4, 0.7];
    let x = Context::new(vec![0.3, 1.1]);
    let y = x.dot(&est.theta_hat);
    est.crtm_update(&x, y, 1e300, 10.0);
    assert!((est.theta_hat[0] - 0.4).abs() < 1e-14 && (est.theta_hat[1] - 0.7).abs() < 1e-14);
}

#[test]
fn interior_points_are_not_projected() {
    let z = DVector::from_vec(vec![0.3, -0.2]);
    assert_eq!(project_to_ball(&z, &[2.0, 0.3, 0.3, 1.0], 1.0), z);
}

#[test]
fn projection_is_a_v_metric_minimizer() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..50 {
        let v = random_spd(&mut rng, 2);
        let radius = rng.random_range(0.5..3.0);
        let z = DVector::from_fn(2, |_, _| rng.random_range(-10.0..10.0));
        let vs: Vec<f64> = v.transpose().iter().copied().collect();
        let p = project_to_ball(&z, &vs, radius);
        assert!(p.norm() <= radius + 1e-9);
        let best = v_dist(&v, &p, &z);
        for _ in 0..2000 {
            let r = radius * rng.random::<f64>().sqrt();
            let ang = rng.random_range(0.0..std::f64::consts::TAU);
            let q = DVector::from_vec(vec![r * ang.cos(), r * ang.sin()]);
            assert!(v_dist(&v, &q, &z) >= best - 1e-8);
        }
        // boundary points near the projection are no better either
        for k in -100..=100 {
            let ang = p[1].atan2(p[0]) + k as f64 * 1e-4;
            let q = DVector::from_vec(vec![radius * ang.cos(), radius * ang.sin()]);
            assert!(v_dist(&v, &q, &z) >= best - 1e-8);
        }
    }
}

#[test]
fn optimism_sits_on_the_ellipsoid_boundary() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let mut est = ThetaEstimator::new(ThetaIndex::FirstExposure, 2);
        for _ in 0..rng.random_range(0..20) {
            let x = Context::new(vec![rng.random_range(0.1..2.0), rng.random_range(0.1..2.0)]);
            est.crtm_update(&x, rng.random_range(0.0..5.0), 1e9, 10.0);
        }
        let x = Context::new(vec![
            rng.random_range(0.1..2.0),
            rng.random_range(-1.0..2.0),
        ]);
        let gamma = rng.random_range(0.01..4.0);
        let tilde = est.optimistic_theta(&x, gamma);
        let center = DVector::from_column_slice(&est.theta_hat);
        assert!((v_dist(&v_matrix(&est), &tilde, &center) - gamma).abs() < 1e-9);
        let m = est.optimistic_mean(&x, gamma, f64::NEG_INFINITY);
        assert!(m >= est.mean(&x));
        assert!((m - x.dot(tilde.as_slice())).abs() < 1e-9);
    }
}

// Projected gradient ascent in whitened coordinates w = L^T (theta - c),
// V = L L^T, where the ellipsoid is the Euclidean ball ||w||^2 <= gamma.
fn ellipsoid_max(v: &DMatrix<f64>, c: &DVector<f64>, x: &DVector<f64>, gamma: f64) -> f64 {
    let l = v.clone().cholesky().unwrap().l();
    let g = l.clone().solve_lower_triangular(x).unwrap();
    let radius = gamma.sqrt();
    let mut w = DVector::zeros(x.len());
    for _ in 0..1000 {
        w += &g * 0.1;
        if w.norm() > radius {
            w *= radius / w.norm();
        }
    }
    let theta = c + l.transpose().solve_upper_triangular(&w).unwrap();
    x.dot(&theta)
}

#[test]
fn optimistic_mean_matches_ellipsoid_maximum() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let mut est = ThetaEstimator::new(ThetaIndex::Lag(1), 2);
        for _ in 0..10 {
            let x = Context::new(vec![rng.random_range(0.1..2.0), rng.random_range(0.1..2.0)]);
            est.crtm_update(&x, rng.random_range(0.0..5.0), 1e9, 10.0);
        }
        let x = Context::new(vec![
            rng.random_range(-1.0..2.0),
            rng.random_range(-1.0..2.0),
        ]);
        let gamma = rng.random_range(0.1..3.0);
        let oracle = ellipsoid_max(
            &v_matrix(&est),
            &DVector::from_column_slice(&est.theta_hat),
            &DVector::from_column_slice(x.as_slice()),
            gamma,
        );
        assert!((est.optimistic_mean(&x, gamma, f64::NEG_INFINITY) - oracle).abs() < 1e-6);
    }
}

#[test]
fn optimistic_mean_identity_metric_and_floor() {
    let mut est = ThetaEstimator::new(ThetaIndex::FirstExposure, 2);
    est.theta_hat = vec![0.5, -0.2];
    let x = Context::new(vec![0.6, 0.8]);
    assert!((est.optimistic_mean(&x, 2.25, 0.0) - (0.3 - 0.16 + 1.5)).abs() < 1e-12);
    assert!((est.optimistic_mean(&x, 0.0, 0.01) - 0.14).abs() < 1e-15);
    est.theta_hat = vec![-1.0, -1.0];
    assert_eq!(est.optimistic_mean(&x, 0.0, 0.01), 0.01);
}

#[test]
fn elliptical_potential_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for run in 0..10 {
        let dim = 2 + run % 3;
        let mut est = ThetaEstimator::new(ThetaIndex::FirstExposure, dim);
        let det0 = v_matrix(&est).determinant();
        let mut potential = 0.0;
        for _ in 0..500 {
            let x = Context::new((0..dim).map(|_| rng.random_range(-3.0..3.0)).collect());
            est.crtm_update(&x, rng.random_range(0.0..4.0), 1e9, 10.0);
            let n = est.inverse_norm(x.as_slice());
            potential += (n * n).min(1.0);
        }
        let bound = 2.0 * (v_matrix(&est).determinant() / det0).ln();
        assert!(potential <= bound, "{potential} > {bound}");
    }
}

#[test]
fn tsmle_single_and_exact() {
    let mut est = DelayEstimator::new(1);
    est.observe(3.0, 1.5, 0.01);
    assert_eq!(est.estimate(), Some(2.0));

    let theta = vec![0.7, 1.3];
    let mut bank = vec![
        ThetaEstimator::new(ThetaIndex::NaturalDemand, 2),
        ThetaEstimator::new(ThetaIndex::FirstExposure, 2),
    ];
    bank[1].theta_hat = theta.clone();
    let mut est = DelayEstimator::new(2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let x = Context::new(vec![rng.random_range(0.1..2.0), rng.random_range(0.1..2.0)]);
        let exact = 0.35 * x.dot(&theta);
        est.tsmle_update(
            &[DelayObservation {
                conversions: exact,
                carried: ThetaIndex::FirstExposure,
            }],
            &x,
            &bank,
            0.01,
        );
    }
    assert!((est.estimate().unwrap() - 0.35).abs() < 1e-12);
    assert_eq!(est.count, 100);
}

#[test]
fn tsmle_concentrates() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut hits = 0;
    for _ in 0..200 {
        let mut est = DelayEstimator::new(1);
        for _ in 0..10_000 {
            let rate: f64 = rng.random_range(1.0..5.0);
            let y = Poisson::new(0.7 * rate).unwrap().sample(&mut rng);
            est.observe(y, rate, 0.01);
        }
        if (est.estimate().unwrap() - 0.7).abs() <= 0.05 {
            hits += 1;
        }
    }
    assert!(hits >= 190, "{hits}/200");
}

#[test]
fn ridge_examples_and_consistency() {
    let est = AuctionEstimator::new(1, 2);
    assert_eq!(est.beta(), vec![0.0, 0.0]);
    let mut est = AuctionEstimator::new(1, 2);
    est.ridge_update(&Context::new(vec![1.0, 0.0]), 4.0);
    assert!((est.beta()[0] - 2.0).abs() < 1e-12 && est.beta()[1].abs() < 1e-12);

    let beta = [0.6, 1.1];
    let sigma = 0.8;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (mut beta_ok, mut sigma_ok) = (0, 0);
    let reps = 100;
    for _ in 0..reps {
        let mut est = AuctionEstimator::new(1, 2);
        for _ in 0..10_000 {
            let x = Context::new(vec![rng.random_range(0.1..2.0), rng.random_range(0.1..2.0)]);
            let z: f64 = StandardNormal.sample(&mut rng);
            est.ridge_update(&x, x.dot(&beta) + sigma * z);
        }
        let b = est.beta();
        if ((b[0] - beta[0]).powi(2) + (b[1] - beta[1]).powi(2)).sqrt() <= 0.1 {
            beta_ok += 1;
        }
        if (est.sigma().unwrap() - sigma).abs() <= 0.05 {
            sigma_ok += 1;
        }
    }
    assert!(beta_ok >= 95, "{beta_ok}");
    assert!(sigma_ok >= 95, "{sigma_ok}");
}

#[test]
fn ridge_matches_direct_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut est = AuctionEstimator::new(2, 3);
    let mut gram = DMatrix::<f64>::identity(3, 3);
    let mut moment = DVector::<f64>::zeros(3);
    for _ in 0..200 {
        let x = DVector::from_fn(3, |_, _| rng.random_range(-1.0..2.0));
        let y = rng.random_range(-1.0..3.0);
        est.ridge_update(&Context::new(x.as_slice().to_vec()), y);
        gram += &x * x.transpose();
        moment += &x * y;
    }
    let direct = gram.lu().solve(&moment).unwrap();
    for (a, b) in est.beta().iter().zip(direct.iter()) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn confidence_constants() {
    let b = unit_bounds(0.01);
    let g = theta_gamma(&b, 100, 0.1, 1.0);
    assert!((g - 97_164.544_143_893_6).abs() < 1e-6);
    assert_eq!(theta_gamma(&b, 100, 0.1, 0.0), 0.0);
    assert!(theta_gamma(&b, 200, 0.1, 1.0) > g);
    assert!(theta_gamma(&b, 100, 0.05, 1.0) > g);
    let gamma = truncation_threshold(&b, 20_000, 0.01);
    assert!((gamma - 46.541_775_896_248_6).abs() < 1e-9);
    assert!(truncation_threshold(&b, 40_000, 0.01) > gamma);

    let unit = unit_bounds(1.0);
    let g = theta_gamma(&unit, 20_000, 0.01, 1.0);
    assert!((g - 486_034.336_145_621_1).abs() < 1e-6);
    let r = delay_radius(600, g, &unit, 20_000, 0.01, 1.0);
    assert!((r - 1_409.856_598_071_594).abs() < 1e-8);
    assert!((delay_radius(2400, g, &unit, 20_000, 0.01, 1.0) - r / 2.0).abs() < 1e-9);
    assert_eq!(delay_radius(0, g, &unit, 20_000, 0.01, 1.0), f64::INFINITY);
    let mut taller = unit;
    taller.horizon = 4;
    assert!(delay_radius(600, g, &taller, 20_000, 0.01, 1.0) > r);
    assert!(delay_radius(600, 2.0 * g, &unit, 20_000, 0.01, 1.0) > r);

    let preset = Bounds {
        b: 0.01,
        context_bound: 10.0,
        theta_bound: 10.0,
        delay_bound: 5.0,
        max_bid: 100.0,
        horizon: 3,
        dim: 2,
    };
    assert!(
        (theta_gamma(&preset, 20_000, 0.01, 1.0) / 2_450_435_832.300_328_7 - 1.0).abs() < 1e-12
    );
    assert_eq!(exploration_block_size(&preset, 20_000), 2591);
    let mut half = unit_bounds(0.5);
    half.dim = 2;
    assert_eq!(exploration_block_size(&half, 20_000), 519);
}

#[test]
fn confidence_config_overrides() {
    let b = unit_bounds(0.01);
    let cfg = ConfidenceConfig::new(&b, 100, 0.1, 0.5, None, Some(100_000.0)).unwrap();
    assert_eq!(cfg.truncation, 100_000.0);
    assert!((cfg.scaled_gamma() - 0.5 * theta_gamma(&b, 100, 0.1, 1.0)).abs() < 1e-9);
    assert!(ConfidenceConfig::new(&b, 100, 1.5, 1.0, None, None).is_err());
    assert!(ConfidenceConfig::new(&b, 100, 0.1, -1.0, None, None).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn crtm_bookkeeping(
        xs in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0, 0.0f64..20.0), 1..40),
        bound in 0.5f64..5.0,
    ) {
        let mut est = ThetaEstimator::new(ThetaIndex::FirstExposure, 2);
        let mut v = DMatrix::<f64>::identity(2, 2);
        for &(a, b, y) in &xs {
            let x = DVector::from_vec(vec![a, b]);
            v += &x * x.transpose() * 0.5;
            est.crtm_update(&Context::new(vec![a, b]), y, 50.0, bound);
            prop_assert!(DVector::from_column_slice(&est.theta_hat).norm() <= bound + 1e-9);
        }
        let got = v_matrix(&est);
        prop_assert!((got - v).abs().max() < 1e-9);
        prop_assert_eq!(est.updates as usize, xs.len());
    }

    #[test]
    fn split_partitions_rounds(code in 0u32..(1 << 9)) {
        let outcomes: Vec<bool> = (0..9).map(|h| code >> h & 1 == 1).collect();
        let log = log_from_outcomes(&outcomes);
        let split = split_episode(&log);
        let mut seen: Vec<usize> = split.win.iter().chain(split.delay.iter()).flatten().copied().collect();
        seen.sort();
        prop_assert_eq!(seen, (1..=9).collect::<Vec<_>>());
        for (slot, rounds) in split.win.iter().enumerate() {
            for &h in rounds {
                let r = &log.records[h - 1];
                let idx = ThetaIndex::from_slot(slot);
                prop_assert!((r.won && r.state.win_index() == idx) || (!r.won && idx == ThetaIndex::NaturalDemand));
            }
        }
        for (i, rounds) in split.delay.iter().enumerate() {
            for &h in rounds {
                let r = &log.records[h - 1];
                prop_assert!(!r.won && r.state.since_last == adlab_core::model::Recency::Lag(i + 1));
            }
        }
    }

    #[test]
    fn radius_scales_inverse_sqrt(n in 1u64..100_000) {
        let b = unit_bounds(0.5);
        let r1 = delay_radius(n, 10.0, &b, 1000, 0.05, 1.0);
        let r4 = delay_radius(4 * n, 10.0, &b, 1000, 0.05, 1.0);
        prop_assert!((r4 - r1 / 2.0).abs() <= 1e-12 * r1);
    }
}
