use graphfolio::portfolio::{
    drift_weights, price_relatives, step_value, transaction_factor, CommissionSchedule,
    PortfolioState, PriceRelative, SolverSettings, WeightVector,
};
use proptest::prelude::*;

fn simplex(raw: Vec<f64>) -> WeightVector {
    let s: f64 = raw.iter().sum();
    WeightVector::new(raw.iter().map(|v| v / s).collect()).unwrap()
}

fn weights(m: usize) -> impl Strategy<Value = WeightVector> {
    prop::collection::vec(0.001f64..1.0, m + 1).prop_map(simplex)
}

/// Root of `μ − rhs(μ)` on [0, 1] by bisection; the map is increasing in μ
/// with slope below one, so the root is unique.
fn bisect_mu(drifted: &[f64], target: &[f64], cs: f64, cb: f64) -> f64 {
    let rhs = |mu: f64| {
        let sold: f64 = (1..drifted.len())
            .map(|i| (drifted[i] - mu * target[i]).max(0.0))
            .sum();
        (1.0 - cb * drifted[0] - (cs + cb - cs * cb) * sold) / (1.0 - cb * target[0])
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid - rhs(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn hand_switch_matches_bisection() {
    let a = WeightVector::new(vec![0.0, 1.0, 0.0]).unwrap();
    let b = WeightVector::new(vec![0.0, 0.0, 1.0]).unwrap();
    let f = CommissionSchedule::new(0.0025, 0.0025).unwrap();
    let mu = transaction_factor(&a, &b, f, SolverSettings::default()).unwrap().mu;
    let oracle = bisect_mu(a.as_slice(), b.as_slice(), 0.0025, 0.0025);
    assert!((mu - oracle).abs() < 1e-10, "{mu} vs {oracle}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn fixed_point_agrees_with_bisection(
        (a, b) in (1usize..8).prop_flat_map(|m| (weights(m), weights(m))),
        cs in 0.0f64..0.05,
        cb in 0.0f64..0.05,
    ) {
        let f = CommissionSchedule::new(cs, cb).unwrap();
        let tf = transaction_factor(&a, &b, f, SolverSettings::default()).unwrap();
        prop_assert!(tf.iterations <= 200);
        prop_assert!(tf.mu > 0.0 && tf.mu <= 1.0);
        let oracle = bisect_mu(a.as_slice(), b.as_slice(), cs, cb);
        prop_assert!((tf.mu - oracle).abs() < 1e-10, "{} vs {}", tf.mu, oracle);
    }

    #[test]
    fn higher_fees_never_raise_mu(
        (a, b) in (1usize..6).prop_flat_map(|m| (weights(m), weights(m))),
        cs in 0.0f64..0.03,
        cb in 0.0f64..0.03,
        extra in 0.0f64..0.03,
    ) {
        let s = SolverSettings::default();
        let base = transaction_factor(&a, &b, CommissionSchedule::new(cs, cb).unwrap(), s).unwrap().mu;
        let more_sell = transaction_factor(&a, &b, CommissionSchedule::new(cs + extra, cb).unwrap(), s).unwrap().mu;
        let more_buy = transaction_factor(&a, &b, CommissionSchedule::new(cs, cb + extra).unwrap(), s).unwrap().mu;
        prop_assert!(more_sell <= base + 1e-12);
        prop_assert!(more_buy <= base + 1e-12);
    }

    #[test]
    fn drift_stays_on_simplex(
        (w, y) in (1usize..10).prop_flat_map(|m| (weights(m), prop::collection::vec(0.5f64..1.5, m))),
    ) {
        let mut yv = vec![1.0];
        yv.extend(y);
        let d = drift_weights(&w, &PriceRelative::new(yv).unwrap()).unwrap();
        prop_assert!((d.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(d.as_slice().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn relatives_match_elementwise_division(
        pairs in prop::collection::vec((0.1f64..100.0, 0.1f64..100.0), 1..10),
    ) {
        let (now, prev): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        let y = price_relatives(&now, &prev).unwrap();
        prop_assert_eq!(y.as_slice()[0], 1.0);
        for i in 0..now.len() {
            prop_assert_eq!(y.as_slice()[i + 1], now[i] / prev[i]);
        }
    }

    #[test]
    fn episode_value_telescopes(
        steps in prop::collection::vec((weights(3), prop::collection::vec(0.9f64..1.1, 3)), 1..60),
    ) {
        let fees = CommissionSchedule::default();
        let mut state = PortfolioState::new(3, 1000.0).unwrap();
        let mut product = 1000.0;
        let mut log_sum = 0.0;
        for (target, rel) in steps {
            let mut y = vec![1.0];
            y.extend(rel);
            let y = PriceRelative::new(y).unwrap();
            let (next, out) = step_value(&state, &y, &target, fees).unwrap();
            product *= out.mu * out.growth;
            log_sum += out.log_return;
            state = next;
        }
        prop_assert!((state.value - product).abs() <= 1e-9 * product);
        prop_assert!((1000.0 * log_sum.exp() - state.value).abs() <= 1e-9 * state.value);
    }

    #[test]
    fn frictionless_rebalance_conserves_value(a in weights(4), b in weights(4)) {
        let state = PortfolioState { weights: a, value: 250.0, last_mu: 1.0 };
        let (next, out) = step_value(&state, &PriceRelative::ones(4), &b, CommissionSchedule::frictionless()).unwrap();
        prop_assert_eq!(out.mu, 1.0);
        prop_assert_eq!(next.value, 250.0);
    }
}
