use std::fs;

use chrono::NaiveDate;
use graphfolio::backtest::{
    cvar, max_drawdown, run_online, sharpe_ratio, train_offline, BacktestError, BufferedDay,
    Models, OnlineBuffer, TrainConfig,
};
use graphfolio::market_data::synth::{generate, SynthConfig};
use graphfolio::market_data::{make_split, OhlcvSeries, SplitPanels, SplitSpec};
use graphfolio::portfolio::CommissionSchedule;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn brute_drawdown(curve: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..curve.len() {
        for j in i..curve.len() {
            worst = worst.max((curve[i] - curve[j]) / curve[i]);
        }
    }
    worst
}

#[test]
fn drawdown_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let n = rng.random_range(1..60);
        let curve: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..10.0)).collect();
        let got = max_drawdown(&curve).unwrap();
        assert_eq!(got, brute_drawdown(&curve));
        assert!((0.0..=1.0).contains(&got));
    }
}

/// VaR and CVaR by enumerating every candidate threshold.
fn brute_cvar(losses: &[f64], alpha: f64) -> (f64, f64) {
    let n = losses.len() as f64;
    // smallest sample whose empirical CDF reaches α
    let var = losses
        .iter()
        .copied()
        .filter(|v| losses.iter().filter(|u| *u <= v).count() as f64 >= alpha * n)
        .fold(f64::INFINITY, f64::min);
    let tail: Vec<f64> = losses.iter().copied().filter(|v| *v >= var).collect();
    (var, tail.iter().sum::<f64>() / tail.len() as f64)
}

#[test]
fn cvar_matches_enumeration() {
    let grid: Vec<f64> = (1..=100).map(f64::from).collect();
    assert_eq!(cvar(&grid, 0.95).unwrap(), (95.0, 97.5));
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..500 {
        let n = rng.random_range(1..80);
        // integer-valued losses so ties occur
        let losses: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(-10..10))).collect();
        let alpha = rng.random_range(0.01..0.99);
        let (var, cv) = cvar(&losses, alpha).unwrap();
        let (bv, bc) = brute_cvar(&losses, alpha);
        assert_eq!(var, bv);
        assert!((cv - bc).abs() < 1e-12);
        assert!(cv >= var);
    }
    assert!(cvar(&[], 0.9).is_err());
    assert!(cvar(&[1.0], 1.0).is_err());
}

proptest! {
    #[test]
    fn sharpe_is_scale_invariant(
        excess in prop::collection::vec(-0.05f64..0.05, 2..40),
        k in 0.01f64..100.0,
    ) {
        let zeros = vec![0.0; excess.len()];
        let scaled: Vec<f64> = excess.iter().map(|e| e * k).collect();
        match (sharpe_ratio(&excess, &zeros), sharpe_ratio(&scaled, &zeros)) {
            (Ok(a), Ok(b)) => prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0)),
            (Err(_), Err(_)) => {}
            other => prop_assert!(false, "{:?}", other),
        }
    }
}

fn day(i: u32) -> BufferedDay {
    BufferedDay {
        date: NaiveDate::from_ymd_opt(2021, 1, 1).unwrap() + chrono::Days::new(i.into()),
        row: i as usize,
    }
}

#[test]
fn buffer_keeps_the_last_eleven_days() {
    let mut b = OnlineBuffer::new();
    for i in 0..3 {
        b.push(day(i)).unwrap();
    }
    assert_eq!(b.rows(), vec![0, 1, 2]);
    for i in 3..15 {
        b.push(day(i)).unwrap();
        assert!(b.len() <= 11);
    }
    assert_eq!(b.rows(), (4..15).collect::<Vec<_>>());
    assert_eq!(b.latest_date(), Some(day(14).date));
    assert!(matches!(b.push(day(14)), Err(BacktestError::Chronology { .. })));
    assert!(matches!(b.push(day(3)), Err(BacktestError::Chronology { .. })));
}

fn small_config() -> TrainConfig {
    let mut c = TrainConfig {
        window: 8,
        corr_window: 5,
        rsae_epochs: 2,
        span: 10,
        batches_per_epoch: 3,
        epochs: 1,
        ..TrainConfig::default()
    };
    c.agent.actor_conv2 = 4;
    c
}

fn market(days: usize, volatility: f64, seed: u64) -> Vec<OhlcvSeries> {
    generate(&SynthConfig {
        assets: 3,
        days,
        volatility: vec![volatility],
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn split_at(series: &[OhlcvSeries], train_end: usize) -> SplitPanels {
    let d = series[0].dates();
    let spec = SplitSpec::Explicit {
        train: (d[0], d[train_end]),
        test: (d[train_end + 1], *d.last().unwrap()),
    };
    make_split(series, &spec).unwrap()
}

#[test]
fn zero_batches_leave_models_unchanged() {
    let split = split_at(&market(120, 0.01, 3), 90);
    let cfg = TrainConfig {
        rsae_epochs: 0,
        epochs: 0,
        ..small_config()
    };
    let out = train_offline(&split, &cfg, 7).unwrap();
    let fresh = Models::new(3, &cfg, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
    assert_eq!(out.models, fresh);
    assert!(out.batches.is_empty() && out.steps.is_empty());
}

#[test]
fn offline_training_is_deterministic() {
    let split = split_at(&market(120, 0.01, 4), 90);
    let cfg = small_config();
    let a = train_offline(&split, &cfg, 11).unwrap();
    let b = train_offline(&split, &cfg, 11).unwrap();
    assert_eq!(a.models, b.models);
    assert_eq!(a.batches, b.batches);
    assert_eq!(a.batches.len(), 3);
    assert_eq!(a.steps.len(), 30);
    let c = train_offline(&split, &cfg, 12).unwrap();
    assert_ne!(a.models, c.models);
}

#[test]
fn short_training_range_names_the_minimum() {
    let split = split_at(&market(100, 0.01, 5), 55);
    let err = train_offline(&split, &small_config(), 1).unwrap_err();
    match &err {
        BacktestError::InsufficientHistory { required, .. } => assert_eq!(*required, 10),
        e => panic!("unexpected {e}"),
    }
    assert!(err.to_string().contains("need at least 10"), "{err}");
}

#[test]
fn flat_frictionless_market_keeps_its_value() {
    let series = market(110, 0.0, 6);
    let split = split_at(&series, 80);
    let mut cfg = small_config();
    cfg.fees = CommissionSchedule::frictionless();
    let trained = train_offline(&split, &cfg, 2).unwrap();
    let start = split.panel.dates()[split.test.start];
    let (_, report) = run_online(&split.panel, start, split.test.len(), trained.models, &cfg, 3).unwrap();
    assert_eq!(report.roi_pct(), 0.0);
    assert!(report.values.iter().all(|v| *v == cfg.initial_value));
    let dir = tempfile::tempdir().unwrap();
    let m = report.write_dir(dir.path(), 0.95, None).unwrap();
    assert_eq!(m.sharpe, None);
    let text = fs::read_to_string(dir.path().join("metrics.txt")).unwrap();
    assert!(text.contains("roi = 0.00\n"), "{text}");
}

#[test]
fn online_episode_accounting_and_causality() {
    let series = market(140, 0.015, 8);
    let split = split_at(&series, 90);
    let cfg = small_config();
    let trained = train_offline(&split, &cfg, 4).unwrap();
    let start = split.panel.dates()[split.test.start];
    let days = split.test.len();
    let (_, report) = run_online(&split.panel, start, days, trained.models.clone(), &cfg, 5).unwrap();
    assert_eq!(report.len(), days);

    let total: f64 = report.log_returns.iter().sum();
    let identity = report.initial_value * total.exp();
    assert!((report.final_value() - identity).abs() <= 1e-9 * identity);
    for w in &report.weights {
        assert!(w.as_slice().iter().all(|v| *v >= 0.0));
        assert!((w.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    for (trained, date) in report.trained_through.iter().zip(&report.dates) {
        assert!(trained <= date);
    }
    let m = report.metrics(0.95, None).unwrap();
    assert!(m.cvar >= m.var);
    assert!((0.0..=100.0).contains(&m.mdd_pct));

    // written files parse back and reruns are byte-identical
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    report.write_dir(d1.path(), 0.95, None).unwrap();
    let (_, again) = run_online(&split.panel, start, days, trained.models, &cfg, 5).unwrap();
    again.write_dir(d2.path(), 0.95, None).unwrap();
    for f in ["report.csv", "weights.csv", "metrics.txt"] {
        assert_eq!(
            fs::read(d1.path().join(f)).unwrap(),
            fs::read(d2.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let mut rdr = csv::Reader::from_path(d1.path().join("report.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["date", "value", "roi_pct"]);
    let values: Vec<f64> = rdr
        .records()
        .map(|r| r.unwrap()[1].parse().unwrap())
        .collect();
    assert_eq!(values, report.values);
    let mut rdr = csv::Reader::from_path(d1.path().join("weights.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["date", "cash", "SYN00", "SYN01", "SYN02"]);
    assert_eq!(rdr.records().count(), days);
}

#[test]
fn online_run_rejects_bad_ranges() {
    let series = market(110, 0.01, 9);
    let split = split_at(&series, 80);
    let cfg = small_config();
    let models = Models::new(3, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let last = *split.panel.dates().last().unwrap();
    assert!(matches!(
        run_online(&split.panel, last, 2, models.clone(), &cfg, 0),
        Err(BacktestError::PastEnd { .. })
    ));
    assert!(matches!(
        run_online(&split.panel, split.panel.dates()[5], 2, models.clone(), &cfg, 0),
        Err(BacktestError::InsufficientHistory { .. })
    ));
    let weekend = NaiveDate::from_ymd_opt(2015, 1, 10).unwrap();
    assert!(matches!(
        run_online(&split.panel, weekend, 2, models, &cfg, 0),
        Err(BacktestError::UnknownDate(_))
    ));
}
