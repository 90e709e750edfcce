//! Indicator streams checked against straight-line re-implementations.

use chrono::{Days, NaiveDate};
use graphfolio::market_data::indicators::CsiParams;
use graphfolio::market_data::{
    compute_indicators, Bar, DmiParams, IndicatorKind, IndicatorParams, OhlcvSeries,
};
use proptest::prelude::*;

const N: usize = 20;

fn small_params() -> IndicatorParams {
    IndicatorParams {
        atr: 3,
        cci: 4,
        ema: 3,
        hma: 4,
        momentum: 2,
        demand: 3,
        csi: CsiParams {
            period: 3,
            point_value: 2.0,
            margin: 4.0,
            commission: 5.0,
        },
        dmi: DmiParams {
            std_window: 3,
            avg_window: 3,
            base_period: 4,
            min_period: 2,
            max_period: 5,
        },
    }
}

struct Ohlcv {
    h: Vec<f64>,
    l: Vec<f64>,
    c: Vec<f64>,
    v: Vec<f64>,
}

/// Upward ramp with a deterministic wiggle so no indicator is degenerate.
fn ramp() -> Ohlcv {
    let c: Vec<f64> = (0..N)
        .map(|t| 10.0 + 0.5 * t as f64 + 0.8 * (1.3 * t as f64).sin())
        .collect();
    let o: Vec<f64> = (0..N).map(|t| if t == 0 { c[0] } else { c[t - 1] }).collect();
    let h = (0..N)
        .map(|t| o[t].max(c[t]) + 0.2 + 0.1 * (t % 3) as f64)
        .collect();
    let l = (0..N)
        .map(|t| o[t].min(c[t]) - 0.3 - 0.05 * (t % 4) as f64)
        .collect();
    let v = (0..N).map(|t| 1000.0 + 150.0 * ((t * 7) % 5) as f64).collect();
    Ohlcv { h, l, c, v }
}

fn to_series(d: &Ohlcv) -> OhlcvSeries {
    let d0 = NaiveDate::from_ymd_opt(2021, 3, 1).unwrap();
    let bars = (0..d.c.len())
        .map(|t| Bar {
            date: d0 + Days::new(t as u64),
            open: if t == 0 { d.c[0] } else { d.c[t - 1] },
            high: d.h[t],
            low: d.l[t],
            close: d.c[t],
            volume: d.v[t],
        })
        .collect();
    OhlcvSeries::new("RAMP", bars).unwrap()
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn tr(d: &Ohlcv, t: usize) -> f64 {
    if t == 0 {
        return d.h[0] - d.l[0];
    }
    let a = d.h[t] - d.l[t];
    let b = (d.h[t] - d.c[t - 1]).abs();
    let c = (d.l[t] - d.c[t - 1]).abs();
    a.max(b).max(c)
}

/// Wilder average of `x[first..=t]` written as a closed-form weighted sum.
fn wilder_closed(x: &[f64], n: usize, first: usize, t: usize) -> f64 {
    let a = 1.0 / n as f64;
    let seed_end = first + n - 1;
    let seed = mean(&x[first..=seed_end]);
    let mut v = (1.0 - a).powi((t - seed_end) as i32) * seed;
    for j in (seed_end + 1)..=t {
        v += a * (1.0 - a).powi((t - j) as i32) * x[j];
    }
    v
}

/// EMA with SMA seed as a closed-form weighted sum.
fn ema_closed(x: &[f64], n: usize, first: usize, t: usize) -> f64 {
    let lam = 2.0 / (n as f64 + 1.0);
    let seed_end = first + n - 1;
    let seed = mean(&x[first..=seed_end]);
    let mut v = (1.0 - lam).powi((t - seed_end) as i32) * seed;
    for j in (seed_end + 1)..=t {
        v += lam * (1.0 - lam).powi((t - j) as i32) * x[j];
    }
    v
}

fn oracle_atr(d: &Ohlcv, n: usize, t: usize) -> f64 {
    let trs: Vec<f64> = (0..=t).map(|k| tr(d, k)).collect();
    wilder_closed(&trs, n, 0, t)
}

fn oracle_cci(d: &Ohlcv, n: usize, t: usize) -> f64 {
    let tp: Vec<f64> = (t + 1 - n..=t).map(|k| (d.h[k] + d.l[k] + d.c[k]) / 3.0).collect();
    let m = mean(&tp);
    let md = tp.iter().map(|x| (x - m).abs()).sum::<f64>() / n as f64;
    (tp[n - 1] - m) / (0.015 * md)
}

fn wma(x: &[f64]) -> f64 {
    // weights 1..=len, oldest first
    let k = x.len();
    let num: f64 = x.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).sum();
    num / (k * (k + 1) / 2) as f64
}

fn oracle_hma(c: &[f64], n: usize, t: usize) -> f64 {
    let s = (n as f64).sqrt().round() as usize;
    let raw = |u: usize| 2.0 * wma(&c[u + 1 - n / 2..=u]) - wma(&c[u + 1 - n..=u]);
    let raws: Vec<f64> = (t + 1 - s..=t).map(raw).collect();
    wma(&raws)
}

fn oracle_dmi(c: &[f64], p: &DmiParams, t: usize) -> f64 {
    let sd = |u: usize| {
        let w = &c[u + 1 - p.std_window..=u];
        let m = mean(w);
        (w.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / w.len() as f64).sqrt()
    };
    let avg = mean(&(t + 1 - p.avg_window..=t).map(sd).collect::<Vec<_>>());
    let vi = if avg > 0.0 { sd(t) / avg } else { 1.0 };
    let period = ((p.base_period as f64 / vi).floor() as usize).clamp(p.min_period, p.max_period);
    let changes: Vec<f64> = (t + 1 - period..=t).map(|k| c[k] - c[k - 1]).collect();
    let up: f64 = changes.iter().filter(|x| **x > 0.0).sum();
    let down: f64 = -changes.iter().filter(|x| **x < 0.0).sum::<f64>();
    100.0 * up / (up + down)
}

fn oracle_adx(d: &Ohlcv, n: usize) -> Vec<Option<f64>> {
    let len = d.c.len();
    let pdm = |t: usize| {
        let up = d.h[t] - d.h[t - 1];
        let dn = d.l[t - 1] - d.l[t];
        if up > dn && up > 0.0 { up } else { 0.0 }
    };
    let mdm = |t: usize| {
        let up = d.h[t] - d.h[t - 1];
        let dn = d.l[t - 1] - d.l[t];
        if dn > up && dn > 0.0 { dn } else { 0.0 }
    };
    let smooth = |f: &dyn Fn(usize) -> f64, t: usize| {
        let mut s: f64 = (1..=n).map(f).sum();
        for k in (n + 1)..=t {
            s = s - s / n as f64 + f(k);
        }
        s
    };
    let dx: Vec<Option<f64>> = (0..len)
        .map(|t| {
            if t < n {
                return None;
            }
            let trn = smooth(&|k| tr(d, k), t);
            let p = 100.0 * smooth(&pdm, t) / trn;
            let m = 100.0 * smooth(&mdm, t) / trn;
            Some(100.0 * (p - m).abs() / (p + m))
        })
        .collect();
    let dxv: Vec<f64> = dx.iter().map(|x| x.unwrap_or(0.0)).collect();
    (0..len)
        .map(|t| (t >= 2 * n - 1).then(|| wilder_closed(&dxv, n, n, t)))
        .collect()
}

fn oracle_csi(d: &Ohlcv, p: &CsiParams, t: usize) -> f64 {
    let n = p.period;
    let adx = oracle_adx(d, n);
    let adxr = (adx[t].unwrap() + adx[t - n].unwrap()) / 2.0;
    adxr * oracle_atr(d, n, t) * p.point_value / p.margin.sqrt() / (150.0 + p.commission) * 100.0
}

fn oracle_demand(d: &Ohlcv, n: usize, t: usize) -> f64 {
    let wp = |k: usize| d.h[k] + d.l[k] + 2.0 * d.c[k];
    let pressures = |k: usize| {
        let rng: Vec<f64> = (k + 1 - n..=k)
            .map(|j| d.h[j].max(d.h[j - 1]) - d.l[j].min(d.l[j - 1]))
            .collect();
        let kk = 3.0 * d.c[k] / mean(&rng);
        let rv = d.v[k] / ema_closed(&d.v, n, 0, k);
        let ch = (wp(k) - wp(k - 1)) / wp(k - 1);
        let damp = rv * (-kk * ch.abs()).exp();
        if ch >= 0.0 { (rv, damp) } else { (damp, rv) }
    };
    let mut bp = vec![0.0; t + 1];
    let mut sp = vec![0.0; t + 1];
    for k in n..=t {
        (bp[k], sp[k]) = pressures(k);
    }
    let b = ema_closed(&bp, n, n, t);
    let s = ema_closed(&sp, n, n, t);
    100.0 * (b - s) / b.max(s)
}

fn check(kind: IndicatorKind, got: &[f64], warm: usize, oracle: impl Fn(usize) -> f64) {
    assert_eq!(got.len(), N - warm, "{}", kind.name());
    for (i, &g) in got.iter().enumerate() {
        let t = warm + i;
        let want = oracle(t);
        assert!(
            (g - want).abs() <= 1e-9 * want.abs().max(1.0),
            "{} at {t}: {g} vs oracle {want}",
            kind.name()
        );
    }
}

#[test]
fn ramp_matches_naive_formulas() {
    let d = ramp();
    let p = small_params();
    let set = compute_indicators(&to_series(&d), &p).unwrap();
    let w = |k| set.warmup(k);
    check(IndicatorKind::Atr, set.defined(IndicatorKind::Atr), w(IndicatorKind::Atr), |t| {
        oracle_atr(&d, p.atr, t)
    });
    check(IndicatorKind::Cci, set.defined(IndicatorKind::Cci), w(IndicatorKind::Cci), |t| {
        oracle_cci(&d, p.cci, t)
    });
    check(IndicatorKind::Ema, set.defined(IndicatorKind::Ema), w(IndicatorKind::Ema), |t| {
        ema_closed(&d.c, p.ema, 0, t)
    });
    check(IndicatorKind::Hma, set.defined(IndicatorKind::Hma), w(IndicatorKind::Hma), |t| {
        oracle_hma(&d.c, p.hma, t)
    });
    check(
        IndicatorKind::Momentum,
        set.defined(IndicatorKind::Momentum),
        w(IndicatorKind::Momentum),
        |t| d.c[t] - d.c[t - p.momentum],
    );
    check(IndicatorKind::Dmi, set.defined(IndicatorKind::Dmi), w(IndicatorKind::Dmi), |t| {
        oracle_dmi(&d.c, &p.dmi, t)
    });
    check(IndicatorKind::Csi, set.defined(IndicatorKind::Csi), w(IndicatorKind::Csi), |t| {
        oracle_csi(&d, &p.csi, t)
    });
    check(
        IndicatorKind::DemandIndex,
        set.defined(IndicatorKind::DemandIndex),
        w(IndicatorKind::DemandIndex),
        |t| oracle_demand(&d, p.demand, t),
    );
    for &v in set.defined(IndicatorKind::DemandIndex) {
        assert!((-100.0..=100.0).contains(&v));
    }
}

#[test]
fn ema_of_constant_is_constant() {
    let d = Ohlcv {
        h: vec![7.5; N],
        l: vec![7.5; N],
        c: vec![7.5; N],
        v: vec![10.0; N],
    };
    let set = compute_indicators(&to_series(&d), &small_params()).unwrap();
    assert!(set.defined(IndicatorKind::Ema).iter().all(|&v| v == 7.5));
}

fn random_series(closes: Vec<f64>) -> Ohlcv {
    let n = closes.len();
    let h = (0..n)
        .map(|t| closes[t].max(if t == 0 { closes[0] } else { closes[t - 1] }) * 1.01)
        .collect();
    let l = (0..n)
        .map(|t| closes[t].min(if t == 0 { closes[0] } else { closes[t - 1] }) * 0.99)
        .collect();
    Ohlcv {
        h,
        l,
        v: (0..n).map(|t| 500.0 + (t % 7) as f64 * 30.0).collect(),
        c: closes,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn indicators_are_causal(steps in prop::collection::vec(-0.05f64..0.05, 60..90), cut in 0usize..20) {
        let mut closes = vec![50.0];
        for s in &steps {
            closes.push(closes.last().unwrap() * (1.0 + s));
        }
        let series = to_series(&random_series(closes));
        let p = IndicatorParams::default();
        let full = compute_indicators(&series, &p).unwrap();
        let end = p.max_warmup() + 1 + cut;
        let prefix = compute_indicators(&series.truncated(end), &p).unwrap();
        for k in IndicatorKind::ALL {
            for t in 0..=end {
                prop_assert_eq!(full.get(k, t), prefix.get(k, t), "{} at {}", k.name(), t);
            }
        }
    }

    #[test]
    fn ema_recurrence_matches_weighted_sum(closes in prop::collection::vec(1.0f64..100.0, 50..70)) {
        let d = random_series(closes);
        let p = IndicatorParams::default();
        let set = compute_indicators(&to_series(&d), &p).unwrap();
        for t in set.warmup(IndicatorKind::Ema)..d.c.len() {
            let want = ema_closed(&d.c, p.ema, 0, t);
            let got = set.get(IndicatorKind::Ema, t).unwrap();
            prop_assert!((got - want).abs() < 1e-9 * want.abs().max(1.0));
        }
    }
}
