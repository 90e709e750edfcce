//! The eight technical indicators used as features.
//!
//! Definitions follow the usual textbook forms (Murphy, *Technical Analysis of
//! the Financial Markets*, 1999; Wilder, *New Concepts in Technical Trading
//! Systems*, 1978; Chande & Kroll, *The New Technical Trader*, 1994; Sibbet's
//! Demand Index as described by Colby, *Encyclopedia of Technical Market
//! Indicators*, 2003). Every stream is causal and has a fixed warm-up: index
//! `i` is defined iff `i >= warmup`.
//!
//! | indicator | definition | warm-up |
//! |---|---|---|
//! | ATR(n) | true range `TR_0 = H−L`, `TR_t = max(H−L, |H−C₋₁|, |L−C₋₁|)`; seeded with the mean of `TR_0..TR_{n−1}`, then Wilder smoothing `(ATR₋₁·(n−1) + TR)/n` | n−1 |
//! | CCI(n) | `(TP − SMA_n(TP)) / (0.015 · MD)` with `TP = (H+L+C)/3` and MD the mean absolute deviation of TP around its SMA; 0 when MD = 0 | n−1 |
//! | CSI(n) | Wilder's commodity selection index `ADXR · ATR_n · 100 · V/(√M · (150+C))` | 3n−1 |
//! | Demand index(n) | see [`demand_index`] | 2n−1 |
//! | DMI | Chande's dynamic momentum index, an RSI whose period shrinks as volatility rises; see [`dynamic_momentum`] | max(s+a−2, max period) |
//! | EMA(n) | seeded with SMA_n at n−1, then `λ·C + (1−λ)·EMA₋₁`, `λ = 2/(n+1)` | n−1 |
//! | HMA(n) | `WMA_s(2·WMA_{n/2}(C) − WMA_n(C))`, `s = round(√n)` | n+s−2 |
//! | Momentum(n) | `C_t − C_{t−n}` | n |

use super::{DataError, OhlcvSeries, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IndicatorKind {
    Atr,
    Cci,
    Csi,
    DemandIndex,
    Dmi,
    Ema,
    Hma,
    Momentum,
}

impl IndicatorKind {
    pub const ALL: [IndicatorKind; 8] = [
        IndicatorKind::Atr,
        IndicatorKind::Cci,
        IndicatorKind::Csi,
        IndicatorKind::DemandIndex,
        IndicatorKind::Dmi,
        IndicatorKind::Ema,
        IndicatorKind::Hma,
        IndicatorKind::Momentum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IndicatorKind::Atr => "atr",
            IndicatorKind::Cci => "cci",
            IndicatorKind::Csi => "csi",
            IndicatorKind::DemandIndex => "demand_index",
            IndicatorKind::Dmi => "dmi",
            IndicatorKind::Ema => "ema",
            IndicatorKind::Hma => "hma",
            IndicatorKind::Momentum => "momentum",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Settings of the dynamic momentum index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmiParams {
    /// Window of the close-price standard deviation.
    pub std_window: usize,
    /// Window of the moving average of that deviation.
    pub avg_window: usize,
    /// RSI period when volatility equals its average.
    pub base_period: usize,
    pub min_period: usize,
    pub max_period: usize,
}

impl Default for DmiParams {
    fn default() -> Self {
        Self {
            std_window: 5,
            avg_window: 10,
            base_period: 14,
            min_period: 5,
            max_period: 30,
        }
    }
}

/// Settings of the commodity selection index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsiParams {
    pub period: usize,
    /// Value of a one-point move.
    pub point_value: f64,
    pub margin: f64,
    pub commission: f64,
}

impl Default for CsiParams {
    fn default() -> Self {
        Self {
            period: 14,
            point_value: 1.0,
            margin: 1.0,
            commission: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndicatorParams {
    pub atr: usize,
    pub cci: usize,
    pub ema: usize,
    pub hma: usize,
    pub momentum: usize,
    pub demand: usize,
    pub csi: CsiParams,
    pub dmi: DmiParams,
}

impl Default for IndicatorParams {
    fn default() -> Self {
        Self {
            atr: 14,
            cci: 20,
            ema: 12,
            hma: 9,
            momentum: 10,
            demand: 10,
            csi: CsiParams::default(),
            dmi: DmiParams::default(),
        }
    }
}

impl IndicatorParams {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let windows = [
            ("atr", self.atr, 1),
            ("cci", self.cci, 1),
            ("ema", self.ema, 1),
            ("hma", self.hma, 2),
            ("momentum", self.momentum, 1),
            ("demand", self.demand, 1),
            ("csi.period", self.csi.period, 1),
            ("dmi.std_window", self.dmi.std_window, 2),
            ("dmi.avg_window", self.dmi.avg_window, 1),
            ("dmi.base_period", self.dmi.base_period, 1),
            ("dmi.min_period", self.dmi.min_period, 1),
        ];
        for (name, w, min) in windows {
            if w < min {
                return Err(format!("{name} window must be at least {min}, got {w}"));
            }
        }
        if self.dmi.max_period < self.dmi.min_period {
            return Err("dmi.max_period is below dmi.min_period".into());
        }
        if !(self.csi.margin > 0.0) || !(self.csi.commission > -150.0) {
            return Err("csi margin must be positive and commission above -150".into());
        }
        Ok(())
    }

    /// First defined index of each indicator.
    pub fn warmup(&self, kind: IndicatorKind) -> usize {
        match kind {
            IndicatorKind::Atr => self.atr - 1,
            IndicatorKind::Cci => self.cci - 1,
            IndicatorKind::Csi => 3 * self.csi.period - 1,
            IndicatorKind::DemandIndex => 2 * self.demand - 1,
            IndicatorKind::Dmi => {
                (self.dmi.std_window + self.dmi.avg_window - 2).max(self.dmi.max_period)
            }
            IndicatorKind::Ema => self.ema - 1,
            IndicatorKind::Hma => self.hma + hull_smoothing(self.hma) - 2,
            IndicatorKind::Momentum => self.momentum,
        }
    }

    pub fn max_warmup(&self) -> usize {
        IndicatorKind::ALL
            .iter()
            .map(|&k| self.warmup(k))
            .max()
            .unwrap_or(0)
    }
}

fn hull_smoothing(n: usize) -> usize {
    ((n as f64).sqrt().round() as usize).max(1)
}

/// Indicator streams for one series, aligned with its rows.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorSet {
    len: usize,
    warmups: [usize; 8],
    // entries before the warm-up are NaN and never exposed
    streams: [Vec<f64>; 8],
}

impl IndicatorSet {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn warmup(&self, kind: IndicatorKind) -> usize {
        self.warmups[kind.index()]
    }

    pub fn get(&self, kind: IndicatorKind, i: usize) -> Option<f64> {
        (i >= self.warmup(kind) && i < self.len).then(|| self.streams[kind.index()][i])
    }

    /// Defined values, starting at the warm-up index.
    pub fn defined(&self, kind: IndicatorKind) -> &[f64] {
        &self.streams[kind.index()][self.warmup(kind)..]
    }

    /// All eight values at row `i` in [`IndicatorKind::ALL`] order, if every
    /// indicator is past its warm-up.
    pub fn row(&self, i: usize) -> Option<[f64; 8]> {
        let mut out = [0.0; 8];
        for (slot, kind) in out.iter_mut().zip(IndicatorKind::ALL) {
            *slot = self.get(kind, i)?;
        }
        Some(out)
    }
}

pub fn compute_indicators(series: &OhlcvSeries, params: &IndicatorParams) -> Result<IndicatorSet> {
    params
        .validate()
        .map_err(|msg| DataError::InvalidRange(format!("indicator settings: {msg}")))?;
    let len = series.len();
    for kind in IndicatorKind::ALL {
        let w = params.warmup(kind);
        if len <= w {
            return Err(DataError::TooShort {
                asset: series.asset().to_string(),
                indicator: kind.name(),
                required: w + 1,
                actual: len,
            });
        }
    }
    let bars = series.bars();
    let high: Vec<f64> = bars.iter().map(|b| b.high).collect();
    let low: Vec<f64> = bars.iter().map(|b| b.low).collect();
    let close: Vec<f64> = bars.iter().map(|b| b.close).collect();
    let volume: Vec<f64> = bars.iter().map(|b| b.volume).collect();

    let streams = [
        atr(&high, &low, &close, params.atr),
        cci(&high, &low, &close, params.cci),
        csi(&high, &low, &close, &params.csi),
        demand_index(&high, &low, &close, &volume, params.demand),
        dynamic_momentum(&close, &params.dmi),
        ema(&close, params.ema),
        hma(&close, params.hma),
        momentum(&close, params.momentum),
    ];
    let mut warmups = [0; 8];
    for (w, kind) in warmups.iter_mut().zip(IndicatorKind::ALL) {
        *w = params.warmup(kind);
        debug_assert!(
            streams[kind.index()][*w..].iter().all(|v| v.is_finite()),
            "{} not finite after warm-up",
            kind.name()
        );
    }
    Ok(IndicatorSet {
        len,
        warmups,
        streams,
    })
}

fn nan(len: usize) -> Vec<f64> {
    vec![f64::NAN; len]
}

/// Simple moving average; defined from `n - 1 + first` where `first` is the
/// first defined input index.
fn sma(x: &[f64], n: usize, first: usize) -> Vec<f64> {
    let mut out = nan(x.len());
    for t in (first + n - 1)..x.len() {
        out[t] = x[t + 1 - n..=t].iter().sum::<f64>() / n as f64;
    }
    out
}

/// Linearly weighted moving average, newest weight `n`.
fn wma(x: &[f64], n: usize, first: usize) -> Vec<f64> {
    let denom = (n * (n + 1)) as f64 / 2.0;
    let mut out = nan(x.len());
    for t in (first + n - 1)..x.len() {
        let s: f64 = (0..n).map(|i| (n - i) as f64 * x[t - i]).sum();
        out[t] = s / denom;
    }
    out
}

/// EMA seeded with the SMA of the first `n` defined inputs.
fn ema_from(x: &[f64], n: usize, first: usize) -> Vec<f64> {
    let lambda = 2.0 / (n as f64 + 1.0);
    let mut out = sma(x, n, first);
    for t in (first + n)..x.len() {
        out[t] = lambda * x[t] + (1.0 - lambda) * out[t - 1];
    }
    out
}

/// Wilder average: mean of the first `n` defined inputs, then `(prev·(n−1) + x)/n`.
fn wilder_average(x: &[f64], n: usize, first: usize) -> Vec<f64> {
    let mut out = sma(x, n, first);
    for t in (first + n)..x.len() {
        out[t] = (out[t - 1] * (n as f64 - 1.0) + x[t]) / n as f64;
    }
    out
}

fn true_range(high: &[f64], low: &[f64], close: &[f64]) -> Vec<f64> {
    (0..high.len())
        .map(|t| {
            let hl = high[t] - low[t];
            if t == 0 {
                hl
            } else {
                hl.max((high[t] - close[t - 1]).abs())
                    .max((low[t] - close[t - 1]).abs())
            }
        })
        .collect()
}

pub(crate) fn atr(high: &[f64], low: &[f64], close: &[f64], n: usize) -> Vec<f64> {
    wilder_average(&true_range(high, low, close), n, 0)
}

pub(crate) fn cci(high: &[f64], low: &[f64], close: &[f64], n: usize) -> Vec<f64> {
    let tp: Vec<f64> = (0..high.len())
        .map(|t| (high[t] + low[t] + close[t]) / 3.0)
        .collect();
    let avg = sma(&tp, n, 0);
    let mut out = nan(tp.len());
    for t in (n - 1)..tp.len() {
        let md = tp[t + 1 - n..=t].iter().map(|v| (v - avg[t]).abs()).sum::<f64>() / n as f64;
        out[t] = if md == 0.0 {
            0.0
        } else {
            (tp[t] - avg[t]) / (0.015 * md)
        };
    }
    out
}

pub(crate) fn ema(close: &[f64], n: usize) -> Vec<f64> {
    ema_from(close, n, 0)
}

pub(crate) fn hma(close: &[f64], n: usize) -> Vec<f64> {
    let half = (n / 2).max(1);
    let s = hull_smoothing(n);
    let w_half = wma(close, half, 0);
    let w_full = wma(close, n, 0);
    let raw: Vec<f64> = w_half
        .iter()
        .zip(&w_full)
        .map(|(a, b)| 2.0 * a - b)
        .collect();
    wma(&raw, s, n - 1)
}

pub(crate) fn momentum(close: &[f64], n: usize) -> Vec<f64> {
    let mut out = nan(close.len());
    for t in n..close.len() {
        out[t] = close[t] - close[t - n];
    }
    out
}

/// Wilder's directional movement system: returns ADX, defined from `2n − 1`.
fn adx(high: &[f64], low: &[f64], close: &[f64], n: usize) -> Vec<f64> {
    let len = high.len();
    let tr = true_range(high, low, close);
    let mut plus_dm = vec![0.0; len];
    let mut minus_dm = vec![0.0; len];
    for t in 1..len {
        let up = high[t] - high[t - 1];
        let down = low[t - 1] - low[t];
        if up > down && up > 0.0 {
            plus_dm[t] = up;
        }
        if down > up && down > 0.0 {
            minus_dm[t] = down;
        }
    }
    // Wilder running sums over t = 1..=n, then S − S/n + x
    let running = |x: &[f64]| {
        let mut out = nan(len);
        if len > n {
            out[n] = x[1..=n].iter().sum();
            for t in (n + 1)..len {
                out[t] = out[t - 1] - out[t - 1] / n as f64 + x[t];
            }
        }
        out
    };
    let (tr_n, pdm_n, mdm_n) = (running(&tr), running(&plus_dm), running(&minus_dm));
    let mut dx = nan(len);
    for t in n..len {
        let (pdi, mdi) = if tr_n[t] > 0.0 {
            (100.0 * pdm_n[t] / tr_n[t], 100.0 * mdm_n[t] / tr_n[t])
        } else {
            (0.0, 0.0)
        };
        dx[t] = if pdi + mdi > 0.0 {
            100.0 * (pdi - mdi).abs() / (pdi + mdi)
        } else {
            0.0
        };
    }
    wilder_average(&dx, n, n)
}

/// Wilder's commodity selection index, `ADXR · ATR · 100 · V / (√M · (150 + C))`
/// where `ADXR_t = (ADX_t + ADX_{t−n}) / 2`.
pub(crate) fn csi(high: &[f64], low: &[f64], close: &[f64], p: &CsiParams) -> Vec<f64> {
    let n = p.period;
    let adx = adx(high, low, close, n);
    let atr = atr(high, low, close, n);
    let scale = 100.0 * p.point_value / (p.margin.sqrt() * (150.0 + p.commission));
    let mut out = nan(high.len());
    for t in (3 * n - 1)..high.len() {
        let adxr = (adx[t] + adx[t - n]) / 2.0;
        out[t] = adxr * atr[t] * scale;
    }
    out
}

/// Dynamic momentum index.
///
/// `V_t = σ_s(C)_t / SMA_a(σ_s(C))_t` (population deviation over `s` closes,
/// `V = 1` when the average deviation is 0). The RSI period is
/// `floor(base / V)` clamped to `[min, max]`, and the RSI uses simple sums of
/// up and down closes over that period (50 when there was no movement).
pub(crate) fn dynamic_momentum(close: &[f64], p: &DmiParams) -> Vec<f64> {
    let len = close.len();
    let s = p.std_window;
    let mut sd = nan(len);
    for t in (s - 1)..len {
        let w = &close[t + 1 - s..=t];
        let mean = w.iter().sum::<f64>() / s as f64;
        sd[t] = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / s as f64).sqrt();
    }
    let sd_avg = sma(&sd, p.avg_window, s - 1);
    let start = (s + p.avg_window - 2).max(p.max_period);
    let mut out = nan(len);
    for t in start..len {
        let v = if sd_avg[t] > 0.0 { sd[t] / sd_avg[t] } else { 1.0 };
        let period = if v > 0.0 {
            ((p.base_period as f64 / v).floor() as usize).clamp(p.min_period, p.max_period)
        } else {
            p.max_period
        };
        let (mut up, mut down) = (0.0, 0.0);
        for k in (t + 1 - period)..=t {
            let d = close[k] - close[k - 1];
            if d > 0.0 {
                up += d;
            } else {
                down -= d;
            }
        }
        out[t] = if up + down > 0.0 {
            100.0 * up / (up + down)
        } else {
            50.0
        };
    }
    out
}

/// Demand index over window `n`.
///
/// With weighted price `P = H + L + 2C`, two-day range
/// `R_t = max(H_t, H_{t−1}) − min(L_t, L_{t−1})`, `A = SMA_n(R)`,
/// `K = 3C/A` and relative volume `r = V / EMA_n(V)`:
/// a rising `P` gives buying pressure `r` and selling pressure
/// `r · exp(−K·|ΔP/P₋₁|)`; a falling `P` swaps the two. Both pressures are
/// smoothed with `EMA_n` and the index is `100 · (BP − SP) / max(BP, SP)`,
/// which lies in `[−100, 100]`.
pub(crate) fn demand_index(
    high: &[f64],
    low: &[f64],
    close: &[f64],
    volume: &[f64],
    n: usize,
) -> Vec<f64> {
    let len = high.len();
    let weighted: Vec<f64> = (0..len).map(|t| high[t] + low[t] + 2.0 * close[t]).collect();
    let mut range = nan(len);
    for t in 1..len {
        range[t] = high[t].max(high[t - 1]) - low[t].min(low[t - 1]);
    }
    let avg_range = sma(&range, n, 1);
    let vol_avg = ema_from(volume, n, 0);
    let mut bp = nan(len);
    let mut sp = nan(len);
    for t in n..len {
        let rel_vol = if vol_avg[t] > 0.0 { volume[t] / vol_avg[t] } else { 0.0 };
        let k = if avg_range[t] > 0.0 { 3.0 * close[t] / avg_range[t] } else { 0.0 };
        let change = (weighted[t] - weighted[t - 1]) / weighted[t - 1];
        let damped = rel_vol * (-k * change.abs()).exp();
        if change >= 0.0 {
            bp[t] = rel_vol;
            sp[t] = damped;
        } else {
            bp[t] = damped;
            sp[t] = rel_vol;
        }
    }
    let bp = ema_from(&bp, n, n);
    let sp = ema_from(&sp, n, n);
    let mut out = nan(len);
    for t in (2 * n - 1)..len {
        let m = bp[t].max(sp[t]);
        out[t] = if m > 0.0 { 100.0 * (bp[t] - sp[t]) / m } else { 0.0 };
    }
    out
}
