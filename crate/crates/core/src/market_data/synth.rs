//! Correlated geometric random walks in OHLCV form.
//!
//! Daily log-returns are `ln(1 + drift_i) + σ_i·z_i` where `z` is a standard
//! normal vector with equicorrelation `ρ`, drawn through a Cholesky factor.
//! Each day opens at the previous close; highs and lows extend the open/close
//! envelope by a half-normal amount scaled by the asset's volatility, so a
//! zero-volatility asset has `open = high = low = close`.

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Bar, DataError, OhlcvSeries, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub assets: usize,
    pub days: usize,
    pub start: NaiveDate,
    pub initial_price: f64,
    /// Expected simple daily growth per asset; a single entry applies to all.
    pub drift: Vec<f64>,
    /// Daily log-return volatility per asset; a single entry applies to all.
    pub volatility: Vec<f64>,
    /// Pairwise correlation of the return shocks.
    pub correlation: f64,
    pub volume: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            assets: 5,
            days: 500,
            start: NaiveDate::from_ymd_opt(2015, 1, 5).expect("valid date"),
            initial_price: 100.0,
            drift: vec![0.0],
            volatility: vec![0.01],
            correlation: 0.0,
            volume: 1.0e6,
            seed: 0,
        }
    }
}

fn broadcast(v: &[f64], m: usize, name: &str) -> Result<Vec<f64>> {
    match v.len() {
        1 => Ok(vec![v[0]; m]),
        n if n == m => Ok(v.to_vec()),
        n => Err(DataError::InvalidSynth(format!(
            "{name} has {n} entries for {m} assets"
        ))),
    }
}

impl SynthConfig {
    pub fn asset_name(i: usize) -> String {
        format!("SYN{i:02}")
    }

    fn validate(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let bad = |msg: String| Err(DataError::InvalidSynth(msg));
        if self.assets == 0 {
            return bad("at least one asset required".into());
        }
        if self.days == 0 {
            return bad("at least one day required".into());
        }
        if !(self.initial_price > 0.0) || !self.initial_price.is_finite() {
            return bad(format!("initial price must be positive, got {}", self.initial_price));
        }
        if !(self.volume >= 0.0) || !self.volume.is_finite() {
            return bad(format!("volume must be non-negative, got {}", self.volume));
        }
        let lower = if self.assets > 1 {
            -1.0 / (self.assets as f64 - 1.0)
        } else {
            -1.0
        };
        if !(self.correlation >= lower && self.correlation <= 1.0) {
            return bad(format!(
                "correlation {} outside [{lower}, 1] for {} assets",
                self.correlation, self.assets
            ));
        }
        let drift = broadcast(&self.drift, self.assets, "drift")?;
        let vol = broadcast(&self.volatility, self.assets, "volatility")?;
        if drift.iter().any(|d| !(*d > -1.0) || !d.is_finite()) {
            return bad("drift must be finite and above -1".into());
        }
        if vol.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return bad("volatility must be finite and non-negative".into());
        }
        Ok((drift, vol))
    }
}

/// Lower Cholesky factor of the `m × m` equicorrelation matrix. Pivots that
/// round below zero (ρ = 1 or ρ at its lower bound) are treated as zero.
fn equicorrelation_cholesky(m: usize, rho: f64) -> Vec<Vec<f64>> {
    let a = |i: usize, j: usize| if i == j { 1.0 } else { rho };
    let mut l = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                l[i][i] = (a(i, i) - s).max(0.0).sqrt();
            } else if l[j][j] > 0.0 {
                l[i][j] = (a(i, j) - s) / l[j][j];
            }
        }
    }
    l
}

fn next_business_day(d: NaiveDate) -> NaiveDate {
    let mut d = d + Days::new(1);
    while matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
        d = d + Days::new(1);
    }
    d
}

pub fn generate(config: &SynthConfig) -> Result<Vec<OhlcvSeries>> {
    let (drift, vol) = config.validate()?;
    let m = config.assets;
    let chol = equicorrelation_cholesky(m, config.correlation);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut date = config.start;
    while matches!(date.weekday(), Weekday::Sat | Weekday::Sun) {
        date = date + Days::new(1);
    }
    let mut close = vec![config.initial_price; m];
    let mut bars: Vec<Vec<Bar>> = vec![Vec::with_capacity(config.days); m];
    for day in 0..config.days {
        let eps: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        for i in 0..m {
            let z: f64 = (0..=i).map(|k| chol[i][k] * eps[k]).sum();
            let open = close[i];
            let c = if day == 0 {
                open
            } else {
                open * ((1.0 + drift[i]).ln() + vol[i] * z).exp()
            };
            let up: f64 = rng.sample::<f64, _>(StandardNormal).abs();
            let down: f64 = rng.sample::<f64, _>(StandardNormal).abs();
            let jitter: f64 = rng.random_range(0.75..1.25);
            bars[i].push(Bar {
                date,
                open,
                high: open.max(c) * (0.5 * vol[i] * up).exp(),
                low: open.min(c) * (-0.5 * vol[i] * down).exp(),
                close: c,
                volume: (config.volume * jitter).round(),
            });
            close[i] = c;
        }
        date = next_business_day(date);
    }
    bars.into_iter()
        .enumerate()
        .map(|(i, b)| OhlcvSeries::new(SynthConfig::asset_name(i), b))
        .collect()
}
