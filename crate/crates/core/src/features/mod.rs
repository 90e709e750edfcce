//! Price/indicator normalization and the restricted stacked autoencoder that
//! compresses each day's 11 features to 3.
//!
//! For asset `a` on day `d` the 11 raw features are
//! `[Lo/Op, Cl/Op, Hi/Op, FI_1(d)/FI_1(d−1), …, FI_8(d)/FI_8(d−1)]`, prices
//! taken relative to the same day's open and each indicator relative to its
//! own previous-day value (indicators in [`IndicatorKind::ALL`] order).

mod rsae;

pub use rsae::{rsae_train, rsae_train_rows, InputScaling, Rsae, RsaeConfig, TrainReport};

use chrono::NaiveDate;
use thiserror::Error;

use crate::market_data::{IndicatorKind, IndicatorSet, Panel};
use crate::tensor::{Tensor, TensorError};

pub const NUM_FEATURES: usize = 11;
pub const NUM_PRICE_FEATURES: usize = 3;
pub const LATENT_WIDTH: usize = 3;

const _: () = assert!(LATENT_WIDTH < NUM_FEATURES);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("{asset} {date}: {indicator} is 0 on the previous day, cannot normalize")]
    ZeroIndicator {
        asset: String,
        date: NaiveDate,
        indicator: &'static str,
    },
    #[error("{asset} {date}: {indicator} is still warming up")]
    Warmup {
        asset: String,
        date: NaiveDate,
        indicator: &'static str,
    },
    #[error("window of {n} days ending at row {t} needs rows {t}−{n} onward; panel has {len} rows")]
    OutOfRange { t: usize, n: usize, len: usize },
    #[error("{0} indicator sets for {1} assets")]
    AssetCount(usize, usize),
    #[error("feature width {actual}, expected {expected}")]
    Width { expected: usize, actual: usize },
    #[error("no training rows")]
    EmptyTraining,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, FeatureError>;

/// What to do when an indicator's previous-day value is exactly zero and the
/// current value is not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZeroPolicy {
    /// Fail with [`FeatureError::ZeroIndicator`].
    #[default]
    Error,
    /// Use a ratio of 1. Oscillators (RSI-type, momentum, CCI) sit at exactly
    /// zero often enough on real and simulated data that long runs need this.
    Neutral,
}

/// The 11 normalized features of one asset on row `d` of the panel.
pub fn day_features(
    panel: &Panel,
    indicators: &[IndicatorSet],
    asset: usize,
    d: usize,
    policy: ZeroPolicy,
) -> Result<[f64; NUM_FEATURES]> {
    if d == 0 || d >= panel.len() {
        return Err(FeatureError::OutOfRange {
            t: d,
            n: 1,
            len: panel.len(),
        });
    }
    let bar = panel.bar(asset, d);
    let name = || panel.series()[asset].asset().to_string();
    let mut out = [0.0; NUM_FEATURES];
    out[0] = bar.low / bar.open;
    out[1] = bar.close / bar.open;
    out[2] = bar.high / bar.open;
    let set = &indicators[asset];
    for (k, kind) in IndicatorKind::ALL.into_iter().enumerate() {
        let warm = |date| FeatureError::Warmup {
            asset: name(),
            date,
            indicator: kind.name(),
        };
        let prev = set.get(kind, d - 1).ok_or_else(|| warm(panel.dates()[d - 1]))?;
        let cur = set.get(kind, d).ok_or_else(|| warm(panel.dates()[d]))?;
        out[NUM_PRICE_FEATURES + k] = if prev != 0.0 {
            cur / prev
        } else if cur == 0.0 || policy == ZeroPolicy::Neutral {
            // an indicator pinned at zero has not moved
            1.0
        } else {
            return Err(FeatureError::ZeroIndicator {
                asset: name(),
                date: panel.dates()[d - 1],
                indicator: kind.name(),
            });
        };
    }
    Ok(out)
}

/// First row at which every asset has all 11 features.
pub fn first_feature_row(indicators: &[IndicatorSet]) -> usize {
    indicators
        .iter()
        .flat_map(|s| IndicatorKind::ALL.map(|k| s.warmup(k)))
        .max()
        .unwrap_or(0)
        + 1
}

/// Normalized features for the `n` days ending at row `t`, every asset.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedWindow {
    m: usize,
    n: usize,
    /// `[m, n, 11]`: asset, day (oldest first), feature.
    data: Tensor,
}

impl NormalizedWindow {
    pub fn from_tensor(data: Tensor) -> Result<Self> {
        let s = data.shape();
        if s.len() != 3 || s[2] != NUM_FEATURES {
            return Err(FeatureError::Width {
                expected: NUM_FEATURES,
                actual: s.last().copied().unwrap_or(0),
            });
        }
        Ok(Self {
            m: s[0],
            n: s[1],
            data,
        })
    }

    pub fn num_assets(&self) -> usize {
        self.m
    }

    pub fn window(&self) -> usize {
        self.n
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    /// Feature `f` of `asset` over the window, oldest first.
    pub fn feature(&self, asset: usize, f: usize) -> Vec<f64> {
        (0..self.n).map(|j| self.data.get(&[asset, j, f])).collect()
    }

    pub fn low(&self, asset: usize) -> Vec<f64> {
        self.feature(asset, 0)
    }

    pub fn close(&self, asset: usize) -> Vec<f64> {
        self.feature(asset, 1)
    }

    pub fn high(&self, asset: usize) -> Vec<f64> {
        self.feature(asset, 2)
    }

    pub fn indicator(&self, asset: usize, kind: IndicatorKind) -> Vec<f64> {
        let k = IndicatorKind::ALL.iter().position(|x| *x == kind).expect("known kind");
        self.feature(asset, NUM_PRICE_FEATURES + k)
    }

    /// Rows of 11 features, `[m·n, 11]`.
    pub fn rows(&self) -> Tensor {
        self.data
            .reshape(&[self.m * self.n, NUM_FEATURES])
            .expect("same element count")
    }
}

/// Features of rows `t − n + 1 ..= t` for every asset; a zero previous-day
/// indicator value is an error.
pub fn normalize_window(
    panel: &Panel,
    indicators: &[IndicatorSet],
    t: usize,
    n: usize,
) -> Result<NormalizedWindow> {
    normalize_window_with(panel, indicators, t, n, ZeroPolicy::Error)
}

/// [`normalize_window`] with an explicit policy for zero indicator values.
pub fn normalize_window_with(
    panel: &Panel,
    indicators: &[IndicatorSet],
    t: usize,
    n: usize,
    policy: ZeroPolicy,
) -> Result<NormalizedWindow> {
    if indicators.len() != panel.num_assets() {
        return Err(FeatureError::AssetCount(indicators.len(), panel.num_assets()));
    }
    if n == 0 || t >= panel.len() || t < n {
        return Err(FeatureError::OutOfRange {
            t,
            n,
            len: panel.len(),
        });
    }
    let m = panel.num_assets();
    let mut data = Vec::with_capacity(m * n * NUM_FEATURES);
    for a in 0..m {
        for d in (t + 1 - n)..=t {
            data.extend_from_slice(&day_features(panel, indicators, a, d, policy)?);
        }
    }
    NormalizedWindow::from_tensor(Tensor::new(&[m, n, NUM_FEATURES], data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::{compute_indicators, Bar, IndicatorParams, OhlcvSeries};
    use chrono::Days;

    fn panel_from(bars: Vec<(f64, f64, f64, f64)>) -> (Panel, Vec<IndicatorSet>) {
        let d0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let bars: Vec<Bar> = bars
            .into_iter()
            .enumerate()
            .map(|(i, (open, high, low, close))| Bar {
                date: d0 + Days::new(i as u64),
                open,
                high,
                low,
                close,
                volume: 1000.0,
            })
            .collect();
        let s = OhlcvSeries::new("A", bars).unwrap();
        let panel = Panel::align(&[s], d0, d0 + Days::new(1000)).unwrap();
        let inds = vec![compute_indicators(&panel.series()[0], &IndicatorParams::default()).unwrap()];
        (panel, inds)
    }

    fn trend(len: usize) -> Vec<(f64, f64, f64, f64)> {
        (0..len)
            .map(|t| {
                let c = 50.0 + t as f64;
                (c - 0.5, c + 0.7, c - 1.0, c)
            })
            .collect()
    }

    #[test]
    fn hand_ratios_and_flat_days() {
        let mut bars = trend(60);
        bars[58] = (108.0, 108.0, 108.0, 108.0);
        bars[59] = (100.0, 105.0, 99.0, 103.0);
        let (panel, inds) = panel_from(bars);
        let w = normalize_window(&panel, &inds, 59, 5).unwrap();
        assert_eq!(w.window(), 5);
        assert_eq!((w.low(0)[4], w.close(0)[4], w.high(0)[4]), (0.99, 1.03, 1.05));
        for f in 0..3 {
            assert_eq!(w.feature(0, f)[3], 1.0);
        }
        let ema = w.indicator(0, IndicatorKind::Ema);
        let want = inds[0].get(IndicatorKind::Ema, 59).unwrap()
            / inds[0].get(IndicatorKind::Ema, 58).unwrap();
        assert_eq!(ema[4], want);
        assert_eq!(w.rows().shape(), &[5, 11]);
    }

    #[test]
    fn constant_indicators_give_ones() {
        let (panel, inds) = panel_from(vec![(100.0, 100.0, 100.0, 100.0); 60]);
        let w = normalize_window(&panel, &inds, 59, 8).unwrap();
        assert!(w.tensor().data().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn zero_previous_indicator_is_an_error() {
        let mut bars = vec![(100.0, 100.0, 100.0, 100.0); 60];
        bars[59] = (100.0, 105.0, 99.0, 103.0);
        let (panel, inds) = panel_from(bars);
        match normalize_window(&panel, &inds, 59, 5).unwrap_err() {
            FeatureError::ZeroIndicator { asset, date, indicator } => {
                assert_eq!(asset, "A");
                assert_eq!(date, panel.dates()[58]);
                assert_eq!(indicator, "atr");
            }
            e => panic!("unexpected {e}"),
        }
        let w = normalize_window_with(&panel, &inds, 59, 5, ZeroPolicy::Neutral).unwrap();
        assert_eq!(w.indicator(0, IndicatorKind::Atr)[4], 1.0);
    }

    #[test]
    fn warmup_and_range_errors() {
        let (panel, inds) = panel_from(vec![(10.0, 10.0, 10.0, 10.0); 50]);
        assert!(matches!(
            normalize_window(&panel, &inds, 20, 5),
            Err(FeatureError::Warmup { .. })
        ));
        assert!(matches!(
            normalize_window(&panel, &inds, 50, 5),
            Err(FeatureError::OutOfRange { .. })
        ));
        assert_eq!(first_feature_row(&inds), 42);
    }
}
