//! Run configuration, read from TOML. Every field has a default, unknown keys
//! are rejected, and the resolved configuration can be written back out.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use graphfolio::agent::AgentConfig;
use graphfolio::backtest::TrainConfig;
use graphfolio::features::{RsaeConfig, ZeroPolicy};
use graphfolio::graph_conv::CorrelationInput;
use graphfolio::market_data::synth::SynthConfig;
use graphfolio::market_data::SplitSpec;
use graphfolio::portfolio::CommissionSchedule;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Dates are written as native TOML dates; quoted `"YYYY-MM-DD"` strings are
/// accepted too.
mod toml_date {
    use chrono::{Datelike, NaiveDate};
    use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
    use toml::value::{Date, Datetime};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Native(Datetime),
        Text(String),
    }

    fn parse<E: de::Error>(raw: Raw) -> Result<NaiveDate, E> {
        match raw {
            Raw::Native(dt) => match (dt.date, dt.time, dt.offset) {
                (Some(d), None, None) => {
                    NaiveDate::from_ymd_opt(d.year.into(), d.month.into(), d.day.into())
                        .ok_or_else(|| E::custom(format!("invalid date {dt}")))
                }
                _ => Err(E::custom(format!("expected a date without time, got {dt}"))),
            },
            Raw::Text(s) => NaiveDate::parse_from_str(&s, "%Y-%m-%d")
                .map_err(|_| E::custom(format!("expected YYYY-MM-DD, got `{s}`"))),
        }
    }

    fn native(d: &NaiveDate) -> Datetime {
        Datetime {
            date: Some(Date {
                year: d.year() as u16,
                month: d.month() as u8,
                day: d.day() as u8,
            }),
            time: None,
            offset: None,
        }
    }

    pub fn serialize<S: Serializer>(d: &NaiveDate, s: S) -> Result<S::Ok, S::Error> {
        native(d).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDate, D::Error> {
        parse(Raw::deserialize(d)?)
    }

    pub mod range {
        use super::*;

        pub fn serialize<S: Serializer>(r: &Option<[NaiveDate; 2]>, s: S) -> Result<S::Ok, S::Error> {
            r.map(|[a, b]| [native(&a), native(&b)]).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> Result<Option<[NaiveDate; 2]>, D::Error> {
            match Option::<[Raw; 2]>::deserialize(d)? {
                Some([a, b]) => Ok(Some([parse(a)?, parse(b)?])),
                None => Ok(None),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataSection,
    pub synth: SynthSection,
    pub features: FeatureSection,
    pub agent: AgentSection,
    pub train: TrainSection,
    pub fees: FeeSection,
    pub backtest: BacktestSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Directory of `<asset>.csv` files.
    pub dir: PathBuf,
    /// Assets to load; empty means every CSV in `dir`.
    pub assets: Vec<String>,
    /// Named split (`test1` … `test5`). Mutually exclusive with `train`/`test`.
    pub split: Option<String>,
    /// Inclusive `[start, end]` dates.
    #[serde(with = "toml_date::range")]
    pub train: Option<[NaiveDate; 2]>,
    #[serde(with = "toml_date::range")]
    pub test: Option<[NaiveDate; 2]>,
    /// Optional `date,return` CSV of daily benchmark returns for the Sharpe
    /// ratio; zero when absent.
    pub benchmark: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub assets: usize,
    pub days: usize,
    #[serde(with = "toml_date")]
    pub start: NaiveDate,
    pub initial_price: f64,
    pub drift: Vec<f64>,
    pub volatility: Vec<f64>,
    pub correlation: f64,
    pub volume: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationSource {
    Close,
    LogReturn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroRatio {
    Error,
    Neutral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureSection {
    /// Trading window `n` in days.
    pub window: usize,
    pub corr_window: usize,
    pub corr_input: CorrelationSource,
    pub zero_policy: ZeroRatio,
    pub input_clip: f64,
    pub rsae_lr: f64,
    pub rsae_batch: usize,
    pub rsae_epochs: usize,
    /// One autoencoder epoch over the buffered days during the backtest.
    pub online_rsae: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentSection {
    pub gcn_order: usize,
    pub kappa: f64,
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub actor_conv1: usize,
    pub actor_conv2: usize,
    pub critic_conv1: usize,
    pub critic_conv2: usize,
    pub critic_conv3: usize,
    pub critic_uses_weights: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batches_per_epoch: usize,
    /// Trading days per batch.
    pub span: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeeSection {
    pub sell: f64,
    pub buy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BacktestSection {
    /// Defaults to `model.ckpt` in the output directory.
    pub checkpoint: Option<PathBuf>,
    /// Trading days to simulate; defaults to the whole test range.
    pub days: Option<usize>,
    pub initial_value: f64,
    /// Tail level of VaR/CVaR.
    pub alpha: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            data: DataSection::default(),
            synth: SynthSection::default(),
            features: FeatureSection::default(),
            agent: AgentSection::default(),
            train: TrainSection::default(),
            fees: FeeSection::default(),
            backtest: BacktestSection::default(),
        }
    }
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("data"),
            assets: Vec::new(),
            split: None,
            train: None,
            test: None,
            benchmark: None,
        }
    }
}

impl Default for SynthSection {
    fn default() -> Self {
        let s = SynthConfig::default();
        Self {
            assets: s.assets,
            days: s.days,
            start: s.start,
            initial_price: s.initial_price,
            drift: s.drift,
            volatility: s.volatility,
            correlation: s.correlation,
            volume: s.volume,
        }
    }
}

impl Default for FeatureSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            window: t.window,
            corr_window: t.corr_window,
            corr_input: CorrelationSource::Close,
            zero_policy: ZeroRatio::Neutral,
            input_clip: t.rsae.input_clip,
            rsae_lr: t.rsae.lr,
            rsae_batch: t.rsae.batch_size,
            rsae_epochs: t.rsae_epochs,
            online_rsae: t.online_rsae,
        }
    }
}

impl Default for AgentSection {
    fn default() -> Self {
        let a = AgentConfig::new(1, 30);
        Self {
            gcn_order: a.gcn_order,
            kappa: a.kappa,
            gamma: a.gamma,
            actor_lr: a.actor_lr,
            critic_lr: a.critic_lr,
            actor_conv1: a.actor_conv1,
            actor_conv2: a.actor_conv2,
            critic_conv1: a.critic_conv1,
            critic_conv2: a.critic_conv2,
            critic_conv3: a.critic_conv3,
            critic_uses_weights: a.critic_uses_weights,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batches_per_epoch: t.batches_per_epoch,
            span: t.span,
        }
    }
}

impl Default for FeeSection {
    fn default() -> Self {
        let f = CommissionSchedule::default();
        Self {
            sell: f.sell,
            buy: f.buy,
        }
    }
}

impl Default for BacktestSection {
    fn default() -> Self {
        Self {
            checkpoint: None,
            days: None,
            initial_value: 1.0,
            alpha: 0.95,
        }
    }
}

fn usage(msg: String) -> CliError {
    CliError::Usage(msg)
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(usage(msg()))
    }
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    check(v > 0.0 && v.is_finite(), || format!("{name} must be positive, got {v}"))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Range checks on every numeric field.
    pub fn validate(&self) -> Result<(), CliError> {
        let d = &self.data;
        match (&d.split, &d.train, &d.test) {
            (Some(_), None, None) | (None, None, None) | (None, Some(_), Some(_)) => {}
            (Some(_), _, _) => {
                return Err(usage("data.split cannot be combined with data.train/data.test".into()))
            }
            _ => return Err(usage("data.train and data.test must be given together".into())),
        }
        for (name, r) in [("train", d.train), ("test", d.test)] {
            if let Some([a, b]) = r {
                check(a <= b, || format!("data.{name} starts {a} after it ends {b}"))?;
            }
        }

        let s = &self.synth;
        check(s.assets >= 1, || "synth.assets must be at least 1".into())?;
        check(s.days >= 1, || "synth.days must be at least 1".into())?;
        positive("synth.initial_price", s.initial_price)?;
        positive("synth.volume", s.volume)?;
        for (name, v) in [("drift", &s.drift), ("volatility", &s.volatility)] {
            check(v.len() == 1 || v.len() == s.assets, || {
                format!("synth.{name} needs 1 or {} entries, got {}", s.assets, v.len())
            })?;
        }
        check(s.drift.iter().all(|g| *g > -1.0 && g.is_finite()), || {
            "synth.drift entries must exceed -1".into()
        })?;
        check(s.volatility.iter().all(|v| *v >= 0.0 && v.is_finite()), || {
            "synth.volatility entries must be non-negative".into()
        })?;
        check(s.correlation > -1.0 && s.correlation < 1.0, || {
            format!("synth.correlation must lie in (-1, 1), got {}", s.correlation)
        })?;

        let f = &self.features;
        check(f.window >= 3, || format!("features.window must be at least 3, got {}", f.window))?;
        check(f.corr_window >= 3, || {
            format!("features.corr_window must be at least 3, got {}", f.corr_window)
        })?;
        positive("features.input_clip", f.input_clip)?;
        positive("features.rsae_lr", f.rsae_lr)?;
        check(f.rsae_batch >= 1, || "features.rsae_batch must be at least 1".into())?;

        let a = &self.agent;
        check((1..=8).contains(&a.gcn_order), || {
            format!("agent.gcn_order must lie in 1..=8, got {}", a.gcn_order)
        })?;
        positive("agent.kappa", a.kappa)?;
        check((0.0..=1.0).contains(&a.gamma), || {
            format!("agent.gamma must lie in [0, 1], got {}", a.gamma)
        })?;
        positive("agent.actor_lr", a.actor_lr)?;
        positive("agent.critic_lr", a.critic_lr)?;
        for (name, v) in [
            ("actor_conv1", a.actor_conv1),
            ("actor_conv2", a.actor_conv2),
            ("critic_conv1", a.critic_conv1),
            ("critic_conv2", a.critic_conv2),
            ("critic_conv3", a.critic_conv3),
        ] {
            check(v >= 1, || format!("agent.{name} must be at least 1"))?;
        }

        check(self.train.span >= 2, || {
            format!("train.span must be at least 2, got {}", self.train.span)
        })?;
        for (name, v) in [("sell", self.fees.sell), ("buy", self.fees.buy)] {
            check((0.0..1.0).contains(&v), || format!("fees.{name} must lie in [0, 1), got {v}"))?;
        }
        let b = &self.backtest;
        positive("backtest.initial_value", b.initial_value)?;
        check(b.alpha > 0.0 && b.alpha < 1.0, || {
            format!("backtest.alpha must lie in (0, 1), got {}", b.alpha)
        })?;
        check(b.days != Some(0), || "backtest.days must be at least 1".into())?;
        Ok(())
    }

    pub fn split_spec(&self) -> Result<SplitSpec, CliError> {
        match (&self.data.split, self.data.train, self.data.test) {
            (Some(id), _, _) => Ok(SplitSpec::Named(id.clone())),
            (None, Some([a, b]), Some([c, d])) => Ok(SplitSpec::Explicit {
                train: (a, b),
                test: (c, d),
            }),
            _ => Err(usage("config needs data.split or data.train and data.test".into())),
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        let s = &self.synth;
        SynthConfig {
            assets: s.assets,
            days: s.days,
            start: s.start,
            initial_price: s.initial_price,
            drift: s.drift.clone(),
            volatility: s.volatility.clone(),
            correlation: s.correlation,
            volume: s.volume,
            seed: self.seed,
        }
    }

    pub fn train_config(&self, assets: usize) -> TrainConfig {
        let f = &self.features;
        let a = &self.agent;
        TrainConfig {
            window: f.window,
            corr_window: f.corr_window,
            corr_input: match f.corr_input {
                CorrelationSource::Close => CorrelationInput::Close,
                CorrelationSource::LogReturn => CorrelationInput::LogReturn,
            },
            zero_policy: match f.zero_policy {
                ZeroRatio::Error => ZeroPolicy::Error,
                ZeroRatio::Neutral => ZeroPolicy::Neutral,
            },
            rsae: RsaeConfig {
                lr: f.rsae_lr,
                batch_size: f.rsae_batch,
                input_clip: f.input_clip,
            },
            rsae_epochs: f.rsae_epochs,
            agent: AgentConfig {
                gcn_order: a.gcn_order,
                actor_conv1: a.actor_conv1,
                actor_conv2: a.actor_conv2,
                critic_conv1: a.critic_conv1,
                critic_conv2: a.critic_conv2,
                critic_conv3: a.critic_conv3,
                critic_uses_weights: a.critic_uses_weights,
                kappa: a.kappa,
                gamma: a.gamma,
                actor_lr: a.actor_lr,
                critic_lr: a.critic_lr,
                ..AgentConfig::new(assets, f.window)
            },
            span: self.train.span,
            batches_per_epoch: self.train.batches_per_epoch,
            epochs: self.train.epochs,
            fees: CommissionSchedule {
                sell: self.fees.sell,
                buy: self.fees.buy,
            },
            online_rsae: f.online_rsae,
            initial_value: self.backtest.initial_value,
            ..TrainConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(RunConfig::parse("").unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::parse("[agent]\nkapa = 3\n").unwrap_err();
        assert!(err.to_string().contains("kapa"), "{err}");
        assert!(RunConfig::parse("colour = 1\n").is_err());
    }

    #[test]
    fn ranges_are_checked() {
        for bad in [
            "[agent]\ngamma = 1.5",
            "[agent]\nkappa = 0.0",
            "[features]\nwindow = 2",
            "[fees]\nsell = 1.0",
            "[backtest]\nalpha = 1.0",
            "[data]\nsplit = \"test1\"\ntrain = [\"2020-01-01\", \"2020-02-01\"]",
            "[data]\ntrain = [\"2020-03-01\", \"2020-02-01\"]\ntest = [\"2020-03-02\", \"2020-04-01\"]",
        ] {
            assert!(RunConfig::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn dates_parse_from_strings_and_native_dates() {
        let quoted = RunConfig::parse(
            "[data]\ntrain = [\"2015-01-05\", \"2015-12-31\"]\ntest = [\"2016-01-04\", \"2016-03-01\"]\n",
        )
        .unwrap();
        let native = RunConfig::parse(
            "[data]\ntrain = [2015-01-05, 2015-12-31]\ntest = [2016-01-04, 2016-03-01]\n[synth]\nstart = 2019-05-06\n",
        )
        .unwrap();
        assert_eq!(quoted.data, native.data);
        assert_eq!(native.synth.start, NaiveDate::from_ymd_opt(2019, 5, 6).unwrap());
        assert_eq!(
            native.split_spec().unwrap(),
            SplitSpec::Explicit {
                train: (
                    NaiveDate::from_ymd_opt(2015, 1, 5).unwrap(),
                    NaiveDate::from_ymd_opt(2015, 12, 31).unwrap()
                ),
                test: (
                    NaiveDate::from_ymd_opt(2016, 1, 4).unwrap(),
                    NaiveDate::from_ymd_opt(2016, 3, 1).unwrap()
                ),
            }
        );
        assert_eq!(RunConfig::parse(&native.to_toml()).unwrap(), native);

        for bad in ["train = [2015-01-05T10:00:00, 2015-12-31]", "train = [\"5/1/2015\", \"2015-12-31\"]"] {
            assert!(RunConfig::parse(&format!("[data]\n{bad}\n")).is_err(), "{bad}");
        }
    }
}
