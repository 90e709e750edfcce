//! Offline training on random spans of the training range, online
//! day-by-day evaluation with a rolling update buffer, and risk metrics.
//!
//! Timing convention: on decision row `t` the agent sees data up to the close
//! of `t`, prices move by `Y_t = close_t / close_{t−1}` on the weights held
//! since `t − 1`, and the portfolio is then rebalanced to the new action
//! `a_t`. The reward credited to `a_t` is `ln μ_t + ln(Y_{t+1} · a_t)`, which
//! needs the next close, so training transitions never include the current
//! day's action.

mod buffer;
pub mod metrics;
mod report;

pub use buffer::{BufferedDay, OnlineBuffer, BUFFER_CAPACITY};
pub use metrics::{cvar, max_drawdown, sharpe_ratio, simple_returns};
pub use report::{train_log_line, write_train_log, EpisodeReport, Metrics, TRAIN_LOG_HEADER};

use std::collections::HashMap;
use std::ops::Range;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::agent::{Agent, AgentConfig, AgentError, AgentState, StepDiagnostics, Transition};
use crate::features::{
    day_features, first_feature_row, normalize_window_with, rsae_train_rows, FeatureError, Rsae,
    RsaeConfig, TrainReport, ZeroPolicy, NUM_FEATURES,
};
use crate::graph_conv::{build_graph, CorrelationInput, GraphError};
use crate::market_data::{compute_indicators, DataError, IndicatorParams, IndicatorSet, Panel, SplitPanels};
use crate::portfolio::{
    drift_weights, growth, price_relatives, step_value, transaction_factor, CommissionSchedule,
    PortfolioError, PortfolioState, PriceRelative, SolverSettings, WeightVector,
};
use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Portfolio(#[from] PortfolioError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{0}")]
    Metric(String),
    #[error("invalid backtest config: {0}")]
    Config(String),
    #[error(
        "{what}: {usable} usable trading days after the {warmup}-day indicator/window warm-up, \
         need at least {required}"
    )]
    InsufficientHistory {
        what: &'static str,
        usable: usize,
        required: usize,
        warmup: usize,
    },
    #[error("date {0} is not a trading day of the panel")]
    UnknownDate(NaiveDate),
    #[error("{days} days from {start} run past the end of the data ({available} available)")]
    PastEnd {
        start: NaiveDate,
        days: usize,
        available: usize,
    },
    #[error("buffer is at {last}; cannot push earlier or equal date {pushed}")]
    Chronology { last: NaiveDate, pushed: NaiveDate },
    #[error("online update on {current} would train on data from {trained}")]
    Causality { current: NaiveDate, trained: NaiveDate },
    #[error("{0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, BacktestError>;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Trading window `n` in days.
    pub window: usize,
    /// Days of closes behind each correlation graph.
    pub corr_window: usize,
    pub corr_input: CorrelationInput,
    pub indicators: IndicatorParams,
    pub zero_policy: ZeroPolicy,
    pub rsae: RsaeConfig,
    pub rsae_epochs: usize,
    /// Agent hyperparameters; `assets` and `window` are filled in from the
    /// panel and [`TrainConfig::window`].
    pub agent: AgentConfig,
    /// Consecutive trading days per offline batch.
    pub span: usize,
    pub batches_per_epoch: usize,
    pub epochs: usize,
    pub fees: CommissionSchedule,
    /// Also take one autoencoder epoch over the buffered days during online
    /// updates.
    pub online_rsae: bool,
    pub initial_value: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            window: 30,
            corr_window: 10,
            corr_input: CorrelationInput::Close,
            indicators: IndicatorParams::default(),
            zero_policy: ZeroPolicy::Neutral,
            rsae: RsaeConfig::default(),
            rsae_epochs: 30,
            agent: AgentConfig::new(1, 30),
            span: 90,
            batches_per_epoch: 64,
            epochs: 50,
            fees: CommissionSchedule::default(),
            online_rsae: true,
            initial_value: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn agent_config(&self, assets: usize) -> AgentConfig {
        AgentConfig {
            assets,
            window: self.window,
            ..self.agent
        }
    }

    pub fn validate(&self, assets: usize) -> Result<()> {
        self.agent_config(assets).validate()?;
        self.indicators.validate().map_err(BacktestError::Config)?;
        if self.corr_window < 3 {
            return Err(BacktestError::Config(format!(
                "correlation window {} is below 3",
                self.corr_window
            )));
        }
        if self.span == 0 {
            return Err(BacktestError::Config("span must be at least 1 day".into()));
        }
        if !(self.initial_value > 0.0 && self.initial_value.is_finite()) {
            return Err(BacktestError::Config(format!(
                "initial value {} is not positive",
                self.initial_value
            )));
        }
        if !(self.rsae.lr > 0.0) || self.rsae.batch_size == 0 || !(self.rsae.input_clip > 0.0) {
            return Err(BacktestError::Config("autoencoder settings out of range".into()));
        }
        Ok(())
    }

    /// First panel row on which a full observation can be built.
    pub fn first_usable_row(&self, indicators: &[IndicatorSet]) -> usize {
        let features = first_feature_row(indicators) + self.window - 1;
        let graph = match self.corr_input {
            CorrelationInput::Close => self.corr_window - 1,
            CorrelationInput::LogReturn => self.corr_window,
        };
        features.max(graph).max(1)
    }
}

/// The learned components: autoencoder and actor–critic (with its graph
/// filters).
#[derive(Debug, Clone, PartialEq)]
pub struct Models {
    pub rsae: Rsae,
    pub agent: Agent,
}

impl Models {
    pub fn new(assets: usize, config: &TrainConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate(assets)?;
        let rsae = Rsae::new(rng);
        let agent = Agent::new(config.agent_config(assets), rng)?;
        Ok(Self { rsae, agent })
    }
}

/// Per-row inputs that do not depend on the portfolio.
#[derive(Debug, Clone, PartialEq)]
pub struct DayInputs {
    pub latent: Tensor,
    pub laplacian: Tensor,
}

impl DayInputs {
    fn state(&self, prev: WeightVector) -> Result<AgentState> {
        Ok(AgentState::new(self.latent.clone(), self.laplacian.clone(), prev)?)
    }
}

/// A panel with its indicators, ready to produce observations.
#[derive(Debug, Clone)]
pub struct MarketView<'a> {
    panel: &'a Panel,
    indicators: Vec<IndicatorSet>,
    config: &'a TrainConfig,
    first_row: usize,
}

impl<'a> MarketView<'a> {
    pub fn new(panel: &'a Panel, config: &'a TrainConfig) -> Result<Self> {
        config.validate(panel.num_assets())?;
        let indicators = panel
            .series()
            .iter()
            .map(|s| compute_indicators(s, &config.indicators))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let first_row = config.first_usable_row(&indicators);
        Ok(Self {
            panel,
            indicators,
            config,
            first_row,
        })
    }

    pub fn panel(&self) -> &Panel {
        self.panel
    }

    pub fn first_row(&self) -> usize {
        self.first_row
    }

    pub fn indicators(&self) -> &[IndicatorSet] {
        &self.indicators
    }

    /// `Y_t`: closes of row `t` over row `t − 1`, cash first.
    pub fn relatives(&self, t: usize) -> Result<PriceRelative> {
        let m = self.panel.num_assets();
        let now: Vec<f64> = (0..m).map(|a| self.panel.close(a, t)).collect();
        let prev: Vec<f64> = (0..m).map(|a| self.panel.close(a, t - 1)).collect();
        Ok(price_relatives(&now, &prev)?)
    }

    pub fn laplacian(&self, t: usize) -> Result<Tensor> {
        let g = build_graph(self.panel, t, self.config.corr_window, self.config.corr_input)?;
        Ok(g.filter_laplacian()?)
    }

    pub fn latent(&self, rsae: &Rsae, t: usize) -> Result<Tensor> {
        let w = normalize_window_with(
            self.panel,
            &self.indicators,
            t,
            self.config.window,
            self.config.zero_policy,
        )?;
        Ok(rsae.encode_window(&w, &self.config.rsae)?)
    }

    pub fn inputs(&self, rsae: &Rsae, t: usize) -> Result<DayInputs> {
        Ok(DayInputs {
            latent: self.latent(rsae, t)?,
            laplacian: self.laplacian(t)?,
        })
    }

    /// Feature rows `[rows·m, 11]` of the given panel rows, every asset.
    pub fn feature_rows(&self, rows: impl IntoIterator<Item = usize>) -> Result<Tensor> {
        let mut data = Vec::new();
        for d in rows {
            for a in 0..self.panel.num_assets() {
                let f = day_features(self.panel, &self.indicators, a, d, self.config.zero_policy)?;
                data.extend_from_slice(&f);
            }
        }
        let n = data.len() / NUM_FEATURES;
        Ok(Tensor::new(&[n, NUM_FEATURES], data)?)
    }
}

/// Summary of one offline batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchDiagnostics {
    pub epoch: usize,
    pub batch: usize,
    pub start: NaiveDate,
    pub mean_reward: f64,
    pub mean_abs_td: f64,
    pub mean_critic_loss: f64,
    /// Policy mean averaged over the span's decision days.
    pub mean_weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub models: Models,
    pub rsae_report: Option<TrainReport>,
    pub batches: Vec<BatchDiagnostics>,
    pub steps: Vec<StepDiagnostics>,
}

/// Reward of moving from `prev` to `action` on row `t`: `ln μ_t + ln(Y_{t+1}·a)`.
fn reward(
    prev: &WeightVector,
    action: &WeightVector,
    y_now: &PriceRelative,
    y_next: &PriceRelative,
    fees: CommissionSchedule,
) -> Result<f64> {
    let drifted = drift_weights(prev, y_now)?;
    let tf = transaction_factor(&drifted, action, fees, SolverSettings::default())?;
    Ok(tf.mu.ln() + growth(action, y_next).ln())
}

/// Rolls the agent over consecutive decision rows starting from all cash,
/// sampling actions and applying one training step per row. `rows` must be
/// consecutive and every `inputs[t + 1]` available.
fn train_rollout(
    agent: &mut Agent,
    view: &MarketView,
    inputs: &dyn Fn(usize) -> Result<DayInputs>,
    rows: Range<usize>,
    fees: CommissionSchedule,
    rng: &mut impl Rng,
    observer: &mut dyn FnMut(&StepDiagnostics),
) -> Result<(Vec<StepDiagnostics>, Vec<f64>)> {
    let m = view.panel.num_assets();
    let mut w = WeightVector::cash(m);
    let mut steps = Vec::with_capacity(rows.len());
    let mut mean_w = vec![0.0; m + 1];
    let last = rows.end - 1;
    let mut current = inputs(rows.start)?;
    for t in rows.clone() {
        let state = current.state(w.clone())?;
        let dist = agent.distribution(&state)?;
        for (acc, p) in mean_w.iter_mut().zip(dist.mean()) {
            *acc += p / rows.len() as f64;
        }
        let sample = dist.sample(rng)?;
        let r = reward(&w, &sample.action, &view.relatives(t)?, &view.relatives(t + 1)?, fees)?;
        let next = inputs(t + 1)?;
        let tr = Transition {
            state,
            log_action: sample.log_action,
            reward: r,
            next_state: next.state(sample.action.clone())?,
            terminal: t == last,
        };
        let step = agent.train_step(&tr)?;
        observer(&step);
        steps.push(step);
        w = sample.action;
        current = next;
    }
    Ok((steps, mean_w))
}

/// Trains fresh models from `seed` on the training part of `split`.
pub fn train_offline(split: &SplitPanels, config: &TrainConfig, seed: u64) -> Result<TrainOutput> {
    train_offline_observed(split, config, seed, &mut |_| {})
}

/// [`train_offline`] that also reports every agent step to `observer` as it
/// happens, so a caller can keep a log of a run that later fails.
pub fn train_offline_observed(
    split: &SplitPanels,
    config: &TrainConfig,
    seed: u64,
    observer: &mut dyn FnMut(&StepDiagnostics),
) -> Result<TrainOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let models = Models::new(split.panel.num_assets(), config, &mut rng)?;
    train_models(models, &split.panel, split.train.clone(), config, &mut rng, observer)
}

/// Offline training starting from existing models on rows `train` of `panel`.
/// The autoencoder is fitted first on every usable training row; the agent
/// then runs `epochs × batches_per_epoch` batches, each a rollout over a random
/// `span`-day stretch starting from all cash.
pub fn train_offline_from(
    models: Models,
    panel: &Panel,
    train: Range<usize>,
    config: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<TrainOutput> {
    train_models(models, panel, train, config, rng, &mut |_| {})
}

fn train_models(
    mut models: Models,
    panel: &Panel,
    train: Range<usize>,
    config: &TrainConfig,
    rng: &mut impl Rng,
    observer: &mut dyn FnMut(&StepDiagnostics),
) -> Result<TrainOutput> {
    let view = MarketView::new(panel, config)?;
    let lo = train.start.max(view.first_row);
    // the last decision row needs the following close for its reward
    let usable = train.end.saturating_sub(lo + 1);
    if usable < config.span {
        return Err(BacktestError::InsufficientHistory {
            what: "training range",
            usable,
            required: config.span,
            warmup: view.first_row,
        });
    }
    let hi = train.end - 1 - config.span;

    let mut rsae_report = None;
    if config.rsae_epochs > 0 {
        let first = train.start.max(first_feature_row(&view.indicators));
        let rows = view.feature_rows(first..train.end)?;
        models.rsae.fit_scaling(&rows)?;
        let (rsae, report) = rsae_train_rows(models.rsae, &rows, config.rsae_epochs, &config.rsae, rng)?;
        models.rsae = rsae;
        rsae_report = Some(report);
    }

    let total = config.epochs * config.batches_per_epoch;
    let mut batches = Vec::with_capacity(total);
    let mut steps = Vec::new();
    if total > 0 {
        let cache: Vec<DayInputs> = (lo..train.end)
            .map(|t| view.inputs(&models.rsae, t))
            .collect::<Result<_>>()?;
        let inputs = |t: usize| Ok(cache[t - lo].clone());
        for epoch in 0..config.epochs {
            for batch in 0..config.batches_per_epoch {
                let t0 = rng.random_range(lo..=hi);
                let (s, mean_weights) = train_rollout(
                    &mut models.agent,
                    &view,
                    &inputs,
                    t0..t0 + config.span,
                    config.fees,
                    rng,
                    observer,
                )?;
                let k = s.len() as f64;
                batches.push(BatchDiagnostics {
                    epoch,
                    batch,
                    start: panel.dates()[t0],
                    mean_reward: s.iter().map(|d| d.reward).sum::<f64>() / k,
                    mean_abs_td: s.iter().map(|d| d.td_error.abs()).sum::<f64>() / k,
                    mean_critic_loss: s.iter().map(|d| d.critic_loss).sum::<f64>() / k,
                    mean_weights,
                });
                steps.extend(s);
            }
        }
    }
    Ok(TrainOutput {
        models,
        rsae_report,
        batches,
        steps,
    })
}

/// Simulates `days` trading days from `start`, updating the models online.
///
/// Each day the day is pushed into the [`OnlineBuffer`] (pre-filled with up to
/// ten earlier days), the models take one training pass over the buffered
/// days whose rewards are already known, and the deterministic action (the
/// policy mean) is traded.
pub fn run_online(
    panel: &Panel,
    start: NaiveDate,
    days: usize,
    models: Models,
    config: &TrainConfig,
    seed: u64,
) -> Result<(Models, EpisodeReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut models = models;
    let view = MarketView::new(panel, config)?;
    let s = panel
        .dates()
        .binary_search(&start)
        .map_err(|_| BacktestError::UnknownDate(start))?;
    if s < view.first_row {
        return Err(BacktestError::InsufficientHistory {
            what: "history before the online start",
            usable: s,
            required: view.first_row,
            warmup: view.first_row,
        });
    }
    if days == 0 || s + days > panel.len() {
        return Err(BacktestError::PastEnd {
            start,
            days,
            available: panel.len() - s,
        });
    }
    let m = panel.num_assets();
    let mut buffer = OnlineBuffer::new();
    for t in s.saturating_sub(BUFFER_CAPACITY - 1).max(view.first_row)..s {
        buffer.push(BufferedDay {
            date: panel.dates()[t],
            row: t,
        })?;
    }
    let mut laplacians: HashMap<usize, Tensor> = HashMap::new();
    let mut portfolio = PortfolioState::new(m, config.initial_value)?;
    let mut report = EpisodeReport::new(
        panel.assets().iter().map(|a| a.to_string()).collect(),
        config.initial_value,
    );

    for t in s..s + days {
        let today = panel.dates()[t];
        buffer.push(BufferedDay { date: today, row: t })?;
        let trained = buffer.latest_date().expect("just pushed");
        if trained > today {
            return Err(BacktestError::Causality {
                current: today,
                trained,
            });
        }
        let rows = buffer.rows();
        for &r in &rows {
            if let std::collections::hash_map::Entry::Vacant(e) = laplacians.entry(r) {
                e.insert(view.laplacian(r)?);
            }
        }
        if config.online_rsae {
            let feats = view.feature_rows(rows.iter().copied())?;
            let (rsae, _) = rsae_train_rows(models.rsae, &feats, 1, &config.rsae, &mut rng)?;
            models.rsae = rsae;
        }
        if rows.len() >= 2 {
            let latents: HashMap<usize, Tensor> = rows
                .iter()
                .map(|&r| Ok((r, view.latent(&models.rsae, r)?)))
                .collect::<Result<_>>()?;
            let inputs = |r: usize| {
                Ok(DayInputs {
                    latent: latents[&r].clone(),
                    laplacian: laplacians[&r].clone(),
                })
            };
            // transitions whose reward needs closes up to `t` at most
            train_rollout(&mut models.agent, &view, &inputs, rows[0]..t, config.fees, &mut rng, &mut |_| {})?;
        }
        let today_inputs = DayInputs {
            latent: view.latent(&models.rsae, t)?,
            laplacian: laplacians[&t].clone(),
        };
        let action = models
            .agent
            .policy_mean(&today_inputs.state(portfolio.weights.clone())?)?;
        let (next, outcome) = step_value(&portfolio, &view.relatives(t)?, &action, config.fees)?;
        portfolio = next;
        report.push(today, portfolio.value, action, outcome.log_return, outcome.mu, trained);
        laplacians.retain(|r, _| rows.contains(r));
    }
    Ok((models, report))
}
