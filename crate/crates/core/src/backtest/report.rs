use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;

use super::metrics::{cvar, max_drawdown, sharpe_ratio, simple_returns};
use super::{BacktestError, Result};
use crate::agent::StepDiagnostics;
use crate::market_data::DATE_FORMAT;
use crate::portfolio::WeightVector;

/// Day-by-day record of one simulated episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeReport {
    pub assets: Vec<String>,
    pub initial_value: f64,
    pub dates: Vec<NaiveDate>,
    /// Portfolio value at each day's close, after rebalancing.
    pub values: Vec<f64>,
    /// Weights held after each day's rebalance, cash first.
    pub weights: Vec<WeightVector>,
    pub log_returns: Vec<f64>,
    pub mus: Vec<f64>,
    /// Latest date of the data used by that day's online update.
    pub trained_through: Vec<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub days: usize,
    pub roi_pct: f64,
    pub mdd_pct: f64,
    /// `None` when the excess returns have no variation.
    pub sharpe: Option<f64>,
    pub alpha: f64,
    pub var: f64,
    pub cvar: f64,
    /// ROI after 30, 60 and 90 days where the episode is that long.
    pub roi_at: Vec<(usize, Option<f64>)>,
}

impl EpisodeReport {
    pub fn new(assets: Vec<String>, initial_value: f64) -> Self {
        Self {
            assets,
            initial_value,
            dates: Vec::new(),
            values: Vec::new(),
            weights: Vec::new(),
            log_returns: Vec::new(),
            mus: Vec::new(),
            trained_through: Vec::new(),
        }
    }

    pub(crate) fn push(
        &mut self,
        date: NaiveDate,
        value: f64,
        weights: WeightVector,
        log_return: f64,
        mu: f64,
        trained_through: NaiveDate,
    ) {
        self.dates.push(date);
        self.values.push(value);
        self.weights.push(weights);
        self.log_returns.push(log_return);
        self.mus.push(mu);
        self.trained_through.push(trained_through);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Initial value followed by the daily values.
    pub fn curve(&self) -> Vec<f64> {
        std::iter::once(self.initial_value).chain(self.values.iter().copied()).collect()
    }

    pub fn final_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(self.initial_value)
    }

    /// `(final / initial − 1) · 100`.
    pub fn roi_pct(&self) -> f64 {
        (self.final_value() / self.initial_value - 1.0) * 100.0
    }

    /// ROI after the first `days` days, if the episode lasted that long.
    pub fn roi_after(&self, days: usize) -> Option<f64> {
        (days >= 1 && days <= self.values.len())
            .then(|| (self.values[days - 1] / self.initial_value - 1.0) * 100.0)
    }

    /// Daily simple returns of the value curve.
    pub fn returns(&self) -> Vec<f64> {
        simple_returns(&self.curve())
    }

    /// Metrics at tail level `alpha`; `benchmark` holds per-day benchmark
    /// returns (zero when absent).
    pub fn metrics(&self, alpha: f64, benchmark: Option<&[f64]>) -> Result<Metrics> {
        if self.is_empty() {
            return Err(BacktestError::Metric("empty episode".into()));
        }
        let returns = self.returns();
        let zeros = vec![0.0; returns.len()];
        let bench = benchmark.unwrap_or(&zeros);
        let sharpe = match sharpe_ratio(&returns, bench) {
            Ok(s) => Some(s),
            Err(_) if bench.len() == returns.len() => None,
            Err(e) => return Err(e),
        };
        let losses: Vec<f64> = returns.iter().map(|r| -r).collect();
        let (var, cvar) = cvar(&losses, alpha)?;
        Ok(Metrics {
            days: self.len(),
            roi_pct: self.roi_pct(),
            mdd_pct: max_drawdown(&self.curve())? * 100.0,
            sharpe,
            alpha,
            var,
            cvar,
            roi_at: [30, 60, 90].into_iter().map(|d| (d, self.roi_after(d))).collect(),
        })
    }

    /// `date,value,roi_pct` per day.
    pub fn report_csv(&self) -> String {
        let mut out = String::from("date,value,roi_pct\n");
        for (d, v) in self.dates.iter().zip(&self.values) {
            let roi = (v / self.initial_value - 1.0) * 100.0;
            let _ = writeln!(out, "{},{},{}", d.format(DATE_FORMAT), v, roi);
        }
        out
    }

    /// `date,cash,<asset>…` per day.
    pub fn weights_csv(&self) -> String {
        let mut out = String::from("date,cash");
        for a in &self.assets {
            out.push(',');
            out.push_str(a);
        }
        out.push('\n');
        for (d, w) in self.dates.iter().zip(&self.weights) {
            out.push_str(&d.format(DATE_FORMAT).to_string());
            for v in w.as_slice() {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    /// Writes `report.csv`, `weights.csv` and `metrics.txt` into `dir`.
    pub fn write_dir(&self, dir: &Path, alpha: f64, benchmark: Option<&[f64]>) -> Result<Metrics> {
        let metrics = self.metrics(alpha, benchmark)?;
        let io = |e: std::io::Error| BacktestError::Io(format!("{}: {e}", dir.display()));
        fs::create_dir_all(dir).map_err(io)?;
        fs::write(dir.join("report.csv"), self.report_csv()).map_err(io)?;
        fs::write(dir.join("weights.csv"), self.weights_csv()).map_err(io)?;
        fs::write(dir.join("metrics.txt"), metrics.to_text()).map_err(io)?;
        Ok(metrics)
    }
}

impl Metrics {
    /// `key = value` lines; percentages to two decimals.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "days = {}", self.days);
        let _ = writeln!(out, "roi = {:.2}", self.roi_pct);
        let _ = writeln!(out, "mdd = {:.2}", self.mdd_pct);
        match self.sharpe {
            Some(s) => {
                let _ = writeln!(out, "sharpe = {s:.6}");
            }
            None => out.push_str("sharpe = undefined\n"),
        }
        let _ = writeln!(out, "alpha = {}", self.alpha);
        let _ = writeln!(out, "var = {:.6}", self.var);
        let _ = writeln!(out, "cvar = {:.6}", self.cvar);
        for (d, roi) in &self.roi_at {
            match roi {
                Some(r) => {
                    let _ = writeln!(out, "roi_{d}d = {r:.2}");
                }
                None => {
                    let _ = writeln!(out, "roi_{d}d = n/a");
                }
            }
        }
        out
    }
}

pub const TRAIN_LOG_HEADER: &str = "step,td_error,critic_loss,actor_grad_norm,reward";

/// One `train_log.csv` row for step `index`.
pub fn train_log_line(index: usize, s: &StepDiagnostics) -> String {
    format!(
        "{index},{},{},{},{}",
        s.td_error, s.critic_loss, s.actor_grad_norm, s.reward
    )
}

/// Writes [`TRAIN_LOG_HEADER`] and one row per training step.
pub fn write_train_log(steps: &[StepDiagnostics], path: &Path) -> Result<()> {
    let mut out = format!("{TRAIN_LOG_HEADER}\n");
    for (i, s) in steps.iter().enumerate() {
        out.push_str(&train_log_line(i, s));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| BacktestError::Io(format!("{}: {e}", path.display())))
}
