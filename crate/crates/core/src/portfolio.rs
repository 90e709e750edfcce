//! Portfolio accounting: price relatives, weight drift, the transaction
//! factor and per-period returns.
//!
//! Weight vectors have `m + 1` entries; index 0 is cash. A period runs as
//! follows: the portfolio holds `w_{t−1}`, prices move by `Y_t`, the weights
//! drift to `w'_t = (Y_t ⊙ w_{t−1}) / (Y_t · w_{t−1})`, and rebalancing to the
//! target `w_t` shrinks the value by the transaction factor `μ_t`, so
//! `P_t = μ_t · P_{t−1} · (Y_t · w_{t−1})`.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PortfolioError {
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("price at index {index} must be positive, got {value}")]
    NonPositivePrice { index: usize, value: f64 },
    #[error("{what}: lengths {left} and {right} differ")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },
    #[error("commission rates must lie in [0, 1), got sell {sell}, buy {buy}")]
    InvalidFees { sell: f64, buy: f64 },
    #[error("transaction factor did not converge in {iterations} iterations (last iterate {last})")]
    NoConvergence { last: f64, iterations: usize },
    #[error("transaction factor {0} outside (0, 1]")]
    MuOutOfRange(f64),
    #[error("solver tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("portfolio value must be positive and finite, got {0}")]
    InvalidValue(f64),
    #[error("empty return trajectory")]
    EmptyTrajectory,
}

pub type Result<T> = std::result::Result<T, PortfolioError>;

/// Tolerance used when validating that weights sum to one.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Portfolio weights over cash (index 0) and `m` assets.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(PortfolioError::InvalidWeights("empty".into()));
        }
        if let Some((i, v)) = w.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(PortfolioError::InvalidWeights(format!(
                "entry {i} is {v}"
            )));
        }
        let s: f64 = w.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOL {
            return Err(PortfolioError::InvalidWeights(format!("sum is {s}")));
        }
        Ok(Self(w))
    }

    /// Everything in cash, `m` assets.
    pub fn cash(m: usize) -> Self {
        let mut w = vec![0.0; m + 1];
        w[0] = 1.0;
        Self(w)
    }

    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / (m + 1) as f64; m + 1])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Number of entries, cash included.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn num_assets(&self) -> usize {
        self.0.len() - 1
    }
}

/// Price relatives with the cash entry fixed at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceRelative(Vec<f64>);

impl PriceRelative {
    pub fn new(y: Vec<f64>) -> Result<Self> {
        if let Some((index, &value)) = y.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
            return Err(PortfolioError::NonPositivePrice { index, value });
        }
        if y.first() != Some(&1.0) {
            return Err(PortfolioError::InvalidWeights(
                "price relative must start with 1 for cash".into(),
            ));
        }
        Ok(Self(y))
    }

    pub fn ones(m: usize) -> Self {
        Self(vec![1.0; m + 1])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `Y = [1, v_t / v_prev]` from two asset price vectors.
pub fn price_relatives(v_t: &[f64], v_prev: &[f64]) -> Result<PriceRelative> {
    if v_t.len() != v_prev.len() {
        return Err(PortfolioError::LengthMismatch {
            what: "price_relatives",
            left: v_t.len(),
            right: v_prev.len(),
        });
    }
    for (i, &p) in v_t.iter().chain(v_prev).enumerate() {
        if !(p > 0.0) || !p.is_finite() {
            return Err(PortfolioError::NonPositivePrice {
                index: i % v_t.len().max(1) + 1,
                value: p,
            });
        }
    }
    let mut y = Vec::with_capacity(v_t.len() + 1);
    y.push(1.0);
    y.extend(v_t.iter().zip(v_prev).map(|(a, b)| a / b));
    Ok(PriceRelative(y))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommissionSchedule {
    pub sell: f64,
    pub buy: f64,
}

impl CommissionSchedule {
    pub fn new(sell: f64, buy: f64) -> Result<Self> {
        let ok = |c: f64| (0.0..1.0).contains(&c);
        if !ok(sell) || !ok(buy) {
            return Err(PortfolioError::InvalidFees { sell, buy });
        }
        Ok(Self { sell, buy })
    }

    pub fn frictionless() -> Self {
        Self { sell: 0.0, buy: 0.0 }
    }

    pub fn is_frictionless(&self) -> bool {
        self.sell == 0.0 && self.buy == 0.0
    }
}

impl Default for CommissionSchedule {
    fn default() -> Self {
        Self {
            sell: 0.0025,
            buy: 0.0025,
        }
    }
}

fn check_len(what: &'static str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(PortfolioError::LengthMismatch {
            what,
            left: a,
            right: b,
        });
    }
    Ok(())
}

/// `Y · w`, divided by `Σ w` so that an all-ones `Y` gives exactly 1.
pub fn growth(w: &WeightVector, y: &PriceRelative) -> f64 {
    let dot: f64 = w.0.iter().zip(&y.0).map(|(a, b)| a * b).sum();
    dot / w.0.iter().sum::<f64>()
}

/// Weights after prices move by `y`: `(Y ⊙ w) / (Y · w)`.
pub fn drift_weights(w: &WeightVector, y: &PriceRelative) -> Result<WeightVector> {
    check_len("drift_weights", w.len(), y.len())?;
    let scaled: Vec<f64> = w.0.iter().zip(&y.0).map(|(a, b)| a * b).collect();
    let total: f64 = scaled.iter().sum();
    Ok(WeightVector(scaled.into_iter().map(|v| v / total).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransactionFactor {
    pub mu: f64,
    pub iterations: usize,
}

fn mu_update(mu: f64, drifted: &[f64], target: &[f64], fees: CommissionSchedule) -> f64 {
    let (cs, cb) = (fees.sell, fees.buy);
    let sold: f64 = drifted[1..]
        .iter()
        .zip(&target[1..])
        .map(|(d, t)| (d - mu * t).max(0.0))
        .sum();
    (1.0 - cb * drifted[0] - (cs + cb - cs * cb) * sold) / (1.0 - cb * target[0])
}

/// Solves `μ = [1 − c_b·w'₀ − (c_s + c_b − c_s·c_b)·Σ_{i≥1} (w'_i − μ·w_i)⁺] / (1 − c_b·w₀)`
/// by fixed-point iteration from `μ₀ = c_s + c_b`.
///
/// Without fees, or when the target equals the drifted weights, the unique
/// solution is exactly 1 and is returned without iterating.
pub fn transaction_factor(
    drifted: &WeightVector,
    target: &WeightVector,
    fees: CommissionSchedule,
    settings: SolverSettings,
) -> Result<TransactionFactor> {
    check_len("transaction_factor", drifted.len(), target.len())?;
    if !(settings.tol > 0.0) {
        return Err(PortfolioError::InvalidTolerance(settings.tol));
    }
    if fees.is_frictionless() || drifted == target {
        return Ok(TransactionFactor {
            mu: 1.0,
            iterations: 0,
        });
    }
    let mut mu = fees.sell + fees.buy;
    for k in 1..=settings.max_iter {
        let next = mu_update(mu, &drifted.0, &target.0, fees);
        let done = (next - mu).abs() < settings.tol;
        mu = next;
        if done {
            if !(mu > 0.0 && mu <= 1.0) {
                return Err(PortfolioError::MuOutOfRange(mu));
            }
            return Ok(TransactionFactor { mu, iterations: k });
        }
    }
    Err(PortfolioError::NoConvergence {
        last: mu,
        iterations: settings.max_iter,
    })
}

/// Gross turnover implied by a rebalance, as fractions of the pre-trade value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Turnover {
    pub sold: f64,
    pub bought: f64,
}

pub fn turnover(drifted: &WeightVector, target: &WeightVector, mu: f64) -> Turnover {
    let mut t = Turnover {
        sold: 0.0,
        bought: 0.0,
    };
    for (d, w) in drifted.0[1..].iter().zip(&target.0[1..]) {
        t.sold += (d - mu * w).max(0.0);
        t.bought += (mu * w - d).max(0.0);
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioState {
    pub weights: WeightVector,
    pub value: f64,
    pub last_mu: f64,
}

impl PortfolioState {
    /// All cash, `m` assets.
    pub fn new(m: usize, value: f64) -> Result<Self> {
        if !(value > 0.0) || !value.is_finite() {
            return Err(PortfolioError::InvalidValue(value));
        }
        Ok(Self {
            weights: WeightVector::cash(m),
            value,
            last_mu: 1.0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub mu: f64,
    /// `Y_t · w_{t−1}`.
    pub growth: f64,
    /// Simple return `μ·(Y·w) − 1`.
    pub rate: f64,
    /// Log return `ln(μ·(Y·w))`.
    pub log_return: f64,
    pub turnover: Turnover,
}

/// Advances one period: prices move by `y`, then the portfolio is rebalanced
/// to `target`.
pub fn step_value(
    state: &PortfolioState,
    y: &PriceRelative,
    target: &WeightVector,
    fees: CommissionSchedule,
) -> Result<(PortfolioState, StepOutcome)> {
    check_len("step_value", state.weights.len(), target.len())?;
    let drifted = drift_weights(&state.weights, y)?;
    let g = growth(&state.weights, y);
    let tf = transaction_factor(&drifted, target, fees, SolverSettings::default())?;
    let factor = tf.mu * g;
    let value = state.value * factor;
    if !(value > 0.0) || !value.is_finite() {
        return Err(PortfolioError::InvalidValue(value));
    }
    let outcome = StepOutcome {
        mu: tf.mu,
        growth: g,
        rate: factor - 1.0,
        log_return: factor.ln(),
        turnover: turnover(&drifted, target, tf.mu),
    };
    let next = PortfolioState {
        weights: target.clone(),
        value,
        last_mu: tf.mu,
    };
    Ok((next, outcome))
}

/// Average log return over the horizon.
pub fn episode_reward(log_returns: &[f64]) -> Result<f64> {
    if log_returns.is_empty() {
        return Err(PortfolioError::EmptyTrajectory);
    }
    Ok(log_returns.iter().sum::<f64>() / log_returns.len() as f64)
}
