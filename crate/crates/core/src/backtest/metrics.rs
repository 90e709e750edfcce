//! Risk and return metrics of a value curve.

use super::{BacktestError, Result};

/// Largest peak-to-later-trough decline as a fraction of the peak.
pub fn max_drawdown(curve: &[f64]) -> Result<f64> {
    if curve.is_empty() {
        return Err(BacktestError::Metric("drawdown of an empty curve".into()));
    }
    if let Some(v) = curve.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(BacktestError::Metric(format!("curve value {v} is not positive")));
    }
    let mut peak = curve[0];
    let mut worst: f64 = 0.0;
    for &v in curve {
        peak = peak.max(v);
        worst = worst.max((peak - v) / peak);
    }
    Ok(worst)
}

/// Mean excess return over its sample standard deviation (`ddof = 1`).
pub fn sharpe_ratio(returns: &[f64], benchmark: &[f64]) -> Result<f64> {
    if returns.len() != benchmark.len() {
        return Err(BacktestError::Metric(format!(
            "{} returns against {} benchmark returns",
            returns.len(),
            benchmark.len()
        )));
    }
    let n = returns.len();
    if n < 2 {
        return Err(BacktestError::Metric(format!("Sharpe ratio needs 2 returns, got {n}")));
    }
    let excess: Vec<f64> = returns.iter().zip(benchmark).map(|(r, b)| r - b).collect();
    let mean = excess.iter().sum::<f64>() / n as f64;
    let var = excess.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    // `(b + c) − b` is c only up to rounding in b, so a deviation at that
    // level is treated as zero
    let scale = returns
        .iter()
        .chain(benchmark)
        .fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if sd <= 1e-12 * scale || sd == 0.0 {
        return Err(BacktestError::Metric(
            "excess returns have zero standard deviation".into(),
        ));
    }
    Ok(mean / sd)
}

/// Empirical `(VaR_α, CVaR_α)` of loss samples. VaR is the order statistic at
/// 1-based rank `⌈α·N⌉`; CVaR is the mean of the samples at or above it.
pub fn cvar(losses: &[f64], alpha: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(BacktestError::Metric(format!("alpha {alpha} outside (0, 1)")));
    }
    if losses.is_empty() {
        return Err(BacktestError::Metric("no loss samples".into()));
    }
    let mut sorted = losses.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = ((alpha * n as f64).ceil() as usize).clamp(1, n);
    let var = sorted[rank - 1];
    let tail: Vec<f64> = sorted.iter().copied().filter(|v| *v >= var).collect();
    let cvar = tail.iter().sum::<f64>() / tail.len() as f64;
    Ok((var, cvar))
}

/// Simple returns `v_t / v_{t−1} − 1` of a value curve.
pub fn simple_returns(curve: &[f64]) -> Vec<f64> {
    curve.windows(2).map(|w| w[1] / w[0] - 1.0).collect()
}
