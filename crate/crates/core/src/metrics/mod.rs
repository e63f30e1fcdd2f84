//! Performance statistics: total return, CAGR, annualized Sharpe and
//! Sortino, max drawdown, Probabilistic Sharpe Ratio and minimum track
//! record length.

mod report;

use chrono::NaiveDate;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::market_data::{RiskFreeSeries, TRADING_DAYS_PER_YEAR};

pub use report::{format_metric, write_metrics_csv, write_metrics_json, write_psr_table, MetricReport, MetricsConfig};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("need at least {need} points, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("equity must be positive, got {0}")]
    NonPositiveEquity(f64),
    #[error("probability {0} outside (0, 1)")]
    Probability(f64),
}

/// Standard normal CDF, `erfc(-z / sqrt 2) / 2`.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal quantile for `p` in (0, 1).
pub fn normal_quantile(p: f64) -> Result<f64, MetricError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(MetricError::Probability(p));
    }
    Ok(Normal::standard().inverse_cdf(p))
}

/// Simple returns `e[t] / e[t-1] - 1`.
pub fn simple_returns(equity: &[f64]) -> Vec<f64> {
    equity.windows(2).map(|w| w[1] / w[0] - 1.0).collect()
}

/// Daily returns of an equity curve with matching excess returns over the
/// risk-free rate in force on each day.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    pub dates: Vec<NaiveDate>,
    pub returns: Vec<f64>,
    pub excess: Vec<f64>,
}

impl ReturnSeries {
    pub fn from_curve(curve: &[(NaiveDate, f64)], risk_free: &RiskFreeSeries) -> Self {
        let equity: Vec<f64> = curve.iter().map(|p| p.1).collect();
        let returns = simple_returns(&equity);
        let dates: Vec<NaiveDate> = curve.iter().skip(1).map(|p| p.0).collect();
        let excess = dates.iter().zip(&returns).map(|(d, r)| r - (risk_free.daily_factor(*d) - 1.0)).collect();
        Self { dates, returns, excess }
    }
}

/// Sample moments with small-sample corrections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentStats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std: f64,
    /// Adjusted Fisher-Pearson skewness; 0 when undefined.
    pub skewness: f64,
    /// Adjusted (non-excess) kurtosis, 3 for a normal; 3 when undefined.
    pub kurtosis: f64,
}

impl MomentStats {
    pub fn from_sample(x: &[f64]) -> Option<Self> {
        let n = x.len();
        if n < 2 {
            return None;
        }
        let nf = n as f64;
        let mean = x.iter().sum::<f64>() / nf;
        let m2 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
        let m3 = x.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / nf;
        let m4 = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / nf;
        let std = (m2 * nf / (nf - 1.0)).sqrt();
        let skewness = if n >= 3 && m2 > 0.0 {
            let g1 = m3 / (m2 * m2.sqrt());
            (nf * (nf - 1.0)).sqrt() / (nf - 2.0) * g1
        } else {
            0.0
        };
        let kurtosis = if n >= 4 && m2 > 0.0 {
            let g2 = m4 / (m2 * m2) - 3.0;
            ((nf + 1.0) * g2 + 6.0) * (nf - 1.0) / ((nf - 2.0) * (nf - 3.0)) + 3.0
        } else {
            3.0
        };
        Some(Self { n, mean, std, skewness, kurtosis })
    }

    /// Per-observation Sharpe ratio `mean / std`.
    pub fn sharpe(&self) -> Option<f64> {
        (self.std > 0.0).then(|| self.mean / self.std)
    }
}

fn check_curve(equity: &[f64], need: usize) -> Result<(), MetricError> {
    if equity.len() < need {
        return Err(MetricError::TooShort { need, got: equity.len() });
    }
    if let Some(&bad) = equity.iter().find(|e| !(**e > 0.0)) {
        return Err(MetricError::NonPositiveEquity(bad));
    }
    Ok(())
}

pub fn total_return(equity: &[f64]) -> Result<f64, MetricError> {
    check_curve(equity, 2)?;
    Ok(equity[equity.len() - 1] / equity[0] - 1.0)
}

/// `(final / initial)^(252 / n_returns) - 1`.
pub fn cagr(equity: &[f64]) -> Result<f64, MetricError> {
    check_curve(equity, 2)?;
    let growth = equity[equity.len() - 1] / equity[0];
    let years = (equity.len() - 1) as f64 / TRADING_DAYS_PER_YEAR;
    Ok(libm::pow(growth, 1.0 / years) - 1.0)
}

/// Annualized Sharpe and Sortino of excess returns; `None` where the
/// deviation is zero or there are fewer than two observations.
pub fn sharpe_sortino(excess: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = excess.len();
    if n < 2 {
        return (None, None);
    }
    let annual = TRADING_DAYS_PER_YEAR.sqrt();
    let stats = MomentStats::from_sample(excess).expect("n >= 2");
    let sharpe = stats.sharpe().map(|s| s * annual);
    let downside = (excess.iter().map(|x| x.min(0.0).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
    let sortino = (downside > 0.0).then(|| stats.mean / downside * annual);
    (sharpe, sortino)
}

/// Most negative `equity / running_max - 1`; 0 for a curve that never falls.
pub fn max_drawdown(equity: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst: f64 = 0.0;
    for &e in equity {
        peak = peak.max(e);
        worst = worst.min(e / peak - 1.0);
    }
    worst
}

/// `1 - γ3·SR + (γ4 - 1)/4·SR²`, the variance factor of the Sharpe estimate.
fn sharpe_variance_factor(stats: &MomentStats, sr: f64) -> f64 {
    1.0 - stats.skewness * sr + (stats.kurtosis - 1.0) / 4.0 * sr * sr
}

/// Probabilistic Sharpe Ratio against a per-observation threshold.
/// `None` for degenerate statistics.
pub fn psr(stats: &MomentStats, sr_star: f64) -> Option<f64> {
    let sr = stats.sharpe()?;
    let v = sharpe_variance_factor(stats, sr);
    if stats.n < 2 || !(v > 0.0) {
        return None;
    }
    let z = (sr - sr_star) * ((stats.n - 1) as f64).sqrt() / v.sqrt();
    Some(normal_cdf(z))
}

/// Minimum track record length (observations) for the Sharpe ratio to
/// exceed `sr_star` at `confidence`. `None` unless the estimate beats the
/// threshold.
pub fn min_trl(stats: &MomentStats, sr_star: f64, confidence: f64) -> Option<f64> {
    let sr = stats.sharpe()?;
    let v = sharpe_variance_factor(stats, sr);
    if !(sr > sr_star) || !(v > 0.0) {
        return None;
    }
    let z = normal_quantile(confidence).ok()?;
    Some(1.0 + v * (z / (sr - sr_star)).powi(2))
}
