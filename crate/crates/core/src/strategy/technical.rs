use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Action, DecisionContext, FillTiming, Order, Reason, Schedule, Strategy, StrategyError};
use crate::market_data::{AssetId, DailyBar};

/// RSI with Wilder smoothing over the whole of `closes`.
///
/// The first average gain and loss are simple means of the first `window`
/// changes; later changes are folded in as `(avg * (window - 1) + x) / window`.
/// Returns `None` with fewer than `window + 1` closes. A flat series gives 50.
pub fn compute_rsi(closes: &[f64], window: usize) -> Option<f64> {
    if window < 1 || closes.len() < window + 1 {
        return None;
    }
    let w = window as f64;
    let changes: Vec<f64> = closes.windows(2).map(|p| p[1] - p[0]).collect();
    let (seed, rest) = changes.split_at(window);
    let mut gain = seed.iter().map(|c| c.max(0.0)).sum::<f64>() / w;
    let mut loss = seed.iter().map(|c| (-c).max(0.0)).sum::<f64>() / w;
    for c in rest {
        gain = (gain * (w - 1.0) + c.max(0.0)) / w;
        loss = (loss * (w - 1.0) + (-c).max(0.0)) / w;
    }
    Some(ratio_index(gain, loss))
}

/// `100 - 100 / (1 + up / down)` with the degenerate cases pinned.
fn ratio_index(up: f64, down: f64) -> f64 {
    match (up > 0.0, down > 0.0) {
        (false, false) => 50.0,
        (true, false) => 100.0,
        (false, true) => 0.0,
        (true, true) => (100.0 - 100.0 / (1.0 + up / down)).clamp(0.0, 100.0),
    }
}

/// Stochastic %K over the last `window` bars. A flat range gives 50.
pub fn compute_stochastic(bars: &[DailyBar], window: usize) -> Option<f64> {
    if window < 1 || bars.len() < window {
        return None;
    }
    let w = &bars[bars.len() - window..];
    let hh = w.iter().map(|b| b.high).fold(f64::NEG_INFINITY, f64::max);
    let ll = w.iter().map(|b| b.low).fold(f64::INFINITY, f64::min);
    let close = w[w.len() - 1].close;
    if hh <= ll {
        return Some(50.0);
    }
    Some((100.0 * (close - ll) / (hh - ll)).clamp(0.0, 100.0))
}

/// Money Flow Index over the last `window + 1` bars.
///
/// Typical price is `(high + low + close) / 3`; a bar's flow counts as
/// positive or negative by the direction of its typical price against the
/// previous bar, and is ignored when unchanged. No flow at all gives 50.
pub fn compute_mfi(bars: &[DailyBar], window: usize) -> Option<f64> {
    if window < 1 || bars.len() < window + 1 {
        return None;
    }
    let w = &bars[bars.len() - window - 1..];
    let tp: Vec<f64> = w.iter().map(|b| (b.high + b.low + b.close) / 3.0).collect();
    let (mut pos, mut neg) = (0.0, 0.0);
    for i in 1..w.len() {
        let flow = tp[i] * w[i].volume;
        if tp[i] > tp[i - 1] {
            pos += flow;
        } else if tp[i] < tp[i - 1] {
            neg += flow;
        }
    }
    Some(ratio_index(pos, neg))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndicatorKind {
    Rsi,
    Stochastic,
    Mfi,
}

impl IndicatorKind {
    pub fn id(self) -> &'static str {
        match self {
            IndicatorKind::Rsi => "rsi",
            IndicatorKind::Stochastic => "stochastic",
            IndicatorKind::Mfi => "mfi",
        }
    }

    pub fn compute(self, bars: &[DailyBar], window: usize) -> Option<f64> {
        match self {
            IndicatorKind::Rsi => {
                let closes: Vec<f64> = bars.iter().map(|b| b.close).collect();
                compute_rsi(&closes, window)
            }
            IndicatorKind::Stochastic => compute_stochastic(bars, window),
            IndicatorKind::Mfi => compute_mfi(bars, window),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TechnicalConfig {
    pub kind: IndicatorKind,
    pub window: usize,
    pub oversold: f64,
    pub overbought: f64,
    pub max_positions: usize,
    pub idle_cash_risk_free: bool,
}

impl TechnicalConfig {
    pub fn new(kind: IndicatorKind) -> Self {
        let (oversold, overbought) = match kind {
            IndicatorKind::Rsi => (30.0, 70.0),
            IndicatorKind::Stochastic | IndicatorKind::Mfi => (20.0, 80.0),
        };
        Self { kind, window: 14, oversold, overbought, max_positions: 4, idle_cash_risk_free: false }
    }

    pub fn validate(&self) -> Result<(), StrategyError> {
        if self.window < 2 {
            return Err(StrategyError::Config("tech.window must be >= 2".into()));
        }
        if !(0.0 <= self.oversold && self.oversold < self.overbought && self.overbought <= 100.0) {
            return Err(StrategyError::Config("need 0 <= tech.oversold < tech.overbought <= 100".into()));
        }
        if self.max_positions == 0 {
            return Err(StrategyError::Config("tech.max_positions must be >= 1".into()));
        }
        Ok(())
    }
}

/// Orders from today's indicator values: exit held assets above
/// `overbought`, enter unheld assets below `oversold`, lowest value first
/// (ties by ticker), while slots remain. Each entry is sized at
/// `1 / max_positions` of equity.
pub fn technical_step(held: &[AssetId], values: &BTreeMap<AssetId, f64>, cfg: &TechnicalConfig) -> Vec<Order> {
    let mut orders: Vec<Order> = held
        .iter()
        .filter(|a| values.get(*a).is_some_and(|v| *v > cfg.overbought))
        .map(|a| Order::sell(a.clone(), Reason::Signal))
        .collect();
    let free = cfg.max_positions.saturating_sub(held.len() - orders.len());
    let mut candidates: Vec<(&AssetId, f64)> = values
        .iter()
        .filter(|(a, v)| **v < cfg.oversold && !held.contains(a))
        .map(|(a, v)| (a, *v))
        .collect();
    candidates.sort_by(|x, y| x.1.total_cmp(&y.1).then_with(|| x.0.cmp(y.0)));
    let weight = 1.0 / cfg.max_positions as f64;
    orders.extend(candidates.into_iter().take(free).map(|(a, _)| Order::buy(a.clone(), weight, Reason::Signal)));
    orders
}

/// Oscillator baseline: signals on the close, fills at the next day's mid.
#[derive(Debug, Clone)]
pub struct Technical {
    cfg: TechnicalConfig,
}

impl Technical {
    pub fn new(cfg: TechnicalConfig) -> Result<Self, StrategyError> {
        cfg.validate()?;
        Ok(Self { cfg })
    }
}

impl Strategy for Technical {
    fn id(&self) -> &str {
        self.cfg.kind.id()
    }

    fn schedule(&self) -> Schedule {
        Schedule::Daily
    }

    fn fill_timing(&self) -> FillTiming {
        FillTiming::NextDayMid
    }

    fn sweeps_idle_cash(&self) -> bool {
        self.cfg.idle_cash_risk_free
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Action, StrategyError> {
        let mut values = BTreeMap::new();
        for asset in ctx.view.universe().assets() {
            if ctx.view.bar_today(asset).is_none() {
                continue;
            }
            if let Some(v) = self.cfg.kind.compute(ctx.view.bars(asset), self.cfg.window) {
                values.insert(asset.clone(), v);
            }
        }
        let held: Vec<AssetId> = ctx.holdings.iter().map(|h| h.asset.clone()).collect();
        let orders = technical_step(&held, &values, &self.cfg);
        Ok(if orders.is_empty() { Action::Hold } else { Action::Trade(orders) })
    }
}
