//! Strategies turn point-in-time data into orders: AlphaX, the RSI,
//! Stochastic and MFI baselines, and the Selic and NIbov benchmarks.

mod alphax;
mod benchmark;
mod technical;

use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::{AssetId, FiscalQuarter, PitView};
use crate::valuation::ValuationError;

pub use alphax::{alphax_allocate, alphax_select, AlphaX, AlphaXConfig, Selection};
pub use benchmark::{nibov_weights, NIbov, Selic};
pub use technical::{
    compute_mfi, compute_rsi, compute_stochastic, technical_step, IndicatorKind, Technical,
    TechnicalConfig,
};

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error(transparent)]
    Valuation(#[from] ValuationError),
    #[error("no index weights available at {0}")]
    NoIndexWeights(NaiveDate),
    #[error("no universe asset is in the index at {0}")]
    EmptyIndexIntersection(NaiveDate),
    #[error("invalid strategy config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Instrument {
    Asset(AssetId),
    /// The Selic sleeve.
    RiskFree,
}

impl fmt::Display for Instrument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instrument::Asset(a) => a.fmt(f),
            Instrument::RiskFree => f.write_str("SELIC"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Buy => "buy",
            Side::Sell => "sell",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    Rebalance,
    TakeProfit,
    StopLoss,
    Vertical,
    Signal,
    /// Moving idle cash into, or funding trades out of, the Selic sleeve.
    Sweep,
    EndOfBacktest,
}

impl Reason {
    pub fn as_str(self) -> &'static str {
        match self {
            Reason::Rebalance => "rebalance",
            Reason::TakeProfit => "take_profit",
            Reason::StopLoss => "stop_loss",
            Reason::Vertical => "vertical",
            Reason::Signal => "signal",
            Reason::Sweep => "sweep",
            Reason::EndOfBacktest => "end_of_backtest",
        }
    }
}

/// Triple-barrier parameters attached to an entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierSpec {
    pub take_profit: f64,
    pub stop_loss_fraction: f64,
    /// Statutory date of the next decision; reaching it hands the position
    /// to the rebalance.
    pub vertical_date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Order {
    pub instrument: Instrument,
    pub side: Side,
    /// Fraction of current equity for buys; sells close the whole position.
    pub weight_fraction: f64,
    pub reason: Reason,
    pub barriers: Option<BarrierSpec>,
}

impl Order {
    pub fn buy(asset: AssetId, weight: f64, reason: Reason) -> Self {
        Self { instrument: Instrument::Asset(asset), side: Side::Buy, weight_fraction: weight, reason, barriers: None }
    }

    pub fn sell(asset: AssetId, reason: Reason) -> Self {
        Self { instrument: Instrument::Asset(asset), side: Side::Sell, weight_fraction: 1.0, reason, barriers: None }
    }

    pub fn asset(&self) -> Option<&AssetId> {
        match &self.instrument {
            Instrument::Asset(a) => Some(a),
            Instrument::RiskFree => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Hold,
    /// Discrete buys and sells.
    Trade(Vec<Order>),
    /// Target portfolio. Buys list the targets; holdings not listed are
    /// closed. With `resize` false, held targets keep their size and only
    /// have their barriers refreshed.
    Rebalance { quarter: Option<FiscalQuarter>, orders: Vec<Order>, resize: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    Daily,
    /// Statement release dates, on the first trading day on or after each.
    ReleaseDates,
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FillTiming {
    /// Decide and fill at the same day's mid price.
    SameDayMid,
    /// Decide on the close, fill at the next trading day's mid price.
    NextDayMid,
}

/// An open position as seen by a strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct Holding {
    pub asset: AssetId,
    pub quantity: f64,
    pub entry_date: NaiveDate,
    pub entry_price: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct DecisionContext<'a> {
    pub view: PitView<'a>,
    /// Fiscal quarter whose release triggered the decision.
    pub quarter: Option<FiscalQuarter>,
    /// Statutory date of the next release after `quarter`.
    pub vertical_date: Option<NaiveDate>,
    pub holdings: &'a [Holding],
    pub equity: f64,
}

impl DecisionContext<'_> {
    pub fn date(&self) -> NaiveDate {
        self.view.as_of()
    }

    pub fn holds(&self, asset: &AssetId) -> bool {
        self.holdings.iter().any(|h| &h.asset == asset)
    }
}

pub trait Strategy: Send {
    fn id(&self) -> &str;
    fn schedule(&self) -> Schedule;
    fn fill_timing(&self) -> FillTiming;
    /// Whether idle cash is kept in the Selic sleeve.
    fn sweeps_idle_cash(&self) -> bool;
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Action, StrategyError>;
}
