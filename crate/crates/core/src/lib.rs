//! Point-in-time backtesting of a fundamentals-driven value strategy.
//!
//! The pipeline runs quarter by quarter: [`indicators`] scores every company
//! on profitability, solvency, valuation and growth; [`valuation`] projects a
//! target price from a regression forest and P/E mean reversion;
//! [`strategy`] keeps companies above the cross-sectional median and ranks
//! them by expected return; [`engine`] holds them under take-profit,
//! stop-loss and time barriers. [`metrics`] scores the resulting equity
//! curves, including the Probabilistic Sharpe Ratio.

pub mod engine;
pub mod indicators;
pub mod market_data;
pub mod metrics;
pub mod strategy;
pub mod valuation;
