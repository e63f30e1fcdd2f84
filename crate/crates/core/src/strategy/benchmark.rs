use std::collections::BTreeMap;

use super::{Action, DecisionContext, FillTiming, Order, Reason, Schedule, Strategy, StrategyError};
use crate::market_data::{IndexWeights, Universe};

/// Index weights restricted to `universe` and renormalized to sum to one.
pub fn nibov_weights(index: &IndexWeights, universe: &Universe) -> Result<IndexWeights, StrategyError> {
    let weights: BTreeMap<_, _> = index
        .weights
        .iter()
        .filter(|(a, w)| universe.contains(a) && **w > 0.0)
        .map(|(a, w)| (a.clone(), *w))
        .collect();
    let total: f64 = weights.values().sum();
    if weights.is_empty() || !(total > 0.0) {
        return Err(StrategyError::EmptyIndexIntersection(index.as_of));
    }
    let weights = weights.into_iter().map(|(a, w)| (a, w / total)).collect();
    Ok(IndexWeights { as_of: index.as_of, weights })
}

/// Ibovespa weights renormalized over the strategy universe, rebalanced on
/// every release date.
#[derive(Debug, Clone, Default)]
pub struct NIbov;

impl Strategy for NIbov {
    fn id(&self) -> &str {
        "nibov"
    }

    fn schedule(&self) -> Schedule {
        Schedule::ReleaseDates
    }

    fn fill_timing(&self) -> FillTiming {
        FillTiming::SameDayMid
    }

    fn sweeps_idle_cash(&self) -> bool {
        false
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Action, StrategyError> {
        let t = ctx.date();
        let index = ctx.view.index_weights().ok_or(StrategyError::NoIndexWeights(t))?;
        let mut w = nibov_weights(index, ctx.view.universe())?;
        w.weights.retain(|a, _| ctx.view.bar_today(a).is_some());
        let total: f64 = w.weights.values().sum();
        if w.weights.is_empty() {
            return Err(StrategyError::EmptyIndexIntersection(t));
        }
        let orders = w.weights.into_iter().map(|(a, x)| Order::buy(a, x / total, Reason::Rebalance)).collect();
        Ok(Action::Rebalance { quarter: ctx.quarter, orders, resize: true })
    }
}

/// Everything in the Selic sleeve for the whole run.
#[derive(Debug, Clone, Default)]
pub struct Selic;

impl Strategy for Selic {
    fn id(&self) -> &str {
        "selic"
    }

    fn schedule(&self) -> Schedule {
        Schedule::Never
    }

    fn fill_timing(&self) -> FillTiming {
        FillTiming::SameDayMid
    }

    fn sweeps_idle_cash(&self) -> bool {
        true
    }

    fn decide(&mut self, _ctx: &DecisionContext<'_>) -> Result<Action, StrategyError> {
        Ok(Action::Hold)
    }
}
