use std::collections::BTreeMap;

use chrono::NaiveDate;

use super::{Action, BarrierSpec, DecisionContext, FillTiming, Order, Reason, Schedule, Strategy, StrategyError};
use crate::indicators::{Indicator, IndicatorPanel};
use crate::market_data::{AssetId, ReleaseCalendar};
use crate::valuation::{past_release_dates, project_panel, PriceProjection, ValuationConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaXConfig {
    pub max_assets: usize,
    pub growth_threshold: u8,
    pub stop_loss: f64,
    pub valuation: ValuationConfig,
}

impl Default for AlphaXConfig {
    fn default() -> Self {
        Self { max_assets: 4, growth_threshold: 2, stop_loss: 0.10, valuation: ValuationConfig::default() }
    }
}

impl AlphaXConfig {
    pub fn validate(&self) -> Result<(), StrategyError> {
        if self.max_assets == 0 {
            return Err(StrategyError::Config("alphax.max_assets must be >= 1".into()));
        }
        if !(self.stop_loss > 0.0 && self.stop_loss < 1.0) {
            return Err(StrategyError::Config("alphax.stop_loss must be in (0, 1)".into()));
        }
        self.valuation.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub asset: AssetId,
    pub expected_return: f64,
    pub projected_price: f64,
}

/// Assets whose profitability, solvency and valuation scores beat the
/// cross-sectional median, whose growth score reaches the threshold and
/// whose expected return is positive; best expected return first, at most
/// `max_assets`.
pub fn alphax_select(
    panel: &IndicatorPanel,
    projections: &BTreeMap<AssetId, PriceProjection>,
    cfg: &AlphaXConfig,
) -> Vec<Selection> {
    let core = [Indicator::Profitability, Indicator::Solvency, Indicator::Valuation];
    let medians: Vec<f64> = core.iter().map(|&i| panel.median_score(i).unwrap_or(f64::INFINITY)).collect();
    let mut picked: Vec<Selection> = panel
        .rows
        .iter()
        .filter(|(_, row)| {
            core.iter().zip(&medians).all(|(&ind, &m)| f64::from(row.scores.get(ind)) > m)
                && row.scores.growth >= cfg.growth_threshold
        })
        .filter_map(|(asset, _)| {
            let p = projections.get(asset)?;
            (p.expected_return > 0.0).then(|| Selection {
                asset: asset.clone(),
                expected_return: p.expected_return,
                projected_price: p.projected_price,
            })
        })
        .collect();
    picked.sort_by(|a, b| b.expected_return.total_cmp(&a.expected_return).then_with(|| a.asset.cmp(&b.asset)));
    picked.truncate(cfg.max_assets);
    picked
}

/// Equal weights across the selection, each with its barriers; everything
/// goes to the Selic sleeve when nothing is selected.
pub fn alphax_allocate(selection: &[Selection], stop_loss: f64, vertical_date: NaiveDate) -> Vec<Order> {
    if selection.is_empty() {
        return vec![Order {
            instrument: super::Instrument::RiskFree,
            side: super::Side::Buy,
            weight_fraction: 1.0,
            reason: Reason::Rebalance,
            barriers: None,
        }];
    }
    let w = 1.0 / selection.len() as f64;
    selection
        .iter()
        .map(|s| Order {
            barriers: Some(BarrierSpec {
                take_profit: s.projected_price,
                stop_loss_fraction: stop_loss,
                vertical_date,
            }),
            ..Order::buy(s.asset.clone(), w, Reason::Rebalance)
        })
        .collect()
}

/// The AlphaX strategy: quarterly fundamental screen, ensemble price
/// projection, top-X equal-weight allocation with triple barriers.
#[derive(Debug, Clone)]
pub struct AlphaX {
    cfg: AlphaXConfig,
    /// Past release-date panels; each depends only on data up to its date.
    history: BTreeMap<NaiveDate, IndicatorPanel>,
    last_selection: Vec<Selection>,
}

impl AlphaX {
    pub fn new(cfg: AlphaXConfig) -> Result<Self, StrategyError> {
        cfg.validate()?;
        Ok(Self { cfg, history: BTreeMap::new(), last_selection: Vec::new() })
    }

    pub fn last_selection(&self) -> &[Selection] {
        &self.last_selection
    }
}

impl Strategy for AlphaX {
    fn id(&self) -> &str {
        "alphax"
    }

    fn schedule(&self) -> Schedule {
        Schedule::ReleaseDates
    }

    fn fill_timing(&self) -> FillTiming {
        FillTiming::SameDayMid
    }

    fn sweeps_idle_cash(&self) -> bool {
        true
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Action, StrategyError> {
        let t = ctx.date();
        let quarter = ctx.quarter;
        let release = quarter.map_or(t, |q| ReleaseCalendar.release_date(q));
        let vertical = ctx.vertical_date.unwrap_or_else(|| ReleaseCalendar.next_release_on_or_after(t.succ_opt().unwrap_or(t)).1);

        for d in past_release_dates(&ctx.view, release) {
            self.history.entry(d).or_insert_with(|| IndicatorPanel::build(&ctx.view.rewind(d)));
        }
        let past: Vec<IndicatorPanel> = self.history.range(..release).map(|(_, p)| p.clone()).collect();

        let panel = IndicatorPanel::build(&ctx.view);
        let projections = project_panel(&panel, &past, &self.cfg.valuation)?;
        // only assets trading today can be bought at today's mid
        let tradable: BTreeMap<AssetId, PriceProjection> = projections
            .into_iter()
            .filter(|(a, _)| ctx.view.bar_today(a).is_some())
            .collect();
        let selection = alphax_select(&panel, &tradable, &self.cfg);
        let orders = alphax_allocate(&selection, self.cfg.stop_loss, vertical);
        self.last_selection = selection;
        Ok(Action::Rebalance { quarter, orders, resize: false })
    }
}
