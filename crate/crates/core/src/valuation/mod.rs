//! Price projection: a regression-tree forest on next-quarter price ratios
//! blended with P/E mean reversion.

mod forest;

use std::collections::BTreeMap;

use chrono::NaiveDate;
use thiserror::Error;

use crate::indicators::{IndicatorPanel, PanelRow};
use crate::market_data::{AssetId, PitView, ReleaseCalendar};

pub use forest::{
    best_split, bounded_mean, fit_forest, Dataset, ForestConfig, ForestModel, Node, RegressionTree,
    SplitChoice,
};

#[derive(Debug, Error, PartialEq)]
pub enum ValuationError {
    #[error("no price for {asset} at {date}")]
    NoPrice { asset: AssetId, date: NaiveDate },
    #[error("invalid valuation config: {0}")]
    Config(String),
}

pub const N_FEATURES: usize = 10;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "profitability",
    "solvency",
    "valuation",
    "growth",
    "earnings_yield",
    "book_yield",
    "sales_yield",
    "revenue_growth_yoy",
    "net_income_growth_yoy",
    "price",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; N_FEATURES]);

fn raw_features(row: &PanelRow) -> [Option<f64>; N_FEATURES] {
    let c = &row.composite;
    let r = &row.raw;
    [
        Some(c.profitability),
        Some(c.solvency),
        Some(c.valuation),
        Some(c.growth),
        r.earnings_yield,
        r.book_yield,
        r.sales_yield,
        r.revenue_growth_yoy,
        r.net_income_growth_yoy,
        Some(row.price),
    ]
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { v[m - 1] + (v[m] - v[m - 1]) / 2.0 })
}

/// One feature vector per panel row; undefined entries take the
/// cross-sectional median of that feature (0 if nobody has it).
pub fn feature_vectors(panel: &IndicatorPanel) -> BTreeMap<AssetId, FeatureVector> {
    let raw: Vec<(&AssetId, [Option<f64>; N_FEATURES])> =
        panel.rows.iter().map(|(a, r)| (a, raw_features(r))).collect();
    let fill: Vec<f64> = (0..N_FEATURES)
        .map(|f| median(raw.iter().filter_map(|(_, v)| v[f]).collect()).unwrap_or(0.0))
        .collect();
    raw.into_iter()
        .map(|(a, v)| {
            let mut x = [0.0; N_FEATURES];
            for f in 0..N_FEATURES {
                x[f] = v[f].unwrap_or(fill[f]);
            }
            (a.clone(), FeatureVector(x))
        })
        .collect()
}

/// Statutory release dates strictly before `before` (and not after the
/// view's cut-off), starting once any universe asset has bars. These are
/// the past decision dates used for training and reversion.
pub fn past_release_dates(view: &PitView<'_>, before: NaiveDate) -> Vec<NaiveDate> {
    let first_bar = view
        .universe()
        .assets()
        .iter()
        .filter_map(|a| view.bars(a).first().map(|b| b.date))
        .min();
    let (Some(first_bar), Some(last)) = (first_bar, before.pred_opt()) else { return Vec::new() };
    ReleaseCalendar
        .releases_between(first_bar, last.min(view.as_of()))
        .into_iter()
        .map(|(_, d)| d)
        .collect()
}

/// Indicator panels at each of [`past_release_dates`], oldest first.
pub fn panel_history(view: &PitView<'_>, before: NaiveDate) -> Vec<IndicatorPanel> {
    past_release_dates(view, before).into_iter().map(|d| IndicatorPanel::build(&view.rewind(d))).collect()
}

/// Training rows from consecutive panels: features at one date, target the
/// price ratio at the next. Every date involved precedes the current
/// decision because `history` only holds earlier panels.
pub fn training_panel(history: &[IndicatorPanel]) -> Dataset {
    let mut data = Dataset::default();
    for pair in history.windows(2) {
        let (now, next) = (&pair[0], &pair[1]);
        let features = feature_vectors(now);
        for (asset, fv) in &features {
            if let Some(later) = next.rows.get(asset) {
                let ratio = later.price / now.rows[asset].price;
                if ratio.is_finite() && ratio > 0.0 {
                    data.push(fv.0.to_vec(), ratio);
                }
            }
        }
    }
    data
}

/// Reversion target: mean historical P/E times current EPS.
///
/// `earnings_yields` are past E/P values; only positive ones define a P/E.
/// Unavailable with fewer than `min_points` usable quarters or EPS ≤ 0.
pub fn predict_reversion(earnings_yields: &[Option<f64>], eps: f64, min_points: usize) -> Option<f64> {
    let pe: Vec<f64> = earnings_yields.iter().flatten().filter(|y| **y > 0.0).map(|y| 1.0 / y).collect();
    if pe.len() < min_points.max(1) || !(eps > 0.0) {
        return None;
    }
    Some(bounded_mean(pe) * eps).filter(|p| p.is_finite() && *p > 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValuationConfig {
    pub forest: ForestConfig,
    /// Weights of the forest and reversion components.
    pub ensemble_weights: [f64; 2],
    pub reversion_window: usize,
    pub reversion_min_points: usize,
}

impl Default for ValuationConfig {
    fn default() -> Self {
        Self {
            forest: ForestConfig::default(),
            ensemble_weights: [1.0, 1.0],
            reversion_window: 8,
            reversion_min_points: 2,
        }
    }
}

impl ValuationConfig {
    pub fn validate(&self) -> Result<(), ValuationError> {
        if self.ensemble_weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(ValuationError::Config("ensemble weights must be positive".into()));
        }
        if self.forest.min_leaf == 0 {
            return Err(ValuationError::Config("forest.min_leaf must be >= 1".into()));
        }
        if self.reversion_window < self.reversion_min_points.max(1) {
            return Err(ValuationError::Config("reversion.window_quarters too small".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceProjection {
    pub projected_price: f64,
    pub current_price: f64,
    pub expected_return: f64,
    pub forest_price: Option<f64>,
    pub reversion_price: Option<f64>,
}

/// Weighted mean of the available components; `None` when neither is.
pub fn combine(
    asset: &AssetId,
    date: NaiveDate,
    current_price: f64,
    forest_price: Option<f64>,
    reversion_price: Option<f64>,
    weights: [f64; 2],
) -> Result<Option<PriceProjection>, ValuationError> {
    if !(current_price.is_finite() && current_price > 0.0) {
        return Err(ValuationError::NoPrice { asset: asset.clone(), date });
    }
    let parts: Vec<(f64, f64)> = [(forest_price, weights[0]), (reversion_price, weights[1])]
        .into_iter()
        .filter_map(|(p, w)| p.map(|p| (p, w)))
        .collect();
    if parts.is_empty() {
        return Ok(None);
    }
    let wsum: f64 = parts.iter().map(|(_, w)| w).sum();
    let lo = parts.iter().map(|(p, _)| *p).fold(f64::INFINITY, f64::min);
    let hi = parts.iter().map(|(p, _)| *p).fold(f64::NEG_INFINITY, f64::max);
    let projected = (parts.iter().map(|(p, w)| p * w).sum::<f64>() / wsum).clamp(lo, hi);
    Ok(Some(PriceProjection {
        projected_price: projected,
        current_price,
        expected_return: (projected - current_price) / current_price,
        forest_price,
        reversion_price,
    }))
}

/// Projects every asset of `panel` from the earlier panels in `history`.
pub fn project_panel(
    panel: &IndicatorPanel,
    history: &[IndicatorPanel],
    cfg: &ValuationConfig,
) -> Result<BTreeMap<AssetId, PriceProjection>, ValuationError> {
    let model = fit_forest(&training_panel(history), &cfg.forest);
    let features = feature_vectors(panel);
    let recent = &history[history.len().saturating_sub(cfg.reversion_window)..];
    let mut out = BTreeMap::new();
    for (asset, row) in &panel.rows {
        let forest_price = model.as_ref().map(|m| m.predict(&features[asset].0) * row.price);
        let yields: Vec<Option<f64>> =
            recent.iter().map(|p| p.rows.get(asset).and_then(|r| r.raw.earnings_yield)).collect();
        let reversion_price =
            row.raw.eps.and_then(|eps| predict_reversion(&yields, eps, cfg.reversion_min_points));
        let p = combine(asset, panel.as_of, row.price, forest_price, reversion_price, cfg.ensemble_weights)?;
        if let Some(p) = p {
            out.insert(asset.clone(), p);
        }
    }
    Ok(out)
}
