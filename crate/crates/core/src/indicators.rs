//! Fundamental ratios and the four cross-sectional indicator scores
//! (profitability, solvency, valuation, growth) on a 1 to 5 scale.

use std::cmp::{Ordering, Reverse};
use std::collections::BTreeMap;
use std::io::Write;

use chrono::NaiveDate;

use crate::market_data::{AssetId, FiscalQuarter, PitView, StatementRecord};

/// Ratios for one asset at one date. `None` marks an undefined ratio
/// (zero or negative denominator, or not enough history).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RawFundamentals {
    pub roe: Option<f64>,
    pub net_margin: Option<f64>,
    pub ebit_margin: Option<f64>,
    pub debt_to_equity: Option<f64>,
    pub cash_flow_coverage: Option<f64>,
    pub earnings_yield: Option<f64>,
    pub book_yield: Option<f64>,
    pub sales_yield: Option<f64>,
    pub revenue_growth_yoy: Option<f64>,
    pub net_income_growth_yoy: Option<f64>,
    /// Trailing net income per share.
    pub eps: Option<f64>,
}

/// Trailing flows of a company at its latest reported quarter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trailing {
    pub revenue: f64,
    pub net_income: f64,
    pub ebit: f64,
    pub operating_cash_flow: f64,
    /// Consecutive quarters summed (1..=4); sums are scaled by `4 / quarters`.
    pub quarters: usize,
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den).filter(|r| r.is_finite())
}

/// Length of the run of consecutive quarters ending at the last element.
fn consecutive_tail(statements: &[&StatementRecord]) -> usize {
    let mut n = usize::from(!statements.is_empty());
    for w in statements.windows(2).rev() {
        if w[1].fiscal_quarter.ordinal() - w[0].fiscal_quarter.ordinal() != 1 {
            break;
        }
        n += 1;
    }
    n
}

/// Trailing-twelve-month flows from `statements` (ordered by quarter).
///
/// Uses up to four consecutive quarters ending at the latest one. With
/// fewer than four the sums are annualized.
pub fn trailing(statements: &[&StatementRecord]) -> Option<Trailing> {
    let k = consecutive_tail(statements).min(4);
    if k == 0 {
        return None;
    }
    let window = &statements[statements.len() - k..];
    let scale = 4.0 / k as f64;
    let sum = |f: fn(&StatementRecord) -> f64| window.iter().map(|s| f(s)).sum::<f64>() * scale;
    Some(Trailing {
        revenue: sum(|s| s.revenue),
        net_income: sum(|s| s.net_income),
        ebit: sum(|s| s.ebit),
        operating_cash_flow: sum(|s| s.operating_cash_flow),
        quarters: k,
    })
}

/// Year-over-year growth of TTM revenue and net income. Needs eight
/// consecutive quarters; undefined when last year's sum is not positive.
pub fn yoy_growth(statements: &[&StatementRecord]) -> (Option<f64>, Option<f64>) {
    if consecutive_tail(statements) < 8 {
        return (None, None);
    }
    let n = statements.len();
    let now = &statements[n - 4..];
    let before = &statements[n - 8..n - 4];
    let sum = |w: &[&StatementRecord], f: fn(&StatementRecord) -> f64| w.iter().map(|s| f(s)).sum::<f64>();
    let growth = |f: fn(&StatementRecord) -> f64| {
        let prev = sum(before, f);
        ratio(sum(now, f) - prev, prev)
    };
    (growth(|s| s.revenue), growth(|s| s.net_income))
}

/// Ratios from the statements public at the decision date (ordered by
/// fiscal quarter) and the current price.
pub fn compute_raw(statements: &[&StatementRecord], price: f64) -> Option<RawFundamentals> {
    let latest = *statements.last()?;
    let ttm = trailing(statements)?;
    let (revenue_growth_yoy, net_income_growth_yoy) = yoy_growth(statements);
    let shares = latest.shares_outstanding;
    let per_share_yield = |amount: f64| ratio(amount / shares, price);
    Some(RawFundamentals {
        roe: ratio(ttm.net_income, latest.equity),
        net_margin: ratio(ttm.net_income, ttm.revenue),
        ebit_margin: ratio(ttm.ebit, ttm.revenue),
        debt_to_equity: ratio(latest.total_liabilities, latest.equity),
        cash_flow_coverage: ratio(ttm.operating_cash_flow, latest.total_liabilities),
        earnings_yield: per_share_yield(ttm.net_income),
        book_yield: per_share_yield(latest.equity),
        sales_yield: per_share_yield(ttm.revenue),
        revenue_growth_yoy,
        net_income_growth_yoy,
        eps: Some(ttm.net_income / shares).filter(|e| e.is_finite()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Indicator {
    Profitability,
    Solvency,
    Valuation,
    Growth,
}

impl Indicator {
    pub const ALL: [Indicator; 4] =
        [Indicator::Profitability, Indicator::Solvency, Indicator::Valuation, Indicator::Growth];

    /// Component ratios, oriented so that larger is better.
    pub fn components(self, raw: &RawFundamentals) -> Vec<Option<f64>> {
        match self {
            Indicator::Profitability => vec![raw.roe, raw.net_margin, raw.ebit_margin],
            Indicator::Solvency => vec![raw.debt_to_equity.map(|d| -d), raw.cash_flow_coverage],
            Indicator::Valuation => vec![raw.earnings_yield, raw.book_yield, raw.sales_yield],
            Indicator::Growth => vec![raw.revenue_growth_yoy, raw.net_income_growth_yoy],
        }
    }
}

/// Scores from 1 (worst) to 5 (best).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IndicatorScores {
    pub profitability: u8,
    pub solvency: u8,
    pub valuation: u8,
    pub growth: u8,
}

impl IndicatorScores {
    pub fn get(&self, ind: Indicator) -> u8 {
        match ind {
            Indicator::Profitability => self.profitability,
            Indicator::Solvency => self.solvency,
            Indicator::Valuation => self.valuation,
            Indicator::Growth => self.growth,
        }
    }

    fn set(&mut self, ind: Indicator, v: u8) {
        match ind {
            Indicator::Profitability => self.profitability = v,
            Indicator::Solvency => self.solvency = v,
            Indicator::Valuation => self.valuation = v,
            Indicator::Growth => self.growth = v,
        }
    }
}

/// Composite values before bucketing: mean component rank rescaled to
/// `[0, 1]` (1 is best). These feed the price regression.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CompositeValues {
    pub profitability: f64,
    pub solvency: f64,
    pub valuation: f64,
    pub growth: f64,
}

impl CompositeValues {
    pub fn get(&self, ind: Indicator) -> f64 {
        match ind {
            Indicator::Profitability => self.profitability,
            Indicator::Solvency => self.solvency,
            Indicator::Valuation => self.valuation,
            Indicator::Growth => self.growth,
        }
    }

    fn set(&mut self, ind: Indicator, v: f64) {
        match ind {
            Indicator::Profitability => self.profitability = v,
            Indicator::Solvency => self.solvency = v,
            Indicator::Valuation => self.valuation = v,
            Indicator::Growth => self.growth = v,
        }
    }
}

/// Ranks `values` from 1 (worst) to N (best). Undefined values are worst;
/// ties go to the lexicographically earlier ticker.
pub fn rank_values(tickers: &[&AssetId], values: &[Option<f64>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let by_value = match (values[a], values[b]) {
            (None, None) => Ordering::Equal,
            (None, Some(_)) => Ordering::Less,
            (Some(_), None) => Ordering::Greater,
            (Some(x), Some(y)) => x.total_cmp(&y),
        };
        by_value.then_with(|| Reverse(tickers[a]).cmp(&Reverse(tickers[b])))
    });
    let mut ranks = vec![0; values.len()];
    for (pos, &i) in order.iter().enumerate() {
        ranks[i] = pos + 1;
    }
    ranks
}

/// Maps a rank in `1..=n` onto the 1 to 5 scale.
pub fn quintile_score(rank: usize, n: usize) -> u8 {
    if n <= 1 {
        return 3;
    }
    (1 + 4 * (rank - 1) / (n - 1)) as u8
}

/// Scores every asset in the cross-section.
pub fn score_cross_section(
    raw: &BTreeMap<AssetId, RawFundamentals>,
) -> BTreeMap<AssetId, (IndicatorScores, CompositeValues)> {
    let tickers: Vec<&AssetId> = raw.keys().collect();
    let rows: Vec<&RawFundamentals> = raw.values().collect();
    let n = tickers.len();
    let mut out: Vec<(IndicatorScores, CompositeValues)> = vec![Default::default(); n];
    for ind in Indicator::ALL {
        let comps: Vec<Vec<Option<f64>>> = rows.iter().map(|r| ind.components(r)).collect();
        let n_comp = comps.first().map_or(0, Vec::len);
        let mut rank_sum = vec![0usize; n];
        for c in 0..n_comp {
            let column: Vec<Option<f64>> = comps.iter().map(|v| v[c]).collect();
            for (i, r) in rank_values(&tickers, &column).into_iter().enumerate() {
                rank_sum[i] += r;
            }
        }
        let sums: Vec<Option<f64>> = rank_sum.iter().map(|&s| Some(s as f64)).collect();
        let composite_rank = rank_values(&tickers, &sums);
        for i in 0..n {
            out[i].0.set(ind, quintile_score(composite_rank[i], n));
            let mean = rank_sum[i] as f64 / n_comp as f64;
            let value = if n <= 1 { 0.5 } else { (mean - 1.0) / (n - 1) as f64 };
            out[i].1.set(ind, value);
        }
    }
    tickers.into_iter().cloned().zip(out).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelRow {
    pub raw: RawFundamentals,
    pub scores: IndicatorScores,
    pub composite: CompositeValues,
    pub price: f64,
    /// Latest fiscal quarter behind the ratios.
    pub quarter: FiscalQuarter,
}

/// Cross-sectional indicator snapshot at one decision date.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorPanel {
    pub as_of: NaiveDate,
    pub rows: BTreeMap<AssetId, PanelRow>,
}

impl IndicatorPanel {
    /// Builds the panel from everything public at `view.as_of()`. An asset
    /// is eligible with at least one released statement and one bar; the
    /// price is the mid of its latest bar.
    pub fn build(view: &PitView<'_>) -> Self {
        let mut raw = BTreeMap::new();
        let mut meta = BTreeMap::new();
        for asset in view.universe().assets() {
            let Some(bar) = view.bar_at_or_before(asset) else { continue };
            let statements = view.statements(asset);
            let price = bar.mid_price();
            if let Some(r) = compute_raw(&statements, price) {
                let quarter = statements.last().map(|s| s.fiscal_quarter).expect("non-empty");
                raw.insert(asset.clone(), r);
                meta.insert(asset.clone(), (price, quarter));
            }
        }
        let scored = score_cross_section(&raw);
        let rows = scored
            .into_iter()
            .map(|(asset, (scores, composite))| {
                let (price, quarter) = meta[&asset];
                let row = PanelRow { raw: raw[&asset], scores, composite, price, quarter };
                (asset, row)
            })
            .collect();
        Self { as_of: view.as_of(), rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Median score of one indicator across the panel.
    pub fn median_score(&self, ind: Indicator) -> Option<f64> {
        let mut v: Vec<u8> = self.rows.values().map(|r| r.scores.get(ind)).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_unstable();
        let m = v.len() / 2;
        Some(if v.len() % 2 == 1 { v[m] as f64 } else { (v[m - 1] as f64 + v[m] as f64) / 2.0 })
    }

    /// Debug dump: `ticker,profitability,solvency,valuation,growth,pe,pb,ps,price`.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["ticker", "profitability", "solvency", "valuation", "growth", "pe", "pb", "ps", "price"])?;
        let multiple = |y: Option<f64>| match y {
            Some(y) if y > 0.0 => format!("{:.6}", 1.0 / y),
            _ => "n/a".to_string(),
        };
        for (asset, r) in &self.rows {
            out.write_record([
                asset.to_string(),
                r.scores.profitability.to_string(),
                r.scores.solvency.to_string(),
                r.scores.valuation.to_string(),
                r.scores.growth.to_string(),
                multiple(r.raw.earnings_yield),
                multiple(r.raw.book_yield),
                multiple(r.raw.sales_yield),
                format!("{:.6}", r.price),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}
