//! Input data: bars, quarterly statements, risk-free rates, index weights
//! and the asset universe, with strictly point-in-time queries.

mod calendar;
mod io;
mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use calendar::{FiscalQuarter, ReleaseCalendar};
pub use io::{
    load_bars, load_index_weights, load_risk_free, load_statements, load_universe, read_bars,
    read_bars_lenient, read_index_weights, read_risk_free, read_statements, read_universe,
    write_bars, write_index_weights, write_risk_free, write_statements, write_universe, BarSet,
    LenientBars,
};
pub use synth::{generate_synthetic_universe, SyntheticDataset, STRESS_BUBBLE_FACTOR};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("invalid argument: {0}")]
    Argument(String),
}

/// Exchange ticker such as `GGBR4`, `TAEE11` or `B3SA3`: an uppercase
/// alphanumeric root starting with a letter, ending in the share-class digits.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AssetId(String);

impl AssetId {
    pub fn new(ticker: impl Into<String>) -> Result<Self, DataError> {
        let ticker = ticker.into();
        let b = ticker.as_bytes();
        let ok = b.first().is_some_and(u8::is_ascii_uppercase)
            && b.last().is_some_and(u8::is_ascii_digit)
            && b.iter().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit());
        if !ok {
            return Err(DataError::Validation(format!("invalid ticker {ticker:?}")));
        }
        Ok(Self(ticker))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AssetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for AssetId {
    type Err = DataError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl TryFrom<String> for AssetId {
    type Error = DataError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::new(s)
    }
}

impl From<AssetId> for String {
    fn from(a: AssetId) -> String {
        a.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DailyBar {
    pub asset: AssetId,
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl DailyBar {
    pub fn validate(&self) -> Result<(), DataError> {
        let fail = |what: &str| {
            Err(DataError::Validation(format!("{} {}: {what}", self.asset, self.date)))
        };
        let prices = [self.open, self.high, self.low, self.close];
        if prices.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return fail("prices must be finite and positive");
        }
        if !self.volume.is_finite() || self.volume < 0.0 {
            return fail("volume must be non-negative");
        }
        if self.low > self.high {
            return fail("low > high");
        }
        if self.open < self.low || self.open > self.high {
            return fail("open outside [low, high]");
        }
        if self.close < self.low || self.close > self.high {
            return fail("close outside [low, high]");
        }
        Ok(())
    }

    /// Average of the day's high and low, the fill price for scheduled trades.
    pub fn mid_price(&self) -> f64 {
        mid_price(self)
    }
}

pub fn mid_price(bar: &DailyBar) -> f64 {
    (bar.high + bar.low) / 2.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatementRecord {
    pub company: AssetId,
    pub fiscal_quarter: FiscalQuarter,
    pub revenue: f64,
    pub operating_expenses: f64,
    pub gross_profit: f64,
    pub ebit: f64,
    pub net_income: f64,
    pub total_assets: f64,
    pub total_liabilities: f64,
    pub equity: f64,
    pub operating_cash_flow: f64,
    pub shares_outstanding: f64,
    pub release_date: NaiveDate,
}

impl StatementRecord {
    pub fn validate(&self) -> Result<(), DataError> {
        let amounts = [
            self.revenue,
            self.operating_expenses,
            self.gross_profit,
            self.ebit,
            self.net_income,
            self.total_assets,
            self.total_liabilities,
            self.equity,
            self.operating_cash_flow,
        ];
        let tag = format!("{} {}", self.company, self.fiscal_quarter);
        if amounts.iter().any(|a| !a.is_finite()) {
            return Err(DataError::Validation(format!("{tag}: non-finite amount")));
        }
        if !(self.shares_outstanding.is_finite() && self.shares_outstanding > 0.0) {
            return Err(DataError::Validation(format!("{tag}: shares_outstanding must be > 0")));
        }
        if self.release_date <= self.fiscal_quarter.end_date() {
            return Err(DataError::Validation(format!(
                "{tag}: release date {} not after quarter end",
                self.release_date
            )));
        }
        Ok(())
    }
}

/// Annualized risk-free rate (decimal fraction) by effective date.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RiskFreeSeries {
    entries: Vec<(NaiveDate, f64)>,
}

impl RiskFreeSeries {
    pub fn new(entries: Vec<(NaiveDate, f64)>) -> Result<Self, DataError> {
        for w in entries.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(DataError::Validation(format!(
                    "risk-free dates not strictly increasing at {}",
                    w[1].0
                )));
            }
        }
        if let Some((d, r)) = entries.iter().find(|(_, r)| !(r.is_finite() && *r >= 0.0)) {
            return Err(DataError::Validation(format!("risk-free rate {r} at {d} must be >= 0")));
        }
        Ok(Self { entries })
    }

    /// A single rate in force from `from` onwards.
    pub fn flat(from: NaiveDate, rate: f64) -> Result<Self, DataError> {
        Self::new(vec![(from, rate)])
    }

    pub fn entries(&self) -> &[(NaiveDate, f64)] {
        &self.entries
    }

    /// Rate in force on `t`: the latest entry dated on or before `t`.
    pub fn rate_at(&self, t: NaiveDate) -> Option<f64> {
        let idx = self.entries.partition_point(|(d, _)| *d <= t);
        idx.checked_sub(1).map(|i| self.entries[i].1)
    }

    /// Daily compounding factor `(1 + annual)^(1/252)` for the rate in force on `t`.
    pub fn daily_factor(&self, t: NaiveDate) -> f64 {
        daily_factor(self.rate_at(t).unwrap_or(0.0))
    }

    fn truncated(&self, t: NaiveDate) -> Self {
        Self { entries: self.entries.iter().copied().filter(|(d, _)| *d <= t).collect() }
    }
}

pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;

pub fn daily_factor(annual_rate: f64) -> f64 {
    libm::pow(1.0 + annual_rate, 1.0 / TRADING_DAYS_PER_YEAR)
}

/// Index composition on one date.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexWeights {
    pub as_of: NaiveDate,
    pub weights: BTreeMap<AssetId, f64>,
}

impl IndexWeights {
    pub fn total(&self) -> f64 {
        self.weights.values().sum()
    }

    pub fn normalized(&self) -> Result<Self, DataError> {
        let total = self.total();
        if !(total > 0.0) {
            return Err(DataError::Validation(format!("index weights at {} sum to zero", self.as_of)));
        }
        Ok(Self {
            as_of: self.as_of,
            weights: self.weights.iter().map(|(a, w)| (a.clone(), w / total)).collect(),
        })
    }
}

/// Dated index compositions, ordered by `as_of`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IndexWeightHistory {
    snapshots: Vec<IndexWeights>,
}

impl IndexWeightHistory {
    pub fn new(mut snapshots: Vec<IndexWeights>) -> Result<Self, DataError> {
        snapshots.sort_by_key(|s| s.as_of);
        for w in snapshots.windows(2) {
            if w[0].as_of == w[1].as_of {
                return Err(DataError::Validation(format!("duplicate index snapshot {}", w[0].as_of)));
            }
        }
        for s in &snapshots {
            if let Some((a, w)) = s.weights.iter().find(|(_, w)| !(w.is_finite() && **w >= 0.0)) {
                return Err(DataError::Validation(format!("negative weight {w} for {a} at {}", s.as_of)));
            }
        }
        Ok(Self { snapshots })
    }

    pub fn snapshots(&self) -> &[IndexWeights] {
        &self.snapshots
    }

    pub fn as_of(&self, t: NaiveDate) -> Option<&IndexWeights> {
        let idx = self.snapshots.partition_point(|s| s.as_of <= t);
        idx.checked_sub(1).map(|i| &self.snapshots[i])
    }

    fn truncated(&self, t: NaiveDate) -> Self {
        Self { snapshots: self.snapshots.iter().filter(|s| s.as_of <= t).cloned().collect() }
    }
}

/// The set of tradable companies, in file order, without duplicates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Universe {
    assets: Vec<AssetId>,
}

const B3_UNIVERSE: &str = include_str!("../../fixtures/universe_b3.txt");

impl Universe {
    pub fn new(assets: Vec<AssetId>) -> Result<Self, DataError> {
        let mut seen = std::collections::BTreeSet::new();
        for a in &assets {
            if !seen.insert(a) {
                return Err(DataError::Validation(format!("duplicate ticker {a} in universe")));
            }
        }
        Ok(Self { assets })
    }

    /// The 36 B3 common/preferred shares of the reference study.
    pub fn b3_reference() -> Self {
        read_universe(B3_UNIVERSE.as_bytes()).expect("bundled universe is valid")
    }

    pub fn assets(&self) -> &[AssetId] {
        &self.assets
    }

    pub fn contains(&self, a: &AssetId) -> bool {
        self.assets.contains(a)
    }

    pub fn len(&self) -> usize {
        self.assets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assets.is_empty()
    }
}

/// Immutable loaded dataset.
#[derive(Debug, Clone, Default)]
pub struct MarketData {
    bars: BarSet,
    /// Per company, sorted by (release_date, fiscal_quarter).
    statements: BTreeMap<AssetId, Vec<StatementRecord>>,
    risk_free: RiskFreeSeries,
    index_weights: IndexWeightHistory,
    universe: Universe,
}

impl MarketData {
    pub fn new(
        bars: BarSet,
        statements: Vec<StatementRecord>,
        risk_free: RiskFreeSeries,
        index_weights: IndexWeightHistory,
        universe: Universe,
    ) -> Self {
        let mut by_company: BTreeMap<AssetId, Vec<StatementRecord>> = BTreeMap::new();
        for s in statements {
            by_company.entry(s.company.clone()).or_default().push(s);
        }
        for v in by_company.values_mut() {
            v.sort_by_key(|s| (s.release_date, s.fiscal_quarter));
        }
        Self { bars, statements: by_company, risk_free, index_weights, universe }
    }

    pub fn bars(&self, asset: &AssetId) -> &[DailyBar] {
        self.bars.get(asset).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn bar_set(&self) -> &BarSet {
        &self.bars
    }

    pub fn statements(&self, company: &AssetId) -> &[StatementRecord] {
        self.statements.get(company).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn all_statements(&self) -> impl Iterator<Item = &StatementRecord> {
        self.statements.values().flatten()
    }

    pub fn risk_free(&self) -> &RiskFreeSeries {
        &self.risk_free
    }

    pub fn index_weights(&self) -> &IndexWeightHistory {
        &self.index_weights
    }

    pub fn universe(&self) -> &Universe {
        &self.universe
    }

    /// Latest bar dated on or before `t`.
    pub fn bar_at_or_before(&self, asset: &AssetId, t: NaiveDate) -> Option<&DailyBar> {
        let bars = self.bars(asset);
        let idx = bars.partition_point(|b| b.date <= t);
        idx.checked_sub(1).map(|i| &bars[i])
    }

    pub fn bar_on(&self, asset: &AssetId, t: NaiveDate) -> Option<&DailyBar> {
        self.bar_at_or_before(asset, t).filter(|b| b.date == t)
    }

    /// Bars dated on or before `t`.
    pub fn bars_up_to(&self, asset: &AssetId, t: NaiveDate) -> &[DailyBar] {
        let bars = self.bars(asset);
        &bars[..bars.partition_point(|b| b.date <= t)]
    }

    /// Most recently released statement with `release_date <= t`.
    pub fn as_of_statements(&self, company: &AssetId, t: NaiveDate) -> Option<&StatementRecord> {
        let v = self.statements(company);
        let idx = v.partition_point(|s| s.release_date <= t);
        idx.checked_sub(1).map(|i| &v[i])
    }

    /// Every statement public by `t`, one per fiscal quarter (latest release
    /// wins), ordered by fiscal quarter.
    pub fn statements_released_by(&self, company: &AssetId, t: NaiveDate) -> Vec<&StatementRecord> {
        let v = self.statements(company);
        let mut by_quarter: BTreeMap<FiscalQuarter, &StatementRecord> = BTreeMap::new();
        for s in &v[..v.partition_point(|s| s.release_date <= t)] {
            by_quarter.insert(s.fiscal_quarter, s);
        }
        by_quarter.into_values().collect()
    }

    /// Sorted union of every date with at least one bar.
    pub fn trading_days(&self) -> Vec<NaiveDate> {
        let mut days: Vec<NaiveDate> = self.bars.values().flatten().map(|b| b.date).collect();
        days.sort_unstable();
        days.dedup();
        days
    }

    /// A copy holding only records dated (or released) on or before `t`.
    pub fn truncated(&self, t: NaiveDate) -> Self {
        let bars = self
            .bars
            .iter()
            .map(|(a, v)| (a.clone(), v.iter().filter(|b| b.date <= t).cloned().collect::<Vec<_>>()))
            .filter(|(_, v)| !v.is_empty())
            .collect();
        let statements = self
            .statements
            .iter()
            .map(|(a, v)| (a.clone(), v.iter().filter(|s| s.release_date <= t).cloned().collect::<Vec<_>>()))
            .filter(|(_, v)| !v.is_empty())
            .collect();
        Self {
            bars,
            statements,
            risk_free: self.risk_free.truncated(t),
            index_weights: self.index_weights.truncated(t),
            universe: self.universe.clone(),
        }
    }

    pub fn view(&self, as_of: NaiveDate) -> PitView<'_> {
        PitView { data: self, as_of }
    }
}

/// Read-only window onto [`MarketData`] that never exposes anything dated
/// after `as_of`.
#[derive(Debug, Clone, Copy)]
pub struct PitView<'a> {
    data: &'a MarketData,
    as_of: NaiveDate,
}

impl<'a> PitView<'a> {
    pub fn as_of(&self) -> NaiveDate {
        self.as_of
    }

    /// Same data, earlier cut-off. Moving the cut-off forward is not allowed.
    pub fn rewind(&self, t: NaiveDate) -> PitView<'a> {
        PitView { data: self.data, as_of: t.min(self.as_of) }
    }

    pub fn universe(&self) -> &'a Universe {
        &self.data.universe
    }

    pub fn bar_at_or_before(&self, asset: &AssetId) -> Option<&'a DailyBar> {
        self.data.bar_at_or_before(asset, self.as_of)
    }

    /// Today's bar, if the asset traded on `as_of`.
    pub fn bar_today(&self, asset: &AssetId) -> Option<&'a DailyBar> {
        self.data.bar_on(asset, self.as_of)
    }

    pub fn bars(&self, asset: &AssetId) -> &'a [DailyBar] {
        self.data.bars_up_to(asset, self.as_of)
    }

    pub fn as_of_statements(&self, company: &AssetId) -> Option<&'a StatementRecord> {
        self.data.as_of_statements(company, self.as_of)
    }

    pub fn statements(&self, company: &AssetId) -> Vec<&'a StatementRecord> {
        self.data.statements_released_by(company, self.as_of)
    }

    pub fn index_weights(&self) -> Option<&'a IndexWeights> {
        self.data.index_weights.as_of(self.as_of)
    }

    pub fn risk_free_rate(&self) -> Option<f64> {
        self.data.risk_free.rate_at(self.as_of)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn asset(s: &str) -> AssetId {
        AssetId::new(s).unwrap()
    }

    fn bar(a: &str, date: NaiveDate, high: f64, low: f64) -> DailyBar {
        DailyBar { asset: asset(a), date, open: low, high, low, close: high, volume: 1.0 }
    }

    pub(crate) fn statement(a: &str, year: i32, q: u8, release: NaiveDate) -> StatementRecord {
        StatementRecord {
            company: asset(a),
            fiscal_quarter: FiscalQuarter::new(year, q).unwrap(),
            revenue: 100.0,
            operating_expenses: 50.0,
            gross_profit: 60.0,
            ebit: 20.0,
            net_income: 10.0,
            total_assets: 300.0,
            total_liabilities: 200.0,
            equity: 100.0,
            operating_cash_flow: 15.0,
            shares_outstanding: 10.0,
            release_date: release,
        }
    }

    #[test]
    fn ticker_pattern() {
        assert!(AssetId::new("GGBR4").is_ok());
        assert!(AssetId::new("TAEE11").is_ok());
        assert!(AssetId::new("B3SA3").is_ok());
        for bad in ["", "ggbr4", "GGBR", "4GGBR", "GGBR-4", "GGBR4F"] {
            assert!(AssetId::new(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn mid_price_examples() {
        let b = bar("GGBR4", d(2021, 3, 1), 21.0, 19.5);
        assert_eq!(mid_price(&b), 20.25);
        let flat = bar("GGBR4", d(2021, 3, 1), 10.0, 10.0);
        assert_eq!(flat.mid_price(), 10.0);
    }

    #[test]
    fn bar_invariants() {
        let mut b = bar("GGBR4", d(2021, 3, 1), 21.0, 19.5);
        assert!(b.validate().is_ok());
        b.low = 22.0;
        assert!(b.validate().is_err());
        let mut b = bar("GGBR4", d(2021, 3, 1), 21.0, 19.5);
        b.close = 21.5;
        assert!(b.validate().is_err());
        b.close = 20.0;
        b.volume = -1.0;
        assert!(b.validate().is_err());
    }

    #[test]
    fn as_of_statements_is_strict_about_release() {
        let s = statement("GGBR4", 2020, 4, d(2021, 2, 28));
        let data = MarketData::new(
            BTreeMap::new(),
            vec![s.clone(), statement("GGBR4", 2021, 1, d(2021, 5, 31))],
            RiskFreeSeries::default(),
            IndexWeightHistory::default(),
            Universe::default(),
        );
        let a = asset("GGBR4");
        assert!(data.as_of_statements(&a, d(2021, 2, 27)).is_none());
        assert_eq!(data.as_of_statements(&a, d(2021, 2, 28)), Some(&s));
        let latest = data.as_of_statements(&a, d(2021, 6, 15)).unwrap();
        assert_eq!(latest.fiscal_quarter, FiscalQuarter::new(2021, 1).unwrap());
        assert_eq!(data.statements_released_by(&a, d(2021, 6, 15)).len(), 2);
    }

    #[test]
    fn as_of_matches_enumeration() {
        // latest-release rule checked against a scan over every record
        let recs = vec![
            statement("ABEV3", 2020, 4, d(2021, 2, 28)),
            statement("ABEV3", 2021, 1, d(2021, 5, 31)),
            statement("ABEV3", 2021, 2, d(2021, 8, 31)),
        ];
        let data = MarketData::new(
            BTreeMap::new(),
            recs.clone(),
            RiskFreeSeries::default(),
            IndexWeightHistory::default(),
            Universe::default(),
        );
        let a = asset("ABEV3");
        let mut t = d(2021, 1, 1);
        while t < d(2021, 12, 31) {
            let brute = recs.iter().filter(|r| r.release_date <= t).max_by_key(|r| r.release_date);
            assert_eq!(data.as_of_statements(&a, t), brute, "{t}");
            t = t.succ_opt().unwrap();
        }
    }

    #[test]
    fn bar_lookup_over_weekend() {
        let mut bars = BTreeMap::new();
        bars.insert(
            asset("PETR3"),
            vec![
                bar("PETR3", d(2021, 3, 4), 11.0, 10.0),
                bar("PETR3", d(2021, 3, 5), 12.0, 10.0),
                bar("PETR3", d(2021, 3, 8), 13.0, 10.0),
            ],
        );
        let data = MarketData::new(
            bars,
            vec![],
            RiskFreeSeries::default(),
            IndexWeightHistory::default(),
            Universe::default(),
        );
        let a = asset("PETR3");
        assert_eq!(data.bar_at_or_before(&a, d(2021, 3, 5)).unwrap().date, d(2021, 3, 5));
        // Saturday and Sunday resolve to Friday
        assert_eq!(data.bar_at_or_before(&a, d(2021, 3, 6)).unwrap().date, d(2021, 3, 5));
        assert_eq!(data.bar_at_or_before(&a, d(2021, 3, 7)).unwrap().date, d(2021, 3, 5));
        assert!(data.bar_at_or_before(&a, d(2021, 3, 3)).is_none());
        assert!(data.bar_on(&a, d(2021, 3, 6)).is_none());
        assert_eq!(data.trading_days().len(), 3);
    }

    #[test]
    fn risk_free_lookup() {
        let rf = RiskFreeSeries::new(vec![(d(2021, 1, 1), 0.02), (d(2021, 6, 1), 0.05)]).unwrap();
        assert_eq!(rf.rate_at(d(2020, 12, 31)), None);
        assert_eq!(rf.rate_at(d(2021, 5, 31)), Some(0.02));
        assert_eq!(rf.rate_at(d(2021, 6, 1)), Some(0.05));
        assert!(RiskFreeSeries::new(vec![(d(2021, 1, 1), 0.02), (d(2021, 1, 1), 0.03)]).is_err());
        assert!(RiskFreeSeries::new(vec![(d(2021, 1, 1), -0.01)]).is_err());
        let f = daily_factor(0.10);
        assert!((libm::pow(f, 252.0) - 1.10).abs() < 1e-14);
    }

    #[test]
    fn universe_fixture_has_36_unique_tickers() {
        let u = Universe::b3_reference();
        assert_eq!(u.len(), 36);
        assert!(u.contains(&asset("GGBR4")));
        assert!(u.contains(&asset("MOTV3")));
        assert!(Universe::new(vec![asset("ABEV3"), asset("ABEV3")]).is_err());
    }
}
