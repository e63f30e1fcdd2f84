//! Daily event loop: risk-free accrual, triple-barrier exits, strategy
//! orders at mid price, mark-to-market at the close.
//!
//! Idle cash can be parked in a Selic sleeve, modelled as units of an
//! accrual index that starts at 1. Cash moves only through ledger rows, so
//! replaying the ledger reproduces the final cash exactly.

mod report;

use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDate;
use thiserror::Error;

use crate::market_data::{AssetId, DailyBar, FiscalQuarter, MarketData, ReleaseCalendar};
use crate::strategy::{
    Action, BarrierSpec, DecisionContext, FillTiming, Holding, Instrument, Order, Reason, Schedule,
    Side, Strategy, StrategyError,
};

pub use report::{write_allocations, write_equity, write_ledger, ALLOCATION_NONE};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("data gap: no bar for open position {asset} on {date}")]
    DataGap { asset: AssetId, date: NaiveDate },
    #[error("no trading days between {from} and {to}")]
    NoTradingDays { from: NaiveDate, to: NaiveDate },
    #[error("invalid engine config: {0}")]
    Config(String),
    #[error("strategy {strategy} failed on {date}: {source}")]
    Strategy {
        strategy: String,
        date: NaiveDate,
        #[source]
        source: StrategyError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    pub initial_capital: f64,
    /// Cost per equity trade in basis points of traded value.
    pub cost_bps: f64,
    /// Sell everything on the last day. When off, the last day is an
    /// ordinary day and open positions are only marked.
    pub liquidate_at_end: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self { initial_capital: 1_000_000.0, cost_bps: 0.0, liquidate_at_end: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Barriers {
    pub take_profit: f64,
    pub stop_loss: f64,
    pub vertical_date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Position {
    pub asset: AssetId,
    pub entry_date: NaiveDate,
    pub entry_price: f64,
    pub quantity: f64,
    pub barriers: Option<Barriers>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierExit {
    pub reason: Reason,
    pub price: f64,
}

/// Barrier test for one day. Nothing fires on or before the entry day.
/// When both price barriers are touched the stop-loss wins, since daily
/// bars cannot tell which came first. Reaching the vertical date is left
/// to the rebalance.
pub fn check_barriers(position: &Position, bar: &DailyBar) -> Option<BarrierExit> {
    let b = position.barriers?;
    if bar.date <= position.entry_date {
        return None;
    }
    let stop = bar.low <= b.stop_loss;
    let take = bar.high >= b.take_profit;
    match (stop, take) {
        (true, _) => Some(BarrierExit { reason: Reason::StopLoss, price: b.stop_loss }),
        (false, true) => Some(BarrierExit { reason: Reason::TakeProfit, price: b.take_profit }),
        (false, false) => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerEntry {
    pub date: NaiveDate,
    pub instrument: Instrument,
    pub side: Side,
    pub quantity: f64,
    pub price: f64,
    pub cost: f64,
    pub reason: Reason,
    pub cash_after: f64,
    pub equity_after: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquityPoint {
    pub date: NaiveDate,
    pub equity: f64,
    pub risk_free_balance: f64,
    pub n_positions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationRow {
    pub quarter: FiscalQuarter,
    pub date: NaiveDate,
    /// Selected assets in allocation order; empty means everything went
    /// to the Selic sleeve.
    pub assets: Vec<AssetId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestRun {
    pub strategy: String,
    pub config: EngineConfig,
    pub equity: Vec<EquityPoint>,
    pub ledger: Vec<LedgerEntry>,
    pub allocations: Vec<AllocationRow>,
}

impl BacktestRun {
    /// Cash after applying every ledger row to the initial capital.
    pub fn replay_cash(&self) -> f64 {
        let mut cash = self.config.initial_capital;
        for e in &self.ledger {
            let gross = e.quantity * e.price;
            match e.side {
                Side::Buy => cash -= gross + e.cost,
                Side::Sell => cash += gross - e.cost,
            }
        }
        cash
    }

    pub fn final_equity(&self) -> f64 {
        self.equity.last().map_or(self.config.initial_capital, |p| p.equity)
    }
}

struct Book<'a> {
    data: &'a MarketData,
    cost_rate: f64,
    cash: f64,
    units: f64,
    index: f64,
    positions: Vec<Position>,
    ledger: Vec<LedgerEntry>,
}

impl Book<'_> {
    fn bar(&self, asset: &AssetId, t: NaiveDate) -> Option<&DailyBar> {
        self.data.bar_on(asset, t)
    }

    fn sleeve(&self) -> f64 {
        self.units * self.index
    }

    /// Equity with positions at today's mid (or close when `at_close`).
    fn equity(&self, t: NaiveDate, at_close: bool) -> f64 {
        let held: f64 = self
            .positions
            .iter()
            .map(|p| {
                let bar = self.bar(&p.asset, t).expect("gap checked");
                p.quantity * if at_close { bar.close } else { bar.mid_price() }
            })
            .sum();
        self.cash + self.sleeve() + held
    }

    fn record(&mut self, t: NaiveDate, instrument: Instrument, side: Side, quantity: f64, price: f64, cost: f64, reason: Reason) {
        let equity_after = self.equity(t, false);
        self.ledger.push(LedgerEntry {
            date: t,
            instrument,
            side,
            quantity,
            price,
            cost,
            reason,
            cash_after: self.cash,
            equity_after,
        });
    }

    /// Sells `quantity` of position `i` (all of it closes the position).
    fn sell(&mut self, t: NaiveDate, i: usize, quantity: f64, price: f64, reason: Reason) {
        let gross = quantity * price;
        let cost = gross * self.cost_rate;
        self.cash += gross - cost;
        let asset = self.positions[i].asset.clone();
        if quantity >= self.positions[i].quantity {
            self.positions.remove(i);
        } else {
            self.positions[i].quantity -= quantity;
        }
        self.record(t, Instrument::Asset(asset), Side::Sell, quantity, price, cost, reason);
    }

    /// Buys up to `notional` of `asset`, never spending more than the cash
    /// on hand. Returns false when nothing could be bought.
    fn buy(&mut self, t: NaiveDate, asset: &AssetId, notional: f64, price: f64, reason: Reason, barriers: Option<Barriers>) -> bool {
        let affordable = self.cash / (price * (1.0 + self.cost_rate));
        let mut qty = (notional / price).min(affordable);
        while qty > 0.0 && qty * price + qty * price * self.cost_rate > self.cash {
            qty = qty.next_down();
        }
        if !(qty > 0.0) {
            return false;
        }
        let gross = qty * price;
        let cost = gross * self.cost_rate;
        self.cash -= gross + cost;
        match self.positions.iter_mut().find(|p| &p.asset == asset) {
            Some(p) => p.quantity += qty,
            None => self.positions.push(Position {
                asset: asset.clone(),
                entry_date: t,
                entry_price: price,
                quantity: qty,
                barriers,
            }),
        }
        self.record(t, Instrument::Asset(asset.clone()), Side::Buy, qty, price, cost, reason);
        true
    }

    /// Moves all idle cash into the sleeve.
    fn sweep(&mut self, t: NaiveDate) {
        let mut units = self.cash / self.index;
        while units > 0.0 && units * self.index > self.cash {
            units = units.next_down();
        }
        if units > 0.0 {
            self.cash -= units * self.index;
            self.units += units;
            self.record(t, Instrument::RiskFree, Side::Buy, units, self.index, 0.0, Reason::Sweep);
        }
    }

    /// Sells sleeve units to raise `amount` of cash (or everything).
    fn fund(&mut self, t: NaiveDate, amount: f64, reason: Reason) {
        if self.units <= 0.0 || amount <= 0.0 {
            return;
        }
        let units = if amount >= self.sleeve() { self.units } else { (amount / self.index).min(self.units) };
        self.cash += units * self.index;
        self.units -= units;
        self.record(t, Instrument::RiskFree, Side::Sell, units, self.index, 0.0, reason);
    }

    fn holdings(&self) -> Vec<Holding> {
        self.positions
            .iter()
            .map(|p| Holding { asset: p.asset.clone(), quantity: p.quantity, entry_date: p.entry_date, entry_price: p.entry_price })
            .collect()
    }

    fn position_index(&self, asset: &AssetId) -> Option<usize> {
        self.positions.iter().position(|p| &p.asset == asset)
    }

    /// Executes buys sized as fractions of `equity`, scaled down together
    /// when cash (plus the sleeve) cannot cover them.
    fn buy_all(&mut self, t: NaiveDate, buys: Vec<(AssetId, f64, Reason, Option<Barriers>)>, use_sleeve: bool) {
        let buys: Vec<_> = buys.into_iter().filter(|b| b.1 > 0.0 && self.bar(&b.0, t).is_some()).collect();
        if buys.is_empty() {
            return;
        }
        let required: f64 = buys.iter().map(|b| b.1 * (1.0 + self.cost_rate)).sum();
        let available = self.cash + if use_sleeve { self.sleeve() } else { 0.0 };
        let scale = if required > available { available / required } else { 1.0 };
        if use_sleeve && required * scale > self.cash {
            self.fund(t, required * scale - self.cash, Reason::Sweep);
        }
        for (asset, notional, reason, barriers) in buys {
            let price = self.bar(&asset, t).expect("filtered").mid_price();
            self.buy(t, &asset, notional * scale, price, reason, barriers);
        }
    }

    fn apply_trades(&mut self, t: NaiveDate, orders: &[Order], use_sleeve: bool) {
        for o in orders.iter().filter(|o| o.side == Side::Sell) {
            let Some(asset) = o.asset() else { continue };
            if let (Some(i), Some(bar)) = (self.position_index(asset), self.bar(asset, t)) {
                let (qty, mid) = (self.positions[i].quantity, bar.mid_price());
                self.sell(t, i, qty, mid, o.reason);
            }
        }
        let equity = self.equity(t, false);
        let buys = orders
            .iter()
            .filter(|o| o.side == Side::Buy)
            .filter_map(|o| o.asset().map(|a| (a.clone(), o)))
            .filter(|(a, _)| self.position_index(a).is_none())
            .map(|(a, o)| (a, o.weight_fraction * equity, o.reason, None))
            .collect();
        self.buy_all(t, buys, use_sleeve);
    }

    fn apply_rebalance(&mut self, t: NaiveDate, orders: &[Order], resize: bool, use_sleeve: bool) {
        let targets: BTreeMap<&AssetId, &Order> =
            orders.iter().filter(|o| o.side == Side::Buy).filter_map(|o| o.asset().map(|a| (a, o))).collect();

        // exits first
        let mut i = 0;
        while i < self.positions.len() {
            let p = &self.positions[i];
            if targets.contains_key(&p.asset) {
                i += 1;
                continue;
            }
            let reason = match p.barriers {
                Some(b) if t >= b.vertical_date => Reason::Vertical,
                _ => Reason::Rebalance,
            };
            let (qty, mid) = (p.quantity, self.bar(&p.asset, t).expect("gap checked").mid_price());
            self.sell(t, i, qty, mid, reason);
        }

        // kept positions: refresh barriers, keep the original stop
        for p in self.positions.iter_mut() {
            if let Some(spec) = targets.get(&p.asset).and_then(|o| o.barriers) {
                let stop = p.barriers.map_or(p.entry_price * (1.0 - spec.stop_loss_fraction), |b| b.stop_loss);
                p.barriers = Some(Barriers { take_profit: spec.take_profit, stop_loss: stop, vertical_date: spec.vertical_date });
            }
        }

        let equity = self.equity(t, false);
        if resize {
            let mut trims = Vec::new();
            for (k, p) in self.positions.iter().enumerate() {
                let mid = self.bar(&p.asset, t).expect("gap checked").mid_price();
                let target = targets[&p.asset].weight_fraction * equity;
                let excess = p.quantity * mid - target;
                if excess > 0.0 {
                    trims.push((k, (excess / mid).min(p.quantity), mid));
                }
            }
            for (k, qty, mid) in trims.into_iter().rev() {
                self.sell(t, k, qty, mid, Reason::Rebalance);
            }
        }

        let mut buys = Vec::new();
        for (asset, o) in &targets {
            let Some(bar) = self.bar(asset, t) else { continue };
            let mid = bar.mid_price();
            let target = o.weight_fraction * equity;
            let notional = match self.position_index(asset) {
                None => target,
                Some(k) if resize => target - self.positions[k].quantity * mid,
                Some(_) => 0.0,
            };
            let barriers = o.barriers.map(|b: BarrierSpec| Barriers {
                take_profit: b.take_profit,
                stop_loss: mid * (1.0 - b.stop_loss_fraction),
                vertical_date: b.vertical_date,
            });
            buys.push(((*asset).clone(), notional, o.reason, barriers));
        }
        // keep allocation order rather than ticker order
        let order_of: HashMap<&AssetId, usize> = orders.iter().enumerate().filter_map(|(i, o)| o.asset().map(|a| (a, i))).collect();
        buys.sort_by_key(|b| order_of.get(&b.0).copied().unwrap_or(usize::MAX));
        self.buy_all(t, buys, use_sleeve);
    }

    fn liquidate(&mut self, t: NaiveDate) {
        while !self.positions.is_empty() {
            let p = &self.positions[0];
            let (qty, mid) = (p.quantity, self.bar(&p.asset, t).expect("gap checked").mid_price());
            self.sell(t, 0, qty, mid, Reason::EndOfBacktest);
        }
        if self.units > 0.0 {
            let units = self.units;
            self.cash += units * self.index;
            self.units = 0.0;
            self.record(t, Instrument::RiskFree, Side::Sell, units, self.index, 0.0, Reason::EndOfBacktest);
        }
    }
}

/// Decision days for release-date strategies: each statutory release in
/// the window, moved to the first trading day on or after it.
pub fn release_decision_days(days: &[NaiveDate], from: NaiveDate, to: NaiveDate) -> BTreeMap<NaiveDate, FiscalQuarter> {
    let mut out = BTreeMap::new();
    for (q, release) in ReleaseCalendar.releases_between(from, to) {
        let k = days.partition_point(|d| *d < release);
        if let Some(&d) = days.get(k) {
            out.entry(d).or_insert(q);
        }
    }
    out
}

/// Runs `strategy` over the trading days in `[from, to]`.
///
/// Each day: accrue the sleeve, check barriers, fill orders queued the day
/// before, run same-day decisions at mid, mark at the close, then run
/// close-of-day decisions whose orders fill next day. Everything still held
/// on the last day is sold at its mid price.
pub fn run_backtest(
    data: &MarketData,
    strategy: &mut dyn Strategy,
    from: NaiveDate,
    to: NaiveDate,
    cfg: &EngineConfig,
) -> Result<BacktestRun, EngineError> {
    if !(cfg.initial_capital.is_finite() && cfg.initial_capital > 0.0) {
        return Err(EngineError::Config("initial capital must be positive".into()));
    }
    if !(cfg.cost_bps.is_finite() && cfg.cost_bps >= 0.0) {
        return Err(EngineError::Config("costs.per_trade_bps must be >= 0".into()));
    }
    let days: Vec<NaiveDate> = data.trading_days().into_iter().filter(|d| *d >= from && *d <= to).collect();
    if days.is_empty() {
        return Err(EngineError::NoTradingDays { from, to });
    }
    let releases = release_decision_days(&days, from, to);
    let schedule = strategy.schedule();
    let timing = strategy.fill_timing();
    let sweep = strategy.sweeps_idle_cash();
    let id = strategy.id().to_string();
    let wrap = |date: NaiveDate| {
        let id = id.clone();
        move |source| EngineError::Strategy { strategy: id, date, source }
    };

    let mut book = Book {
        data,
        cost_rate: cfg.cost_bps / 10_000.0,
        cash: cfg.initial_capital,
        units: 0.0,
        index: 1.0,
        positions: Vec::new(),
        ledger: Vec::new(),
    };
    let mut equity_curve = Vec::with_capacity(days.len());
    let mut allocations = Vec::new();
    let mut pending: Vec<Order> = Vec::new();

    for (k, &t) in days.iter().enumerate() {
        let last = k + 1 == days.len() && cfg.liquidate_at_end;
        if k > 0 {
            book.index *= data.risk_free().daily_factor(t);
        }
        if let Some(p) = book.positions.iter().find(|p| book.bar(&p.asset, t).is_none()) {
            return Err(EngineError::DataGap { asset: p.asset.clone(), date: t });
        }

        let mut i = 0;
        while i < book.positions.len() {
            let bar = book.bar(&book.positions[i].asset, t).expect("gap checked");
            match check_barriers(&book.positions[i], bar) {
                Some(exit) => {
                    let qty = book.positions[i].quantity;
                    book.sell(t, i, qty, exit.price, exit.reason);
                }
                None => i += 1,
            }
        }

        let decision_today = match schedule {
            Schedule::Daily => true,
            Schedule::ReleaseDates => releases.contains_key(&t),
            Schedule::Never => false,
        };
        let quarter = releases.get(&t).copied();
        let vertical_date = quarter.map(|q| ReleaseCalendar.release_date(q.next()));

        if last {
            book.liquidate(t);
        } else {
            if !pending.is_empty() {
                let orders = std::mem::take(&mut pending);
                book.apply_trades(t, &orders, sweep);
            }
            if decision_today && timing == FillTiming::SameDayMid {
                let holdings = book.holdings();
                let ctx = DecisionContext {
                    view: data.view(t),
                    quarter,
                    vertical_date,
                    holdings: &holdings,
                    equity: book.equity(t, false),
                };
                match strategy.decide(&ctx).map_err(wrap(t))? {
                    Action::Hold => {}
                    Action::Trade(orders) => book.apply_trades(t, &orders, sweep),
                    Action::Rebalance { quarter: q, orders, resize } => {
                        if let Some(q) = q {
                            let assets = orders.iter().filter(|o| o.side == Side::Buy).filter_map(|o| o.asset().cloned()).collect();
                            allocations.push(AllocationRow { quarter: q, date: t, assets });
                        }
                        book.apply_rebalance(t, &orders, resize, sweep);
                    }
                }
            }
            if sweep {
                book.sweep(t);
            }
        }

        equity_curve.push(EquityPoint {
            date: t,
            equity: book.equity(t, true),
            risk_free_balance: book.sleeve(),
            n_positions: book.positions.len(),
        });

        if !last && decision_today && timing == FillTiming::NextDayMid {
            let holdings = book.holdings();
            let ctx = DecisionContext {
                view: data.view(t),
                quarter,
                vertical_date,
                holdings: &holdings,
                equity: book.equity(t, true),
            };
            match strategy.decide(&ctx).map_err(wrap(t))? {
                Action::Hold => {}
                Action::Trade(orders) | Action::Rebalance { orders, .. } => pending = orders,
            }
        }
    }

    Ok(BacktestRun {
        strategy: strategy.id().to_string(),
        config: *cfg,
        equity: equity_curve,
        ledger: book.ledger,
        allocations,
    })
}
