//! Seeded synthetic market used for fixtures and smoke runs.
//!
//! Each company gets persistent fundamentals (growth, margins, leverage) and
//! a price that tracks a fundamental fair value with mean-reverting
//! mispricing on top of a common market factor. Fair value moves only on
//! statement release dates, so cheap stocks tend to re-rate upwards.
//!
//! Layout: eight warm-up quarters of statements precede the first decision
//! quarter (Q4 2020); bars run from the first warm-up quarter through the
//! release date of the quarter after the last decision quarter. A
//! market-wide bubble peaks on the middle decision date so that no stock
//! offers upside there.

use std::collections::BTreeMap;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    AssetId, BarSet, DailyBar, DataError, FiscalQuarter, IndexWeightHistory, IndexWeights,
    ReleaseCalendar, RiskFreeSeries, StatementRecord, Universe,
};

/// Peak price multiplier of the stress quarter's bubble.
pub const STRESS_BUBBLE_FACTOR: f64 = 2.5;

const WARMUP_QUARTERS: i64 = 8;
const FIRST_DECISION: FiscalQuarter = FiscalQuarter { year: 2020, quarter: 4 };
const BUBBLE_RAMP_DAYS: usize = 20;
const BUBBLE_HOLD_DAYS: usize = 3;
const OUTSIDE_INDEX: [&str; 4] = ["VALE3", "ITUB4", "BBDC4", "BBAS3"];

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub bars: BarSet,
    pub statements: Vec<StatementRecord>,
    pub risk_free: RiskFreeSeries,
    pub index_weights: IndexWeightHistory,
    pub universe: Universe,
    /// Fiscal quarter of the first decision (its release opens the test window).
    pub first_decision: FiscalQuarter,
    pub n_decisions: usize,
    /// Decision quarter whose release date sits on the bubble peak.
    pub stress_quarter: FiscalQuarter,
}

impl SyntheticDataset {
    pub fn decision_window(&self) -> (NaiveDate, NaiveDate) {
        let cal = ReleaseCalendar;
        let start = cal.release_date(self.first_decision);
        let end = self.bars.values().flatten().map(|b| b.date).max().unwrap_or(start);
        (start, end)
    }
}

fn r6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// Standard normal draw (Box-Muller through libm, so the same seed gives
/// the same dataset on every platform).
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(std::f64::consts::TAU * u2)
}

fn is_trading_day(d: NaiveDate) -> bool {
    !matches!(d.weekday(), Weekday::Sat | Weekday::Sun)
        && !((d.month() == 1 && d.day() == 1) || (d.month() == 12 && d.day() == 25))
}

fn ticker(i: usize) -> AssetId {
    let reference = Universe::b3_reference();
    match reference.assets().get(i) {
        Some(a) => a.clone(),
        None => AssetId::new(format!("SYN{}", i + 1)).expect("valid synthetic ticker"),
    }
}

struct CompanyParams {
    revenue0: f64,
    growth: f64,
    season_phase: f64,
    net_margin: f64,
    ebit_gap: f64,
    gross_margin: f64,
    book_ratio: f64,
    leverage: f64,
    cash_conversion: f64,
    shares: f64,
    fair_ps: f64,
    base_volume: f64,
}

/// Company parameters. A latent quality draw moves margin, leverage and
/// growth together so that some companies screen well on several
/// indicators at once.
fn draw_params(rng: &mut ChaCha8Rng) -> CompanyParams {
    let quality: f64 = rng.random();
    let mix = |rng: &mut ChaCha8Rng| 0.6 * quality + 0.4 * rng.random::<f64>();
    let margin = mix(rng);
    let debt = mix(rng);
    let growth = mix(rng);
    CompanyParams {
        revenue0: rng.random_range(5e5..1e7),
        growth: -0.01 + 0.045 * growth,
        season_phase: rng.random_range(0.0..std::f64::consts::TAU),
        net_margin: 0.01 + 0.21 * margin,
        ebit_gap: rng.random_range(0.03..0.10),
        gross_margin: rng.random_range(0.35..0.65),
        book_ratio: rng.random_range(0.5..2.5),
        leverage: 2.5 - 2.2 * debt,
        cash_conversion: rng.random_range(0.8..1.5),
        shares: rng.random_range(2e5..5e6_f64).round(),
        fair_ps: rng.random_range(0.6..2.0),
        base_volume: rng.random_range(2e5..5e6),
    }
}

/// Generates a deterministic dataset for `seed`.
///
/// `n_quarters` is the number of decision quarters (statement releases in
/// the test window); eight extra warm-up quarters precede them.
pub fn generate_synthetic_universe(
    seed: u64,
    n_assets: usize,
    n_quarters: usize,
) -> Result<SyntheticDataset, DataError> {
    if n_assets == 0 {
        return Err(DataError::Argument("n_assets must be >= 1".into()));
    }
    if n_quarters < 2 {
        return Err(DataError::Argument("n_quarters must be >= 2".into()));
    }
    let cal = ReleaseCalendar;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let first_statement = FIRST_DECISION.offset(-WARMUP_QUARTERS);
    let quarters: Vec<FiscalQuarter> =
        (0..WARMUP_QUARTERS + n_quarters as i64).map(|k| first_statement.offset(k)).collect();
    let start = first_statement.end_date() + Days::new(1);
    let end = cal.release_date(FIRST_DECISION.offset(n_quarters as i64));
    let mut days = Vec::new();
    let mut d = start;
    while d <= end {
        if is_trading_day(d) {
            days.push(d);
        }
        d = d + Days::new(1);
    }

    let stress_quarter = FIRST_DECISION.offset(((n_quarters - 1) / 2) as i64);
    let stress_release = cal.release_date(stress_quarter);
    let peak = days.partition_point(|d| *d < stress_release);
    let bubble: Vec<f64> = (0..days.len())
        .map(|i| {
            let log_peak = libm::log(STRESS_BUBBLE_FACTOR);
            let level = if i + BUBBLE_RAMP_DAYS < peak {
                0.0
            } else if i <= peak {
                1.0 - (peak - i) as f64 / BUBBLE_RAMP_DAYS as f64
            } else if i <= peak + BUBBLE_HOLD_DAYS {
                1.0
            } else {
                let k = i - peak - BUBBLE_HOLD_DAYS;
                (1.0 - k as f64 / BUBBLE_RAMP_DAYS as f64).max(0.0)
            };
            libm::exp(log_peak * level)
        })
        .collect();

    // mean-reverting market level, so valuation multiples revert too
    let market: Vec<f64> = {
        let mut m = 0.0;
        days.iter()
            .map(|_| {
                m = m * (1.0 - 1.0 / 120.0) + 0.009 * normal(&mut rng);
                m
            })
            .collect()
    };

    let assets: Vec<AssetId> = (0..n_assets).map(ticker).collect();
    let mut bars = BarSet::new();
    let mut statements = Vec::new();
    let mut closes_by_asset: Vec<Vec<f64>> = Vec::new();

    for asset in &assets {
        let p = draw_params(&mut rng);
        let mut equity = p.revenue0 * 4.0 * p.book_ratio;
        let mut recs: Vec<StatementRecord> = Vec::new();
        for (k, fq) in quarters.iter().enumerate() {
            let season = 0.05 * libm::sin(std::f64::consts::FRAC_PI_2 * fq.quarter as f64 + p.season_phase);
            let revenue = r6(p.revenue0 * libm::exp(p.growth * k as f64 + season + 0.04 * normal(&mut rng)));
            let nm = p.net_margin + 0.025 * normal(&mut rng);
            let net_income = r6(nm * revenue);
            let ebit = r6((nm + p.ebit_gap) * revenue);
            let gross_profit = r6(p.gross_margin * revenue);
            let operating_expenses = r6(gross_profit - ebit);
            equity += 0.6 * net_income;
            let eq = r6(equity);
            let liabilities = r6(eq.abs() * p.leverage * libm::exp(0.05 * normal(&mut rng)));
            let ocf = r6(net_income * p.cash_conversion + 0.03 * revenue);
            recs.push(StatementRecord {
                company: asset.clone(),
                fiscal_quarter: *fq,
                revenue,
                operating_expenses,
                gross_profit,
                ebit,
                net_income,
                total_assets: r6(eq + liabilities),
                total_liabilities: liabilities,
                equity: eq,
                operating_cash_flow: ocf,
                shares_outstanding: p.shares,
                release_date: cal.release_date(*fq),
            });
        }

        // fair value per share at each release: a price-to-sales multiple on
        // trailing revenue, lifted for margins above the cross-section norm
        let anchors: Vec<(NaiveDate, f64)> = recs
            .iter()
            .enumerate()
            .map(|(k, r)| {
                let window = &recs[k.saturating_sub(3)..=k];
                let scale = 4.0 / window.len() as f64;
                let rev: f64 = window.iter().map(|s| s.revenue).sum::<f64>() * scale;
                let ni: f64 = window.iter().map(|s| s.net_income).sum::<f64>() * scale;
                let margin = ni / rev;
                (r.release_date, libm::log(p.fair_ps * rev / p.shares) + 2.0 * (margin - 0.1))
            })
            .collect();
        let log_fv: Vec<f64> = days
            .iter()
            .map(|d| anchors[anchors.partition_point(|(a, _)| a <= d).saturating_sub(1)].1)
            .collect();

        let mut mispricing = 0.15 * normal(&mut rng);
        let mut prev_close: Option<f64> = None;
        let mut series = Vec::with_capacity(days.len());
        let mut closes = Vec::with_capacity(days.len());
        for (i, day) in days.iter().enumerate() {
            mispricing = mispricing * (1.0 - 1.0 / 60.0) + 0.02 * normal(&mut rng);
            let price = libm::exp(log_fv[i] + mispricing + market[i]) * bubble[i];
            let close = price.max(0.05);
            let open = prev_close.unwrap_or(close) * libm::exp(0.004 * normal(&mut rng));
            let hi = open.max(close) * libm::exp((0.008 * normal(&mut rng)).abs());
            let lo = open.min(close) * libm::exp(-(0.008 * normal(&mut rng)).abs());
            let (open, close) = (r6(open).max(0.01), r6(close).max(0.01));
            let high = r6(hi).max(open).max(close);
            let low = r6(lo).max(0.01).min(open).min(close);
            let volume = (p.base_volume * libm::exp(0.3 * normal(&mut rng))).round();
            series.push(DailyBar { asset: asset.clone(), date: *day, open, high, low, close, volume });
            closes.push(close);
            prev_close = Some(close);
        }
        bars.insert(asset.clone(), series);
        closes_by_asset.push(closes);
        statements.extend(recs);
    }

    let risk_free = {
        let mut entries = Vec::new();
        let mut rate: f64 = 0.065;
        let mut d = NaiveDate::from_ymd_opt(start.year(), start.month(), 1).expect("month start");
        while d <= end {
            entries.push((d, r6(rate)));
            rate = (rate + 0.08 * (0.10 - rate) + 0.004 * normal(&mut rng)).clamp(0.02, 0.15);
            d = d.checked_add_months(chrono::Months::new(1)).expect("month step");
        }
        RiskFreeSeries::new(entries)?
    };

    let index_weights = {
        let mut snaps = Vec::new();
        let mut dates = vec![days[0]];
        dates.extend(cal.releases_between(start, end).into_iter().map(|(_, d)| d));
        for as_of in dates {
            let idx = days.partition_point(|d| *d <= as_of).saturating_sub(1);
            let mut caps: BTreeMap<AssetId, f64> = BTreeMap::new();
            for (a, (asset, closes)) in assets.iter().zip(&closes_by_asset).enumerate() {
                let shares = statements[a * quarters.len()].shares_outstanding;
                caps.insert(asset.clone(), closes[idx] * shares * libm::exp(0.1 * normal(&mut rng)));
            }
            let mean_cap = caps.values().sum::<f64>() / caps.len() as f64;
            for t in OUTSIDE_INDEX {
                let cap = mean_cap * rng.random_range(1.0..4.0);
                caps.insert(AssetId::new(t).expect("valid ticker"), cap);
            }
            let total: f64 = caps.values().sum();
            let weights = caps.into_iter().map(|(a, c)| (a, r6(c / total))).collect();
            snaps.push(IndexWeights { as_of, weights });
        }
        IndexWeightHistory::new(snaps)?
    };

    Ok(SyntheticDataset {
        bars,
        statements,
        risk_free,
        index_weights,
        universe: Universe::new(assets)?,
        first_decision: FIRST_DECISION,
        n_decisions: n_quarters,
        stress_quarter,
    })
}
