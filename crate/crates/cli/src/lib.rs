//! Command implementations behind the `alphax` binary.

pub mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use alphax_core::engine::{run_backtest, write_allocations, write_equity, write_ledger, BacktestRun, EngineError};
use alphax_core::market_data::{
    generate_synthetic_universe, load_index_weights, load_risk_free, load_statements, load_universe,
    read_bars_lenient, write_bars, write_index_weights, write_risk_free, write_statements, write_universe, DataError,
    MarketData,
};
use alphax_core::metrics::{write_metrics_csv, write_metrics_json, write_psr_table, MetricError, MetricReport};
use alphax_core::strategy::{AlphaX, IndicatorKind, NIbov, Selic, Strategy, StrategyError, Technical};
use chrono::NaiveDate;
use rayon::prelude::*;
use thiserror::Error;

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Data {
        path: PathBuf,
        #[source]
        source: DataError,
    },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("{0} validation violation(s)")]
    Invalid(usize),
    #[error("output directory {} is not empty (use --force)", .0.display())]
    OutputNotEmpty(PathBuf),
    #[error("failed to render {what}: {message}")]
    Render { what: String, message: String },
}

impl CliError {
    /// 1 for invalid data, 2 for usage, config and IO problems, 3 for a gap
    /// in the bars of a held position.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Data { source: DataError::Io { .. } | DataError::Argument(_), .. } => 2,
            CliError::Data { .. } | CliError::Invalid(_) => 1,
            CliError::Engine(EngineError::DataGap { .. }) => 3,
            _ => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn data_err(path: &Path) -> impl FnOnce(DataError) -> CliError + '_ {
    move |source| CliError::Data { path: path.to_path_buf(), source }
}

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e.error })?;
    Ok(())
}

fn render<E: std::fmt::Display>(what: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<(), E>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| CliError::Render { what: what.to_string(), message: e.to_string() })?;
    Ok(buf)
}

pub fn load_market_data(cfg: &RunConfig) -> Result<MarketData, CliError> {
    let d = &cfg.data;
    let file = File::open(&d.bars).map_err(io_err(&d.bars))?;
    let lenient = read_bars_lenient(BufReader::new(file)).map_err(data_err(&d.bars))?;
    if let Some(v) = lenient.violations.first() {
        return Err(CliError::Data { path: d.bars.clone(), source: DataError::Validation(v.clone()) });
    }
    let statements = load_statements(&d.statements).map_err(data_err(&d.statements))?;
    let risk_free = load_risk_free(&d.risk_free).map_err(data_err(&d.risk_free))?;
    let weights = load_index_weights(&d.index_weights).map_err(data_err(&d.index_weights))?;
    let universe = load_universe(&d.universe).map_err(data_err(&d.universe))?;
    Ok(MarketData::new(lenient.bars, statements, risk_free, weights, universe))
}

// ---------------------------------------------------------------- validate

#[derive(Debug, Clone, PartialEq)]
pub struct Coverage {
    pub asset: String,
    pub bars: usize,
    pub first: NaiveDate,
    pub last: NaiveDate,
    /// Trading days (dates on which any asset traded) inside
    /// `[first, last]` without a bar for this asset.
    pub missing_days: usize,
    pub statements: usize,
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct ValidationReport {
    pub counts: BTreeMap<&'static str, usize>,
    pub coverage: Vec<Coverage>,
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.counts {
            s.push_str(&format!("{k}: {v}\n"));
        }
        s.push_str("asset,bars,first,last,missing_days,statements\n");
        for c in &self.coverage {
            s.push_str(&format!("{},{},{},{},{},{}\n", c.asset, c.bars, c.first, c.last, c.missing_days, c.statements));
        }
        for w in &self.warnings {
            s.push_str(&format!("warning: {w}\n"));
        }
        for v in &self.violations {
            s.push_str(&format!("violation: {v}\n"));
        }
        s.push_str(&format!("{} violations\n", self.violations.len()));
        s
    }
}

/// Checks every input file. Invalid rows become violations; a missing or
/// unreadable file is an error.
pub fn validate(cfg: &RunConfig) -> Result<ValidationReport, CliError> {
    let d = &cfg.data;
    let mut report = ValidationReport::default();
    let mut capture = |path: &Path, e: DataError| -> Result<(), CliError> {
        match e {
            DataError::Io { .. } => Err(CliError::Data { path: path.to_path_buf(), source: e }),
            other => {
                report.violations.push(format!("{}: {other}", path.display()));
                Ok(())
            }
        }
    };

    let file = File::open(&d.bars).map_err(io_err(&d.bars))?;
    let bars = match read_bars_lenient(BufReader::new(file)) {
        Ok(l) => {
            for v in l.violations {
                capture(&d.bars, DataError::Validation(v))?;
            }
            l.bars
        }
        Err(e) => {
            capture(&d.bars, e)?;
            Default::default()
        }
    };
    let statements = load_statements(&d.statements).or_else(|e| capture(&d.statements, e).map(|_| Vec::new()))?;
    let risk_free = load_risk_free(&d.risk_free).map(Some).or_else(|e| capture(&d.risk_free, e).map(|_| None))?;
    let weights = load_index_weights(&d.index_weights).map(Some).or_else(|e| capture(&d.index_weights, e).map(|_| None))?;
    let universe = load_universe(&d.universe).map(Some).or_else(|e| capture(&d.universe, e).map(|_| None))?;

    report.counts.insert("bars", bars.values().map(Vec::len).sum());
    report.counts.insert("assets", bars.len());
    report.counts.insert("statements", statements.len());
    report.counts.insert("risk_free_rows", risk_free.as_ref().map_or(0, |r| r.entries().len()));
    report.counts.insert("index_snapshots", weights.as_ref().map_or(0, |w| w.snapshots().len()));
    report.counts.insert("universe", universe.as_ref().map_or(0, |u| u.len()));

    let calendar: BTreeSet<NaiveDate> = bars.values().flatten().map(|b| b.date).collect();
    let mut by_company: BTreeMap<String, Vec<_>> = BTreeMap::new();
    for s in &statements {
        by_company.entry(s.company.to_string()).or_default().push(s.fiscal_quarter);
    }
    for (asset, series) in &bars {
        let (first, last) = (series[0].date, series[series.len() - 1].date);
        let expected = calendar.range(first..=last).count();
        report.coverage.push(Coverage {
            asset: asset.to_string(),
            bars: series.len(),
            first,
            last,
            missing_days: expected - series.len(),
            statements: by_company.get(asset.as_str()).map_or(0, Vec::len),
        });
    }
    for c in &report.coverage {
        if c.missing_days > 0 {
            report.warnings.push(format!("{}: {} trading day(s) without a bar between {} and {}", c.asset, c.missing_days, c.first, c.last));
        }
    }
    for (company, quarters) in &mut by_company {
        quarters.sort();
        for w in quarters.windows(2) {
            if w[1].ordinal() - w[0].ordinal() > 1 {
                report.warnings.push(format!("{company}: statements jump from {} to {}", w[0], w[1]));
            }
        }
    }
    if let Some(u) = &universe {
        for a in u.assets() {
            if !bars.contains_key(a) {
                report.warnings.push(format!("universe asset {a} has no bars"));
            }
            if !by_company.contains_key(a.as_str()) {
                report.warnings.push(format!("universe asset {a} has no statements"));
            }
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------- backtest

fn build_strategy(id: &str, cfg: &RunConfig) -> Result<Box<dyn Strategy>, CliError> {
    Ok(match id {
        "alphax" => Box::new(AlphaX::new(cfg.alphax)?),
        "rsi" => Box::new(Technical::new(cfg.technical(IndicatorKind::Rsi)?)?),
        "stochastic" => Box::new(Technical::new(cfg.technical(IndicatorKind::Stochastic)?)?),
        "mfi" => Box::new(Technical::new(cfg.technical(IndicatorKind::Mfi)?)?),
        "selic" => Box::new(Selic),
        "nibov" => Box::new(NIbov),
        other => return Err(CliError::Config(format!("unknown strategy {other:?}"))),
    })
}

/// The backtest window: configured bounds, defaulting to the data range.
pub fn window(cfg: &RunConfig, data: &MarketData) -> Result<(NaiveDate, NaiveDate), CliError> {
    let days = data.trading_days();
    let (Some(first), Some(last)) = (days.first(), days.last()) else {
        return Err(CliError::Config("no bars in the data".into()));
    };
    Ok((cfg.from.unwrap_or(*first), cfg.to.unwrap_or(*last)))
}

pub struct BacktestOutcome {
    pub runs: Vec<BacktestRun>,
    pub reports: Vec<MetricReport>,
}

/// Runs every configured strategy (in parallel) and computes its metrics.
pub fn run_strategies(cfg: &RunConfig, data: &MarketData) -> Result<BacktestOutcome, CliError> {
    let (from, to) = window(cfg, data)?;
    let results: Vec<Result<(BacktestRun, MetricReport), CliError>> = cfg
        .strategies
        .par_iter()
        .map(|id| {
            let mut strategy = build_strategy(id, cfg)?;
            let run = run_backtest(data, strategy.as_mut(), from, to, &cfg.engine)?;
            let curve: Vec<(NaiveDate, f64)> = run.equity.iter().map(|p| (p.date, p.equity)).collect();
            let report = MetricReport::compute(id, &curve, data.risk_free(), &cfg.metrics)?;
            Ok((run, report))
        })
        .collect();
    let mut out = BacktestOutcome { runs: Vec::new(), reports: Vec::new() };
    for r in results {
        let (run, report) = r?;
        out.runs.push(run);
        out.reports.push(report);
    }
    Ok(out)
}

/// Writes per-strategy files under `<out>/<id>/` plus the comparison
/// tables and a snapshot of the effective config.
pub fn write_outputs(cfg: &RunConfig, outcome: &BacktestOutcome) -> Result<(), CliError> {
    let out = &cfg.out;
    for (run, report) in outcome.runs.iter().zip(&outcome.reports) {
        let dir = out.join(&run.strategy);
        write_atomic(&dir.join("ledger.csv"), &render("ledger", |b| write_ledger(b, &run.ledger))?)?;
        write_atomic(&dir.join("equity.csv"), &render("equity", |b| write_equity(b, &run.equity))?)?;
        let one = std::slice::from_ref(report);
        write_atomic(&dir.join("metrics.csv"), &render("metrics", |b| write_metrics_csv(b, one))?)?;
        write_atomic(&dir.join("metrics.json"), &render("metrics", |b| write_metrics_json(b, one))?)?;
        if matches!(run.strategy.as_str(), "alphax" | "nibov") {
            write_atomic(&dir.join("allocations.csv"), &render("allocations", |b| write_allocations(b, &run.allocations))?)?;
        }
    }
    let reports = &outcome.reports;
    write_atomic(&out.join("comparison.csv"), &render("comparison", |b| write_metrics_csv(b, reports))?)?;
    write_atomic(&out.join("comparison.json"), &render("comparison", |b| write_metrics_json(b, reports))?)?;
    write_atomic(&out.join("psr.csv"), &render("psr table", |b| write_psr_table(b, reports))?)?;
    write_atomic(&out.join("config.toml"), cfg.snapshot().as_bytes())?;
    Ok(())
}

pub fn backtest(cfg: &RunConfig) -> Result<BacktestOutcome, CliError> {
    let data = load_market_data(cfg)?;
    let outcome = run_strategies(cfg, &data)?;
    write_outputs(cfg, &outcome)?;
    Ok(outcome)
}

// ---------------------------------------------------------------- synth

/// Writes a synthetic dataset and a ready-to-run `config.toml` into `out`.
pub fn synth(seed: u64, assets: usize, quarters: usize, out: &Path, force: bool) -> Result<(), CliError> {
    if out.exists() {
        let mut entries = std::fs::read_dir(out).map_err(io_err(out))?;
        if entries.next().is_some() && !force {
            return Err(CliError::OutputNotEmpty(out.to_path_buf()));
        }
    }
    let ds = generate_synthetic_universe(seed, assets, quarters).map_err(data_err(out))?;
    let file = |name: &str| out.join(name);
    let data = |name: &str, f: &dyn Fn(&mut Vec<u8>) -> Result<(), DataError>| -> Result<(), CliError> {
        write_atomic(&file(name), &render(name, f)?)
    };
    data("bars.csv", &|b| write_bars(b, &ds.bars))?;
    data("statements.csv", &|b| write_statements(b, &ds.statements, true))?;
    data("risk_free.csv", &|b| write_risk_free(b, &ds.risk_free))?;
    data("index_weights.csv", &|b| write_index_weights(b, &ds.index_weights))?;
    data("universe.txt", &|b| write_universe(b, &ds.universe))?;
    let (from, to) = ds.decision_window();
    let config = format!(
        "[data]\nbars = \"bars.csv\"\nstatements = \"statements.csv\"\nrisk_free = \"risk_free.csv\"\n\
         index_weights = \"index_weights.csv\"\nuniverse = \"universe.txt\"\n\n\
         [run]\nseed = {seed}\nfrom = {from}\nto = {to}\nout = \"out\"\n"
    );
    write_atomic(&file("config.toml"), config.as_bytes())
}
