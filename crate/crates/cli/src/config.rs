//! Run configuration: a TOML file read as flat dotted keys, plus
//! `key=value` overrides from the command line.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use alphax_core::engine::EngineConfig;
use alphax_core::metrics::MetricsConfig;
use alphax_core::strategy::{AlphaXConfig, IndicatorKind, TechnicalConfig};
use chrono::NaiveDate;
use toml::Value;

use crate::CliError;

pub const KNOWN_KEYS: &[&str] = &[
    "data.bars",
    "data.statements",
    "data.risk_free",
    "data.index_weights",
    "data.universe",
    "run.strategies",
    "run.from",
    "run.to",
    "run.out",
    "run.seed",
    "run.initial_capital",
    "costs.per_trade_bps",
    "forest.n_trees",
    "forest.max_depth",
    "forest.min_leaf",
    "forest.max_features",
    "forest.seed",
    "ensemble.weights",
    "reversion.window_quarters",
    "reversion.min_points",
    "alphax.max_assets",
    "alphax.growth_threshold",
    "alphax.stop_loss",
    "tech.window",
    "tech.oversold",
    "tech.overbought",
    "tech.max_positions",
    "tech.idle_cash_risk_free",
    "metrics.thresholds",
    "metrics.confidence",
];

pub const ALL_STRATEGIES: [&str; 6] = ["alphax", "rsi", "stochastic", "mfi", "selic", "nibov"];

#[derive(Debug, Clone, PartialEq)]
pub struct DataPaths {
    pub bars: PathBuf,
    pub statements: PathBuf,
    pub risk_free: PathBuf,
    pub index_weights: PathBuf,
    pub universe: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataPaths,
    pub strategies: Vec<String>,
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
    pub out: PathBuf,
    pub seed: u64,
    pub engine: EngineConfig,
    pub alphax: AlphaXConfig,
    tech: BTreeMap<String, Value>,
    pub metrics: MetricsConfig,
    /// Every key in effect after overrides, for the snapshot.
    pub effective: BTreeMap<String, Value>,
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

/// Parses the right-hand side of an override as a TOML value, falling back
/// to a bare string.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn bad(key: &str, what: &str) -> CliError {
    CliError::Config(format!("{key}: {what}"))
}

struct Keys<'a>(&'a BTreeMap<String, Value>);

impl Keys<'_> {
    fn str(&self, key: &str) -> Result<Option<String>, CliError> {
        match self.0.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(bad(key, "expected a string")),
        }
    }

    fn float(&self, key: &str) -> Result<Option<f64>, CliError> {
        match self.0.get(key) {
            None => Ok(None),
            Some(Value::Float(f)) => Ok(Some(*f)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(_) => Err(bad(key, "expected a number")),
        }
    }

    fn uint(&self, key: &str) -> Result<Option<u64>, CliError> {
        match self.0.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(_) => Err(bad(key, "expected a non-negative integer")),
        }
    }

    fn usize(&self, key: &str) -> Result<Option<usize>, CliError> {
        self.uint(key)?.map(|v| usize::try_from(v).map_err(|_| bad(key, "too large"))).transpose()
    }

    fn bool(&self, key: &str) -> Result<Option<bool>, CliError> {
        match self.0.get(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(_) => Err(bad(key, "expected true or false")),
        }
    }

    fn date(&self, key: &str) -> Result<Option<NaiveDate>, CliError> {
        match self.0.get(key) {
            None => Ok(None),
            Some(Value::Datetime(dt)) => dt.to_string().parse().map(Some).map_err(|_| bad(key, "expected YYYY-MM-DD")),
            Some(Value::String(s)) => s.parse().map(Some).map_err(|_| bad(key, "expected YYYY-MM-DD")),
            Some(_) => Err(bad(key, "expected a date")),
        }
    }

    fn floats(&self, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        match self.0.get(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::Float(f) => Ok(*f),
                    Value::Integer(i) => Ok(*i as f64),
                    _ => Err(bad(key, "expected an array of numbers")),
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
            Some(_) => Err(bad(key, "expected an array of numbers")),
        }
    }

    fn strings(&self, key: &str) -> Result<Option<Vec<String>>, CliError> {
        match self.0.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect())),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| v.as_str().map(str::to_string).ok_or_else(|| bad(key, "expected strings")))
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
            Some(_) => Err(bad(key, "expected a list of strings")),
        }
    }
}

impl RunConfig {
    /// Reads `path` and applies `overrides` (`key=value`). Data paths and
    /// `run.out` are resolved against the config file's directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base, overrides)
    }

    pub fn parse(text: &str, base: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        let mut keys = BTreeMap::new();
        flatten("", &table, &mut keys);
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| CliError::Config(format!("override {o:?} is not key=value")))?;
            keys.insert(k.trim().to_string(), parse_value(v.trim()));
        }
        let unknown: Vec<&String> = keys.keys().filter(|k| !KNOWN_KEYS.contains(&k.as_str())).collect();
        if !unknown.is_empty() {
            let list: Vec<&str> = unknown.iter().map(|s| s.as_str()).collect();
            return Err(CliError::Config(format!("unknown key(s): {}", list.join(", "))));
        }
        Self::from_keys(keys, base)
    }

    fn from_keys(keys: BTreeMap<String, Value>, base: &Path) -> Result<Self, CliError> {
        let k = Keys(&keys);
        let path = |key: &str| -> Result<PathBuf, CliError> {
            let p = k.str(key)?.ok_or_else(|| bad(key, "missing"))?;
            Ok(base.join(p))
        };
        let data = DataPaths {
            bars: path("data.bars")?,
            statements: path("data.statements")?,
            risk_free: path("data.risk_free")?,
            index_weights: path("data.index_weights")?,
            universe: path("data.universe")?,
        };

        let strategies = k.strings("run.strategies")?.unwrap_or_else(|| ALL_STRATEGIES.iter().map(|s| s.to_string()).collect());
        validate_strategies(&strategies)?;
        let from = k.date("run.from")?;
        let to = k.date("run.to")?;
        if let (Some(f), Some(t)) = (from, to) {
            if f > t {
                return Err(CliError::Config(format!("empty date range {f} .. {t}")));
            }
        }
        let out = base.join(k.str("run.out")?.unwrap_or_else(|| "out".into()));
        let seed = k.uint("run.seed")?.ok_or_else(|| bad("run.seed", "missing"))?;

        let mut engine = EngineConfig::default();
        if let Some(c) = k.float("run.initial_capital")? {
            engine.initial_capital = c;
        }
        if let Some(c) = k.float("costs.per_trade_bps")? {
            engine.cost_bps = c;
        }
        if !(engine.initial_capital.is_finite() && engine.initial_capital > 0.0) {
            return Err(bad("run.initial_capital", "must be positive"));
        }
        if !(engine.cost_bps.is_finite() && engine.cost_bps >= 0.0) {
            return Err(bad("costs.per_trade_bps", "must be >= 0"));
        }

        let mut alphax = AlphaXConfig::default();
        let v = &mut alphax.valuation;
        v.forest.seed = k.uint("forest.seed")?.unwrap_or(seed);
        if let Some(x) = k.usize("forest.n_trees")? {
            v.forest.n_trees = x;
        }
        if let Some(x) = k.usize("forest.max_depth")? {
            v.forest.max_depth = x;
        }
        if let Some(x) = k.usize("forest.min_leaf")? {
            v.forest.min_leaf = x;
        }
        v.forest.max_features = k.usize("forest.max_features")?;
        if let Some(w) = k.floats("ensemble.weights")? {
            v.ensemble_weights = w.try_into().map_err(|_| bad("ensemble.weights", "expected [forest, reversion]"))?;
        }
        if let Some(x) = k.usize("reversion.window_quarters")? {
            v.reversion_window = x;
        }
        if let Some(x) = k.usize("reversion.min_points")? {
            v.reversion_min_points = x;
        }
        if v.forest.n_trees == 0 {
            return Err(bad("forest.n_trees", "must be >= 1"));
        }
        if let Some(x) = k.usize("alphax.max_assets")? {
            alphax.max_assets = x;
        }
        if let Some(x) = k.uint("alphax.growth_threshold")? {
            alphax.growth_threshold = u8::try_from(x).map_err(|_| bad("alphax.growth_threshold", "must be 1..=5"))?;
        }
        if let Some(x) = k.float("alphax.stop_loss")? {
            alphax.stop_loss = x;
        }
        alphax.validate().map_err(|e| CliError::Config(e.to_string()))?;

        let tech: BTreeMap<String, Value> = keys.iter().filter(|(k, _)| k.starts_with("tech.")).map(|(k, v)| (k.clone(), v.clone())).collect();

        let mut metrics = MetricsConfig::default();
        if let Some(t) = k.floats("metrics.thresholds")? {
            metrics.thresholds = t;
        }
        if let Some(c) = k.float("metrics.confidence")? {
            metrics.confidence = c;
        }
        metrics.validate().map_err(|e| CliError::Config(format!("metrics.confidence: {e}")))?;

        let mut cfg = Self { data, strategies, from, to, out, seed, engine, alphax, tech, metrics, effective: keys };
        for kind in [IndicatorKind::Rsi, IndicatorKind::Stochastic, IndicatorKind::Mfi] {
            cfg.technical(kind)?.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        cfg.record_resolved();
        Ok(cfg)
    }

    fn record_resolved(&mut self) {
        let f = &self.alphax.valuation.forest;
        let mut set = |k: &str, v: Value| {
            self.effective.insert(k.to_string(), v);
        };
        let int = |x: usize| Value::Integer(x as i64);
        let floats = |xs: &[f64]| Value::Array(xs.iter().map(|x| Value::Float(*x)).collect());
        set("run.seed", Value::Integer(self.seed as i64));
        set("run.strategies", Value::Array(self.strategies.iter().cloned().map(Value::String).collect()));
        set("run.initial_capital", Value::Float(self.engine.initial_capital));
        set("costs.per_trade_bps", Value::Float(self.engine.cost_bps));
        set("forest.n_trees", int(f.n_trees));
        set("forest.max_depth", int(f.max_depth));
        set("forest.min_leaf", int(f.min_leaf));
        if let Some(m) = f.max_features {
            set("forest.max_features", int(m));
        }
        set("forest.seed", Value::Integer(f.seed as i64));
        let v = &self.alphax.valuation;
        set("ensemble.weights", floats(&v.ensemble_weights));
        set("reversion.window_quarters", int(v.reversion_window));
        set("reversion.min_points", int(v.reversion_min_points));
        set("alphax.max_assets", int(self.alphax.max_assets));
        set("alphax.growth_threshold", Value::Integer(self.alphax.growth_threshold as i64));
        set("alphax.stop_loss", Value::Float(self.alphax.stop_loss));
        set("metrics.thresholds", floats(&self.metrics.thresholds));
        set("metrics.confidence", Value::Float(self.metrics.confidence));
        self.effective.entry("run.out".into()).or_insert_with(|| Value::String("out".into()));
    }

    /// Technical settings for `kind`: its default thresholds unless
    /// `tech.*` keys override them.
    pub fn technical(&self, kind: IndicatorKind) -> Result<TechnicalConfig, CliError> {
        let k = Keys(&self.tech);
        let mut t = TechnicalConfig::new(kind);
        if let Some(x) = k.usize("tech.window")? {
            t.window = x;
        }
        if let Some(x) = k.float("tech.oversold")? {
            t.oversold = x;
        }
        if let Some(x) = k.float("tech.overbought")? {
            t.overbought = x;
        }
        if let Some(x) = k.usize("tech.max_positions")? {
            t.max_positions = x;
        }
        if let Some(x) = k.bool("tech.idle_cash_risk_free")? {
            t.idle_cash_risk_free = x;
        }
        Ok(t)
    }

    /// Applies command-line settings that have their own flags.
    pub fn apply_flags(
        &mut self,
        strategies: Option<&str>,
        from: Option<NaiveDate>,
        to: Option<NaiveDate>,
        seed: Option<u64>,
        out: Option<PathBuf>,
    ) -> Result<(), CliError> {
        if let Some(s) = strategies {
            let list: Vec<String> = s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect();
            validate_strategies(&list)?;
            self.effective.insert("run.strategies".into(), Value::Array(list.iter().cloned().map(Value::String).collect()));
            self.strategies = list;
        }
        if let Some(f) = from {
            self.from = Some(f);
            self.effective.insert("run.from".into(), Value::String(f.to_string()));
        }
        if let Some(t) = to {
            self.to = Some(t);
            self.effective.insert("run.to".into(), Value::String(t.to_string()));
        }
        if let (Some(f), Some(t)) = (self.from, self.to) {
            if f > t {
                return Err(CliError::Config(format!("empty date range {f} .. {t}")));
            }
        }
        if let Some(s) = seed {
            self.seed = s;
            self.alphax.valuation.forest.seed = s;
            self.effective.insert("run.seed".into(), Value::Integer(s as i64));
            self.effective.insert("forest.seed".into(), Value::Integer(s as i64));
        }
        if let Some(o) = out {
            self.effective.insert("run.out".into(), Value::String(o.display().to_string()));
            self.out = o;
        }
        Ok(())
    }

    /// The effective settings as a TOML document with dotted keys. Paths are
    /// kept as written.
    pub fn snapshot(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.effective {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }
}

fn validate_strategies(list: &[String]) -> Result<(), CliError> {
    if list.is_empty() {
        return Err(bad("run.strategies", "at least one strategy is required"));
    }
    for s in list {
        if !ALL_STRATEGIES.contains(&s.as_str()) {
            return Err(bad("run.strategies", &format!("unknown strategy {s:?} (expected one of {})", ALL_STRATEGIES.join(", "))));
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    if let Some(dup) = list.iter().find(|s| !seen.insert(s.as_str())) {
        return Err(bad("run.strategies", &format!("{dup} listed twice")));
    }
    Ok(())
}
