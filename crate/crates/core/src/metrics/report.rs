use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{cagr, max_drawdown, min_trl, psr, sharpe_sortino, total_return, MetricError, MomentStats, ReturnSeries};
use crate::market_data::RiskFreeSeries;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    /// Per-observation (daily) Sharpe thresholds.
    pub thresholds: Vec<f64>,
    pub confidence: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { thresholds: vec![0.0, 0.01, 0.1], confidence: 0.95 }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(MetricError::Probability(self.confidence));
        }
        Ok(())
    }
}

/// One strategy's row of the metric table. `None` marks an undefined value.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub strategy: String,
    pub total_return: Option<f64>,
    pub cagr: Option<f64>,
    pub sharpe_annualized: Option<f64>,
    pub sortino_annualized: Option<f64>,
    pub max_drawdown: f64,
    pub thresholds: Vec<f64>,
    pub psr: Vec<Option<f64>>,
    pub min_trl: Vec<Option<f64>>,
    pub confidence_level: f64,
}

impl MetricReport {
    /// Metrics of a daily equity curve, excess returns taken over `risk_free`.
    pub fn compute(
        strategy: &str,
        curve: &[(NaiveDate, f64)],
        risk_free: &RiskFreeSeries,
        cfg: &MetricsConfig,
    ) -> Result<Self, MetricError> {
        cfg.validate()?;
        let equity: Vec<f64> = curve.iter().map(|p| p.1).collect();
        let series = ReturnSeries::from_curve(curve, risk_free);
        let (sharpe, sortino) = sharpe_sortino(&series.excess);
        let stats = MomentStats::from_sample(&series.excess);
        let psr = cfg.thresholds.iter().map(|t| stats.as_ref().and_then(|s| psr(s, *t))).collect();
        let min_trl = cfg.thresholds.iter().map(|t| stats.as_ref().and_then(|s| min_trl(s, *t, cfg.confidence))).collect();
        Ok(Self {
            strategy: strategy.to_string(),
            total_return: total_return(&equity).ok(),
            cagr: cagr(&equity).ok(),
            sharpe_annualized: sharpe,
            sortino_annualized: sortino,
            max_drawdown: max_drawdown(&equity),
            thresholds: cfg.thresholds.clone(),
            psr,
            min_trl,
            confidence_level: cfg.confidence,
        })
    }
}

/// Fixed ten-decimal rendering; undefined values print as `n/a`.
pub fn format_metric(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.10}"),
        _ => "n/a".to_string(),
    }
}

fn header(thresholds: &[f64]) -> Vec<String> {
    let mut h: Vec<String> =
        ["strategy", "total_return", "cagr", "sharpe_annualized", "sortino_annualized", "max_drawdown"]
            .iter()
            .map(|s| s.to_string())
            .collect();
    h.extend(thresholds.iter().map(|t| format!("psr_{t}")));
    h.extend(thresholds.iter().map(|t| format!("min_trl_{t}")));
    h.push("confidence_level".into());
    h
}

/// One row per report. All reports must share the same thresholds.
pub fn write_metrics_csv<W: Write>(w: W, reports: &[MetricReport]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let thresholds = reports.first().map_or_else(|| MetricsConfig::default().thresholds, |r| r.thresholds.clone());
    out.write_record(header(&thresholds))?;
    for r in reports {
        let mut row = vec![
            r.strategy.clone(),
            format_metric(r.total_return),
            format_metric(r.cagr),
            format_metric(r.sharpe_annualized),
            format_metric(r.sortino_annualized),
            format_metric(Some(r.max_drawdown)),
        ];
        row.extend(r.psr.iter().map(|v| format_metric(*v)));
        row.extend(r.min_trl.iter().map(|v| format_metric(*v)));
        row.push(format_metric(Some(r.confidence_level)));
        out.write_record(row)?;
    }
    out.flush()?;
    Ok(())
}

/// JSON array of reports; undefined values are `null`.
pub fn write_metrics_json<W: Write>(w: W, reports: &[MetricReport]) -> serde_json::Result<()> {
    let rows: Vec<serde_json::Value> = reports
        .iter()
        .map(|r| {
            let mut m = serde_json::Map::new();
            m.insert("strategy".into(), r.strategy.clone().into());
            m.insert("total_return".into(), r.total_return.into());
            m.insert("cagr".into(), r.cagr.into());
            m.insert("sharpe_annualized".into(), r.sharpe_annualized.into());
            m.insert("sortino_annualized".into(), r.sortino_annualized.into());
            m.insert("max_drawdown".into(), r.max_drawdown.into());
            for (t, v) in r.thresholds.iter().zip(&r.psr) {
                m.insert(format!("psr_{t}"), (*v).into());
            }
            for (t, v) in r.thresholds.iter().zip(&r.min_trl) {
                m.insert(format!("min_trl_{t}"), (*v).into());
            }
            m.insert("confidence_level".into(), r.confidence_level.into());
            serde_json::Value::Object(m)
        })
        .collect();
    let mut w = w;
    serde_json::to_writer_pretty(&mut w, &rows)?;
    writeln!(w).map_err(serde_json::Error::io)
}

/// Threshold-by-strategy table: rows `PSR(t)` and `minTRL(t)` for each
/// threshold, one column per strategy.
pub fn write_psr_table<W: Write>(w: W, reports: &[MetricReport]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut h = vec!["metric".to_string()];
    h.extend(reports.iter().map(|r| r.strategy.clone()));
    out.write_record(&h)?;
    let thresholds = reports.first().map_or_else(Vec::new, |r| r.thresholds.clone());
    for (i, t) in thresholds.iter().enumerate() {
        let mut psr_row = vec![format!("PSR({t})")];
        psr_row.extend(reports.iter().map(|r| format_metric(r.psr[i])));
        out.write_record(&psr_row)?;
        let mut trl_row = vec![format!("minTRL({t})")];
        trl_row.extend(reports.iter().map(|r| format_metric(r.min_trl[i])));
        out.write_record(&trl_row)?;
    }
    out.flush()?;
    Ok(())
}
