use std::io::Write;

use super::{AllocationRow, EquityPoint, LedgerEntry};

/// Allocation cell for a quarter spent entirely in the Selic sleeve.
pub const ALLOCATION_NONE: &str = "No stocks";

/// `date,asset,side,qty,price,reason,cash_after,equity_after`
pub fn write_ledger<W: Write>(w: W, ledger: &[LedgerEntry]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["date", "asset", "side", "qty", "price", "reason", "cash_after", "equity_after"])?;
    for e in ledger {
        out.write_record([
            e.date.to_string(),
            e.instrument.to_string(),
            e.side.as_str().to_string(),
            format!("{:.6}", e.quantity),
            format!("{:.6}", e.price),
            e.reason.as_str().to_string(),
            format!("{:.6}", e.cash_after),
            format!("{:.6}", e.equity_after),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `date,equity,risk_free_balance,n_positions`
pub fn write_equity<W: Write>(w: W, curve: &[EquityPoint]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["date", "equity", "risk_free_balance", "n_positions"])?;
    for p in curve {
        out.write_record([
            p.date.to_string(),
            format!("{:.6}", p.equity),
            format!("{:.6}", p.risk_free_balance),
            p.n_positions.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `quarter,assets`, e.g. `Q1 2023,CMIG4;SUZB3` or `Q4 2022,No stocks`.
pub fn write_allocations<W: Write>(w: W, rows: &[AllocationRow]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["quarter", "assets"])?;
    for r in rows {
        let assets = if r.assets.is_empty() {
            ALLOCATION_NONE.to_string()
        } else {
            r.assets.iter().map(|a| a.as_str()).collect::<Vec<_>>().join(";")
        };
        out.write_record([r.quarter.to_string(), assets])?;
    }
    out.flush()?;
    Ok(())
}
