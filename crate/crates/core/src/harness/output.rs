//! CSV and JSON writers. Column sets are fixed per file kind and
//! versioned by [`SCHEMA_VERSION`].

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::bench::BenchRow;
use super::heatmap::HeatmapGrid;
use super::sweep::SweepRow;
use super::{SchemeSummary, TrialRecord};
use crate::error::{Error, Result};
use crate::neural::TrainReport;
use crate::Scheme;

pub const SCHEMA_VERSION: u32 = 1;

pub const SUMMARY_COLUMNS: [&str; 7] = ["scheme", "n", "n_failed", "rmse", "mean_error", "p95_error", "max_error"];
pub const HEATMAP_COLUMNS: [&str; 5] = ["x", "y", "scheme", "mean_error", "count"];
pub const SWEEP_COLUMNS: [&str; 8] = ["tx_power_dbm", "scheme", "variant", "n", "n_failed", "rmse", "mean_error", "p95_error"];
pub const BENCH_COLUMNS: [&str; 4] = ["scheme", "n_reps", "mean_ms", "relative"];
pub const CDF_COLUMNS: [&str; 3] = ["scheme", "percent", "error"];
pub const CURVE_COLUMNS: [&str; 3] = ["epoch", "train_loss", "val_loss"];

fn num(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Per-trial columns followed by `<scheme>_x`, `_y`, `_error`, `_status`
/// for each scheme; status is `ok`, `fallback` or `failed`.
pub fn trial_columns(schemes: &[Scheme]) -> Vec<String> {
    let mut cols: Vec<String> = ["trial", "seed", "tx_power_dbm", "x_true", "y_true", "theta_hat_1", "d_hat_1", "theta_hat_2", "d_hat_2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for s in schemes {
        for f in ["x", "y", "error", "status"] {
            cols.push(format!("{}_{f}", s.name()));
        }
    }
    cols
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

pub fn write_trials_csv<W: Write>(w: W, records: &[TrialRecord], schemes: &[Scheme]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(trial_columns(schemes)).map_err(csv_err)?;
    for r in records {
        let mut row = vec![r.trial.to_string(), r.seed.to_string(), num(r.tx_power_dbm), num(r.p_true.x), num(r.p_true.y)];
        match &r.estimates {
            Some(e) => row.extend([num(e[0].theta_hat), num(e[0].d_hat), num(e[1].theta_hat), num(e[1].d_hat)]),
            None => row.extend(std::iter::repeat_n(String::new(), 4)),
        }
        for &s in schemes {
            match r.outcome(s) {
                Some(o) if o.error_m.is_some() => {
                    let p = o.p_hat.unwrap();
                    let status = if o.fallback { "fallback" } else { "ok" };
                    row.extend([num(p.x), num(p.y), opt(o.error_m), status.to_string()]);
                }
                _ => row.extend([String::new(), String::new(), String::new(), "failed".to_string()]),
            }
        }
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(w: W, summaries: &[SchemeSummary]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(SUMMARY_COLUMNS).map_err(csv_err)?;
    for s in summaries {
        let m = &s.metrics;
        out.write_record([
            s.scheme.name().to_string(),
            m.n.to_string(),
            m.n_failed.to_string(),
            num(m.rmse),
            num(m.mean_error),
            num(m.p95_error),
            num(m.max_error),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_cdf_csv<W: Write>(w: W, summaries: &[SchemeSummary]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(CDF_COLUMNS).map_err(csv_err)?;
    for s in summaries {
        for (q, e) in s.metrics.cdf.iter().enumerate() {
            out.write_record([s.scheme.name().to_string(), q.to_string(), num(*e)]).map_err(csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_heatmap_csv<W: Write>(w: W, grid: &HeatmapGrid) -> Result<()> {
    let mut out = writer(w);
    out.write_record(HEATMAP_COLUMNS).map_err(csv_err)?;
    for c in &grid.cells {
        out.write_record([num(c.x), num(c.y), c.scheme.name().to_string(), opt(c.mean_error), c.count.to_string()])
            .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(w: W, rows: &[SweepRow]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(SWEEP_COLUMNS).map_err(csv_err)?;
    for r in rows {
        let m = &r.metrics;
        out.write_record([
            num(r.tx_power_dbm),
            r.scheme.name().to_string(),
            r.variant.name().to_string(),
            m.n.to_string(),
            m.n_failed.to_string(),
            num(m.rmse),
            num(m.mean_error),
            num(m.p95_error),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_bench_csv<W: Write>(w: W, rows: &[BenchRow]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(BENCH_COLUMNS).map_err(csv_err)?;
    for r in rows {
        out.write_record([r.scheme.name().to_string(), r.n_reps.to_string(), num(r.mean_ms), num(r.relative)])
            .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_curves_csv<W: Write>(w: W, report: &TrainReport) -> Result<()> {
    let mut out = writer(w);
    out.write_record(CURVE_COLUMNS).map_err(csv_err)?;
    for (k, (t, v)) in report.train_loss.iter().zip(&report.val_loss).enumerate() {
        out.write_record([(k + 1).to_string(), num(*t), num(*v)]).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// JSON document with a fixed envelope around `data`.
#[derive(Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub schema_version: u32,
    pub kind: &'a str,
    pub config_hash: String,
    pub seed: u64,
    pub data: T,
}

pub fn write_json<W: Write, T: Serialize>(mut w: W, kind: &str, config_hash: String, seed: u64, data: T) -> Result<()> {
    let env = Envelope { schema_version: SCHEMA_VERSION, kind, config_hash, seed, data };
    serde_json::to_writer_pretty(&mut w, &env).map_err(|e| Error::Format(e.to_string()))?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn create(path: impl AsRef<Path>) -> Result<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}
