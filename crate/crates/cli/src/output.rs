//! CSV tables for run records, grid summaries and ROC curves.
//!
//! Reals are written with 12 significant digits in scientific notation and
//! absent values as empty fields. Timings go to a separate table so the
//! record tables are byte-identical across invocations with the same seed.

use std::fs::File;
use std::path::Path;

use irsa_lab::harness::{MeanSe, RocPoint, RunRecord, Summary};

use crate::{CliError, Result};

/// Grid coordinates of one point: `(key, value)` in axis order.
pub type Coords = Vec<(String, String)>;

/// 12 significant digits; NaN becomes an empty field.
pub fn fmt_real(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.11e}")
    }
}

/// Inverse of [`fmt_real`].
pub fn parse_real(s: &str) -> Option<f64> {
    match s {
        "" => Some(f64::NAN),
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => s.parse().ok(),
    }
}

pub const RECORD_COLUMNS: &[&str] = &[
    "run_id",
    "L",
    "M",
    "N",
    "tau",
    "cell_edge_snr_db",
    "pilot_type",
    "sic_mode",
    "uad_mode",
    "active",
    "true_pos",
    "false_pos",
    "false_neg",
    "true_neg",
    "fpr",
    "fnr",
    "nmse",
    "nmse_crb",
    "sq_error",
    "channel_energy",
    "crb_mse",
    "crb_energy",
    "uad_iterations",
    "sic_iterations",
    "decoded",
    "throughput",
];

fn record_fields(r: &RunRecord) -> Vec<String> {
    vec![
        r.run_id.to_string(),
        fmt_real(r.load),
        r.users.to_string(),
        r.antennas.to_string(),
        r.pilot_len.to_string(),
        fmt_real(r.cell_edge_snr_db),
        r.pilot_type.to_string(),
        r.sic_mode.to_string(),
        r.uad_mode.to_string(),
        r.active.to_string(),
        r.true_pos.to_string(),
        r.false_pos.to_string(),
        r.false_neg.to_string(),
        r.true_neg.to_string(),
        fmt_real(r.fpr),
        fmt_real(r.fnr),
        fmt_real(r.nmse),
        fmt_real(r.nmse_crb),
        fmt_real(r.sq_error),
        fmt_real(r.channel_energy),
        fmt_real(r.crb_mse),
        fmt_real(r.crb_energy),
        r.uad_iterations.to_string(),
        r.sic_iterations.to_string(),
        r.decoded.to_string(),
        fmt_real(r.throughput),
    ]
}

pub const SUMMARY_COLUMNS: &[&str] = &[
    "runs",
    "fpr_mean",
    "fpr_se",
    "fnr_mean",
    "fnr_se",
    "nmse",
    "nmse_crb",
    "throughput_mean",
    "throughput_se",
];

fn summary_fields(s: &Summary) -> Vec<String> {
    let ms = |m: &MeanSe| [fmt_real(m.mean), fmt_real(m.se)];
    let mut v = vec![s.runs.to_string()];
    v.extend(ms(&s.fpr));
    v.extend(ms(&s.fnr));
    v.push(fmt_real(s.nmse));
    v.push(fmt_real(s.nmse_crb));
    v.extend(ms(&s.throughput));
    v
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::Writer::from_writer(file))
}

fn header(coord_keys: &[String], rest: &[&str]) -> Vec<String> {
    coord_keys
        .iter()
        .cloned()
        .chain(rest.iter().map(|s| s.to_string()))
        .collect()
}

fn coord_keys(points: &[(Coords, Vec<RunRecord>)]) -> Vec<String> {
    points
        .first()
        .map(|(c, _)| c.iter().map(|(k, _)| k.clone()).collect())
        .unwrap_or_default()
}

fn values(c: &Coords) -> impl Iterator<Item = String> + '_ {
    c.iter().map(|(_, v)| v.clone())
}

/// One row per run, prefixed by the grid coordinates of its point.
pub fn write_records(path: &Path, points: &[(Coords, Vec<RunRecord>)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header(&coord_keys(points), RECORD_COLUMNS))?;
    for (coords, records) in points {
        for r in records {
            w.write_record(values(coords).chain(record_fields(r)))?;
        }
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// One row per grid point with means and standard errors.
pub fn write_summary(path: &Path, points: &[(Coords, Vec<RunRecord>)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header(&coord_keys(points), SUMMARY_COLUMNS))?;
    for (coords, records) in points {
        w.write_record(values(coords).chain(summary_fields(&Summary::of(records))))?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Per-run detection and decoding wall-clock times in milliseconds.
pub fn write_timings(path: &Path, points: &[(Coords, Vec<RunRecord>)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header(&coord_keys(points), &["run_id", "uad_ms", "decode_ms"]))?;
    for (coords, records) in points {
        for r in records {
            w.write_record(values(coords).chain([r.run_id.to_string(), fmt_real(r.uad_ms), fmt_real(r.decode_ms)]))?;
        }
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// ROC curves: one row per (grid point, detector, threshold).
pub fn write_roc(path: &Path, curves: &[(Coords, String, Vec<RocPoint>)]) -> Result<()> {
    let mut w = writer(path)?;
    let keys: Vec<String> = curves
        .first()
        .map(|(c, _, _)| c.iter().map(|(k, _)| k.clone()).collect())
        .unwrap_or_default();
    w.write_record(header(&keys, &["detector", "gamma_pr", "fpr", "fnr"]))?;
    for (coords, detector, points) in curves {
        for p in points {
            w.write_record(
                values(coords).chain([detector.clone(), fmt_real(p.gamma_pr), fmt_real(p.fpr), fmt_real(p.fnr)]),
            )?;
        }
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}
