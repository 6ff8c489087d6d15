//! Metrics CSV format, per-job staging files and the deterministic reducer.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use perchs_core::metrics::MetricsRecord;

use crate::error::{CliError, Result};

pub const HEADER: [&str; 6] = ["experiment_id", "epsilon", "seed", "t", "metric", "value"];

/// 17 significant digits, so equal runs give equal bytes and values round-trip.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_rows<W: std::io::Write>(w: &mut csv::Writer<W>, records: &[MetricsRecord]) -> csv::Result<()> {
    for r in records {
        w.write_record([
            r.experiment_id.as_str(),
            &format_float(r.epsilon),
            &r.seed.to_string(),
            &format_float(r.t),
            r.metric.as_str(),
            &format_float(r.value),
        ])?;
    }
    Ok(())
}

/// Full metrics file with header.
pub fn metrics_csv(records: &[MetricsRecord]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER).expect("in-memory write");
    write_rows(&mut w, records).expect("in-memory write");
    w.into_inner().expect("in-memory flush")
}

/// Parses a metrics file, rejecting any other header.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
    let header = rdr.headers().map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(CliError::Schema(format!(
            "{}: header {:?} differs from {:?}",
            path.display(),
            header.iter().collect::<Vec<_>>(),
            HEADER
        )));
    }
    let mut out = Vec::new();
    for (n, row) in rdr.deserialize::<MetricsRecord>().enumerate() {
        let r = row.map_err(|e| CliError::Schema(format!("{} row {}: {e}", path.display(), n + 2)))?;
        out.push(r);
    }
    Ok(out)
}

/// Checks finiteness and key uniqueness.
pub fn check_records(records: &[MetricsRecord]) -> Result<()> {
    let mut seen = HashSet::new();
    for r in records {
        if !r.value.is_finite() {
            return Err(CliError::Metric(format!("{} at eps {} seed {} t {} is {}", r.metric, r.epsilon, r.seed, r.t, r.value)));
        }
        let key = (r.experiment_id.clone(), r.epsilon.to_bits(), r.seed, r.t.to_bits(), r.metric.clone());
        if !seen.insert(key) {
            return Err(CliError::Metric(format!("duplicate key {} at eps {} seed {} t {}", r.metric, r.epsilon, r.seed, r.t)));
        }
    }
    Ok(())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn staging_dir(out: &Path) -> PathBuf {
    out.join(".staging")
}

pub fn staging_path(out: &Path, job: usize) -> PathBuf {
    staging_dir(out).join(format!("job_{job:06}.csv"))
}

/// Header-less rows of one job.
pub fn write_staging(out: &Path, job: usize, records: &[MetricsRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    write_rows(&mut w, records).expect("in-memory write");
    write_file(&staging_path(out, job), &w.into_inner().expect("in-memory flush"))
}

/// Concatenates the staging files of jobs `0..jobs` in order under one header
/// into `metrics.csv` and removes the staging directory.
pub fn reduce(out: &Path, jobs: usize) -> Result<PathBuf> {
    let mut bytes = metrics_csv(&[]);
    for k in 0..jobs {
        let p = staging_path(out, k);
        bytes.extend(fs::read(&p).map_err(|e| CliError::io(&p, e))?);
    }
    let dest = out.join("metrics.csv");
    write_file(&dest, &bytes)?;
    let dir = staging_dir(out);
    fs::remove_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dest)
}
