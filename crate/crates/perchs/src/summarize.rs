//! Summary statistics over metrics files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use perchs_core::metrics::MetricsRecord;

use crate::error::{CliError, Result};
use crate::output::{format_float, read_metrics};

/// Error-type metrics expected to shrink as ε decreases.
pub const CONVERGENCE_METRICS: &[&str] = &["sup_norm_diff", "hausdorff", "l2_error", "rel_l2_error", "linf_error"];

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub metric: String,
    pub epsilon: f64,
    /// Latest time at which the metric was recorded.
    pub t: f64,
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub metric: String,
    /// Means strictly decrease as ε decreases.
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    pub verdicts: Vec<Verdict>,
}

/// Per `(metric, ε)`: statistics over seeds of each seed's latest value.
pub fn summarize_records(records: &[MetricsRecord]) -> Summary {
    // (metric, ε bits) -> seed -> (t, value) at the latest t
    let mut latest: BTreeMap<(String, u64), BTreeMap<u64, (f64, f64)>> = BTreeMap::new();
    let mut order: Vec<(String, u64)> = Vec::new();
    for r in records {
        let key = (r.metric.clone(), r.epsilon.to_bits());
        if !latest.contains_key(&key) {
            order.push(key.clone());
        }
        let seeds = latest.entry(key).or_default();
        let slot = seeds.entry(r.seed).or_insert((r.t, r.value));
        if r.t >= slot.0 {
            *slot = (r.t, r.value);
        }
    }
    let mut rows: Vec<SummaryRow> = order
        .iter()
        .map(|key| {
            let seeds = &latest[key];
            let vals: Vec<f64> = seeds.values().map(|v| v.1).collect();
            let t = seeds.values().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max);
            SummaryRow {
                metric: key.0.clone(),
                epsilon: f64::from_bits(key.1),
                t,
                count: vals.len(),
                mean: vals.iter().sum::<f64>() / vals.len() as f64,
                min: vals.iter().copied().fold(f64::INFINITY, f64::min),
                max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();
    rows.sort_by(|a, b| a.metric.cmp(&b.metric).then(b.epsilon.total_cmp(&a.epsilon)));
    let mut verdicts = Vec::new();
    for name in CONVERGENCE_METRICS {
        let levels: Vec<&SummaryRow> = rows.iter().filter(|r| r.metric == *name).collect();
        if levels.len() < 2 {
            continue;
        }
        // rows are sorted by decreasing ε
        let monotone = levels.windows(2).all(|w| w[1].mean < w[0].mean);
        verdicts.push(Verdict { metric: name.to_string(), monotone });
    }
    Summary { rows, verdicts }
}

/// Reads every file (all must carry the metrics header) and summarizes the union.
pub fn summarize_files(paths: &[PathBuf]) -> Result<Summary> {
    if paths.is_empty() {
        return Err(CliError::Schema("no metrics files given".into()));
    }
    let mut all = Vec::new();
    for p in paths {
        all.extend(read_metrics(p)?);
    }
    Ok(summarize_records(&all))
}

pub fn render(summary: &Summary) -> String {
    let mut s = String::from("metric,epsilon,t,n,mean,min,max\n");
    for r in &summary.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.metric,
            format_float(r.epsilon),
            format_float(r.t),
            r.count,
            format_float(r.mean),
            format_float(r.min),
            format_float(r.max)
        );
    }
    for v in &summary.verdicts {
        let _ = writeln!(s, "{}: monotone: {}", v.metric, if v.monotone { "yes" } else { "no" });
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::output::{metrics_csv, write_file};

    #[test]
    fn single_row_is_echoed() {
        let r = MetricsRecord::new(0.25, 1, 0.5, "area", 2.0).with_experiment("e");
        let s = summarize_records(&[r]);
        assert_eq!(s.rows.len(), 1);
        let row = &s.rows[0];
        assert_eq!((row.metric.as_str(), row.epsilon, row.t, row.count), ("area", 0.25, 0.5, 1));
        assert_eq!((row.mean, row.min, row.max), (2.0, 2.0, 2.0));
        assert!(s.verdicts.is_empty());
    }

    #[test]
    fn decreasing_errors_are_monotone() {
        let rs = vec![
            MetricsRecord::new(0.25, 0, 0.5, "sup_norm_diff", 0.1),
            MetricsRecord::new(0.125, 0, 0.5, "sup_norm_diff", 0.05),
            MetricsRecord::new(0.25, 0, 0.5, "hausdorff", 0.1),
            MetricsRecord::new(0.125, 0, 0.5, "hausdorff", 0.2),
        ];
        let s = summarize_records(&rs);
        let get = |m: &str| s.verdicts.iter().find(|v| v.metric == m).unwrap().monotone;
        assert!(get("sup_norm_diff"));
        assert!(!get("hausdorff"));
        assert!(render(&s).contains("sup_norm_diff: monotone: yes"));
    }

    #[test]
    fn statistics_use_each_seeds_latest_value() {
        let rs = vec![
            MetricsRecord::new(0.25, 0, 0.0, "m", 100.0),
            MetricsRecord::new(0.25, 0, 1.0, "m", 1.0),
            MetricsRecord::new(0.25, 1, 1.0, "m", 3.0),
        ];
        let row = &summarize_records(&rs).rows[0];
        assert_eq!((row.count, row.mean, row.min, row.max), (2, 2.0, 1.0, 3.0));
    }

    #[test]
    fn mismatched_schema_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("a.csv");
        write_file(&good, &metrics_csv(&[MetricsRecord::new(0.25, 0, 0.0, "m", 1.0)])).unwrap();
        let bad = dir.path().join("b.csv");
        write_file(&bad, b"eps,value\n0.25,1\n").unwrap();
        let e = summarize_files(&[good, bad]).unwrap_err();
        assert!(matches!(e, CliError::Schema(_)));
        assert_eq!(e.exit_code(), 2);
    }
}
