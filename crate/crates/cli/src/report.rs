//! Files written by `train` and `sweep`.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, Context, Result};

use cfloss::evaluator::MetricMap;
use cfloss::io::write_atomic;
use cfloss::MetricsReport;

pub const METRICS_HEADER: [&str; 7] = [
    "epoch",
    "loss",
    "recall@10",
    "ndcg@10",
    "recall@20",
    "ndcg@20",
    "seconds",
];

fn metric_cells(m: Option<&MetricMap>) -> [String; 4] {
    match m {
        Some(m) => [
            m.recall(10).to_string(),
            m.ndcg(10).to_string(),
            m.recall(20).to_string(),
            m.ndcg(20).to_string(),
        ],
        None => Default::default(),
    }
}

fn csv_bytes<I, R>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.into_inner().map_err(|e| anyhow!("csv buffer: {e}"))
}

/// Per-epoch CSV. With `with_seconds == false` the seconds column is left
/// empty so that repeated runs produce identical bytes.
pub fn metrics_csv(report: &MetricsReport, with_seconds: bool) -> Result<Vec<u8>> {
    let rows = report.rows.iter().map(|r| {
        let [r10, n10, r20, n20] = metric_cells(r.valid.as_ref());
        let seconds = if with_seconds { r.seconds.to_string() } else { String::new() };
        [r.epoch.to_string(), r.mean_loss.to_string(), r10, n10, r20, n20, seconds]
    });
    csv_bytes(&METRICS_HEADER, rows)
}

pub fn timing_csv(report: &MetricsReport) -> Result<Vec<u8>> {
    let rows = report
        .rows
        .iter()
        .map(|r| [r.epoch.to_string(), r.seconds.to_string()]);
    csv_bytes(&["epoch", "seconds"], rows)
}

/// `key = value` summary of a finished run.
pub fn summary_text(report: &MetricsReport) -> String {
    let opt = |v: Option<String>| v.unwrap_or_default();
    let propagation = if report.approximate { "approximate (cached per epoch)" } else { "exact" };
    let mut lines: Vec<(String, String)> = vec![
        ("converged_epoch".into(), opt(report.converged_epoch().map(|e| e.to_string()))),
        ("epochs_run".into(), report.rows.len().to_string()),
        ("stopped_early".into(), report.stopped_early.to_string()),
        ("mean_epoch_seconds".into(), report.mean_epoch_seconds().to_string()),
        ("total_seconds".into(), report.total_seconds.to_string()),
        ("propagation".into(), propagation.to_string()),
    ];
    for (prefix, m) in [("valid", report.best_valid.as_ref()), ("test", report.test.as_ref())] {
        let cells = metric_cells(m);
        for (name, cell) in ["recall@10", "ndcg@10", "recall@20", "ndcg@20"].iter().zip(cells) {
            lines.push((format!("{prefix}_{name}"), cell));
        }
    }
    lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

/// Read back a summary written by [`summary_text`].
pub fn read_summary(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect())
}

/// One row of the sweep table, built from a run summary.
pub fn sweep_row(value: &str, summary: &BTreeMap<String, String>) -> Vec<String> {
    let get = |k: &str| summary.get(k).cloned().unwrap_or_default();
    vec![
        value.to_string(),
        get("converged_epoch"),
        get("valid_recall@20"),
        get("test_recall@10"),
        get("test_ndcg@10"),
        get("test_recall@20"),
        get("test_ndcg@20"),
        get("mean_epoch_seconds"),
    ]
}

pub fn sweep_csv(grid: &str, rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let header = [
        grid,
        "converged_epoch",
        "valid_recall@20",
        "recall@10",
        "ndcg@10",
        "recall@20",
        "ndcg@20",
        "seconds_per_epoch",
    ];
    csv_bytes(&header, rows)
}

pub fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic(path, bytes).with_context(|| format!("writing {}", path.display()))
}
