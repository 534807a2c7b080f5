use serde::{Deserialize, Serialize};

use crate::calibration::LatencyModel;
use crate::error::{Error, Result};
use crate::pipeline::{Aggregate, QueryBranches, QueryMetrics};
use crate::report::{ReportFormat, Table};

/// One operating point of a frontier report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    /// `never`, `always`, or the gate name for gated rows.
    pub policy: String,
    /// `None` for the never/always baselines.
    pub tau: Option<f64>,
    /// Percent.
    pub em: f64,
    /// Percent.
    pub f1: f64,
    pub retrieval_rate: f64,
    pub delta_latency_s: f64,
    pub mean_tokens: f64,
}

pub const REPORT_COLUMNS: [&str; 7] = [
    "policy",
    "tau",
    "em",
    "f1",
    "retrieval_rate",
    "delta_latency_s",
    "mean_tokens",
];

impl MetricRow {
    fn from_aggregate(policy: &str, tau: Option<f64>, agg: &Aggregate) -> Self {
        Self {
            policy: policy.to_string(),
            tau,
            em: agg.em,
            f1: agg.f1,
            retrieval_rate: agg.retrieval_rate,
            delta_latency_s: agg.mean_delta_latency_s,
            mean_tokens: agg.mean_tokens,
        }
    }
}

/// Re-threshold precomputed scores at every `tau` in `grid`.
///
/// Scores are never recomputed: each row only changes which recorded branch
/// a query takes.
pub fn sweep(
    branches: &[QueryBranches],
    gate_label: &str,
    grid: &[f64],
    latency: &LatencyModel,
) -> Result<Vec<MetricRow>> {
    use rayon::prelude::*;

    if grid.is_empty() {
        return Err(Error::InvalidConfig("threshold grid is empty".into()));
    }
    if grid.iter().any(|t| t.is_nan()) {
        return Err(Error::InvalidConfig("NaN in threshold grid".into()));
    }
    Ok(grid
        .par_iter()
        .map(|&tau| {
            let rows: Vec<QueryMetrics> =
                branches.iter().map(|b| b.metrics_at(tau, latency)).collect();
            MetricRow::from_aggregate(gate_label, Some(tau), &Aggregate::from_rows(&rows))
        })
        .collect())
}

/// The never- and always-retrieve rows for the same queries.
pub fn baseline_rows(branches: &[QueryBranches], latency: &LatencyModel) -> [MetricRow; 2] {
    let agg = |always: bool| {
        let rows: Vec<QueryMetrics> = branches
            .iter()
            .map(|b| b.baseline_metrics(always, latency))
            .collect();
        Aggregate::from_rows(&rows)
    };
    [
        MetricRow::from_aggregate("never", None, &agg(false)),
        MetricRow::from_aggregate("always", None, &agg(true)),
    ]
}

/// Sweep the same grid at several prefix lengths. `collect` produces the
/// branches for a given `k`.
pub fn prefix_length_ablation<F>(
    ks: &[usize],
    gate_label: &str,
    grid: &[f64],
    latency: &LatencyModel,
    mut collect: F,
) -> Result<Vec<(usize, Vec<MetricRow>)>>
where
    F: FnMut(usize) -> Result<Vec<QueryBranches>>,
{
    ks.iter()
        .map(|&k| {
            let branches = collect(k)?;
            Ok((k, sweep(&branches, gate_label, grid, latency)?))
        })
        .collect()
}

fn tau_cell(tau: Option<f64>, baseline: &str) -> String {
    match tau {
        None => baseline.to_string(),
        Some(t) => t.to_string(),
    }
}

/// Render rows as CSV (full precision, empty tau for baselines) or as a
/// markdown table (one decimal for percentages, `--` tau for baselines).
pub fn emit_report(rows: &[MetricRow], format: ReportFormat) -> String {
    let table = match format {
        ReportFormat::Csv => {
            let mut t = Table::new(REPORT_COLUMNS);
            for r in rows {
                t.push(vec![
                    r.policy.clone(),
                    tau_cell(r.tau, ""),
                    r.em.to_string(),
                    r.f1.to_string(),
                    r.retrieval_rate.to_string(),
                    r.delta_latency_s.to_string(),
                    r.mean_tokens.to_string(),
                ]);
            }
            t
        }
        ReportFormat::Md => {
            let mut t = Table::new([
                "Policy",
                "τ",
                "EM (%)",
                "F1 (%)",
                "Retrieval Rate",
                "Δ Latency (s)",
                "Mean Tokens",
            ]);
            for r in rows {
                t.push(vec![
                    r.policy.clone(),
                    tau_cell(r.tau, "--"),
                    format!("{:.1}", r.em),
                    format!("{:.1}", r.f1),
                    format!("{:.3}", r.retrieval_rate),
                    format!("{:.4}", r.delta_latency_s),
                    format!("{:.1}", r.mean_tokens),
                ]);
            }
            t
        }
    };
    table.render(format)
}

/// Parse a CSV report produced by [`emit_report`].
pub fn parse_csv_report(text: &str) -> Result<Vec<MetricRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::Format(format!("report header: {e}")))?
        .clone();
    if header.iter().ne(REPORT_COLUMNS) {
        return Err(Error::Format(format!("unexpected report columns {header:?}")));
    }
    let num = |s: &str, what: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| Error::Format(format!("bad {what} value '{s}'")))
    };
    reader
        .records()
        .map(|rec| {
            let rec = rec.map_err(|e| Error::Format(format!("report row: {e}")))?;
            Ok(MetricRow {
                policy: rec[0].to_string(),
                tau: if rec[1].is_empty() {
                    None
                } else {
                    Some(num(&rec[1], "tau")?)
                },
                em: num(&rec[2], "em")?,
                f1: num(&rec[3], "f1")?,
                retrieval_rate: num(&rec[4], "retrieval_rate")?,
                delta_latency_s: num(&rec[5], "delta_latency_s")?,
                mean_tokens: num(&rec[6], "mean_tokens")?,
            })
        })
        .collect()
}
