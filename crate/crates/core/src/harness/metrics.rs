//! Aggregation of run reports into per-(route, method) metrics and report
//! emission (CSV tables plus a JSON bundle of the raw logs).

use super::{Method, RunReport, Termination};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no run reports to aggregate")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub route: String,
    pub method: Method,
    pub rs_pct: f64,
    pub ms_mean: f64,
    pub ms_std: f64,
    pub seg_dur_mean: f64,
    pub seg_dur_std: f64,
    pub fwd_mean: f64,
    pub fwd_std: f64,
    pub per_milestone_pct: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    // Population std: the reference tables report +-std over exactly the
    // per-milestone rates, not a sample estimate.
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Aggregates raw reports: per-milestone segment success rates, their
/// mean +- population std, route success rate, and segment duration /
/// forward-time statistics in seconds.
pub fn aggregate(reports: &[RunReport]) -> Result<MetricsTable, MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut cells: BTreeMap<(String, &'static str), Vec<&RunReport>> = BTreeMap::new();
    for r in reports {
        cells.entry((r.route.clone(), r.method.name())).or_default().push(r);
    }
    let mut rows = Vec::new();
    for ((route, _), runs) in cells {
        let method = runs[0].method;
        let n_groups = runs.iter().map(|r| r.segments.len()).max().unwrap_or(0);
        let mut per_milestone = Vec::with_capacity(n_groups);
        for j in 0..n_groups {
            let mut attempts = 0u64;
            let mut successes = 0u64;
            for run in &runs {
                if let Some(seg) = run.segments.get(j) {
                    attempts += 1;
                    if seg.termination == Termination::Milestone {
                        successes += 1;
                    }
                }
            }
            per_milestone.push(if attempts == 0 {
                0.0
            } else {
                100.0 * successes as f64 / attempts as f64
            });
        }
        let (ms_mean, ms_std) = mean_std(&per_milestone);
        let rs_pct =
            100.0 * runs.iter().filter(|r| r.route_success).count() as f64 / runs.len() as f64;
        let durations: Vec<f64> =
            runs.iter().flat_map(|r| r.segments.iter().map(|s| s.end_s - s.start_s)).collect();
        let forwards: Vec<f64> = runs
            .iter()
            .flat_map(|r| {
                r.segments.iter().map(move |s| s.forward_time_ticks as f64 / r.ticks_per_sec)
            })
            .collect();
        let (seg_dur_mean, seg_dur_std) = mean_std(&durations);
        let (fwd_mean, fwd_std) = mean_std(&forwards);
        rows.push(MetricsRow {
            route,
            method,
            rs_pct,
            ms_mean,
            ms_std,
            seg_dur_mean,
            seg_dur_std,
            fwd_mean,
            fwd_std,
            per_milestone_pct: per_milestone,
        });
    }
    Ok(MetricsTable { rows })
}

pub const METRICS_CSV_HEADER: &str =
    "route,method,rs_pct,ms_mean,ms_std,seg_dur_mean,seg_dur_std,fwd_mean,fwd_std";

pub fn metrics_csv(table: &MetricsTable) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for r in &table.rows {
        out.push_str(&format!(
            "{},{},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3}\n",
            r.route,
            r.method.name(),
            r.rs_pct,
            r.ms_mean,
            r.ms_std,
            r.seg_dur_mean,
            r.seg_dur_std,
            r.fwd_mean,
            r.fwd_std
        ));
    }
    out
}

pub fn milestones_csv(table: &MetricsTable) -> String {
    let max_m = table.rows.iter().map(|r| r.per_milestone_pct.len()).max().unwrap_or(0);
    let mut out = String::from("route,method");
    for j in 1..=max_m {
        out.push_str(&format!(",m{j}"));
    }
    out.push('\n');
    for r in &table.rows {
        out.push_str(&format!("{},{}", r.route, r.method.name()));
        for j in 0..max_m {
            match r.per_milestone_pct.get(j) {
                Some(v) => out.push_str(&format!(",{v:.1}")),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

/// Writes `metrics.csv`, `milestones.csv`, `metrics.json` (the table, which
/// round-trips bit-exactly) and `segments.json` (the raw log bundle).
pub fn emit_report(table: &MetricsTable, reports: &[RunReport], out_dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("metrics.csv"), metrics_csv(table))?;
    fs::write(out_dir.join("milestones.csv"), milestones_csv(table))?;
    fs::write(out_dir.join("metrics.json"), serde_json::to_string_pretty(table).unwrap())?;
    fs::write(out_dir.join("segments.json"), serde_json::to_string_pretty(reports).unwrap())?;
    Ok(())
}
