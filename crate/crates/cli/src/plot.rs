//! The `plot-data` subcommand: flatten metric logs into a single CSV with
//! one column per run per field, ready for any plotting tool.

use anyhow::{bail, Result};
use divrl_core::trainer::MetricLog;

const STEP_FIELDS: [&str; 8] = [
    "mean_td",
    "mean_ed",
    "mean_entropy",
    "solve_all_rate",
    "solve_none_rate",
    "mean_response_len",
    "mean_reward",
    "lambda_used",
];
const EVAL_FIELDS: [&str; 3] = ["pass_at_1", "pass_at_k", "avg_at_k"];

fn series(log: &MetricLog, field: &str) -> Result<Vec<(usize, f64)>> {
    if STEP_FIELDS.contains(&field) {
        Ok(log
            .step_records
            .iter()
            .map(|r| {
                let v = match field {
                    "mean_td" => r.mean_td,
                    "mean_ed" => r.mean_ed,
                    "mean_entropy" => r.mean_entropy,
                    "solve_all_rate" => r.solve_all_rate,
                    "solve_none_rate" => r.solve_none_rate,
                    "mean_response_len" => r.mean_response_len,
                    "mean_reward" => r.mean_reward,
                    "lambda_used" => r.lambda_used,
                    _ => unreachable!(),
                };
                (r.step, v)
            })
            .collect())
    } else if EVAL_FIELDS.contains(&field) {
        Ok(log
            .eval_records
            .iter()
            .map(|r| {
                let v = match field {
                    "pass_at_1" => r.pass_at_1,
                    "pass_at_k" => r.pass_at_k,
                    "avg_at_k" => r.avg_at_k,
                    _ => unreachable!(),
                };
                (r.step, v)
            })
            .collect())
    } else {
        bail!(
            "unknown field '{field}'; step fields: {STEP_FIELDS:?}, eval fields: {EVAL_FIELDS:?}"
        );
    }
}

/// Step-function resample: the value at the largest step at or before `s`,
/// back-filling from the first point when the series starts later.
fn value_at(points: &[(usize, f64)], s: usize) -> f64 {
    let mut value = points[0].1;
    for &(step, v) in points {
        if step > s {
            break;
        }
        value = v;
    }
    value
}

/// Builds the CSV. Logs that share a step grid pass through exactly; mixed
/// grids are resampled onto the coarsest one.
pub fn plot_data(logs: &[(String, MetricLog)], fields: &[String]) -> Result<String> {
    if logs.is_empty() || fields.is_empty() {
        bail!("plot-data needs at least one log and one field");
    }
    let mut columns: Vec<(String, Vec<(usize, f64)>)> = Vec::new();
    for (stem, log) in logs {
        for field in fields {
            let points = series(log, field)?;
            if points.is_empty() {
                bail!("log '{stem}' has no records for field '{field}'");
            }
            columns.push((format!("{stem}.{field}"), points));
        }
    }
    let grid: Vec<usize> = columns
        .iter()
        .map(|(_, pts)| pts)
        .min_by_key(|pts| pts.len())
        .expect("at least one column")
        .iter()
        .map(|(s, _)| *s)
        .collect();

    let mut out = String::from("step");
    for (name, _) in &columns {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for &s in &grid {
        out.push_str(&s.to_string());
        for (_, pts) in &columns {
            out.push_str(&format!(",{}", value_at(pts, s)));
        }
        out.push('\n');
    }
    Ok(out)
}
