//! The `ablate` subcommand: run a named set of configuration arms across
//! seeds with shared query streams, then aggregate and sign-test the arms
//! against the first (reference) arm.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::Result;
use divrl_core::env::FilterMode;
use divrl_core::shaping::ShapingMode;
use divrl_core::trainer::{train, ExperimentConfig, MetricLog};
use rayon::prelude::*;

use crate::stats::{mean, pairwise_wins, sign_test_p, std_dev};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationKind {
    ShapingMode,
    Horizon,
    Filtering,
}

impl std::str::FromStr for AblationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "shaping-mode" => Ok(Self::ShapingMode),
            "horizon" => Ok(Self::Horizon),
            "filtering" => Ok(Self::Filtering),
            other => Err(format!(
                "unknown ablation '{other}' (expected shaping-mode, horizon, or filtering)"
            )),
        }
    }
}

/// One arm: a name and the config edit that defines it. The first arm of
/// each ablation is the reference for the sign tests.
pub fn arms(kind: AblationKind, base: &ExperimentConfig) -> Vec<(String, ExperimentConfig)> {
    match kind {
        AblationKind::ShapingMode => [
            ShapingMode::CorrectOnly,
            ShapingMode::All,
            ShapingMode::ErrorOnly,
            ShapingMode::AllWithLengthPenalty,
        ]
        .into_iter()
        .map(|mode| {
            let mut cfg = base.clone();
            cfg.shaping.mode = mode;
            if mode == ShapingMode::AllWithLengthPenalty
                && cfg.shaping.length_penalty_coeff == 0.0
            {
                cfg.shaping.length_penalty_coeff = 0.1;
            }
            (mode_name(mode).to_string(), cfg)
        })
        .collect(),
        AblationKind::Horizon => [("full", None), ("h8", Some(8)), ("h4", Some(4))]
            .into_iter()
            .map(|(name, horizon)| {
                let mut cfg = base.clone();
                cfg.horizon = horizon;
                (name.to_string(), cfg)
            })
            .collect(),
        AblationKind::Filtering => [("high", FilterMode::High), ("low", FilterMode::Low)]
            .into_iter()
            .map(|(name, mode)| {
                let mut cfg = base.clone();
                cfg.filter = Some(mode);
                // The filtering comparison isolates data selection.
                cfg.shaping.lambda0 = 0.0;
                cfg.shaping.lambda_min = 0.0;
                (name.to_string(), cfg)
            })
            .collect(),
    }
}

fn mode_name(mode: ShapingMode) -> &'static str {
    match mode {
        ShapingMode::CorrectOnly => "correct_only",
        ShapingMode::All => "all",
        ShapingMode::ErrorOnly => "error_only",
        ShapingMode::AllWithLengthPenalty => "all_with_length_penalty",
    }
}

/// Scalars extracted from one run for arm comparisons.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub seed: u64,
    pub final_pass_at_1: f64,
    pub final_pass_at_k: f64,
    pub end_response_len: f64,
    pub mean_solve_none: f64,
    pub mean_train_td: f64,
}

pub fn summarize_run(seed: u64, log: &MetricLog) -> RunSummary {
    let last_eval = log.eval_records.last();
    let steps = &log.step_records;
    // End-of-training length: mean over the final 5 steps for stability.
    let tail = steps.len().min(5).max(1);
    let end_response_len = if steps.is_empty() {
        0.0
    } else {
        mean(&steps[steps.len() - tail..].iter().map(|r| r.mean_response_len).collect::<Vec<_>>())
    };
    RunSummary {
        seed,
        final_pass_at_1: last_eval.map_or(0.0, |e| e.pass_at_1),
        final_pass_at_k: last_eval.map_or(0.0, |e| e.pass_at_k),
        end_response_len,
        mean_solve_none: mean(&steps.iter().map(|r| r.solve_none_rate).collect::<Vec<_>>()),
        mean_train_td: mean(&steps.iter().map(|r| r.mean_td).collect::<Vec<_>>()),
    }
}

pub struct ArmResult {
    pub name: String,
    pub runs: Vec<RunSummary>,
}

impl ArmResult {
    fn column<F: Fn(&RunSummary) -> f64>(&self, f: F) -> Vec<f64> {
        self.runs.iter().map(f).collect()
    }
}

/// Runs every (arm, seed) combination. Runs are independent and execute in
/// parallel; each run derives its randomness from its own seed only, so the
/// schedule cannot affect results.
pub fn run_ablation(
    kind: AblationKind,
    base: &ExperimentConfig,
    seeds: &[u64],
    out_dir: Option<&Path>,
) -> Result<Vec<ArmResult>> {
    let arm_list = arms(kind, base);
    let jobs: Vec<(usize, u64)> = (0..arm_list.len())
        .flat_map(|a| seeds.iter().map(move |&s| (a, s)))
        .collect();
    let outputs: Vec<(usize, u64, MetricLog)> = jobs
        .par_iter()
        .map(|&(arm_idx, seed)| {
            let mut cfg = arm_list[arm_idx].1.clone();
            cfg.seed = seed;
            let output = train(&cfg).map_err(anyhow::Error::from)?;
            Ok::<_, anyhow::Error>((arm_idx, seed, output.log))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut results: Vec<ArmResult> = arm_list
        .iter()
        .map(|(name, _)| ArmResult { name: name.clone(), runs: Vec::new() })
        .collect();
    let mut sorted = outputs;
    sorted.sort_by_key(|(a, s, _)| (*a, *s));
    for (arm_idx, seed, log) in sorted {
        if let Some(dir) = out_dir {
            fs::create_dir_all(dir)?;
            let name = &results[arm_idx].name;
            fs::write(dir.join(format!("metrics_{name}_seed{seed}.jsonl")), log.to_jsonl())?;
        }
        results[arm_idx].runs.push(summarize_run(seed, &log));
    }
    Ok(results)
}

/// Aggregate table: one row per arm, mean and standard deviation per metric.
pub fn comparison_csv(results: &[ArmResult]) -> String {
    let mut out = String::from(
        "arm,seeds,pass1_mean,pass1_std,passk_mean,passk_std,end_len_mean,end_len_std,solve_none_mean,solve_none_std,train_td_mean\n",
    );
    for arm in results {
        let p1 = arm.column(|r| r.final_pass_at_1);
        let pk = arm.column(|r| r.final_pass_at_k);
        let len = arm.column(|r| r.end_response_len);
        let none = arm.column(|r| r.mean_solve_none);
        let td = arm.column(|r| r.mean_train_td);
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            arm.name,
            arm.runs.len(),
            mean(&p1),
            std_dev(&p1),
            mean(&pk),
            std_dev(&pk),
            mean(&len),
            std_dev(&len),
            mean(&none),
            std_dev(&none),
            mean(&td),
        )
        .unwrap();
    }
    out
}

/// Sign tests of every arm against the reference (first) arm. For pass
/// metrics the reference wins on larger values; for solve-none and length it
/// wins on smaller values.
pub fn sign_test_csv(results: &[ArmResult]) -> String {
    let mut out =
        String::from("metric,reference,arm,ref_wins,arm_wins,ties,p_ref_better\n");
    if results.len() < 2 {
        return out;
    }
    let reference = &results[0];
    type Extract = (&'static str, fn(&RunSummary) -> f64, bool);
    let metrics: [Extract; 4] = [
        ("final_pass_at_k", |r| r.final_pass_at_k, true),
        ("final_pass_at_1", |r| r.final_pass_at_1, true),
        ("mean_solve_none", |r| r.mean_solve_none, false),
        ("end_response_len", |r| r.end_response_len, false),
    ];
    for arm in &results[1..] {
        for (name, extract, higher_is_better) in metrics {
            let a = reference.column(extract);
            let b = arm.column(extract);
            let (mut ref_wins, mut arm_wins, ties) = pairwise_wins(&a, &b);
            if !higher_is_better {
                std::mem::swap(&mut ref_wins, &mut arm_wins);
            }
            let p = sign_test_p(ref_wins, ref_wins + arm_wins);
            writeln!(
                out,
                "{name},{},{},{ref_wins},{arm_wins},{ties},{p}",
                reference.name, arm.name
            )
            .unwrap();
        }
    }
    out
}
