//! The `train` subcommand: run one experiment from a config file and write
//! its artifacts.

use std::fs;
use std::path::Path;

use anyhow::{Context as _, Result};
use divrl_core::config::parse_experiment_config;
use divrl_core::trainer::{train, ExperimentConfig, TrainOutput};

/// Loads a config file, applying the optional seed override.
pub fn load_config(path: &Path, seed_override: Option<u64>) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut cfg = parse_experiment_config(&text)?;
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// Whether the config text explicitly sets a seed (used to decide if the
/// environment default applies).
pub fn config_sets_seed(text: &str) -> bool {
    text.lines().any(|l| {
        let l = l.trim();
        !l.starts_with('#') && l.split_once('=').is_some_and(|(k, _)| k.trim() == "seed")
    })
}

/// Runs the experiment and writes metrics.jsonl, metrics.csv, and
/// policy.json under `out_dir`. Returns the output for summary printing.
pub fn run_to_dir(cfg: &ExperimentConfig, out_dir: &Path) -> Result<TrainOutput> {
    let output = train(cfg)?;
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output dir {}", out_dir.display()))?;
    fs::write(out_dir.join("metrics.jsonl"), output.log.to_jsonl())?;
    fs::write(out_dir.join("metrics.csv"), output.log.to_csv())?;
    fs::write(out_dir.join("policy.json"), output.policy.to_json())?;
    Ok(output)
}

/// One-line run summary from the final evaluation record.
pub fn summary_line(cfg: &ExperimentConfig, output: &TrainOutput) -> String {
    match output.log.eval_records.last() {
        Some(eval) => format!(
            "steps={} final pass@1={:.4} pass@{}={:.4} avg@{}={:.4}",
            cfg.steps, eval.pass_at_1, cfg.eval_k, eval.pass_at_k, cfg.eval_k, eval.avg_at_k
        ),
        None => format!("steps={} (no evaluation records)", cfg.steps),
    }
}
