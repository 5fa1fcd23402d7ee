use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context as _, Result};
use clap::{Args, Parser, Subcommand};

use divrl_cli::ablate::{comparison_csv, run_ablation, sign_test_csv, AblationKind};
use divrl_cli::plot::plot_data;
use divrl_cli::score::{score_stream, ScoreOptions};
use divrl_cli::train_run::{config_sets_seed, load_config, run_to_dir, summary_line};
use divrl_cli::verify::{run_verification, summary, VerifyOptions};
use divrl_cli::{default_seed, SEED_ENV_VAR};
use divrl_core::diversity::MetricKind;
use divrl_core::shaping::ShapingMode;
use divrl_core::trainer::MetricLog;

#[derive(Parser)]
#[command(
    name = "divrl",
    about = "Diversity-incentivized RL with verifiable rewards: score response groups, run experiments, verify shaping invariance, and export plot data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score line-delimited GroupRecord JSON from stdin (or a file) into
    /// ScoreRecord JSON on stdout.
    Score(ScoreArgs),
    /// Run one training experiment from a config file.
    Train(TrainArgs),
    /// Numerically verify optimal-policy invariance on random tabular MDPs.
    VerifyInvariance(VerifyArgs),
    /// Run a multi-arm, multi-seed comparison study.
    Ablate(AblateArgs),
    /// Flatten metric logs into a plotting-ready CSV.
    PlotData(PlotArgs),
}

#[derive(Args)]
struct ScoreArgs {
    /// Read input from a file instead of stdin.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Diversity metric for the potentials (td or ed).
    #[arg(long, default_value = "td")]
    metric: MetricKind,
    /// Maximum BLEU n-gram order.
    #[arg(long, default_value_t = 4)]
    bleu_order: usize,
    /// Intrinsic reward clip bound.
    #[arg(long, default_value_t = 0.65)]
    sigma: f64,
    /// Shaping ratio.
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    /// Discount applied along the response.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Which responses receive the bonus.
    #[arg(long, default_value = "correct_only")]
    mode: ShapingMode,
    /// Compute diversity over only the first N tokens.
    #[arg(long)]
    horizon: Option<usize>,
    /// Normalized-length penalty coefficient (all_with_length_penalty mode).
    #[arg(long, default_value_t = 0.0)]
    length_penalty_coeff: f64,
}

#[derive(Args)]
struct TrainArgs {
    /// Path to the key = value config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for metrics.jsonl, metrics.csv, and policy.json.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 200)]
    instances: usize,
    #[arg(long, default_value_t = 8)]
    max_states: usize,
    #[arg(long, default_value_t = 4)]
    max_actions: usize,
    /// Comma-separated shaping ratios cycled across instances.
    #[arg(long, default_value = "0.1,1,5", value_delimiter = ',')]
    lambdas: Vec<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Value-iteration convergence tolerance.
    #[arg(long, default_value_t = 1e-10)]
    vi_tol: f64,
    /// Maximum allowed Q-shift error.
    #[arg(long, default_value_t = 1e-6)]
    pass_threshold: f64,
    /// Run the non-potential control arm instead (succeeds when a greedy-set
    /// mismatch is detected, demonstrating the check's sensitivity).
    #[arg(long)]
    control: bool,
}

#[derive(Args)]
struct AblateArgs {
    /// Which study to run: shaping-mode, horizon, or filtering.
    #[arg(long)]
    ablation: AblationKind,
    /// Number of seeds (seed values are base_seed..base_seed+seeds).
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// First seed value.
    #[arg(long)]
    base_seed: Option<u64>,
    /// Base config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for per-run logs and comparison CSVs.
    #[arg(long, default_value = "ablation")]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    /// Metric log files (jsonl).
    #[arg(long, required = true, num_args = 1..)]
    logs: Vec<PathBuf>,
    /// Comma-separated field names.
    #[arg(long, required = true, value_delimiter = ',')]
    fields: Vec<String>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Score(args) => {
            let opts = ScoreOptions {
                metric: args.metric,
                bleu_order: args.bleu_order,
                sigma: args.sigma,
                lambda: args.lambda,
                gamma: args.gamma,
                mode: args.mode,
                horizon: args.horizon,
                length_penalty_coeff: args.length_penalty_coeff,
            };
            let stdout = io::stdout().lock();
            let errors = match args.input {
                Some(path) => {
                    let file = File::open(&path)
                        .with_context(|| format!("opening {}", path.display()))?;
                    score_stream(BufReader::new(file), stdout, &opts)?
                }
                None => score_stream(io::stdin().lock(), stdout, &opts)?,
            };
            Ok(if errors == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Train(args) => {
            let text = fs::read_to_string(&args.config)
                .with_context(|| format!("reading config {}", args.config.display()))?;
            let seed_override = args.seed.or_else(|| {
                let env_set = std::env::var(SEED_ENV_VAR).is_ok();
                (env_set && !config_sets_seed(&text)).then(default_seed)
            });
            let cfg = load_config(&args.config, seed_override)?;
            let output = run_to_dir(&cfg, &args.out)?;
            println!("{}", summary_line(&cfg, &output));
            Ok(ExitCode::SUCCESS)
        }
        Command::VerifyInvariance(args) => {
            let opts = VerifyOptions {
                instances: args.instances,
                max_states: args.max_states,
                max_actions: args.max_actions,
                lambdas: args.lambdas,
                seed: args.seed.unwrap_or_else(default_seed),
                vi_tol: args.vi_tol,
                pass_threshold: args.pass_threshold,
                control: args.control,
            };
            let reports = run_verification(&opts, io::stdout().lock())?;
            let (line, ok) = summary(&opts, &reports);
            eprintln!("{line}");
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Ablate(args) => {
            let base = match &args.config {
                Some(path) => load_config(path, None)?,
                None => divrl_core::trainer::ExperimentConfig::default(),
            };
            let base_seed = args.base_seed.unwrap_or_else(default_seed);
            let seeds: Vec<u64> = (base_seed..base_seed + args.seeds).collect();
            fs::create_dir_all(&args.out)?;
            let results = run_ablation(args.ablation, &base, &seeds, Some(&args.out))?;
            let comparison = comparison_csv(&results);
            let tests = sign_test_csv(&results);
            fs::write(args.out.join("comparison.csv"), &comparison)?;
            fs::write(args.out.join("sign_tests.csv"), &tests)?;
            print!("{comparison}");
            print!("{tests}");
            Ok(ExitCode::SUCCESS)
        }
        Command::PlotData(args) => {
            let mut logs = Vec::new();
            for path in &args.logs {
                let stem = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| path.display().to_string());
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading log {}", path.display()))?;
                logs.push((stem, MetricLog::from_jsonl(&text)?));
            }
            let csv = plot_data(&logs, &args.fields)?;
            match args.out {
                Some(path) => fs::write(path, csv)?,
                None => io::stdout().write_all(csv.as_bytes())?,
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
