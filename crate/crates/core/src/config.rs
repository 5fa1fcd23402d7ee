//! Flat `key = value` experiment configuration files.
//!
//! Keys are either top-level run settings (`steps = 60`) or section-prefixed
//! component settings (`shaping.lambda0 = 0.1`). Lines starting with `#` are
//! comments. Every key has a default; unknown keys and unparsable values are
//! rejected with the offending key named.

use thiserror::Error;

use crate::diversity::MetricKind;
use crate::env::FilterMode;
use crate::grpo::TokenAggregation;
use crate::shaping::{ScheduleKind, ShapingMode};
use crate::trainer::ExperimentConfig;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("invalid value for '{key}': {message}")]
    InvalidValue { key: String, message: String },
    #[error("malformed line {line}: expected 'key = value'")]
    MalformedLine { line: usize },
}

fn invalid(key: &str, message: impl std::fmt::Display) -> ConfigError {
    ConfigError::InvalidValue { key: key.to_string(), message: message.to_string() }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| invalid(key, e))
}

/// Parses config text over the default configuration.
pub fn parse_experiment_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::default();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or(ConfigError::MalformedLine { line: idx + 1 })?;
        let key = key.trim();
        let value = value.trim();
        apply_key(&mut cfg, key, value)?;
    }
    Ok(cfg)
}

fn apply_key(cfg: &mut ExperimentConfig, key: &str, value: &str) -> Result<(), ConfigError> {
    match key {
        "seed" => cfg.seed = parse(key, value)?,
        "steps" => cfg.steps = parse(key, value)?,
        "queries_per_step" => cfg.queries_per_step = parse(key, value)?,
        "eval_every" => cfg.eval_every = parse(key, value)?,
        "eval_k" => cfg.eval_k = parse(key, value)?,
        "eval_temperature" => cfg.eval_temperature = parse(key, value)?,
        "prior_strength" => cfg.prior_strength = parse(key, value)?,
        "metric_kind" => cfg.metric_kind = parse::<MetricKind>(key, value)?,
        "horizon" => {
            cfg.horizon = match value {
                "full" | "none" => None,
                _ => Some(parse(key, value)?),
            }
        }
        "filter" => {
            cfg.filter = match value {
                "none" => None,
                _ => Some(parse::<FilterMode>(key, value)?),
            }
        }

        "env.max_response_len" => cfg.env.max_response_len = parse(key, value)?,
        "env.max_formula_len" => cfg.env.max_formula_len = parse(key, value)?,
        "env.n_train_queries" => cfg.env.n_train_queries = parse(key, value)?,
        "env.n_eval_queries" => cfg.env.n_eval_queries = parse(key, value)?,

        "grpo.group_size" => cfg.grpo.group_size = parse(key, value)?,
        "grpo.eps_low" => cfg.grpo.eps_low = parse(key, value)?,
        "grpo.eps_high" => cfg.grpo.eps_high = parse(key, value)?,
        "grpo.beta" => cfg.grpo.beta = parse(key, value)?,
        "grpo.std_epsilon" => cfg.grpo.std_epsilon = parse(key, value)?,
        "grpo.learning_rate" => cfg.grpo.learning_rate = parse(key, value)?,
        "grpo.temperature" => cfg.grpo.temperature = parse(key, value)?,
        "grpo.context_order" => cfg.grpo.context_order = parse(key, value)?,
        "grpo.max_log_ratio" => cfg.grpo.max_log_ratio = parse(key, value)?,
        "grpo.token_aggregation" => {
            cfg.grpo.token_aggregation = match value {
                "mean" => TokenAggregation::MeanPerRollout,
                "sum" => TokenAggregation::SumPerRollout,
                other => return Err(invalid(key, format!("expected mean or sum, got '{other}'"))),
            }
        }

        "shaping.lambda0" => cfg.shaping.lambda0 = parse(key, value)?,
        "shaping.lambda_min" => cfg.shaping.lambda_min = parse(key, value)?,
        "shaping.total_steps" => cfg.shaping.total_steps = parse(key, value)?,
        "shaping.sigma" => cfg.shaping.sigma = parse(key, value)?,
        "shaping.gamma" => cfg.shaping.gamma = parse(key, value)?,
        "shaping.length_penalty_coeff" => cfg.shaping.length_penalty_coeff = parse(key, value)?,
        "shaping.schedule" => {
            cfg.shaping.schedule_kind = match value {
                "constant" => ScheduleKind::Constant,
                "linear_decay" => ScheduleKind::LinearDecay,
                other => {
                    return Err(invalid(
                        key,
                        format!("expected constant or linear_decay, got '{other}'"),
                    ))
                }
            }
        }
        "shaping.mode" => cfg.shaping.mode = parse::<ShapingMode>(key, value)?,

        "bleu.max_order" => {
            let order: usize = parse(key, value)?;
            if order == 0 {
                return Err(invalid(key, "must be at least 1"));
            }
            cfg.bleu = crate::bleu::BleuConfig::uniform(order);
        }
        "bleu.smoothing_epsilon" => cfg.bleu.smoothing_epsilon = parse(key, value)?,

        _ => return Err(ConfigError::UnknownKey(key.to_string())),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_survive_empty_config() {
        let cfg = parse_experiment_config("# just a comment\n\n").unwrap();
        assert_eq!(cfg.steps, ExperimentConfig::default().steps);
        assert_eq!(cfg.shaping.lambda0, 0.1);
        assert_eq!(cfg.shaping.sigma, 0.65);
        assert_eq!(cfg.grpo.group_size, 8);
        assert_eq!(cfg.grpo.eps_low, 0.20);
        assert_eq!(cfg.grpo.eps_high, 0.28);
        assert_eq!(cfg.grpo.beta, 0.0);
    }

    #[test]
    fn parses_sections_and_top_level_keys() {
        let text = "\
seed = 7
steps = 12
metric_kind = ed
horizon = 8
filter = high
shaping.mode = all_with_length_penalty
shaping.schedule = linear_decay
shaping.total_steps = 12
grpo.learning_rate = 0.25
bleu.max_order = 2
env.n_eval_queries = 10
";
        let cfg = parse_experiment_config(text).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.steps, 12);
        assert_eq!(cfg.metric_kind, MetricKind::Ed);
        assert_eq!(cfg.horizon, Some(8));
        assert_eq!(cfg.filter, Some(FilterMode::High));
        assert_eq!(cfg.shaping.mode, ShapingMode::AllWithLengthPenalty);
        assert_eq!(cfg.shaping.schedule_kind, ScheduleKind::LinearDecay);
        assert_eq!(cfg.grpo.learning_rate, 0.25);
        assert_eq!(cfg.bleu.max_order, 2);
        assert_eq!(cfg.bleu.weights, vec![0.5, 0.5]);
        assert_eq!(cfg.env.n_eval_queries, 10);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = parse_experiment_config("shaping.lambda_zero = 0.1").unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey("shaping.lambda_zero".into()));
    }

    #[test]
    fn invalid_values_are_named() {
        let err = parse_experiment_config("steps = soon").unwrap_err();
        assert!(matches!(err, ConfigError::InvalidValue { ref key, .. } if key == "steps"));
        let err = parse_experiment_config("horizon = never").unwrap_err();
        assert!(matches!(err, ConfigError::InvalidValue { ref key, .. } if key == "horizon"));
    }

    #[test]
    fn malformed_lines_are_rejected() {
        let err = parse_experiment_config("steps 12").unwrap_err();
        assert_eq!(err, ConfigError::MalformedLine { line: 1 });
    }

    #[test]
    fn horizon_full_means_none() {
        assert_eq!(parse_experiment_config("horizon = full").unwrap().horizon, None);
        assert_eq!(parse_experiment_config("horizon = 4").unwrap().horizon, Some(4));
    }
}
