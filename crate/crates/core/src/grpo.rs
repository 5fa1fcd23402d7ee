//! Group-relative policy optimization: standardized group advantages, the
//! clipped surrogate objective with asymmetric bounds, optional KL
//! regularization against a reference policy, and exact gradients for the
//! tabular softmax policy.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{context_at, Context, Policy, TokenId};

#[derive(Debug, Error, PartialEq)]
pub enum GrpoError {
    #[error("beta > 0 requires a reference policy")]
    MissingRefPolicy,
    #[error("invalid grpo config: {0}")]
    InvalidConfig(String),
}

/// How per-token surrogate terms are aggregated within one rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenAggregation {
    /// Mean over the rollout's tokens, then mean over rollouts.
    MeanPerRollout,
    /// Sum over the rollout's tokens, then mean over rollouts.
    SumPerRollout,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrpoConfig {
    /// Rollouts per query.
    pub group_size: usize,
    /// Lower clip offset on the importance ratio.
    pub eps_low: f64,
    /// Upper clip offset on the importance ratio.
    pub eps_high: f64,
    /// KL regularization coefficient.
    pub beta: f64,
    /// Below this reward standard deviation a group's advantages are zeroed.
    pub std_epsilon: f64,
    pub learning_rate: f64,
    /// Softmax temperature used for both sampling and the objective.
    pub temperature: f64,
    /// Context window of the tabular policy.
    pub context_order: usize,
    /// Clamp on `new_logprob - old_logprob` before exponentiation.
    pub max_log_ratio: f64,
    pub token_aggregation: TokenAggregation,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            eps_low: 0.20,
            eps_high: 0.28,
            beta: 0.0,
            std_epsilon: 1e-8,
            learning_rate: 1.0,
            temperature: 1.0,
            context_order: 2,
            max_log_ratio: 50.0,
            token_aggregation: TokenAggregation::MeanPerRollout,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<(), GrpoError> {
        if self.group_size < 2 {
            return Err(GrpoError::InvalidConfig("group_size must be at least 2".into()));
        }
        if self.eps_low <= 0.0 || self.eps_high <= 0.0 {
            return Err(GrpoError::InvalidConfig("clip offsets must be positive".into()));
        }
        if self.std_epsilon <= 0.0 {
            return Err(GrpoError::InvalidConfig("std_epsilon must be positive".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(GrpoError::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.temperature <= 0.0 {
            return Err(GrpoError::InvalidConfig("temperature must be positive".into()));
        }
        if self.beta < 0.0 {
            return Err(GrpoError::InvalidConfig("beta must be non-negative".into()));
        }
        Ok(())
    }
}

/// One sampled response with everything the objective needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Rollout {
    pub tokens: Vec<TokenId>,
    /// Per-token log-probabilities under the policy that generated the
    /// rollout, at the training temperature.
    pub old_logprobs: Vec<f64>,
    /// Shaped reward of the full response.
    pub reward_prime: f64,
    pub advantage: f64,
}

/// A group of rollouts for one query.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub query_target: u8,
    pub rollouts: Vec<Rollout>,
}

/// Standardized advantages `(r'_i - mu) / sigma` with the population
/// standard deviation; a group whose sigma falls below `std_epsilon` gets
/// all-zero advantages.
pub fn group_advantage(shaped_rewards: &[f64], std_epsilon: f64) -> Vec<f64> {
    let g = shaped_rewards.len() as f64;
    let mean = shaped_rewards.iter().sum::<f64>() / g;
    let variance = shaped_rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / g;
    let std = variance.sqrt();
    if std < std_epsilon {
        vec![0.0; shaped_rewards.len()]
    } else {
        shaped_rewards.iter().map(|r| (r - mean) / std).collect()
    }
}

pub const DEFAULT_MAX_LOG_RATIO: f64 = 50.0;

/// `exp(new_logprob - old_logprob)` with the exponent clamped to
/// `[-bound, bound]` to keep the ratio finite.
pub fn importance_ratio_with_bound(new_logprob: f64, old_logprob: f64, bound: f64) -> f64 {
    (new_logprob - old_logprob).clamp(-bound, bound).exp()
}

pub fn importance_ratio(new_logprob: f64, old_logprob: f64) -> f64 {
    importance_ratio_with_bound(new_logprob, old_logprob, DEFAULT_MAX_LOG_RATIO)
}

/// The clipped surrogate term
/// `min(rho * A, clip(rho, 1 - eps_low, 1 + eps_high) * A)`.
pub fn clipped_term(rho: f64, advantage: f64, eps_low: f64, eps_high: f64) -> f64 {
    let clipped = rho.clamp(1.0 - eps_low, 1.0 + eps_high);
    (rho * advantage).min(clipped * advantage)
}

/// Gradient with the same shape as the policy's logit table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolicyGradient(pub BTreeMap<Context, Vec<f64>>);

impl PolicyGradient {
    fn row_mut(&mut self, ctx: &Context, width: usize) -> &mut Vec<f64> {
        self.0.entry(ctx.clone()).or_insert_with(|| vec![0.0; width])
    }

    pub fn max_abs(&self) -> f64 {
        self.0.values().flatten().fold(0.0f64, |acc, g| acc.max(g.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.values().flatten().all(|g| g.is_finite())
    }
}

/// Objective value and its exact gradient.
#[derive(Debug, Clone)]
pub struct ObjectiveEvaluation {
    pub objective: f64,
    pub gradient: PolicyGradient,
}

/// Evaluates the clipped surrogate objective (minus `beta` times the exact
/// per-context KL against `ref_policy`) over a batch of groups, together
/// with its analytic gradient.
///
/// Tokens whose clipped branch is active contribute no gradient through the
/// importance ratio.
pub fn grpo_objective_and_gradient(
    groups: &[RolloutGroup],
    policy: &Policy,
    ref_policy: Option<&Policy>,
    cfg: &GrpoConfig,
) -> Result<ObjectiveEvaluation, GrpoError> {
    cfg.validate()?;
    if cfg.beta > 0.0 && ref_policy.is_none() {
        return Err(GrpoError::MissingRefPolicy);
    }
    let mut objective = 0.0;
    let mut gradient = PolicyGradient::default();
    if groups.is_empty() {
        return Ok(ObjectiveEvaluation { objective, gradient });
    }

    let group_weight = 1.0 / groups.len() as f64;
    let tau = cfg.temperature;

    for group in groups {
        let rollout_weight = group_weight / group.rollouts.len().max(1) as f64;
        for rollout in &group.rollouts {
            debug_assert_eq!(rollout.tokens.len(), rollout.old_logprobs.len());
            if rollout.tokens.is_empty() {
                continue;
            }
            let token_weight = match cfg.token_aggregation {
                TokenAggregation::MeanPerRollout => rollout_weight / rollout.tokens.len() as f64,
                TokenAggregation::SumPerRollout => rollout_weight,
            };
            let advantage = rollout.advantage;
            for (t, (&token, &old_lp)) in
                rollout.tokens.iter().zip(&rollout.old_logprobs).enumerate()
            {
                let ctx = context_at(group.query_target, &rollout.tokens, t, cfg.context_order);
                let needs_surrogate = advantage != 0.0;
                let needs_kl = cfg.beta > 0.0;
                if !needs_surrogate && !needs_kl {
                    continue;
                }
                let probs = policy.distribution(&ctx, tau);
                let new_lp = (probs[token as usize]).ln();

                if needs_surrogate {
                    let log_ratio = new_lp - old_lp;
                    let clamped = log_ratio.clamp(-cfg.max_log_ratio, cfg.max_log_ratio);
                    let rho = clamped.exp();
                    let unclipped = rho * advantage;
                    let clipped =
                        rho.clamp(1.0 - cfg.eps_low, 1.0 + cfg.eps_high) * advantage;
                    objective += token_weight * unclipped.min(clipped);
                    let ratio_active =
                        unclipped <= clipped && (log_ratio - clamped).abs() == 0.0;
                    if ratio_active {
                        let row = gradient.row_mut(&ctx, policy.alphabet_size);
                        let scale = token_weight * advantage * rho / tau;
                        for (b, p) in probs.iter().enumerate() {
                            row[b] -= scale * p;
                        }
                        row[token as usize] += scale;
                    }
                }

                if needs_kl {
                    let ref_probs = ref_policy
                        .expect("checked above")
                        .distribution(&ctx, tau);
                    let kl: f64 = probs
                        .iter()
                        .zip(&ref_probs)
                        .map(|(p, q)| p * (p.ln() - q.ln()))
                        .sum();
                    objective -= cfg.beta * token_weight * kl;
                    let row = gradient.row_mut(&ctx, policy.alphabet_size);
                    for (b, (p, q)) in probs.iter().zip(&ref_probs).enumerate() {
                        row[b] -= cfg.beta * token_weight * (p / tau) * ((p.ln() - q.ln()) - kl);
                    }
                }
            }
        }
    }
    Ok(ObjectiveEvaluation { objective, gradient })
}

/// One ascent step: `logits += learning_rate * gradient`.
pub fn apply_update(policy: &mut Policy, gradient: &PolicyGradient, learning_rate: f64) {
    for (ctx, grad_row) in &gradient.0 {
        let mut row = policy.row(ctx);
        for (z, g) in row.iter_mut().zip(grad_row) {
            *z += learning_rate * g;
        }
        policy.set_row(ctx.clone(), row);
    }
}
