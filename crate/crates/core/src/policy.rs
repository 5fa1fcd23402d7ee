//! A tabular autoregressive policy: a softmax over the token alphabet,
//! conditioned on the query context and the last `m` generated tokens.
//!
//! The table is small enough for exact log-probabilities, exact entropies,
//! and analytic gradients, which is what the surrounding optimizer and its
//! finite-difference checks rely on.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub type TokenId = u8;

/// Sentinel history entry for positions before the first generated token.
pub const BOS: TokenId = u8::MAX;

/// A conditioning context: the query's target plus the last `m` tokens,
/// BOS-padded on the left.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Context {
    pub target: u8,
    pub history: Vec<TokenId>,
}

/// The context in force when emitting token `t` of a response whose previous
/// tokens are `emitted[..t]`.
pub fn context_at(target: u8, emitted: &[TokenId], t: usize, order: usize) -> Context {
    let mut history = vec![BOS; order];
    for k in 0..order.min(t) {
        history[order - 1 - k] = emitted[t - 1 - k];
    }
    Context { target, history }
}

/// Logit table of the policy. Missing rows behave as all-zero logits
/// (a uniform distribution at any temperature).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub alphabet_size: usize,
    pub context_order: usize,
    pub logits: BTreeMap<Context, Vec<f64>>,
}

impl Policy {
    pub fn new(alphabet_size: usize, context_order: usize) -> Self {
        Self { alphabet_size, context_order, logits: BTreeMap::new() }
    }

    pub fn row(&self, ctx: &Context) -> Vec<f64> {
        self.logits.get(ctx).cloned().unwrap_or_else(|| vec![0.0; self.alphabet_size])
    }

    pub fn set_row(&mut self, ctx: Context, logits: Vec<f64>) {
        assert_eq!(logits.len(), self.alphabet_size);
        self.logits.insert(ctx, logits);
    }

    /// Softmax distribution at the given temperature.
    pub fn distribution(&self, ctx: &Context, temperature: f64) -> Vec<f64> {
        assert!(temperature > 0.0, "temperature must be positive");
        let row = self.row(ctx);
        let scaled: Vec<f64> = row.iter().map(|z| z / temperature).collect();
        let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scaled.iter().map(|z| (z - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.iter().map(|e| e / total).collect()
    }

    /// Exact log-probability of `token` under the softmax at `temperature`.
    pub fn log_prob(&self, ctx: &Context, token: TokenId, temperature: f64) -> f64 {
        let row = self.row(ctx);
        let scaled: Vec<f64> = row.iter().map(|z| z / temperature).collect();
        let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = (scaled.iter().map(|z| (z - max).exp()).sum::<f64>()).ln() + max;
        scaled[token as usize] - log_sum
    }

    /// Samples a token by inverse-CDF walk over the softmax probabilities.
    pub fn sample(&self, ctx: &Context, temperature: f64, rng: &mut impl Rng) -> TokenId {
        let probs = self.distribution(ctx, temperature);
        let u: f64 = rng.gen_range(0.0..1.0);
        let mut cumulative = 0.0;
        for (i, p) in probs.iter().enumerate() {
            cumulative += p;
            if u < cumulative {
                return i as TokenId;
            }
        }
        (probs.len() - 1) as TokenId
    }

    /// Shannon entropy of the context's distribution in nats.
    pub fn entropy(&self, ctx: &Context, temperature: f64) -> f64 {
        self.distribution(ctx, temperature)
            .iter()
            .filter(|p| **p > 0.0)
            .map(|p| -p * p.ln())
            .sum()
    }

    pub fn to_json(&self) -> String {
        let entries: Vec<PolicyEntry> = self
            .logits
            .iter()
            .map(|(ctx, logits)| PolicyEntry {
                target: ctx.target,
                history: ctx.history.clone(),
                logits: logits.clone(),
            })
            .collect();
        serde_json::to_string_pretty(&PolicyFile {
            alphabet_size: self.alphabet_size,
            context_order: self.context_order,
            entries,
        })
        .expect("policy serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let file: PolicyFile = serde_json::from_str(text)?;
        let mut policy = Policy::new(file.alphabet_size, file.context_order);
        for entry in file.entries {
            policy.logits.insert(
                Context { target: entry.target, history: entry.history },
                entry.logits,
            );
        }
        Ok(policy)
    }
}

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    alphabet_size: usize,
    context_order: usize,
    entries: Vec<PolicyEntry>,
}

#[derive(Serialize, Deserialize)]
struct PolicyEntry {
    target: u8,
    history: Vec<TokenId>,
    logits: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamId;

    #[test]
    fn context_at_pads_with_bos() {
        let emitted = [3u8, 7, 1];
        assert_eq!(context_at(5, &emitted, 0, 2).history, vec![BOS, BOS]);
        assert_eq!(context_at(5, &emitted, 1, 2).history, vec![BOS, 3]);
        assert_eq!(context_at(5, &emitted, 2, 2).history, vec![3, 7]);
        assert_eq!(context_at(5, &emitted, 3, 2).history, vec![7, 1]);
    }

    #[test]
    fn missing_rows_are_uniform() {
        let policy = Policy::new(4, 2);
        let ctx = context_at(0, &[], 0, 2);
        let probs = policy.distribution(&ctx, 1.0);
        assert!(probs.iter().all(|p| (p - 0.25).abs() < 1e-15));
        assert!((policy.entropy(&ctx, 1.0) - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn log_probs_are_consistent_with_distribution() {
        let mut policy = Policy::new(3, 1);
        let ctx = Context { target: 2, history: vec![BOS] };
        policy.set_row(ctx.clone(), vec![0.3, -1.2, 2.0]);
        let probs = policy.distribution(&ctx, 0.7);
        for token in 0..3u8 {
            assert!((policy.log_prob(&ctx, token, 0.7) - probs[token as usize].ln()).abs() < 1e-12);
        }
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampling_matches_probabilities() {
        let mut policy = Policy::new(2, 1);
        let ctx = Context { target: 0, history: vec![BOS] };
        policy.set_row(ctx.clone(), vec![2.0, 0.0]);
        let p0 = policy.distribution(&ctx, 1.0)[0];
        let mut rng = StreamId::new(4).rng();
        let n = 20_000;
        let hits = (0..n).filter(|_| policy.sample(&ctx, 1.0, &mut rng) == 0).count();
        let freq = hits as f64 / n as f64;
        assert!((freq - p0).abs() < 0.02, "freq {freq} vs p {p0}");
    }

    #[test]
    fn json_round_trip() {
        let mut policy = Policy::new(3, 2);
        policy.set_row(Context { target: 1, history: vec![BOS, 2] }, vec![0.1, 0.2, -0.3]);
        let restored = Policy::from_json(&policy.to_json()).unwrap();
        assert_eq!(policy, restored);
    }
}
