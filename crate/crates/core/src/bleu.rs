//! Sentence-level BLEU: clipped n-gram precision with a brevity penalty.
//!
//! The score is `BP * exp(sum_n w_n * ln p_n)` where `p_n` is the modified
//! n-gram precision of the candidate against the reference. Each `p_n` is
//! floored at a smoothing epsilon before the logarithm, orders with no
//! candidate n-grams contribute the epsilon, and a candidate with zero
//! unigram overlap scores exactly 0.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::TokenSequence;

#[derive(Debug, Error, PartialEq)]
pub enum BleuConfigError {
    #[error("max_order must be at least 1")]
    ZeroOrder,
    #[error("expected {expected} weights, got {got}")]
    WeightCount { expected: usize, got: usize },
    #[error("weights must be non-negative and sum to 1 (sum = {0})")]
    WeightSum(f64),
    #[error("smoothing_epsilon must be positive")]
    NonPositiveEpsilon,
}

/// Configuration for the BLEU score.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BleuConfig {
    /// Maximum n-gram order `N`.
    pub max_order: usize,
    /// Per-order weights `w_n`; must sum to 1.
    pub weights: Vec<f64>,
    /// Floor applied to each precision before taking logarithms.
    pub smoothing_epsilon: f64,
}

impl Default for BleuConfig {
    fn default() -> Self {
        Self::uniform(4)
    }
}

impl BleuConfig {
    /// Uniform weights over orders `1..=max_order`.
    pub fn uniform(max_order: usize) -> Self {
        let w = 1.0 / max_order.max(1) as f64;
        Self {
            max_order: max_order.max(1),
            weights: vec![w; max_order.max(1)],
            smoothing_epsilon: 1e-9,
        }
    }

    pub fn validate(&self) -> Result<(), BleuConfigError> {
        if self.max_order < 1 {
            return Err(BleuConfigError::ZeroOrder);
        }
        if self.weights.len() != self.max_order {
            return Err(BleuConfigError::WeightCount {
                expected: self.max_order,
                got: self.weights.len(),
            });
        }
        let sum: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|w| *w < 0.0) || (sum - 1.0).abs() > 1e-12 {
            return Err(BleuConfigError::WeightSum(sum));
        }
        if self.smoothing_epsilon <= 0.0 {
            return Err(BleuConfigError::NonPositiveEpsilon);
        }
        Ok(())
    }
}

/// Clipped n-gram precision as an exact ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NgramPrecision {
    /// `sum_g min(C_c(g), C_r(g))` over candidate n-grams.
    pub numerator: usize,
    /// `sum_g C_c(g)`; zero when the candidate has fewer than `n` tokens.
    pub denominator: usize,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Modified precision of order `n`: candidate n-gram counts clipped by the
/// reference counts.
pub fn modified_precision(
    candidate: &TokenSequence,
    reference: &TokenSequence,
    n: usize,
) -> NgramPrecision {
    assert!(n >= 1, "n-gram order must be at least 1");
    let cand = ngram_counts(candidate.tokens(), n);
    let refc = ngram_counts(reference.tokens(), n);
    let numerator = cand
        .iter()
        .map(|(gram, &c)| c.min(refc.get(gram).copied().unwrap_or(0)))
        .sum();
    let denominator = cand.values().sum();
    NgramPrecision { numerator, denominator }
}

/// Brevity penalty: 1 when the candidate is at least as long as the
/// reference, otherwise `exp(1 - |r|/|c|)`. An empty candidate against a
/// non-empty reference takes the limit value 0.
pub fn brevity_penalty(candidate_len: usize, reference_len: usize) -> f64 {
    if candidate_len >= reference_len {
        1.0
    } else if candidate_len == 0 {
        0.0
    } else {
        (1.0 - reference_len as f64 / candidate_len as f64).exp()
    }
}

/// BLEU score of `candidate` against `reference` in `[0, 1]`.
pub fn bleu(candidate: &TokenSequence, reference: &TokenSequence, cfg: &BleuConfig) -> f64 {
    if candidate.is_empty() {
        return 0.0;
    }
    let p1 = modified_precision(candidate, reference, 1);
    if p1.numerator == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for (i, &w) in cfg.weights.iter().enumerate() {
        let n = i + 1;
        let p = modified_precision(candidate, reference, n);
        let value = if p.denominator == 0 {
            cfg.smoothing_epsilon
        } else {
            (p.numerator as f64 / p.denominator as f64).max(cfg.smoothing_epsilon)
        };
        log_sum += w * value.ln();
    }
    brevity_penalty(candidate.len(), reference.len()) * log_sum.exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles;
    use crate::text::tokenize;
    use proptest::prelude::*;

    fn seq(tokens: &[&str]) -> TokenSequence {
        TokenSequence::from_strs(tokens)
    }

    #[test]
    fn precision_identity() {
        let s = seq(&["a", "b", "c"]);
        let p = modified_precision(&s, &s, 1);
        assert_eq!((p.numerator, p.denominator), (3, 3));
    }

    #[test]
    fn precision_clips_repeated_candidate_grams() {
        let p = modified_precision(&seq(&["a", "a"]), &seq(&["a"]), 1);
        assert_eq!((p.numerator, p.denominator), (1, 2));
    }

    #[test]
    fn precision_disjoint_bigrams() {
        let p = modified_precision(&seq(&["a", "b"]), &seq(&["c", "d"]), 2);
        assert_eq!((p.numerator, p.denominator), (0, 1));
    }

    #[test]
    fn precision_denominator_zero_for_short_candidate() {
        let p = modified_precision(&seq(&["a"]), &seq(&["a", "b"]), 2);
        assert_eq!(p.denominator, 0);
    }

    #[test]
    fn brevity_penalty_cases() {
        assert_eq!(brevity_penalty(5, 5), 1.0);
        assert_eq!(brevity_penalty(10, 5), 1.0);
        assert!((brevity_penalty(5, 10) - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(brevity_penalty(0, 3), 0.0);
        assert_eq!(brevity_penalty(0, 0), 1.0);
    }

    #[test]
    fn bleu_identity_is_one() {
        let cfg = BleuConfig::default();
        let s = tokenize("the quick brown fox jumps");
        assert!((bleu(&s, &s, &cfg) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bleu_disjoint_is_zero() {
        let cfg = BleuConfig::default();
        assert_eq!(bleu(&seq(&["a", "b", "c"]), &seq(&["x", "y", "z"]), &cfg), 0.0);
        assert_eq!(bleu(&seq(&[]), &seq(&["x"]), &cfg), 0.0);
    }

    #[test]
    fn bleu_matches_hand_value_order_two() {
        let cfg = BleuConfig::uniform(2);
        let c = seq(&["the", "cat", "sat"]);
        let r = seq(&["the", "cat", "ran"]);
        // p1 = 2/3, p2 = 1/2, BP = 1 -> sqrt(1/3)
        let expected = (1.0f64 / 3.0).sqrt();
        assert!((bleu(&c, &r, &cfg) - expected).abs() < 1e-12);
        assert!((oracles::bleu_brute_force(&c, &r, &cfg) - expected).abs() < 1e-12);
    }

    fn token_seq_strategy(max_len: usize) -> impl Strategy<Value = TokenSequence> {
        prop::collection::vec(0u8..12, 1..=max_len)
            .prop_map(|ids| TokenSequence(ids.iter().map(|i| format!("t{i}")).collect()))
    }

    proptest! {
        #[test]
        fn bleu_agrees_with_brute_force_oracle(
            c in token_seq_strategy(15),
            r in token_seq_strategy(15),
            order in 1usize..=4,
        ) {
            let cfg = BleuConfig::uniform(order);
            let fast = bleu(&c, &r, &cfg);
            let slow = oracles::bleu_brute_force(&c, &r, &cfg);
            prop_assert!((fast - slow).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&fast));
        }

        #[test]
        fn bleu_self_score_is_one_when_long_enough(c in token_seq_strategy(15)) {
            let cfg = BleuConfig::default();
            if c.len() >= cfg.max_order {
                prop_assert!((bleu(&c, &c, &cfg) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(BleuConfig::default().validate().is_ok());
        let mut bad = BleuConfig::default();
        bad.weights = vec![0.5, 0.5];
        assert!(matches!(bad.validate(), Err(BleuConfigError::WeightCount { .. })));
        let mut bad = BleuConfig::default();
        bad.weights = vec![0.5, 0.5, 0.5, 0.5];
        assert!(matches!(bad.validate(), Err(BleuConfigError::WeightSum(_))));
    }
}
