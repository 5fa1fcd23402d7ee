//! Brute-force reference implementations used by the test suites.
//!
//! Everything here recomputes its result from first principles, sharing no
//! code with the optimized paths it is used to cross-check. Nothing in this
//! module is called from production code.

use crate::bleu::BleuConfig;
use crate::text::TokenSequence;

/// All n-grams of `tokens`, materialized as joined strings.
fn all_ngrams(tokens: &[String], n: usize) -> Vec<String> {
    if tokens.len() < n {
        return Vec::new();
    }
    (0..=tokens.len() - n)
        .map(|start| tokens[start..start + n].join("\u{1f}"))
        .collect()
}

fn count_occurrences(grams: &[String], gram: &str) -> usize {
    grams.iter().filter(|g| g.as_str() == gram).count()
}

/// BLEU by direct enumeration: for every candidate n-gram, count occurrences
/// in candidate and reference by linear scan, clip, and apply the formula.
pub fn bleu_brute_force(
    candidate: &TokenSequence,
    reference: &TokenSequence,
    cfg: &BleuConfig,
) -> f64 {
    if candidate.is_empty() {
        return 0.0;
    }
    let unigram_hits: usize = {
        let cand = all_ngrams(candidate.tokens(), 1);
        let refr = all_ngrams(reference.tokens(), 1);
        let mut seen: Vec<&str> = Vec::new();
        let mut total = 0;
        for g in &cand {
            if seen.contains(&g.as_str()) {
                continue;
            }
            seen.push(g);
            total += count_occurrences(&cand, g).min(count_occurrences(&refr, g));
        }
        total
    };
    if unigram_hits == 0 {
        return 0.0;
    }

    let mut weighted_log = 0.0;
    for order in 1..=cfg.max_order {
        let cand = all_ngrams(candidate.tokens(), order);
        let refr = all_ngrams(reference.tokens(), order);
        let precision = if cand.is_empty() {
            cfg.smoothing_epsilon
        } else {
            let mut seen: Vec<&str> = Vec::new();
            let mut clipped = 0;
            for g in &cand {
                if seen.contains(&g.as_str()) {
                    continue;
                }
                seen.push(g);
                clipped += count_occurrences(&cand, g).min(count_occurrences(&refr, g));
            }
            (clipped as f64 / cand.len() as f64).max(cfg.smoothing_epsilon)
        };
        weighted_log += cfg.weights[order - 1] * precision.ln();
    }

    let c_len = candidate.len() as f64;
    let r_len = reference.len() as f64;
    let bp = if c_len >= r_len { 1.0 } else { (1.0 - r_len / c_len).exp() };
    bp * weighted_log.exp()
}

/// Textual diversity of each response by pairwise brute-force BLEU.
pub fn textual_diversity_brute_force(responses: &[TokenSequence], cfg: &BleuConfig) -> Vec<f64> {
    let g = responses.len();
    (0..g)
        .map(|i| {
            let sum: f64 = (0..g)
                .filter(|&j| j != i)
                .map(|j| 1.0 - bleu_brute_force(&responses[i], &responses[j], cfg))
                .sum();
            sum / (g - 1) as f64
        })
        .collect()
}

/// Equational diversity by direct membership scans over formula lists.
pub fn equational_diversity_brute_force(formula_lists: &[Vec<String>]) -> Vec<f64> {
    let g = formula_lists.len();
    (0..g)
        .map(|i| {
            let own = &formula_lists[i];
            if own.is_empty() {
                return 0.0;
            }
            let unique = own
                .iter()
                .filter(|f| {
                    (0..g).filter(|&j| j != i).all(|j| !formula_lists[j].contains(f))
                })
                .count();
            unique as f64 / own.len() as f64
        })
        .collect()
}

/// Discounted sum of stepwise potential differences along a trajectory that
/// starts at potential 0: `sum_t gamma^t (gamma * d_{t+1} - d_t)`.
pub fn telescoped_intrinsic_sum(potentials: &[f64], gamma: f64) -> f64 {
    let mut total = 0.0;
    let mut prev = 0.0;
    for (t, &next) in potentials.iter().enumerate() {
        total += gamma.powi(t as i32) * (gamma * next - prev);
        prev = next;
    }
    total
}

/// One exact Bellman backup of `q` for the given MDP tensors.
pub fn bellman_backup(
    transition: &[Vec<Vec<f64>>],
    reward: &[Vec<Vec<f64>>],
    gamma: f64,
    q: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let n_states = transition.len();
    let n_actions = transition[0].len();
    let mut out = vec![vec![0.0; n_actions]; n_states];
    for s in 0..n_states {
        for a in 0..n_actions {
            let mut total = 0.0;
            for s2 in 0..n_states {
                let best = q[s2].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                total += transition[s][a][s2] * (reward[s][a][s2] + gamma * best);
            }
            out[s][a] = total;
        }
    }
    out
}
