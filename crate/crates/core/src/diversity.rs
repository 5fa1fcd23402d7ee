//! Group diversity metrics: textual diversity, equational diversity, the
//! pairwise dissimilarity matrix, and per-response potentials.

use serde::{Deserialize, Serialize};

use crate::bleu::{bleu, BleuConfig};
use crate::group::{ResponseGroup, ResponseRecord};

/// Which pairwise dissimilarity the group is scored with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    /// Textual diversity: one minus pairwise BLEU.
    Td,
    /// Equational diversity: unique-formula ratio.
    Ed,
}

impl std::str::FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "td" => Ok(MetricKind::Td),
            "ed" => Ok(MetricKind::Ed),
            other => Err(format!("unknown metric kind '{other}' (expected td or ed)")),
        }
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MetricKind::Td => write!(f, "td"),
            MetricKind::Ed => write!(f, "ed"),
        }
    }
}

/// Textual diversity of each response: the mean of `1 - BLEU(o_i, o_j)` over
/// the other group members.
pub fn textual_diversity(group: &ResponseGroup, cfg: &BleuConfig) -> Vec<f64> {
    let g = group.len();
    (0..g)
        .map(|i| {
            let sum: f64 = (0..g)
                .filter(|&j| j != i)
                .map(|j| 1.0 - bleu(&group.responses[i].tokens, &group.responses[j].tokens, cfg))
                .sum();
            sum / (g - 1) as f64
        })
        .collect()
}

/// Equational diversity of each response: the fraction of its formulas that
/// appear in no other group member, or 0 for a response with no formulas.
pub fn equational_diversity(group: &ResponseGroup) -> Vec<f64> {
    let g = group.len();
    (0..g)
        .map(|i| {
            let own = &group.responses[i].formulas;
            if own.is_empty() {
                return 0.0;
            }
            let others = group
                .responses
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, r)| &r.formulas);
            own.difference_from_union(others).len() as f64 / own.len() as f64
        })
        .collect()
}

/// G x G pairwise dissimilarity matrix with per-response potentials.
///
/// For TD the potentials are the row means excluding the diagonal. For ED
/// the potentials come from the unique-formula ratio directly and the matrix
/// entries hold the symmetric Jaccard distance between formula sets, kept
/// for diagnostics only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiversityMatrix {
    pub metric_kind: MetricKind,
    pub entries: Vec<Vec<f64>>,
    pub potentials: Vec<f64>,
}

pub fn diversity_matrix(
    group: &ResponseGroup,
    metric_kind: MetricKind,
    cfg: &BleuConfig,
) -> DiversityMatrix {
    let g = group.len();
    let mut entries = vec![vec![0.0; g]; g];
    match metric_kind {
        MetricKind::Td => {
            for i in 0..g {
                for j in 0..g {
                    if i != j {
                        entries[i][j] = 1.0
                            - bleu(&group.responses[i].tokens, &group.responses[j].tokens, cfg);
                    }
                }
            }
            let potentials = entries
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    row.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| v).sum::<f64>()
                        / (g - 1) as f64
                })
                .collect();
            DiversityMatrix { metric_kind, entries, potentials }
        }
        MetricKind::Ed => {
            for i in 0..g {
                for j in 0..g {
                    if i != j {
                        entries[i][j] = group.responses[i]
                            .formulas
                            .jaccard_distance(&group.responses[j].formulas);
                    }
                }
            }
            DiversityMatrix { metric_kind, entries, potentials: equational_diversity(group) }
        }
    }
}

/// Per-response potentials `d(o_i)` for the chosen metric.
pub fn potentials(group: &ResponseGroup, metric_kind: MetricKind, cfg: &BleuConfig) -> Vec<f64> {
    match metric_kind {
        MetricKind::Td => textual_diversity(group, cfg),
        MetricKind::Ed => equational_diversity(group),
    }
}

/// Restricts every response to its first `horizon` tokens. Raw text is
/// re-serialized from the kept tokens, formula sets are re-extracted from the
/// truncated text, and correctness flags are carried over unchanged.
pub fn horizon_truncate(group: &ResponseGroup, horizon: usize) -> ResponseGroup {
    assert!(horizon >= 1, "horizon must be at least 1");
    let responses = group
        .responses
        .iter()
        .map(|r| {
            let tokens = r.tokens.truncated(horizon);
            let raw_text = tokens.joined();
            let mut truncated = ResponseRecord::from_text(&raw_text, r.correct);
            truncated.tokens = tokens;
            truncated
        })
        .collect();
    ResponseGroup {
        query_id: group.query_id.clone(),
        query_text: group.query_text.clone(),
        responses,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles;
    use proptest::prelude::*;

    fn group_of(texts: &[&str]) -> ResponseGroup {
        let with_flags: Vec<(&str, bool)> = texts.iter().map(|t| (*t, false)).collect();
        ResponseGroup::from_texts("q", "", &with_flags).unwrap()
    }

    #[test]
    fn identical_group_has_zero_td() {
        let group = group_of(&["the cat sat on the mat"; 4]);
        let td = textual_diversity(&group, &BleuConfig::default());
        assert!(td.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn disjoint_group_has_unit_td() {
        let group = group_of(&["alpha beta gamma", "delta epsilon zeta", "eta theta iota"]);
        let td = textual_diversity(&group, &BleuConfig::default());
        assert!(td.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn td_with_duplicate_pair_matches_oracle() {
        let group = group_of(&["the cat sat", "the cat sat", "dogs bark loudly"]);
        let cfg = BleuConfig::uniform(2);
        let td = textual_diversity(&group, &cfg);
        let seqs: Vec<_> = group.responses.iter().map(|r| r.tokens.clone()).collect();
        let expected = oracles::textual_diversity_brute_force(&seqs, &cfg);
        for (a, b) in td.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(td[0] < td[2]);
    }

    #[test]
    fn ed_empty_formula_set_scores_zero() {
        let group = group_of(&["no formulas at all", "[ 1 + 2 ]", "[ 3 ]"]);
        let ed = equational_diversity(&group);
        assert_eq!(ed[0], 0.0);
        assert_eq!(ed[1], 1.0);
        assert_eq!(ed[2], 1.0);
    }

    #[test]
    fn ed_hand_enumerated_case() {
        // F(o_1) = {a, b}, F(o_2) = {b, c}, F(o_3) = {d}
        let group = group_of(&["$a$ $b$", "$b$ $c$", "$d$"]);
        let ed = equational_diversity(&group);
        assert_eq!(ed, vec![0.5, 0.5, 1.0]);
    }

    #[test]
    fn td_matrix_row_means_match_potentials() {
        let group = group_of(&[
            "one two three four",
            "one two five six",
            "seven eight nine",
            "one seven three",
        ]);
        let cfg = BleuConfig::default();
        let m = diversity_matrix(&group, MetricKind::Td, &cfg);
        for i in 0..group.len() {
            assert_eq!(m.entries[i][i], 0.0);
            let mean: f64 = m.entries[i]
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, v)| v)
                .sum::<f64>()
                / (group.len() - 1) as f64;
            assert!((m.potentials[i] - mean).abs() < 1e-12);
            for v in &m.entries[i] {
                assert!((0.0..=1.0).contains(v));
            }
        }
    }

    #[test]
    fn two_disjoint_responses_give_unit_matrix() {
        let group = group_of(&["alpha beta", "gamma delta"]);
        let m = diversity_matrix(&group, MetricKind::Td, &BleuConfig::default());
        assert_eq!(m.entries[0][1], 1.0);
        assert_eq!(m.entries[1][0], 1.0);
        assert_eq!(m.potentials, vec![1.0, 1.0]);
    }

    #[test]
    fn ed_matrix_uses_jaccard_entries_and_ed_potentials() {
        let group = group_of(&["$a$ $b$", "$b$ $c$", "$d$"]);
        let m = diversity_matrix(&group, MetricKind::Ed, &BleuConfig::default());
        assert!((m.entries[0][1] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.entries[0][2], 1.0);
        assert_eq!(m.potentials, vec![0.5, 0.5, 1.0]);
    }

    #[test]
    fn horizon_truncation_preserves_correctness_and_reextracts() {
        let group = ResponseGroup::from_texts(
            "q",
            "",
            &[("[ 2 + 3 ] ANS 5", true), ("[ 9 ] ANS 9 trailing words", false)],
        )
        .unwrap();
        let truncated = horizon_truncate(&group, 5);
        assert!(truncated.responses.iter().all(|r| r.tokens.len() <= 5));
        assert_eq!(truncated.correctness(), vec![true, false]);
        // "[ 2 + 3 ]" keeps its formula; "[ 9 ] ans 9" keeps "9".
        assert!(truncated.responses[0].formulas.contains("2+3"));
        assert!(truncated.responses[1].formulas.contains("9"));

        let unchanged = horizon_truncate(&group, 100);
        assert_eq!(unchanged.responses[0].tokens, group.responses[0].tokens);

        let one = horizon_truncate(&group, 1);
        assert!(one.responses.iter().all(|r| r.tokens.len() == 1));
    }

    proptest! {
        #[test]
        fn td_and_ed_stay_in_unit_interval_and_permute_with_group(
            texts in prop::collection::vec("[a-d ]{0,16}", 2..6),
            rotate in 0usize..6,
        ) {
            let refs: Vec<(&str, bool)> = texts.iter().map(|t| (t.as_str(), false)).collect();
            let group = ResponseGroup::from_texts("q", "", &refs).unwrap();
            let cfg = BleuConfig::uniform(2);
            let td = textual_diversity(&group, &cfg);
            let ed = equational_diversity(&group);
            prop_assert!(td.iter().chain(ed.iter()).all(|v| (0.0..=1.0).contains(v)));

            let k = rotate % texts.len();
            let mut rotated = group.clone();
            rotated.responses.rotate_left(k);
            let td_rot = textual_diversity(&rotated, &cfg);
            let ed_rot = equational_diversity(&rotated);
            for i in 0..texts.len() {
                prop_assert!((td_rot[i] - td[(i + k) % texts.len()]).abs() < 1e-12);
                prop_assert!((ed_rot[i] - ed[(i + k) % texts.len()]).abs() < 1e-12);
            }
        }
    }
}
