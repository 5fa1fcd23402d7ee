//! Delimiter-driven formula extraction.
//!
//! A formula is any substring enclosed by a recognized delimiter pair,
//! normalized by stripping all whitespace. Equality is exact string equality
//! after normalization; no algebraic canonicalization is attempted.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// A deduplicated set of whitespace-normalized formula strings.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FormulaSet(pub BTreeSet<String>);

impl FormulaSet {
    pub fn from_strs(formulas: &[&str]) -> Self {
        Self(formulas.iter().map(|f| f.to_string()).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, formula: &str) -> bool {
        self.0.contains(formula)
    }

    pub fn iter(&self) -> impl Iterator<Item = &String> {
        self.0.iter()
    }

    /// Formulas present in `self` but in none of `others`.
    pub fn difference_from_union<'a>(
        &self,
        others: impl Iterator<Item = &'a FormulaSet>,
    ) -> FormulaSet {
        let mut union = BTreeSet::new();
        for other in others {
            union.extend(other.0.iter().cloned());
        }
        FormulaSet(self.0.difference(&union).cloned().collect())
    }

    /// Jaccard distance `1 - |A ∩ B| / |A ∪ B|`; two empty sets are at
    /// distance 0.
    pub fn jaccard_distance(&self, other: &FormulaSet) -> f64 {
        let union = self.0.union(&other.0).count();
        if union == 0 {
            return 0.0;
        }
        let intersection = self.0.intersection(&other.0).count();
        1.0 - intersection as f64 / union as f64
    }
}

/// Extraction rules: ordered delimiter pairs, longest opener tried first.
#[derive(Debug, Clone)]
pub struct FormulaExtractor {
    delimiters: Vec<(String, String)>,
}

impl Default for FormulaExtractor {
    fn default() -> Self {
        Self::new(&[("\\[", "\\]"), ("$", "$"), ("[", "]")])
    }
}

impl FormulaExtractor {
    pub fn new(pairs: &[(&str, &str)]) -> Self {
        let mut delimiters: Vec<(String, String)> =
            pairs.iter().map(|(o, c)| (o.to_string(), c.to_string())).collect();
        // Longest opener first so "\[" wins over "[" at the same position.
        delimiters.sort_by(|a, b| b.0.len().cmp(&a.0.len()));
        Self { delimiters }
    }

    /// Extracts every delimited span, strips whitespace, and deduplicates.
    /// An opener with no matching closer is skipped without error.
    pub fn extract(&self, text: &str) -> FormulaSet {
        let mut set = BTreeSet::new();
        let bytes = text.as_bytes();
        let mut i = 0;
        'scan: while i < bytes.len() {
            for (open, close) in &self.delimiters {
                if text[i..].starts_with(open.as_str()) {
                    let body_start = i + open.len();
                    match text[body_start..].find(close.as_str()) {
                        Some(rel) => {
                            let inner = &text[body_start..body_start + rel];
                            let normalized: String =
                                inner.chars().filter(|c| !c.is_whitespace()).collect();
                            if !normalized.is_empty() {
                                set.insert(normalized);
                            }
                            i = body_start + rel + close.len();
                        }
                        None => {
                            // Unmatched opener: ignore its span.
                            i = body_start;
                        }
                    }
                    continue 'scan;
                }
            }
            // Advance one full character, not one byte.
            i += text[i..].chars().next().map_or(1, |c| c.len_utf8());
        }
        FormulaSet(set)
    }
}

/// Extraction with the default delimiter set.
pub fn extract_formulas(text: &str) -> FormulaSet {
    FormulaExtractor::default().extract(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_delimiters_no_formulas() {
        assert!(extract_formulas("no math here").is_empty());
    }

    #[test]
    fn normalization_deduplicates() {
        let set = extract_formulas("[ 2 + 3 ] then [2+3]");
        assert_eq!(set, FormulaSet::from_strs(&["2+3"]));
    }

    #[test]
    fn dollar_delimiters() {
        let set = extract_formulas("$a+b$ and $c$");
        assert_eq!(set, FormulaSet::from_strs(&["a+b", "c"]));
    }

    #[test]
    fn display_math_delimiters_take_priority() {
        let set = extract_formulas(r"\[ x^2 \] and [ y ]");
        assert_eq!(set, FormulaSet::from_strs(&["x^2", "y"]));
    }

    #[test]
    fn unmatched_opener_is_ignored() {
        assert!(extract_formulas("$a+b").is_empty());
        let set = extract_formulas("$a$ then [b");
        assert_eq!(set, FormulaSet::from_strs(&["a"]));
    }

    #[test]
    fn extraction_is_idempotent_under_reserialization() {
        for text in ["[ 2 + 3 ] [9*1]", "$a + b$ $c$ junk [d - e]", "[ 5 - 5 ] ANS 0"] {
            let first = extract_formulas(text);
            let reserialized: String =
                first.iter().map(|f| format!("[{f}] ")).collect::<String>();
            let second = extract_formulas(&reserialized);
            assert_eq!(first, second);
        }
    }

    #[test]
    fn jaccard_distance_bounds() {
        let a = FormulaSet::from_strs(&["x", "y"]);
        let b = FormulaSet::from_strs(&["y", "z"]);
        assert!((a.jaccard_distance(&b) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(a.jaccard_distance(&a), 0.0);
        assert_eq!(FormulaSet::default().jaccard_distance(&FormulaSet::default()), 0.0);
    }
}
