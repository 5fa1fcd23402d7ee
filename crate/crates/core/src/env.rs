//! MULTIPATH: a desk-scale verifiable-reasoning environment.
//!
//! A query asks for a bracketed arithmetic derivation of a target digit. A
//! response is correct when it parses as one or more well-formed formulas
//! `[ e ]` followed by `ANS d`, the last formula evaluates to `d` modulo 10,
//! and `d` is the query's target. Every target admits many distinct correct
//! derivations, and the full set of correct single-formula responses is
//! exactly enumerable, so diversity ceilings and success probabilities have
//! closed forms.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bleu::BleuConfig;
use crate::diversity::{potentials, MetricKind};
use crate::group::{ResponseGroup, ResponseRecord};
use crate::policy::{context_at, Policy, TokenId};
use crate::rng::StreamId;
use crate::text::TokenSequence;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("filtering expects exactly {expected} rollouts, got {got}")]
    BadPoolSize { expected: usize, got: usize },
    #[error("invalid env config: {0}")]
    InvalidConfig(String),
}

/// Token alphabet: digits, infix operators, brackets, and the answer marker.
pub const ALPHABET: [&str; 16] = [
    "0", "1", "2", "3", "4", "5", "6", "7", "8", "9", "+", "-", "*", "[", "]", "ANS",
];

pub const PLUS: TokenId = 10;
pub const MINUS: TokenId = 11;
pub const TIMES: TokenId = 12;
pub const LBRACKET: TokenId = 13;
pub const RBRACKET: TokenId = 14;
pub const ANS: TokenId = 15;

pub fn is_digit(id: TokenId) -> bool {
    id <= 9
}

pub fn is_operator(id: TokenId) -> bool {
    id == PLUS || id == MINUS || id == TIMES
}

/// Canonical text of a token id sequence.
pub fn ids_to_text(ids: &[TokenId]) -> String {
    ids.iter().map(|&id| ALPHABET[id as usize]).collect::<Vec<_>>().join(" ")
}

pub fn ids_to_tokens(ids: &[TokenId]) -> TokenSequence {
    TokenSequence(ids.iter().map(|&id| ALPHABET[id as usize].to_string()).collect())
}

fn token_to_id(token: &str) -> Option<TokenId> {
    if token.eq_ignore_ascii_case("ANS") {
        return Some(ANS);
    }
    match token {
        "+" => Some(PLUS),
        "-" => Some(MINUS),
        "*" => Some(TIMES),
        "[" => Some(LBRACKET),
        "]" => Some(RBRACKET),
        _ => {
            if token.len() == 1 && token.as_bytes()[0].is_ascii_digit() {
                Some(token.as_bytes()[0] - b'0')
            } else {
                None
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvConfig {
    pub max_response_len: usize,
    /// Maximum formula length, in tokens, used by the enumerator.
    pub max_formula_len: usize,
    /// Size of the training query pool (0 means an unbounded fresh stream).
    pub n_train_queries: usize,
    pub n_eval_queries: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self { max_response_len: 16, max_formula_len: 5, n_train_queries: 64, n_eval_queries: 50 }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.max_response_len < self.max_formula_len + 3 {
            return Err(EnvError::InvalidConfig(format!(
                "max_response_len {} must be at least max_formula_len + 3 = {}",
                self.max_response_len,
                self.max_formula_len + 3
            )));
        }
        if self.max_formula_len == 0 {
            return Err(EnvError::InvalidConfig("max_formula_len must be positive".into()));
        }
        Ok(())
    }
}

/// One task: derive the target digit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: String,
    pub target: u8,
    pub prompt_tokens: TokenSequence,
}

/// Deterministic query source; targets are a fixed function of the query id.
#[derive(Debug, Clone)]
pub struct QueryStream {
    stream: StreamId,
    counter: u64,
}

impl QueryStream {
    pub fn new(seed: u64, purpose: u64) -> Self {
        Self { stream: StreamId::new(seed).child(0x5155_4552).child(purpose), counter: 0 }
    }

    pub fn next_query(&mut self) -> Query {
        let raw = self.stream.child(self.counter).key();
        self.counter += 1;
        let target = (raw % 10) as u8;
        Query {
            query_id: format!("q{raw:016x}"),
            target,
            prompt_tokens: TokenSequence(vec![target.to_string()]),
        }
    }

    pub fn take(&mut self, n: usize) -> Vec<Query> {
        (0..n).map(|_| self.next_query()).collect()
    }
}

/// Evaluates a flat `digit (op digit)*` token slice modulo 10, with `*`
/// binding tighter than `+` and `-`.
fn eval_formula(tokens: &[TokenId]) -> i64 {
    // Fold products as they appear, defer signed terms to a final sum.
    let mut total: i64 = 0;
    let mut sign: i64 = 1;
    let mut current = tokens[0] as i64;
    let mut i = 1;
    while i + 1 < tokens.len() {
        let operand = tokens[i + 1] as i64;
        match tokens[i] {
            TIMES => current *= operand,
            PLUS => {
                total += sign * current;
                sign = 1;
                current = operand;
            }
            MINUS => {
                total += sign * current;
                sign = -1;
                current = operand;
            }
            _ => unreachable!("parser admits only operators here"),
        }
        i += 2;
    }
    total += sign * current;
    total.rem_euclid(10)
}

fn well_formed_formula(tokens: &[TokenId]) -> bool {
    if tokens.is_empty() || tokens.len() % 2 == 0 {
        return false;
    }
    tokens.iter().enumerate().all(|(i, &id)| {
        if i % 2 == 0 {
            is_digit(id)
        } else {
            is_operator(id)
        }
    })
}

/// Parses a response as `("[" expr "]")+ "ANS" digit` and returns the value
/// of the last formula, or `None` when malformed.
fn parse_response(ids: &[TokenId]) -> Option<(i64, u8)> {
    let mut i = 0;
    let mut last_value;
    loop {
        if i >= ids.len() || ids[i] != LBRACKET {
            return None;
        }
        let close = (i + 1..ids.len()).find(|&j| ids[j] == RBRACKET)?;
        let body = &ids[i + 1..close];
        if !well_formed_formula(body) {
            return None;
        }
        last_value = eval_formula(body);
        i = close + 1;
        if i < ids.len() && ids[i] == LBRACKET {
            continue;
        }
        break;
    }
    if i + 2 != ids.len() || ids[i] != ANS || !is_digit(ids[i + 1]) {
        return None;
    }
    Some((last_value, ids[i + 1]))
}

/// Binary verification over token ids. Total: malformed input is simply 0.
pub fn verify_ids(target: u8, ids: &[TokenId]) -> bool {
    match parse_response(ids) {
        Some((value, answer)) => value == answer as i64 && answer == target,
        None => false,
    }
}

/// Binary verification over a token-string sequence. Unknown tokens make the
/// response incorrect rather than erroring; the answer marker is matched
/// case-insensitively so tokenized (lowercased) text verifies identically.
pub fn verify(query: &Query, response: &TokenSequence) -> u8 {
    let ids: Option<Vec<TokenId>> =
        response.tokens().iter().map(|t| token_to_id(t)).collect();
    match ids {
        Some(ids) if verify_ids(query.target, &ids) => 1,
        _ => 0,
    }
}

/// Every correct single-formula response within the length bounds, as
/// canonical token sequences. Deterministic; ordered by token content.
pub fn enumerate_correct(query: &Query, cfg: &EnvConfig) -> BTreeSet<TokenSequence> {
    let mut out = BTreeSet::new();
    let mut stack: Vec<Vec<TokenId>> = (0..10u8).map(|d| vec![d]).collect();
    while let Some(expr) = stack.pop() {
        if expr.len() + 4 <= cfg.max_response_len && eval_formula(&expr) == query.target as i64 {
            let mut ids = vec![LBRACKET];
            ids.extend_from_slice(&expr);
            ids.extend_from_slice(&[RBRACKET, ANS, query.target]);
            out.insert(ids_to_tokens(&ids));
        }
        if expr.len() + 2 <= cfg.max_formula_len {
            for op in [PLUS, MINUS, TIMES] {
                for digit in 0..10u8 {
                    let mut next = expr.clone();
                    next.push(op);
                    next.push(digit);
                    stack.push(next);
                }
            }
        }
    }
    out
}

/// Exact probability that a single uniform-random rollout (over the full
/// alphabet, with the standard termination rule) produces each member of
/// `enumerate_correct`: the sum of `|A|^-len` over members.
pub fn uniform_policy_success_probability(query: &Query, cfg: &EnvConfig) -> f64 {
    enumerate_correct(query, cfg)
        .iter()
        .map(|seq| (1.0 / ALPHABET.len() as f64).powi(seq.len() as i32))
        .sum()
}

/// One sampled response with its bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvRollout {
    pub tokens: Vec<TokenId>,
    pub old_logprobs: Vec<f64>,
    pub correct: bool,
}

impl EnvRollout {
    pub fn raw_text(&self) -> String {
        ids_to_text(&self.tokens)
    }
}

/// Samples `g` autoregressive responses for a query. Each rollout draws from
/// its own child stream of `stream`, so generation order cannot change the
/// result. A response terminates when a digit directly follows the answer
/// marker or at `max_response_len`.
pub fn rollout_group(
    policy: &Policy,
    query: &Query,
    g: usize,
    temperature: f64,
    cfg: &EnvConfig,
    stream: &StreamId,
) -> Vec<EnvRollout> {
    (0..g)
        .map(|i| {
            let mut rng = stream.child(i as u64).rng();
            let mut tokens: Vec<TokenId> = Vec::new();
            let mut old_logprobs = Vec::new();
            for t in 0..cfg.max_response_len {
                let ctx = context_at(query.target, &tokens, t, policy.context_order);
                let token = policy.sample(&ctx, temperature, &mut rng);
                old_logprobs.push(policy.log_prob(&ctx, token, temperature));
                tokens.push(token);
                if tokens.len() >= 2 && tokens[tokens.len() - 2] == ANS && is_digit(token) {
                    break;
                }
            }
            let correct = verify_ids(query.target, &tokens);
            EnvRollout { tokens, old_logprobs, correct }
        })
        .collect()
}

/// Which end of the diversity ranking to keep when filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterMode {
    High,
    Low,
}

impl std::str::FromStr for FilterMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "high" => Ok(FilterMode::High),
            "low" => Ok(FilterMode::Low),
            other => Err(format!("unknown filter mode '{other}' (expected high or low)")),
        }
    }
}

/// Scores a pool of `2 * keep` rollouts by their in-pool diversity potential
/// and keeps the `keep` highest (or lowest). Ties keep the lower sample
/// index. The kept rollouts preserve pool order.
pub fn filter_by_diversity(
    rollouts: &[EnvRollout],
    metric_kind: MetricKind,
    keep: usize,
    mode: FilterMode,
    bleu_cfg: &BleuConfig,
) -> Result<Vec<EnvRollout>, EnvError> {
    if rollouts.len() != 2 * keep {
        return Err(EnvError::BadPoolSize { expected: 2 * keep, got: rollouts.len() });
    }
    let pool = ResponseGroup::new(
        "pool",
        "",
        rollouts
            .iter()
            .map(|r| ResponseRecord::from_text(&r.raw_text(), r.correct))
            .collect(),
    )
    .expect("pool always has at least 2 rollouts");
    let scores = potentials(&pool, metric_kind, bleu_cfg);

    let mut order: Vec<usize> = (0..rollouts.len()).collect();
    order.sort_by(|&a, &b| {
        let by_score = match mode {
            FilterMode::High => scores[b].partial_cmp(&scores[a]).expect("scores are finite"),
            FilterMode::Low => scores[a].partial_cmp(&scores[b]).expect("scores are finite"),
        };
        by_score.then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = order.into_iter().take(keep).collect();
    kept.sort_unstable();
    Ok(kept.into_iter().map(|i| rollouts[i].clone()).collect())
}

/// A policy whose initial logits prefer grammatical continuations (brackets,
/// alternating digits and operators, the answer marker) while staying
/// uniform over which digits to use. This mirrors starting from a model
/// that writes well-formed derivations without knowing any answers.
pub fn format_prior_policy(context_order: usize, strength: f64) -> Policy {
    let mut policy = Policy::new(ALPHABET.len(), context_order);
    if strength == 0.0 {
        return policy;
    }
    let mut histories: Vec<Vec<TokenId>> = Vec::new();
    collect_histories(context_order, &mut Vec::new(), &mut histories);
    for target in 0..10u8 {
        for history in &histories {
            let row = prior_row(history, strength);
            if row.iter().any(|z| *z != 0.0) {
                policy.set_row(
                    crate::policy::Context { target, history: history.clone() },
                    row,
                );
            }
        }
    }
    policy
}

fn collect_histories(len: usize, prefix: &mut Vec<TokenId>, out: &mut Vec<Vec<TokenId>>) {
    if prefix.len() == len {
        out.push(prefix.clone());
        return;
    }
    // BOS padding is only valid as a contiguous prefix.
    let bos_allowed = prefix.iter().all(|&t| t == crate::policy::BOS);
    if bos_allowed {
        prefix.push(crate::policy::BOS);
        collect_histories(len, prefix, out);
        prefix.pop();
    }
    for id in 0..ALPHABET.len() as TokenId {
        prefix.push(id);
        collect_histories(len, prefix, out);
        prefix.pop();
    }
}

fn prior_row(history: &[TokenId], strength: f64) -> Vec<f64> {
    use crate::policy::BOS;
    let mut row = vec![0.0; ALPHABET.len()];
    let last = *history.last().expect("context order is at least 1");
    let prev = if history.len() >= 2 { history[history.len() - 2] } else { BOS };
    let mut boost = |ids: &[TokenId], amount: f64| {
        for &id in ids {
            row[id as usize] += amount;
        }
    };
    let digits: Vec<TokenId> = (0..10).collect();
    match last {
        BOS => boost(&[LBRACKET], strength),
        LBRACKET => boost(&digits, strength),
        RBRACKET => {
            boost(&[ANS], strength);
            boost(&[LBRACKET], strength * 0.5);
        }
        ANS => boost(&digits, strength),
        id if is_operator(id) => boost(&digits, strength),
        _ => {
            // After a digit: close the formula or extend it, unless the
            // digit answers the ANS marker (the episode is over there).
            if prev != ANS {
                boost(&[RBRACKET], strength);
                boost(&[PLUS, MINUS, TIMES], strength * 0.5);
            }
        }
    }
    row
}
