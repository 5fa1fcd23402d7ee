//! Line-delimited JSON wire formats consumed and produced by the CLI.

use serde::{Deserialize, Serialize};

/// One scored unit on the input stream: a query and its responses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupRecord {
    pub query_id: String,
    pub query: String,
    pub responses: Vec<ResponseEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResponseEntry {
    pub text: String,
    pub correct: bool,
}

/// Per-response diversity and shaping scores, one line per input group.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub query_id: String,
    pub td: Vec<f64>,
    pub ed: Vec<f64>,
    /// Potentials of the selected metric.
    pub d: Vec<f64>,
    /// Clipped intrinsic rewards.
    pub r_int: Vec<f64>,
    /// Combined rewards after conditional shaping.
    pub r_prime: Vec<f64>,
}

/// Emitted in place of a score when a line cannot be processed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub query_id: String,
    pub error: String,
}
