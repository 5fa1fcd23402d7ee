//! The streaming group scorer: GroupRecord lines in, ScoreRecord lines out,
//! order preserved, malformed lines reported inline without stopping the
//! stream.

use std::io::{BufRead, Write};

use divrl_core::bleu::BleuConfig;
use divrl_core::diversity::{
    equational_diversity, horizon_truncate, textual_diversity, MetricKind,
};
use divrl_core::group::ResponseGroup;
use divrl_core::shaping::{shape_group, ScheduleKind, ShapingConfig, ShapingMode};

use crate::records::{ErrorRecord, GroupRecord, ScoreRecord};

#[derive(Debug, Clone)]
pub struct ScoreOptions {
    pub metric: MetricKind,
    pub bleu_order: usize,
    pub sigma: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub mode: ShapingMode,
    pub horizon: Option<usize>,
    pub length_penalty_coeff: f64,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self {
            metric: MetricKind::Td,
            bleu_order: 4,
            sigma: 0.65,
            lambda: 0.1,
            gamma: 1.0,
            mode: ShapingMode::CorrectOnly,
            horizon: None,
            length_penalty_coeff: 0.0,
        }
    }
}

fn score_group(record: &GroupRecord, opts: &ScoreOptions) -> Result<ScoreRecord, String> {
    let texts: Vec<(&str, bool)> =
        record.responses.iter().map(|r| (r.text.as_str(), r.correct)).collect();
    let group = ResponseGroup::from_texts(&*record.query_id, &*record.query, &texts)
        .map_err(|e| e.to_string())?;

    let bleu_cfg = BleuConfig::uniform(opts.bleu_order);
    let diversity_view = match opts.horizon {
        Some(h) if h >= 1 => horizon_truncate(&group, h),
        _ => group.clone(),
    };
    let td = textual_diversity(&diversity_view, &bleu_cfg);
    let ed = equational_diversity(&diversity_view);
    let d = match opts.metric {
        MetricKind::Td => td.clone(),
        MetricKind::Ed => ed.clone(),
    };

    let shaping = ShapingConfig {
        lambda0: opts.lambda,
        lambda_min: 0.0,
        schedule_kind: ScheduleKind::Constant,
        total_steps: 1,
        sigma: opts.sigma,
        gamma: opts.gamma,
        mode: opts.mode,
        length_penalty_coeff: opts.length_penalty_coeff,
    };
    let base: Vec<f64> =
        record.responses.iter().map(|r| if r.correct { 1.0 } else { 0.0 }).collect();
    // Episode lengths come from the full (untruncated) responses.
    let lengths = group.token_lengths();
    let shaped = shape_group(&base, &d, &lengths, 0, &shaping).map_err(|e| e.to_string())?;

    Ok(ScoreRecord {
        query_id: record.query_id.clone(),
        td,
        ed,
        d,
        r_int: shaped.iter().map(|s| s.intrinsic).collect(),
        r_prime: shaped.iter().map(|s| s.combined).collect(),
    })
}

/// Scores every input line, emitting exactly one output line per input line
/// in input order. Returns the number of error records emitted.
pub fn score_stream(
    input: impl BufRead,
    mut output: impl Write,
    opts: &ScoreOptions,
) -> std::io::Result<usize> {
    let mut errors = 0;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let outcome = serde_json::from_str::<GroupRecord>(&line)
            .map_err(|e| (String::new(), e.to_string()))
            .and_then(|record| {
                score_group(&record, opts)
                    .map_err(|e| (record.query_id.clone(), e))
            });
        let rendered = match outcome {
            Ok(score) => serde_json::to_string(&score).expect("score serialization"),
            Err((query_id, error)) => {
                errors += 1;
                serde_json::to_string(&ErrorRecord { query_id, error })
                    .expect("error serialization")
            }
        };
        writeln!(output, "{rendered}")?;
    }
    Ok(errors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::ResponseEntry;

    fn run(lines: &str, opts: &ScoreOptions) -> (String, usize) {
        let mut out = Vec::new();
        let errors = score_stream(lines.as_bytes(), &mut out, opts).unwrap();
        (String::from_utf8(out).unwrap(), errors)
    }

    #[test]
    fn identical_responses_score_zero_diversity() {
        let record = GroupRecord {
            query_id: "q0".into(),
            query: "".into(),
            responses: vec![
                ResponseEntry { text: "the very same words".into(), correct: true },
                ResponseEntry { text: "the very same words".into(), correct: true },
            ],
        };
        let (out, errors) = run(&serde_json::to_string(&record).unwrap(), &ScoreOptions::default());
        assert_eq!(errors, 0);
        let score: ScoreRecord = serde_json::from_str(out.trim()).unwrap();
        assert_eq!(score.td, vec![0.0, 0.0]);
        assert_eq!(score.d, vec![0.0, 0.0]);
    }

    #[test]
    fn incorrect_groups_keep_base_rewards_in_correct_only_mode() {
        let record = GroupRecord {
            query_id: "q1".into(),
            query: "".into(),
            responses: vec![
                ResponseEntry { text: "alpha beta".into(), correct: false },
                ResponseEntry { text: "gamma delta".into(), correct: false },
            ],
        };
        let (out, _) = run(&serde_json::to_string(&record).unwrap(), &ScoreOptions::default());
        let score: ScoreRecord = serde_json::from_str(out.trim()).unwrap();
        assert_eq!(score.r_prime, vec![0.0, 0.0]);
        assert!(score.d.iter().all(|v| *v > 0.9));
    }

    #[test]
    fn malformed_lines_yield_error_records_and_processing_continues() {
        let good = serde_json::to_string(&GroupRecord {
            query_id: "q2".into(),
            query: "".into(),
            responses: vec![
                ResponseEntry { text: "a".into(), correct: false },
                ResponseEntry { text: "b".into(), correct: false },
            ],
        })
        .unwrap();
        let input = format!("not json\n{good}\n{{\"query_id\":\"tiny\",\"query\":\"\",\"responses\":[{{\"text\":\"x\",\"correct\":false}}]}}\n");
        let (out, errors) = run(&input, &ScoreOptions::default());
        assert_eq!(errors, 2);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].contains("\"error\""));
        assert!(lines[1].contains("\"q2\""));
        let err: ErrorRecord = serde_json::from_str(lines[2]).unwrap();
        assert_eq!(err.query_id, "tiny");
    }

    #[test]
    fn output_is_bit_identical_across_runs() {
        let record = GroupRecord {
            query_id: "q3".into(),
            query: "target 5".into(),
            responses: vec![
                ResponseEntry { text: "[ 2 + 3 ] ANS 5".into(), correct: true },
                ResponseEntry { text: "[ 9 - 4 ] ANS 5".into(), correct: true },
                ResponseEntry { text: "[ 9 - 4 ] ANS 5".into(), correct: false },
            ],
        };
        let line = serde_json::to_string(&record).unwrap();
        let (a, _) = run(&line, &ScoreOptions::default());
        let (b, _) = run(&line, &ScoreOptions::default());
        assert_eq!(a, b);
    }
}
