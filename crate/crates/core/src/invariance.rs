//! Numerical certification that potential-based shaping preserves the
//! optimal-policy set.
//!
//! Shaping a tabular MDP with `R'(s,a,s') = R(s,a,s') + lambda * (gamma *
//! d(s') - d(s))` shifts the optimal Q-function by exactly `-lambda * d(s)`,
//! leaving per-state greedy action sets unchanged. The verifier solves both
//! MDPs by value iteration and checks the shift identity and greedy-set
//! equality directly.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::mdp::{finite_horizon_q, value_iteration, QTable, TabularMdp};
use crate::rng::StreamId;

/// A real-valued state potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potential(pub Vec<f64>);

impl Potential {
    /// Uniform draws in [-1, 1], deterministic given the seed.
    pub fn random(seed: u64, n_states: usize) -> Self {
        let mut rng = StreamId::new(seed).child(0x504f_5445).rng();
        Self((0..n_states).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }
}

/// Outcome of one invariance check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    /// `max_{s,a} |Q'_{M'}(s,a) - (Q'_M(s,a) - lambda * d(s))|`.
    pub q_shift_max_error: f64,
    /// Whether every state's greedy action set matches between the MDPs.
    pub greedy_sets_equal: bool,
    /// Value-iteration sweeps used (the larger of the two runs).
    pub iterations: usize,
    /// Whether both value-iteration runs converged.
    pub converged: bool,
}

/// The shaped MDP `M'`: rewards augmented with the potential difference,
/// transitions and discount unchanged.
pub fn shaped_mdp(mdp: &TabularMdp, d: &Potential, lambda: f64) -> TabularMdp {
    assert_eq!(d.0.len(), mdp.n_states, "potential length must match state count");
    let mut shaped = mdp.clone();
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            for s2 in 0..mdp.n_states {
                shaped.reward[s][a][s2] += lambda * (mdp.gamma * d.0[s2] - d.0[s]);
            }
        }
    }
    shaped
}

/// Actions within `tie_tolerance` of the per-state maximum.
pub fn greedy_set(q_row: &[f64], tie_tolerance: f64) -> Vec<usize> {
    let best = q_row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    q_row
        .iter()
        .enumerate()
        .filter(|(_, v)| **v >= best - tie_tolerance)
        .map(|(a, _)| a)
        .collect()
}

fn greedy_sets_match(qa: &QTable, qb: &QTable, tie_tolerance: f64) -> bool {
    qa.q.iter()
        .zip(&qb.q)
        .all(|(ra, rb)| greedy_set(ra, tie_tolerance) == greedy_set(rb, tie_tolerance))
}

pub const DEFAULT_TIE_TOLERANCE: f64 = 1e-8;

/// Solves `M` and the shaped `M'` independently and reports the Q-shift
/// error and greedy-set agreement. Non-convergence is reported, not raised.
pub fn verify_invariance(
    mdp: &TabularMdp,
    d: &Potential,
    lambda: f64,
    tol: f64,
) -> VerificationReport {
    let max_iter = 200_000;
    let base = value_iteration(mdp, tol, max_iter);
    let shaped = value_iteration(&shaped_mdp(mdp, d, lambda), tol, max_iter);

    let mut q_shift_max_error: f64 = 0.0;
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let expected = base.q[s][a] - lambda * d.0[s];
            q_shift_max_error = q_shift_max_error.max((shaped.q[s][a] - expected).abs());
        }
    }

    VerificationReport {
        q_shift_max_error,
        greedy_sets_equal: greedy_sets_match(&base, &shaped, DEFAULT_TIE_TOLERANCE),
        iterations: base.iterations.max(shaped.iterations),
        converged: base.converged && shaped.converged,
    }
}

/// Invariance check for the undiscounted episodic case, solved by backward
/// induction over a fixed horizon. The episode's end is treated as an
/// absorbing zero-potential state, so the last step's shaped reward is
/// `R - lambda * d(s)`.
pub fn verify_invariance_episodic(
    mdp: &TabularMdp,
    d: &Potential,
    lambda: f64,
    horizon: usize,
) -> VerificationReport {
    let gamma = 1.0;
    let base = finite_horizon_q(mdp, horizon, gamma);

    let mut shaped = mdp.clone();
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            for s2 in 0..mdp.n_states {
                shaped.reward[s][a][s2] += lambda * (gamma * d.0[s2] - d.0[s]);
            }
        }
    }
    let mut shaped_q = vec![vec![vec![0.0; mdp.n_actions]; mdp.n_states]; horizon];
    for t in (0..horizon).rev() {
        for s in 0..mdp.n_states {
            for a in 0..mdp.n_actions {
                let mut total = 0.0;
                for s2 in 0..mdp.n_states {
                    let (reward, future) = if t + 1 < horizon {
                        (
                            shaped.reward[s][a][s2],
                            shaped_q[t + 1][s2].iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                        )
                    } else {
                        // Final step: the successor potential is the zero
                        // potential of the post-episode state.
                        (mdp.reward[s][a][s2] - lambda * d.0[s], 0.0)
                    };
                    total += mdp.transition[s][a][s2] * (reward + gamma * future);
                }
                shaped_q[t][s][a] = total;
            }
        }
    }

    let mut q_shift_max_error: f64 = 0.0;
    let mut greedy_sets_equal = true;
    for t in 0..horizon {
        for s in 0..mdp.n_states {
            for a in 0..mdp.n_actions {
                let expected = base[t][s][a] - lambda * d.0[s];
                q_shift_max_error = q_shift_max_error.max((shaped_q[t][s][a] - expected).abs());
            }
            greedy_sets_equal &= greedy_set(&base[t][s], DEFAULT_TIE_TOLERANCE)
                == greedy_set(&shaped_q[t][s], DEFAULT_TIE_TOLERANCE);
        }
    }
    VerificationReport {
        q_shift_max_error,
        greedy_sets_equal,
        iterations: horizon,
        converged: true,
    }
}
