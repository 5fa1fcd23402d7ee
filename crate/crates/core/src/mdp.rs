//! Finite MDPs and exact value iteration.

use rand::Rng;
use thiserror::Error;

use crate::rng::StreamId;

#[derive(Debug, Error, PartialEq)]
pub enum MdpError {
    #[error("transition row for state {state} action {action} sums to {sum}, expected 1")]
    BadRow { state: usize, action: usize, sum: f64 },
    #[error("negative transition probability at state {state} action {action}")]
    NegativeProbability { state: usize, action: usize },
    #[error("gamma must lie in (0, 1), got {0}")]
    BadGamma(f64),
    #[error("tensor shape does not match {n_states} states x {n_actions} actions")]
    BadShape { n_states: usize, n_actions: usize },
}

/// A finite MDP `(S, A, T, R, gamma)` with dense tensors indexed
/// `[state][action][next_state]`.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<Vec<f64>>>,
    pub gamma: f64,
}

impl TabularMdp {
    pub fn new(
        transition: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<Vec<f64>>>,
        gamma: f64,
    ) -> Result<Self, MdpError> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(MdpError::BadGamma(gamma));
        }
        let n_states = transition.len();
        let n_actions = transition.first().map_or(0, |row| row.len());
        let shape_ok = |t: &Vec<Vec<Vec<f64>>>| {
            t.len() == n_states
                && t.iter().all(|per_a| {
                    per_a.len() == n_actions && per_a.iter().all(|row| row.len() == n_states)
                })
        };
        if n_states == 0 || n_actions == 0 || !shape_ok(&transition) || !shape_ok(&reward) {
            return Err(MdpError::BadShape { n_states, n_actions });
        }
        for (s, per_a) in transition.iter().enumerate() {
            for (a, row) in per_a.iter().enumerate() {
                if row.iter().any(|p| *p < 0.0) {
                    return Err(MdpError::NegativeProbability { state: s, action: a });
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(MdpError::BadRow { state: s, action: a, sum });
                }
            }
        }
        Ok(Self { n_states, n_actions, transition, reward, gamma })
    }
}

/// Result of value iteration: the Q-table plus convergence diagnostics.
#[derive(Debug, Clone)]
pub struct QTable {
    pub q: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
}

impl QTable {
    pub fn state_value(&self, s: usize) -> f64 {
        self.q[s].iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Synchronous Q-value iteration until the sup-norm update difference drops
/// below `tol` or `max_iter` sweeps have run (flagged as non-converged).
pub fn value_iteration(mdp: &TabularMdp, tol: f64, max_iter: usize) -> QTable {
    assert!(tol > 0.0, "tolerance must be positive");
    let mut q = vec![vec![0.0; mdp.n_actions]; mdp.n_states];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let mut next = vec![vec![0.0; mdp.n_actions]; mdp.n_states];
        let values: Vec<f64> = (0..mdp.n_states)
            .map(|s| q[s].iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let mut residual: f64 = 0.0;
        for s in 0..mdp.n_states {
            for a in 0..mdp.n_actions {
                let mut total = 0.0;
                for s2 in 0..mdp.n_states {
                    total += mdp.transition[s][a][s2]
                        * (mdp.reward[s][a][s2] + mdp.gamma * values[s2]);
                }
                residual = residual.max((total - q[s][a]).abs());
                next[s][a] = total;
            }
        }
        q = next;
        iterations += 1;
        if residual < tol {
            converged = true;
            break;
        }
    }
    QTable { q, iterations, converged }
}

/// Horizon-indexed optimal Q-values of an undiscounted episodic task solved
/// by backward induction; `out[t]` holds the Q-values with `horizon - t`
/// steps to go and the potential of the post-episode state fixed at zero.
pub fn finite_horizon_q(mdp: &TabularMdp, horizon: usize, gamma: f64) -> Vec<Vec<Vec<f64>>> {
    let mut out = vec![vec![vec![0.0; mdp.n_actions]; mdp.n_states]; horizon];
    for t in (0..horizon).rev() {
        for s in 0..mdp.n_states {
            for a in 0..mdp.n_actions {
                let mut total = 0.0;
                for s2 in 0..mdp.n_states {
                    let future = if t + 1 < horizon {
                        out[t + 1][s2].iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                    } else {
                        0.0
                    };
                    total += mdp.transition[s][a][s2] * (mdp.reward[s][a][s2] + gamma * future);
                }
                out[t][s][a] = total;
            }
        }
    }
    out
}

/// A random MDP: transition rows drawn from the flat simplex, rewards
/// uniform in [-1, 1]. Deterministic given the seed.
pub fn random_mdp(seed: u64, n_states: usize, n_actions: usize, gamma: f64) -> TabularMdp {
    assert!(n_states >= 1 && n_actions >= 1);
    let mut rng = StreamId::new(seed).child(0x4d44_5052).rng();
    let mut transition = vec![vec![vec![0.0; n_states]; n_actions]; n_states];
    let mut reward = vec![vec![vec![0.0; n_states]; n_actions]; n_states];
    for per_a in transition.iter_mut() {
        for row in per_a.iter_mut() {
            // Normalized Exp(1) draws give a uniform point on the simplex.
            let mut total = 0.0;
            for p in row.iter_mut() {
                let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                *p = -u.ln();
                total += *p;
            }
            for p in row.iter_mut() {
                *p /= total;
            }
            // Repair any residual rounding drift so validation stays exact.
            let sum: f64 = row.iter().sum();
            let last = row.len() - 1;
            row[last] += 1.0 - sum;
        }
    }
    for per_a in reward.iter_mut() {
        for row in per_a.iter_mut() {
            for r in row.iter_mut() {
                *r = rng.gen_range(-1.0..1.0);
            }
        }
    }
    TabularMdp::new(transition, reward, gamma).expect("constructed rows are stochastic")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles;

    fn single_state_mdp(reward: f64, gamma: f64) -> TabularMdp {
        TabularMdp::new(vec![vec![vec![1.0]]], vec![vec![vec![reward]]], gamma).unwrap()
    }

    #[test]
    fn zero_reward_mdp_has_zero_q() {
        let mdp = random_mdp(3, 4, 2, 0.9);
        let zero = TabularMdp::new(
            mdp.transition.clone(),
            vec![vec![vec![0.0; 4]; 2]; 4],
            0.9,
        )
        .unwrap();
        let q = value_iteration(&zero, 1e-10, 10_000);
        assert!(q.converged);
        assert!(q.q.iter().flatten().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn geometric_series_value() {
        let mdp = single_state_mdp(1.0, 0.5);
        let q = value_iteration(&mdp, 1e-12, 10_000);
        assert!(q.converged);
        assert!((q.q[0][0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn bellman_residual_small_at_fixpoint() {
        let mdp = random_mdp(11, 5, 3, 0.9);
        let q = value_iteration(&mdp, 1e-10, 100_000);
        assert!(q.converged);
        let backed_up = oracles::bellman_backup(&mdp.transition, &mdp.reward, mdp.gamma, &q.q);
        let residual = q
            .q
            .iter()
            .flatten()
            .zip(backed_up.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(residual < 1e-9, "residual {residual}");
    }

    #[test]
    fn non_convergence_is_flagged_not_fatal() {
        let mdp = single_state_mdp(1.0, 0.99);
        let q = value_iteration(&mdp, 1e-12, 3);
        assert!(!q.converged);
        assert_eq!(q.iterations, 3);
    }

    #[test]
    fn random_mdp_is_deterministic_and_stochastic() {
        let a = random_mdp(42, 6, 3, 0.9);
        let b = random_mdp(42, 6, 3, 0.9);
        assert_eq!(a.transition, b.transition);
        assert_eq!(a.reward, b.reward);
        for per_a in &a.transition {
            for row in per_a {
                let sum: f64 = row.iter().sum();
                assert!((sum - 1.0).abs() <= 1e-12);
                assert!(row.iter().all(|p| *p >= 0.0));
            }
        }
        let c = random_mdp(43, 6, 3, 0.9);
        assert_ne!(a.reward, c.reward);
    }

    #[test]
    fn invalid_mdps_are_rejected() {
        let bad_row = TabularMdp::new(vec![vec![vec![0.5]]], vec![vec![vec![0.0]]], 0.9);
        assert!(matches!(bad_row, Err(MdpError::BadRow { .. })));
        let bad_gamma = TabularMdp::new(vec![vec![vec![1.0]]], vec![vec![vec![0.0]]], 1.0);
        assert!(matches!(bad_gamma, Err(MdpError::BadGamma(_))));
    }

    #[test]
    fn finite_horizon_accumulates_rewards() {
        // Single state, reward 1 per step, gamma 1: Q at t=0 with horizon 3 is 3.
        let mdp = single_state_mdp(1.0, 0.5); // gamma field unused by finite_horizon_q
        let q = finite_horizon_q(&mdp, 3, 1.0);
        assert!((q[0][0][0] - 3.0).abs() < 1e-12);
        assert!((q[2][0][0] - 1.0).abs() < 1e-12);
    }
}
