//! Intrinsic reward shaping: converts group diversity into a clipped,
//! scheduled, conditionally applied bonus on top of the verifiable reward.
//!
//! The stepwise intrinsic reward is the potential difference
//! `gamma * d(s') - d(s)`; summed over an episode it telescopes to
//! `gamma^T * d(terminal)` because the initial potential (the bare query) is
//! zero by convention.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ShapingError {
    #[error("vector length mismatch: {0} base rewards, {1} potentials, {2} lengths")]
    LengthMismatch(usize, usize, usize),
    #[error("invalid shaping config: {0}")]
    InvalidConfig(String),
}

/// Shape of the lambda schedule over training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    LinearDecay,
}

/// Which responses receive the diversity bonus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapingMode {
    /// Bonus only on verified-correct responses.
    CorrectOnly,
    /// Bonus on every response.
    All,
    /// Bonus only on incorrect responses.
    ErrorOnly,
    /// Bonus on every response, minus a linear penalty on normalized length.
    AllWithLengthPenalty,
}

impl std::str::FromStr for ShapingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "correct_only" => Ok(Self::CorrectOnly),
            "all" => Ok(Self::All),
            "error_only" => Ok(Self::ErrorOnly),
            "all_with_length_penalty" => Ok(Self::AllWithLengthPenalty),
            other => Err(format!("unknown shaping mode '{other}'")),
        }
    }
}

/// Governs conversion of diversity potentials into intrinsic reward.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapingConfig {
    /// Initial shaping ratio lambda.
    pub lambda0: f64,
    /// Terminal value of the decayed schedule.
    pub lambda_min: f64,
    pub schedule_kind: ScheduleKind,
    /// Steps over which linear decay runs to `lambda_min`.
    pub total_steps: usize,
    /// Upper clip bound sigma on the intrinsic reward.
    pub sigma: f64,
    /// Discount factor applied along the response.
    pub gamma: f64,
    pub mode: ShapingMode,
    /// Coefficient of the normalized-length penalty (only used by
    /// `AllWithLengthPenalty`).
    pub length_penalty_coeff: f64,
}

impl Default for ShapingConfig {
    fn default() -> Self {
        Self {
            lambda0: 0.1,
            lambda_min: 0.0,
            schedule_kind: ScheduleKind::Constant,
            total_steps: 1,
            sigma: 0.65,
            gamma: 1.0,
            mode: ShapingMode::CorrectOnly,
            length_penalty_coeff: 0.0,
        }
    }
}

impl ShapingConfig {
    pub fn validate(&self) -> Result<(), ShapingError> {
        if self.lambda0 < 0.0 || self.lambda_min < 0.0 || self.lambda_min > self.lambda0 {
            return Err(ShapingError::InvalidConfig(format!(
                "need 0 <= lambda_min <= lambda0, got lambda0={} lambda_min={}",
                self.lambda0, self.lambda_min
            )));
        }
        if self.sigma <= 0.0 {
            return Err(ShapingError::InvalidConfig(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(ShapingError::InvalidConfig(format!("gamma must be in (0, 1], got {}", self.gamma)));
        }
        if self.total_steps == 0 {
            return Err(ShapingError::InvalidConfig("total_steps must be positive".into()));
        }
        if self.length_penalty_coeff < 0.0 {
            return Err(ShapingError::InvalidConfig("length_penalty_coeff must be non-negative".into()));
        }
        Ok(())
    }
}

/// Potential difference between adjacent states: `gamma * d_next - d_prev`.
pub fn stepwise_intrinsic(d_prev: f64, d_next: f64, gamma: f64) -> f64 {
    gamma * d_next - d_prev
}

/// Telescoped intrinsic reward of a full response: `gamma^T * d_final`,
/// using the convention that the bare query has potential 0.
pub fn sequence_intrinsic(d_final: f64, steps: usize, gamma: f64) -> f64 {
    gamma.powi(steps as i32) * d_final
}

/// Clamps the intrinsic reward to `[0, sigma]`.
pub fn clip_intrinsic(r_int: f64, sigma: f64) -> f64 {
    r_int.clamp(0.0, sigma)
}

/// Shaping ratio at a training step under the configured schedule.
pub fn lambda_at(step: usize, cfg: &ShapingConfig) -> f64 {
    match cfg.schedule_kind {
        ScheduleKind::Constant => cfg.lambda0,
        ScheduleKind::LinearDecay => {
            let frac = (step as f64 / cfg.total_steps as f64).min(1.0);
            cfg.lambda0 + (cfg.lambda_min - cfg.lambda0) * frac
        }
    }
}

/// One response's reward decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapedReward {
    /// Verifiable base reward in {0, 1}.
    pub base: f64,
    /// Clipped intrinsic reward in [0, sigma].
    pub intrinsic: f64,
    /// Shaping ratio actually applied.
    pub lambda_used: f64,
    /// Combined reward fed to the advantage computation.
    pub combined: f64,
}

/// Converts a group's potentials into shaped rewards.
///
/// The intrinsic reward of response `i` is `clip(gamma^{T_i} * d_i, 0, sigma)`
/// with `T_i` the response length in tokens; the mode decides which responses
/// the bonus applies to.
pub fn shape_group(
    base_rewards: &[f64],
    potentials: &[f64],
    lengths: &[usize],
    step: usize,
    cfg: &ShapingConfig,
) -> Result<Vec<ShapedReward>, ShapingError> {
    if base_rewards.len() != potentials.len() || base_rewards.len() != lengths.len() {
        return Err(ShapingError::LengthMismatch(
            base_rewards.len(),
            potentials.len(),
            lengths.len(),
        ));
    }
    cfg.validate()?;
    let lambda = lambda_at(step, cfg);
    let max_length = lengths.iter().copied().max().unwrap_or(0);
    Ok(base_rewards
        .iter()
        .zip(potentials)
        .zip(lengths)
        .map(|((&base, &d), &len)| {
            let intrinsic = clip_intrinsic(sequence_intrinsic(d, len, cfg.gamma), cfg.sigma);
            let combined = match cfg.mode {
                ShapingMode::CorrectOnly => base + lambda * intrinsic * if base == 1.0 { 1.0 } else { 0.0 },
                ShapingMode::All => base + lambda * intrinsic,
                ShapingMode::ErrorOnly => base + lambda * intrinsic * if base == 0.0 { 1.0 } else { 0.0 },
                ShapingMode::AllWithLengthPenalty => {
                    let penalty = if max_length == 0 {
                        0.0
                    } else {
                        cfg.length_penalty_coeff * len as f64 / max_length as f64
                    };
                    base + lambda * intrinsic - penalty
                }
            };
            ShapedReward { base, intrinsic, lambda_used: lambda, combined }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles;
    use proptest::prelude::*;

    #[test]
    fn stepwise_intrinsic_cases() {
        assert_eq!(stepwise_intrinsic(0.0, 0.0, 0.7), 0.0);
        assert_eq!(stepwise_intrinsic(0.2, 0.2, 1.0), 0.0);
        assert!((stepwise_intrinsic(0.1, 0.4, 0.9) - 0.26).abs() < 1e-15);
    }

    #[test]
    fn sequence_intrinsic_cases() {
        assert_eq!(sequence_intrinsic(0.7, 13, 1.0), 0.7);
        assert_eq!(sequence_intrinsic(0.0, 5, 0.9), 0.0);
        assert!((sequence_intrinsic(0.5, 3, 0.9) - 0.3645).abs() < 1e-12);
        // Telescoped sum over the trajectory [0, 0.1, 0.3, 0.5].
        let telescoped = oracles::telescoped_intrinsic_sum(&[0.1, 0.3, 0.5], 0.9);
        assert!((telescoped - sequence_intrinsic(0.5, 3, 0.9)).abs() < 1e-12);
    }

    #[test]
    fn clip_intrinsic_cases() {
        assert_eq!(clip_intrinsic(0.3, 0.65), 0.3);
        assert_eq!(clip_intrinsic(0.9, 0.65), 0.65);
        assert_eq!(clip_intrinsic(-0.1, 0.65), 0.0);
    }

    #[test]
    fn lambda_schedule_cases() {
        let constant = ShapingConfig::default();
        assert_eq!(lambda_at(0, &constant), 0.1);
        assert_eq!(lambda_at(10_000, &constant), 0.1);

        let decay = ShapingConfig {
            schedule_kind: ScheduleKind::LinearDecay,
            total_steps: 200,
            ..ShapingConfig::default()
        };
        assert_eq!(lambda_at(0, &decay), 0.1);
        assert!((lambda_at(100, &decay) - 0.05).abs() < 1e-15);
        assert_eq!(lambda_at(200, &decay), 0.0);
        assert_eq!(lambda_at(500, &decay), 0.0);
    }

    #[test]
    fn shape_group_conditional_modes() {
        let cfg = ShapingConfig::default();
        // correct_only leaves incorrect responses untouched.
        let shaped = shape_group(&[0.0], &[0.9], &[4], 0, &cfg).unwrap();
        assert_eq!(shaped[0].combined, 0.0);

        let shaped = shape_group(&[1.0], &[0.5], &[4], 0, &cfg).unwrap();
        assert!((shaped[0].combined - 1.05).abs() < 1e-15);

        let all = ShapingConfig { mode: ShapingMode::All, ..ShapingConfig::default() };
        let shaped = shape_group(&[0.0], &[0.5], &[4], 0, &all).unwrap();
        assert!((shaped[0].combined - 0.05).abs() < 1e-15);

        let err_only = ShapingConfig { mode: ShapingMode::ErrorOnly, ..ShapingConfig::default() };
        let shaped = shape_group(&[1.0, 0.0], &[0.5, 0.5], &[4, 4], 0, &err_only).unwrap();
        assert_eq!(shaped[0].combined, 1.0);
        assert!((shaped[1].combined - 0.05).abs() < 1e-15);
    }

    #[test]
    fn shape_group_length_penalty() {
        let cfg = ShapingConfig {
            mode: ShapingMode::AllWithLengthPenalty,
            length_penalty_coeff: 0.2,
            ..ShapingConfig::default()
        };
        let shaped = shape_group(&[0.0, 0.0], &[0.5, 0.5], &[5, 10], 0, &cfg).unwrap();
        // Both get the bonus 0.05; penalties 0.2*(5/10) and 0.2*(10/10).
        assert!((shaped[0].combined - (0.05 - 0.1)).abs() < 1e-15);
        assert!((shaped[1].combined - (0.05 - 0.2)).abs() < 1e-15);
    }

    #[test]
    fn shape_group_rejects_mismatched_lengths() {
        let cfg = ShapingConfig::default();
        assert_eq!(
            shape_group(&[0.0, 1.0], &[0.5], &[3, 3], 0, &cfg),
            Err(ShapingError::LengthMismatch(2, 1, 2))
        );
    }

    #[test]
    fn intrinsic_clipped_by_sigma() {
        let cfg = ShapingConfig { sigma: 0.65, lambda0: 1.0, ..ShapingConfig::default() };
        let shaped = shape_group(&[1.0], &[1.0], &[2], 0, &cfg).unwrap();
        assert_eq!(shaped[0].intrinsic, 0.65);
    }

    proptest! {
        #[test]
        fn telescoping_identity_holds(
            potentials in prop::collection::vec(0.0f64..=1.0, 1..20),
            use_gamma_one in any::<bool>(),
        ) {
            let gamma = if use_gamma_one { 1.0 } else { 0.9 };
            let total = oracles::telescoped_intrinsic_sum(&potentials, gamma);
            let expected = sequence_intrinsic(*potentials.last().unwrap(), potentials.len(), gamma);
            prop_assert!((total - expected).abs() < 1e-12);
        }

        #[test]
        fn shaped_rewards_respect_bounds_and_equivariance(
            bases in prop::collection::vec(0usize..2, 2..8),
            pots in prop::collection::vec(0.0f64..=1.0, 2..8),
            rotate in 0usize..8,
        ) {
            let g = bases.len().min(pots.len());
            let bases: Vec<f64> = bases[..g].iter().map(|&b| b as f64).collect();
            let pots = &pots[..g];
            let lengths: Vec<usize> = (1..=g).collect();
            let cfg = ShapingConfig::default();

            let shaped = shape_group(&bases, pots, &lengths, 3, &cfg).unwrap();
            for (s, &b) in shaped.iter().zip(&bases) {
                prop_assert!(s.intrinsic >= 0.0 && s.intrinsic <= cfg.sigma);
                if b == 0.0 {
                    prop_assert_eq!(s.combined, 0.0);
                }
            }

            // Permutation equivariance under rotation.
            let k = rotate % g;
            let rb: Vec<f64> = (0..g).map(|i| bases[(i + k) % g]).collect();
            let rp: Vec<f64> = (0..g).map(|i| pots[(i + k) % g]).collect();
            let rl: Vec<usize> = (0..g).map(|i| lengths[(i + k) % g]).collect();
            let rotated = shape_group(&rb, &rp, &rl, 3, &cfg).unwrap();
            for i in 0..g {
                prop_assert_eq!(rotated[i], shaped[(i + k) % g]);
            }
        }

        #[test]
        fn lambda_schedule_monotone_and_bounded(steps in prop::collection::vec(0usize..400, 2..20)) {
            let cfg = ShapingConfig {
                schedule_kind: ScheduleKind::LinearDecay,
                lambda0: 0.1,
                lambda_min: 0.02,
                total_steps: 200,
                ..ShapingConfig::default()
            };
            let mut sorted = steps.clone();
            sorted.sort_unstable();
            let values: Vec<f64> = sorted.iter().map(|&s| lambda_at(s, &cfg)).collect();
            for w in values.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-15);
            }
            prop_assert!(values.iter().all(|v| (cfg.lambda_min - 1e-15..=cfg.lambda0 + 1e-15).contains(v)));
        }
    }
}
