//! Command implementations behind the `divrl` binary: streaming group
//! scoring, experiment runs, invariance verification, ablations, and plot
//! data export.

pub mod ablate;
pub mod plot;
pub mod records;
pub mod score;
pub mod stats;
pub mod train_run;
pub mod verify;

/// Environment variable that overrides the default seed of every command.
pub const SEED_ENV_VAR: &str = "DIVRL_SEED";

/// The default seed: the `DIVRL_SEED` environment variable when set, else 0.
pub fn default_seed() -> u64 {
    std::env::var(SEED_ENV_VAR).ok().and_then(|v| v.parse().ok()).unwrap_or(0)
}
