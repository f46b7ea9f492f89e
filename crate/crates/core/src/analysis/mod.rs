//! Measurements on simulated runs and the Markov-chain model of the edge walk.

mod jitter;
mod oracle;
mod sweep;
mod tracking;

pub use jitter::{
    lock_detect, measure_jitter, unwrap_phases, JitterReport, Lock, LOCK_DRIFT_UI, LOCK_RANGE_UI, LOCK_TAIL_FRACTION,
    LOCK_WINDOW, MIN_MEASURED_EDGES, WARMUP_FRACTION,
};
pub use oracle::{markov_oracle, oracle_vs_sim, oracle_vs_sim_with, OracleComparison, OracleParams, OracleResult};
pub use sweep::{local_minima, offset_sweep, ChannelSpec, LinkSetup, SweepCurve, SweepPoint};
pub use tracking::{settling, SettlingReport};
