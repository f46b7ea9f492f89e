use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("bit stream must contain at least one bit")]
    EmptyStream,

    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),

    #[error("channel section {index} is not realizable at the sample rate: {reason}")]
    UnstableSection { index: usize, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("insufficient data: need at least {needed} {what}, got {got}")]
    InsufficientData {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("simulation fault at t = {time:.6e} s: {reason}")]
    SimulationFault { time: f64, reason: String },

    #[error("loop never locked (unwrapped edge drift {drift_ui:.3} UI over {edges} edges)")]
    NoLock { drift_ui: f64, edges: usize },

    #[error("power iteration did not converge (residual {residual:.3e} after {iterations} iterations)")]
    NonConvergence { residual: f64, iterations: usize },
}
