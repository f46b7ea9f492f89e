//! Behavioral time-domain model of a bang-bang (Alexander) clock and data
//! recovery loop.
//!
//! The crate is organised the way a receiver is wired:
//!
//! * [`stimulus`] produces bit streams and ideal NRZ waveforms,
//! * [`channel`] band-limits them (or synthesizes the abstract 1-bit-ISI eye),
//! * [`cdrloop`] closes the loop: samplers, phase detector, threshold detector,
//!   charge pump, RC filter and VCO,
//! * [`analysis`] measures recovered-clock jitter, sweeps the edge-sampler
//!   offset and hosts the Markov-chain model of the edge random walk,
//! * [`export`] writes the CSV interchange files.

// NaN must fail the range checks, so they are written as negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cdrloop;
pub mod channel;
pub mod export;
pub mod presets;
pub mod stimulus;

mod error;
mod seed;

pub use error::{Error, Result};
pub use seed::derive_seed;
