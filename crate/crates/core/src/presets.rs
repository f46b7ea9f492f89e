//! Calibrated defaults. All values scale with the bit rate so that the loop
//! and channel behave the same in UI terms at any rate.

use crate::analysis::{ChannelSpec, LinkSetup};
use crate::cdrloop::LoopConfig;
use crate::channel::{ChannelConfig, ChannelPreset, OneBitIsiModel};
use crate::stimulus::SourceKind;
use crate::Result;

pub const SECTIONS: usize = 5;
pub const SECTION_Q: f64 = 0.5;
pub const AMPLITUDE: f64 = 0.2;
pub const SAMPLES_PER_UI: usize = 64;
/// Leading UI dropped before eye and crossing analysis. The channel filters
/// start from rest, and the first transition out of that state is not part
/// of the stationary eye.
pub const SETTLE_UI: usize = 32;

/// Natural frequency of each section relative to the bit rate.
pub fn section_frequency_ratio(preset: ChannelPreset) -> f64 {
    match preset {
        ChannelPreset::HighBandwidth => 2.0,
        ChannelPreset::ModerateBandwidth => 1.02,
    }
}

/// Five critically damped sections. The high-bandwidth cascade settles well
/// within a bit, so all transitions cross the mid level together; the
/// moderate one leaves enough of the previous bit to split the crossings into
/// two families a few percent of a UI apart.
pub fn channel(preset: ChannelPreset, bitrate: f64) -> ChannelConfig {
    ChannelConfig {
        preset: Some(preset),
        ..ChannelConfig::uniform(SECTIONS, section_frequency_ratio(preset) * bitrate, SECTION_Q)
    }
}

/// Loop with a 1e-3 UI bang-bang step and an integral path slow enough not
/// to disturb the edge walk over a 1e5-bit run.
pub fn loop_config(bitrate: f64) -> LoopConfig {
    let scale = 1e9 / bitrate;
    LoopConfig {
        f0: bitrate,
        kvco: 0.2 * bitrate,
        c_filter: 100e-9 * scale,
        vth_limit: AMPLITUDE,
        ..LoopConfig::default()
    }
}

/// Same loop with a capacitor so large that the integral path is inert.
pub fn proportional_only(bitrate: f64) -> LoopConfig {
    LoopConfig {
        c_filter: 1e-3,
        ..loop_config(bitrate)
    }
}

/// One-bit-ISI eye matching the moderate-bandwidth channel: mid-level
/// families 0.065 UI apart in a 0.6 UI transition window.
pub fn isi_model(bitrate: f64) -> Result<OneBitIsiModel> {
    OneBitIsiModel::centered(1.0 / bitrate, AMPLITUDE, 0.065, 0.6)
}

pub fn link(preset: ChannelPreset, bitrate: f64, n_bits: usize) -> LinkSetup {
    LinkSetup {
        source: SourceKind::Uniform,
        n_bits,
        ui: 1.0 / bitrate,
        samples_per_ui: SAMPLES_PER_UI,
        amplitude: AMPLITUDE,
        channel: ChannelSpec::Filter(channel(preset, bitrate)),
        noise_rms: 0.0,
    }
}
