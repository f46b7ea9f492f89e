//! Experiment configuration file. Every quantity carries its unit in the key
//! name; unknown keys are rejected. Loop values that are left out take the
//! calibrated defaults for the configured bit rate.

use std::str::FromStr;

use cdrlab_core::analysis::{ChannelSpec, LinkSetup};
use cdrlab_core::cdrloop::LoopConfig;
use cdrlab_core::channel::{ChannelConfig, ChannelPreset, NamedLevel, OneBitIsiModel, SecondOrderSection};
use cdrlab_core::presets;
use cdrlab_core::stimulus::SourceKind;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub data: DataSection,
    pub channel: ChannelSection,
    #[serde(rename = "loop")]
    pub loop_: LoopSection,
    pub analysis: AnalysisSection,
    pub model: ModelSection,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub n_bits: usize,
    pub seed: u64,
    pub amplitude_mV: f64,
    pub bitrate_Hz: f64,
    pub samples_per_ui: usize,
    /// uniform, prbs7 or prbs15
    pub source_kind: String,
    pub noise_rms_mV: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            n_bits: 100_000,
            seed: 1,
            amplitude_mV: presets::AMPLITUDE * 1e3,
            bitrate_Hz: 1e9,
            samples_per_ui: presets::SAMPLES_PER_UI,
            source_kind: "uniform".into(),
            noise_rms_mV: 0.0,
        }
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionSpec {
    pub natural_frequency_Hz: f64,
    pub quality_factor: f64,
}

/// Either a named preset or an explicit cascade (an empty list is a
/// transparent channel). Neither means the moderate-bandwidth preset.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sections: Option<Vec<SectionSpec>>,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f0_Hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kvco_Hz_per_V: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub icp_A: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_Ohm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_F: Option<f64>,
    pub v_off_mV: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vth_gain_uV: Option<f64>,
    pub vth_enabled: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vth_limit_mV: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metastability_band_mV: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metastability_seed: Option<u64>,
    pub initial_phase_rad: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    /// `start:stop:step`, inclusive of stop.
    pub offsets_mV: String,
    pub histogram_bins: usize,
    pub eye_voltage_bins: usize,
    /// Half-width, in sweep points, of the local-minimum window.
    pub minima_half_window: usize,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            offsets_mV: "-30:30:2".into(),
            histogram_bins: cdrlab_core::channel::HISTOGRAM_BINS,
            eye_voltage_bins: cdrlab_core::channel::EYE_VOLTAGE_BINS,
            minima_half_window: 3,
        }
    }
}

/// One-bit-ISI eye for the oracle command.
#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// Distance between the two crossing families at the mid level.
    pub separation_ui: f64,
    pub width_ui: f64,
    /// Level names (R, P, Q) or levels in mV.
    pub thresholds: Vec<String>,
    /// Loop capacitor for the comparison runs; large keeps the integral
    /// path out of the way.
    pub c_F: f64,
    pub cells_per_step: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            separation_ui: 0.065,
            width_ui: 0.6,
            thresholds: vec!["R".into(), "Q".into(), "P".into()],
            c_F: 1e-3,
            cells_per_step: 8,
        }
    }
}

/// A threshold requested from the oracle command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdSpec {
    Named(NamedLevel),
    Volts(f64),
}

impl ThresholdSpec {
    pub fn label(&self) -> String {
        match self {
            ThresholdSpec::Named(l) => format!("{l:?}"),
            ThresholdSpec::Volts(v) => format!("{}mV", v * 1e3),
        }
    }

    pub fn level(&self, model: &OneBitIsiModel) -> f64 {
        match *self {
            ThresholdSpec::Named(l) => model.level(l),
            ThresholdSpec::Volts(v) => v,
        }
    }
}

fn cfg_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn positive(key: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(cfg_err(format!("{key} = {v} must be finite and > 0")))
    }
}

/// Parses `start:stop:step` (mV) into volts. The stop value is included
/// when it lies on the grid.
pub fn parse_offsets(spec: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [a, b, c] = parts[..] else {
        return Err(cfg_err(format!("offsets `{spec}` must have the form start:stop:step")));
    };
    let num = |s: &str| {
        f64::from_str(s.trim())
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| cfg_err(format!("offsets `{spec}`: `{s}` is not a number")))
    };
    let (start, stop, step) = (num(a)?, num(b)?, num(c)?);
    if !(step > 0.0) {
        return Err(cfg_err(format!("offsets `{spec}`: step must be > 0")));
    }
    if stop < start {
        return Err(cfg_err(format!("offsets `{spec}`: stop is below start")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| (start + k as f64 * step) * 1e-3).collect())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| cfg_err(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let d = &self.data;
        if d.n_bits == 0 {
            return Err(cfg_err("data.n_bits must be >= 1"));
        }
        positive("data.amplitude_mV", d.amplitude_mV)?;
        positive("data.bitrate_Hz", d.bitrate_Hz)?;
        if !(d.noise_rms_mV.is_finite() && d.noise_rms_mV >= 0.0) {
            return Err(cfg_err("data.noise_rms_mV must be >= 0"));
        }
        self.source_kind()?;
        self.channel_config()?;
        self.loop_config()?
            .validate()
            .map_err(|e| cfg_err(format!("loop: {e}")))?;
        if self.analysis.histogram_bins < 8 {
            return Err(cfg_err("analysis.histogram_bins must be >= 8"));
        }
        if self.analysis.eye_voltage_bins < 2 {
            return Err(cfg_err("analysis.eye_voltage_bins must be >= 2"));
        }
        parse_offsets(&self.analysis.offsets_mV)?;
        positive("model.c_F", self.model.c_F)?;
        if self.model.cells_per_step == 0 {
            return Err(cfg_err("model.cells_per_step must be >= 1"));
        }
        self.thresholds()?;
        self.model()?;
        Ok(())
    }

    pub fn ui(&self) -> f64 {
        1.0 / self.data.bitrate_Hz
    }

    pub fn amplitude(&self) -> f64 {
        self.data.amplitude_mV * 1e-3
    }

    pub fn source_kind(&self) -> Result<SourceKind, CliError> {
        match self.data.source_kind.parse() {
            Ok(SourceKind::Explicit) | Err(_) => Err(cfg_err(format!(
                "data.source_kind = `{}`: expected uniform, prbs7 or prbs15",
                self.data.source_kind
            ))),
            Ok(k) => Ok(k),
        }
    }

    pub fn channel_config(&self) -> Result<ChannelConfig, CliError> {
        let bitrate = self.data.bitrate_Hz;
        match (&self.channel.preset, &self.channel.sections) {
            (Some(_), Some(_)) => Err(cfg_err("channel: give either preset or sections, not both")),
            (None, None) => Ok(presets::channel(ChannelPreset::ModerateBandwidth, bitrate)),
            (Some(name), None) => {
                let preset: ChannelPreset = name.parse().map_err(|e| cfg_err(format!("channel.preset: {e}")))?;
                Ok(presets::channel(preset, bitrate))
            }
            (None, Some(list)) => {
                let sections = list
                    .iter()
                    .enumerate()
                    .map(|(i, s)| {
                        positive(
                            &format!("channel.sections[{i}].natural_frequency_Hz"),
                            s.natural_frequency_Hz,
                        )?;
                        positive(&format!("channel.sections[{i}].quality_factor"), s.quality_factor)?;
                        Ok(SecondOrderSection {
                            natural_frequency: s.natural_frequency_Hz,
                            quality_factor: s.quality_factor,
                        })
                    })
                    .collect::<Result<Vec<_>, CliError>>()?;
                let cfg = ChannelConfig { sections, preset: None };
                let ts = self.ui() / self.data.samples_per_ui as f64;
                cfg.design(ts).map_err(|e| cfg_err(format!("channel: {e}")))?;
                Ok(cfg)
            }
        }
    }

    pub fn link(&self) -> Result<LinkSetup, CliError> {
        Ok(LinkSetup {
            source: self.source_kind()?,
            n_bits: self.data.n_bits,
            ui: self.ui(),
            samples_per_ui: self.data.samples_per_ui,
            amplitude: self.amplitude(),
            channel: ChannelSpec::Filter(self.channel_config()?),
            noise_rms: self.data.noise_rms_mV * 1e-3,
        })
    }

    pub fn loop_config(&self) -> Result<LoopConfig, CliError> {
        let base = presets::loop_config(self.data.bitrate_Hz);
        let l = &self.loop_;
        Ok(LoopConfig {
            f0: l.f0_Hz.unwrap_or(base.f0),
            kvco: l.kvco_Hz_per_V.unwrap_or(base.kvco),
            icp: l.icp_A.unwrap_or(base.icp),
            r_filter: l.r_Ohm.unwrap_or(base.r_filter),
            c_filter: l.c_F.unwrap_or(base.c_filter),
            v_off: l.v_off_mV * 1e-3,
            vth_gain: l.vth_gain_uV.map_or(base.vth_gain, |g| g * 1e-6),
            vth_enabled: l.vth_enabled,
            vth_limit: l.vth_limit_mV.map_or(self.amplitude(), |v| v * 1e-3),
            metastability_band: l.metastability_band_mV.map_or(base.metastability_band, |v| v * 1e-3),
            metastability_seed: l.metastability_seed.unwrap_or(base.metastability_seed),
            initial_phase: l.initial_phase_rad,
            initial_vth: 0.0,
            record_every: l.record_every.unwrap_or(base.record_every),
        })
    }

    pub fn model(&self) -> Result<OneBitIsiModel, CliError> {
        let m = &self.model;
        OneBitIsiModel::centered(self.ui(), self.amplitude(), m.separation_ui, m.width_ui)
            .map_err(|e| cfg_err(format!("model: {e}")))
    }

    pub fn thresholds(&self) -> Result<Vec<ThresholdSpec>, CliError> {
        if self.model.thresholds.is_empty() {
            return Err(cfg_err("model.thresholds is empty"));
        }
        self.model
            .thresholds
            .iter()
            .map(|s| match s.trim() {
                "R" | "r" => Ok(ThresholdSpec::Named(NamedLevel::R)),
                "P" | "p" => Ok(ThresholdSpec::Named(NamedLevel::P)),
                "Q" | "q" => Ok(ThresholdSpec::Named(NamedLevel::Q)),
                other => other
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .map(|v| ThresholdSpec::Volts(v * 1e-3))
                    .ok_or_else(|| {
                        cfg_err(format!(
                            "model.thresholds: `{other}` is neither R, P, Q nor a level in mV"
                        ))
                    }),
            })
            .collect()
    }
}
