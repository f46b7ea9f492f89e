//! Edge-sampler offset sweeps.

use rayon::prelude::*;

use super::jitter::measure_jitter;
use crate::cdrloop::{effective_threshold, run_cdr, LoopConfig};
use crate::channel::{add_noise, apply_channel, ChannelConfig, OneBitIsiModel};
use crate::stimulus::{generate_bits, nrz_modulate, SourceKind, Waveform};
use crate::{derive_seed, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelSpec {
    /// NRZ through a section cascade.
    Filter(ChannelConfig),
    /// The abstract one-bit-ISI eye, synthesized directly.
    OneBitIsi(OneBitIsiModel),
}

/// Everything needed to produce a received waveform from a seed.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSetup {
    pub source: SourceKind,
    pub n_bits: usize,
    pub ui: f64,
    pub samples_per_ui: usize,
    pub amplitude: f64,
    pub channel: ChannelSpec,
    pub noise_rms: f64,
}

impl LinkSetup {
    pub fn receive(&self, seed: u64) -> Result<Waveform> {
        let bits = generate_bits(self.source, self.n_bits, seed)?;
        let w = match &self.channel {
            ChannelSpec::Filter(ch) => {
                let tx = nrz_modulate(&bits, self.ui, self.samples_per_ui, self.amplitude)?;
                apply_channel(&tx, ch)?
            }
            ChannelSpec::OneBitIsi(m) => m.synthesize(&bits, self.samples_per_ui)?,
        };
        add_noise(&w, self.noise_rms, derive_seed(seed, u64::MAX))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub v_off: f64,
    pub effective_threshold: f64,
    /// `None` when the loop did not lock or the run failed.
    pub pk_pk_ui: Option<f64>,
    pub locked: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCurve {
    pub points: Vec<SweepPoint>,
}

impl SweepCurve {
    pub fn offsets(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.v_off).collect()
    }

    pub fn at(&self, v_off: f64) -> Option<&SweepPoint> {
        self.points
            .iter()
            .min_by(|a, b| (a.v_off - v_off).abs().total_cmp(&(b.v_off - v_off).abs()))
    }

    /// Locked point with the lowest jitter.
    pub fn argmin(&self) -> Option<&SweepPoint> {
        self.points
            .iter()
            .filter_map(|p| p.pk_pk_ui.map(|j| (p, j)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(p, _)| p)
    }
}

/// One closed-loop run per offset, in parallel. Point `i` uses data seed
/// `derive_seed(master_seed, 2i)` and metastability seed
/// `derive_seed(master_seed, 2i + 1)`, so the result does not depend on
/// scheduling. Threshold tracking is forced off.
pub fn offset_sweep(link: &LinkSetup, cfg: &LoopConfig, offsets: &[f64], master_seed: u64) -> Result<SweepCurve> {
    if offsets.is_empty() {
        return Err(Error::Config("offset list is empty".into()));
    }
    if !offsets.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Config("offsets must be strictly increasing".into()));
    }
    if let Some(v) = offsets.iter().find(|v| v.abs() >= link.amplitude) {
        return Err(Error::Config(format!(
            "offset {v} V lies outside the signal swing of +-{} V",
            link.amplitude
        )));
    }
    cfg.validate()?;
    let points = offsets
        .par_iter()
        .enumerate()
        .map(|(i, &v_off)| {
            let i = i as u64;
            let point_cfg = LoopConfig {
                v_off,
                vth_enabled: false,
                metastability_seed: derive_seed(master_seed, 2 * i + 1),
                ..cfg.clone()
            };
            let pk_pk = link
                .receive(derive_seed(master_seed, 2 * i))
                .and_then(|w| run_cdr(&w, &point_cfg))
                .and_then(|tr| measure_jitter(&tr, link.ui))
                .ok()
                .map(|r| r.pk_pk_ui);
            SweepPoint {
                v_off,
                effective_threshold: effective_threshold(v_off, cfg.initial_vth),
                pk_pk_ui: pk_pk,
                locked: pk_pk.is_some(),
            }
        })
        .collect();
    Ok(SweepCurve { points })
}

/// Offsets of locked points whose jitter is the lowest among the locked
/// points within `half_window` positions on either side. Of a run of equal
/// values only the first is reported.
pub fn local_minima(curve: &SweepCurve, half_window: usize) -> Vec<f64> {
    let pts = &curve.points;
    let mut out = Vec::new();
    for (i, p) in pts.iter().enumerate() {
        let Some(j) = p.pk_pk_ui else { continue };
        let lo = i.saturating_sub(half_window);
        let hi = (i + half_window).min(pts.len() - 1);
        let is_min = (lo..=hi).all(|k| match pts[k].pk_pk_ui {
            Some(o) if k < i => j < o,
            Some(o) => j <= o,
            None => true,
        });
        if is_min {
            out.push(p.v_off);
        }
    }
    out
}
