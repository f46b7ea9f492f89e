//! Band-limited channel, crossing-time statistics and eye accumulation.
//!
//! The realistic channel is a cascade of second-order low-pass sections,
//! each discretized with the bilinear transform (pre-warped at its natural
//! frequency) so that every section keeps unity DC gain. The abstract
//! strictly-1-bit-ISI eye lives in [`isi_model`].

pub mod isi_model;

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::stimulus::Waveform;
use crate::{Error, Result};

pub use isi_model::{trace_for_pattern, NamedLevel, OneBitIsiModel, PatternTrace, TransitionTrace};

pub const MAX_SECTIONS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondOrderSection {
    /// Hz
    pub natural_frequency: f64,
    pub quality_factor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelPreset {
    HighBandwidth,
    ModerateBandwidth,
}

impl ChannelPreset {
    pub fn as_str(self) -> &'static str {
        match self {
            ChannelPreset::HighBandwidth => "high-bandwidth",
            ChannelPreset::ModerateBandwidth => "moderate-bandwidth",
        }
    }
}

impl std::str::FromStr for ChannelPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "high-bandwidth" => Ok(ChannelPreset::HighBandwidth),
            "moderate-bandwidth" => Ok(ChannelPreset::ModerateBandwidth),
            other => Err(Error::Config(format!("unknown channel preset `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChannelConfig {
    pub sections: Vec<SecondOrderSection>,
    pub preset: Option<ChannelPreset>,
}

impl ChannelConfig {
    pub fn identity() -> Self {
        Self::default()
    }

    /// `n` identical sections.
    pub fn uniform(n: usize, natural_frequency: f64, quality_factor: f64) -> Self {
        ChannelConfig {
            sections: vec![
                SecondOrderSection {
                    natural_frequency,
                    quality_factor,
                };
                n
            ],
            preset: None,
        }
    }

    /// Discretized cascade at `sample_period`, validating every section.
    pub fn design(&self, sample_period: f64) -> Result<Vec<Biquad>> {
        if self.sections.len() > MAX_SECTIONS {
            return Err(Error::Config(format!(
                "{} channel sections exceed the limit of {MAX_SECTIONS}",
                self.sections.len()
            )));
        }
        self.sections
            .iter()
            .enumerate()
            .map(|(index, s)| {
                Biquad::lowpass(s, sample_period).map_err(|reason| Error::UnstableSection { index, reason })
            })
            .collect()
    }
}

/// Transposed direct-form II biquad, coefficients normalized by a0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// w^2 / (s^2 + (w/Q) s + w^2) through the bilinear transform, pre-warped
    /// at w.
    pub fn lowpass(section: &SecondOrderSection, sample_period: f64) -> std::result::Result<Self, String> {
        let f = section.natural_frequency;
        let q = section.quality_factor;
        if !(f.is_finite() && f > 0.0) {
            return Err(format!("natural frequency {f} Hz must be positive"));
        }
        if !(q.is_finite() && q > 0.0) {
            return Err(format!("quality factor {q} must be positive"));
        }
        let nyquist = 0.5 / sample_period;
        if f >= nyquist {
            return Err(format!(
                "natural frequency {f:.4e} Hz is at or above Nyquist ({nyquist:.4e} Hz)"
            ));
        }
        let w = 2.0 * PI * f;
        let k = w / (w * sample_period / 2.0).tan();
        let a0 = k * k + k * w / q + w * w;
        let a1 = 2.0 * (w * w - k * k);
        let a2 = k * k - k * w / q + w * w;
        let g = w * w / a0;
        let bq = Biquad {
            b: [g, 2.0 * g, g],
            a: [a1 / a0, a2 / a0],
        };
        // z^2 + a1 z + a2 has both roots inside the unit circle iff
        // |a2| < 1 and |a1| < 1 + a2.
        let [c1, c2] = bq.a;
        if !(c2.abs() < 1.0 && c1.abs() < 1.0 + c2) {
            return Err(format!("discretized poles outside the unit circle (a1={c1}, a2={c2})"));
        }
        Ok(bq)
    }

    pub fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Filters `x` in place from zero initial state.
    pub fn filter_in_place(&self, x: &mut [f64]) {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let (mut z1, mut z2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let input = *v;
            let y = b0 * input + z1;
            z1 = b1 * input - a1 * y + z2;
            z2 = b2 * input - a2 * y;
            *v = y;
        }
    }
}

/// Runs `w` through the section cascade (zero initial state).
pub fn apply_channel(w: &Waveform, cfg: &ChannelConfig) -> Result<Waveform> {
    let cascade = cfg.design(w.sample_period())?;
    let mut y = w.samples().to_vec();
    for section in &cascade {
        section.filter_in_place(&mut y);
    }
    Ok(w.with_samples(y))
}

/// Adds white Gaussian noise of `rms` volts.
pub fn add_noise(w: &Waveform, rms: f64, seed: u64) -> Result<Waveform> {
    if rms == 0.0 {
        return Ok(w.clone());
    }
    let normal = Normal::new(0.0, rms).map_err(|e| Error::Config(format!("noise rms {rms}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(w.with_samples(w.samples().iter().map(|v| v + normal.sample(&mut rng)).collect()))
}

/// Times at which `w` crosses `level`, linearly interpolated between the two
/// straddling samples. A sample sitting exactly on `level` between two samples
/// on the same side is a touch, not a crossing.
pub fn crossing_times(w: &Waveform, level: f64) -> Vec<f64> {
    let s = w.samples();
    let ts = w.sample_period();
    let mut out: Vec<f64> = Vec::new();
    for i in 0..s.len().saturating_sub(1) {
        let d0 = s[i] - level;
        let d1 = s[i + 1] - level;
        if (d0 < 0.0) == (d1 < 0.0) {
            continue;
        }
        let frac = d0 / (d0 - d1);
        let t = w.time_at(i) + frac * ts;
        if out.last().is_some_and(|&prev| t <= prev) {
            out.pop();
            continue;
        }
        out.push(t);
    }
    out
}

pub const HISTOGRAM_BINS: usize = 128;
pub const MIN_CROSSINGS: usize = 100;
const SMOOTHING_WIDTH: usize = 3;
const MIN_GAP_BINS: usize = 2;
const MIN_CLUSTER_MASS: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// Mean folded crossing phase, fraction of UI in [0, 1).
    pub center: f64,
    /// First and last raw-occupied bin (circular, `first` may exceed `last`).
    pub first_bin: usize,
    pub last_bin: usize,
    /// Span of raw-occupied bins.
    pub width_bins: usize,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossingHistogram {
    pub counts: Vec<u64>,
    pub smoothed: Vec<u64>,
    pub clusters: Vec<Cluster>,
    pub total: usize,
}

impl CrossingHistogram {
    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn cluster_centers(&self) -> Vec<f64> {
        self.clusters.iter().map(|c| c.center).collect()
    }

    pub fn bin_width(&self) -> f64 {
        1.0 / self.counts.len() as f64
    }

    /// Smallest circular distance between cluster centers, fraction of UI.
    pub fn min_separation(&self) -> Option<f64> {
        let c = self.cluster_centers();
        let mut best: Option<f64> = None;
        for i in 0..c.len() {
            for j in i + 1..c.len() {
                let d = circular_distance(c[i], c[j]);
                best = Some(best.map_or(d, |b: f64| b.min(d)));
            }
        }
        best
    }
}

/// Folded phases this close below 1 are rounding residue of a crossing on a
/// bit boundary.
const PHASE_SNAP: f64 = 1e-9;

/// Phase of `t` within its UI, in [0, 1).
pub fn fold_phase(t: f64, ui: f64) -> f64 {
    let p = (t / ui).rem_euclid(1.0);
    if p > 1.0 - PHASE_SNAP {
        0.0
    } else {
        p
    }
}

/// Distance on the unit circle between two phases in UI.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Folds crossing times modulo `ui` into 128 bins and counts clusters:
/// boxcar-smoothed (width 3, circular), clusters are runs of occupied bins
/// split by at least two empty bins, and clusters holding under 1 % of the
/// crossings are dropped.
pub fn crossing_histogram(times: &[f64], ui: f64) -> Result<CrossingHistogram> {
    crossing_histogram_with_bins(times, ui, HISTOGRAM_BINS)
}

pub fn crossing_histogram_with_bins(times: &[f64], ui: f64, bins: usize) -> Result<CrossingHistogram> {
    if times.len() < MIN_CROSSINGS {
        return Err(Error::InsufficientData {
            what: "crossings",
            needed: MIN_CROSSINGS,
            got: times.len(),
        });
    }
    let phases: Vec<f64> = times.iter().map(|&t| fold_phase(t, ui)).collect();
    let bin_of = |p: f64| ((p * bins as f64) as usize).min(bins - 1);
    let mut counts = vec![0u64; bins];
    for &p in &phases {
        counts[bin_of(p)] += 1;
    }
    let half = SMOOTHING_WIDTH / 2;
    let smoothed: Vec<u64> = (0..bins)
        .map(|i| (0..SMOOTHING_WIDTH).map(|k| counts[(i + bins + k - half) % bins]).sum())
        .collect();

    // Runs of occupied smoothed bins on the circle.
    let occupied: Vec<bool> = smoothed.iter().map(|&c| c > 0).collect();
    let mut runs: Vec<(usize, usize)> = Vec::new(); // (start, len)
    if occupied.iter().all(|&o| o) {
        runs.push((0, bins));
    } else if occupied.iter().any(|&o| o) {
        // start scanning just after an empty bin so no run is split by the seam
        let origin = (occupied.iter().position(|&o| !o).unwrap() + 1) % bins;
        let mut k = 0;
        while k < bins {
            let i = (origin + k) % bins;
            if occupied[i] {
                let start = i;
                let mut len = 0;
                while k < bins && occupied[(origin + k) % bins] {
                    len += 1;
                    k += 1;
                }
                runs.push((start, len));
            } else {
                k += 1;
            }
        }
        // merge runs separated by fewer than MIN_GAP_BINS empty bins
        if runs.len() > 1 {
            let mut merged: Vec<(usize, usize)> = Vec::new();
            for &(s, l) in &runs {
                if let Some(last) = merged.last_mut() {
                    let gap = (s + bins - (last.0 + last.1) % bins) % bins;
                    if gap < MIN_GAP_BINS {
                        last.1 += gap + l;
                        continue;
                    }
                }
                merged.push((s, l));
            }
            if merged.len() > 1 {
                let (fs, _) = merged[0];
                let (ls, ll) = *merged.last().unwrap();
                let gap = (fs + bins - (ls + ll) % bins) % bins;
                if gap < MIN_GAP_BINS {
                    let first = merged.remove(0);
                    let last = merged.last_mut().unwrap();
                    last.1 += gap + first.1;
                }
            }
            runs = merged;
        }
    }

    let run_of_bin = |b: usize| -> Option<usize> { runs.iter().position(|&(s, l)| (b + bins - s) % bins < l) };
    let total = phases.len();
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); runs.len()];
    for &p in &phases {
        if let Some(r) = run_of_bin(bin_of(p)) {
            members[r].push(p);
        }
    }
    let mut clusters = Vec::new();
    for (r, &(start, len)) in runs.iter().enumerate() {
        let m = &members[r];
        let mass = m.len() as f64 / total as f64;
        if mass < MIN_CLUSTER_MASS {
            continue;
        }
        // unwrap relative to the run start so a run across the seam averages correctly
        let origin = start as f64 / bins as f64;
        let mean_rel = m.iter().map(|p| (p - origin).rem_euclid(1.0)).sum::<f64>() / m.len() as f64;
        let occupied_raw: Vec<usize> = (0..len)
            .map(|k| (start + k) % bins)
            .filter(|&b| counts[b] > 0)
            .collect();
        let first_bin = *occupied_raw.first().unwrap();
        let last_bin = *occupied_raw.last().unwrap();
        clusters.push(Cluster {
            center: (origin + mean_rel).rem_euclid(1.0),
            first_bin,
            last_bin,
            width_bins: (last_bin + bins - first_bin) % bins + 1,
            mass,
        });
    }
    Ok(CrossingHistogram {
        counts,
        smoothed,
        clusters,
        total,
    })
}

/// 2-UI persistence grid of sample hits, stored time-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EyeDiagram {
    pub ui: f64,
    pub time_bins: usize,
    pub voltage_bins: usize,
    pub v_min: f64,
    pub v_max: f64,
    counts: Vec<u64>,
}

impl EyeDiagram {
    pub fn new(ui: f64, time_bins: usize, voltage_bins: usize, v_min: f64, v_max: f64) -> Self {
        EyeDiagram {
            ui,
            time_bins,
            voltage_bins,
            v_min,
            v_max,
            counts: vec![0; time_bins * voltage_bins],
        }
    }

    pub fn get(&self, time_bin: usize, voltage_bin: usize) -> u64 {
        self.counts[time_bin * self.voltage_bins + voltage_bin]
    }

    pub fn column(&self, time_bin: usize) -> &[u64] {
        &self.counts[time_bin * self.voltage_bins..(time_bin + 1) * self.voltage_bins]
    }

    pub fn total_hits(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Time of the centre of `time_bin`, in UI within the 2-UI window.
    pub fn time_of_bin(&self, time_bin: usize) -> f64 {
        (time_bin as f64 + 0.5) * 2.0 / self.time_bins as f64
    }

    pub fn voltage_of_bin(&self, voltage_bin: usize) -> f64 {
        self.v_min + (voltage_bin as f64 + 0.5) * (self.v_max - self.v_min) / self.voltage_bins as f64
    }

    pub fn voltage_bin(&self, v: f64) -> usize {
        let x = (v - self.v_min) / (self.v_max - self.v_min) * self.voltage_bins as f64;
        (x.max(0.0) as usize).min(self.voltage_bins - 1)
    }

    /// Voltage rows with at least one hit anywhere in the window.
    pub fn occupied_rows(&self) -> Vec<usize> {
        (0..self.voltage_bins)
            .filter(|&v| (0..self.time_bins).any(|t| self.get(t, v) > 0))
            .collect()
    }

    /// Bin-wise sum; grids must share geometry.
    pub fn merge(&mut self, other: &EyeDiagram) -> Result<()> {
        if self.time_bins != other.time_bins
            || self.voltage_bins != other.voltage_bins
            || self.v_min != other.v_min
            || self.v_max != other.v_max
        {
            return Err(Error::Config("eye diagrams have different grids".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    fn add(&mut self, time_bin: usize, voltage_bin: usize) {
        self.counts[time_bin * self.voltage_bins + voltage_bin] += 1;
    }
}

pub const EYE_VOLTAGE_BINS: usize = 128;

/// Folds every sample into a 2-UI window starting at `trigger_phase`
/// (seconds). One time bin per sample period; the voltage axis spans
/// ±1.25× the waveform's peak.
pub fn eye_accumulate(w: &Waveform, trigger_phase: f64) -> Result<EyeDiagram> {
    let peak = w.peak_abs().max(f64::MIN_POSITIVE);
    eye_accumulate_with_grid(w, trigger_phase, EYE_VOLTAGE_BINS, -1.25 * peak, 1.25 * peak)
}

pub fn eye_accumulate_with_grid(
    w: &Waveform,
    trigger_phase: f64,
    voltage_bins: usize,
    v_min: f64,
    v_max: f64,
) -> Result<EyeDiagram> {
    if w.n_ui() < 100.0 {
        return Err(Error::InsufficientData {
            what: "UI of waveform",
            needed: 100,
            got: w.n_ui() as usize,
        });
    }
    let time_bins = 2 * w.samples_per_ui();
    let mut eye = EyeDiagram::new(w.ui(), time_bins, voltage_bins, v_min, v_max);
    let window = 2.0 * w.ui();
    let ts = w.sample_period();
    for (i, &v) in w.samples().iter().enumerate() {
        let tau = (w.time_at(i) - trigger_phase).rem_euclid(window);
        let tb = ((tau / ts) as usize).min(time_bins - 1);
        eye.add(tb, eye.voltage_bin(v));
    }
    Ok(eye)
}
