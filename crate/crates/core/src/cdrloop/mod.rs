//! The closed loop: samplers, phase and threshold detectors, charge pump,
//! series-RC filter and VCO.
//!
//! The rising clock edge samples the bit centre at 0 V; the falling edge
//! samples the data edge against the (possibly offset, possibly tracked)
//! edge-sampler threshold. Between events the pump current is constant, so
//! the control voltage is linear in time and the VCO phase quadratic; the
//! simulator steps from one clock edge to the next by solving that quadratic
//! exactly instead of ticking on the waveform's sample grid.

mod detector;

use std::f64::consts::{PI, TAU};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use detector::{
    alexander_decide, effective_threshold, sample_comparator, threshold_decide, threshold_decide_table, PdDecision,
    PhaseSamples, ThresholdAction, THRESHOLD_TABLE,
};

use crate::analysis::lock_detect;
use crate::stimulus::Waveform;
use crate::{Error, Result};

/// Shortest record `run_cdr` accepts, in unit intervals.
pub const MIN_RUN_UI: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    /// VCO free-running frequency, Hz.
    pub f0: f64,
    /// VCO gain, Hz/V.
    pub kvco: f64,
    /// Charge-pump current, A.
    pub icp: f64,
    /// Loop-filter series resistor, ohm.
    pub r_filter: f64,
    /// Loop-filter capacitor, F.
    pub c_filter: f64,
    /// Static offset at the edge sampler's input, V.
    pub v_off: f64,
    /// Threshold-integrator step per decision, V.
    pub vth_gain: f64,
    pub vth_enabled: bool,
    /// The tracked threshold is clamped to `[-vth_limit, vth_limit]`.
    pub vth_limit: f64,
    /// Comparator inputs closer than this to the threshold resolve randomly.
    pub metastability_band: f64,
    pub metastability_seed: u64,
    /// VCO phase at t = 0, rad.
    pub initial_phase: f64,
    /// Initial tracked threshold, V.
    pub initial_vth: f64,
    /// Keep one control-voltage sample every this many clock cycles.
    pub record_every: usize,
}

impl Default for LoopConfig {
    /// 1 Gb/s loop with a 1e-3 UI proportional step and a weak integral path.
    fn default() -> Self {
        LoopConfig {
            f0: 1e9,
            kvco: 200e6,
            icp: 50e-6,
            r_filter: 200.0,
            c_filter: 100e-9,
            v_off: 0.0,
            vth_gain: 50e-6,
            vth_enabled: false,
            vth_limit: 0.2,
            metastability_band: 0.1e-3,
            metastability_seed: 1,
            initial_phase: 0.0,
            initial_vth: 0.0,
            record_every: 16,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("f0", self.f0),
            ("kvco", self.kvco),
            ("icp", self.icp),
            ("r_filter", self.r_filter),
            ("c_filter", self.c_filter),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} = {v} must be finite and > 0")));
            }
        }
        let non_negative = [
            ("vth_gain", self.vth_gain),
            ("vth_limit", self.vth_limit),
            ("metastability_band", self.metastability_band),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        if !self.v_off.is_finite() || !self.initial_phase.is_finite() || !self.initial_vth.is_finite() {
            return Err(Error::Config(
                "v_off, initial_phase and initial_vth must be finite".into(),
            ));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be >= 1".into()));
        }
        Ok(())
    }

    /// Edge displacement caused by one half-period pump pulse through the
    /// resistor, in seconds: kvco * icp * R * (T/2) cycles of phase.
    pub fn bang_bang_step(&self) -> f64 {
        self.kvco * self.icp * self.r_filter / (2.0 * self.f0 * self.f0)
    }

    /// Step of the integral path: frequency change per pump pulse, Hz.
    pub fn integral_step(&self) -> f64 {
        self.kvco * self.icp / (2.0 * self.f0 * self.c_filter)
    }
}

/// Loop state between events.
#[derive(Debug, Clone, PartialEq)]
pub struct CdrState {
    pub time: f64,
    /// VCO phase in [0, 2pi).
    pub phase: f64,
    /// Capacitor voltage.
    pub v_cap: f64,
    /// Signed pump current, A.
    pub pump: f64,
    pub v_th_fb: f64,
}

impl CdrState {
    pub fn new(cfg: &LoopConfig) -> Self {
        CdrState {
            time: 0.0,
            phase: cfg.initial_phase.rem_euclid(TAU),
            v_cap: 0.0,
            pump: 0.0,
            v_th_fb: cfg.initial_vth,
        }
    }

    /// Control voltage: capacitor plus the drop across the series resistor.
    pub fn v_c(&self, cfg: &LoopConfig) -> f64 {
        self.v_cap + self.pump * cfg.r_filter
    }

    pub fn frequency(&self, cfg: &LoopConfig) -> f64 {
        cfg.f0 + cfg.kvco * self.v_c(cfg)
    }

    /// Asserts the pump for `decision` and integrates it for `dt` seconds.
    /// Returns the control voltage at the end of the interval.
    pub fn charge_pump_and_filter(&mut self, cfg: &LoopConfig, decision: PdDecision, dt: f64) -> f64 {
        self.pump = pump_current(cfg, decision);
        self.v_cap += self.pump * dt / cfg.c_filter;
        self.v_c(cfg)
    }

    /// Advances the VCO by `dt` at a constant control voltage `v_c` and
    /// returns the times of the falling (phase = pi) and rising (phase = 2pi)
    /// edges crossed on the way, in order.
    pub fn vco_advance(&mut self, cfg: &LoopConfig, v_c: f64, dt: f64) -> Result<Vec<(f64, ClockEdge)>> {
        let f = cfg.f0 + cfg.kvco * v_c;
        if !(f > 0.0) {
            return Err(Error::SimulationFault {
                time: self.time,
                reason: format!("VCO frequency {f:.4e} Hz is not positive"),
            });
        }
        let mut edges = Vec::new();
        let end = self.phase + TAU * f * dt;
        let mut n = (self.phase / PI).floor() as u64 + 1;
        while n as f64 * PI <= end {
            let t = self.time + (n as f64 * PI - self.phase) / (TAU * f);
            edges.push((
                t,
                if n.is_multiple_of(2) {
                    ClockEdge::Rising
                } else {
                    ClockEdge::Falling
                },
            ));
            n += 1;
        }
        self.phase = end.rem_euclid(TAU);
        self.time += dt;
        Ok(edges)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockEdge {
    Falling,
    Rising,
}

fn pump_current(cfg: &LoopConfig, decision: PdDecision) -> f64 {
    match decision {
        PdDecision::ClockLate => cfg.icp,
        PdDecision::ClockEarly => -cfg.icp,
        PdDecision::Hold => 0.0,
    }
}

/// Next multiple of pi strictly above `phase`.
fn next_target(phase: f64) -> f64 {
    ((phase / PI).floor() + 1.0) * PI
}

/// Clamped accumulator behind the edge-sampler threshold.
pub fn threshold_integrator(v_th_fb: f64, action: ThresholdAction, gain: f64, limit: f64) -> f64 {
    let v = match action {
        ThresholdAction::Increase => v_th_fb + gain,
        ThresholdAction::Decrease => v_th_fb - gain,
        ThresholdAction::None => v_th_fb,
    };
    v.clamp(-limit, limit)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DecisionCounts {
    pub early: u64,
    pub late: u64,
    pub hold: u64,
    pub vth_up: u64,
    pub vth_down: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlPoint {
    pub time: f64,
    /// Capacitor voltage, sampled on a rising edge before the pump switches.
    pub v_c: f64,
    pub v_th_fb: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub ui: f64,
    pub falling_edges: Vec<f64>,
    pub rising_edges: Vec<f64>,
    pub recovered_bits: Vec<bool>,
    pub control: Vec<ControlPoint>,
    pub counts: DecisionCounts,
    /// How many edge samples resolved to 1.
    pub edge_ones: u64,
    pub lock_time: Option<f64>,
    pub final_state: CdrState,
}

impl SimTrace {
    pub fn final_vth(&self) -> f64 {
        self.final_state.v_th_fb
    }
}

/// Runs the loop over the whole record. Deterministic in
/// `cfg.metastability_seed`.
pub fn run_cdr(data: &Waveform, cfg: &LoopConfig) -> Result<SimTrace> {
    cfg.validate()?;
    let n_ui = data.n_ui() as usize;
    if n_ui < MIN_RUN_UI {
        return Err(Error::InsufficientData {
            what: "UI of data",
            needed: MIN_RUN_UI,
            got: n_ui,
        });
    }
    let detune = (cfg.f0 * data.ui() - 1.0).abs();
    if detune > 0.01 {
        return Err(Error::Config(format!(
            "f0 is {:.2}% away from the bit rate, outside the pull-in range",
            detune * 100.0
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.metastability_seed);
    let mut st = CdrState::new(cfg);
    let end = data.end_time();
    let cycles = (n_ui as f64 * 1.02) as usize;
    let mut falling_edges = Vec::with_capacity(cycles);
    let mut rising_edges = Vec::with_capacity(cycles);
    let mut recovered_bits = Vec::with_capacity(cycles);
    let mut control = Vec::with_capacity(cycles / cfg.record_every + 1);
    let mut counts = DecisionCounts::default();
    let mut edge_ones = 0u64;

    // centre samples seen so far (saturating at 2) and the pending edge sample
    let mut centres = 0u8;
    let mut b_prev2 = false;
    let mut b_prev1 = false;
    let mut b_mid: Option<bool> = None;

    loop {
        let target = next_target(st.phase);
        let dt = time_to_phase(&st, cfg, target - st.phase)?;
        let t = st.time + dt;
        if t > end {
            break;
        }
        st.v_cap += st.pump * dt / cfg.c_filter;
        st.time = t;
        let rising = target >= TAU;
        st.phase = if rising { 0.0 } else { PI };
        let v = data.value_at(t).expect("edge time inside the record");

        if !rising {
            let thr = effective_threshold(cfg.v_off, st.v_th_fb);
            let b = sample_comparator(v, thr, cfg.metastability_band, &mut rng);
            edge_ones += b as u64;
            b_mid = Some(b);
            falling_edges.push(t);
            st.pump = 0.0;
            continue;
        }

        let b_cur = sample_comparator(v, 0.0, cfg.metastability_band, &mut rng);
        if rising_edges.len() % cfg.record_every == 0 {
            control.push(ControlPoint {
                time: t,
                v_c: st.v_c(cfg),
                v_th_fb: st.v_th_fb,
            });
        }
        rising_edges.push(t);
        recovered_bits.push(b_cur);
        if let (Some(bm), true) = (b_mid, centres >= 1) {
            let decision = alexander_decide(b_prev1, bm, b_cur);
            match decision {
                PdDecision::ClockEarly => counts.early += 1,
                PdDecision::ClockLate => counts.late += 1,
                PdDecision::Hold => counts.hold += 1,
            }
            st.pump = pump_current(cfg, decision);
            if centres >= 2 && cfg.vth_enabled {
                let action = threshold_decide(PhaseSamples::new(b_prev2, b_prev1, bm, b_cur));
                match action {
                    ThresholdAction::Increase => counts.vth_up += 1,
                    ThresholdAction::Decrease => counts.vth_down += 1,
                    ThresholdAction::None => {}
                }
                st.v_th_fb = threshold_integrator(st.v_th_fb, action, cfg.vth_gain, cfg.vth_limit);
            }
        }
        b_prev2 = b_prev1;
        b_prev1 = b_cur;
        centres = (centres + 1).min(2);
        b_mid = None;
    }

    let lock_time = lock_detect(&falling_edges, data.ui()).map(|l| l.time);
    Ok(SimTrace {
        ui: data.ui(),
        falling_edges,
        rising_edges,
        recovered_bits,
        control,
        counts,
        edge_ones,
        lock_time,
        final_state: st,
    })
}

/// Time for the VCO phase to advance by `dphi` rad with the current pump
/// current held constant: solves pi*kvco*i/C * t^2 + 2*pi*f * t = dphi.
fn time_to_phase(st: &CdrState, cfg: &LoopConfig, dphi: f64) -> Result<f64> {
    let f = st.frequency(cfg);
    if !(f > 0.0) {
        return Err(Error::SimulationFault {
            time: st.time,
            reason: format!("VCO frequency {f:.4e} Hz is not positive"),
        });
    }
    let a = PI * cfg.kvco * st.pump / cfg.c_filter;
    let b = TAU * f;
    let disc = b * b + 4.0 * a * dphi;
    if disc < 0.0 {
        return Err(Error::SimulationFault {
            time: st.time,
            reason: "VCO frequency reaches zero before the next clock edge".into(),
        });
    }
    // numerically stable root of a t^2 + b t - dphi = 0
    Ok(2.0 * dphi / (b + disc.sqrt()))
}
