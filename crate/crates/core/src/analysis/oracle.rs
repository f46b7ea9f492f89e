//! Markov-chain model of the recovered edge on the one-bit-ISI eye.
//!
//! With the integral path negligible, each pump pulse moves the clock edge by
//! one fixed step. Which way depends only on the transition pattern of the
//! current bit pair and on whether the edge sits before or after that
//! pattern's crossing of the sampler threshold: before the crossing the edge
//! sample still equals the previous bit (clock early, delay), after it the
//! sample equals the current bit (clock late, advance). Non-transitions hold.
//! Random data makes each of the four transition patterns occur with
//! probability 1/8, but consecutive patterns share two bits, so the pattern
//! at one edge constrains the next (a falling-settled delay can only be
//! followed by a hold or a rising-unsettled move). The chain therefore runs
//! on (edge position, last two bits); its position marginal predicts the
//! jitter. The memoryless chain on position alone is kept for comparison.

use super::jitter::{measure_jitter, JitterReport};
use crate::cdrloop::{run_cdr, LoopConfig};
use crate::channel::{trace_for_pattern, OneBitIsiModel, PatternTrace, TransitionTrace};
use crate::stimulus::{generate_bits, SourceKind};
use crate::{Error, Result};

/// Smallest grid used when the step is coarse.
pub const MIN_GRID: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleParams {
    /// Edge displacement per pump pulse, seconds.
    pub step: f64,
    /// Grid cells per UI; 0 picks `cells_per_step` cells per step (at least
    /// [`MIN_GRID`]).
    pub grid: usize,
    /// Subdivision of a step when the grid is picked automatically. The
    /// uniform start spreads mass over every sub-lattice, so the result
    /// averages over the unknown alignment of the clock's step lattice with
    /// the crossing times.
    pub cells_per_step: usize,
    /// Positions with at least this stationary probability form the support.
    pub min_probability: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Carry the last two bits in the chain state. When false every clock
    /// cycle draws its pattern independently.
    pub pattern_memory: bool,
}

impl OracleParams {
    pub fn new(step: f64) -> Self {
        OracleParams {
            step,
            grid: 0,
            cells_per_step: 8,
            min_probability: 1e-5,
            tolerance: 1e-12,
            max_iterations: 20_000_000,
            pattern_memory: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub ui: f64,
    pub threshold: f64,
    /// Cell centres, seconds from the bit boundary.
    pub positions: Vec<f64>,
    pub probability: Vec<f64>,
    /// Expected signed move per clock cycle, in steps (positive = delay).
    pub drift: Vec<f64>,
    pub step_cells: usize,
    /// Extent of the support, seconds; `hi` may exceed the grid on wrap-around.
    pub support: (f64, f64),
    pub support_width_ui: f64,
    /// False when the threshold lies outside every transition trace.
    pub transitions_visible: bool,
    pub residual: f64,
    pub iterations: usize,
}

impl OracleResult {
    pub fn cell_width(&self) -> f64 {
        self.ui / self.positions.len() as f64
    }

    /// Most likely edge position, seconds.
    pub fn mode(&self) -> f64 {
        let i = (0..self.probability.len())
            .max_by(|&a, &b| self.probability[a].total_cmp(&self.probability[b]))
            .unwrap_or(0);
        self.positions[i]
    }
}

pub fn markov_oracle(model: &OneBitIsiModel, threshold: f64, params: &OracleParams) -> Result<OracleResult> {
    let ui = model.ui();
    if !(params.step > 0.0 && params.step < ui / 2.0) {
        return Err(Error::Config(format!(
            "oracle step {} s must be in (0, UI/2)",
            params.step
        )));
    }
    if !(params.min_probability > 0.0 && params.min_probability < 1.0) {
        return Err(Error::Config("min_probability must be in (0, 1)".into()));
    }
    let grid = if params.grid == 0 {
        ((ui / params.step).round() as usize * params.cells_per_step.max(1)).max(MIN_GRID)
    } else {
        params.grid
    };
    if grid < MIN_GRID {
        return Err(Error::Config(format!("oracle grid {grid} is below {MIN_GRID} cells")));
    }
    let cell = ui / grid as f64;
    let s = ((params.step / cell).round() as usize).max(1);
    let (lo, hi) = model.window();
    let center = (lo + hi) / 2.0;
    let positions: Vec<f64> = (0..grid)
        .map(|j| center + ((j as f64 + 0.5) / grid as f64 - 0.5) * ui)
        .collect();

    let crossings: Vec<f64> = TransitionTrace::ALL
        .iter()
        .map(|&t| model.crossing_time(t, threshold))
        .collect();
    // probability that pattern `t` moves an edge at `x` up (delay) / down
    let split = |x: f64, t: usize| -> (f64, f64) {
        let c = crossings[t];
        if x < c {
            (1.0, 0.0)
        } else if x > c {
            (0.0, 1.0)
        } else {
            (0.5, 0.5)
        }
    };
    let mut drift = vec![0.0; grid];
    for (j, &x) in positions.iter().enumerate() {
        for t in 0..4 {
            let (u, d) = split(x, t);
            drift[j] += 0.125 * (u - d);
        }
    }

    // history h = 2 b[k-1] + b[k]; a single pseudo-history when memoryless
    let histories = if params.pattern_memory { 4 } else { 1 };
    let n = grid * histories;
    // per state and new bit: (next history, p_up, p_down)
    let mut moves = Vec::with_capacity(n * 2);
    for &x in &positions {
        for h in 0..histories {
            for c in 0..2usize {
                if params.pattern_memory {
                    let (b2, b1) = (h >> 1 & 1 == 1, h & 1 == 1);
                    let next = (h << 1 & 2) | c;
                    let (u, d) = match trace_for_pattern(b2, b1, c == 1) {
                        PatternTrace::NoTransition { .. } => (0.0, 0.0),
                        PatternTrace::Transition(t) => split(x, trace_index(t)),
                    };
                    moves.push((next, 0.5 * u, 0.5 * d));
                } else {
                    // c = 0: hold; c = 1: one of the four traces, 1/4 each
                    let (mut u, mut d) = (0.0, 0.0);
                    if c == 1 {
                        for t in 0..4 {
                            let (a, b) = split(x, t);
                            u += 0.125 * a;
                            d += 0.125 * b;
                        }
                    }
                    moves.push((0, u, d));
                }
            }
        }
    }

    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < params.max_iterations {
        next.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..grid {
            let above = (j + s) % grid;
            let below = (j + grid - s) % grid;
            for h in 0..histories {
                let mass = pi[j * histories + h];
                if mass == 0.0 {
                    continue;
                }
                for c in 0..2 {
                    let (nh, u, d) = moves[(j * histories + h) * 2 + c];
                    next[above * histories + nh] += mass * u;
                    next[below * histories + nh] += mass * d;
                    next[j * histories + nh] += mass * (0.5 - u - d);
                }
            }
        }
        let total: f64 = next.iter().sum();
        residual = 0.0;
        for k in 0..n {
            let v = next[k] / total;
            residual += (v - pi[k]).abs();
            pi[k] = v;
        }
        iterations += 1;
        if residual < params.tolerance {
            break;
        }
    }
    if residual >= params.tolerance {
        return Err(Error::NonConvergence { residual, iterations });
    }
    let pi: Vec<f64> = pi.chunks(histories).map(|c| c.iter().sum()).collect();

    let mode = (0..grid).max_by(|&a, &b| pi[a].total_cmp(&pi[b])).unwrap_or(0);
    let half = grid as isize / 2;
    let (mut dmin, mut dmax) = (0isize, 0isize);
    for (j, &p) in pi.iter().enumerate() {
        if p >= params.min_probability {
            let d = (j as isize - mode as isize + half).rem_euclid(grid as isize) - half;
            dmin = dmin.min(d);
            dmax = dmax.max(d);
        }
    }
    let at = |d: isize| positions[mode] + d as f64 * cell;
    let support = (at(dmin), at(dmax));
    Ok(OracleResult {
        ui,
        threshold,
        positions,
        probability: pi,
        drift,
        step_cells: s,
        support,
        support_width_ui: (dmax - dmin) as f64 / grid as f64,
        transitions_visible: model.level_inside_eye(threshold),
        residual,
        iterations,
    })
}

fn trace_index(t: TransitionTrace) -> usize {
    TransitionTrace::ALL.iter().position(|&x| x == t).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleComparison {
    pub oracle: OracleResult,
    /// `None` when the simulated loop did not lock.
    pub sim: Option<JitterReport>,
    /// Simulated pk-pk over the oracle support width.
    pub ratio: Option<f64>,
    /// The loop-filter time constant is at least ten times the run, so the
    /// integral path cannot build up a frequency offset.
    pub integral_negligible: bool,
}

/// Runs the closed loop on the synthesized eye with the edge sampler at
/// `threshold` and compares its jitter with the oracle's support. The
/// support floor is one visit over the measured window.
pub fn oracle_vs_sim(
    model: &OneBitIsiModel,
    threshold: f64,
    cfg: &LoopConfig,
    n_bits: usize,
    samples_per_ui: usize,
    seed: u64,
) -> Result<OracleComparison> {
    oracle_vs_sim_with(
        model,
        threshold,
        cfg,
        OracleParams::new(cfg.bang_bang_step()),
        n_bits,
        samples_per_ui,
        seed,
    )
}

/// Same, with the oracle's grid and solver settings taken from `params`. The
/// step always comes from the loop, and the support floor from the run.
pub fn oracle_vs_sim_with(
    model: &OneBitIsiModel,
    threshold: f64,
    cfg: &LoopConfig,
    params: OracleParams,
    n_bits: usize,
    samples_per_ui: usize,
    seed: u64,
) -> Result<OracleComparison> {
    let bits = generate_bits(SourceKind::Uniform, n_bits, seed)?;
    let w = model.synthesize(&bits, samples_per_ui)?;
    let sim_cfg = LoopConfig {
        v_off: -threshold,
        initial_vth: 0.0,
        vth_enabled: false,
        ..cfg.clone()
    };
    let trace = run_cdr(&w, &sim_cfg)?;
    let sim = measure_jitter(&trace, model.ui()).ok();
    let mut params = OracleParams {
        step: cfg.bang_bang_step(),
        ..params
    };
    if let Some(r) = &sim {
        params.min_probability = 1.0 / r.n_edges as f64;
    }
    let oracle = markov_oracle(model, threshold, &params)?;
    let ratio = sim.as_ref().map(|r| r.pk_pk_ui / oracle.support_width_ui);
    Ok(OracleComparison {
        oracle,
        sim,
        ratio,
        integral_negligible: cfg.r_filter * cfg.c_filter >= 10.0 * n_bits as f64 * model.ui(),
    })
}
