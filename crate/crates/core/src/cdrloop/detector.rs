//! Decision logic: samplers, the Alexander phase detector and the sampling
//! threshold detector.

use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PdDecision {
    /// Edge sample agrees with the previous bit: the clock is early, delay it.
    ClockEarly,
    /// Edge sample agrees with the current bit: the clock is late, advance it.
    ClockLate,
    Hold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ThresholdAction {
    Increase,
    Decrease,
    None,
}

/// b_prev2, b_prev1 and b_cur are centre samples on consecutive rising
/// edges; b_mid is the edge sample taken on the falling edge between b_prev1
/// and b_cur.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PhaseSamples {
    pub b_prev2: bool,
    pub b_prev1: bool,
    pub b_mid: bool,
    pub b_cur: bool,
}

impl PhaseSamples {
    pub fn new(b_prev2: bool, b_prev1: bool, b_mid: bool, b_cur: bool) -> Self {
        PhaseSamples {
            b_prev2,
            b_prev1,
            b_mid,
            b_cur,
        }
    }

    /// Row index in the order b[-2] b[-1] b_m b[0], MSB first.
    pub fn index(&self) -> usize {
        (self.b_prev2 as usize) << 3 | (self.b_prev1 as usize) << 2 | (self.b_mid as usize) << 1 | self.b_cur as usize
    }

    pub fn from_index(i: usize) -> Self {
        PhaseSamples::new(i & 8 != 0, i & 4 != 0, i & 2 != 0, i & 1 != 0)
    }
}

/// Comparator with a metastability band: inputs within `band` of the
/// threshold resolve by a fair coin from `rng`.
pub fn sample_comparator<R: Rng + ?Sized>(v: f64, threshold: f64, band: f64, rng: &mut R) -> bool {
    let d = v - threshold;
    if d.abs() < band {
        rng.gen_bool(0.5)
    } else {
        d > 0.0
    }
}

/// Switching threshold of the edge sampler.
///
/// A static offset `v_off` added at the sampler's D input moves its switching
/// point to `-v_off`; the tracked threshold `v_th_fb` is the threshold itself.
pub fn effective_threshold(v_off: f64, v_th_fb: f64) -> f64 {
    v_th_fb - v_off
}

pub fn alexander_decide(a: bool, b: bool, c: bool) -> PdDecision {
    match (a == b, b == c) {
        (true, true) => PdDecision::Hold,
        (true, false) => PdDecision::ClockEarly,
        (false, true) => PdDecision::ClockLate,
        // a == c != b: edge sample disagrees with both neighbours
        (false, false) => PdDecision::Hold,
    }
}

/// UP = !b[-2] & b_m & (b[-1] ^ b[0]),  DN = !b[-2] & !b_m & (b[-1] ^ b[0]).
pub fn threshold_decide(s: PhaseSamples) -> ThresholdAction {
    let transition = s.b_prev1 ^ s.b_cur;
    let up = !s.b_prev2 & s.b_mid & transition;
    let dn = !s.b_prev2 & !s.b_mid & transition;
    match (up, dn) {
        (true, false) => ThresholdAction::Increase,
        (false, true) => ThresholdAction::Decrease,
        (false, false) => ThresholdAction::None,
        (true, true) => unreachable!("UP and DN are mutually exclusive"),
    }
}

/// Action column of the 16-row truth table, indexed by [`PhaseSamples::index`].
/// Rows where a decision is possible but unused map to `None`.
pub const THRESHOLD_TABLE: [ThresholdAction; 16] = {
    use ThresholdAction::{Decrease as D, Increase as I, None as N};
    [
        N, D, N, I, // 0000 0001 0010 0011
        D, N, I, N, // 0100 0101 0110 0111
        N, N, N, N, // 1000 1001 1010 1011
        N, N, N, N, // 1100 1101 1110 1111
    ]
};

pub fn threshold_decide_table(s: PhaseSamples) -> ThresholdAction {
    THRESHOLD_TABLE[s.index()]
}
