//! Abstract eye with inter-symbol interference from exactly one previous bit.
//!
//! A bit that follows an identical bit sits at the settled level `±A`; a bit
//! that follows a transition has not finished settling and sits at `±a`
//! (`a < A`). Every transition is a raised-cosine segment of fixed width from
//! the previous bit's level to `±a`, so the four transition traces are
//!
//! | pattern `b[-2] b[-1] b[0]` | trace             | span        |
//! |----------------------------|-------------------|-------------|
//! | 0 0 1                      | rising, settled   | -A -> +a    |
//! | 1 1 0                      | falling, settled  | +A -> -a    |
//! | 1 0 1                      | rising, unsettled | -a -> +a    |
//! | 0 1 0                      | falling, unsettled| +a -> -a    |
//!
//! At the mid level `R = 0` the unsettled pair crosses at `tau1` and the
//! settled pair at `tau3`. The rising-settled and falling-unsettled traces
//! intersect at level `Q < 0` and time `tau2`; the rising-unsettled and
//! falling-settled traces intersect at `P = -Q`, also at `tau2`. At level Q the
//! remaining traces cross at `tau0` (rising unsettled) and `tau4` (falling
//! settled).
//!
//! All times are seconds relative to the nominal bit boundary.

use std::f64::consts::PI;

use crate::stimulus::{BitStream, Waveform};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransitionTrace {
    RisingSettled,
    FallingUnsettled,
    RisingUnsettled,
    FallingSettled,
}

impl TransitionTrace {
    pub const ALL: [TransitionTrace; 4] = [
        TransitionTrace::RisingSettled,
        TransitionTrace::FallingUnsettled,
        TransitionTrace::RisingUnsettled,
        TransitionTrace::FallingSettled,
    ];

    /// X1..X4 in the order of the patterns 001, 010, 101, 110.
    pub fn label(self) -> &'static str {
        match self {
            TransitionTrace::RisingSettled => "X1",
            TransitionTrace::FallingUnsettled => "X2",
            TransitionTrace::RisingUnsettled => "X3",
            TransitionTrace::FallingSettled => "X4",
        }
    }

    pub fn is_rising(self) -> bool {
        matches!(self, TransitionTrace::RisingSettled | TransitionTrace::RisingUnsettled)
    }

    pub fn is_settled(self) -> bool {
        matches!(self, TransitionTrace::RisingSettled | TransitionTrace::FallingSettled)
    }

    /// The 3-bit pattern (b[-2], b[-1], b[0]) that produces this trace.
    pub fn pattern(self) -> (bool, bool, bool) {
        match self {
            TransitionTrace::RisingSettled => (false, false, true),
            TransitionTrace::FallingUnsettled => (false, true, false),
            TransitionTrace::RisingUnsettled => (true, false, true),
            TransitionTrace::FallingSettled => (true, true, false),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternTrace {
    /// b[-1] == b[0]: the signal stays on the `high` side.
    NoTransition {
        high: bool,
    },
    Transition(TransitionTrace),
}

/// Which of the named levels a threshold refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NamedLevel {
    P,
    Q,
    R,
}

impl std::str::FromStr for NamedLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "P" => Ok(NamedLevel::P),
            "Q" => Ok(NamedLevel::Q),
            "R" => Ok(NamedLevel::R),
            other => Err(Error::Config(format!("unknown level `{other}` (expected P, Q or R)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneBitIsiModel {
    ui: f64,
    settled: f64,
    unsettled: f64,
    center: f64,
    width: f64,
    taus: [f64; 5],
    level_q: f64,
}

/// Raised-cosine progress 0 -> 1 across the transition window.
fn progress(theta: f64) -> f64 {
    (1.0 - theta.cos()) / 2.0
}

impl OneBitIsiModel {
    /// Builds the model from the two mid-level crossing times.
    ///
    /// * `tau1` — crossing of the unsettled traces at R (also the window centre)
    /// * `tau3` — crossing of the settled traces at R
    /// * `width` — duration of a transition segment
    pub fn new(ui: f64, amplitude: f64, tau1: f64, tau3: f64, width: f64) -> Result<Self> {
        if !(ui > 0.0 && amplitude > 0.0 && width > 0.0) {
            return Err(Error::Config(
                "ui, amplitude and transition width must be positive".into(),
            ));
        }
        if !(tau1 < tau3) {
            return Err(Error::Config(format!(
                "tau ordering violated: tau1 = {tau1:e} must be < tau3 = {tau3:e}"
            )));
        }
        if !(tau3 - tau1 < width / 2.0) {
            return Err(Error::Config(format!(
                "tau3 - tau1 = {:e} must be below half the transition width ({:e})",
                tau3 - tau1,
                width / 2.0
            )));
        }
        if tau1.abs() + width / 2.0 > ui / 2.0 {
            return Err(Error::Config("transition window does not fit inside one UI".into()));
        }
        let theta3 = PI * (0.5 + (tau3 - tau1) / width);
        let c = theta3.cos();
        let a = amplitude * (1.0 + c) / (1.0 - c);
        let big = amplitude;
        let g_star = (big + a) / (big + 3.0 * a);
        let level_q = a - 2.0 * a * g_star;
        let start = tau1 - width / 2.0;
        let time_of = |g: f64| start + width * (1.0 - 2.0 * g).acos() / PI;
        let tau0 = time_of((level_q + a) / (2.0 * a));
        let tau2 = time_of(g_star);
        let tau4 = time_of((big - level_q) / (big + a));
        let taus = [tau0, tau1, tau2, tau3, tau4];
        if !taus.windows(2).all(|p| p[0] < p[1]) {
            return Err(Error::Config(format!("derived tau ordering violated: {taus:?}")));
        }
        Ok(OneBitIsiModel {
            ui,
            settled: big,
            unsettled: a,
            center: tau1,
            width,
            taus,
            level_q,
        })
    }

    /// Symmetric model: transition window of `width_ui` centred on the bit
    /// boundary, mid-level crossings `sep_ui` apart. Arguments in UI.
    pub fn centered(ui: f64, amplitude: f64, sep_ui: f64, width_ui: f64) -> Result<Self> {
        Self::new(ui, amplitude, 0.0, sep_ui * ui, width_ui * ui)
    }

    pub fn ui(&self) -> f64 {
        self.ui
    }

    pub fn settled_level(&self) -> f64 {
        self.settled
    }

    pub fn unsettled_level(&self) -> f64 {
        self.unsettled
    }

    /// tau0 < tau1 < tau2 < tau3 < tau4, seconds from the bit boundary.
    pub fn taus(&self) -> [f64; 5] {
        self.taus
    }

    pub fn tau(&self, i: usize) -> f64 {
        self.taus[i]
    }

    pub fn level_p(&self) -> f64 {
        -self.level_q
    }

    pub fn level_q(&self) -> f64 {
        self.level_q
    }

    pub fn level_r(&self) -> f64 {
        0.0
    }

    pub fn level(&self, which: NamedLevel) -> f64 {
        match which {
            NamedLevel::P => self.level_p(),
            NamedLevel::Q => self.level_q(),
            NamedLevel::R => self.level_r(),
        }
    }

    pub fn window(&self) -> (f64, f64) {
        (self.center - self.width / 2.0, self.center + self.width / 2.0)
    }

    /// (start level, end level) of a transition trace.
    pub fn endpoints(&self, trace: TransitionTrace) -> (f64, f64) {
        let (big, a) = (self.settled, self.unsettled);
        match trace {
            TransitionTrace::RisingSettled => (-big, a),
            TransitionTrace::FallingSettled => (big, -a),
            TransitionTrace::RisingUnsettled => (-a, a),
            TransitionTrace::FallingUnsettled => (a, -a),
        }
    }

    fn segment(&self, from: f64, to: f64, t: f64) -> f64 {
        let (lo, hi) = self.window();
        let g = if t <= lo {
            0.0
        } else if t >= hi {
            1.0
        } else {
            progress(PI * (t - lo) / self.width)
        };
        from + (to - from) * g
    }

    pub fn trace_value(&self, trace: TransitionTrace, t: f64) -> f64 {
        let (from, to) = self.endpoints(trace);
        self.segment(from, to, t)
    }

    /// Time at which `trace` crosses `level`. `-inf` when the trace is already
    /// past the level for the whole slot, `+inf` when it never reaches it.
    pub fn crossing_time(&self, trace: TransitionTrace, level: f64) -> f64 {
        let (from, to) = self.endpoints(trace);
        let g = (level - from) / (to - from);
        if g <= 0.0 {
            f64::NEG_INFINITY
        } else if g >= 1.0 {
            f64::INFINITY
        } else {
            let (lo, _) = self.window();
            lo + self.width * (1.0 - 2.0 * g).acos() / PI
        }
    }

    /// Whether any transition trace passes through `level`.
    pub fn level_inside_eye(&self, level: f64) -> bool {
        TransitionTrace::ALL
            .iter()
            .any(|&t| self.crossing_time(t, level).is_finite())
    }

    /// Synthesizes the strictly-1-bit-ISI waveform for `bits`; bit k occupies
    /// [k UI, (k+1) UI) and the slot around boundary k follows the pattern
    /// (b[k-2], b[k-1], b[k]).
    pub fn synthesize(&self, bits: &BitStream, samples_per_ui: usize) -> Result<Waveform> {
        if bits.is_empty() {
            return Err(Error::EmptyStream);
        }
        let b = &bits.bits;
        let n = b.len();
        let bit = |k: isize| -> bool { b[k.clamp(0, n as isize - 1) as usize] };
        let level = |k: isize| -> f64 {
            let v = if bit(k) == bit(k - 1) {
                self.settled
            } else {
                self.unsettled
            };
            if bit(k) {
                v
            } else {
                -v
            }
        };
        let ts = self.ui / samples_per_ui as f64;
        let mut samples = Vec::with_capacity(n * samples_per_ui);
        for i in 0..n * samples_per_ui {
            let t = (i as f64 + 0.5) * ts;
            let k = (t / self.ui).round() as isize;
            let local = t - k as f64 * self.ui;
            samples.push(self.segment(level(k - 1), level(k), local));
        }
        Waveform::new(samples, self.ui, samples_per_ui, 0.0)
    }
}

pub fn trace_for_pattern(b_prev2: bool, b_prev1: bool, b_cur: bool) -> PatternTrace {
    if b_prev1 == b_cur {
        return PatternTrace::NoTransition { high: b_cur };
    }
    let settled = b_prev2 == b_prev1;
    PatternTrace::Transition(match (b_cur, settled) {
        (true, true) => TransitionTrace::RisingSettled,
        (true, false) => TransitionTrace::RisingUnsettled,
        (false, true) => TransitionTrace::FallingSettled,
        (false, false) => TransitionTrace::FallingUnsettled,
    })
}
