//! Recovered-clock jitter and lock detection.

use crate::cdrloop::SimTrace;
use crate::{Error, Result};

/// Edges per drift-check window.
pub const LOCK_WINDOW: usize = 1000;
/// The locked tail must stay inside this unwrapped phase range.
pub const LOCK_RANGE_UI: f64 = 0.25;
/// Largest linear drift accepted across the locked tail.
pub const LOCK_DRIFT_UI: f64 = 0.15;
/// The locked tail must also cover this fraction of all edges.
pub const LOCK_TAIL_FRACTION: f64 = 0.1;
/// Minimum post-warm-up edges for a jitter measurement.
pub const MIN_MEASURED_EDGES: usize = 10_000;
/// Edges always discarded at the start, as a fraction of the run.
pub const WARMUP_FRACTION: f64 = 0.2;
pub const HISTOGRAM_BINS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lock {
    pub edge_index: usize,
    pub time: f64,
}

/// Phase of every edge against the nominal UI grid, unwrapped so that
/// consecutive values never jump by more than half a UI. In UI.
pub fn unwrap_phases(edges: &[f64], ui: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(edges.len());
    let mut prev_raw = 0.0;
    let mut acc = 0.0;
    for (i, &t) in edges.iter().enumerate() {
        let raw = (t / ui).rem_euclid(1.0);
        if i == 0 {
            acc = raw;
        } else {
            let mut d = raw - prev_raw;
            d -= d.round();
            acc += d;
        }
        prev_raw = raw;
        out.push(acc);
    }
    out
}

fn fitted_slope(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &v) in y.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (v - my);
        sxx += dx * dx;
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Earliest edge from which the recovered clock stays locked to the end of
/// the run: the unwrapped edge phase over the rest of the run spans less than
/// [`LOCK_RANGE_UI`], drifts less than [`LOCK_DRIFT_UI`], and that tail is at
/// least two windows and a tenth of the run long.
pub fn lock_detect(edges: &[f64], ui: f64) -> Option<Lock> {
    let n = edges.len();
    let min_tail = (2 * LOCK_WINDOW).max((n as f64 * LOCK_TAIL_FRACTION).ceil() as usize);
    if n < min_tail {
        return None;
    }
    let p = unwrap_phases(edges, ui);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut start = n;
    for i in (0..n).rev() {
        lo = lo.min(p[i]);
        hi = hi.max(p[i]);
        if hi - lo >= LOCK_RANGE_UI {
            break;
        }
        start = i;
    }
    let tail = &p[start..];
    if tail.len() < min_tail {
        return None;
    }
    if (fitted_slope(tail) * tail.len() as f64).abs() >= LOCK_DRIFT_UI {
        return None;
    }
    Some(Lock {
        edge_index: start,
        time: edges[start],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct JitterReport {
    /// max - min of the measured edge phase (no tail trimming).
    pub pk_pk_ui: f64,
    /// 0.1 % to 99.9 % quantile spread, for comparison.
    pub quantile_pk_pk_ui: f64,
    pub rms_ui: f64,
    /// Mean edge phase relative to the bit boundary, in [-0.5, 0.5).
    pub mean_phase_ui: f64,
    /// Edge phase histogram over mean +- 0.5 UI.
    pub histogram: Vec<u64>,
    pub n_edges: usize,
    pub warmup_discarded: usize,
    pub lock: Lock,
}

/// Peak-to-peak jitter of the falling (edge-sampling) clock edges after lock.
pub fn measure_jitter(trace: &SimTrace, ui: f64) -> Result<JitterReport> {
    let edges = &trace.falling_edges;
    let lock = match lock_detect(edges, ui) {
        Some(l) => l,
        None => {
            let p = unwrap_phases(edges, ui);
            let drift = match (p.first(), p.last()) {
                (Some(a), Some(b)) => b - a,
                _ => 0.0,
            };
            return Err(Error::NoLock {
                drift_ui: drift,
                edges: edges.len(),
            });
        }
    };
    let warmup = lock.edge_index.max((edges.len() as f64 * WARMUP_FRACTION) as usize);
    let measured = edges.len() - warmup;
    if measured < MIN_MEASURED_EDGES {
        return Err(Error::InsufficientData {
            what: "post-lock edges",
            needed: MIN_MEASURED_EDGES,
            got: measured,
        });
    }
    let p = &unwrap_phases(edges, ui)[warmup..];
    let n = p.len() as f64;
    let mean = p.iter().sum::<f64>() / n;
    let rms = (p.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let (lo, hi) = p
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let mut sorted = p.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |f: f64| sorted[((sorted.len() - 1) as f64 * f).round() as usize];
    let mut histogram = vec![0u64; HISTOGRAM_BINS];
    for &v in p {
        let x = (v - mean + 0.5) * HISTOGRAM_BINS as f64;
        if x >= 0.0 && (x as usize) < HISTOGRAM_BINS {
            histogram[x as usize] += 1;
        }
    }
    let mut mean_phase = mean.rem_euclid(1.0);
    if mean_phase >= 0.5 {
        mean_phase -= 1.0;
    }
    Ok(JitterReport {
        pk_pk_ui: hi - lo,
        quantile_pk_pk_ui: q(0.999) - q(0.001),
        rms_ui: rms,
        mean_phase_ui: mean_phase,
        histogram,
        n_edges: p.len(),
        warmup_discarded: warmup,
        lock,
    })
}
