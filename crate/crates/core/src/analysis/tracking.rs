//! Settling of the tracked edge-sampler threshold.

use crate::cdrloop::SimTrace;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SettlingReport {
    pub initial: f64,
    /// Mean and standard deviation over the last fifth of the run.
    pub final_mean: f64,
    pub final_std: f64,
    /// First time after which the smoothed threshold stays within `band` of
    /// the final mean for the rest of the run.
    pub settling_time: Option<f64>,
    pub band: f64,
}

/// The settling band is 2 % of the total excursion, but never narrower than
/// one integrator step. The band is applied to a trailing moving average
/// spanning 2 % of the record, so dither around the settled value does not
/// count as an excursion.
pub fn settling(trace: &SimTrace, gain: f64) -> Result<SettlingReport> {
    let pts = &trace.control;
    if pts.len() < 10 {
        return Err(Error::InsufficientData {
            what: "control samples",
            needed: 10,
            got: pts.len(),
        });
    }
    let tail = &pts[pts.len() * 4 / 5..];
    let n = tail.len() as f64;
    let mean = tail.iter().map(|p| p.v_th_fb).sum::<f64>() / n;
    let std = (tail.iter().map(|p| (p.v_th_fb - mean).powi(2)).sum::<f64>() / n).sqrt();
    let initial = pts[0].v_th_fb;
    let band = (0.02 * (mean - initial).abs()).max(gain);
    let win = (pts.len() / 50).max(1);
    let mut acc = 0.0;
    let mut smoothed = Vec::with_capacity(pts.len());
    for (i, p) in pts.iter().enumerate() {
        acc += p.v_th_fb;
        if i >= win {
            acc -= pts[i - win].v_th_fb;
        }
        smoothed.push(acc / (i + 1).min(win) as f64);
    }
    let last_out = smoothed.iter().rposition(|v| (v - mean).abs() > band);
    let settling_time = match last_out {
        None => Some(pts[0].time),
        Some(i) if i + 1 < pts.len() - tail.len() => Some(pts[i + 1].time),
        Some(_) => None,
    };
    Ok(SettlingReport {
        initial,
        final_mean: mean,
        final_std: std,
        settling_time,
        band,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cdrloop::{CdrState, ControlPoint, DecisionCounts, LoopConfig};

    fn trace(values: impl Iterator<Item = f64>) -> SimTrace {
        let control = values
            .enumerate()
            .map(|(i, v)| ControlPoint {
                time: i as f64,
                v_c: 0.0,
                v_th_fb: v,
            })
            .collect();
        SimTrace {
            ui: 1.0,
            falling_edges: vec![],
            rising_edges: vec![],
            recovered_bits: vec![],
            control,
            counts: DecisionCounts::default(),
            edge_ones: 0,
            lock_time: None,
            final_state: CdrState::new(&LoopConfig::default()),
        }
    }

    #[test]
    fn exponential_approach_with_dither() {
        let g = 1e-4;
        let tr = trace((0..5000).map(|i| {
            let t = i as f64;
            let dither = if i % 2 == 0 { 2.0 * g } else { -2.0 * g };
            -0.01 * (1.0 - (-t / 300.0).exp()) + dither
        }));
        let s = settling(&tr, g).unwrap();
        assert!((s.final_mean + 0.01).abs() < 1e-5);
        assert!((s.final_std - 2.0 * g).abs() < 1e-5);
        assert!((s.band - 0.02 * (0.01 + 2.0 * g)).abs() < 1e-7);
        // Pure exponential leaves a 2 % band at 300 ln 50 = 1174; the
        // 100-sample trailing average lags by about half its width.
        let ts = s.settling_time.unwrap();
        assert!((1174.0..1300.0).contains(&ts), "{ts}");
    }

    #[test]
    fn never_settles() {
        let tr = trace((0..1000).map(|i| i as f64 * 1e-3));
        assert_eq!(settling(&tr, 1e-6).unwrap().settling_time, None);
    }

    #[test]
    fn constant_is_settled_from_start() {
        let s = settling(&trace(std::iter::repeat_n(0.0, 100)), 0.0).unwrap();
        assert_eq!(s.settling_time, Some(0.0));
        assert_eq!(s.final_std, 0.0);
    }

    #[test]
    fn short_record_rejected() {
        assert!(settling(&trace(std::iter::repeat_n(0.0, 5)), 1e-6).is_err());
    }
}
