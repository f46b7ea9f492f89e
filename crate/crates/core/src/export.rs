//! CSV interchange files. Every file starts with a `#` provenance line
//! supplied by the caller, then a header row, then numeric rows.

use std::io::{self, Write};

use crate::analysis::{OracleResult, SweepCurve};
use crate::cdrloop::SimTrace;
use crate::channel::{CrossingHistogram, EyeDiagram};

pub const SWEEP_HEADER: &str = "v_off_mV,eff_threshold_mV,jitter_pkpk_pct_ui,locked";
pub const ORACLE_HEADER: &str = "edge_phase_ui,probability,drift_steps";
pub const CONTROL_HEADER: &str = "time_s,v_c_V,v_th_fb_V";
pub const EDGES_HEADER: &str = "edge_index,falling_edge_time_s";
pub const EYE_HEADER: &str = "time_ui,voltage_mV,hits";
pub const CROSSINGS_HEADER: &str = "phase_ui,count,smoothed";

fn preamble<W: Write>(w: &mut W, comment: &str, header: &str) -> io::Result<()> {
    writeln!(w, "# {comment}")?;
    writeln!(w, "{header}")
}

/// Unlocked points carry an empty jitter field.
pub fn write_sweep<W: Write>(w: &mut W, comment: &str, curve: &SweepCurve) -> io::Result<()> {
    preamble(w, comment, SWEEP_HEADER)?;
    for p in &curve.points {
        let j = p.pk_pk_ui.map(|j| format!("{}", j * 100.0)).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{}",
            p.v_off * 1e3,
            p.effective_threshold * 1e3,
            j,
            p.locked
        )?;
    }
    Ok(())
}

pub fn write_oracle<W: Write>(w: &mut W, comment: &str, r: &OracleResult) -> io::Result<()> {
    preamble(w, comment, ORACLE_HEADER)?;
    for ((x, p), d) in r.positions.iter().zip(&r.probability).zip(&r.drift) {
        writeln!(w, "{},{},{}", x / r.ui, p, d)?;
    }
    Ok(())
}

pub fn write_control<W: Write>(w: &mut W, comment: &str, trace: &SimTrace) -> io::Result<()> {
    preamble(w, comment, CONTROL_HEADER)?;
    for p in &trace.control {
        writeln!(w, "{},{},{}", p.time, p.v_c, p.v_th_fb)?;
    }
    Ok(())
}

pub fn write_edges<W: Write>(w: &mut W, comment: &str, trace: &SimTrace) -> io::Result<()> {
    preamble(w, comment, EDGES_HEADER)?;
    for (i, t) in trace.falling_edges.iter().enumerate() {
        writeln!(w, "{i},{t}")?;
    }
    Ok(())
}

/// Only non-empty bins are written.
pub fn write_eye<W: Write>(w: &mut W, comment: &str, eye: &EyeDiagram) -> io::Result<()> {
    preamble(w, comment, EYE_HEADER)?;
    for t in 0..eye.time_bins {
        for (v, &hits) in eye.column(t).iter().enumerate() {
            if hits > 0 {
                writeln!(w, "{},{},{}", eye.time_of_bin(t), eye.voltage_of_bin(v) * 1e3, hits)?;
            }
        }
    }
    Ok(())
}

pub fn write_crossings<W: Write>(w: &mut W, comment: &str, h: &CrossingHistogram) -> io::Result<()> {
    preamble(w, comment, CROSSINGS_HEADER)?;
    let bw = h.bin_width();
    for (i, (c, s)) in h.counts.iter().zip(&h.smoothed).enumerate() {
        writeln!(w, "{},{},{}", (i as f64 + 0.5) * bw, c, s)?;
    }
    Ok(())
}
