//! Prints the numbers the presets were tuned against: crossing clusters of
//! both channels, a coarse offset sweep on each, oracle vs simulation on the
//! one-bit-ISI eye, and threshold tracking on both channels.
//!
//! cargo run --release -p cdrlab-core --example calibrate

use cdrlab_core::analysis::{local_minima, offset_sweep, oracle_vs_sim, settling};
use cdrlab_core::cdrloop::{run_cdr, LoopConfig};
use cdrlab_core::channel::{crossing_histogram, crossing_times, ChannelPreset, NamedLevel};
use cdrlab_core::presets;

fn main() -> cdrlab_core::Result<()> {
    let bitrate = 1e9;
    let ui = 1.0 / bitrate;
    for preset in [ChannelPreset::HighBandwidth, ChannelPreset::ModerateBandwidth] {
        let link = presets::link(preset, bitrate, 20_000);
        let w = link.receive(7)?.skip_ui(presets::SETTLE_UI)?;
        let h = crossing_histogram(&crossing_times(&w, 0.0), ui)?;
        println!(
            "{}: clusters {:?} min separation {:?}",
            preset.as_str(),
            h.clusters.iter().map(|c| (c.center, c.width_bins)).collect::<Vec<_>>(),
            h.min_separation()
        );
    }

    let cfg = presets::loop_config(bitrate);
    let offsets: Vec<f64> = (-15..=15).map(|k| k as f64 * 2e-3).collect();
    for preset in [ChannelPreset::HighBandwidth, ChannelPreset::ModerateBandwidth] {
        let link = presets::link(preset, bitrate, 100_000);
        let curve = offset_sweep(&link, &cfg, &offsets, 11)?;
        println!("{} sweep:", preset.as_str());
        for p in &curve.points {
            println!("  {:+6.1} mV  {:?}", p.v_off * 1e3, p.pk_pk_ui.map(|j| j * 100.0));
        }
        println!("  minima {:?}", local_minima(&curve, 3));
    }

    let model = presets::isi_model(bitrate)?;
    println!("taus {:?} Q {}", model.taus(), model.level_q());
    let ocfg = presets::proportional_only(bitrate);
    for level in [NamedLevel::R, NamedLevel::Q, NamedLevel::P] {
        let cmp = oracle_vs_sim(&model, model.level(level), &ocfg, 100_000, 64, 3)?;
        println!(
            "{level:?}: oracle width {:.4} UI support {:?} sim {:?} ratio {:?} integral negligible {}",
            cmp.oracle.support_width_ui,
            cmp.oracle.support,
            cmp.sim.as_ref().map(|r| r.pk_pk_ui),
            cmp.ratio,
            cmp.integral_negligible
        );
    }

    for (preset, gain) in [
        (ChannelPreset::ModerateBandwidth, 5e-6),
        (ChannelPreset::ModerateBandwidth, 20e-6),
        (ChannelPreset::ModerateBandwidth, 50e-6),
        (ChannelPreset::HighBandwidth, 50e-6),
    ] {
        let w = presets::link(preset, bitrate, 200_000).receive(5)?;
        let tcfg = LoopConfig {
            vth_enabled: true,
            vth_gain: gain,
            ..cfg.clone()
        };
        let tr = run_cdr(&w, &tcfg)?;
        let s = settling(&tr, gain)?;
        println!(
            "{} gain {:.0} uV: vth {:.3} mV std {:.3} mV settle {:?} lock {:?}",
            preset.as_str(),
            gain * 1e6,
            s.final_mean * 1e3,
            s.final_std * 1e3,
            s.settling_time,
            tr.lock_time
        );
    }
    Ok(())
}
