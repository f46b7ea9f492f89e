use cdrlab_core::analysis::{lock_detect, measure_jitter, offset_sweep, unwrap_phases};
use cdrlab_core::cdrloop::{run_cdr, LoopConfig};
use cdrlab_core::channel::{crossing_histogram, crossing_times, eye_accumulate_with_grid, ChannelPreset};
use cdrlab_core::presets;
use cdrlab_core::stimulus::{generate_bits, nrz_modulate, BitStream, SourceKind, Waveform};
use cdrlab_core::Error;

const UI: f64 = 1e-9;

fn square_wave(n: usize) -> Waveform {
    let bits = BitStream::explicit((0..n).map(|i| i % 2 == 1).collect()).unwrap();
    nrz_modulate(&bits, UI, 32, 0.2).unwrap()
}

/// Signed distance of each falling edge from the nearest bit boundary, UI.
fn edge_offsets(edges: &[f64]) -> Vec<f64> {
    edges.iter().map(|t| t / UI - (t / UI).round()).collect()
}

fn spread(x: &[f64]) -> f64 {
    let hi = x.iter().cloned().fold(f64::MIN, f64::max);
    let lo = x.iter().cloned().fold(f64::MAX, f64::min);
    hi - lo
}

#[test]
fn square_wave_limit_cycle_is_two_steps() {
    let cfg = LoopConfig {
        vth_gain: 0.0,
        ..presets::loop_config(1e9)
    };
    let tr = run_cdr(&square_wave(20_000), &cfg).unwrap();
    let lock = lock_detect(&tr.falling_edges, UI).unwrap();
    let post = edge_offsets(&tr.falling_edges[lock.edge_index + 1000..]);
    let step = cfg.bang_bang_step() / UI;
    // amplitude = half the peak-to-peak excursion
    let amplitude = spread(&post) / 2.0;
    assert!(amplitude <= 2.0 * step, "amplitude {amplitude} UI, step {step} UI");
}

#[test]
fn square_wave_with_frequency_offset_locks() {
    let cfg = LoopConfig {
        f0: 1e9 * (1.0 + 100e-6),
        initial_phase: 2.0,
        ..presets::loop_config(1e9)
    };
    let tr = run_cdr(&square_wave(40_000), &cfg).unwrap();
    assert!(tr.lock_time.is_some());
    let report = measure_jitter(&tr, UI).unwrap();
    let step = cfg.bang_bang_step() / UI;
    let tail = edge_offsets(&tr.falling_edges[tr.falling_edges.len() / 2..]);
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    assert!(mean.abs() <= step, "mean edge offset {mean} UI");
    assert!(report.pk_pk_ui <= 4.0 * step, "pk-pk {}", report.pk_pk_ui);
    // the recovered clock runs at the data rate, not at f0
    let r = &tr.rising_edges;
    let k = r.len() / 2;
    let period = (r[r.len() - 1] - r[k]) / (r.len() - 1 - k) as f64;
    assert!((period / UI - 1.0).abs() < 1e-6, "period {period}");
}

#[test]
fn free_running_vco_never_locks() {
    let cfg = LoopConfig {
        f0: 1.002e9,
        icp: 1e-18,
        ..presets::loop_config(1e9)
    };
    let bits = generate_bits(SourceKind::Uniform, 20_000, 9).unwrap();
    let w = nrz_modulate(&bits, UI, 32, 0.2).unwrap();
    let tr = run_cdr(&w, &cfg).unwrap();
    assert_eq!(tr.lock_time, None);
    assert!(matches!(measure_jitter(&tr, UI), Err(Error::NoLock { .. })));
    // 2000 ppm over 20k UI slips 40 UI
    let p = unwrap_phases(&tr.falling_edges, UI);
    let slip = p[0] - p[p.len() - 1];
    assert!((slip - 40.0).abs() < 0.5, "slip {slip}");
}

#[test]
fn pull_in_is_within_twice_the_slew_estimate() {
    let cfg = LoopConfig {
        initial_phase: 0.1,
        ..presets::loop_config(1e9)
    };
    let bits = generate_bits(SourceKind::Uniform, 20_000, 10).unwrap();
    let w = nrz_modulate(&bits, UI, 32, 0.2).unwrap();
    let tr = run_cdr(&w, &cfg).unwrap();
    // The first falling edge sits half a VCO period after phase 0.1 rad,
    // 0.484 UI from the nearest boundary; at half a decision per UI and one
    // step per decision the proportional path alone slews that in
    // 0.484 / (step / 2) UI.
    let e0 = 0.5 - 0.1 / std::f64::consts::TAU;
    let step = cfg.bang_bang_step() / UI;
    let estimate = e0 / (step / 2.0) * UI;
    let t = tr.lock_time.unwrap();
    assert!(t > 0.0 && t < 2.0 * estimate, "lock at {t}, estimate {estimate}");
}

#[test]
fn sweep_repeats_exactly() {
    let link = presets::link(ChannelPreset::ModerateBandwidth, 1e9, 15_000);
    let cfg = presets::loop_config(1e9);
    let offsets = [-0.01, 0.0, 0.01];
    let a = offset_sweep(&link, &cfg, &offsets, 77).unwrap();
    let b = offset_sweep(&link, &cfg, &offsets, 77).unwrap();
    assert_eq!(a, b);
    assert!(a.points.iter().all(|p| p.locked));
    let c = offset_sweep(&link, &cfg, &offsets, 78).unwrap();
    assert_ne!(a, c);
}

/// Between the two crossing families the eye holds four separate trace
/// bands: two rising and two falling, each pair split by the previous bit.
#[test]
fn moderate_channel_eye_has_four_bands_between_the_crossings() {
    let link = presets::link(ChannelPreset::ModerateBandwidth, 1e9, 100_000);
    let w = link.receive(21).unwrap().skip_ui(presets::SETTLE_UI).unwrap();
    let h = crossing_histogram(&crossing_times(&w, 0.0), UI).unwrap();
    let centers = h.cluster_centers();
    assert_eq!(centers.len(), 2);
    let mid = (centers[0] + centers[1]) / 2.0;
    // place the slice in the middle of the 2-UI window; 0.5 mV rows
    let eye = eye_accumulate_with_grid(&w, (mid - 1.0) * UI, 800, -0.2, 0.2).unwrap();
    let column = eye.column(eye.time_bins / 2);
    // transitions pass the slice within half the swing of the mid level
    let inner: Vec<u64> = (0..eye.voltage_bins)
        .filter(|&v| eye.voltage_of_bin(v).abs() < 0.1)
        .map(|v| column[v])
        .collect();
    let mut bands = 0;
    let mut gap = usize::MAX;
    for &hits in &inner {
        if hits > 0 {
            if gap >= 2 {
                bands += 1;
            }
            gap = 0;
        } else {
            gap = gap.saturating_add(1);
        }
    }
    assert_eq!(bands, 4, "{inner:?}");
}
