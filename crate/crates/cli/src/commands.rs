use std::fs;

use cdrlab_core::analysis::{local_minima, measure_jitter, offset_sweep, oracle_vs_sim_with, settling, OracleParams};
use cdrlab_core::cdrloop::{run_cdr, LoopConfig};
use cdrlab_core::channel::{crossing_histogram_with_bins, crossing_times, eye_accumulate_with_grid};
use cdrlab_core::{export, presets};
use serde_json::json;

use crate::config::{parse_offsets, ExperimentConfig};
use crate::manifest::RunDir;
use crate::{CliError, RunArgs};

pub const MIN_SWEEP_POINTS: usize = 3;

pub fn load_config(args: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.data.seed = seed;
    }
    Ok(cfg)
}

fn fmt_opt(v: Option<f64>, scale: f64) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{:.3}", v * scale))
}

pub fn eye(args: &RunArgs) -> Result<(), CliError> {
    let cfg = load_config(args)?;
    let link = cfg.link()?;
    let w = link.receive(cfg.data.seed)?.skip_ui(presets::SETTLE_UI)?;
    let hist = crossing_histogram_with_bins(&crossing_times(&w, 0.0), link.ui, cfg.analysis.histogram_bins)?;
    let centers = hist.cluster_centers();
    // place the crossings (or the middle between two families) at 0.5 UI
    let anchor = match centers[..] {
        [] => 0.0,
        [c] => c,
        [a, b, ..] => {
            let d = (b - a + 0.5).rem_euclid(1.0) - 0.5;
            a + d / 2.0
        }
    };
    let trigger = (anchor - 0.5) * link.ui;
    let span = 1.25 * link.amplitude;
    let eye = eye_accumulate_with_grid(&w, trigger, cfg.analysis.eye_voltage_bins, -span, span)?;

    let mut run = RunDir::create(&args.out, "eye", &cfg)?;
    run.write_with("eye.csv", |f, c| export::write_eye(f, c, &eye))?;
    run.write_with("crossings.csv", |f, c| export::write_crossings(f, c, &hist))?;
    println!("clusters={}", hist.cluster_count());
    println!(
        "centers_ui={}",
        centers.iter().map(|c| format!("{c:.4}")).collect::<Vec<_>>().join(",")
    );
    if let Some(s) = hist.min_separation() {
        println!("separation_ui={s:.4}");
    }
    run.finish(json!({
        "clusters": hist.cluster_count(),
        "centers_ui": centers,
        "separation_ui": hist.min_separation(),
        "crossings": hist.total,
        "trigger_s": trigger,
    }))?;
    Ok(())
}

pub fn sweep(args: &RunArgs, offsets: Option<&str>) -> Result<(), CliError> {
    let mut cfg = load_config(args)?;
    if let Some(o) = offsets {
        cfg.analysis.offsets_mV = o.into();
    }
    let offsets = parse_offsets(&cfg.analysis.offsets_mV)?;
    if offsets.len() < MIN_SWEEP_POINTS {
        return Err(CliError::Config(format!(
            "sweep needs at least {MIN_SWEEP_POINTS} offsets, got {}",
            offsets.len()
        )));
    }
    let link = cfg.link()?;
    let loop_cfg = cfg.loop_config()?;
    let curve = offset_sweep(&link, &loop_cfg, &offsets, cfg.data.seed)?;

    let mut run = RunDir::create(&args.out, "sweep", &cfg)?;
    run.write_with("sweep.csv", |f, c| export::write_sweep(f, c, &curve))?;
    let minima = local_minima(&curve, cfg.analysis.minima_half_window);
    let locked = curve.points.iter().filter(|p| p.locked).count();
    println!("{:>10} {:>14} {:>14}", "v_off_mV", "threshold_mV", "pkpk_pct_ui");
    for p in &curve.points {
        println!(
            "{:>10.3} {:>14.3} {:>14}",
            p.v_off * 1e3,
            p.effective_threshold * 1e3,
            fmt_opt(p.pk_pk_ui, 100.0)
        );
    }
    println!("locked={locked}/{}", curve.points.len());
    println!(
        "local_minima_mV={}",
        minima
            .iter()
            .map(|v| format!("{:.3}", v * 1e3))
            .collect::<Vec<_>>()
            .join(",")
    );
    if let Some(best) = curve.argmin() {
        println!("argmin_mV={:.3}", best.v_off * 1e3);
    }
    let summary = json!({
        "points": curve.points.len(),
        "locked": locked,
        "local_minima_mV": minima.iter().map(|v| v * 1e3).collect::<Vec<_>>(),
        "argmin_mV": curve.argmin().map(|p| p.v_off * 1e3),
        "min_pkpk_ui": curve.argmin().and_then(|p| p.pk_pk_ui),
    });
    run.finish(summary)?;
    if locked == 0 {
        return Err(CliError::Lock("no sweep point locked".into()));
    }
    Ok(())
}

pub fn track(args: &RunArgs) -> Result<(), CliError> {
    let cfg = load_config(args)?;
    let link = cfg.link()?;
    let loop_cfg = LoopConfig {
        vth_enabled: true,
        ..cfg.loop_config()?
    };
    let trace = run_cdr(&link.receive(cfg.data.seed)?, &loop_cfg)?;

    let mut run = RunDir::create(&args.out, "track", &cfg)?;
    run.write_with("control.csv", |f, c| export::write_control(f, c, &trace))?;
    run.write_with("edges.csv", |f, c| export::write_edges(f, c, &trace))?;
    if trace.lock_time.is_none() {
        run.finish(json!({ "locked": false }))?;
        return Err(CliError::Lock("the loop did not lock".into()));
    }
    let report = settling(&trace, loop_cfg.vth_gain)?;
    let jitter = measure_jitter(&trace, link.ui).ok();
    println!("v_th_fb_final_mV={:.4}", report.final_mean * 1e3);
    println!("v_th_fb_std_uV={:.2}", report.final_std * 1e6);
    println!(
        "effective_threshold_mV={:.4}",
        (report.final_mean - loop_cfg.v_off) * 1e3
    );
    println!(
        "settling_time_s={}",
        report.settling_time.map_or("-".into(), |t| format!("{t:.4e}"))
    );
    println!("pkpk_pct_ui={}", fmt_opt(jitter.as_ref().map(|j| j.pk_pk_ui), 100.0));
    run.finish(json!({
        "locked": true,
        "lock_time_s": trace.lock_time,
        "v_th_fb_final_V": report.final_mean,
        "v_th_fb_std_V": report.final_std,
        "effective_threshold_V": report.final_mean - loop_cfg.v_off,
        "settling_time_s": report.settling_time,
        "settling_band_V": report.band,
        "pkpk_ui": jitter.map(|j| j.pk_pk_ui),
    }))?;
    Ok(())
}

/// File-name-safe form of a threshold label.
fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn oracle(args: &RunArgs) -> Result<(), CliError> {
    let cfg = load_config(args)?;
    let model = cfg.model()?;
    let loop_cfg = LoopConfig {
        c_filter: cfg.model.c_F,
        ..cfg.loop_config()?
    };
    let params = OracleParams {
        cells_per_step: cfg.model.cells_per_step,
        ..OracleParams::new(loop_cfg.bang_bang_step())
    };
    let mut run = RunDir::create(&args.out, "oracle", &cfg)?;
    let mut rows = Vec::new();
    println!(
        "{:>10} {:>10} {:>12} {:>12} {:>8} {:>8}  regime",
        "threshold", "level_mV", "support_ui", "sim_pkpk_ui", "ratio", "mode_ui"
    );
    for spec in cfg.thresholds()? {
        let level = spec.level(&model);
        let label = spec.label();
        let cmp = oracle_vs_sim_with(
            &model,
            level,
            &loop_cfg,
            params,
            cfg.data.n_bits,
            cfg.data.samples_per_ui,
            cfg.data.seed,
        )?;
        run.write_with(&format!("oracle_{}.csv", slug(&label)), |f, c| {
            export::write_oracle(f, c, &cmp.oracle)
        })?;
        let regime = match (cmp.oracle.transitions_visible, cmp.integral_negligible) {
            (false, _) => "outside-eye",
            (true, true) => "proportional",
            (true, false) => "integral-active",
        };
        let sim = cmp.sim.as_ref().map(|s| s.pk_pk_ui);
        println!(
            "{:>10} {:>10.3} {:>12.5} {:>12} {:>8} {:>8.4}  {regime}",
            label,
            level * 1e3,
            cmp.oracle.support_width_ui,
            sim.map_or("nolock".into(), |v| format!("{v:.5}")),
            cmp.ratio.map_or("-".into(), |r| format!("{r:.3}")),
            cmp.oracle.mode() / model.ui(),
        );
        rows.push(json!({
            "threshold": label,
            "level_V": level,
            "support_width_ui": cmp.oracle.support_width_ui,
            "sim_pkpk_ui": sim,
            "ratio": cmp.ratio,
            "regime": regime,
            "residual": cmp.oracle.residual,
        }));
    }
    run.finish(json!({ "thresholds": rows }))?;
    Ok(())
}
