use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn cdrlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdrlab")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("in.toml");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn check_manifest(dir: &Path, command: &str) -> serde_json::Value {
    let m = manifest(dir);
    assert_eq!(m["command"], command);
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    let hash = m["config_hash"].as_str().unwrap();
    let cfg = fs::read(dir.join("config.toml")).unwrap();
    assert_eq!(hex::encode(Sha256::digest(&cfg)), hash);
    for out in m["outputs"].as_array().unwrap() {
        let bytes = fs::read(dir.join(out["path"].as_str().unwrap())).unwrap();
        assert_eq!(out["bytes"].as_u64().unwrap(), bytes.len() as u64);
        assert_eq!(out["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&bytes)));
        if out["path"].as_str().unwrap().ends_with(".csv") {
            let first = String::from_utf8_lossy(&bytes).lines().next().unwrap().to_string();
            assert_eq!(first, format!("# cdrlab {} config {hash}", env!("CARGO_PKG_VERSION")));
        }
    }
    m
}

fn csv_rows(path: &Path) -> usize {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .count()
        - 1
}

#[test]
fn eye_reports_two_families_on_the_moderate_channel() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[data]\nn_bits = 20000\n");
    let out = tmp.path().join("eye");
    let o = cdrlab(&["eye", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("clusters=2"), "{}", stdout(&o));
    let m = check_manifest(&out, "eye");
    assert_eq!(m["seeds"]["data"], 3);
    assert_eq!(m["summary"]["clusters"], 2);
    assert_eq!(csv_rows(&out.join("crossings.csv")), 128);
    assert!(csv_rows(&out.join("eye.csv")) > 100);
}

#[test]
fn eye_on_the_high_bandwidth_channel_has_one_family() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[data]\nn_bits = 20000\n[channel]\npreset = \"high-bandwidth\"\n",
    );
    let out = tmp.path().join("eye");
    let o = cdrlab(&["eye", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("clusters=1"), "{}", stdout(&o));
}

#[test]
fn runs_are_reproducible_and_the_written_config_replays() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[data]\nn_bits = 15000\nseed = 9\n");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    for dir in [&a, &b] {
        let o = cdrlab(&[
            "sweep",
            "--config",
            &cfg,
            "--out",
            dir.to_str().unwrap(),
            "--offsets",
            "-12:12:12",
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert_eq!(
        fs::read(a.join("sweep.csv")).unwrap(),
        fs::read(b.join("sweep.csv")).unwrap()
    );
    // the stored config already carries the offsets override
    let replay = a.join("config.toml");
    let o = cdrlab(&[
        "sweep",
        "--config",
        replay.to_str().unwrap(),
        "--out",
        c.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        fs::read(a.join("sweep.csv")).unwrap(),
        fs::read(c.join("sweep.csv")).unwrap()
    );
    assert_eq!(manifest(&a)["config_hash"], manifest(&c)["config_hash"]);
}

#[test]
fn sweep_writes_every_point() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[data]\nn_bits = 15000\n");
    let out = tmp.path().join("s");
    let o = cdrlab(&[
        "sweep",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--offsets",
        "-20:20:10",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(csv_rows(&out.join("sweep.csv")), 5);
    let m = check_manifest(&out, "sweep");
    assert_eq!(m["summary"]["points"], 5);
    assert!(stdout(&o).contains("locked=5/5"), "{}", stdout(&o));
}

#[test]
fn sweep_needs_three_points() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cdrlab(&["sweep", "--out", tmp.path().to_str().unwrap(), "--offsets", "0:1:1"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("at least 3"), "{}", stderr(&o));
}

#[test]
fn sweep_without_lock_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[data]\nn_bits = 12000\n[loop]\nicp_A = 1e-15\nf0_Hz = 1.002e9\n",
    );
    let out = tmp.path().join("s");
    let o = cdrlab(&[
        "sweep",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--offsets",
        "-4:4:4",
    ]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    // the curve is still written for inspection
    assert_eq!(csv_rows(&out.join("sweep.csv")), 3);
}

#[test]
fn track_settles_between_the_families() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[data]\nn_bits = 50000\n");
    let out = tmp.path().join("t");
    let o = cdrlab(&["track", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = check_manifest(&out, "track");
    let v = m["summary"]["v_th_fb_final_V"].as_f64().unwrap();
    // with zero offset the threshold moves off the mid level into the gap
    // between the two crossing families, well inside the eye
    assert!(v.abs() > 2e-3 && v.abs() < 20e-3, "{v}");
    assert!(m["summary"]["settling_time_s"].as_f64().is_some());
    assert!(csv_rows(&out.join("control.csv")) > 100);
    // one recovered-clock edge per UI
    let edges = csv_rows(&out.join("edges.csv"));
    assert!(edges.abs_diff(50_000) <= 2, "{edges}");
}

#[test]
fn track_without_lock_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[data]\nn_bits = 12000\n[loop]\nicp_A = 1e-15\nf0_Hz = 1.002e9\n",
    );
    let out = tmp.path().join("t");
    let o = cdrlab(&["track", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert_eq!(manifest(&out)["summary"]["locked"], false);
}

#[test]
fn oracle_table_and_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[data]\nn_bits = 20000\n[model]\nthresholds = [\"R\", \"5\"]\ncells_per_step = 2\n",
    );
    let out = tmp.path().join("o");
    let o = cdrlab(&["oracle", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    assert!(
        text.lines()
            .any(|l| l.trim_start().starts_with("R ") && l.contains("proportional")),
        "{text}"
    );
    assert!(text.contains("5mV"), "{text}");
    let m = check_manifest(&out, "oracle");
    assert!(out.join("oracle_R.csv").exists() && out.join("oracle_5mV.csv").exists());
    let r = &m["summary"]["thresholds"][0];
    let ratio = r["ratio"].as_f64().unwrap();
    assert!((0.8..1.25).contains(&ratio), "{ratio}");
    let sum: f64 = fs::read_to_string(out.join("oracle_R.csv"))
        .unwrap()
        .lines()
        .skip(2)
        .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((sum - 1.0).abs() < 1e-9, "{sum}");
}

#[test]
fn plot_renders_each_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[data]\nn_bits = 15000\n[model]\nthresholds = [\"Q\"]\ncells_per_step = 2\n",
    );
    let run = tmp.path().join("run");
    let r = run.to_str().unwrap();
    for args in [
        vec!["eye", "--config", &cfg, "--out", r],
        vec!["sweep", "--config", &cfg, "--out", r, "--offsets", "-10:10:10"],
        vec!["track", "--config", &cfg, "--out", r],
        vec!["oracle", "--config", &cfg, "--out", r],
    ] {
        let o = cdrlab(&args);
        assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
    }
    for (name, schema) in [
        ("eye", "Eye"),
        ("crossings", "Crossings"),
        ("sweep", "Sweep"),
        ("control", "Control"),
        ("oracle_Q", "Oracle"),
    ] {
        let svg = tmp.path().join(format!("plots/{name}.svg"));
        let input = run.join(format!("{name}.csv"));
        let o = cdrlab(&[
            "plot",
            "--input",
            input.to_str().unwrap(),
            "--out",
            svg.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{name}: {}", stderr(&o));
        assert!(stdout(&o).contains(&format!("schema={schema}")));
        let text = fs::read_to_string(&svg).unwrap();
        assert!(text.starts_with("<svg") && text.contains("</svg>"));
    }
    let edges = run.join("edges.csv");
    let o = cdrlab(&[
        "plot",
        "--input",
        edges.to_str().unwrap(),
        "--out",
        tmp.path().join("x.svg").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("unrecognised CSV header"));
}

#[test]
fn configuration_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");
    let out = out.to_str().unwrap();
    for (text, needle) in [
        ("[data]\nn_bitz = 5\n", "n_bitz"),
        ("[data]\nsource_kind = \"explicit\"\n", "source_kind"),
        ("[channel]\npreset = \"narrow\"\n", "narrow"),
        ("[loop]\nicp_A = -1\n", "icp"),
        ("[analysis]\noffsets_mV = \"1:0:1\"\n", "offsets"),
        ("[model]\nseparation_ui = 0.4\n", "model"),
        ("[data\n", "config"),
    ] {
        let cfg = write_config(tmp.path(), text);
        let o = cdrlab(&["eye", "--config", &cfg, "--out", out]);
        assert_eq!(code(&o), 2, "{text}");
        assert!(stderr(&o).contains(needle), "{text}: {}", stderr(&o));
    }
    let o = cdrlab(&[
        "eye",
        "--config",
        &write_config(tmp.path(), "[data]\nn_bits = 20\n"),
        "--out",
        out,
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn offsets_outside_the_swing_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cdrlab(&[
        "sweep",
        "--out",
        tmp.path().to_str().unwrap(),
        "--offsets",
        "-300:300:100",
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn argument_errors_exit_2_and_help_exits_0() {
    assert_eq!(code(&cdrlab(&["bogus"])), 2);
    assert_eq!(code(&cdrlab(&["eye", "--seed", "x"])), 2);
    assert_eq!(code(&cdrlab(&["plot"])), 2);
    assert_eq!(code(&cdrlab(&["--help"])), 0);
    assert_eq!(code(&cdrlab(&["--version"])), 0);
}

#[test]
fn io_errors_exit_4() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.toml");
    assert_eq!(code(&cdrlab(&["eye", "--config", missing.to_str().unwrap()])), 4);
    // a file where the output directory should be
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let cfg = write_config(tmp.path(), "[data]\nn_bits = 12000\n");
    let o = cdrlab(&["eye", "--config", &cfg, "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn transparent_channel_gives_a_single_bin_histogram() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[data]\nn_bits = 5000\n[channel]\nsections = []\n");
    let out = tmp.path().join("eye");
    let o = cdrlab(&["eye", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("clusters=1"), "{}", stdout(&o));
    let occupied = fs::read_to_string(out.join("crossings.csv"))
        .unwrap()
        .lines()
        .skip(2)
        .filter(|l| l.split(',').nth(1).unwrap() != "0")
        .count();
    assert_eq!(occupied, 1);
    // square eye: only the two rails are hit away from the crossing column
    let rails: std::collections::BTreeSet<String> = fs::read_to_string(out.join("eye.csv"))
        .unwrap()
        .lines()
        .skip(2)
        .map(|l| l.split(',').nth(1).unwrap().to_string())
        .collect();
    assert_eq!(rails.len(), 2, "{rails:?}");
}

#[test]
fn zero_tracking_gain_leaves_the_threshold_at_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[data]\nn_bits = 20000\n[loop]\nvth_gain_uV = 0\n");
    let out = tmp.path().join("t");
    let o = cdrlab(&["track", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(out.join("control.csv")).unwrap();
    assert!(text.lines().skip(2).all(|l| l.split(',').nth(2).unwrap() == "0"));
}

#[test]
fn oracle_widths_are_ordered_and_symmetric() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[data]\nn_bits = 15000\n[model]\ncells_per_step = 2\n");
    let out = tmp.path().join("o");
    let o = cdrlab(&["oracle", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = manifest(&out);
    let rows = m["summary"]["thresholds"].as_array().unwrap();
    let width = |name: &str| {
        rows.iter().find(|r| r["threshold"] == name).unwrap()["support_width_ui"]
            .as_f64()
            .unwrap()
    };
    let (r, q, p) = (width("R"), width("Q"), width("P"));
    assert!(r > q && r > p, "{r} {q} {p}");
    // one grid cell at the default 1e-3 UI step split in two
    assert!((p - q).abs() <= 0.5e-3 + 1e-12, "{p} vs {q}");
}

#[test]
fn replaying_the_stored_config_reproduces_every_checksum() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[data]\nn_bits = 20000\n");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let o = cdrlab(&["track", "--config", &cfg, "--out", a.to_str().unwrap(), "--seed", "4"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let replay = a.join("config.toml");
    let o = cdrlab(&["track", "--config", replay.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(manifest(&a)["outputs"], manifest(&b)["outputs"]);
    assert_eq!(manifest(&b)["seeds"]["data"], 4);
}
