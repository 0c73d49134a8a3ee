use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tomo2d_cli::RunConfig;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("examples")
        .join(name)
}

fn tomo2d(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tomo2d"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        cmd,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    tomo2d(&args)
}

fn write_config(dir: &Path, cfg: &RunConfig) -> PathBuf {
    let p = dir.join("run.cfg");
    fs::write(&p, cfg.to_json()).unwrap();
    p
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn two_qubit_fixture() -> RunConfig {
    RunConfig::load(&fixture("paper_fig1.cfg")).unwrap()
}

#[test]
fn fixtures_round_trip() {
    for name in ["paper_fig1.cfg", "paper_fig2.cfg"] {
        let cfg = RunConfig::load(&fixture(name)).unwrap();
        let text = cfg.to_json();
        let again = RunConfig::from_json(&text).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_json(), text);
    }
}

#[test]
fn two_qubit_tomograph_within_a_tenth_of_a_percent() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("tomograph", &fixture("paper_fig1.cfg"), dir.path(), &[]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r = json(&dir.path().join("result.json"));
    let err = r["max_relative_error"].as_f64().unwrap();
    assert!(err <= 1e-3, "{err}");
    let report = String::from_utf8(out.stdout).unwrap();
    assert!(report.contains("max relative element error"));
    assert!(report.contains("fidelity: 1.0000"));
    for f in [
        "signal_a.csv",
        "signal_b.csv",
        "spectrum_2d_magnitude.csv",
        "report.txt",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    assert_eq!(
        fs::read_dir(dir.path().join("cross_sections"))
            .unwrap()
            .count(),
        4
    );
}

#[test]
fn four_qubit_tomograph_reaches_fidelity_bound() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::load(&fixture("paper_fig2.cfg")).unwrap();
    tomo2d_cli::run::tomograph(&cfg, dir.path()).unwrap();
    let r = json(&dir.path().join("result.json"));
    let f = r["fidelity"].as_f64().unwrap();
    assert!(f >= 0.997, "{f}");
}

/// Omega2 positions of the local maxima of the column maxima.
fn column_peaks(csv: &str) -> (Vec<f64>, f64) {
    let mut lines = csv.lines();
    let axis: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .skip(1)
        .map(|v| v.parse().unwrap())
        .collect();
    let mut colmax = vec![0.0f64; axis.len()];
    for l in lines {
        for (k, v) in l.split(',').skip(1).enumerate() {
            colmax[k] = colmax[k].max(v.parse::<f64>().unwrap());
        }
    }
    let top = colmax.iter().cloned().fold(0.0, f64::max);
    let peaks = (1..colmax.len() - 1)
        .filter(|&i| {
            colmax[i] > 0.05 * top && colmax[i] >= colmax[i - 1] && colmax[i] > colmax[i + 1]
        })
        .map(|i| axis[i])
        .collect();
    (peaks, axis[1] - axis[0])
}

#[test]
fn two_qubit_simulate_column_maxima_sit_on_transitions() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("simulate", &fixture("paper_fig1.cfg"), dir.path(), &[]);
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("spectrum_2d_magnitude.csv")).unwrap();
    let (peaks, bin) = column_peaks(&csv);
    let expected = [1100.0, 1300.0, 1700.0, 1900.0];
    for e in expected {
        assert!(
            peaks.iter().any(|p| (p - e).abs() <= bin),
            "no peak near {e} Hz in {peaks:?}"
        );
    }
    for p in &peaks {
        assert!(
            expected.iter().any(|e| (p - e).abs() <= bin),
            "stray peak at {p} Hz"
        );
    }
}

#[test]
fn one_spin_simulation_shows_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_json(
        r#"{"system": {"n": 1, "larmor_hz": [700.0], "t2_s": 0.02},
            "state": [{"label": "x", "value": 1.0}]}"#,
    )
    .unwrap();
    let path = write_config(dir.path(), &cfg);
    let out = run("simulate", &path, &dir.path().join("o"), &[]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("o/spectrum_reference.csv")).unwrap();
    let rows: Vec<(f64, f64)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            (v[0], v[1].hypot(v[2]))
        })
        .collect();
    let top = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let peaks: Vec<f64> = (1..rows.len() - 1)
        .filter(|&i| {
            rows[i].1 > 0.01 * top && rows[i].1 >= rows[i - 1].1 && rows[i].1 > rows[i + 1].1
        })
        .map(|i| rows[i].0)
        .collect();
    assert_eq!(peaks.len(), 1, "{peaks:?}");
    assert!((peaks[0] - 700.0).abs() <= rows[1].0 - rows[0].0);
}

#[test]
fn noisy_runs_are_reproducible_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = two_qubit_fixture();
    cfg.options.noise_rms = 0.5;
    cfg.acquisition.n_t1 = Some(128);
    let path = write_config(dir.path(), &cfg);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    for (d, seed) in [(&a, "7"), (&b, "7"), (&c, "8")] {
        let out = run("tomograph", &path, d, &["--seed", seed]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    for f in [
        "result.json",
        "signal_a.csv",
        "signal_b.csv",
        "signal_a.json",
    ] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    assert_ne!(
        fs::read(a.join("signal_a.csv")).unwrap(),
        fs::read(c.join("signal_a.csv")).unwrap()
    );
    // noise costs accuracy but not the state
    let f = json(&a.join("result.json"))["fidelity"].as_f64().unwrap();
    assert!(f > 0.99, "{f}");
}

#[test]
fn zero_state_runs_clean_without_fidelity() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = two_qubit_fixture();
    cfg.state.clear();
    cfg.acquisition.n_t1 = Some(128);
    let path = write_config(dir.path(), &cfg);
    let out = run("tomograph", &path, &dir.path().join("o"), &[]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r = json(&dir.path().join("o/result.json"));
    assert!(r["fidelity"].is_null());
    let m = &r["matrix"];
    for part in ["re", "im"] {
        for row in m[part].as_array().unwrap() {
            for v in row.as_array().unwrap() {
                assert!(v.as_f64().unwrap().abs() < 1e-12);
            }
        }
    }
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .contains("fidelity: skipped"));
}

#[test]
fn basis_reports_the_columns_spin_two_cannot_see() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = two_qubit_fixture();
    cfg.options.select_spins = Some(vec![2]);
    cfg.acquisition.n_t1 = Some(128);
    let path = write_config(dir.path(), &cfg);
    let out = run("basis", &path, &dir.path().join("o"), &[]);
    assert_eq!(out.status.code(), Some(3));
    let summary = json(&dir.path().join("o/basis.json"));
    let nulls = summary["null_labels"].as_array().unwrap();
    assert_eq!(nulls.len(), 4, "{nulls:?}");
    assert!(dir.path().join("o/design.csv").exists());
    assert!(dir.path().join("o/design.bin").exists());
    let report = String::from_utf8(out.stdout).unwrap();
    for n in nulls {
        assert!(report.contains(n.as_str().unwrap()));
    }
}

#[test]
fn basis_lists_twelve_columns_and_hits_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("o");
    let first = run("basis", &fixture("paper_fig1.cfg"), &o, &[]);
    assert!(first.status.success());
    let summary = json(&o.join("basis.json"));
    assert_eq!(summary["columns"].as_u64(), Some(12));
    assert!(summary["condition_number"].as_f64().unwrap() >= 1.0);
    let first_report = String::from_utf8(first.stdout).unwrap();
    assert!(first_report.contains("condition number"));
    assert!(!first_report.contains("cache hit"));
    let bin = fs::read(o.join("design.bin")).unwrap();
    let csv = fs::read(o.join("design.csv")).unwrap();

    let second = run("basis", &fixture("paper_fig1.cfg"), &o, &["--verbose"]);
    assert!(second.status.success());
    assert!(String::from_utf8(second.stdout)
        .unwrap()
        .contains("cache hit"));
    assert!(String::from_utf8(second.stderr)
        .unwrap()
        .contains("design cache hit"));
    assert_eq!(fs::read(o.join("design.bin")).unwrap(), bin);
    assert_eq!(fs::read(o.join("design.csv")).unwrap(), csv);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(fixture("paper_fig1.cfg")).unwrap();

    let bad = dir.path().join("unknown.cfg");
    fs::write(&bad, text.replace("\"t2_s\"", "\"t2_ms\": 10, \"t2_s\"")).unwrap();
    let out = run("tomograph", &bad, &dir.path().join("o"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("t2_ms"));

    let mut cfg = two_qubit_fixture();
    cfg.acquisition.dwell_t2_s = Some(1e-3);
    let path = write_config(dir.path(), &cfg);
    let out = run("simulate", &path, &dir.path().join("o"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("Nyquist"));

    let out = tomo2d(&["simulate", "--config", "/nonexistent.cfg"]);
    assert_eq!(out.status.code(), Some(2));
}
