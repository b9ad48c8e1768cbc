//! End-to-end tests of the `fpwm` binary: exit codes, determinism, and
//! the documented output shapes.

use std::path::Path;
use std::process::Command;

fn fpwm() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fpwm"))
}

fn write_config(dir: &Path, mutate: impl Fn(&mut serde_json::Value)) -> std::path::PathBuf {
    let mut cfg = serde_json::json!({
        "mu0": 0.25, "mu1": 0.15, "mu2": 0.5, "mua": 0.1,
        "alpha_x_F": 0.3, "alpha_y_F": 0.225,
        "alpha_x_R": 0.12, "alpha_y_R": 0.09,
        "eta_F": 0.52, "eta_R": 0.4, "eta_a": 0.55,
        "rho": 0.9, "gamma": 0.1, "m_f": 30.0, "delta": 0.05
    });
    mutate(&mut cfg);
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn unknown_flag_exits_64() {
    let out = fpwm().args(["sweep", "--frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn help_exits_zero() {
    let out = fpwm().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("analyze"));
}

#[test]
fn invalid_config_exits_2_with_violations() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), |cfg| {
        cfg["mu2"] = serde_json::json!(0.0);
        cfg["mu0"] = serde_json::json!(0.75);
    });
    let out = fpwm()
        .args(["analyze", "--config"])
        .arg(&path)
        .args(["--mechanism", "eo", "--post", "real"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mu2"));
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), |cfg| {
        cfg["mu_a"] = serde_json::json!(0.3);
    });
    let out = fpwm()
        .args(["analyze", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn infeasible_design_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), |cfg| {
        cfg["delta"] = serde_json::json!(0.0001);
    });
    let out = fpwm()
        .args(["design", "--config"])
        .arg(&path)
        .args(["--mechanism", "eo", "--threshold-mode", "plain"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn analyze_emits_equilibria_csv() {
    let out = fpwm()
        .args([
            "analyze",
            "--family",
            "naive",
            "--mu-a",
            "0.1",
            "--mechanism",
            "eh",
            "--post",
            "fake",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("mechanism,post,mu_a,w,b,phi,beta_star,kind,qos,iqos"));
    assert!(text.contains("eh,fake,0.1"));
}

#[test]
fn sweep_is_reproducible_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let status = fpwm()
            .args([
                "sweep",
                "--preset",
                "fig_exwm",
                "--paths",
                "20",
                "--events",
                "800",
                "--seed",
                "7",
                "--out",
            ])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let bytes_a = std::fs::read(&a).unwrap();
    assert_eq!(bytes_a, std::fs::read(&b).unwrap());
    assert!(!bytes_a.is_empty());
}

#[test]
fn jobs_flag_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (out, jobs) in [(&a, "1"), (&b, "2")] {
        let status = fpwm()
            .args([
                "sweep", "--preset", "fig_exwm", "--paths", "16", "--events", "500",
                "--seed", "11", "--jobs", jobs, "--out",
            ])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn env_seed_overrides_flag() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    // a: --seed 3 with FPWM_SEED=99; b: --seed 99; c: --seed 3.
    let run = |out: &Path, seed: &str, env: Option<&str>| {
        let mut cmd = fpwm();
        cmd.args([
            "simulate", "--family", "naive", "--mu-a", "0.1", "--events", "400",
            "--seed", seed, "--out",
        ])
        .arg(out);
        match env {
            Some(v) => cmd.env("FPWM_SEED", v),
            None => cmd.env_remove("FPWM_SEED"),
        };
        assert!(cmd.status().unwrap().success());
    };
    run(&a, "3", Some("99"));
    run(&b, "99", None);
    run(&c, "3", None);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn preset_table2_matches_reference_to_1e3() {
    let out = fpwm().args(["preset", "table2_eh2"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let expected = [(0.0, 0.8289), (0.1, 0.8270), (0.2, 0.8257), (0.3, 0.8246)];
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let mu_a: f64 = cols[3].parse().unwrap();
        let iqos: f64 = cols[11].parse().unwrap();
        let (_, want) = expected
            .iter()
            .find(|(m, _)| (m - mu_a).abs() < 1e-12)
            .unwrap();
        assert!((iqos - want).abs() <= 1e-3, "mu_a {mu_a}: {iqos} vs {want}");
        rows += 1;
    }
    assert_eq!(rows, 4);
}

#[test]
fn preset_show_prints_resolved_configs() {
    let out = fpwm()
        .args(["preset", "fig_eowm_naive", "--show"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("\"m_f\": 30.0"));
    assert!(text.contains("\"eta_F\": 0.52"));
    assert!(text.contains("\"alpha_y_F\": 0.225"));
}

#[test]
fn sweep_plot_stub_written() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    let plot = dir.path().join("s");
    let status = fpwm()
        .args([
            "sweep", "--family", "naive", "--mechanism", "eo", "--post", "fake",
            "--mu-a-grid", "0,0.1", "--paths", "0", "--out",
        ])
        .arg(&csv)
        .arg("--plot")
        .arg(&plot)
        .status()
        .unwrap();
    assert!(status.success());
    let dat = std::fs::read_to_string(plot.with_extension("dat")).unwrap();
    assert!(dat.lines().next().unwrap().contains("mu_a theory mc_mean mc_stderr threshold"));
    assert!(plot.with_extension("gp").exists());
}

#[test]
fn learn_single_run_trace() {
    let out = fpwm()
        .args([
            "learn", "--family", "naive", "--mu-a", "0.1", "--samples", "2000",
            "--seed", "5", "--stride", "100",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("k,w_k,b_k,beta_k,special_epoch"));
    assert!(text.lines().count() > 10);
}
