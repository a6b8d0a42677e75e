use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bubblechan"))
}

fn table1_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/table1")
}

fn cell(name: &str) -> PathBuf {
    table1_dir().join(format!("{name}.toml"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn single_trial_writes_one_sample() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin()
        .args(["simulate", "--trials", "1", "--out"])
        .arg(dir.path())
        .arg("--config")
        .arg(cell("rate20_mu1.35mm")));
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let samples = std::fs::read_to_string(dir.path().join("samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 2);
    assert!(samples.starts_with("received_power,obstruction\n"));
    let hist = std::fs::read_to_string(dir.path().join("histogram.csv")).unwrap();
    assert_eq!(hist.lines().count(), 101);
    assert_eq!(json(&dir.path().join("summary.json"))["empirical"]["n_trials"], 1);
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        let out = run(bin()
            .args(["simulate", "--trials", "3000", "--seed", "9", "--out"])
            .arg(dir.path().join(name))
            .arg("--config")
            .arg(cell("rate40_mu1.95mm")));
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    for f in ["samples.csv", "histogram.csv", "summary.json", "config.toml"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    // the echoed config reproduces the run
    let out = run(bin()
        .arg("simulate")
        .arg("--config")
        .arg(dir.path().join("a/config.toml"))
        .arg("--out")
        .arg(dir.path().join("c")));
    assert_eq!(code(&out), 0);
    assert_eq!(
        std::fs::read(dir.path().join("a/samples.csv")).unwrap(),
        std::fs::read(dir.path().join("c/samples.csv")).unwrap()
    );
    let summary = json(&dir.path().join("a/summary.json"));
    assert_eq!(summary["config"]["seed"], 9);
    assert!(json(&dir.path().join("a/metadata.json"))["wall_clock_s"].is_number());
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin().args(["fit", "--config"]).arg(dir.path().join("missing.toml")));
    assert_eq!(code(&out), 2);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[env]\nrate_hz = 20.0\nmu_r_mm = 1.35\n").unwrap();
    let out = run(bin().args(["simulate", "--config"]).arg(&bad));
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("mu_r_mm"), "{}", stderr(&out));

    let uneven = dir.path().join("uneven.toml");
    std::fs::write(&uneven, "[env]\nl_s = 0.03\nmu_r_m = 1.35e-3\n").unwrap();
    let out = run(bin().args(["simulate", "--config"]).arg(&uneven));
    assert_eq!(code(&out), 2);

    let out = run(bin().args(["simulate", "--trials", "10", "--config"]).arg(cell("rate20_mu1.35mm")).env("BUBBLECHAN_THREADS", "zero"));
    assert_eq!(code(&out), 2);

    let out = run(bin().args(["simulate"]));
    assert_eq!(code(&out), 2);
}

#[test]
fn table1_lists_missing_configs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(cell("rate20_mu1.35mm"), dir.path().join("rate20_mu1.35mm.toml")).unwrap();
    let out = run(bin().args(["table1", "--config"]).arg(dir.path()).arg("--out").arg(dir.path().join("o")));
    assert_eq!(code(&out), 2);
    let msg = stderr(&out);
    assert!(msg.contains("rate160_mu2.99mm.toml") && !msg.contains("rate20_mu1.35mm.toml"), "{msg}");
}

#[test]
fn table1_config_pack_is_complete() {
    let files = std::fs::read_dir(table1_dir()).unwrap().count();
    assert_eq!(files, 16);
}

#[test]
fn fit_scores_against_simulation_and_feeds_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let config = cell("rate40_mu1.50mm");
    let out = run(bin()
        .args(["simulate", "--trials", "20000", "--out"])
        .arg(dir.path().join("sim"))
        .arg("--config")
        .arg(&config));
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = run(bin()
        .arg("fit")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("fit"))
        .arg("--simulation")
        .arg(dir.path().join("sim")));
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let model = json(&dir.path().join("fit/model.json"));
    let k = model["k"].as_f64().unwrap();
    let lambda = model["lambda"].as_f64().unwrap();
    let a = model["a"].as_f64().unwrap();
    assert!((k - 1.064).abs() < 0.02, "k {k}");
    assert!((lambda - 0.053).abs() < 0.002, "lambda {lambda}");
    assert!((a + model["b"].as_f64().unwrap() - 1.0).abs() < 1e-15);
    let summary = json(&dir.path().join("fit/summary.json"));
    assert!(summary["scores"]["mse"].as_f64().unwrap() < 1e-3);
    assert!(summary["scores"]["r2"].as_f64().unwrap() > 0.9);
    assert!(summary["moments"]["e_b"].as_f64().unwrap() > 0.0);

    let out = run(bin()
        .arg("analyze")
        .arg("--model")
        .arg(dir.path().join("fit/model.json"))
        .args(["--snr-db", "30:30:1", "--out"])
        .arg(dir.path().join("an")));
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("an/performance.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "snr_db,capacity_bpcu,avg_ber,model_id");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("30.0,") && lines[1].ends_with(",rate40_mu1.50mm"));

    let out = run(bin()
        .arg("analyze")
        .arg("--model")
        .arg(dir.path().join("fit/model.json"))
        .args(["--snr-db", "10:0:1"]));
    assert_eq!(code(&out), 2);
    let out = run(bin().args(["analyze", "--snr-db", "0:10:1"]));
    assert_eq!(code(&out), 2);
}

#[test]
fn simulation_for_another_environment_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin()
        .args(["simulate", "--trials", "100", "--out"])
        .arg(dir.path().join("sim"))
        .arg("--config")
        .arg(cell("rate20_mu1.35mm")));
    assert_eq!(code(&out), 0);
    let out = run(bin()
        .arg("fit")
        .arg("--config")
        .arg(cell("rate160_mu2.99mm"))
        .arg("--out")
        .arg(dir.path().join("fit"))
        .arg("--simulation")
        .arg(dir.path().join("sim")));
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn unreachable_beam_is_a_numerical_failure() {
    // one bubble in a 50 ms window never reaches the beam, so there is
    // nothing to fit
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.toml");
    std::fs::write(&cfg, "[env]\nl_s = 0.05\nwindow_s = 0.05\nmu_r_m = 1.35e-3\n").unwrap();
    let out = run(bin().args(["fit", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("fit")));
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}
