//! End-to-end runs of the `cleam` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn cleam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cleam")).args(args).env_remove("CLEAM_OUT_DIR").output().expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr_error(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).expect("json error on stderr");
    serde_json::from_str(line).unwrap()
}

/// Aggregated labels: `batches` copies of `[c0, n - c0]`.
fn label_csv(c0: u64, c1: u64, batches: usize) -> String {
    let mut s = String::from("batch_id,predicted_class,count\n");
    for b in 0..batches {
        s += &format!("b{b},0,{c0}\nb{b},1,{c1}\n");
    }
    s
}

fn estimate_config(dir: &Path, labels: &str, alpha: &str) -> PathBuf {
    write(dir, "labels.csv", labels);
    write(
        dir,
        "run.toml",
        &format!(
            "schema_version = 1\nseed = 11\n[classifier]\nalpha = {alpha}\n[estimate]\ninput = \"labels.csv\"\nground_truth = 0.642\n"
        ),
    )
}

fn estimate_of<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["estimates"].as_array().unwrap().iter().find(|e| e["estimator"] == name).unwrap()
}

fn gender_grid_config(dir: &Path) -> PathBuf {
    write(
        dir,
        "sim.toml",
        r#"schema_version = 1
mode = "simulate"
seed = 2023
[classifier]
alpha = [0.976, 0.979]
[simulate]
grid = [0.9, 0.8, 0.7, 0.6, 0.5]
estimators = ["baseline", "cleam"]
n_values = [100, 400]
fixture = "fixture.csv"
"#,
    )
}

fn validate_config(dir: &Path) -> PathBuf {
    write(
        dir,
        "val.toml",
        r#"schema_version = 1
seed = 4
[classifier]
alpha = [0.947, 0.983]
[validate]
p_star = [0.642, 0.358]
runs = 20
oracle_batches = 20000
"#,
    )
}

#[test]
fn estimate_reports_cleam_point() {
    let dir = TempDir::new().unwrap();
    // Two batches with 244 of 400 labelled class 0: mean proportion 0.610.
    let cfg = estimate_config(dir.path(), &label_csv(244, 156, 2), "[0.947, 0.983]");
    let out_dir = dir.path().join("out");
    let out = cleam(&["estimate", "-c", cfg.to_str().unwrap(), "-o", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("seed: 11"), "{stdout}");

    let report = read_json(&out_dir.join("estimate_report.json"));
    assert_eq!(report["kind"], "estimate");
    assert_eq!(report["meta"]["seed"], 11);
    assert_eq!((report["n"].as_u64(), report["s"].as_u64()), (Some(400), Some(2)));
    let cleam = estimate_of(&report, "cleam");
    assert!((cleam["point"]["value"].as_f64().unwrap() - 0.6376).abs() < 1e-4);
    let baseline = estimate_of(&report, "baseline");
    assert!((baseline["errors"]["point_error"].as_f64().unwrap() - 0.0498).abs() < 1e-4);
    // Multi-class solve agrees with the closed form on two classes.
    let mc = estimate_of(&report, "multiclass");
    assert!((mc["point"]["value"].as_f64().unwrap() - cleam["point"]["value"].as_f64().unwrap()).abs() < 1e-12);
    assert_eq!(report["failures"].as_array().unwrap().len(), 0);

    let table = fs::read_to_string(out_dir.join("estimates.csv")).unwrap();
    assert!(table.starts_with("estimator,point,clamped,out_of_range,lower,upper,e_mu,e_rho\n"));
    assert_eq!(table.lines().count(), 5);
}

#[test]
fn estimate_on_equal_batches_matches_closed_form() {
    let dir = TempDir::new().unwrap();
    let cfg = estimate_config(dir.path(), &label_csv(240, 160, 2), "[0.947, 0.983]");
    let out = cleam(&["estimate", "-c", cfg.to_str().unwrap(), "-o", dir.path().to_str().unwrap(), "--seed", "3"]);
    assert!(out.status.success());
    let report = read_json(&dir.path().join("estimate_report.json"));
    assert_eq!(report["meta"]["seed"], 3);
    let got = estimate_of(&report, "cleam")["point"]["value"].as_f64().unwrap();
    assert!((got - (0.6 - 0.017) / (0.947 - 0.017)).abs() < 1e-12);
    // Identical constant batches: zero spread, so the interval collapses.
    let iv = &estimate_of(&report, "cleam")["interval"];
    assert!((iv["upper"].as_f64().unwrap() - iv["lower"].as_f64().unwrap()).abs() < 1e-12);
}

#[test]
fn estimate_jsonl_and_proportions_inputs() {
    let dir = TempDir::new().unwrap();
    let jsonl: String = (0..3)
        .flat_map(|b| {
            [
                format!("{{\"batch_id\":\"b{b}\",\"predicted_class\":0,\"count\":{}}}\n", 240 + b),
                format!("{{\"batch_id\":\"b{b}\",\"predicted_class\":1,\"count\":{}}}\n", 160 - b),
            ]
        })
        .collect();
    write(dir.path(), "labels.jsonl", &jsonl);
    write(dir.path(), "p.csv", "batch_id,phat\nb0,0.6\nb1,0.6025\nb2,0.605\n");
    let common = "schema_version = 1\n[output]\nformat = \"json\"\n[classifier]\nalpha = [0.947, 0.983]\n";
    let a = write(dir.path(), "a.toml", &format!("{common}[estimate]\ninput = \"labels.jsonl\"\n"));
    let b = write(
        dir.path(),
        "b.toml",
        &format!("{common}[estimate]\ninput = \"p.csv\"\nformat = \"proportions\"\nn = 400\n"),
    );
    let mut points = Vec::new();
    for (cfg, sub) in [(a, "a"), (b, "b")] {
        let out_dir = dir.path().join(sub);
        let out = cleam(&["estimate", "-c", cfg.to_str().unwrap(), "-o", out_dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(!out_dir.join("estimates.csv").exists());
        let r = read_json(&out_dir.join("estimate_report.json"));
        points.push(estimate_of(&r, "cleam")["point"]["value"].as_f64().unwrap());
    }
    assert!((points[0] - points[1]).abs() < 1e-12);
}

#[test]
fn multiclass_estimate_defaults() {
    let dir = TempDir::new().unwrap();
    let mut labels = String::from("batch_id,predicted_class,count\n");
    for b in 0..4 {
        labels += &format!("b{b},0,50\nb{b},1,30\nb{b},2,20\n");
    }
    write(dir.path(), "labels.csv", &labels);
    let cfg = write(
        dir.path(),
        "run.toml",
        "schema_version = 1\n[classifier]\nconfusion = [[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.8]]\n\
         [estimate]\ninput = \"labels.csv\"\nn_classes = 3\n",
    );
    let out = cleam(&["estimate", "-c", cfg.to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("estimate_report.json"));
    let names: Vec<&str> =
        report["estimates"].as_array().unwrap().iter().map(|e| e["estimator"].as_str().unwrap()).collect();
    assert_eq!(names, ["baseline", "multiclass", "bbse"]);
    let dist = estimate_of(&report, "multiclass")["distribution"].as_array().unwrap().clone();
    // (0.5 - 0.1) / 0.7 etc.
    let want = [4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0];
    for (d, w) in dist.iter().zip(want) {
        assert!((d.as_f64().unwrap() - w).abs() < 1e-9);
    }
}

#[test]
fn simulate_gender_grid() {
    let dir = TempDir::new().unwrap();
    let cfg = gender_grid_config(dir.path());
    let out = cleam(&["simulate", "-c", cfg.to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("simulate_report.json"));
    assert_eq!(report["meta"]["seed"], 2023);
    let avg = |name: &str| {
        report["average"].as_array().unwrap().iter().find(|a| a["estimator"] == name).unwrap()["point_error"]
            .as_f64()
            .unwrap()
    };
    let (base, cleam_err) = (avg("baseline"), avg("cleam"));
    assert!((base - 0.0143).abs() < 0.005, "baseline average {base}");
    assert!(cleam_err < 0.01, "cleam average {cleam_err}");
    assert_eq!(report["rows"].as_array().unwrap().len(), 5);
    assert_eq!(report["error_vs_n"].as_array().unwrap().len(), 2 * 5 * 2);

    let table = fs::read_to_string(dir.path().join("simulate_table.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(
        lines[0],
        "gt,baseline_mu,baseline_e_mu_pct,baseline_rho_lower,baseline_rho_upper,baseline_e_rho_pct,\
         cleam_mu,cleam_e_mu_pct,cleam_rho_lower,cleam_rho_upper,cleam_e_rho_pct"
    );
    assert!(lines[1].starts_with("0.900,"));
    assert!(lines[6].starts_with("average,"));
    assert_eq!(lines.len(), 7);
    assert!(dir.path().join("error_vs_n.csv").exists());
}

#[test]
fn simulated_fixture_round_trips_through_ingest() {
    let dir = TempDir::new().unwrap();
    let cfg = gender_grid_config(dir.path());
    assert!(cleam(&["simulate", "-c", cfg.to_str().unwrap(), "-o", dir.path().to_str().unwrap()]).status.success());

    let ingested = cleam_cli::ingest::ingest_labels(&dir.path().join("fixture.csv"), 2, None).unwrap();
    let scenario = cleam::simulator::ScenarioConfig {
        seed: cleam::simulator::derive_seed(2023, 0),
        ..cleam::simulator::ScenarioConfig::binary(0.9, 0.976, 0.979, 0).unwrap()
    };
    let expected = scenario.observations(0).unwrap();
    assert_eq!(ingested.observations, expected);
    assert_eq!(ingested.batch_ids.len(), 30);
    let series = ingested.observations.series(0).unwrap();
    for (v, counts) in series.values().iter().zip(expected.batches()) {
        assert_eq!((v * 400.0).round() as u64, counts[0]);
        assert_eq!(*v, counts[0] as f64 / 400.0);
    }
}

#[test]
fn validate_reports_ks_below_critical() {
    let dir = TempDir::new().unwrap();
    let cfg = validate_config(dir.path());
    let out = cleam(&["validate", "-c", cfg.to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("validate_report.json"));
    let ks = report["ks"].as_array().unwrap();
    assert_eq!(ks.len(), 20);
    let crit = ks[0]["d_critical"].as_f64().unwrap();
    assert!((crit - 0.248).abs() < 1e-3);
    let below = ks.iter().filter(|k| k["d_statistic"].as_f64().unwrap() < crit).count();
    assert!(below >= 18, "{below}/20 below");
    assert!(report["pass_fraction"].as_f64().unwrap() >= 0.9);
    let o = &report["variance_oracle"];
    let rel = (o["empirical_var"].as_f64().unwrap() - o["binomial_var"].as_f64().unwrap()).abs()
        / o["binomial_var"].as_f64().unwrap();
    assert!(rel < 0.05);
    assert_eq!(report["qq"].as_array().unwrap().len(), 30);
    for name in ["comparison.csv", "ks.csv", "qq.csv", "variance_oracle.csv"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}

#[test]
fn validate_observed_labels() {
    let dir = TempDir::new().unwrap();
    let labels: String = std::iter::once("batch_id,predicted_class,count\n".to_string())
        .chain((0..10).map(|b| format!("b{b},0,{}\nb{b},1,{}\n", 236 + b, 164 - b)))
        .collect();
    write(dir.path(), "labels.csv", &labels);
    let cfg = write(
        dir.path(),
        "val.toml",
        "schema_version = 1\n[classifier]\nalpha = [0.947, 0.983]\n[validate]\np_star = [0.642, 0.358]\n\
         oracle_batches = 0\ninput = \"labels.csv\"\n",
    );
    let out = cleam(&["validate", "-c", cfg.to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("validate_report.json"));
    assert_eq!(report["ks"].as_array().unwrap().len(), 1);
    assert_eq!(report["s"], 10);
    assert!(report["variance_oracle"].is_null());
    assert!(report["source"].as_str().unwrap().ends_with("labels.csv"));
}

#[test]
fn exit_codes_and_error_json() {
    let dir = TempDir::new().unwrap();
    let d = dir.path().to_str().unwrap();

    let out = cleam(&["estimate", "-c", "/nonexistent/run.toml", "-o", d]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_error(&out)["error"]["kind"], "config");

    let bad = write(dir.path(), "bad.toml", "schema_version = 1\nseeed = 3\n");
    assert_eq!(cleam(&["estimate", "-c", bad.to_str().unwrap()]).status.code(), Some(2));

    let no_section = write(dir.path(), "ns.toml", "schema_version = 1\n[classifier]\nalpha = [0.9, 0.9]\n");
    assert_eq!(cleam(&["simulate", "-c", no_section.to_str().unwrap(), "-o", d]).status.code(), Some(2));

    let wrong_mode = gender_grid_config(dir.path());
    assert_eq!(cleam(&["validate", "-c", wrong_mode.to_str().unwrap(), "-o", d]).status.code(), Some(2));

    assert_eq!(cleam(&["frobnicate"]).status.code(), Some(2));
    let bad_conf = estimate_config(dir.path(), &label_csv(240, 160, 2), "[0.947, 0.983]");
    let out = cleam(&["estimate", "-c", bad_conf.to_str().unwrap(), "-o", d, "--confidence", "1.5"]);
    assert_eq!(out.status.code(), Some(2));

    let empty = estimate_config(dir.path(), "batch_id,predicted_class,count\n", "[0.947, 0.983]");
    let out = cleam(&["estimate", "-c", empty.to_str().unwrap(), "-o", d]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr_error(&out)["error"]["message"].as_str().unwrap().contains("empty input"));

    let unknown = estimate_config(dir.path(), "batch_id,predicted_class,count\nb0,0,3\nb0,5,1\n", "[0.947, 0.983]");
    let out = cleam(&["estimate", "-c", unknown.to_str().unwrap(), "-o", d]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr_error(&out)["error"]["message"].as_str().unwrap().contains(":3:"));

    let uneven = estimate_config(dir.path(), "batch_id,predicted_class,count\nb0,0,3\nb1,0,4\n", "[0.947, 0.983]");
    let out = cleam(&["estimate", "-c", uneven.to_str().unwrap(), "-o", d]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr_error(&out)["error"]["message"].as_str().unwrap().contains("'b1'"));
}

#[test]
fn chance_level_classifier_is_numeric_error_with_hint() {
    let dir = TempDir::new().unwrap();
    let cfg = estimate_config(dir.path(), &label_csv(240, 160, 3), "[0.6, 0.4]");
    let out = cleam(&["estimate", "-c", cfg.to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    let err = stderr_error(&out);
    assert_eq!(err["error"]["kind"], "numeric");
    assert!(err["error"]["message"].as_str().unwrap().contains("chance-level"));
    assert!(err["error"]["hint"].is_string());
    // The estimators that can run still produce a report.
    let report = read_json(&dir.path().join("estimate_report.json"));
    assert_eq!(estimate_of(&report, "baseline")["point"]["value"], 0.6);
    assert!(!report["failures"].as_array().unwrap().is_empty());
}

#[test]
fn report_mode_rerenders_identical_tables() {
    let dir = TempDir::new().unwrap();
    let cfg = validate_config(dir.path());
    let first = dir.path().join("first");
    assert!(cleam(&["validate", "-c", cfg.to_str().unwrap(), "-o", first.to_str().unwrap()]).status.success());
    let again = dir.path().join("again");
    let out = cleam(&["report", first.join("validate_report.json").to_str().unwrap(), "-o", again.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["comparison.csv", "ks.csv", "qq.csv", "variance_oracle.csv"] {
        assert_eq!(fs::read(first.join(name)).unwrap(), fs::read(again.join(name)).unwrap(), "{name}");
    }

    let sim = gender_grid_config(dir.path());
    assert!(cleam(&["simulate", "-c", sim.to_str().unwrap(), "-o", first.to_str().unwrap()]).status.success());
    // Without -o the tables land next to the report.
    let moved = dir.path().join("moved");
    fs::create_dir_all(&moved).unwrap();
    fs::copy(first.join("simulate_report.json"), moved.join("simulate_report.json")).unwrap();
    assert!(cleam(&["report", moved.join("simulate_report.json").to_str().unwrap()]).status.success());
    for name in ["simulate_table.csv", "error_vs_n.csv"] {
        assert_eq!(fs::read(first.join(name)).unwrap(), fs::read(moved.join(name)).unwrap(), "{name}");
    }

    let broken = write(dir.path(), "broken.json", "{\"kind\": \"estimate\"}");
    assert_eq!(cleam(&["report", broken.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn same_seed_same_report() {
    let dir = TempDir::new().unwrap();
    let cfg = gender_grid_config(dir.path());
    let run = |sub: &str, seed: &str| {
        let out_dir = dir.path().join(sub);
        assert!(cleam(&["simulate", "-c", cfg.to_str().unwrap(), "-o", out_dir.to_str().unwrap(), "--seed", seed])
            .status
            .success());
        fs::read_to_string(out_dir.join("simulate_report.json")).unwrap()
    };
    let a = run("a", "9");
    assert_eq!(a, run("b", "9"));
    assert_ne!(a, run("c", "10"));
}

#[test]
fn output_dir_from_environment() {
    let dir = TempDir::new().unwrap();
    let cfg = estimate_config(dir.path(), &label_csv(240, 160, 2), "[0.947, 0.983]");
    let env_dir = dir.path().join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_cleam"))
        .args(["estimate", "-c", cfg.to_str().unwrap()])
        .env("CLEAM_OUT_DIR", &env_dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(env_dir.join("estimate_report.json").exists());
}

#[test]
fn shipped_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = cleam_cli::config::RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            cfg.channel().unwrap();
            seen += 1;
        }
    }
    assert!(seen >= 4);
}
