//! End-to-end tests of the command-line interface: exit codes, file schemas,
//! and rerun determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bats-flan"))
}

fn model_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../models")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn bats-flan")
}

fn stdout_json(output: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&output.stdout);
    let start = text.find('{').expect("json in stdout");
    serde_json::from_str(&text[start..]).expect("valid summary json")
}

#[test]
fn solvability_reports_capacity() {
    let model = model_path("rankd.json");
    let out = run(&["solvability", "--model", model.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let json = stdout_json(&out);
    let capacity = json["capacity"].as_f64().unwrap();
    assert!((capacity - 0.7442).abs() < 5e-4, "capacity {capacity}");
    assert_eq!(json["hbar"].as_array().unwrap().len(), 17);
}

#[test]
fn bp_writes_schema_versioned_cdf() {
    let dir = tempfile::tempdir().unwrap();
    let cdf = dir.path().join("cdf.csv");
    let model = model_path("desk32.json");
    let out = run(&[
        "bp",
        "--model",
        model.to_str().unwrap(),
        "--n",
        "10",
        "--kprime",
        "31",
        "--out",
        cdf.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let json = stdout_json(&out);
    let p_error = json["p_error"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p_error));
    assert!(json["flags"].as_array().unwrap().is_empty());

    let text = std::fs::read_to_string(&cdf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "# bats-flan-csv v1 stopping-time");
    assert_eq!(lines.next().unwrap(), "t,pmf,cdf");
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 33);
    // CDF monotone, ends at 1
    for w in rows.windows(2) {
        assert!(w[1][2] >= w[0][2] - 1e-12);
    }
    assert!((rows.last().unwrap()[2] - 1.0).abs() < 1e-8);
    // manifest sits beside the output
    let manifest = std::fs::read_to_string(dir.path().join("cdf.csv.manifest.json")).unwrap();
    let manifest: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(manifest["command"], "bp");
    assert!(manifest["tool_version"].is_string());

    // rerun equality: the written CSV and the summary are byte-identical
    let cdf2 = dir.path().join("cdf2.csv");
    let out2 = run(&[
        "bp",
        "--model",
        model.to_str().unwrap(),
        "--n",
        "10",
        "--kprime",
        "31",
        "--out",
        cdf2.to_str().unwrap(),
    ]);
    assert_eq!(out.stdout, out2.stdout);
    assert_eq!(text, std::fs::read_to_string(&cdf2).unwrap());
}

#[test]
fn poisson_and_inact_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let model = model_path("desk32.json");
    let cdf = dir.path().join("pcdf.csv");
    let out = run(&[
        "poisson",
        "--model",
        model.to_str().unwrap(),
        "--nbar",
        "8",
        "--tol",
        "1e-10",
        "--out",
        cdf.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    assert!(std::fs::read_to_string(&cdf)
        .unwrap()
        .starts_with("# bats-flan-csv v1 stopping-time"));

    let out = run(&["inact", "--model", model.to_str().unwrap(), "--n", "10"]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let json = stdout_json(&out);
    let expected = json["expected_inactivations"].as_f64().unwrap();
    assert!(expected > 0.0 && expected <= 32.0);
    assert_eq!(json["per_step_inact_prob"].as_array().unwrap().len(), 32);

    let out = run(&["inact", "--model", model.to_str().unwrap(), "--nbar", "10"]);
    assert_eq!(out.status.code(), Some(0));
    let poisson_expected = stdout_json(&out)["expected_inactivations"]
        .as_f64()
        .unwrap();
    assert!(
        poisson_expected >= expected,
        "{poisson_expected} vs {expected}"
    );
}

#[test]
fn optimize_emits_design() {
    let dir = tempfile::tempdir().unwrap();
    let psi_out = dir.path().join("psi.json");
    let model = model_path("desk32.json");
    let out = run(&[
        "optimize",
        "--model",
        model.to_str().unwrap(),
        "--eta",
        "0.04",
        "--grid",
        "128",
        "--out",
        psi_out.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let json = stdout_json(&out);
    assert_eq!(json["feasible"], true);
    let psi: Vec<f64> = json["degree_dist"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let total: f64 = psi.iter().sum();
    assert!((total - 1.0).abs() < 1e-9);
    assert!(json["max_violation"].as_f64().unwrap() <= 1e-6);
    assert!(psi_out.exists());

    // with the heuristic enabled, theta can only go down
    let theta0 = json["theta"].as_f64().unwrap();
    let out = run(&[
        "optimize",
        "--model",
        model.to_str().unwrap(),
        "--eta",
        "0.04",
        "--grid",
        "128",
        "--c",
        "15",
        "--cprime",
        "0.5",
        "--K",
        "64",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let theta1 = stdout_json(&out)["theta"].as_f64().unwrap();
    assert!(theta1 <= theta0 + 1e-9);
}

#[test]
fn simulate_is_deterministic_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    let model = model_path("desk32.json");
    let hist = dir.path().join("hist.csv");
    let args = [
        "simulate",
        "--model",
        model.to_str().unwrap(),
        "--n",
        "10",
        "--trials",
        "2000",
        "--seed",
        "42",
        "--inactivation",
        "--out",
        hist.to_str().unwrap(),
    ];
    let a = run(&args);
    assert_eq!(a.status.code(), Some(0), "{a:?}");
    let text_a = std::fs::read_to_string(&hist).unwrap();
    assert!(text_a.starts_with("# bats-flan-csv v1 sim-histogram"));
    let b = run(&args);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(text_a, std::fs::read_to_string(&hist).unwrap());

    let out = run(&[
        "simulate",
        "--model",
        model.to_str().unwrap(),
        "--n",
        "10",
        "--trials",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trials"));
}

#[test]
fn crosscheck_passes_on_lt_model() {
    let model = model_path("lt16.json");
    let out = run(&["crosscheck", "--model", model.to_str().unwrap(), "--n", "8"]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let json = stdout_json(&out);
    assert_eq!(json["pass"], true);
    assert!(json["max_discrepancy"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn compare_reference_config_passes() {
    let dir = tempfile::tempdir().unwrap();
    let model = model_path("desk32.json");
    let csv = dir.path().join("cmp.csv");
    let out = run(&[
        "compare",
        "--model",
        model.to_str().unwrap(),
        "--n",
        "10",
        "--trials",
        "20000",
        "--seed",
        "5",
        "--inactivation",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let json = stdout_json(&out);
    assert_eq!(json["pass"], true);
    assert!(std::fs::read_to_string(&csv)
        .unwrap()
        .starts_with("# bats-flan-csv v1 compare"));
}

#[test]
fn tables_emits_csv_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("tables.json");
    std::fs::write(
        &config,
        serde_json::json!({
            "model": {
                "K": 16, "M": 2, "q": 16, "D": 5, "lt_mode": false,
                "rank_dist": [0.05, 0.25, 0.70],
                "degree_dist": [0.1, 0.4, 0.2, 0.15, 0.15]
            },
            "eta": 0.04,
            "runs": [ { "n": 6 }, { "nbar": 6.0 }, { "K": 32, "n": 12 } ],
            "psis": [ { "name": "flat", "degree_dist": [0.2, 0.2, 0.2, 0.2, 0.2] } ],
            "emit_cdf": true
        })
        .to_string(),
    )
    .unwrap();
    let prefix = dir.path().join("t");
    let out = run(&[
        "tables",
        "--config",
        config.to_str().unwrap(),
        "--out",
        prefix.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");

    let overhead = std::fs::read_to_string(dir.path().join("t_overhead.csv")).unwrap();
    assert!(overhead.starts_with("# bats-flan-csv v1 design-overhead"));
    assert_eq!(overhead.lines().count(), 2 + 3);

    let results = std::fs::read_to_string(dir.path().join("t_results.csv")).unwrap();
    assert!(results.starts_with("# bats-flan-csv v1 analysis-results"));
    // 2 candidate distributions x 3 runs
    assert_eq!(results.lines().count(), 2 + 6);
    for line in results.lines().skip(2) {
        let fields: Vec<&str> = line.split(',').collect();
        let p_error: f64 = fields[4].parse().unwrap();
        let inact: f64 = fields[5].parse().unwrap();
        assert!((0.0..=1.0).contains(&p_error), "{line}");
        assert!(inact >= 0.0, "{line}");
    }
    // CDF bundles exist and are monotone with total 1
    let cdf = std::fs::read_to_string(dir.path().join("t_cdf_model_fixed6_K16.csv")).unwrap();
    let rows: Vec<f64> = cdf
        .lines()
        .skip(2)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert!((rows.last().unwrap() - 1.0).abs() < 1e-8);
    for w in rows.windows(2) {
        assert!(w[1] >= w[0] - 1e-12);
    }
}

#[test]
fn degeneracy_flags_map_to_exit_three() {
    // every batch is a decodable singleton, so the undecoded remainder hits
    // zero after t = 0 and the conditional decodability ratio degenerates
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("coupon.json");
    std::fs::write(
        &model,
        r#"{ "K": 4, "M": 1, "q": 2, "D": 1, "lt_mode": true,
             "rank_dist": [0.0, 1.0], "degree_dist": [1.0] }"#,
    )
    .unwrap();
    let out = run(&["bp", "--model", model.to_str().unwrap(), "--n", "3"]);
    assert_eq!(out.status.code(), Some(3), "{out:?}");
    let json = stdout_json(&out);
    let flags = json["flags"].as_array().unwrap();
    assert!(
        flags
            .iter()
            .any(|f| f.as_str().unwrap().contains("rho_denominator_underflow")),
        "{flags:?}"
    );
}

#[test]
fn invalid_model_is_a_structured_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{ "K": 8, "M": 2, "q": 16, "D": 3, "lt_mode": false,
             "rank_dist": [0.5, 0.6, 0.2], "degree_dist": [0.5, 0.3, 0.2] }"#,
    )
    .unwrap();
    let out = run(&["solvability", "--model", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("rank_dist"), "{stderr}");

    let out = run(&["solvability"]);
    assert_eq!(out.status.code(), Some(2));
}
