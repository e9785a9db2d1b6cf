use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use tailgauge::cli::{dispatch, MANIFEST};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tailgauge"))
}

fn fixture() -> String {
    format!(
        "{}/tests/fixtures/synthetic_prices.csv",
        env!("CARGO_MANIFEST_DIR")
    )
}

fn run(args: &[&str]) -> i32 {
    dispatch(std::iter::once("tailgauge").chain(args.iter().copied()))
}

/// File name -> bytes for everything in `dir` except the manifest.
fn outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != MANIFEST)
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(dir.join(MANIFEST)).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_happy_path() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sim");
    let status = bin()
        .args([
            "simulate",
            "--dgp",
            "dgp1m-tail",
            "--n",
            "1000000",
            "--seed",
            "7",
            "--out-dir",
            s(&out),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let files = outputs(&out);
    for name in ["config.json", "report.json", "density_tau_0.995.csv"] {
        assert!(files.contains_key(name), "{name} missing");
    }
    let m = manifest(&out);
    assert_eq!(m["subcommand"], "simulate");
    assert_eq!(m["seed"], 7);
    assert_eq!(m["status"], "complete");
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(m["outputs"].as_array().unwrap().len(), files.len());
    assert_eq!(m["flags"]["command"]["simulate"]["n"], 1_000_000);
    // Nothing is written beside the output directory.
    let siblings: Vec<PathBuf> = std::fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(siblings, vec![out]);
}

#[test]
fn missing_data_file_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let result = bin()
        .args([
            "estimate",
            "--data",
            "missing.csv",
            "--json-errors",
            "--out-dir",
            s(&out),
        ])
        .output()
        .unwrap();
    assert_eq!(result.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&result.stderr).unwrap();
    assert_eq!(err["error"], "io");
    assert!(err["message"].as_str().unwrap().contains("missing.csv"));
    let m = manifest(&out);
    assert_eq!(m["status"], "failed");
    assert!(m["inputs"][0]["sha256"].is_null());
}

#[test]
fn unknown_dgp_lists_valid_names() {
    let tmp = tempfile::tempdir().unwrap();
    let result = bin()
        .args([
            "simulate",
            "--dgp",
            "unknown",
            "--out-dir",
            s(&tmp.path().join("o")),
        ])
        .output()
        .unwrap();
    assert_eq!(result.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&result.stderr);
    for name in tailgauge::models::BUILTIN_DGPS {
        assert!(stderr.contains(name), "{stderr}");
    }
}

#[test]
fn unknown_flag_prints_usage_and_exits_one() {
    let result = bin()
        .args(["simulate", "--dgp", "dgp1m-tail", "--frobnicate"])
        .output()
        .unwrap();
    assert_eq!(result.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&result.stderr).contains("Usage"));
    assert_eq!(
        bin().arg("--version").output().unwrap().status.code(),
        Some(0)
    );
}

#[test]
fn configuration_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let o = |name: &str| tmp.path().join(name).to_string_lossy().into_owned();
    // Too few tail rows for the largest tau.
    assert_eq!(
        run(&[
            "simulate",
            "--dgp",
            "dgp1m-tail",
            "--n",
            "1000",
            "--out-dir",
            &o("a")
        ]),
        1
    );
    // Tail-index designs have no extremal oracle.
    assert_eq!(
        run(&[
            "simulate",
            "--dgp",
            "dgp1m-tail",
            "--n",
            "300000",
            "--verify-theorem3",
            "--out-dir",
            &o("b")
        ]),
        1
    );
    assert_eq!(
        run(&[
            "empirics",
            "--prices",
            &fixture(),
            "--modes",
            "nope",
            "--out-dir",
            &o("c")
        ]),
        1
    );
    assert_eq!(
        run(&[
            "empirics",
            "--prices",
            &fixture(),
            "--start",
            "2005-01-01",
            "--end",
            "2001-01-01",
            "--out-dir",
            &o("d")
        ]),
        1
    );
    assert_eq!(
        run(&[
            "simulate",
            "--dgp",
            "dgp1m-tail",
            "--shards",
            "0",
            "--out-dir",
            &o("e")
        ]),
        1
    );
}

#[test]
fn simulate_is_bit_identical_across_runs_and_shards() {
    let tmp = tempfile::tempdir().unwrap();
    let mut seen = Vec::new();
    for (name, shards) in [("a", "1"), ("b", "1"), ("c", "4"), ("d", "8")] {
        let out = tmp.path().join(name);
        let code = run(&[
            "simulate",
            "--dgp",
            "dgp4m-extremal",
            "--n",
            "300000",
            "--seed",
            "3",
            "--shards",
            shards,
            "--write-sample",
            "--out-dir",
            s(&out),
        ]);
        assert_eq!(code, 0);
        seen.push(outputs(&out));
    }
    assert!(seen.windows(2).all(|w| w[0] == w[1]));
    let other = tmp.path().join("e");
    assert_eq!(
        run(&[
            "simulate",
            "--dgp",
            "dgp4m-extremal",
            "--n",
            "300000",
            "--seed",
            "4",
            "--out-dir",
            s(&other)
        ]),
        0
    );
    assert_ne!(outputs(&other)["report.json"], seen[0]["report.json"]);
}

#[test]
fn estimate_round_trip_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    assert_eq!(
        run(&[
            "simulate",
            "--dgp",
            "exp-linear",
            "--n",
            "300000",
            "--seed",
            "1",
            "--write-sample",
            "--out-dir",
            s(&sim)
        ]),
        0
    );
    let data = sim.join("sample.csv");
    let mut seen = Vec::new();
    for (name, shards) in [("a", "1"), ("b", "3")] {
        let out = tmp.path().join(name);
        assert_eq!(
            run(&[
                "estimate",
                "--data",
                s(&data),
                "--threshold-quantile",
                "0.99",
                "--shards",
                shards,
                "--out-dir",
                s(&out)
            ]),
            0
        );
        seen.push(outputs(&out));
    }
    assert_eq!(seen[0], seen[1]);
    let est: serde_json::Value = serde_json::from_slice(&seen[0]["estimate.json"]).unwrap();
    assert_eq!(est["threshold"]["n0"], 3000);
    assert_eq!(est["covariates"], serde_json::json!(["intercept", "x1"]));
    let truth = [0.5, 1.0];
    for (j, t) in truth.iter().enumerate() {
        let theta = est["theta"][j].as_f64().unwrap();
        let se = est["standard_errors"][j].as_f64().unwrap();
        assert!((theta - t).abs() < 5.0 * se, "{theta} vs {t} (se {se})");
    }
    let m = manifest(&tmp.path().join("a"));
    let digest = m["inputs"][0]["sha256"].as_str().unwrap();
    assert_eq!(digest.len(), 64);
    // Other threshold forms.
    let out = tmp.path().join("c");
    assert_eq!(
        run(&[
            "estimate",
            "--data",
            s(&data),
            "--top-count",
            "500",
            "--out",
            "top.json",
            "--out-dir",
            s(&out)
        ]),
        0
    );
    let top: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("top.json")).unwrap()).unwrap();
    assert_eq!(top["threshold"]["n0"], 500);
    assert_eq!(
        run(&[
            "estimate",
            "--data",
            s(&data),
            "--threshold-value",
            "0.5",
            "--out-dir",
            s(&tmp.path().join("d"))
        ]),
        1
    );
}

#[test]
fn diagnose_writes_histograms_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    assert_eq!(
        run(&[
            "simulate",
            "--dgp",
            "dgp4m-tail",
            "--n",
            "250000",
            "--write-sample",
            "--out-dir",
            s(&sim)
        ]),
        0
    );
    let out = tmp.path().join("diag");
    assert_eq!(
        run(&[
            "diagnose",
            "--data",
            s(&sim.join("sample.csv")),
            "--taus",
            "0.9,0.99",
            "--modes",
            "dgp4m",
            "--out-dir",
            s(&out)
        ]),
        0
    );
    let files = outputs(&out);
    assert!(
        files.contains_key("density_tau_0.9.csv") && files.contains_key("density_tau_0.99.csv")
    );
    let report: serde_json::Value = serde_json::from_slice(&files["report.json"]).unwrap();
    let ratio = report["records"][1]["multimode"]["ratio"].as_f64().unwrap();
    assert!(ratio > 0.0 && ratio < 0.2, "{ratio}");
    // The in-file diagnostics agree with the streaming simulation report.
    let sim_report: serde_json::Value =
        serde_json::from_slice(&outputs(&sim)["report.json"]).unwrap();
    let sim_ratio = sim_report["report"]["records"][2]["multimode"]["ratio"]
        .as_f64()
        .unwrap();
    assert!((ratio - sim_ratio).abs() < 1e-9, "{ratio} vs {sim_ratio}");
}

#[test]
fn simulate_from_config_with_verification() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("dgp.toml");
    std::fs::write(
        &cfg,
        "family = \"rectangle\"\nname = \"rect\"\nx1 = [0.0, 1.0]\nx2 = [1.0, 2.0]\nnoise = \"pareto\"\nnoise_alpha = 2.0\n",
    )
    .unwrap();
    let out = tmp.path().join("o");
    assert_eq!(
        run(&[
            "simulate",
            "--dgp-config",
            s(&cfg),
            "--n",
            "400000",
            "--verify-theorem3",
            "--out-dir",
            s(&out)
        ]),
        0
    );
    let files = outputs(&out);
    assert!(files.contains_key("nondegeneracy.csv"));
    let report: serde_json::Value = serde_json::from_slice(&files["nondegeneracy.json"]).unwrap();
    assert_eq!(report["comparisons"][0]["mode"], "exact");
    assert_eq!(manifest(&out)["inputs"][0]["path"], s(&cfg));
}

#[test]
fn empirics_on_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("emp");
    assert_eq!(
        run(&[
            "empirics",
            "--prices",
            &fixture(),
            "--modes",
            "0.2,0.7",
            "--taus",
            "0.1,0.05",
            "--out-dir",
            s(&out)
        ]),
        0
    );
    let files = outputs(&out);
    assert_eq!(files.len(), 3);
    let report: serde_json::Value = serde_json::from_slice(&files["report.json"]).unwrap();
    assert_eq!(report["t_len"], 2520);
    assert_eq!(report["records"][0]["n_observations"], 252);
    let sub = tmp.path().join("sub");
    assert_eq!(
        run(&[
            "empirics",
            "--prices",
            &fixture(),
            "--start",
            "2003-01-01",
            "--end",
            "2004-12-31",
            "--modes",
            "two-mode-subperiod",
            "--out-dir",
            s(&sub)
        ]),
        0
    );
    let report: serde_json::Value = serde_json::from_slice(&outputs(&sub)["report.json"]).unwrap();
    assert!(report["t_len"].as_u64().unwrap() < 600);
    assert_eq!(report["modes"]["modes"], serde_json::json!([0.5, 0.83]));
}
