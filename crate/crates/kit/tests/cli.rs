// SPDX-License-Identifier: Apache-2.0

use std::path::Path;
use std::process::{Command, Output};

use chernoff_kit::report::{parse_csv, refit_rates};
use proptest::prelude::*;

fn kit(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chernoff-kit"))
        .args(args)
        .current_dir(dir)
        .env_remove("CHERNOFF_KIT_SEED")
        .output()
        .expect("binary runs")
}

fn run_config(config: &str, dir: &Path) -> Output {
    std::fs::write(dir.join("cfg.json"), config).unwrap();
    kit(&["run", "--config", "cfg.json", "--out", "out"], dir)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn free_heat_converges_with_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config(
        r#"{"scenario": {"name": "heat", "n": 32, "potential": "zero"}, "suites": ["converge"],
            "n_grid": [8, 16, 32]}"#,
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("out/results.csv")).unwrap();
    let cells = parse_csv(&csv).unwrap();
    // l2 and sup seminorms, three n, four t
    assert_eq!(cells.len(), 2 * 3 * 4);
    assert!(cells.iter().all(|c| c.error < 1e-10), "commuting splitting is exact");
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(json["schema_version"], "1");
    assert_eq!(json["suites"][0]["verdict"], "pass");
}

#[test]
fn t_grid_beyond_t0_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config(
        r#"{"scenario": {"name": "heat", "potential": "zero"}, "t0": 1.0, "t_grid": [0.5, 1.5]}"#,
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("t_grid[1]"), "{}", stderr(&out));
    assert!(!dir.path().join("out").exists(), "nothing is written on config errors");
}

#[test]
fn unknown_keys_and_missing_files_are_distinguished() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config(r#"{"scenario": {"name": "heat"}, "suits": ["all"]}"#, dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("suits"));

    let out = kit(&["run", "--config", "absent.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));

    let out = kit(&["frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn inapplicable_suite_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config(r#"{"scenario": {"name": "schrodinger"}, "suites": ["exa-gap"]}"#, dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("suites"));
}

#[test]
fn failing_verdict_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    // first-order convergence cannot land in a [1.5, 2.5] rate window
    let out = run_config(
        r#"{"scenario": {"name": "dissipative", "dim": 8}, "suites": ["converge"],
            "tolerances": {"rate_low": 1.5, "rate_high": 2.5}}"#,
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let json = std::fs::read_to_string(dir.path().join("out/summary.json")).unwrap();
    assert!(json.contains("\"verdict\": \"fail\""));
}

#[test]
fn rates_subcommand_refits_the_written_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config(r#"{"scenario": {"name": "dissipative", "dim": 8}, "suites": ["converge"]}"#, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    let cells = parse_csv(&std::fs::read_to_string(dir.path().join("out/results.csv")).unwrap()).unwrap();
    let fits = refit_rates(&cells);
    let recorded = summary["suites"][0]["rates"].as_array().unwrap();
    assert_eq!(fits.len(), recorded.len());
    for (r, rec) in fits.iter().zip(recorded) {
        assert_eq!(rec["seminorm"], r.seminorm.as_str());
        // serde_json's default float parser may be off by an ulp
        assert!((rec["slope"].as_f64().unwrap() - r.fit.unwrap().slope).abs() < 1e-12);
    }

    let out = kit(&["rates", "--csv", "out/results.csv"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("seminorm,rate,"));
    assert_eq!(stdout.lines().count(), 1 + fits.len());

    std::fs::write(dir.path().join("broken.csv"), "seminorm,t,n,error\nl2,1,x,2\n").unwrap();
    let out = kit(&["rates", "--csv", "broken.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 2"));
}

#[test]
fn seed_environment_variable_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"scenario": {"name": "dissipative", "dim": 6}, "suites": ["converge"], "seed": 1}"#,
    )
    .unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_chernoff-kit"))
        .args(["run", "--config", "cfg.json"])
        .current_dir(dir.path())
        .env("CHERNOFF_KIT_SEED", "99")
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0), "{}", stderr(&status));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(json["seed"], 99);

    let bad = Command::new(env!("CARGO_BIN_EXE_chernoff-kit"))
        .args(["run", "--config", "cfg.json"])
        .current_dir(dir.path())
        .env("CHERNOFF_KIT_SEED", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(3));
}

#[test]
fn scenarios_lists_builtins() {
    let dir = tempfile::tempdir().unwrap();
    let out = kit(&["scenarios"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["heat", "schrodinger", "dissipative", "mult-example"] {
        assert!(text.contains(name));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // Exit code 3 exactly when some t lies outside [0, t0] or the n grid is
    // not strictly increasing; otherwise the run completes with 0 or 2.
    #[test]
    fn exit_code_contract(
        t0 in 0.25f64..2.0,
        ts in prop::collection::vec(-0.5f64..2.5, 1..4),
        ns in prop::collection::vec(1u64..40, 1..4),
        seed in 0u64..1000,
    ) {
        let dir = tempfile::tempdir().unwrap();
        let config = serde_json::json!({
            "scenario": {"name": "dissipative", "dim": 4},
            "suites": ["converge"],
            "t0": t0,
            "t_grid": ts,
            "n_grid": ns,
            "seed": seed,
        });
        let out = run_config(&config.to_string(), dir.path());
        let invalid = ts.iter().any(|t| !(0.0..=t0).contains(t)) || ns.windows(2).any(|w| w[1] <= w[0]);
        let code = out.status.code().unwrap();
        if invalid {
            prop_assert_eq!(code, 3, "{}", stderr(&out));
        } else {
            prop_assert!(code == 0 || code == 2, "code {} {}", code, stderr(&out));
            prop_assert!(dir.path().join("out/summary.json").exists());
        }
    }
}
