use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn meshcal(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meshcal"))
        .args(args)
        .current_dir(cwd)
        .env_remove("MESHCAL_OUT_DIR")
        .output()
        .expect("meshcal runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "failed: {}", stderr(&o));
    o
}

/// Small simulated dataset in `<tmp>/sim/dataset.txt`.
fn simulated(epochs: &str) -> TempDir {
    let tmp = TempDir::new().unwrap();
    ok(meshcal(
        &[
            "simulate", "--epochs", epochs, "--seed", "3", "--out", "sim",
        ],
        tmp.path(),
    ));
    tmp
}

const FRAME: &str = "4503,8B05,1C2E";

#[test]
fn simulate_is_deterministic_per_seed() {
    let tmp = TempDir::new().unwrap();
    for dir in ["a", "b"] {
        ok(meshcal(
            &["simulate", "--epochs", "30", "--seed", "5", "--out", dir],
            tmp.path(),
        ));
    }
    for file in ["dataset.txt", "manifest.json"] {
        let a = fs::read(tmp.path().join("a").join(file)).unwrap();
        let b = fs::read(tmp.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
    ok(meshcal(
        &["simulate", "--epochs", "30", "--seed", "6", "--out", "c"],
        tmp.path(),
    ));
    assert_ne!(
        fs::read(tmp.path().join("a/dataset.txt")).unwrap(),
        fs::read(tmp.path().join("c/dataset.txt")).unwrap()
    );
}

#[test]
fn missing_scenario_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let o = meshcal(
        &["simulate", "--scenario", "halls/nowhere.toml"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("halls/nowhere.toml"), "{}", stderr(&o));
}

#[test]
fn scenario_file_and_node_count() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("hall.toml"),
        "name = \"hall\"\nn_nodes = 6\nhall_width = 20.0\nhall_height = 12.0\nn_epochs = 4\n",
    )
    .unwrap();
    ok(meshcal(
        &[
            "simulate",
            "--scenario",
            "hall.toml",
            "--nodes",
            "12",
            "--epochs",
            "2000",
        ],
        tmp.path(),
    ));
    let text = fs::read_to_string(tmp.path().join("meshcal-out/dataset.txt")).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("t=")).count(), 2000);
    let header = text.lines().find(|l| l.starts_with("# nodes:")).unwrap();
    assert_eq!(header.split_whitespace().count(), 2 + 12);
}

#[test]
fn output_directory_from_environment() {
    let tmp = TempDir::new().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_meshcal"))
        .args(["simulate", "--epochs", "3"])
        .current_dir(tmp.path())
        .env("MESHCAL_OUT_DIR", "from-env")
        .output()
        .unwrap();
    ok(o);
    assert!(tmp.path().join("from-env/dataset.txt").exists());
}

#[test]
fn calibrate_both_writes_two_result_sets() {
    let tmp = simulated("15");
    ok(meshcal(
        &[
            "calibrate",
            "sim/dataset.txt",
            "--method",
            "both",
            "--frame",
            FRAME,
            "--out",
            "r",
        ],
        tmp.path(),
    ));
    let dir = tmp.path().join("r");
    for file in ["cf_estimates.csv", "pgp_estimates.csv", "calibration.json"] {
        assert!(dir.join(file).exists(), "{file} missing");
    }
    let cf = fs::read_to_string(dir.join("cf_estimates.csv")).unwrap();
    assert_eq!(
        cf.lines().next().unwrap(),
        "epoch_index,t,node,x,y,available"
    );
    assert_eq!(cf.lines().count(), 1 + 15 * 12);
}

#[test]
fn uncertainty_modes_give_different_results() {
    let tmp = simulated("15");
    for mode in ["hypotheses", "parametric"] {
        ok(meshcal(
            &[
                "calibrate",
                "sim/dataset.txt",
                "--method",
                "pgp",
                "--frame",
                FRAME,
                "--mode",
                mode,
                "--out",
                mode,
            ],
            tmp.path(),
        ));
    }
    let a = fs::read_to_string(tmp.path().join("hypotheses/pgp_estimates.csv")).unwrap();
    let b = fs::read_to_string(tmp.path().join("parametric/pgp_estimates.csv")).unwrap();
    assert_ne!(a, b);
    let manifest: Value = serde_json::from_str(
        &fs::read_to_string(tmp.path().join("parametric/calibration.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["pgp_params"]["mode"], "parametric");
}

#[test]
fn unknown_frame_label_lists_available_ones() {
    let tmp = simulated("3");
    let o = meshcal(
        &["calibrate", "sim/dataset.txt", "--frame", "4503,XXXX,1C2E"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(
        err.contains("XXXX") && err.contains("8B05") && err.contains("7A93"),
        "{err}"
    );
}

#[test]
fn unreadable_dataset_is_a_data_error() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("bad.txt"), "# nodes: A B\nt=0\n- 1\n").unwrap();
    let o = meshcal(&["calibrate", "bad.txt", "--frame", "A,B,A"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line"), "{}", stderr(&o));
}

#[test]
fn evaluate_requires_results() {
    let tmp = simulated("3");
    let o = meshcal(&["evaluate", "sim/dataset.txt"], tmp.path());
    assert_ne!(o.status.code(), Some(0));
    fs::create_dir(tmp.path().join("empty")).unwrap();
    let o = meshcal(
        &["evaluate", "sim/dataset.txt", "--results", "empty"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn json_format_writes_only_the_summary() {
    let tmp = simulated("10");
    ok(meshcal(
        &[
            "calibrate",
            "sim/dataset.txt",
            "--method",
            "cf",
            "--frame",
            FRAME,
            "--out",
            "r",
        ],
        tmp.path(),
    ));
    ok(meshcal(
        &[
            "evaluate",
            "sim/dataset.txt",
            "--results",
            "r",
            "--format",
            "json",
            "--out",
            "rep",
        ],
        tmp.path(),
    ));
    let files: Vec<String> = fs::read_dir(tmp.path().join("rep"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(files, vec!["summary.json".to_string()]);
}

#[test]
fn evaluate_without_truth_skips_metrics() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("plain.txt"),
        "# nodes: A B C D\nt=0\n- 10 6 8\n10 - 8 6\n6 8 - 10\n8 6 10 -\n",
    )
    .unwrap();
    ok(meshcal(
        &[
            "calibrate",
            "plain.txt",
            "--method",
            "cf",
            "--frame",
            "A,B,C",
            "--out",
            "r",
        ],
        tmp.path(),
    ));
    let o = ok(meshcal(
        &["evaluate", "plain.txt", "--results", "r", "--out", "rep"],
        tmp.path(),
    ));
    assert!(stderr(&o).contains("no truth"), "{}", stderr(&o));
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("rep/summary.json")).unwrap())
            .unwrap();
    assert!(summary["positioning"].is_null());
    assert_eq!(summary["availability"][0]["values"][3], 1.0);
}

#[test]
fn compare_emits_delta_table() {
    let tmp = simulated("10");
    for (dir, frame) in [("c1", FRAME), ("c2", "D5B4,8AA5,9911")] {
        ok(meshcal(
            &[
                "calibrate",
                "sim/dataset.txt",
                "--method",
                "cf",
                "--frame",
                frame,
                "--out",
                dir,
            ],
            tmp.path(),
        ));
    }
    ok(meshcal(
        &["compare", "sim/dataset.txt", "c1", "c2", "--out", "cmp"],
        tmp.path(),
    ));
    let delta = fs::read_to_string(tmp.path().join("cmp/config_delta.csv")).unwrap();
    assert_eq!(delta.lines().count(), 1 + 12);
}

#[test]
fn help_and_bad_flags() {
    let tmp = TempDir::new().unwrap();
    let o = ok(meshcal(&["calibrate", "--help"], tmp.path()));
    let help = String::from_utf8_lossy(&o.stdout);
    for flag in [
        "--method",
        "--frame",
        "--mode",
        "--params",
        "--dump-epochs",
        "--out",
    ] {
        assert!(help.contains(flag), "{flag} undocumented");
    }
    assert_eq!(
        meshcal(&["simulate", "--bogus"], tmp.path()).status.code(),
        Some(1)
    );
}

#[test]
fn demo_pipeline_lands_in_band() {
    let tmp = TempDir::new().unwrap();
    ok(meshcal(&["demo", "--out", "demo"], tmp.path()));
    let summary: Value = serde_json::from_str(
        &fs::read_to_string(tmp.path().join("demo/report/summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary["schema_version"], 1);
    let methods = summary["positioning"]["methods"].as_array().unwrap();
    let pgp: Vec<f64> = methods
        .iter()
        .filter(|m| m["method"] == "pgp")
        .map(|m| m["all_node_rmse"].as_f64().unwrap())
        .collect();
    assert_eq!(pgp.len(), 2);
    for rmse in pgp {
        assert!((0.3..=1.2).contains(&rmse), "PGP all-node RMSE {rmse}");
    }
    assert_eq!(summary["positioning"]["pgp_spread_smaller"], true);
    assert!(tmp.path().join("demo/report/config_delta.csv").exists());
}
