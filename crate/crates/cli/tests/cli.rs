use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn treeloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_treeloc"))
        .args(args)
        .env_remove("TREELOC_OUTPUT_DIR")
        .output()
        .expect("spawn treeloc")
}

fn records(text: &str) -> Vec<Value> {
    text.lines().map(|l| serde_json::from_str(l).expect("json line")).collect()
}

fn stdout_records(out: &Output) -> Vec<Value> {
    records(std::str::from_utf8(&out.stdout).unwrap())
}

#[test]
fn tree_reports_ball_and_junctions() {
    let out = treeloc(&["tree", "--k", "2", "--gamma", "2", "--radius", "14"]);
    assert_eq!(out.status.code(), Some(0));
    let recs = stdout_records(&out);
    let ball = recs.iter().find(|r| r["record_type"] == "ball").unwrap();
    assert_eq!(ball["payload"]["vertices"], 85);
    assert_eq!(ball["payload"]["junction_depths"], serde_json::json!([0, 2, 6, 14]));
    assert_eq!(ball["config"]["radius"], 14);
    assert_eq!(recs.iter().filter(|r| r["record_type"] == "dimension").count(), 6);
}

#[test]
fn bad_exponent_is_a_usage_error() {
    let out = treeloc(&["moments", "--s", "1.2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("(0, 1)"));
}

#[test]
fn unknown_flag_and_subcommand_exit_2() {
    assert_eq!(treeloc(&["tree", "--colour", "red"]).status.code(), Some(2));
    assert_eq!(treeloc(&["bogus"]).status.code(), Some(2));
    assert_eq!(treeloc(&["--help"]).status.code(), Some(0));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# small ball\nk = 3\ngamma = 2\nradius = 9\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let out = treeloc(&["tree", "--config", cfg, "--radius", "6"]);
    assert_eq!(out.status.code(), Some(0));
    let recs = stdout_records(&out);
    assert_eq!(recs[0]["config"]["k"], 3);
    assert_eq!(recs[0]["config"]["radius"], 6);
    // Depths 0..=6 with junctions at 0, 2, 6: 1 + 3 + 3 + 9 * 4 = 43.
    assert_eq!(recs[0]["payload"]["vertices"], 43);
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "radius = 5\ntemperature = 3\n").unwrap();
    let out = treeloc(&["tree", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("temperature"));
}

fn moments_to(path: &Path, csv: Option<&Path>) -> Output {
    let mut args = vec![
        "moments", "--radius", "12", "--lambda", "3", "--samples", "300", "--seed", "5", "--output",
        path.to_str().unwrap(),
    ];
    if let Some(c) = csv {
        args.extend(["--csv", c.to_str().unwrap()]);
    }
    treeloc(&args)
}

#[test]
fn reruns_are_byte_identical_and_carry_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    let csv = dir.path().join("a.csv");
    assert_eq!(moments_to(&a, Some(&csv)).status.code(), Some(0));
    assert_eq!(moments_to(&b, None).status.code(), Some(0));
    let (ta, tb) = (std::fs::read_to_string(&a).unwrap(), std::fs::read_to_string(&b).unwrap());
    assert_eq!(ta, tb);

    let recs = records(&ta);
    let moments: Vec<&Value> = recs.iter().filter(|r| r["record_type"] == "moment").collect();
    assert_eq!(moments.len(), 12);
    assert!(recs.last().unwrap()["record_type"] == "decay_fit");
    assert!(recs.iter().all(|r| r["config"].get("workers").is_none()));

    let meta: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.jsonl.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["command"], "moments");
    assert!(meta["elapsed_s"].as_f64().unwrap() >= 0.0);

    let csv = std::fs::read_to_string(&csv).unwrap();
    assert!(csv.starts_with("target,distance,mean,stderr,samples\n"));
    assert_eq!(csv.lines().count(), 13);
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_treeloc"))
        .args(["tree", "--radius", "5"])
        .env("TREELOC_OUTPUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    assert!(dir.path().join("tree.jsonl").exists());
    assert!(dir.path().join("tree.jsonl.meta.json").exists());
}

#[test]
fn green_entry_matches_dense() {
    let out = treeloc(&["green", "--radius", "10", "--x", "0", "--y", "7", "--eta", "0.01"]);
    assert_eq!(out.status.code(), Some(0));
    let recs = stdout_records(&out);
    let p = &recs[0]["payload"];
    assert!(p["dense_deviation"].as_f64().unwrap() < 1e-10);
    assert!(p["abs"].as_f64().unwrap() > 0.0);
}

#[test]
fn segment_in_depth_mode() {
    // gamma = 2: junctions at depths 0, 2, 6, 14, 30, 62, 126, ...
    let out = treeloc(&["segment", "--gamma", "2", "--l0", "5", "--depth-x", "63", "--apex", "63", "--depth-v", "200"]);
    assert!(matches!(out.status.code(), Some(0 | 1)));
    let recs = stdout_records(&out);
    let seg = recs.iter().find(|r| r["record_type"] == "segmentation").unwrap();
    assert_eq!(seg["payload"]["junction_offsets"], serde_json::json!([63]));
    let pairs = seg["payload"]["result"]["pairs"].as_array().unwrap();
    assert_eq!(pairs[0]["x_offset"], 0);
    assert_eq!(pairs.last().unwrap()["v_offset"], 137);
    let report = recs.iter().find(|r| r["record_type"] == "segmentation_report").unwrap();
    let all_pass = report["payload"]["properties"].as_array().unwrap().iter().all(|p| p["passed"] == true);
    assert_eq!(out.status.code(), Some(if all_pass { 0 } else { 1 }));
}

#[test]
fn segment_rejects_small_l0_and_bad_preconditions() {
    assert_eq!(treeloc(&["segment", "--l0", "2", "--depth-x", "63", "--apex", "63", "--depth-v", "200"]).status.code(), Some(2));
    // Too short: d = 20 <= 7 L0.
    let out = treeloc(&["segment", "--gamma", "2", "--l0", "5", "--depth-x", "63", "--apex", "63", "--depth-v", "83"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("7 L0"));
}

#[test]
fn verify_subset_reports_each_criterion() {
    let out = treeloc(&["verify", "--quick", "--only", "1,2,10"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let recs = stdout_records(&out);
    assert_eq!(recs.len(), 3);
    assert!(recs.iter().all(|r| r["payload"]["passed"] == true));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.lines().filter(|l| l.starts_with("[PASS]")).count(), 3);
    assert_eq!(treeloc(&["verify", "--only", "11"]).status.code(), Some(2));
}
