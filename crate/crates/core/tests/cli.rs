use std::process::Command;

fn mcco(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_mcco")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn estimate_writes_a_report() {
    let (code, out, _) = mcco(&[
        "estimate", "--problem", r#"{"kind": "synthetic"}"#, "--estimator", "mlmc", "--n1", "2000", "--seed", "4",
    ]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["seed"], 4);
    assert!(v["result"]["estimate"].as_f64().unwrap().is_finite());
}

#[test]
fn bad_input_exits_2() {
    let (code, _, err) = mcco(&["estimate", "--problem", r#"{"kind": "synthetic", "dims": [1, 1, 1]}"#, "--estimator", "saa", "--n", "2,2,2"]);
    assert_eq!(code, 2);
    assert!(err.contains("stage 3"), "{err}");
    assert_eq!(mcco(&["estimate", "--bogus"]).0, 2);
}

#[test]
fn infinite_cost_exits_3() {
    let (code, _, err) = mcco(&[
        "estimate", "--problem", r#"{"kind": "synthetic"}"#, "--estimator", "mlmc", "--untruncated", "--rates", "0.4,0.6", "--n1", "10",
    ]);
    assert_eq!(code, 3, "{err}");
}

#[test]
fn failed_tolerance_exits_4_and_keeps_the_summary() {
    let dir = std::env::temp_dir().join(format!("mcco-cli-{}", std::process::id()));
    let (code, _, _) = mcco(&["experiment", "bandits", "--iterations", "5", "--out-dir", dir.to_str().unwrap()]);
    assert_eq!(code, 4);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("bandits_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], false);
    let _ = std::fs::remove_dir_all(dir);
}
