use std::process::{Command, Output};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dwc-lab"))
        .args(args)
        .output()
        .expect("dwc-lab runs")
}

const B_SOURCE: &str = r#"{"variant":"BMember","epsilon":0.3,"j":2}"#;

#[test]
fn phi_run_csv_schema_and_determinism() {
    let args = [
        "phi-run", "--class", "b", "--b-level", "4", "--source", B_SOURCE, "--trials", "5",
        "--horizon", "300", "--seed", "9",
    ];
    let a = lab(&args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let text = String::from_utf8(a.stdout.clone()).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("trial,entered,entry_time,trap_index,premature,indeterminate"));
    let trials: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(trials, ["0", "1", "2", "3", "4"]);
    assert_eq!(lab(&args).stdout, a.stdout);
}

#[test]
fn config_errors_exit_2() {
    // missing seed
    assert_eq!(lab(&["demo"]).status.code(), Some(2));
    // class I has no indicator
    let o = lab(&["phi-run", "--class", "i", "--source", r#"{"variant":"BZero"}"#, "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("class I"));
    // source past the uniform cap
    let o = lab(&[
        "phi-run", "--class", "uniform", "--uniform-cap", "8", "--source",
        r#"{"variant":"Uniform","m":1,"M":20}"#, "--seed", "1",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(lab(&["bounds", "--suite", "nope", "--seed", "1"]).status.code(), Some(2));
}

#[test]
fn config_file_and_out_path() {
    let dir = std::env::temp_dir().join(format!("dwc-lab-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("curve.json");
    let out = dir.join("curve.csv");
    std::fs::write(
        &cfg,
        r#"{"kind":"redundancy-curve","seed":3,"source":{"variant":"Uniform","m":1,"M":2},"lengths":[1,8,64]}"#,
    )
    .unwrap();
    let o = lab(&["redundancy", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "n,redundancy,ci95,rbound");
    assert_eq!(rows.len(), 4);
    for r in &rows[1..] {
        let v: f64 = r.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(v, 0.0);
    }
    // a config for another kind is rejected
    assert_eq!(lab(&["demo", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn bounds_suite_passes_and_json_parses() {
    let o = lab(&["bounds", "--seed", "4", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["config"]["kind"], "bounds-suite");
    assert_eq!(v["aggregates"]["violations"], 0.0);
}

#[test]
fn zero_trials_premature_marks_undefined() {
    let o = lab(&[
        "premature", "--class", "b", "--b-level", "3", "--source", B_SOURCE, "--trials", "0", "--seed", "1",
    ]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("quantity,value\n"));
    assert!(text.contains("entry_fraction,undefined"));
}
