use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn sfuc(dir: &Path, config: &str, args: &[&str]) -> i32 {
    let cfg = dir.join("config.json");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_sfuc"))
        .arg("--config")
        .arg(&cfg)
        .args(args)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

fn body_lines(out: &Path) -> Vec<String> {
    fs::read_to_string(out.join("records.jsonl")).unwrap().lines().skip(1).map(str::to_owned).collect()
}

#[test]
fn constants_reports_canonical_value() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    assert_eq!(sfuc(tmp.path(), "{}", &["--out", out.to_str().unwrap(), "constants"]), 0);
    let r = report(&out);
    assert_eq!(r["subcommand"], "constants");
    assert_eq!(r["passed"], true);
    let v = r["result"]["constants"]["log_c_sfuc"].as_f64().unwrap();
    assert!((v / -4_531_830.349_861_048 - 1.0).abs() < 1e-10);
}

#[test]
fn inadmissible_configuration_is_charted_but_not_run() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = r#"{"model": {"theta2": 1.0}}"#;
    assert_eq!(sfuc(tmp.path(), cfg, &["--out", out.to_str().unwrap(), "constants"]), 0);
    assert_eq!(report(&out)["result"]["constants"]["admissible"], false);
    assert_eq!(sfuc(tmp.path(), cfg, &["--out", out.to_str().unwrap(), "verify"]), 2);
}

#[test]
fn bad_arguments_exit_with_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(sfuc(tmp.path(), "{}", &["--bogus", "constants"]), 2);
    assert_eq!(sfuc(tmp.path(), r#"{"model": {"colour": 1}}"#, &["constants"]), 2);
    assert_eq!(sfuc(tmp.path(), r#"{"model.delta": 0.75}"#, &["verify"]), 2);
    assert_eq!(sfuc(tmp.path(), r#"{"model.L": 4.0}"#, &["verify"]), 2);
}

#[test]
fn carleman_violation_exits_with_assertion_code() {
    // a d = 1 trial whose weight the h = 1/64 grid cannot resolve
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    assert_eq!(sfuc(tmp.path(), r#"{"seeds": [0]}"#, &["--out", out.to_str().unwrap(), "carleman-check"]), 1);
    let r = report(&out);
    assert_eq!(r["passed"], false);
    assert!(r["result"]["failures"][0].as_str().unwrap().starts_with("records.jsonl line 2"));
}

#[test]
fn verify_artifacts_and_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"model.d": 2, "model.L": 3.0, "grid.h": 0.125, "seeds": [0, 1], "deltas": [0.125, 0.25]}"#;
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(sfuc(tmp.path(), cfg, &["--out", a.to_str().unwrap(), "--emit-plot-data", "verify"]), 0);
    assert_eq!(sfuc(tmp.path(), cfg, &["--out", b.to_str().unwrap(), "--emit-plot-data", "verify"]), 0);
    let lines = body_lines(&a);
    // two seeds, two deltas, eigenfunction and projector sample
    assert_eq!(lines.len(), 8);
    assert_eq!(lines, body_lines(&b));
    for l in &lines {
        let v: Value = serde_json::from_str(l).unwrap();
        assert_eq!(v["passed"], true);
        assert_eq!(v["params"]["d"], 2);
    }
    let header: Value =
        serde_json::from_str(fs::read_to_string(a.join("records.jsonl")).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(header["header"]["tool"], "sfuc");
    for f in ["summary.csv", "plot.csv"] {
        assert!(fs::read_to_string(a.join(f)).unwrap().starts_with("# config="), "{f}");
    }
}

#[test]
fn field_file_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let cfg = r#"{"seeds": [0, 1, 2], "model.norm_V": 1.0}"#;
    assert_eq!(sfuc(tmp.path(), cfg, &["--out", a.to_str().unwrap(), "verify"]), 0);
    let field = tmp.path().join("field.json");
    fs::write(&field, report(&a)["result"]["field"].to_string()).unwrap();
    let args = ["--out", b.to_str().unwrap(), "--field-file", field.to_str().unwrap(), "verify"];
    assert_eq!(sfuc(tmp.path(), cfg, &args), 0);
    assert_eq!(body_lines(&a), body_lines(&b));
}
