use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn gridstat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridstat"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .display()
        .to_string()
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn generated_case(dir: &Path, classes: &str, n: &str) -> String {
    let case = path_str(&dir.join("gen.m"));
    let out = gridstat(&[
        "generate", "--class", classes, "--n", n, "--seed", "11", "--format", "matpower", "--out", &case,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    case
}

#[test]
fn validate_generated_case_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let case = generated_case(dir.path(), "115,138,230", "3000");
    let out = gridstat(&["validate", "--case", &case, "--profile", "builtin"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report = json(&out);
    assert_eq!(report["body"]["overall_pass"], Value::Bool(true));
    assert_eq!(report["command"], "validate");
    assert_eq!(report["kl_units"], "nats");
    assert!(report["input_digest"].as_str().unwrap().starts_with("sha256:"));
    assert_eq!(report["thresholds"]["median_rel"], 0.25);
}

#[test]
fn validation_failure_exits_two() {
    // every transformer has own-base reactance far outside the reference band
    let mut csv = String::from("id,from_bus,to_bus,from_kv,to_kv,r_pu,x_pu,mva_rating,tap_ratio,system_mva_base\n");
    for i in 0..40 {
        let mva = 20.0 + i as f64;
        csv.push_str(&format!("t{i},{},{},115,13.8,0.01,{},{mva},1.0,100\n", 2 * i, 2 * i + 1, 0.6 + 0.001 * i as f64));
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, csv).unwrap();
    let out = gridstat(&["validate", "--branches", &path_str(&path)]);
    assert_eq!(out.status.code(), Some(2));
    let report = json(&out);
    assert_eq!(report["body"]["overall_pass"], Value::Bool(false));
    let failed: Vec<&Value> = report["body"]["findings"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|f| f["status"] == "fail")
        .collect();
    assert!(failed.iter().any(|f| f["check"] == "band_check"));
}

#[test]
fn threshold_overrides_are_reported_and_checked() {
    let dir = tempfile::tempdir().unwrap();
    let case = generated_case(dir.path(), "115", "500");
    let t = dir.path().join("t.json");
    fs::write(&t, r#"{"median_rel": 0.5}"#).unwrap();
    let out = gridstat(&["validate", "--case", &case, "--thresholds", &path_str(&t)]);
    assert_eq!(json(&out)["thresholds"]["median_rel"], 0.5);
    assert_eq!(json(&out)["thresholds"]["band_abs"], 0.1);

    fs::write(&t, r#"{"kl_max": -1}"#).unwrap();
    let out = gridstat(&["validate", "--case", &case, "--thresholds", &path_str(&t)]);
    assert_eq!(out.status.code(), Some(1));

    fs::write(&t, r#"{"kl_maximum": 1}"#).unwrap();
    let out = gridstat(&["validate", "--case", &case, "--thresholds", &path_str(&t)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn analyze_marks_empty_classes() {
    let out = gridstat(&["analyze", "--case", &fixture("case3.m")]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out);
    let classes = report["body"]["classes"].as_array().unwrap();
    let c230 = classes.iter().find(|c| c["class_kv"] == 230.0).unwrap();
    assert_eq!(c230["parameters"]["transformer_mva_rating"]["status"], "no_data");
    let c115 = classes.iter().find(|c| c["class_kv"] == 115.0).unwrap();
    let x = &c115["parameters"]["transformer_reactance_own_base"];
    assert_eq!(x["status"], "ok");
    // 0.05 p.u. on 100 MVA is 0.03 p.u. on the unit's 60 MVA rating
    let median = x["summary"]["median"].as_f64().unwrap();
    assert!((median - 0.03).abs() < 1e-15);
    assert_eq!(c115["parameters"]["line_capacity"]["summary"]["median"], 250.0);
    assert_eq!(report["body"]["case"]["records"], 2);
}

#[test]
fn custom_classes_and_validation_of_missing_classes() {
    let out = gridstat(&["analyze", "--case", &fixture("case3.m"), "--classes", "115,345"]);
    let report = json(&out);
    let kvs: Vec<f64> = report["body"]["classes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["class_kv"].as_f64().unwrap())
        .collect();
    assert_eq!(kvs, vec![115.0, 345.0]);
    assert_eq!(gridstat(&["analyze", "--case", &fixture("case3.m"), "--classes", "115,116"]).status.code(), Some(1));
}

#[test]
fn fit_reports_ranked_families() {
    let dir = tempfile::tempdir().unwrap();
    let case = generated_case(dir.path(), "230", "2000");
    let out = gridstat(&["fit", "--case", &case, "--bins", "40"]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out);
    assert_eq!(report["binning"]["fixed_count"], 40);
    let fits = report["body"]["fits"].as_array().unwrap();
    let mva = fits
        .iter()
        .find(|f| f["kind"] == "transformer_mva_rating" && f["class_kv"] == 230.0)
        .unwrap();
    let results = mva["results"].as_array().unwrap();
    assert_eq!(results.len(), 4);
    assert_eq!(results[0]["family"], "gev");
    assert_eq!(mva["bins"], 40);
    let d: Vec<f64> = results.iter().map(|r| r["kl"]["d_kl"].as_f64().unwrap()).collect();
    assert!(d.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn fit_reports_small_sample_failures() {
    let out = gridstat(&["fit", "--case", &fixture("case3.m")]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out);
    let x = report["body"]["fits"]
        .as_array()
        .unwrap()
        .iter()
        .find(|f| f["kind"] == "transformer_reactance_own_base" && f["class_kv"] == 115.0)
        .unwrap()
        .clone();
    // a single value has no histogram
    assert_eq!(x["status"], "skipped");
}

#[test]
fn hist_writes_one_file_per_kind_and_class() {
    let dir = tempfile::tempdir().unwrap();
    let case = generated_case(dir.path(), "115,138", "400");
    let out_dir = dir.path().join("hist");
    let out = gridstat(&["hist", "--case", &case, "--bins", "12", "--out", &path_str(&out_dir)]);
    assert_eq!(out.status.code(), Some(0));
    let mut names: Vec<String> = fs::read_dir(&out_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names.len(), 6);
    assert!(names.contains(&"transformer_xr_138.csv".to_string()));
    let text = fs::read_to_string(out_dir.join("transformer_mva_rating_115.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("bin_lo,bin_hi,count,density"));
    let total: u64 = lines.map(|l| l.split(',').nth(2).unwrap().parse::<u64>().unwrap()).sum();
    assert_eq!(total, 400);
    assert!(out.stdout.is_empty());
}

#[test]
fn generate_formats_agree() {
    let params = gridstat(&["generate", "--class", "115", "--n", "20", "--seed", "3"]);
    let branches = gridstat(&["generate", "--class", "115", "--n", "20", "--seed", "3", "--format", "branches"]);
    assert!(params.status.success() && branches.status.success());
    let params = String::from_utf8(params.stdout).unwrap();
    let branches = String::from_utf8(branches.stdout).unwrap();
    assert_eq!(params.lines().count(), 21);
    assert_eq!(branches.lines().count(), 21);
    let records = gridstat::grid_ingest::parse_branch_csv(branches.as_bytes()).unwrap();
    for (row, rec) in params.lines().skip(1).zip(&records) {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[2].parse::<f64>().unwrap(), rec.mva_rating);
        assert_eq!(cols[5].parse::<f64>().unwrap(), rec.x_pu);
        assert_eq!(cols[6].parse::<f64>().unwrap(), rec.r_pu);
    }
}

#[test]
fn generate_with_user_line_profile() {
    let dir = tempfile::tempdir().unwrap();
    let profile = dir.path().join("lines.json");
    fs::write(
        &profile,
        r#"[
  {"kind": "line_reactance_common_base", "class_kv": 138, "fitted": {"family": "exponential", "params": {"mu": 0.01}}},
  {"kind": "line_capacity", "class_kv": 138, "fitted": {"family": "normal", "params": {"mu": 300, "sigma": 80}}},
  {"kind": "line_xr", "class_kv": 138, "fitted": {"family": "normal", "params": {"mu": 8, "sigma": 2}}}
]"#,
    )
    .unwrap();
    let p = path_str(&profile);
    let out = gridstat(&["generate", "--class", "138", "--n", "50", "--seed", "1", "--kind", "lines", "--profile", &p]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().skip(1).all(|l| l.starts_with("transmission_line,138,")));

    fs::write(&profile, "[\n  {\"kind\": \"line_xr\", \"class_kv\": 138,\n   \"fitted\": {\"family\": \"normal\", \"params\": {\"mu\": 8, \"sigma\": -2}}}\n]").unwrap();
    let out = gridstat(&["generate", "--class", "138", "--n", "5", "--seed", "1", "--kind", "lines", "--profile", &p]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lines.json:"));
}

#[test]
fn output_file_receives_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let out = gridstat(&["analyze", "--case", &fixture("case3.m"), "--out", &path_str(&report)]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["command"], "analyze");
    let entries: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(entries.len(), 1);
}

#[test]
fn usage_and_input_errors_exit_one() {
    assert_eq!(gridstat(&[]).status.code(), Some(1));
    assert_eq!(gridstat(&["generate", "--class", "115", "--n", "10"]).status.code(), Some(1));
    assert_eq!(gridstat(&["generate", "--class", "115", "--n", "0", "--seed", "1"]).status.code(), Some(1));
    assert_eq!(gridstat(&["validate", "--case", &fixture("case3.m"), "--profile", "/missing.json"]).status.code(), Some(1));
    let out = gridstat(&["analyze", "--branches", &fixture("bad_x.csv")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad_x.csv:3:"));
    assert_eq!(gridstat(&["--help"]).status.code(), Some(0));
}
