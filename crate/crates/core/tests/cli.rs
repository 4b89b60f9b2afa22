use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn qm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quotamatch"))
        .args(args)
        .env("QM_THREADS", "2")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is only JSON")
}

fn small_config(dir: &Path, total: usize) -> String {
    let cfg = quotamatch::ScenarioConfig::calibrated_with_total(2016, total).unwrap();
    let path = dir.join("scenario.json");
    fs::write(&path, cfg.to_json().unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn quota_audit_of_ministry_list() {
    let dir = tempfile::tempdir().unwrap();
    let called = [
        "B1", "C1", "C2", "C3", "B2", "C4", "C5", "C6", "B3", "C7", "C8", "C9", "C10", "C11", "C12", "C13", "C14",
        "C15", "C16", "C17",
    ];
    let mut text = String::from("position,applicant_id,scholarship\n");
    for (i, id) in called.iter().enumerate() {
        text += &format!("{},{id},{}\n", i + 1, u8::from(id.starts_with('B')));
    }
    let path = dir.path().join("called.csv");
    fs::write(&path, text).unwrap();
    let v = json(&qm(&["quota-audit", "--calllist", path.to_str().unwrap(), "--q", "25", "--json"]));
    assert_eq!(v["compliant"], true);
    assert_eq!(v["schema_version"], 1);

    // the academic order itself fails at the first position
    let academic = "position,applicant_id,scholarship\n1,C1,0\n2,C2,0\n3,B1,1\n";
    fs::write(&path, academic).unwrap();
    let v = json(&qm(&["quota-audit", "--calllist", path.to_str().unwrap(), "--q", "25", "--json"]));
    assert_eq!(v["compliant"], false);
    assert_eq!(v["first_violation"], 1);
}

#[test]
fn quota_audit_rejects_gaps_and_bad_rates() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("called.csv");
    fs::write(&path, "position,applicant_id,scholarship\n1,a,0\n3,b,1\n").unwrap();
    assert_eq!(qm(&["quota-audit", "--calllist", path.to_str().unwrap(), "--q", "25"]).status.code(), Some(2));
    fs::write(&path, "position,applicant_id,scholarship\n1,a,0\n").unwrap();
    assert_eq!(qm(&["quota-audit", "--calllist", path.to_str().unwrap(), "--q", "140"]).status.code(), Some(2));
}

#[test]
fn simulate_on_empty_population_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("programs.csv"), "id,ptype,selective,capacity\n1,bts,1,3\n").unwrap();
    fs::write(dir.path().join("applicants.csv"), "id,track,scholarship,bac_grade,gpa,gender,region,pref_1\n").unwrap();
    let out = qm(&["simulate", "--population", dir.path().to_str().unwrap(), "--out", "/tmp/qm-never-written"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no applicants"));
    assert!(out.stdout.is_empty());
}

#[test]
fn pipeline_through_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let cfg = small_config(dir.path(), 8_000);

    let v = json(&qm(&["generate", "--config", &cfg, "--seed", "5", "--out", &d("pop"), "--json"]));
    assert_eq!(
        v["applicants"].as_u64().unwrap() as usize,
        quotamatch::load_population(dir.path().join("pop").as_path()).unwrap().applicants.len()
    );
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("pop/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 4);

    let report =
        json(&qm(&["simulate", "--population", &d("pop"), "--rule", "plus2floor5", "--out", &d("sim"), "--json"]));
    assert_eq!(report["rule"], "plus2floor5");
    assert_eq!(
        report,
        serde_json::from_str::<Value>(&fs::read_to_string(dir.path().join("sim/report.json")).unwrap()).unwrap()
    );
    for f in [
        "outcome_off.csv",
        "outcome_on.csv",
        "thresholds_off.csv",
        "thresholds_on.csv",
        "applications.csv",
        "manifest.json",
    ] {
        assert!(dir.path().join("sim").join(f).exists(), "{f}");
    }

    let voc =
        json(&qm(&["simulate", "--population", &d("pop"), "--track", "vocational", "--out", &d("voc"), "--json"]));
    assert_eq!(voc["track"], "vocational");
    assert!(voc["compliers"].as_u64() <= report["compliers"].as_u64());

    let cmp = json(&qm(&[
        "compare",
        "--population",
        &d("pop"),
        "--rule-a",
        "plus2floor5",
        "--rule-b",
        "floor5",
        "--out",
        &d("cmp"),
        "--json",
    ]));
    assert!(cmp["complier_a"].as_u64() >= cmp["complier_b"].as_u64());

    let cem = json(&qm(&["cem", "--applications", &d("sim/applications.csv"), "--resamples", "50", "--json"]));
    assert_eq!(cem["schema_version"], 1);
    assert!(cem["matched"]["se"].as_f64().unwrap() >= 0.0);

    let out = qm(&["prestige", "--outcome", &d("sim/outcome_off.csv"), "--population", &d("pop")]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("program_id,ptype,N,mean_percentile,prestige"));
    let top = lines.map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap()).fold(0.0, f64::max);
    assert_eq!(top, 100.0);
}

#[test]
fn bad_rule_and_missing_files() {
    let out = qm(&["simulate", "--population", "/nonexistent", "--rule", "plus3", "--out", "/tmp/x"]);
    assert_eq!(out.status.code(), Some(2));
    let out = qm(&["cem", "--applications", "/nonexistent.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cem_without_estimable_strata_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("apps.csv");
    let mut text =
        String::from("applicant_id,program_id,scholarship,admissible,gpa,gender,region,track,specialization\n");
    for i in 0..12 {
        text += &format!("a{i},P,0,1,12,F,R,general,general\n");
    }
    fs::write(&path, text).unwrap();
    let out = qm(&["cem", "--applications", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
