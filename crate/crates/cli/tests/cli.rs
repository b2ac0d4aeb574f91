use std::fs;
use std::path::{Path, PathBuf};

use deployqa_cli::report::Report;
use deployqa_cli::run;

fn fixture(rel: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel).display().to_string()
}

fn qa(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("qa").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn schema() -> jsonschema::Validator {
    let text = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/report.schema.json")).unwrap();
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).unwrap()
}

#[test]
fn exit_codes_follow_the_table() {
    assert_eq!(qa(&["check", &fixture("golden/webshop")]).0, 0);
    assert_eq!(qa(&["check", &fixture("golden/batch-cluster")]).0, 0);
    let (code, out, _) = qa(&["check", &fixture("cyclic.yaml")]);
    assert_eq!(code, 1);
    assert!(out.contains("E006") && out.contains("W101"));
    assert_eq!(qa(&["check", "/definitely/not/here"]).0, 2);
    assert_eq!(qa(&["check", &fixture("linear.yaml"), "--format", "xml"]).0, 2);
    assert_eq!(qa(&["frobnicate"]).0, 2);
    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.yaml");
    fs::write(&broken, "topology_template:\n  node_templates: [unclosed\n").unwrap();
    assert_eq!(qa(&["check", broken.to_str().unwrap()]).0, 3);
    let (code, out, _) = qa(&["check", &fixture("wide.yaml"), "--max-markings", "1000", "--format", "json"]);
    assert_eq!(code, 4);
    let report: Report = serde_json::from_str(&out).unwrap();
    assert!(!report.complete);
    assert_eq!(qa(&["--version"]).0, 0);
}

#[test]
fn severity_threshold_changes_the_verdict() {
    let pb = fixture("playbooks/unnamed.yml");
    assert_eq!(qa(&["check", &pb]).0, 0, "I001 is low severity");
    assert_eq!(qa(&["check", &pb, "--severity-threshold", "low"]).0, 1);
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("qa.yaml");
    fs::write(&cfg, "severity_threshold: low\ndisabled: [I001, I002]\n").unwrap();
    assert_eq!(qa(&["check", &pb, "--config", cfg.to_str().unwrap()]).0, 0);
    fs::write(&cfg, "severity_threshold: low\n").unwrap();
    assert_eq!(qa(&["check", &pb, "--config", cfg.to_str().unwrap()]).0, 1);
    assert_eq!(qa(&["check", &pb, "--config", cfg.to_str().unwrap(), "--severity-threshold", "high"]).0, 0);
}

#[test]
fn json_report_validates_and_round_trips() {
    let validator = schema();
    for target in [fixture("cyclic.yaml"), fixture("golden/batch-cluster"), fixture("playbooks/unnamed.yml")] {
        let (_, out, _) = qa(&["check", &target, "--format", "json"]);
        let value: serde_json::Value = serde_json::from_str(&out).unwrap();
        let errors: Vec<String> = validator.iter_errors(&value).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{target}: {errors:?}");
        let report: Report = serde_json::from_str(&out).unwrap();
        assert_eq!(report.to_json(), out);
        let recount = deployqa_cli::report::Summary::of(&report.findings, report.severity_threshold);
        assert_eq!(recount, report.summary);
    }
}

#[test]
fn timings_are_opt_in() {
    let (_, plain, _) = qa(&["check", &fixture("linear.yaml"), "--format", "json"]);
    assert!(!plain.contains("timings"));
    let (_, timed, _) = qa(&["check", &fixture("linear.yaml"), "--format", "json", "--timings"]);
    let report: Report = serde_json::from_str(&timed).unwrap();
    assert_eq!(report.timings.unwrap().len(), 2);
}

#[test]
fn sarif_output_deserializes() {
    let (code, out, _) = qa(&["check", &fixture("cyclic.yaml"), "--format", "sarif"]);
    assert_eq!(code, 1);
    let sarif: serde_sarif::sarif::Sarif = serde_json::from_str(&out).unwrap();
    let run = &sarif.runs[0];
    let results = run.results.as_ref().unwrap();
    assert_eq!(results.len(), 5);
    let rules = run.tool.driver.rules.as_ref().unwrap();
    for r in results {
        let index = r.rule_index.unwrap() as usize;
        assert_eq!(Some(&rules[index].id), r.rule_id.as_ref());
    }
}

#[test]
fn fix_dry_run_leaves_files_alone() {
    let dir = tempfile::tempdir().unwrap();
    let pb = dir.path().join("site.yml");
    fs::copy(fixture("playbooks/unnamed.yml"), &pb).unwrap();
    let before = fs::read(&pb).unwrap();
    let (code, out, _) = qa(&["fix", pb.to_str().unwrap(), "--dry-run"]);
    assert_eq!(code, 0);
    let plan: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(plan["patches"].as_array().unwrap().len(), 1);
    assert_eq!(fs::read(&pb).unwrap(), before);
}

#[test]
fn fix_apply_removes_the_fixed_rule() {
    let dir = tempfile::tempdir().unwrap();
    let pb = dir.path().join("site.yml");
    fs::copy(fixture("playbooks/unnamed.yml"), &pb).unwrap();
    let path = pb.to_str().unwrap();
    let (_, out, _) = qa(&["check", path, "--format", "json"]);
    let before: Report = serde_json::from_str(&out).unwrap();
    assert_eq!(before.findings.iter().filter(|f| f.rule_id == "I001").count(), 3);
    let (code, out, err) = qa(&["fix", path, "--rule", "I001", "--apply"]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("3 fixes in 1 file"), "{out}");
    let (_, out, _) = qa(&["check", path, "--format", "json"]);
    let after: Report = serde_json::from_str(&out).unwrap();
    assert!(after.findings.iter().all(|f| f.rule_id != "I001"));
    assert!(after.findings.len() < before.findings.len());
    let leftovers: Vec<PathBuf> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(leftovers, [pb], "no temp files left behind");
}

#[test]
fn fix_advice_only_rule_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let pb = dir.path().join("site.yml");
    fs::write(&pb, "- hosts: all\n  vars:\n    bind_address: 0.0.0.0\n  tasks:\n    - name: ping\n      ping:\n")
        .unwrap();
    let (code, out, _) = qa(&["fix", pb.to_str().unwrap(), "--rule", "S004"]);
    assert_eq!(code, 0);
    let plan: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(plan["patches"].as_array().unwrap().is_empty());
    assert_eq!(plan["advice"][0]["rule_id"], "S004");
    assert_eq!(qa(&["fix", pb.to_str().unwrap(), "--rule", "X999"]).0, 2);
}

#[test]
fn fix_refuses_to_write_into_a_zip() {
    let dir = tempfile::tempdir().unwrap();
    let zip_path = dir.path().join("app.csar");
    {
        let mut zip = zip::ZipWriter::new(fs::File::create(&zip_path).unwrap());
        let opts = zip::write::SimpleFileOptions::default();
        zip.start_file("service.yaml", opts).unwrap();
        std::io::Write::write_all(&mut zip, fs::read(fixture("linear.yaml")).unwrap().as_slice()).unwrap();
        zip.start_file("playbooks/site.yml", opts).unwrap();
        std::io::Write::write_all(&mut zip, b"- hosts: all\n  tasks:\n    - ping:\n").unwrap();
        zip.finish().unwrap();
    }
    let zip_arg = zip_path.to_str().unwrap();
    assert_eq!(qa(&["check", zip_arg, "--severity-threshold", "low"]).0, 1);
    assert_eq!(qa(&["fix", zip_arg, "--dry-run"]).0, 0);
    assert_eq!(qa(&["fix", zip_arg, "--apply"]).0, 5);
}

#[test]
fn petri_exports_and_analysis() {
    let dir = tempfile::tempdir().unwrap();
    let dot = dir.path().join("net.dot");
    assert_eq!(qa(&["petri", &fixture("linear.yaml"), "--export", "dot", "--out", dot.to_str().unwrap()]).0, 0);
    assert!(fs::read_to_string(&dot).unwrap().starts_with("digraph"));
    let (code, out, _) = qa(&["petri", &fixture("linear.yaml"), "--export", "pnml"]);
    assert_eq!(code, 0);
    assert!(out.starts_with("<?xml"));
    let (code, out, _) = qa(&["petri", &fixture("cyclic.yaml"), "--analyze", "--out", dot.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(out.contains("W101"));
    assert_eq!(qa(&["petri", &fixture("linear.yaml"), "--export", "svg"]).0, 2);
    assert_eq!(
        qa(&["petri", &fixture("wide.yaml"), "--analyze", "--max-markings", "1000", "--out", dot.to_str().unwrap()]).0,
        4
    );
    assert_eq!(qa(&["petri", &fixture("playbooks/unnamed.yml")]).0, 2);
}

#[test]
fn perf_fit_and_check() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("line.csv");
    fs::write(&csv, "x,y\n0,1\n1,3\n2,5\n3,7\n").unwrap();
    let (code, out, _) = qa(&["perf", "fit", "--data", csv.to_str().unwrap(), "--degree", "1"]);
    assert_eq!(code, 0);
    let model: serde_json::Value = serde_json::from_str(&out).unwrap();
    let c: Vec<f64> = model["coefficients"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!((c[0] - 1.0).abs() < 1e-12 && (c[1] - 2.0).abs() < 1e-12, "{c:?}");
    assert_eq!(qa(&["perf", "fit", "--data", csv.to_str().unwrap(), "--degree", "4"]).0, 3);
    fs::write(dir.path().join("bad.csv"), "x,y\n0,a\n").unwrap();
    assert_eq!(qa(&["perf", "fit", "--data", dir.path().join("bad.csv").to_str().unwrap()]).0, 3);

    let goals = dir.path().join("goals.yaml");
    fs::write(&goals, "- {response: y, comparator: '<=', threshold: 100, at: 10, data: line.csv}\n").unwrap();
    assert_eq!(qa(&["perf", "check", "--goals", goals.to_str().unwrap()]).0, 0);
    fs::write(&goals, "- {response: y, comparator: '<=', threshold: 20, at: 10, data: line.csv}\n").unwrap();
    let (code, out, _) = qa(&["perf", "check", "--goals", goals.to_str().unwrap(), "--format", "json"]);
    assert_eq!(code, 1);
    let report: Report = serde_json::from_str(&out).unwrap();
    assert_eq!(report.findings[0].rule_id, "P001");
}

#[test]
fn catalog_from_environment() {
    // run the binary so the variable does not leak into the other tests
    let bin = env!("CARGO_BIN_EXE_qa");
    let missing = std::process::Command::new(bin)
        .args(["check", &fixture("linear.yaml")])
        .env("QA_CATALOG", "/nonexistent/catalog.yaml")
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("catalog.yaml"));
    let ok = std::process::Command::new(bin)
        .args(["check", &fixture("linear.yaml")])
        .env_remove("QA_CATALOG")
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
}
