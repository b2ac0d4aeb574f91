use std::path::{Path, PathBuf};

use deployqa::catalog::{Catalog, RuleConfig};
use deployqa::finding::Severity;
use deployqa::pipeline::{analyze, load_input, Analysis, Input, Limits};
use deployqa::smells::RuleContext;
use deployqa::verifier::verify_topology;

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

fn run(rel: &str) -> Analysis {
    let c = Catalog::builtin();
    let cfg = RuleConfig::default();
    analyze(&load_input(&fixture(rel)).unwrap(), &RuleContext::new(&c, &cfg), Limits::default()).unwrap()
}

#[test]
fn golden_archives_are_clean_at_medium_and_above() {
    for name in ["webshop", "batch-cluster"] {
        let a = run(&format!("golden/{name}"));
        assert!(a.complete);
        let serious: Vec<_> = a.findings.iter().filter(|f| f.severity >= Severity::Medium).collect();
        assert!(serious.is_empty(), "{name}: {serious:#?}");
        assert!(a.notes.is_empty(), "{name}: {:?}", a.notes);
    }
    let batch = run("golden/batch-cluster");
    assert_eq!(batch.goals.len(), 1);
    assert!(batch.goals[0].verdict.satisfied);
}

#[test]
fn each_verifier_fixture_yields_exactly_its_rule() {
    let c = Catalog::builtin();
    let cfg = RuleConfig::default();
    for rule in ["E001", "E002", "E003", "E003a", "E004", "E005", "E006", "E007"] {
        let Input::Archive(archive) = load_input(&fixture(&format!("verifier/{rule}.yaml"))).unwrap() else {
            panic!("{rule}: not loaded as a blueprint");
        };
        let ids: Vec<String> = verify_topology(&archive.topology, &c, &cfg).into_iter().map(|f| f.rule_id).collect();
        assert_eq!(ids, [rule], "{rule}");
    }
}

#[test]
fn triangle_cycle_is_reported_once_with_its_members() {
    let a = run("cyclic.yaml");
    let e006: Vec<_> = a.findings.iter().filter(|f| f.rule_id == "E006").collect();
    assert_eq!(e006.len(), 1);
    assert_eq!(e006[0].data["cycle"], serde_json::json!(["a", "b", "c"]));
    assert!(a.findings.iter().any(|f| f.rule_id == "W101"));
    assert!(run("linear.yaml").findings.is_empty());
}

#[test]
fn wide_topology_exceeds_a_small_budget() {
    let c = Catalog::builtin();
    let cfg = RuleConfig::default();
    let input = load_input(&fixture("wide.yaml")).unwrap();
    let a = analyze(&input, &RuleContext::new(&c, &cfg), Limits { max_markings: 1000 }).unwrap();
    assert!(!a.complete);
    assert!(a.findings.iter().all(|f| !f.rule_id.starts_with('W')));
    assert!(run("wide.yaml").complete);
}

#[test]
fn unnamed_tasks_in_a_lone_playbook() {
    let a = run("playbooks/unnamed.yml");
    let i001 = a.findings.iter().filter(|f| f.rule_id == "I001").count();
    assert_eq!(i001, 3);
}
