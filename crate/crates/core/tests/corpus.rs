use std::collections::{BTreeMap, BTreeSet};

use deployqa::catalog::{Catalog, RuleConfig};
use deployqa::finding::Finding;
use deployqa::fix::{apply_patch, plan_file};
use deployqa::pipeline::{analyze, Input, Limits};
use deployqa::smells::RuleContext;
use deployqa::yaml;
use deployqa_testkit::corpus::{generate, Case, Expected, IMPLIED, INJECTABLE};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn corpus() -> Vec<Case> {
    generate(&mut ChaCha8Rng::seed_from_u64(7), 10, 60, 4)
}

fn run(files: &BTreeMap<String, String>, name: &str) -> Vec<Finding> {
    let case = Case { name: name.into(), files: files.clone(), expected: BTreeSet::new(), injections: 0 };
    let c = Catalog::builtin();
    let cfg = RuleConfig::default();
    analyze(&Input::Archive(case.archive().unwrap()), &RuleContext::new(&c, &cfg), Limits::default()).unwrap().findings
}

fn keyed(findings: &[Finding]) -> BTreeSet<Expected> {
    findings.iter().map(|f| (f.rule_id.clone(), f.span.file.clone(), f.span.start_byte, f.span.end_byte)).collect()
}

#[test]
fn findings_equal_the_injection_manifest() {
    let cases = corpus();
    let mut mismatches = Vec::new();
    let mut covered = BTreeSet::new();
    let mut clean_files = 0;
    for case in &cases {
        let got = keyed(&run(&case.files, &case.name));
        for e in case.expected.symmetric_difference(&got) {
            mismatches.push(format!("{}: {e:?}", case.name));
        }
        covered.extend(case.expected.iter().map(|e| e.0.clone()));
        let dirty: BTreeSet<&str> = case.expected.iter().map(|e| e.1.as_str()).collect();
        clean_files += case
            .files
            .keys()
            .filter(|f| f.ends_with(".yml") || f.ends_with(".yaml"))
            .filter(|f| !dirty.contains(f.as_str()))
            .count();
    }
    assert!(mismatches.is_empty(), "{mismatches:#?}");
    let instances: usize = cases.iter().map(|c| c.expected.len()).sum();
    assert!(instances >= 200, "{instances} instances");
    assert!(clean_files >= 50, "{clean_files} clean files");
    let all: BTreeSet<String> = INJECTABLE.iter().chain(IMPLIED).map(|s| s.to_string()).collect();
    assert_eq!(covered, all);
    let builtin: BTreeSet<String> = Catalog::builtin().entries.iter().map(|e| e.rule_id.clone()).collect();
    assert_eq!(covered, builtin);
}

#[test]
fn recommended_patches_converge() {
    let catalog = Catalog::builtin();
    let fixable: BTreeSet<&str> = catalog
        .entries
        .iter()
        .filter(|e| e.resolutions.iter().any(|r| r.auto_fixable && r.template.is_some()))
        .map(|e| e.rule_id.as_str())
        .collect();
    assert!(!fixable.is_empty());
    let mut fixed: BTreeSet<String> = BTreeSet::new();
    for case in corpus() {
        let before = run(&case.files, &case.name);
        let mut files = case.files.clone();
        let mut by_file: BTreeMap<&str, Vec<Finding>> = BTreeMap::new();
        for f in &before {
            by_file.entry(f.span.file.as_str()).or_default().push(f.clone());
        }
        for (file, findings) in by_file {
            let source = &case.files[file];
            let plan = plan_file(&findings, source, &catalog);
            fixed.extend(plan.applied.iter().map(|p| p.finding.rule_id.clone()));
            if let Some(patch) = plan.patch {
                let out = apply_patch(source, &patch).unwrap();
                yaml::parse(&out).unwrap_or_else(|e| panic!("{} {file}: {e}\n{out}", case.name));
                files.insert(file.to_owned(), out);
            }
        }
        let after = run(&files, &case.name);
        let left: Vec<_> = after.iter().filter(|f| fixable.contains(f.rule_id.as_str())).collect();
        assert!(left.is_empty(), "{}: {left:#?}", case.name);
        assert!(after.len() <= before.len(), "{}: {} -> {}", case.name, before.len(), after.len());
    }
    let fixable: BTreeSet<String> = fixable.into_iter().map(str::to_owned).collect();
    assert_eq!(fixed, fixable, "every auto-fixable rule was exercised");
}
