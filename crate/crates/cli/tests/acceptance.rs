//! Acceptance criteria AC1-AC8. Prints one line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use deployqa::catalog::{Catalog, RuleConfig};
use deployqa::csar::load_from_files;
use deployqa::finding::{Finding, Severity};
use deployqa::fix::{apply_patch, plan_file};
use deployqa::perf::{fit_ols, SampleSet};
use deployqa::petri::{reachability_graph, PetriNet, DEFAULT_MAX_MARKINGS};
use deployqa::pipeline::{analyze, load_input, Input, Limits};
use deployqa::smells::RuleContext;
use deployqa::verifier::verify_topology;
use deployqa::yaml;
use deployqa_cli::report::Report;
use deployqa_testkit::corpus::{generate, Case, Expected};
use deployqa_testkit::nets::{enumerate, random_net, Enumeration, State};
use deployqa_testkit::ols::{interpolation_samples, oracle_fit, random_samples, relative_error};
use deployqa_testkit::topo::{has_cycle, random_topology};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const AC1_NETS: usize = 300;
const AC1_MAX_PLACES: usize = 10;
const AC1_SECONDS: f64 = 60.0;
const AC2_TOPOLOGIES: usize = 200;
const AC2_MAX_NODES: usize = 8;
const AC3_CLEAN_ARCHIVES: usize = 10;
const AC3_INJECTED_ARCHIVES: usize = 60;
const AC3_PER_ARCHIVE: usize = 4;
const AC5_SETS: usize = 100;
const AC5_MAX_N: usize = 200;
const AC5_COEFF_TOL: f64 = 1e-9;
const AC5_ORTHO_TOL: f64 = 1e-8;
const AC5_INTERP_TOL: f64 = 1e-8;
const AC8_BUDGET: &str = "1000";

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, &'static str, Box<dyn Fn() -> Outcome + 'a>);

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

fn builtin() -> (Catalog, RuleConfig) {
    (Catalog::builtin(), RuleConfig::default())
}

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn library_view(net: &PetriNet) -> Enumeration {
    let g = reachability_graph(net, DEFAULT_MAX_MARKINGS).expect("small net");
    let state = |v: usize| -> State { g.net.marking_ids(&g.vertices[v]).into_iter().collect() };
    Enumeration {
        vertices: (0..g.vertices.len()).map(state).collect(),
        edges: g.edges.iter().map(|&(a, t, b)| (state(a), g.transition_id(net, t).to_owned(), state(b))).collect(),
        dead_markings: g.dead_markings().into_iter().map(state).collect(),
        dead_transitions: g.dead_slots().into_iter().map(|t| g.transition_id(net, t).to_owned()).collect(),
    }
}

fn ac1() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut markings = 0;
    for i in 0..AC1_NETS {
        let net = random_net(&mut rng, AC1_MAX_PLACES);
        let ours = library_view(&net);
        let oracle = enumerate(&net);
        if ours != oracle {
            return Err(format!("net {i} differs from the brute-force enumeration"));
        }
        markings += oracle.vertices.len();
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(
        secs < AC1_SECONDS,
        format!("{AC1_NETS} nets, {markings} markings, identical; {secs:.2}s (limit {AC1_SECONDS}s)"),
    )
}

fn run_archive(files: BTreeMap<String, String>, name: &str, limits: Limits) -> deployqa::pipeline::Analysis {
    let (c, cfg) = builtin();
    let files = files.into_iter().map(|(k, v)| (k, v.into_bytes())).collect();
    let archive = load_from_files(PathBuf::from(name), files, false).expect("archive loads");
    analyze(&Input::Archive(archive), &RuleContext::new(&c, &cfg), limits).expect("analysis runs")
}

fn ac2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut topologies: Vec<(String, String, Option<bool>)> = Vec::new();
    for i in 0..AC2_TOPOLOGIES {
        let (text, edges) = random_topology(&mut rng, AC2_MAX_NODES);
        let n = edges.iter().flat_map(|e| [e.0, e.1]).max().map_or(1, |m| m + 1);
        topologies.push((format!("random {i}"), text, Some(has_cycle(n, &edges))));
    }
    for rel in
        ["cyclic.yaml", "linear.yaml", "wide.yaml", "verifier/E001.yaml", "verifier/E002.yaml", "verifier/E006.yaml"]
    {
        topologies.push((rel.to_owned(), fs::read_to_string(fixture(rel)).unwrap(), None));
    }
    let mut cyclic = 0;
    for (name, text, truth) in &topologies {
        let a = run_archive([("service.yaml".to_owned(), text.clone())].into(), name, Limits::default());
        if !a.complete {
            return Err(format!("{name}: state space not exhausted"));
        }
        let e006 = a.findings.iter().any(|f| f.rule_id == "E006");
        let w101 = a.findings.iter().any(|f| f.rule_id == "W101");
        if e006 != w101 {
            return Err(format!("{name}: E006={e006} W101={w101}"));
        }
        if truth.is_some_and(|t| t != e006) {
            return Err(format!("{name}: E006={e006} but the graph oracle disagrees"));
        }
        cyclic += e006 as usize;
    }
    Ok(format!("{} topologies (<= {AC2_MAX_NODES} nodes), {cyclic} cyclic, E006 iff W101 on all", topologies.len()))
}

fn corpus() -> Vec<Case> {
    generate(&mut ChaCha8Rng::seed_from_u64(7), AC3_CLEAN_ARCHIVES, AC3_INJECTED_ARCHIVES, AC3_PER_ARCHIVE)
}

fn keyed(findings: &[Finding]) -> BTreeSet<Expected> {
    findings.iter().map(|f| (f.rule_id.clone(), f.span.file.clone(), f.span.start_byte, f.span.end_byte)).collect()
}

fn ac3(cases: &[Case]) -> Outcome {
    let mut missed = 0;
    let mut extra = 0;
    let mut instances = 0;
    let mut clean_files = 0;
    let mut covered = BTreeSet::new();
    for case in cases {
        let got = keyed(&run_archive(case.files.clone(), &case.name, Limits::default()).findings);
        missed += case.expected.difference(&got).count();
        extra += got.difference(&case.expected).count();
        instances += case.expected.len();
        covered.extend(case.expected.iter().map(|e| e.0.clone()));
        let dirty: BTreeSet<&str> = case.expected.iter().map(|e| e.1.as_str()).collect();
        clean_files += case
            .files
            .keys()
            .filter(|f| (f.ends_with(".yml") || f.ends_with(".yaml")) && !dirty.contains(f.as_str()))
            .count();
    }
    let rules: BTreeSet<String> = Catalog::builtin().entries.iter().map(|e| e.rule_id.clone()).collect();
    let uncovered: Vec<&String> = rules.difference(&covered).collect();
    let recall = 1.0 - missed as f64 / instances as f64;
    let precision = if instances + extra == missed {
        1.0
    } else {
        (instances - missed) as f64 / (instances - missed + extra) as f64
    };
    let detail = format!(
        "{instances} injected instances, {clean_files} clean files, {}/{} rules covered; recall {:.4}, precision {:.4}",
        covered.len(),
        rules.len(),
        recall,
        precision
    );
    ensure(missed == 0 && extra == 0 && instances >= 200 && clean_files >= 50 && uncovered.is_empty(), detail)
}

fn ac4(cases: &[Case]) -> Outcome {
    let catalog = Catalog::builtin();
    let fixable: BTreeSet<String> = catalog
        .entries
        .iter()
        .filter(|e| e.resolutions.iter().any(|r| r.auto_fixable && r.template.is_some()))
        .map(|e| e.rule_id.clone())
        .collect();
    let mut exercised = BTreeSet::new();
    let (mut total_before, mut total_after, mut applied) = (0, 0, 0);
    for case in cases {
        let before = run_archive(case.files.clone(), &case.name, Limits::default()).findings;
        let mut files = case.files.clone();
        let mut by_file: BTreeMap<&str, Vec<Finding>> = BTreeMap::new();
        for f in &before {
            by_file.entry(f.span.file.as_str()).or_default().push(f.clone());
        }
        for (file, findings) in by_file {
            let source = &case.files[file];
            let plan = plan_file(&findings, source, &catalog);
            applied += plan.applied.len();
            exercised.extend(plan.applied.iter().map(|p| p.finding.rule_id.clone()));
            if let Some(patch) = plan.patch {
                let out = apply_patch(source, &patch).map_err(|e| format!("{}: {e}", case.name))?;
                yaml::parse(&out).map_err(|e| format!("{} {file}: patched file does not parse: {e}", case.name))?;
                files.insert(file.to_owned(), out);
            }
        }
        let after = run_archive(files, &case.name, Limits::default()).findings;
        if let Some(f) = after.iter().find(|f| fixable.contains(&f.rule_id)) {
            return Err(format!("{}: {} remains at {}", case.name, f.rule_id, f.span));
        }
        if after.len() > before.len() {
            return Err(format!("{}: findings grew from {} to {}", case.name, before.len(), after.len()));
        }
        total_before += before.len();
        total_after += after.len();
    }
    let unexercised: Vec<&String> = fixable.difference(&exercised).collect();
    ensure(
        unexercised.is_empty(),
        format!(
            "{applied} patches over {} auto-fixable rules; findings {total_before} -> {total_after}; all patched files parse{}",
            fixable.len(),
            if unexercised.is_empty() { String::new() } else { format!("; never exercised: {unexercised:?}") }
        ),
    )
}

fn orthogonality(points: &[(f64, f64)], coefficients: &[f64]) -> f64 {
    let n = points.len() as f64;
    let mean = points.iter().map(|p| p.0).sum::<f64>() / n;
    let spread = points.iter().map(|p| (p.0 - mean).abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let ymax = points.iter().map(|p| p.1.abs()).fold(0.0, f64::max).max(1.0);
    (0..coefficients.len())
        .map(|k| {
            let dot: f64 = points
                .iter()
                .map(|&(x, y)| {
                    let r = y - coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c);
                    ((x - mean) / spread).powi(k as i32) * r
                })
                .sum();
            dot.abs() / (n * ymax)
        })
        .fold(0.0, f64::max)
}

fn ac5() -> Outcome {
    let set = |points: Vec<(f64, f64)>| SampleSet {
        predictor_name: "x".into(),
        response_name: "y".into(),
        points,
        source: None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut coeff, mut ortho, mut interp) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..AC5_SETS {
        let (points, degree) = random_samples(&mut rng, AC5_MAX_N);
        let oracle = oracle_fit(&points, degree).ok_or("oracle found a singular system")?;
        let model = fit_ols(&set(points.clone()), degree).map_err(|e| e.to_string())?;
        for (a, b) in model.coefficients.iter().zip(&oracle) {
            coeff = coeff.max(relative_error(*a, b));
        }
        ortho = ortho.max(orthogonality(&points, &model.coefficients));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for degree in 0..=4 {
        for _ in 0..20 {
            let points = interpolation_samples(&mut rng, degree);
            let ymax = points.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
            let model = fit_ols(&set(points), degree).map_err(|e| e.to_string())?;
            interp = interp.max(model.rmse / ymax);
        }
    }
    ensure(
        coeff <= AC5_COEFF_TOL && ortho <= AC5_ORTHO_TOL && interp <= AC5_INTERP_TOL,
        format!(
            "{AC5_SETS} sets: max coefficient rel err {coeff:.2e} (tol {AC5_COEFF_TOL:e}), orthogonality {ortho:.2e} (tol {AC5_ORTHO_TOL:e}), interpolation rmse/max|y| {interp:.2e} (tol {AC5_INTERP_TOL:e})"
        ),
    )
}

fn qa(args: &[&str]) -> (Option<i32>, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_qa")).args(args).env_remove("QA_CATALOG").output().expect("qa runs");
    (out.status.code(), String::from_utf8_lossy(&out.stdout).into_owned())
}

fn ac6(cases: &[Case]) -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut targets: Vec<PathBuf> = ["golden/webshop", "golden/batch-cluster", "cyclic.yaml", "playbooks/unnamed.yml"]
        .iter()
        .map(|r| fixture(r))
        .collect();
    for case in cases.iter().skip(AC3_CLEAN_ARCHIVES).take(5) {
        let root = dir.path().join(&case.name);
        for (path, text) in &case.files {
            let p = root.join(path);
            fs::create_dir_all(p.parent().unwrap()).map_err(|e| e.to_string())?;
            fs::write(p, text).map_err(|e| e.to_string())?;
        }
        targets.push(root);
    }
    for t in &targets {
        let t = t.to_str().unwrap();
        let (_, first) = qa(&["check", t, "--format", "json"]);
        let (_, second) = qa(&["check", t, "--format", "json"]);
        if first != second || first.is_empty() {
            return Err(format!("{t}: reports differ"));
        }
        let (_, s1) = qa(&["check", t, "--format", "sarif"]);
        let (_, s2) = qa(&["check", t, "--format", "sarif"]);
        if s1 != s2 {
            return Err(format!("{t}: SARIF differs"));
        }
    }
    Ok(format!("{} archives checked twice in separate processes; JSON and SARIF byte-identical", targets.len()))
}

fn ac7() -> Outcome {
    let (c, cfg) = builtin();
    let mut golden = 0;
    for name in ["golden/webshop", "golden/batch-cluster"] {
        let input = load_input(&fixture(name)).map_err(|e| e.to_string())?;
        let a = analyze(&input, &RuleContext::new(&c, &cfg), Limits::default()).map_err(|e| e.to_string())?;
        if let Some(f) = a.findings.iter().find(|f| f.severity >= Severity::Medium) {
            return Err(format!("{name}: {} at {}", f.rule_id, f.span));
        }
        golden += 1;
    }
    let rules = ["E001", "E002", "E003", "E003a", "E004", "E005", "E006", "E007"];
    for rule in rules {
        let Input::Archive(archive) =
            load_input(&fixture(&format!("verifier/{rule}.yaml"))).map_err(|e| e.to_string())?
        else {
            return Err(format!("{rule}: fixture is not a blueprint"));
        };
        let ids: Vec<String> = verify_topology(&archive.topology, &c, &cfg).into_iter().map(|f| f.rule_id).collect();
        if ids != [rule] {
            return Err(format!("{rule} fixture yields {ids:?}"));
        }
    }
    Ok(format!("{golden} golden archives with no finding at medium or above; {} verifier fixtures each yield exactly their rule", rules.len()))
}

fn ac8() -> Outcome {
    let wide = fixture("wide.yaml");
    let wide = wide.to_str().unwrap();
    let (code, out) = qa(&["check", wide, "--max-markings", AC8_BUDGET, "--format", "json"]);
    let report: Report = serde_json::from_str(&out).map_err(|e| format!("report does not parse: {e}"))?;
    let workflow = report.findings.iter().filter(|f| f.rule_id.starts_with('W')).count();
    let (petri_code, _) = qa(&["petri", wide, "--analyze", "--max-markings", AC8_BUDGET, "--out", "/dev/null"]);
    let (full_code, full) = qa(&["check", wide, "--format", "json"]);
    let full: Report = serde_json::from_str(&full).map_err(|e| e.to_string())?;
    ensure(
        code == Some(4) && !report.complete && workflow == 0 && petri_code == Some(4) && full_code == Some(0) && full.complete,
        format!(
            "check exit {code:?}, complete={}, workflow findings {workflow}; petri --analyze exit {petri_code:?}; default budget exit {full_code:?} ({} markings)",
            report.complete,
            full.net.map_or(0, |n| n.markings)
        ),
    )
}

fn main() {
    let cases = corpus();
    let criteria: Vec<Criterion> = vec![
        ("AC1", "Petri-net oracle equivalence", Box::new(ac1)),
        ("AC2", "static/dynamic agreement", Box::new(ac2)),
        ("AC3", "smell injection recall/precision", Box::new(|| ac3(&cases))),
        ("AC4", "fix convergence", Box::new(|| ac4(&cases))),
        ("AC5", "OLS correctness", Box::new(ac5)),
        ("AC6", "determinism", Box::new(|| ac6(&cases))),
        ("AC7", "verifier soundness", Box::new(ac7)),
        ("AC8", "limits behave", Box::new(ac8)),
    ];
    let mut failed = 0;
    for (id, title, check) in &criteria {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("{id} PASS {title}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("{id} FAIL {title}: {detail} [{secs:.1}s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
