//! `qa fix`: plan patches per file, print them or write them atomically.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use deployqa::catalog::lookup_resolutions;
use deployqa::finding::Finding;
use deployqa::fix::{apply_patch, plan_file, FilePlan, Patch, NO_AUTOMATIC_RESOLUTION};
use deployqa::pipeline::{analyze, Input, Limits};
use deployqa::smells::RuleContext;
use deployqa::yaml;
use serde::Serialize;

use crate::config::Settings;
use crate::{emit, open, Exit, Failure, Format};

#[derive(Debug, Serialize)]
struct Applied {
    rule_id: String,
    resolution: String,
    file: String,
    line: usize,
    subject: String,
}

#[derive(Debug, Serialize)]
struct Deferred {
    rule_id: String,
    file: String,
    line: usize,
    reason: String,
}

#[derive(Debug, Serialize)]
struct Advice {
    rule_id: String,
    file: String,
    line: usize,
    message: String,
    resolutions: Vec<String>,
}

#[derive(Debug, Default, Serialize)]
struct FixOutput {
    patches: Vec<Patch>,
    fixes: Vec<Applied>,
    deferred: Vec<Deferred>,
    advice: Vec<Advice>,
}

fn collect(input: &Input, findings: Vec<Finding>, s: &Settings) -> FixOutput {
    let mut by_file: BTreeMap<String, Vec<Finding>> = BTreeMap::new();
    for f in findings {
        by_file.entry(f.span.file.clone()).or_default().push(f);
    }
    let mut out = FixOutput::default();
    for (file, findings) in by_file {
        let source = input.text(&file).unwrap_or_default();
        let FilePlan { patch, applied, skipped } = plan_file(&findings, source, &s.catalog);
        out.patches.extend(patch);
        out.fixes.extend(applied.into_iter().map(|p| Applied {
            rule_id: p.finding.rule_id.clone(),
            resolution: p.resolution.res_id.clone(),
            file: file.clone(),
            line: p.finding.span.start_line,
            subject: p.finding.subject.clone(),
        }));
        for (f, reason) in skipped {
            if reason == NO_AUTOMATIC_RESOLUTION {
                out.advice.push(Advice {
                    resolutions: lookup_resolutions(&s.catalog, &f.rule_id)
                        .iter()
                        .map(|r| format!("{}: {}", r.res_id, r.description))
                        .collect(),
                    rule_id: f.rule_id,
                    file: file.clone(),
                    line: f.span.start_line,
                    message: f.message,
                });
            } else {
                out.deferred.push(Deferred { rule_id: f.rule_id, file: file.clone(), line: f.span.start_line, reason });
            }
        }
    }
    out
}

fn text_summary(out: &FixOutput) -> String {
    let mut s = String::new();
    for f in &out.fixes {
        writeln!(s, "{}:{}: fixed {} with {}", f.file, f.line, f.rule_id, f.resolution).unwrap();
    }
    for d in &out.deferred {
        writeln!(s, "{}:{}: {} deferred: {}", d.file, d.line, d.rule_id, d.reason).unwrap();
    }
    for a in &out.advice {
        writeln!(s, "{}:{}: {} {}", a.file, a.line, a.rule_id, a.message).unwrap();
        for r in &a.resolutions {
            writeln!(s, "    advice {r}").unwrap();
        }
    }
    let mut files: Vec<&str> = out.patches.iter().map(|p| p.file.as_str()).collect();
    files.dedup();
    writeln!(
        s,
        "{} fix{} in {} file{}",
        out.fixes.len(),
        if out.fixes.len() == 1 { "" } else { "es" },
        files.len(),
        if files.len() == 1 { "" } else { "s" }
    )
    .unwrap();
    s
}

pub(crate) fn run(
    path: &Path,
    s: &Settings,
    rules: &[String],
    apply: bool,
    format: Format,
    stdout: &mut dyn Write,
) -> Result<Exit, Failure> {
    if let Some(unknown) = rules.iter().find(|r| s.catalog.get(r).is_none()) {
        return Err(Failure::new(Exit::Usage, format!("unknown rule {unknown}")));
    }
    let input = open(path)?;
    if apply && input.is_zip() {
        return Err(Failure::new(Exit::Patch, "cannot write into a zip archive; extract it and fix the directory"));
    }
    let analysis =
        analyze(&input, &RuleContext::new(&s.catalog, &s.rules), Limits::default()).map_err(crate::analysis_failure)?;
    let findings: Vec<Finding> =
        analysis.findings.into_iter().filter(|f| rules.is_empty() || rules.contains(&f.rule_id)).collect();
    let out = collect(&input, findings, s);
    if apply {
        write_all(&input, &out.patches)?;
    }
    let text = match (apply, format) {
        (false, _) | (true, Format::Json | Format::Sarif) => {
            let mut j = serde_json::to_string_pretty(&out).expect("fix output serializes");
            j.push('\n');
            j
        }
        (true, Format::Text) => text_summary(&out),
    };
    emit(stdout, &text)?;
    Ok(Exit::Clean)
}

/// Re-read each target, check it still matches the analyzed text, patch it in
/// memory, then replace every file through a sibling temp file. Nothing is
/// renamed into place until every patched text has been produced and parsed.
fn write_all(input: &Input, patches: &[Patch]) -> Result<(), Failure> {
    let fail = |m: String| Failure::new(Exit::Patch, m);
    let mut staged: Vec<(PathBuf, tempfile::NamedTempFile)> = Vec::new();
    for patch in patches {
        let target = input.disk_path(&patch.file).ok_or_else(|| fail(format!("{}: not on disk", patch.file)))?;
        let current = fs::read_to_string(&target).map_err(|e| fail(format!("{}: {e}", target.display())))?;
        let patched = apply_patch(&current, patch).map_err(|e| fail(format!("{}: {e}", patch.file)))?;
        yaml::parse(&patched).map_err(|e| fail(format!("{}: patched text does not parse: {e}", patch.file)))?;
        let dir = target.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| fail(format!("{}: {e}", dir.display())))?;
        tmp.write_all(patched.as_bytes()).map_err(|e| fail(format!("{}: {e}", tmp.path().display())))?;
        if let Ok(meta) = fs::metadata(&target) {
            let _ = fs::set_permissions(tmp.path(), meta.permissions());
        }
        staged.push((target, tmp));
    }
    for (target, tmp) in staged {
        tmp.persist(&target).map_err(|e| fail(format!("{}: {e}", target.display())))?;
    }
    Ok(())
}
