//! `qa perf`: fit models and evaluate goals.

use std::fs;
use std::io::Write;
use std::path::Path;

use deployqa::perf::{evaluate_goals, fit_ols, ingest_benchmark};

use crate::config::Settings;
use crate::report::Report;
use crate::{emit, render, Exit, Failure, Format};

fn read(path: &Path) -> Result<String, Failure> {
    if !path.exists() {
        return Err(Failure::new(Exit::Usage, format!("{}: no such file", path.display())));
    }
    fs::read_to_string(path).map_err(|e| Failure::new(Exit::Load, format!("{}: {e}", path.display())))
}

pub(crate) fn fit(data: &Path, degree: usize, stdout: &mut dyn Write) -> Result<Exit, Failure> {
    let load = |e: deployqa::perf::PerfError| Failure::new(Exit::Load, format!("{}: {e}", data.display()));
    let samples = ingest_benchmark(&read(data)?).map_err(load)?;
    let model = fit_ols(&samples, degree).map_err(load)?;
    let mut text = serde_json::to_string_pretty(&model).expect("model serializes");
    text.push('\n');
    emit(stdout, &text)?;
    Ok(Exit::Clean)
}

pub(crate) fn check(goals: &Path, s: &Settings, format: Format, stdout: &mut dyn Write) -> Result<Exit, Failure> {
    let text = read(goals)?;
    let base = goals.parent().unwrap_or(Path::new(""));
    let file = goals.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let mut load = |p: &str| fs::read_to_string(base.join(p)).map_err(|e| format!("{p}: {e}"));
    let (outcomes, findings) = evaluate_goals(&text, &file, &mut load, &s.catalog, &s.rules)
        .map_err(|e| Failure::new(Exit::Load, format!("{}: {e}", goals.display())))?;
    let violated = outcomes.iter().any(|o| !o.verdict.satisfied);
    let digest = deployqa::fix::digest(&text);
    let mut report = Report::new(goals.display().to_string(), digest, findings, s.threshold);
    report.goals = outcomes;
    emit(stdout, &render(&report, format, s))?;
    Ok(if violated { Exit::Findings } else { Exit::Clean })
}
