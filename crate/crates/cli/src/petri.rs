//! `qa petri`: export the workflow net and optionally analyze it.

use std::fs;
use std::io::Write;
use std::path::Path;

use deployqa::finding::normalize;
use deployqa::petri::{dead_transitions, detect_deadlocks, export_net, reachability_graph, ExportFormat};
use deployqa::pipeline::{workflow_net, Input, Limits};

use crate::config::Settings;
use crate::report::Report;
use crate::{analysis_failure, emit, open, render, Exit, Failure, Format};

pub(crate) fn run(
    path: &Path,
    s: &Settings,
    export: ExportFormat,
    target: Option<&Path>,
    analyze: Option<Limits>,
    format: Format,
    stdout: &mut dyn Write,
) -> Result<Exit, Failure> {
    let input = open(path)?;
    let Input::Archive(archive) = &input else {
        return Err(Failure::new(Exit::Usage, "the workflow net is built from a topology; pass a CSAR or blueprint"));
    };
    let net = workflow_net(archive).map_err(analysis_failure)?;
    let text = export_net(&net, export);
    match target {
        Some(file) => {
            fs::write(file, &text).map_err(|e| Failure::new(Exit::Usage, format!("{}: {e}", file.display())))?
        }
        None => emit(stdout, &text)?,
    }
    let Some(limits) = analyze else { return Ok(Exit::Clean) };
    let graph = reachability_graph(&net, limits.max_markings).map_err(|e| Failure::new(Exit::Limit, e.to_string()))?;
    let mut findings = detect_deadlocks(&graph, &net, &s.catalog, &s.rules).expect("graph is complete");
    findings.extend(dead_transitions(&graph, &net, &s.catalog, &s.rules).expect("graph is complete"));
    normalize(&mut findings);
    let report = Report::new(path.display().to_string(), input.digest(), findings, s.threshold);
    emit(stdout, &render(&report, format, s))?;
    Ok(if report.blocking() { Exit::Findings } else { Exit::Clean })
}
