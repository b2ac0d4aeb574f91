//! End-to-end analysis of a CSAR, directory or single file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::csar::{self, load_from_files, parse_playbook, CsarArchive, LoadError, SourceFiles};
use crate::finding::{normalize, Finding};
use crate::ir::PlaybookModel;
use crate::perf::{evaluate_goals, GoalOutcome, PerfError};
use crate::petri::{
    build_workflow_net, dead_transitions, detect_deadlocks, reachability_graph, PetriNet, UnboundPlaybook,
};
use crate::smells::{detect_playbook_smells, detect_topology_smells, RuleContext};
use crate::verifier::verify_topology;

/// What a path on the command line turned out to be.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Input {
    Archive(CsarArchive),
    /// A lone playbook outside any CSAR.
    Playbook {
        path: PathBuf,
        file: String,
        text: String,
        model: PlaybookModel,
    },
}

impl Input {
    /// Source text of a file inside the input.
    pub fn text(&self, file: &str) -> Option<&str> {
        match self {
            Input::Archive(a) => a.text(file),
            Input::Playbook { file: f, text, .. } => (f == file).then_some(text.as_str()),
        }
    }

    /// Filesystem path of a file inside the input; `None` inside a zip.
    pub fn disk_path(&self, file: &str) -> Option<PathBuf> {
        match self {
            Input::Archive(a) if a.is_zip => None,
            Input::Archive(a) if a.root.is_file() => Some(a.root.clone()),
            Input::Archive(a) => Some(a.root.join(file)),
            Input::Playbook { path, .. } => Some(path.clone()),
        }
    }

    pub fn is_zip(&self) -> bool {
        matches!(self, Input::Archive(a) if a.is_zip)
    }

    /// SHA-256 over every file path and its bytes, in path order.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        let mut feed = |path: &str, bytes: &[u8]| {
            h.update((path.len() as u64).to_le_bytes());
            h.update(path.as_bytes());
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(bytes);
        };
        match self {
            Input::Archive(a) => a.files.iter().for_each(|(p, b)| feed(p, b)),
            Input::Playbook { file, text, .. } => feed(file, text.as_bytes()),
        }
        hex::encode(h.finalize())
    }
}

fn is_yaml(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "yml" || e == "yaml")
}

/// Load a zip CSAR, a CSAR directory, a single blueprint or a single playbook.
pub fn load_input(path: &Path) -> Result<Input, LoadError> {
    if path.is_file() && is_yaml(path) {
        let bytes = fs::read(path).map_err(|source| LoadError::Io { path: path.to_owned(), source })?;
        let file = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let text = String::from_utf8(bytes.clone())
            .map_err(|_| LoadError::YamlSyntax { message: "file is not valid UTF-8".into(), span: csar_span(&file) })?;
        if csar::defines_topology(&text) {
            let files = SourceFiles::from([(file, bytes)]);
            return load_from_files(path.to_owned(), files, false).map(Input::Archive);
        }
        let model = parse_playbook(&text, &file)?;
        return Ok(Input::Playbook { path: path.to_owned(), file, text, model });
    }
    csar::load_csar(path).map(Input::Archive)
}

fn csar_span(file: &str) -> crate::span::SourceSpan {
    crate::span::SourceSpan::file_start(file)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSummary {
    pub places: usize,
    pub transitions: usize,
    pub markings: usize,
    pub edges: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Analysis {
    pub findings: Vec<Finding>,
    /// False when the workflow state space exceeded the marking budget; the
    /// workflow rules then report nothing.
    pub complete: bool,
    pub notes: Vec<String>,
    pub net: Option<NetSummary>,
    pub goals: Vec<GoalOutcome>,
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Perf(#[from] PerfError),
    #[error("playbook bound to unknown node `{}`", .0 .0)]
    Unbound(UnboundPlaybook),
}

#[derive(Debug, Clone, Copy)]
pub struct Limits {
    pub max_markings: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_markings: crate::petri::DEFAULT_MAX_MARKINGS }
    }
}

pub fn workflow_net(archive: &CsarArchive) -> Result<PetriNet, AnalysisError> {
    build_workflow_net(&archive.topology, &archive.node_playbooks()).map_err(AnalysisError::Unbound)
}

/// Run every analysis that applies to the input.
pub fn analyze(input: &Input, ctx: &RuleContext<'_>, limits: Limits) -> Result<Analysis, AnalysisError> {
    let mut analysis =
        Analysis { findings: Vec::new(), complete: true, notes: Vec::new(), net: None, goals: Vec::new() };
    let archive = match input {
        Input::Playbook { text, model, .. } => {
            analysis.findings = detect_playbook_smells(model, text, ctx);
            return Ok(analysis);
        }
        Input::Archive(a) => a,
    };
    let findings = &mut analysis.findings;
    findings.extend(verify_topology(&archive.topology, ctx.catalog, ctx.config));
    findings.extend(detect_topology_smells(&archive.topology, ctx));
    for (path, pb) in &archive.playbooks {
        let text = archive.text(path).unwrap_or_default();
        findings.extend(detect_playbook_smells(pb, text, ctx));
    }
    for missing in &archive.missing_artifacts {
        analysis.notes.push(format!("artifact `{missing}` is not in the archive"));
    }

    let net = workflow_net(archive)?;
    match reachability_graph(&net, limits.max_markings) {
        Ok(graph) => {
            analysis.net = Some(NetSummary {
                places: net.places.len(),
                transitions: net.transitions.len(),
                markings: graph.vertices.len(),
                edges: graph.edges.len(),
            });
            if graph.stats.unsafe_merges > 0 {
                analysis.notes.push(format!("{} firings put a second token on a place", graph.stats.unsafe_merges));
            }
            let complete = "graph is complete";
            findings.extend(detect_deadlocks(&graph, &net, ctx.catalog, ctx.config).expect(complete));
            findings.extend(dead_transitions(&graph, &net, ctx.catalog, ctx.config).expect(complete));
        }
        Err(exceeded) => {
            analysis.complete = false;
            analysis.net = Some(NetSummary {
                places: net.places.len(),
                transitions: net.transitions.len(),
                markings: exceeded.partial.vertices.len(),
                edges: exceeded.partial.edges.len(),
            });
            analysis.notes.push(format!("{exceeded}; workflow analysis skipped"));
        }
    }

    if let Some(goals_file) = &archive.perf_goals {
        let text = archive.text(goals_file).unwrap_or_default();
        let base = goals_file.rsplit_once('/').map(|(d, _)| format!("{d}/")).unwrap_or_default();
        let mut read = |p: &str| -> Result<String, String> {
            let key = format!("{base}{p}");
            archive.text(&key).map(str::to_owned).ok_or_else(|| format!("data file `{p}` not found"))
        };
        let (outcomes, perf_findings) = evaluate_goals(text, goals_file, &mut read, ctx.catalog, ctx.config)?;
        analysis.goals = outcomes;
        findings.extend(perf_findings);
    }
    normalize(findings);
    Ok(analysis)
}

/// Per-file counts, for summaries.
pub fn findings_by_file(findings: &[Finding]) -> BTreeMap<&str, usize> {
    let mut out = BTreeMap::new();
    for f in findings {
        *out.entry(f.span.file.as_str()).or_default() += 1;
    }
    out
}
