//! CSAR ingestion: zipped archives or exploded directories holding a TOSCA
//! blueprint, Ansible playbooks and an optional `goals.yaml`.

mod convert;
mod playbook;
mod tosca;

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::ir::{ArtifactKind, ArtifactRef, PlaybookModel, SourceSpan, TopologyModel};
use crate::span::LineIndex;

pub use playbook::{is_task_keyword, parse_playbook, TASK_KEYWORDS};
pub use tosca::parse_tosca;

pub const META_PATH: &str = "TOSCA-Metadata/TOSCA.meta";
pub const GOALS_PATH: &str = "goals.yaml";

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: not a CSAR archive or directory")]
    NotAnArchive { path: PathBuf },
    #[error("no entry blueprint: {reason}")]
    MissingEntryBlueprint { reason: String },
    #[error("{span}: malformed TOSCA.meta line (expected `key: value`)")]
    MetadataMalformed { span: SourceSpan },
    #[error("{span}: YAML syntax error: {message}")]
    YamlSyntax { message: String, span: SourceSpan },
    #[error("{span}: expected {expected}, found {found}")]
    SchemaShape { span: SourceSpan, expected: String, found: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl LoadError {
    pub fn span(&self) -> Option<&SourceSpan> {
        match self {
            LoadError::MetadataMalformed { span }
            | LoadError::YamlSyntax { span, .. }
            | LoadError::SchemaShape { span, .. } => Some(span),
            _ => None,
        }
    }
}

/// In-memory archive contents keyed by `/`-separated relative path.
pub type SourceFiles = BTreeMap<String, Vec<u8>>;

#[derive(Debug, Clone)]
pub struct CsarArchive {
    pub root: PathBuf,
    pub is_zip: bool,
    pub files: SourceFiles,
    pub metadata: BTreeMap<String, String>,
    pub entry_blueprint: String,
    pub topology: TopologyModel,
    /// Sorted by path.
    pub iac_artifacts: Vec<ArtifactRef>,
    pub playbooks: BTreeMap<String, PlaybookModel>,
    pub perf_goals: Option<String>,
    /// Artifact paths named by node templates but absent from the archive.
    pub missing_artifacts: Vec<String>,
}

impl CsarArchive {
    pub fn text(&self, path: &str) -> Option<&str> {
        self.files.get(path).and_then(|b| std::str::from_utf8(b).ok())
    }

    /// Playbooks bound to each node through its artifacts, plays concatenated
    /// in artifact order.
    pub fn node_playbooks(&self) -> BTreeMap<String, PlaybookModel> {
        let mut out: BTreeMap<String, PlaybookModel> = BTreeMap::new();
        let mut seen = std::collections::HashSet::new();
        for node in &self.topology.node_templates {
            if !seen.insert(node.name.as_str()) {
                continue;
            }
            for art in &node.artifacts {
                let Some(path) = self.resolve_path(&art.path) else { continue };
                let Some(pb) = self.playbooks.get(&path) else { continue };
                match out.get_mut(&node.name) {
                    Some(existing) => existing.plays.extend(pb.plays.iter().cloned()),
                    None => {
                        out.insert(node.name.clone(), pb.clone());
                    }
                }
            }
        }
        out
    }

    /// Artifact paths are relative to the blueprint's directory, falling back
    /// to the archive root.
    pub fn resolve_path(&self, path: &str) -> Option<String> {
        let base = match self.entry_blueprint.rsplit_once('/') {
            Some((dir, _)) => format!("{dir}/{path}"),
            None => path.to_owned(),
        };
        [normalize(&base), normalize(path)].into_iter().flatten().find(|p| self.files.contains_key(p))
    }
}

fn normalize(path: &str) -> Option<String> {
    let mut parts: Vec<&str> = Vec::new();
    for seg in path.split('/') {
        match seg {
            "" | "." => {}
            ".." => {
                parts.pop()?;
            }
            s => parts.push(s),
        }
    }
    Some(parts.join("/"))
}

/// Read a zip archive or walk a directory into memory.
pub fn read_sources(path: &Path) -> Result<(SourceFiles, bool), LoadError> {
    let io = |source| LoadError::Io { path: path.to_owned(), source };
    let meta = fs::metadata(path).map_err(io)?;
    if meta.is_dir() {
        let mut files = SourceFiles::new();
        walk_dir(path, path, &mut files)?;
        return Ok((files, false));
    }
    let file = fs::File::open(path).map_err(io)?;
    let mut zip = zip::ZipArchive::new(file).map_err(|_| LoadError::NotAnArchive { path: path.to_owned() })?;
    let mut files = SourceFiles::new();
    for i in 0..zip.len() {
        let mut entry = zip.by_index(i).map_err(|_| LoadError::NotAnArchive { path: path.to_owned() })?;
        if entry.is_dir() {
            continue;
        }
        // entries escaping the archive root are skipped
        let Some(name) = entry.enclosed_name() else { continue };
        let rel = name.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        let mut buf = Vec::new();
        entry.read_to_end(&mut buf).map_err(io)?;
        files.insert(rel, buf);
    }
    Ok((files, true))
}

fn walk_dir(root: &Path, dir: &Path, files: &mut SourceFiles) -> Result<(), LoadError> {
    let io = |source| LoadError::Io { path: dir.to_owned(), source };
    let mut entries: Vec<_> = fs::read_dir(dir).map_err(io)?.collect::<Result<_, _>>().map_err(io)?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        let ft = entry.file_type().map_err(io)?;
        if ft.is_dir() {
            if entry.file_name().to_string_lossy().starts_with('.') {
                continue;
            }
            walk_dir(root, &path, files)?;
        } else if ft.is_file() {
            let rel = path.strip_prefix(root).expect("walked under root");
            let rel = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            let bytes = fs::read(&path).map_err(|source| LoadError::Io { path: path.clone(), source })?;
            files.insert(rel, bytes);
        }
    }
    Ok(())
}

/// Decode a file as UTF-8; invalid bytes are a syntax error at the first bad offset.
pub fn decode<'a>(file: &str, bytes: &'a [u8]) -> Result<&'a str, LoadError> {
    std::str::from_utf8(bytes).map_err(|e| {
        let ok = std::str::from_utf8(&bytes[..e.valid_up_to()]).unwrap_or_default();
        let lines = LineIndex::new(ok);
        LoadError::YamlSyntax {
            message: "input is not valid UTF-8".into(),
            span: SourceSpan::new(file, e.valid_up_to(), e.valid_up_to(), &lines),
        }
    })
}

pub fn parse_metadata(text: &str) -> Result<BTreeMap<String, String>, LoadError> {
    let lines = LineIndex::new(text);
    let mut out = BTreeMap::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let content = line.trim_end_matches(['\n', '\r']);
        let start = offset;
        offset += line.len();
        if content.trim().is_empty() {
            continue;
        }
        match content.split_once(':') {
            Some((k, v)) if !k.trim().is_empty() && !k.contains(' ') => {
                out.insert(k.trim().to_owned(), v.trim().to_owned());
            }
            _ => {
                return Err(LoadError::MetadataMalformed {
                    span: SourceSpan::new(META_PATH, start, start + content.len(), &lines),
                })
            }
        }
    }
    Ok(out)
}

pub(crate) fn defines_topology(text: &str) -> bool {
    crate::yaml::parse(text).is_ok_and(|root| root.get("topology_template").is_some())
}

fn locate_entry(files: &SourceFiles, metadata: &BTreeMap<String, String>) -> Result<String, LoadError> {
    if let Some(entry) = metadata.get("Entry-Definitions") {
        return normalize(entry).filter(|p| files.contains_key(p)).ok_or_else(|| LoadError::MissingEntryBlueprint {
            reason: format!("Entry-Definitions `{entry}` not found in archive"),
        });
    }
    let candidates: Vec<&String> = files
        .iter()
        .filter(|(p, _)| !p.contains('/') && (p.ends_with(".yaml") || p.ends_with(".yml")))
        .filter(|(_, b)| std::str::from_utf8(b).is_ok_and(defines_topology))
        .map(|(p, _)| p)
        .collect();
    match candidates.as_slice() {
        [one] => Ok((*one).clone()),
        [] => Err(LoadError::MissingEntryBlueprint { reason: "no top-level topology document".into() }),
        many => Err(LoadError::MissingEntryBlueprint {
            reason: format!("ambiguous: {}", many.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")),
        }),
    }
}

/// Load a CSAR from a zip file or directory.
pub fn load_csar(path: &Path) -> Result<CsarArchive, LoadError> {
    if !path.exists() {
        return Err(LoadError::Io {
            path: path.to_owned(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
        });
    }
    let (files, is_zip) = read_sources(path)?;
    load_from_files(path.to_owned(), files, is_zip)
}

pub fn load_from_files(root: PathBuf, files: SourceFiles, is_zip: bool) -> Result<CsarArchive, LoadError> {
    let metadata = match files.get(META_PATH) {
        Some(bytes) => parse_metadata(decode(META_PATH, bytes)?)?,
        None => BTreeMap::new(),
    };
    let entry = locate_entry(&files, &metadata)?;
    let mut topology = parse_tosca(decode(&entry, &files[&entry])?, &entry)?;

    let mut archive = CsarArchive {
        root,
        is_zip,
        metadata,
        entry_blueprint: entry,
        topology: TopologyModel::empty(""),
        iac_artifacts: Vec::new(),
        playbooks: BTreeMap::new(),
        perf_goals: None,
        missing_artifacts: Vec::new(),
        files,
    };

    let local_imports: Vec<String> =
        topology.imports.iter().filter(|i| !i.remote).filter_map(|i| archive.resolve_path(&i.target)).collect();
    for path in local_imports {
        let imported = parse_tosca(decode(&path, &archive.files[&path])?, &path)?;
        topology.merge_imported(imported);
    }

    let mut artifacts: BTreeMap<String, ArtifactKind> = BTreeMap::new();
    for node in &topology.node_templates {
        for art in &node.artifacts {
            match archive.resolve_path(&art.path) {
                Some(p) => {
                    artifacts.insert(p, art.kind);
                }
                None => archive.missing_artifacts.push(art.path.clone()),
            }
        }
    }
    for path in archive.files.keys() {
        if path.starts_with("playbooks/") && (path.ends_with(".yml") || path.ends_with(".yaml")) {
            artifacts.insert(path.clone(), ArtifactKind::AnsiblePlaybook);
        }
    }
    archive.missing_artifacts.sort();
    archive.missing_artifacts.dedup();

    for (path, kind) in &artifacts {
        if *kind == ArtifactKind::AnsiblePlaybook {
            let pb = parse_playbook(decode(path, &archive.files[path])?, path)?;
            archive.playbooks.insert(path.clone(), pb);
        }
    }
    archive.iac_artifacts = artifacts.into_iter().map(|(path, kind)| ArtifactRef { path, kind, span: None }).collect();
    archive.perf_goals = archive.files.contains_key(GOALS_PATH).then(|| GOALS_PATH.to_owned());
    archive.topology = topology;
    Ok(archive)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn files(entries: &[(&str, &str)]) -> SourceFiles {
        entries.iter().map(|(k, v)| (k.to_string(), v.as_bytes().to_vec())).collect()
    }

    const BP: &str = "topology_template:\n  node_templates:\n    a: {type: tosca.nodes.Compute}\n";

    #[test]
    fn metadata_selects_entry() {
        let f = files(&[
            (META_PATH, "TOSCA-Meta-File-Version: 1.0\nEntry-Definitions: service.yaml\n"),
            ("service.yaml", BP),
            ("other.yaml", BP),
        ]);
        let a = load_from_files(PathBuf::from("x"), f, false).unwrap();
        assert_eq!(a.entry_blueprint, "service.yaml");
        assert_eq!(a.metadata["TOSCA-Meta-File-Version"], "1.0");
    }

    #[test]
    fn two_topologies_without_metadata_is_ambiguous() {
        let f = files(&[("a.yaml", BP), ("b.yml", BP)]);
        let err = load_from_files(PathBuf::from("x"), f, false).unwrap_err();
        match err {
            LoadError::MissingEntryBlueprint { reason } => assert!(reason.starts_with("ambiguous")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn goals_file_is_not_a_candidate() {
        let f = files(&[("a.yaml", BP), (GOALS_PATH, "- response: latency\n")]);
        let a = load_from_files(PathBuf::from("x"), f, false).unwrap();
        assert_eq!(a.entry_blueprint, "a.yaml");
        assert_eq!(a.perf_goals.as_deref(), Some(GOALS_PATH));
    }

    #[test]
    fn malformed_meta_line() {
        let f = files(&[(META_PATH, "Entry-Definitions: a.yaml\nbogus line\n"), ("a.yaml", BP)]);
        match load_from_files(PathBuf::from("x"), f, false).unwrap_err() {
            LoadError::MetadataMalformed { span } => {
                assert_eq!(span.start_line, 2);
                assert_eq!(span.file, META_PATH);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn artifacts_and_playbook_dir_are_discovered_sorted() {
        let bp = "topology_template:\n  node_templates:\n    a:\n      type: tosca.nodes.Compute\n      artifacts:\n        cfg: scripts/setup.yml\n        bin: files/tool.tar.gz\n";
        let f = files(&[
            ("s.yaml", bp),
            ("scripts/setup.yml", "- hosts: all\n  tasks: []\n"),
            ("files/tool.tar.gz", "x"),
            ("playbooks/b.yml", "- hosts: all\n  tasks: []\n"),
            ("playbooks/sub/a.yaml", "- hosts: all\n  tasks: []\n"),
        ]);
        let a = load_from_files(PathBuf::from("x"), f, false).unwrap();
        let paths: Vec<_> = a.iac_artifacts.iter().map(|r| (r.path.as_str(), r.kind)).collect();
        assert_eq!(
            paths,
            vec![
                ("files/tool.tar.gz", ArtifactKind::Other),
                ("playbooks/b.yml", ArtifactKind::AnsiblePlaybook),
                ("playbooks/sub/a.yaml", ArtifactKind::AnsiblePlaybook),
                ("scripts/setup.yml", ArtifactKind::AnsiblePlaybook),
            ]
        );
        assert_eq!(a.playbooks.len(), 3);
        assert!(a.node_playbooks().contains_key("a"));
    }

    #[test]
    fn non_utf8_is_syntax_error() {
        let mut f = files(&[]);
        f.insert("a.yaml".into(), b"topology_template: \xff\n".to_vec());
        // not decodable, so no candidate is found either
        assert!(load_from_files(PathBuf::from("x"), f.clone(), false).is_err());
        f.insert(META_PATH.into(), b"Entry-Definitions: a.yaml\n".to_vec());
        match load_from_files(PathBuf::from("x"), f, false).unwrap_err() {
            LoadError::YamlSyntax { span, .. } => assert_eq!(span.start_byte, 19),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn local_imports_contribute_types() {
        let bp = "imports:\n  - types.yaml\ntopology_template:\n  node_templates:\n    a: {type: my.T}\n";
        let f = files(&[("s.yaml", bp), ("types.yaml", "node_types:\n  my.T:\n    derived_from: tosca.nodes.Root\n")]);
        let a = load_from_files(PathBuf::from("x"), f, false).unwrap();
        assert_eq!(a.topology.node_types.len(), 1);
        assert_eq!(a.topology.node_types[0].origin, crate::ir::TypeOrigin::Imported);
    }
}
