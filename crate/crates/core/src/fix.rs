//! Resolution recommendation and template-driven source patches.
//!
//! Directives are lowered to byte-range edits against the original text, so
//! comments and formatting outside the edited ranges survive untouched.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::catalog::{substitute, Catalog, Directive, Resolution};
use crate::finding::Finding;
use crate::smells::UnknownRule;
use crate::yaml::{self, join_pointer, quote_scalar, split_pointer, Node, NodeValue, Style};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixPlan {
    pub finding: Finding,
    pub resolution: Resolution,
    pub bindings: BTreeMap<String, String>,
    /// Declared parameters with neither a value from the finding nor a default.
    pub unbound: Vec<String>,
    pub target_file: String,
    /// Digest of the text the finding was computed from, when known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_digest: Option<String>,
}

impl FixPlan {
    pub fn is_applicable(&self) -> bool {
        self.resolution.auto_fixable && self.resolution.template.is_some() && self.unbound.is_empty()
    }

    pub fn with_source_digest(mut self, digest: impl Into<String>) -> Self {
        self.source_digest = Some(digest.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub start_byte: usize,
    pub end_byte: usize,
    pub replacement: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Patch {
    pub file: String,
    pub base_digest: String,
    pub edits: Vec<Edit>,
}

impl Patch {
    /// Byte-length change the patch makes.
    pub fn delta(&self) -> isize {
        self.edits.iter().map(|e| e.replacement.len() as isize - (e.end_byte - e.start_byte) as isize).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FixError {
    #[error("resolution {0} is advice only")]
    NotAutoFixable(String),
    #[error("source changed since the finding was computed: {0}")]
    StaleSource(String),
    #[error("template error: {0}")]
    TemplateError(String),
    #[error("edits overlap or fall outside the source at byte {0}")]
    OverlappingEdits(usize),
}

pub fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn json_text(v: &Json) -> Option<String> {
    match v {
        Json::String(s) => Some(s.clone()),
        Json::Number(n) => Some(n.to_string()),
        Json::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

/// One plan per resolution of the finding's rule, in catalog order.
pub fn recommend(finding: &Finding, catalog: &Catalog) -> Result<Vec<FixPlan>, UnknownRule> {
    let entry = catalog.get(&finding.rule_id).ok_or_else(|| UnknownRule(finding.rule_id.clone()))?;
    let known: BTreeMap<String, String> =
        finding.data.iter().filter_map(|(k, v)| json_text(v).map(|t| (k.clone(), t))).collect();
    Ok(entry
        .resolutions
        .iter()
        .map(|res| {
            let mut bindings = BTreeMap::new();
            for p in &res.parameters {
                if let Some(v) = known.get(&p.name) {
                    bindings.insert(p.name.clone(), v.clone());
                }
            }
            // defaults may refer to other parameters, so resolve until nothing changes
            loop {
                let mut progressed = false;
                for p in &res.parameters {
                    if bindings.contains_key(&p.name) {
                        continue;
                    }
                    let Some(default) = p.default.as_ref().and_then(json_text) else { continue };
                    let mut scope = known.clone();
                    scope.extend(bindings.clone());
                    if let Ok(v) = substitute(&default, &scope) {
                        bindings.insert(p.name.clone(), v);
                        progressed = true;
                    }
                }
                if !progressed {
                    break;
                }
            }
            let unbound =
                res.parameters.iter().filter(|p| !bindings.contains_key(&p.name)).map(|p| p.name.clone()).collect();
            FixPlan {
                finding: finding.clone(),
                resolution: res.clone(),
                bindings,
                unbound,
                target_file: finding.span.file.clone(),
                source_digest: None,
            }
        })
        .collect())
}

fn line_start(text: &str, offset: usize) -> usize {
    text[..offset].rfind('\n').map_or(0, |i| i + 1)
}

/// Offset just past the newline ending the line that contains `offset - 1`.
fn after_line(text: &str, offset: usize) -> usize {
    if offset > 0 && text.as_bytes()[offset - 1] == b'\n' {
        return offset;
    }
    text[offset..].find('\n').map_or(text.len(), |i| offset + i + 1)
}

fn column(text: &str, offset: usize) -> usize {
    offset - line_start(text, offset)
}

/// End of a node's content with trailing whitespace and newlines excluded.
fn content_end(text: &str, node: &Node) -> usize {
    node.start + text[node.start..node.end].trim_end().len()
}

fn is_scalar(node: &Node) -> bool {
    !matches!(node.value, NodeValue::Seq(_) | NodeValue::Map(_))
}

struct Lowering<'a> {
    text: &'a str,
    root: Node,
    finding: &'a Finding,
    edits: Vec<Edit>,
}

impl Lowering<'_> {
    fn edit(&mut self, start: usize, end: usize, replacement: String) {
        self.edits.push(Edit { start_byte: start, end_byte: end, replacement });
    }

    fn resolve(&self, pointer: &str) -> Result<&Node, FixError> {
        self.root.resolve(pointer).ok_or_else(|| FixError::StaleSource(format!("`{pointer}` not found")))
    }

    /// Parent mapping and key of a pointer.
    fn parent_entry(&self, pointer: &str) -> Result<(&Node, String), FixError> {
        let mut segs = split_pointer(pointer);
        let key = segs.pop().ok_or_else(|| FixError::TemplateError("the document root has no key".into()))?;
        let parent_ptr = segs.iter().fold(String::new(), |p, s| join_pointer(&p, s));
        let parent = self.resolve(&parent_ptr)?;
        if parent.as_map().is_none() {
            return Err(FixError::TemplateError(format!("`{parent_ptr}` is not a mapping")));
        }
        Ok((parent, key))
    }

    fn set_key(&mut self, pointer: &str, value: &str, raw: bool, whole_subject: bool) -> Result<(), FixError> {
        let text = self.text;
        let rendered = if raw { value.to_owned() } else { quote_scalar(value) };
        if whole_subject {
            let node = self.resolve(pointer)?;
            let (ns, ne) = (node.start, node.end);
            let span = &self.finding.span;
            if span.end_byte > text.len() || span.start_byte < ns || span.end_byte > ne {
                return Err(FixError::StaleSource("finding span lies outside its subject".into()));
            }
            if (span.start_byte, span.end_byte) != (ns, ne) {
                // a token inside a free-form argument string
                if !is_scalar(node) || value.is_empty() || value.contains(char::is_whitespace) {
                    return Err(FixError::TemplateError(format!("`{value}` cannot replace a free-form argument")));
                }
                self.edit(span.start_byte, span.end_byte, value.to_owned());
                return Ok(());
            }
        }
        match self.root.resolve(pointer) {
            Some(node) if is_scalar(node) || node.style.is_flow() => {
                let end = if is_scalar(node) && !matches!(node.style, Style::Literal | Style::Folded) {
                    node.end
                } else {
                    content_end(text, node)
                };
                let start = node.start;
                self.edit(start, end, rendered);
            }
            Some(node) => {
                // block collection: the value moves onto the key's line
                let start = node.start;
                let (parent, key) = self.parent_entry(pointer)?;
                let (k, _) = parent.get_entry(&key).expect("resolved above");
                let colon =
                    k.end + text[k.end..start].find(':').ok_or_else(|| FixError::StaleSource("missing `:`".into()))?;
                let end = content_end(text, parent.get(&key).expect("resolved above"));
                self.edit(colon + 1, end, format!(" {rendered}"));
            }
            None => {
                let (parent, key) = self.parent_entry(pointer)?;
                let entry = format!("{}: {rendered}", quote_scalar(&key));
                let (at, insert) = insertion_after_last(text, parent, &entry)?;
                self.edit(at, at, insert);
            }
        }
        Ok(())
    }

    fn remove_key(&mut self, pointer: &str) -> Result<(), FixError> {
        let text = self.text;
        let (parent, key) = self.parent_entry(pointer)?;
        let entries = parent.as_map().expect("checked mapping");
        let i = entries
            .iter()
            .position(|(k, _)| k.scalar_text().as_deref() == Some(key.as_str()))
            .ok_or_else(|| FixError::StaleSource(format!("`{pointer}` not found")))?;
        let (k, v) = &entries[i];
        let next = entries.get(i + 1).map(|(nk, _)| nk.start);
        let (start, end) = if parent.style.is_flow() {
            match (next, i.checked_sub(1)) {
                (Some(n), _) => (k.start, n),
                (None, Some(p)) => (content_end(text, &entries[p].1).max(entries[p].0.end), v.end.max(k.end)),
                (None, None) => (k.start, v.end.max(k.end)),
            }
        } else {
            let ls = line_start(text, k.start);
            let prefix = &text[ls..k.start];
            if prefix.trim().is_empty() {
                (ls, after_line(text, content_end(text, v).max(k.end)))
            } else if let Some(n) = next {
                // first key after a sequence dash: pull the next key up
                (k.start, n)
            } else {
                return Err(FixError::TemplateError(format!("removing `{key}` would leave an empty mapping")));
            }
        };
        self.edit(start, end, String::new());
        Ok(())
    }

    fn rename_key(&mut self, pointer: &str, new: &str) -> Result<(), FixError> {
        let (parent, key) = self.parent_entry(pointer)?;
        let (k, _) = parent.get_entry(&key).ok_or_else(|| FixError::StaleSource(format!("`{pointer}` not found")))?;
        let (s, e) = (k.start, k.end);
        if parent.get(new).is_some() {
            return Err(FixError::TemplateError(format!("key `{new}` already exists")));
        }
        self.edit(s, e, quote_scalar(new));
        Ok(())
    }

    fn insert_sibling(&mut self, pointer: &str, node: &Json) -> Result<(), FixError> {
        let text = self.text;
        let mut segs = split_pointer(pointer);
        segs.pop().ok_or_else(|| FixError::TemplateError("the document root has no siblings".into()))?;
        let parent_ptr = segs.iter().fold(String::new(), |p, s| join_pointer(&p, s));
        let target = self.resolve(pointer)?;
        let parent = self.resolve(&parent_ptr)?;
        if parent.style.is_flow() {
            return Err(FixError::TemplateError("cannot insert into a flow collection".into()));
        }
        let (indent, body) = match &parent.value {
            NodeValue::Seq(_) => {
                let dash =
                    text[..target.start].rfind('-').ok_or_else(|| FixError::StaleSource("missing `-`".into()))?;
                (column(text, dash), yaml::emit(&Json::Array(vec![node.clone()])))
            }
            NodeValue::Map(entries) => {
                if !node.is_object() {
                    return Err(FixError::TemplateError("a mapping sibling must be a mapping".into()));
                }
                let (k, _) = entries.iter().find(|(_, v)| std::ptr::eq(v, target)).expect("child of parent");
                (column(text, k.start), yaml::emit(node))
            }
            _ => return Err(FixError::TemplateError(format!("`{parent_ptr}` is not a collection"))),
        };
        let pad = " ".repeat(indent);
        let block: String = body.lines().map(|l| format!("{pad}{l}\n")).collect();
        let end = content_end(text, target);
        let at = after_line(text, end);
        let lead = if at == text.len() && !text.ends_with('\n') { "\n" } else { "" };
        self.edit(at, at, format!("{lead}{block}"));
        Ok(())
    }
}

/// Where and what to insert so that `entry` becomes the last child of `map`.
fn insertion_after_last(text: &str, map: &Node, entry: &str) -> Result<(usize, String), FixError> {
    let entries = map.as_map().expect("mapping");
    if map.style.is_flow() {
        return Ok(match entries.last() {
            Some((k, v)) => (v.end.max(k.end), format!(", {entry}")),
            None => (map.start + 1, entry.to_owned()),
        });
    }
    let (first, _) = entries.first().ok_or_else(|| FixError::TemplateError("empty block mapping".into()))?;
    let (lk, lv) = entries.last().expect("non-empty");
    let pad = " ".repeat(column(text, first.start));
    let at = after_line(text, content_end(text, lv).max(lk.end));
    let lead = if at == text.len() && !text.ends_with('\n') { "\n" } else { "" };
    Ok((at, format!("{lead}{pad}{entry}\n")))
}

/// Lower the plan's template to edits against `source`.
pub fn render_patch(plan: &FixPlan, source: &str) -> Result<Patch, FixError> {
    let res = &plan.resolution;
    let template = match (&res.template, res.auto_fixable) {
        (Some(t), true) => t,
        _ => return Err(FixError::NotAutoFixable(res.res_id.clone())),
    };
    let base_digest = digest(source);
    if plan.source_digest.as_ref().is_some_and(|d| *d != base_digest) {
        return Err(FixError::StaleSource("digest mismatch".into()));
    }
    if let Some(name) = plan.unbound.first() {
        return Err(FixError::TemplateError(format!("parameter `{name}` is unbound")));
    }
    let root = yaml::parse(source).map_err(|e| FixError::StaleSource(e.to_string()))?;
    let subst = |s: &str| {
        substitute(s, &plan.bindings).map_err(|n| FixError::TemplateError(format!("parameter `{n}` is unbound")))
    };
    let subject = &plan.finding.subject;
    let mut low = Lowering { text: source, root, finding: &plan.finding, edits: Vec::new() };
    for directive in template {
        match directive {
            Directive::SetKey { path, value, raw } => {
                let path = subst(path)?;
                low.set_key(&join_rel(subject, &path), &subst(value)?, *raw, path.is_empty())?;
            }
            Directive::RemoveKey { path } => low.remove_key(&join_rel(subject, &subst(path)?))?,
            Directive::RenameKey { path, new } => low.rename_key(&join_rel(subject, &subst(path)?), &subst(new)?)?,
            Directive::InsertSibling { path, node } => {
                let node = substitute_json(node, &subst)?;
                low.insert_sibling(&join_rel(subject, &subst(path)?), &node)?;
            }
        }
    }
    let mut edits = low.edits;
    edits.sort_by_key(|e| (e.start_byte, e.end_byte));
    check_edits(source, &edits)?;
    Ok(Patch { file: plan.target_file.clone(), base_digest, edits })
}

fn join_rel(base: &str, rel: &str) -> String {
    split_pointer(rel).iter().fold(base.to_owned(), |p, s| join_pointer(&p, s))
}

fn substitute_json(node: &Json, subst: &dyn Fn(&str) -> Result<String, FixError>) -> Result<Json, FixError> {
    Ok(match node {
        Json::String(s) => Json::String(subst(s)?),
        Json::Array(items) => Json::Array(items.iter().map(|i| substitute_json(i, subst)).collect::<Result<_, _>>()?),
        Json::Object(map) => Json::Object(
            map.iter().map(|(k, v)| Ok((subst(k)?, substitute_json(v, subst)?))).collect::<Result<_, FixError>>()?,
        ),
        other => other.clone(),
    })
}

fn check_edits(source: &str, edits: &[Edit]) -> Result<(), FixError> {
    let mut prev_end = 0;
    for e in edits {
        let in_bounds = e.start_byte <= e.end_byte
            && e.end_byte <= source.len()
            && source.is_char_boundary(e.start_byte)
            && source.is_char_boundary(e.end_byte);
        if !in_bounds || e.start_byte < prev_end {
            return Err(FixError::OverlappingEdits(e.start_byte));
        }
        prev_end = e.end_byte;
    }
    Ok(())
}

/// Apply a patch, right to left, after checking it was computed against `source`.
pub fn apply_patch(source: &str, patch: &Patch) -> Result<String, FixError> {
    if digest(source) != patch.base_digest {
        return Err(FixError::StaleSource(format!("{} has changed", patch.file)));
    }
    check_edits(source, &patch.edits)?;
    let mut out = source.to_owned();
    for e in patch.edits.iter().rev() {
        out.replace_range(e.start_byte..e.end_byte, &e.replacement);
    }
    Ok(out)
}

/// Merge patches for the same file computed against the same text.
pub fn merge_patches(patches: &[Patch]) -> Result<Option<Patch>, FixError> {
    let Some(first) = patches.first() else { return Ok(None) };
    if patches.iter().any(|p| p.file != first.file || p.base_digest != first.base_digest) {
        return Err(FixError::StaleSource("patches target different sources".into()));
    }
    let mut edits: Vec<Edit> = patches.iter().flat_map(|p| p.edits.iter().cloned()).collect();
    edits.sort_by_key(|e| (e.start_byte, e.end_byte));
    for w in edits.windows(2) {
        if w[1].start_byte < w[0].end_byte || (w[1].start_byte == w[0].start_byte && w[0] != w[1]) {
            return Err(FixError::OverlappingEdits(w[1].start_byte));
        }
    }
    edits.dedup();
    Ok(Some(Patch { file: first.file.clone(), base_digest: first.base_digest.clone(), edits }))
}

/// Skip reason for findings whose rule has no applicable automatic resolution.
pub const NO_AUTOMATIC_RESOLUTION: &str = "no automatic resolution";

/// Outcome of fixing every finding in one file in a single pass.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FilePlan {
    pub patch: Option<Patch>,
    pub applied: Vec<FixPlan>,
    /// Findings left alone, with the reason.
    pub skipped: Vec<(Finding, String)>,
}

/// Take the first applicable resolution of each finding and merge the
/// resulting edits in finding order, skipping any that collide with edits
/// already accepted.
pub fn plan_file(findings: &[Finding], source: &str, catalog: &Catalog) -> FilePlan {
    let mut out = FilePlan::default();
    let mut accepted: Vec<Patch> = Vec::new();
    for f in findings {
        let plans = match recommend(f, catalog) {
            Ok(p) => p,
            Err(e) => {
                out.skipped.push((f.clone(), e.to_string()));
                continue;
            }
        };
        let Some(plan) = plans.into_iter().find(FixPlan::is_applicable) else {
            out.skipped.push((f.clone(), NO_AUTOMATIC_RESOLUTION.into()));
            continue;
        };
        let patch = match render_patch(&plan, source) {
            Ok(p) => p,
            Err(e) => {
                out.skipped.push((f.clone(), e.to_string()));
                continue;
            }
        };
        accepted.push(patch);
        match merge_patches(&accepted) {
            Ok(_) => out.applied.push(plan),
            Err(e) => {
                accepted.pop();
                out.skipped.push((f.clone(), e.to_string()));
            }
        }
    }
    out.patch = merge_patches(&accepted).expect("accepted patches merge").filter(|p| !p.edits.is_empty());
    out
}
