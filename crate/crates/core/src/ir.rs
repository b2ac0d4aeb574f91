//! Intermediate representation shared by every analysis.
//!
//! Models are built once by the loaders and never mutated afterwards. Each
//! element keeps the [`SourceSpan`] it was parsed from and the YAML pointer
//! (`/`-separated path from the document root) that addresses it, which is what
//! findings use as their subject and what the fix engine resolves edits against.

use std::fmt;

use serde::{Deserialize, Serialize};

pub use crate::span::SourceSpan;

/// A spanned data value. TOSCA intrinsic functions (`get_input`, ...) are kept
/// as opaque [`ValueKind::Function`] references and never evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct Value {
    pub kind: ValueKind,
    pub tag: Option<String>,
    pub pointer: String,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValueKind {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Seq(Vec<Value>),
    Map(Vec<Entry>),
    Function { name: String, args: Box<Value> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub key_span: SourceSpan,
    pub value: Value,
}

impl Value {
    pub fn as_str(&self) -> Option<&str> {
        match &self.kind {
            ValueKind::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_map(&self) -> Option<&[Entry]> {
        match &self.kind {
            ValueKind::Map(m) => Some(m),
            _ => None,
        }
    }

    pub fn is_function(&self) -> bool {
        matches!(self.kind, ValueKind::Function { .. })
    }

    /// Scalars rendered as text; `None` for collections and functions.
    pub fn scalar_text(&self) -> Option<String> {
        match &self.kind {
            ValueKind::Null => Some(String::new()),
            ValueKind::Bool(b) => Some(b.to_string()),
            ValueKind::Int(i) => Some(i.to_string()),
            ValueKind::Float(f) => Some(f.to_string()),
            ValueKind::Str(s) => Some(s.clone()),
            _ => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ValueKind::Null => "null",
            ValueKind::Bool(_) => "boolean",
            ValueKind::Int(_) => "integer",
            ValueKind::Float(_) => "float",
            ValueKind::Str(_) => "string",
            ValueKind::Seq(_) => "list",
            ValueKind::Map(_) => "map",
            ValueKind::Function { .. } => "function",
        }
    }

    /// Span-free structural view.
    pub fn to_json(&self) -> serde_json::Value {
        use serde_json::Value as J;
        match &self.kind {
            ValueKind::Null => J::Null,
            ValueKind::Bool(b) => J::Bool(*b),
            ValueKind::Int(i) => J::from(*i),
            ValueKind::Float(f) => serde_json::Number::from_f64(*f).map(J::Number).unwrap_or(J::Null),
            ValueKind::Str(s) => J::String(s.clone()),
            ValueKind::Seq(items) => J::Array(items.iter().map(Value::to_json).collect()),
            ValueKind::Map(entries) => {
                let mut m = serde_json::Map::new();
                for e in entries {
                    m.entry(e.key.clone()).or_insert_with(|| e.value.to_json());
                }
                J::Object(m)
            }
            ValueKind::Function { name, args } => serde_json::json!({ name.clone(): args.to_json() }),
        }
    }

    /// Depth-first visit of every scalar leaf together with the key it sits under
    /// (the nearest enclosing mapping key, if any).
    pub fn visit_scalars<'a>(&'a self, key: Option<&'a str>, f: &mut dyn FnMut(Option<&'a str>, &'a Value)) {
        match &self.kind {
            ValueKind::Seq(items) => items.iter().for_each(|v| v.visit_scalars(key, f)),
            ValueKind::Map(entries) => entries.iter().for_each(|e| e.value.visit_scalars(Some(&e.key), f)),
            ValueKind::Function { .. } => {}
            _ => f(key, self),
        }
    }
}

pub fn find_entry<'a>(entries: &'a [Entry], key: &str) -> Option<&'a Entry> {
    entries.iter().find(|e| e.key == key)
}

// ---------------------------------------------------------------------------
// TOSCA topology

#[derive(Debug, Clone, PartialEq)]
pub struct TopologyModel {
    pub file: String,
    pub tosca_version: Option<String>,
    pub imports: Vec<Import>,
    pub node_templates: Vec<NodeTemplate>,
    pub relationship_templates: Vec<RelationshipTemplate>,
    pub node_types: Vec<TypeDef>,
    pub capability_types: Vec<TypeDef>,
    pub inputs: Vec<Parameter>,
    pub outputs: Vec<Parameter>,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Import {
    pub target: String,
    pub remote: bool,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeTemplate {
    pub name: String,
    pub type_name: String,
    pub properties: Vec<Entry>,
    pub requirements: Vec<Requirement>,
    pub capabilities: Vec<Entry>,
    pub artifacts: Vec<ArtifactRef>,
    /// `interfaces`, `attributes` and any other key outside the supported subset.
    pub opaque: Vec<Entry>,
    pub pointer: String,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Requirement {
    pub name: String,
    pub target_node: Option<String>,
    pub capability: Option<String>,
    pub relationship: Option<String>,
    pub pointer: String,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    AnsiblePlaybook,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ArtifactRef {
    pub path: String,
    pub kind: ArtifactKind,
    pub span: Option<SourceSpan>,
}

impl ArtifactRef {
    pub fn classify(path: &str) -> ArtifactKind {
        if path.ends_with(".yml") || path.ends_with(".yaml") {
            ArtifactKind::AnsiblePlaybook
        } else {
            ArtifactKind::Other
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationshipTemplate {
    pub name: String,
    pub type_name: Option<String>,
    pub properties: Vec<Entry>,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub type_name: Option<String>,
    /// `default` for inputs, `value` for outputs.
    pub value: Option<Value>,
    pub pointer: String,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TypeOrigin {
    Declared,
    Imported,
    Normative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypeDef {
    pub name: String,
    pub derived_from: Option<String>,
    pub properties: Vec<PropertySchema>,
    pub capability_defs: Vec<CapabilityDef>,
    pub requirement_defs: Vec<RequirementDef>,
    pub origin: TypeOrigin,
    pub pointer: String,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapabilityDef {
    pub name: String,
    pub type_name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequirementDef {
    pub name: String,
    pub capability: Option<String>,
    pub node: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PropertyKind {
    String,
    Integer,
    Float,
    Boolean,
    List,
    Map,
    /// Any other TOSCA data type (scalar-unit, version, ...); not kind-checked.
    Other(String),
}

impl PropertyKind {
    pub fn parse(name: &str) -> PropertyKind {
        match name {
            "string" => PropertyKind::String,
            "integer" => PropertyKind::Integer,
            "float" => PropertyKind::Float,
            "boolean" => PropertyKind::Boolean,
            "list" => PropertyKind::List,
            "map" => PropertyKind::Map,
            other => PropertyKind::Other(other.to_owned()),
        }
    }
}

impl fmt::Display for PropertyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PropertyKind::String => "string",
            PropertyKind::Integer => "integer",
            PropertyKind::Float => "float",
            PropertyKind::Boolean => "boolean",
            PropertyKind::List => "list",
            PropertyKind::Map => "map",
            PropertyKind::Other(o) => o,
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    Min { value: f64, inclusive: bool },
    Max { value: f64, inclusive: bool },
    Enum(Vec<serde_json::Value>),
    Pattern(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertySchema {
    pub name: String,
    pub kind: PropertyKind,
    pub constraints: Vec<Constraint>,
    pub required: bool,
    pub default: Option<Value>,
}

impl TopologyModel {
    pub fn empty(file: impl Into<String>) -> Self {
        let file = file.into();
        TopologyModel {
            span: SourceSpan { file: file.clone(), start_byte: 0, end_byte: 0, start_line: 1, start_col: 1 },
            file,
            tosca_version: None,
            imports: Vec::new(),
            node_templates: Vec::new(),
            relationship_templates: Vec::new(),
            node_types: Vec::new(),
            capability_types: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Add the type definitions of an imported document.
    pub fn merge_imported(&mut self, imported: TopologyModel) {
        let retag = |mut t: TypeDef| {
            t.origin = TypeOrigin::Imported;
            t
        };
        self.node_types.extend(imported.node_types.into_iter().map(retag));
        self.capability_types.extend(imported.capability_types.into_iter().map(retag));
    }
}

/// First node template called `name`, in source order.
pub fn resolve_node<'a>(topology: &'a TopologyModel, name: &str) -> Option<&'a NodeTemplate> {
    topology.node_templates.iter().find(|n| n.name == name)
}

// ---------------------------------------------------------------------------
// Ansible playbook

#[derive(Debug, Clone, PartialEq)]
pub struct PlaybookModel {
    pub file: String,
    pub plays: Vec<Play>,
    pub line_count: usize,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Play {
    pub name: Option<String>,
    pub hosts: Option<String>,
    /// `pre_tasks`, `tasks` and `post_tasks`, in execution order.
    pub tasks: Vec<TaskNode>,
    pub handlers: Vec<TaskNode>,
    pub vars: Vec<Entry>,
    pub pointer: String,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Task,
    Block,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskNode {
    pub kind: TaskKind,
    pub name: Option<String>,
    pub module: Option<String>,
    pub module_span: Option<SourceSpan>,
    pub args: Vec<Entry>,
    pub when_expr: Option<String>,
    pub notify: Vec<String>,
    pub listen: Vec<String>,
    pub ignore_errors: bool,
    pub children: Vec<TaskNode>,
    pub rescue: Vec<TaskNode>,
    pub always: Vec<TaskNode>,
    /// Keyword entries (`vars`, `become`, `loop`, ...) as written.
    pub keywords: Vec<Entry>,
    pub pointer: String,
    pub span: SourceSpan,
}

impl TaskNode {
    /// Module name without the `ansible.builtin.` / `ansible.legacy.` prefix.
    pub fn short_module(&self) -> Option<&str> {
        self.module
            .as_deref()
            .map(|m| m.strip_prefix("ansible.builtin.").or_else(|| m.strip_prefix("ansible.legacy.")).unwrap_or(m))
    }

    pub fn keyword(&self, name: &str) -> Option<&Entry> {
        find_entry(&self.keywords, name)
    }

    pub fn arg(&self, name: &str) -> Option<&Entry> {
        find_entry(&self.args, name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    Tasks,
    Handlers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Block,
    Rescue,
    Always,
}

/// Position of a task: play index, section, index within the section and the
/// chain of block branches leading to it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskPath {
    pub play: usize,
    pub section: Section,
    pub index: usize,
    pub nested: Vec<(Branch, usize)>,
}

impl fmt::Display for TaskPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let section = match self.section {
            Section::Tasks => "tasks",
            Section::Handlers => "handlers",
        };
        write!(f, "play[{}].{}[{}]", self.play, section, self.index)?;
        for (branch, i) in &self.nested {
            let b = match branch {
                Branch::Block => "block",
                Branch::Rescue => "rescue",
                Branch::Always => "always",
            };
            write!(f, ".{b}[{i}]")?;
        }
        Ok(())
    }
}

/// Depth-first, source-order walk over every task and block of every play,
/// handlers after tasks.
pub fn iter_tasks(playbook: &PlaybookModel) -> Vec<(&TaskNode, TaskPath)> {
    fn walk<'a>(node: &'a TaskNode, path: TaskPath, out: &mut Vec<(&'a TaskNode, TaskPath)>) {
        out.push((node, path.clone()));
        for (branch, list) in
            [(Branch::Block, &node.children), (Branch::Rescue, &node.rescue), (Branch::Always, &node.always)]
        {
            for (i, child) in list.iter().enumerate() {
                let mut p = path.clone();
                p.nested.push((branch, i));
                walk(child, p, out);
            }
        }
    }

    let mut out = Vec::new();
    for (pi, play) in playbook.plays.iter().enumerate() {
        for (section, list) in [(Section::Tasks, &play.tasks), (Section::Handlers, &play.handlers)] {
            for (index, task) in list.iter().enumerate() {
                walk(task, TaskPath { play: pi, section, index, nested: Vec::new() }, &mut out);
            }
        }
    }
    out
}
