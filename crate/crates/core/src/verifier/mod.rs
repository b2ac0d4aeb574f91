//! Structural verification of TOSCA topologies (rules E001-E007).

mod graph;
mod types;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use regex::Regex;
use serde_json::{json, Value as Json};

use crate::catalog::{Catalog, DefectEntry, RuleConfig};
use crate::finding::{normalize, Finding, Target};
use crate::ir::{Constraint, NodeTemplate, PropertyKind, PropertySchema, TopologyModel, Value, ValueKind};
use crate::yaml::join_pointer;

pub use graph::{dependency_graph, detect_cycles, DependencyGraph, Edge};
pub use types::{TypeEnv, TypeFamily, TypeTable};

/// Run every enabled topology rule of the catalog.
pub fn verify_topology(topology: &TopologyModel, catalog: &Catalog, config: &RuleConfig) -> Vec<Finding> {
    let env = TypeEnv::new(topology);
    let mut out = Vec::new();
    for entry in catalog.entries_for(Target::Tosca).filter(|e| config.is_enabled(&e.rule_id)) {
        let mut emit = |message: String, span, subject: String, data| {
            out.push(catalog.finding(entry, message, span, subject, data));
        };
        let ctx = Ctx { topology, env: &env, entry };
        match entry.detection.detector.as_str() {
            "dangling_requirement" => ctx.dangling(&mut emit),
            "capability_mismatch" => ctx.capability_mismatch(&mut emit),
            "undefined_type" => ctx.undefined_types(&mut emit),
            "inheritance_cycle" => ctx.inheritance_cycles(&mut emit),
            "missing_property" => ctx.missing_properties(&mut emit),
            "property_constraint" => ctx.property_constraints(&mut emit),
            "dependency_cycle" => ctx.dependency_cycles(&mut emit),
            "duplicate_template" => ctx.duplicates(&mut emit),
            _ => {}
        }
    }
    normalize(&mut out);
    out
}

type Emit<'a> = dyn FnMut(String, crate::span::SourceSpan, String, BTreeMap<String, Json>) + 'a;

struct Ctx<'a> {
    topology: &'a TopologyModel,
    env: &'a TypeEnv,
    #[allow(dead_code)]
    entry: &'a DefectEntry,
}

fn data<const N: usize>(pairs: [(&str, Json); N]) -> BTreeMap<String, Json> {
    pairs.into_iter().map(|(k, v)| (k.to_owned(), v)).collect()
}

impl Ctx<'_> {
    fn templates(&self) -> impl Iterator<Item = &NodeTemplate> {
        self.topology.node_templates.iter()
    }

    fn has_template(&self, name: &str) -> bool {
        self.templates().any(|n| n.name == name)
    }

    /// Templates with a known type; those with unknown types are E003's business.
    fn typed_templates(&self) -> impl Iterator<Item = &NodeTemplate> {
        self.templates().filter(|n| self.env.nodes.contains(&n.type_name))
    }

    fn dangling(&self, emit: &mut Emit<'_>) {
        for node in self.templates() {
            for req in &node.requirements {
                let Some(target) = req.target_node.as_deref() else { continue };
                // a type name is an abstract requirement for the orchestrator to fulfil
                if self.has_template(target) || self.env.nodes.contains(target) {
                    continue;
                }
                emit(
                    format!("requirement `{}` of `{}` targets unknown node `{target}`", req.name, node.name),
                    req.span.clone(),
                    req.pointer.clone(),
                    data([("target", json!(target))]),
                );
            }
        }
    }

    fn required_capability(&self, node: &NodeTemplate, req: &crate::ir::Requirement) -> Option<String> {
        req.capability
            .clone()
            .or_else(|| self.env.requirement_def(&node.type_name, &req.name).and_then(|d| d.capability.clone()))
    }

    fn capability_mismatch(&self, emit: &mut Emit<'_>) {
        for node in self.typed_templates() {
            for req in &node.requirements {
                let Some(target_name) = req.target_node.as_deref() else { continue };
                let Some(target) = crate::ir::resolve_node(self.topology, target_name) else { continue };
                if !self.env.nodes.contains(&target.type_name) {
                    continue;
                }
                let Some(required) = self.required_capability(node, req) else { continue };
                let offered = self.env.capabilities_of(&target.type_name);
                let ok = if self.env.capabilities.contains(&required) {
                    offered.iter().any(|c| self.env.capabilities.derives_from(&c.type_name, &required))
                } else if required.contains('.') {
                    // unknown capability type: reported by E003
                    continue;
                } else {
                    offered.iter().any(|c| c.name == required)
                };
                if !ok {
                    emit(
                        format!(
                            "`{target_name}` ({}) offers no capability compatible with `{required}` required by `{}.{}`",
                            target.type_name, node.name, req.name
                        ),
                        req.span.clone(),
                        req.pointer.clone(),
                        data([
                            ("expected", json!(required)),
                            ("found", json!(offered.iter().map(|c| c.type_name.clone()).collect::<Vec<_>>())),
                            ("target", json!(target_name)),
                        ]),
                    );
                }
            }
        }
    }

    fn undefined_types(&self, emit: &mut Emit<'_>) {
        for import in &self.topology.imports {
            let note = if import.remote { "remote imports are not fetched" } else { "import not found in archive" };
            // local imports that resolved were merged by the loader and carry no marker here,
            // so only remote ones can be judged without the archive
            if import.remote {
                emit(
                    format!("types from import `{}` are unavailable: {note}", import.target),
                    import.span.clone(),
                    format!("imports/{}", import.target),
                    data([("import", json!(import.target)), ("note", json!(note))]),
                );
            }
        }
        for node in self.templates() {
            if !self.env.nodes.contains(&node.type_name) {
                emit(
                    format!("node template `{}` has undefined type `{}`", node.name, node.type_name),
                    node.span.clone(),
                    join_pointer(&node.pointer, "type"),
                    data([("type", json!(node.type_name))]),
                );
            }
            for req in &node.requirements {
                if let Some(cap) = req.capability.as_deref().filter(|c| c.contains('.')) {
                    if !self.env.capabilities.contains(cap) {
                        emit(
                            format!(
                                "requirement `{}` of `{}` names undefined capability type `{cap}`",
                                req.name, node.name
                            ),
                            req.span.clone(),
                            join_pointer(&req.pointer, "capability"),
                            data([("type", json!(cap))]),
                        );
                    }
                }
            }
        }
        for (table, family) in [(&self.env.nodes, "node"), (&self.env.capabilities, "capability")] {
            for t in table.user_types() {
                if let Some(parent) = t.derived_from.as_deref().filter(|p| !table.contains(p)) {
                    emit(
                        format!("{family} type `{}` derives from undefined type `{parent}`", t.name),
                        t.span.clone(),
                        join_pointer(&t.pointer, "derived_from"),
                        data([("type", json!(parent))]),
                    );
                }
                for cap in &t.capability_defs {
                    if !self.env.capabilities.contains(&cap.type_name) {
                        emit(
                            format!("capability `{}` of `{}` has undefined type `{}`", cap.name, t.name, cap.type_name),
                            t.span.clone(),
                            join_pointer(&join_pointer(&t.pointer, "capabilities"), &cap.name),
                            data([("type", json!(cap.type_name))]),
                        );
                    }
                }
            }
        }
    }

    fn inheritance_cycles(&self, emit: &mut Emit<'_>) {
        for table in [&self.env.nodes, &self.env.capabilities] {
            let mut reported = BTreeSet::new();
            for t in table.user_types() {
                let chain = table.ancestry(&t.name);
                let Some(last) = chain.last() else { continue };
                let Some(parent) = last.derived_from.as_deref().and_then(|p| table.get(p)) else { continue };
                // ancestry stopped at a repeat: the cycle starts where `parent` sits on the chain
                let Some(pos) = chain.iter().position(|c| c.name == parent.name) else { continue };
                let mut cycle: Vec<&str> = chain[pos..].iter().map(|c| c.name.as_str()).collect();
                let min = cycle.iter().enumerate().min_by_key(|(_, n)| **n).map(|(i, _)| i).unwrap_or(0);
                cycle.rotate_left(min);
                if !reported.insert(cycle.join("\u{0}")) {
                    continue;
                }
                let head = table.get(cycle[0]).expect("cycle member exists");
                emit(
                    format!("type inheritance cycle: {} -> {}", cycle.join(" -> "), cycle[0]),
                    head.span.clone(),
                    join_pointer(&head.pointer, "derived_from"),
                    data([("cycle", json!(cycle))]),
                );
            }
        }
    }

    fn missing_properties(&self, emit: &mut Emit<'_>) {
        for node in self.typed_templates() {
            for schema in self.env.properties(&node.type_name) {
                if !schema.required || schema.default.is_some() {
                    continue;
                }
                if node.properties.iter().any(|p| p.key == schema.name) {
                    continue;
                }
                emit(
                    format!("node template `{}` lacks required property `{}`", node.name, schema.name),
                    node.span.clone(),
                    join_pointer(&join_pointer(&node.pointer, "properties"), &schema.name),
                    data([("property", json!(schema.name)), ("type", json!(node.type_name))]),
                );
            }
        }
    }

    fn property_constraints(&self, emit: &mut Emit<'_>) {
        let mut regexes: HashMap<String, Option<Regex>> = HashMap::new();
        for node in self.typed_templates() {
            let schemas = self.env.properties(&node.type_name);
            for prop in &node.properties {
                let Some(schema) = schemas.iter().find(|s| s.name == prop.key) else { continue };
                if let Some(problem) = check_property(schema, &prop.value, &mut regexes) {
                    emit(
                        format!("property `{}` of `{}`: {problem}", prop.key, node.name),
                        prop.value.span.clone(),
                        prop.value.pointer.clone(),
                        data([
                            ("property", json!(prop.key)),
                            ("expected", json!(schema.kind.to_string())),
                            ("found", prop.value.to_json()),
                        ]),
                    );
                }
            }
        }
    }

    fn dependency_cycles(&self, emit: &mut Emit<'_>) {
        let graph = dependency_graph(self.topology);
        for cycle in detect_cycles(&graph) {
            let head = crate::ir::resolve_node(self.topology, &cycle[0]).expect("cycle vertices are templates");
            let mut shown = cycle.clone();
            shown.push(cycle[0].clone());
            emit(
                format!("dependency cycle: {}", shown.join(" -> ")),
                head.span.clone(),
                head.pointer.clone(),
                data([("cycle", json!(cycle))]),
            );
        }
    }

    fn duplicates(&self, emit: &mut Emit<'_>) {
        let mut seen = BTreeSet::new();
        for node in self.templates() {
            if !seen.insert(node.name.as_str()) {
                let first = crate::ir::resolve_node(self.topology, &node.name).expect("seen before");
                emit(
                    format!("node template `{}` is defined more than once", node.name),
                    node.span.clone(),
                    node.pointer.clone(),
                    data([("first_line", json!(first.span.start_line))]),
                );
            }
        }
    }
}

fn number(value: &Value) -> Option<f64> {
    match value.kind {
        ValueKind::Int(i) => Some(i as f64),
        ValueKind::Float(f) => Some(f),
        _ => None,
    }
}

fn json_equal(a: &Json, b: &Json) -> bool {
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) => x == y,
        _ => a == b,
    }
}

/// First violation of a property's definition, if any. Function references
/// and nulls are not checked.
fn check_property(
    schema: &PropertySchema,
    value: &Value,
    regexes: &mut HashMap<String, Option<Regex>>,
) -> Option<String> {
    if value.is_function() || matches!(value.kind, ValueKind::Null) {
        return None;
    }
    let kind_ok = match &schema.kind {
        PropertyKind::String => matches!(value.kind, ValueKind::Str(_)),
        PropertyKind::Integer => matches!(value.kind, ValueKind::Int(_)),
        PropertyKind::Float => matches!(value.kind, ValueKind::Int(_) | ValueKind::Float(_)),
        PropertyKind::Boolean => matches!(value.kind, ValueKind::Bool(_)),
        PropertyKind::List => matches!(value.kind, ValueKind::Seq(_)),
        PropertyKind::Map => matches!(value.kind, ValueKind::Map(_)),
        PropertyKind::Other(_) => return None,
    };
    if !kind_ok {
        return Some(format!("expected {}, found {}", schema.kind, value.kind_name()));
    }
    for c in &schema.constraints {
        match c {
            Constraint::Min { value: min, inclusive } => {
                if let Some(x) = number(value) {
                    if x < *min || (!inclusive && x == *min) {
                        let op = if *inclusive { ">=" } else { ">" };
                        return Some(format!("{x} violates {op} {min}"));
                    }
                }
            }
            Constraint::Max { value: max, inclusive } => {
                if let Some(x) = number(value) {
                    if x > *max || (!inclusive && x == *max) {
                        let op = if *inclusive { "<=" } else { "<" };
                        return Some(format!("{x} violates {op} {max}"));
                    }
                }
            }
            Constraint::Enum(allowed) => {
                let v = value.to_json();
                if !allowed.iter().any(|a| json_equal(a, &v)) {
                    return Some(format!("{v} is not one of {}", Json::from(allowed.clone())));
                }
            }
            Constraint::Pattern(p) => {
                let Some(s) = value.as_str() else { continue };
                let re = regexes.entry(p.clone()).or_insert_with(|| Regex::new(&format!("^(?:{p})$")).ok());
                if re.as_ref().is_some_and(|re| !re.is_match(s)) {
                    return Some(format!("`{s}` does not match pattern `{p}`"));
                }
            }
        }
    }
    None
}
