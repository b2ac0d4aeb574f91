use crate::ir::{
    ArtifactRef, CapabilityDef, Constraint, Import, NodeTemplate, Parameter, PropertyKind, PropertySchema,
    RelationshipTemplate, Requirement, RequirementDef, TopologyModel, TypeDef, TypeOrigin,
};
use crate::yaml::{join_pointer, Node, NodeValue};

use super::convert::Doc;
use super::LoadError;

/// Parse a TOSCA service template. `file` is the archive-relative path used in spans.
pub fn parse_tosca(text: &str, file: &str) -> Result<TopologyModel, LoadError> {
    let doc = Doc::new(file, text, true);
    let root = doc.parse_root()?;
    let top = doc.expect_map(&root, "mapping at document root")?;

    let mut model = TopologyModel::empty(file);
    model.span = doc.node_span(&root);

    for (k, v) in top {
        let key = doc.key_text(k)?;
        match key.as_str() {
            "tosca_definitions_version" => model.tosca_version = v.scalar_text(),
            "imports" => model.imports = parse_imports(&doc, v)?,
            "node_types" => model.node_types = parse_types(&doc, v, "node_types")?,
            "capability_types" => model.capability_types = parse_types(&doc, v, "capability_types")?,
            "topology_template" => parse_topology_template(&doc, v, &mut model)?,
            // relationship_types, data_types, policies, groups, ...: outside the supported subset
            _ => {}
        }
    }
    Ok(model)
}

fn parse_imports(doc: &Doc, node: &Node) -> Result<Vec<Import>, LoadError> {
    let mut out = Vec::new();
    for item in doc.expect_seq(node, "list of imports")? {
        let target = match &item.value {
            NodeValue::Str(s) => Some(s.clone()),
            NodeValue::Map(_) => item
                .get("file")
                .and_then(Node::as_str)
                .map(str::to_owned)
                // TOSCA 1.0 style: `- name: {file: ...}` or `- name: path`
                .or_else(|| {
                    let (_, inner) = item.as_map()?.first()?;
                    inner.as_str().map(str::to_owned).or_else(|| inner.get("file")?.as_str().map(str::to_owned))
                }),
            _ => None,
        };
        let target = target.ok_or_else(|| doc.shape(item, "import path or {file: path}"))?;
        out.push(Import { remote: target.contains("://"), target, span: doc.node_span(item) });
    }
    Ok(out)
}

fn parse_types(doc: &Doc, node: &Node, section: &str) -> Result<Vec<TypeDef>, LoadError> {
    let mut out = Vec::new();
    for (k, v) in doc.expect_map(node, "mapping of type definitions")? {
        let name = doc.key_text(k)?;
        let pointer = join_pointer(section, &name);
        let body = doc.expect_map(v, "type definition mapping")?;
        let mut def = TypeDef {
            name,
            derived_from: None,
            properties: Vec::new(),
            capability_defs: Vec::new(),
            requirement_defs: Vec::new(),
            origin: TypeOrigin::Declared,
            span: doc.span(k.start, v.end.max(k.end)),
            pointer: pointer.clone(),
        };
        for (fk, fv) in body {
            match doc.key_text(fk)?.as_str() {
                "derived_from" => def.derived_from = fv.scalar_text(),
                "properties" => def.properties = parse_property_schemas(doc, fv)?,
                "capabilities" => {
                    for (ck, cv) in doc.expect_map(fv, "mapping of capability definitions")? {
                        let type_name = match &cv.value {
                            NodeValue::Str(s) => Some(s.clone()),
                            NodeValue::Map(_) => cv.get("type").and_then(Node::as_str).map(str::to_owned),
                            _ => None,
                        };
                        // capability types themselves only declare properties
                        if let Some(type_name) = type_name {
                            def.capability_defs.push(CapabilityDef { name: doc.key_text(ck)?, type_name });
                        }
                    }
                }
                "requirements" => {
                    for item in doc.expect_seq(fv, "list of requirement definitions")? {
                        let (rk, rv) = single_entry(doc, item)?;
                        let (capability, node) = match &rv.value {
                            NodeValue::Str(s) => (Some(s.clone()), None),
                            NodeValue::Map(_) => (
                                rv.get("capability").and_then(Node::as_str).map(str::to_owned),
                                rv.get("node").and_then(Node::as_str).map(str::to_owned),
                            ),
                            _ => (None, None),
                        };
                        def.requirement_defs.push(RequirementDef { name: doc.key_text(rk)?, capability, node });
                    }
                }
                _ => {}
            }
        }
        out.push(def);
    }
    Ok(out)
}

fn parse_property_schemas(doc: &Doc, node: &Node) -> Result<Vec<PropertySchema>, LoadError> {
    let mut out = Vec::new();
    for (k, v) in doc.expect_map(node, "mapping of property definitions")? {
        let name = doc.key_text(k)?;
        doc.expect_map(v, "property definition mapping")?;
        let kind = PropertyKind::parse(v.get("type").and_then(Node::as_str).unwrap_or("string"));
        let required = !matches!(v.get("required").map(|n| &n.value), Some(NodeValue::Bool(false)));
        let default = v.get("default").map(|d| doc.value(d, ""));
        let mut constraints = Vec::new();
        if let Some(list) = v.get("constraints") {
            for c in doc.expect_seq(list, "list of constraints")? {
                let (ck, cv) = single_entry(doc, c)?;
                constraints.extend(parse_constraint(&doc.key_text(ck)?, cv));
            }
        }
        out.push(PropertySchema { name, kind, constraints, required, default });
    }
    Ok(out)
}

fn number(node: &Node) -> Option<f64> {
    match node.value {
        NodeValue::Int(i) => Some(i as f64),
        NodeValue::Float(f) => Some(f),
        _ => None,
    }
}

/// Unsupported operators (length constraints, ...) are dropped.
fn parse_constraint(op: &str, arg: &Node) -> Vec<Constraint> {
    let min = |inclusive| number(arg).map(|value| Constraint::Min { value, inclusive });
    let max = |inclusive| number(arg).map(|value| Constraint::Max { value, inclusive });
    match op {
        "greater_or_equal" => min(true).into_iter().collect(),
        "greater_than" => min(false).into_iter().collect(),
        "less_or_equal" => max(true).into_iter().collect(),
        "less_than" => max(false).into_iter().collect(),
        "in_range" => match arg.as_seq() {
            Some([lo, hi]) => [
                number(lo).map(|value| Constraint::Min { value, inclusive: true }),
                number(hi).map(|value| Constraint::Max { value, inclusive: true }),
            ]
            .into_iter()
            .flatten()
            .collect(),
            _ => Vec::new(),
        },
        "valid_values" => arg
            .as_seq()
            .map(|items| vec![Constraint::Enum(items.iter().map(Node::to_json).collect())])
            .unwrap_or_default(),
        "equal" => vec![Constraint::Enum(vec![arg.to_json()])],
        "pattern" => arg.as_str().map(|p| Constraint::Pattern(p.to_owned())).into_iter().collect(),
        _ => Vec::new(),
    }
}

fn single_entry<'n>(doc: &Doc, node: &'n Node) -> Result<(&'n Node, &'n Node), LoadError> {
    match node.as_map() {
        Some([(k, v)]) => Ok((k, v)),
        _ => Err(doc.shape(node, "single-key mapping")),
    }
}

fn parse_topology_template(doc: &Doc, node: &Node, model: &mut TopologyModel) -> Result<(), LoadError> {
    for (k, v) in doc.expect_map(node, "topology_template mapping")? {
        let key = doc.key_text(k)?;
        let base = join_pointer("topology_template", &key);
        match key.as_str() {
            "inputs" | "outputs" => {
                let mut params = Vec::new();
                for (pk, pv) in doc.expect_map(v, "mapping of parameters")? {
                    let name = doc.key_text(pk)?;
                    let pointer = join_pointer(&base, &name);
                    let field = if key == "inputs" { "default" } else { "value" };
                    let (type_name, value) = match &pv.value {
                        NodeValue::Map(_) => (
                            pv.get("type").and_then(Node::as_str).map(str::to_owned),
                            pv.get(field).map(|d| doc.value(d, &join_pointer(&pointer, field))),
                        ),
                        _ => (None, Some(doc.value(pv, &pointer))),
                    };
                    params.push(Parameter {
                        name,
                        type_name,
                        value,
                        span: doc.span(pk.start, pv.end.max(pk.end)),
                        pointer,
                    });
                }
                if key == "inputs" {
                    model.inputs = params;
                } else {
                    model.outputs = params;
                }
            }
            "node_templates" => {
                let entries = match &v.value {
                    NodeValue::Map(m) => m.as_slice(),
                    NodeValue::Null => &[],
                    _ => return Err(doc.shape(v, "mapping of node templates")),
                };
                for (nk, nv) in entries {
                    model.node_templates.push(parse_node_template(doc, nk, nv, &base)?);
                }
            }
            "relationship_templates" => {
                for (rk, rv) in doc.expect_map(v, "mapping of relationship templates")? {
                    let name = doc.key_text(rk)?;
                    let pointer = join_pointer(&base, &name);
                    let properties = match rv.get("properties") {
                        Some(p) => {
                            let m = doc.expect_map(p, "property mapping")?;
                            doc.entries(m, &join_pointer(&pointer, "properties"))
                        }
                        None => Vec::new(),
                    };
                    model.relationship_templates.push(RelationshipTemplate {
                        name,
                        type_name: rv.get("type").and_then(Node::as_str).map(str::to_owned),
                        properties,
                        span: doc.span(rk.start, rv.end.max(rk.end)),
                    });
                }
            }
            _ => {}
        }
    }
    Ok(())
}

fn parse_node_template(doc: &Doc, key: &Node, body: &Node, base: &str) -> Result<NodeTemplate, LoadError> {
    let name = doc.key_text(key)?;
    let pointer = join_pointer(base, &name);
    let fields = doc.expect_map(body, "node template mapping")?;
    let mut node = NodeTemplate {
        name,
        type_name: String::new(),
        properties: Vec::new(),
        requirements: Vec::new(),
        capabilities: Vec::new(),
        artifacts: Vec::new(),
        opaque: Vec::new(),
        span: doc.span(key.start, body.end.max(key.end)),
        pointer: pointer.clone(),
    };
    let mut has_type = false;
    for (fk, fv) in fields {
        let field = doc.key_text(fk)?;
        let fp = join_pointer(&pointer, &field);
        match field.as_str() {
            "type" => {
                node.type_name = fv.as_str().ok_or_else(|| doc.shape(fv, "type name"))?.to_owned();
                has_type = true;
            }
            "properties" => node.properties = doc.entries(doc.expect_map(fv, "property mapping")?, &fp),
            "capabilities" => node.capabilities = doc.entries(doc.expect_map(fv, "capability mapping")?, &fp),
            "requirements" => {
                for (i, item) in doc.expect_seq(fv, "list of requirements")?.iter().enumerate() {
                    let (rk, rv) = single_entry(doc, item)?;
                    let (target_node, capability, relationship) = match &rv.value {
                        NodeValue::Str(s) => (Some(s.clone()), None, None),
                        NodeValue::Map(_) => {
                            let text = |k: &str| rv.get(k).and_then(Node::as_str).map(str::to_owned);
                            // `relationship` may also be an inline {type: ...} definition
                            let rel = text("relationship")
                                .or_else(|| rv.get("relationship")?.get("type")?.as_str().map(str::to_owned));
                            (text("node"), text("capability"), rel)
                        }
                        _ => return Err(doc.shape(rv, "requirement target or assignment mapping")),
                    };
                    node.requirements.push(Requirement {
                        name: doc.key_text(rk)?,
                        target_node,
                        capability,
                        relationship,
                        pointer: join_pointer(&fp, &i.to_string()),
                        span: doc.node_span(item),
                    });
                }
            }
            "artifacts" => {
                for (_, av) in doc.expect_map(fv, "artifact mapping")? {
                    let path = match &av.value {
                        NodeValue::Str(s) => Some(s.clone()),
                        NodeValue::Map(_) => av.get("file").and_then(Node::as_str).map(str::to_owned),
                        _ => None,
                    };
                    let path = path.ok_or_else(|| doc.shape(av, "artifact path or {file: path}"))?;
                    node.artifacts.push(ArtifactRef {
                        kind: ArtifactRef::classify(&path),
                        path,
                        span: Some(doc.node_span(av)),
                    });
                }
            }
            _ => node.opaque.push(doc.entry(fk, fv, &pointer)),
        }
    }
    if !has_type {
        return Err(LoadError::SchemaShape {
            span: node.span.clone(),
            expected: "node template with a `type`".into(),
            found: "no type".into(),
        });
    }
    Ok(node)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{resolve_node, ValueKind};

    const THREE: &str = "\
tosca_definitions_version: tosca_simple_yaml_1_3
node_types:
  my.App:
    derived_from: tosca.nodes.SoftwareComponent
    properties:
      port:
        type: integer
        constraints:
          - in_range: [1, 65535]
topology_template:
  inputs:
    db_pass:
      type: string
  node_templates:
    app:
      type: my.App
      properties:
        port: 8080
        secret: { get_input: db_pass }
      requirements:
        - host: vm
        - database:
            node: db
            capability: tosca.capabilities.Endpoint.Database
      artifacts:
        install: playbooks/app.yml
    db:
      type: tosca.nodes.Database
    vm:
      type: tosca.nodes.Compute
";

    #[test]
    fn parses_minimal_template() {
        let text = "topology_template:\n  node_templates:\n    a:\n      type: tosca.nodes.Compute\n";
        let t = parse_tosca(text, "s.yaml").unwrap();
        assert_eq!(t.node_templates.len(), 1);
        assert_eq!(t.node_templates[0].pointer, "topology_template/node_templates/a");
        assert_eq!(t.node_templates[0].span.slice(text), "a:\n      type: tosca.nodes.Compute");
    }

    #[test]
    fn fixture_has_two_requirements() {
        let t = parse_tosca(THREE, "s.yaml").unwrap();
        assert_eq!(t.node_templates.len(), 3);
        let edges: usize = t.node_templates.iter().map(|n| n.requirements.len()).sum();
        assert_eq!(edges, 2);
        let app = resolve_node(&t, "app").unwrap();
        assert_eq!(app.requirements[1].target_node.as_deref(), Some("db"));
        assert_eq!(app.requirements[1].capability.as_deref(), Some("tosca.capabilities.Endpoint.Database"));
        assert!(matches!(app.properties[1].value.kind, ValueKind::Function { .. }));
        assert_eq!(app.artifacts[0].path, "playbooks/app.yml");
        let schema = &t.node_types[0].properties[0];
        assert_eq!(schema.kind, PropertyKind::Integer);
        assert_eq!(schema.constraints.len(), 2);
    }

    #[test]
    fn node_templates_as_list_is_shape_error() {
        let text = "topology_template:\n  node_templates:\n    - a\n";
        match parse_tosca(text, "s.yaml").unwrap_err() {
            LoadError::SchemaShape { span, found, .. } => {
                assert_eq!(found, "sequence");
                assert_eq!(span.slice(text), "- a");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_templates_are_kept_in_order() {
        let text = "topology_template:\n  node_templates:\n    a: {type: X}\n    a: {type: Y}\n";
        let t = parse_tosca(text, "s.yaml").unwrap();
        assert_eq!(t.node_templates.len(), 2);
        assert_eq!(resolve_node(&t, "a").unwrap().type_name, "X");
        assert!(resolve_node(&t, "c").is_none());
    }

    #[test]
    fn remote_imports_are_flagged() {
        let t = parse_tosca("imports:\n  - https://example.org/types.yaml\n  - file: local.yaml\n", "s.yaml").unwrap();
        assert!(t.imports[0].remote);
        assert!(!t.imports[1].remote);
        assert_eq!(t.imports[1].target, "local.yaml");
    }

    #[test]
    fn yaml_errors_carry_span_in_file() {
        let err = parse_tosca("a: [1,\n", "bad.yaml").unwrap_err();
        match err {
            LoadError::YamlSyntax { span, .. } => assert_eq!(span.file, "bad.yaml"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
