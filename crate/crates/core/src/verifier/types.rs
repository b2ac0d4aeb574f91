//! Type environment: declared, imported and normative TOSCA types.

use std::collections::{BTreeSet, HashMap};

use crate::ir::{CapabilityDef, PropertySchema, RequirementDef, TopologyModel, TypeDef, TypeOrigin};
use crate::span::SourceSpan;

type Pairs = &'static [(&'static str, &'static str)];

/// (name, derived_from, capabilities, requirements) of the normative node
/// types. Normative types carry no property schemas here.
const NORMATIVE_NODES: &[(&str, Option<&str>, Pairs, Pairs)] = &[
    ("tosca.nodes.Root", None, &[("feature", "tosca.capabilities.Node")], &[("dependency", "tosca.capabilities.Node")]),
    (
        "tosca.nodes.Compute",
        Some("tosca.nodes.Root"),
        &[
            ("host", "tosca.capabilities.Compute"),
            ("endpoint", "tosca.capabilities.Endpoint.Admin"),
            ("os", "tosca.capabilities.OperatingSystem"),
            ("scalable", "tosca.capabilities.Scalable"),
            ("binding", "tosca.capabilities.network.Bindable"),
        ],
        &[("local_storage", "tosca.capabilities.Attachment")],
    ),
    ("tosca.nodes.SoftwareComponent", Some("tosca.nodes.Root"), &[], &[("host", "tosca.capabilities.Compute")]),
    (
        "tosca.nodes.WebServer",
        Some("tosca.nodes.SoftwareComponent"),
        &[
            ("data_endpoint", "tosca.capabilities.Endpoint"),
            ("admin_endpoint", "tosca.capabilities.Endpoint.Admin"),
            ("host", "tosca.capabilities.Container"),
        ],
        &[],
    ),
    (
        "tosca.nodes.WebApplication",
        Some("tosca.nodes.Root"),
        &[("app_endpoint", "tosca.capabilities.Endpoint")],
        &[("host", "tosca.capabilities.Container")],
    ),
    ("tosca.nodes.DBMS", Some("tosca.nodes.SoftwareComponent"), &[("host", "tosca.capabilities.Container")], &[]),
    (
        "tosca.nodes.Database",
        Some("tosca.nodes.Root"),
        &[("database_endpoint", "tosca.capabilities.Endpoint.Database")],
        &[("host", "tosca.capabilities.Container")],
    ),
    (
        "tosca.nodes.Storage.ObjectStorage",
        Some("tosca.nodes.Root"),
        &[("storage_endpoint", "tosca.capabilities.Endpoint")],
        &[],
    ),
    (
        "tosca.nodes.Storage.BlockStorage",
        Some("tosca.nodes.Root"),
        &[("attachment", "tosca.capabilities.Attachment")],
        &[],
    ),
    (
        "tosca.nodes.Container.Runtime",
        Some("tosca.nodes.SoftwareComponent"),
        &[("host", "tosca.capabilities.Container"), ("scalable", "tosca.capabilities.Scalable")],
        &[],
    ),
    ("tosca.nodes.Container.Application", Some("tosca.nodes.Root"), &[], &[("host", "tosca.capabilities.Container")]),
    (
        "tosca.nodes.LoadBalancer",
        Some("tosca.nodes.Root"),
        &[("client", "tosca.capabilities.Endpoint.Public")],
        &[("application", "tosca.capabilities.Endpoint")],
    ),
    ("tosca.nodes.network.Network", Some("tosca.nodes.Root"), &[("link", "tosca.capabilities.network.Linkable")], &[]),
    (
        "tosca.nodes.network.Port",
        Some("tosca.nodes.Root"),
        &[],
        &[("link", "tosca.capabilities.network.Linkable"), ("binding", "tosca.capabilities.network.Bindable")],
    ),
];

const NORMATIVE_CAPABILITIES: &[(&str, Option<&str>)] = &[
    ("tosca.capabilities.Root", None),
    ("tosca.capabilities.Node", Some("tosca.capabilities.Root")),
    ("tosca.capabilities.Container", Some("tosca.capabilities.Root")),
    ("tosca.capabilities.Compute", Some("tosca.capabilities.Container")),
    ("tosca.capabilities.Endpoint", Some("tosca.capabilities.Root")),
    ("tosca.capabilities.Endpoint.Public", Some("tosca.capabilities.Endpoint")),
    ("tosca.capabilities.Endpoint.Admin", Some("tosca.capabilities.Endpoint")),
    ("tosca.capabilities.Endpoint.Database", Some("tosca.capabilities.Endpoint")),
    ("tosca.capabilities.Attachment", Some("tosca.capabilities.Root")),
    ("tosca.capabilities.OperatingSystem", Some("tosca.capabilities.Root")),
    ("tosca.capabilities.Scalable", Some("tosca.capabilities.Root")),
    ("tosca.capabilities.network.Bindable", Some("tosca.capabilities.Node")),
    ("tosca.capabilities.network.Linkable", Some("tosca.capabilities.Node")),
];

fn normative_span() -> SourceSpan {
    SourceSpan { file: String::new(), start_byte: 0, end_byte: 0, start_line: 1, start_col: 1 }
}

fn normative_nodes() -> Vec<TypeDef> {
    NORMATIVE_NODES
        .iter()
        .map(|(name, parent, caps, reqs)| TypeDef {
            name: (*name).into(),
            derived_from: parent.map(Into::into),
            properties: Vec::new(),
            capability_defs: caps
                .iter()
                .map(|(n, t)| CapabilityDef { name: (*n).into(), type_name: (*t).into() })
                .collect(),
            requirement_defs: reqs
                .iter()
                .map(|(n, c)| RequirementDef { name: (*n).into(), capability: Some((*c).into()), node: None })
                .collect(),
            origin: TypeOrigin::Normative,
            pointer: String::new(),
            span: normative_span(),
        })
        .collect()
}

fn normative_capabilities() -> Vec<TypeDef> {
    NORMATIVE_CAPABILITIES
        .iter()
        .map(|(name, parent)| TypeDef {
            name: (*name).into(),
            derived_from: parent.map(Into::into),
            properties: Vec::new(),
            capability_defs: Vec::new(),
            requirement_defs: Vec::new(),
            origin: TypeOrigin::Normative,
            pointer: String::new(),
            span: normative_span(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TypeFamily {
    Node,
    Capability,
}

impl TypeFamily {
    fn prefix(self) -> &'static str {
        match self {
            TypeFamily::Node => "tosca.nodes.",
            TypeFamily::Capability => "tosca.capabilities.",
        }
    }
}

/// Lookup table over one type family. The first definition of a name wins,
/// declared and imported types shadowing normative ones.
pub struct TypeTable {
    family: TypeFamily,
    types: Vec<TypeDef>,
    index: HashMap<String, usize>,
}

impl TypeTable {
    fn new(family: TypeFamily, defined: &[TypeDef]) -> Self {
        let normative = match family {
            TypeFamily::Node => normative_nodes(),
            TypeFamily::Capability => normative_capabilities(),
        };
        let types: Vec<TypeDef> = defined.iter().cloned().chain(normative).collect();
        let mut index = HashMap::new();
        for (i, t) in types.iter().enumerate() {
            index.entry(t.name.clone()).or_insert(i);
        }
        TypeTable { family, types, index }
    }

    /// Resolve full names, `tosca:Short` names and bare normative short names.
    pub fn get(&self, name: &str) -> Option<&TypeDef> {
        let short = name.strip_prefix("tosca:").unwrap_or(name);
        self.index
            .get(name)
            .or_else(|| self.index.get(&format!("{}{short}", self.family.prefix())))
            .map(|&i| &self.types[i])
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    /// The type followed by its ancestors, stopping at the first repeat or
    /// unknown parent.
    pub fn ancestry(&self, name: &str) -> Vec<&TypeDef> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        let mut current = self.get(name);
        while let Some(t) = current {
            if !seen.insert(t.name.as_str()) {
                break;
            }
            out.push(t);
            current = t.derived_from.as_deref().and_then(|p| self.get(p));
        }
        out
    }

    /// Nominal subtyping through `derived_from`.
    pub fn derives_from(&self, name: &str, ancestor: &str) -> bool {
        let Some(target) = self.get(ancestor) else { return false };
        self.ancestry(name).iter().any(|t| t.name == target.name)
    }

    pub fn user_types(&self) -> impl Iterator<Item = &TypeDef> {
        self.types.iter().filter(|t| t.origin != TypeOrigin::Normative)
    }
}

pub struct TypeEnv {
    pub nodes: TypeTable,
    pub capabilities: TypeTable,
}

impl TypeEnv {
    pub fn new(topology: &TopologyModel) -> Self {
        TypeEnv {
            nodes: TypeTable::new(TypeFamily::Node, &topology.node_types),
            capabilities: TypeTable::new(TypeFamily::Capability, &topology.capability_types),
        }
    }

    /// Property schemas visible on a node type, nearest definition first.
    pub fn properties(&self, node_type: &str) -> Vec<&PropertySchema> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for t in self.nodes.ancestry(node_type) {
            for p in &t.properties {
                if seen.insert(p.name.as_str()) {
                    out.push(p);
                }
            }
        }
        out
    }

    pub fn capabilities_of(&self, node_type: &str) -> Vec<&CapabilityDef> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for t in self.nodes.ancestry(node_type) {
            for c in &t.capability_defs {
                if seen.insert(c.name.as_str()) {
                    out.push(c);
                }
            }
        }
        out
    }

    pub fn requirement_def(&self, node_type: &str, name: &str) -> Option<&RequirementDef> {
        self.nodes.ancestry(node_type).into_iter().find_map(|t| t.requirement_defs.iter().find(|r| r.name == name))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normative_subtyping() {
        let env = TypeEnv::new(&TopologyModel::empty("t.yaml"));
        assert!(env.capabilities.derives_from("tosca.capabilities.Compute", "tosca.capabilities.Container"));
        assert!(!env.capabilities.derives_from("tosca.capabilities.Container", "tosca.capabilities.Compute"));
        assert!(env.nodes.derives_from("tosca.nodes.DBMS", "tosca.nodes.Root"));
        assert!(env.nodes.contains("Compute"));
        assert!(env.nodes.contains("tosca:WebServer"));
        let caps: Vec<_> = env.capabilities_of("tosca.nodes.WebServer").iter().map(|c| c.name.clone()).collect();
        assert!(caps.contains(&"feature".to_string()));
        assert_eq!(
            env.requirement_def("tosca.nodes.DBMS", "host").and_then(|r| r.capability.clone()).as_deref(),
            Some("tosca.capabilities.Compute")
        );
    }
}
