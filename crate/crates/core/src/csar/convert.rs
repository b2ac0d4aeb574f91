use crate::ir::{Entry, SourceSpan, Value, ValueKind};
use crate::span::LineIndex;
use crate::yaml::{self, Node, NodeValue};

use super::LoadError;

/// TOSCA intrinsic and built-in functions, kept as opaque references.
const TOSCA_FUNCTIONS: &[&str] = &[
    "get_input",
    "get_property",
    "get_attribute",
    "get_operation_output",
    "get_nodes_of_type",
    "get_artifact",
    "concat",
    "join",
    "token",
];

/// Per-document conversion context.
pub(crate) struct Doc<'a> {
    pub file: &'a str,
    pub text: &'a str,
    pub lines: LineIndex,
    pub tosca_functions: bool,
}

impl<'a> Doc<'a> {
    pub fn new(file: &'a str, text: &'a str, tosca_functions: bool) -> Self {
        Doc { file, text, lines: LineIndex::new(text), tosca_functions }
    }

    pub fn span(&self, start: usize, end: usize) -> SourceSpan {
        SourceSpan::new(self.file, start, end, &self.lines)
    }

    pub fn node_span(&self, node: &Node) -> SourceSpan {
        self.span(node.start, node.end)
    }

    pub fn parse_root(&self) -> Result<Node, LoadError> {
        yaml::parse(self.text).map_err(|e| LoadError::YamlSyntax {
            message: e.message,
            span: self.span(e.offset.min(self.text.len()), e.offset.min(self.text.len())),
        })
    }

    pub fn shape(&self, node: &Node, expected: &str) -> LoadError {
        LoadError::SchemaShape {
            span: self.node_span(node),
            expected: expected.to_owned(),
            found: node.kind_name().to_owned(),
        }
    }

    pub fn expect_map<'n>(&self, node: &'n Node, expected: &str) -> Result<&'n [(Node, Node)], LoadError> {
        match &node.value {
            NodeValue::Map(m) => Ok(m),
            NodeValue::Null => Ok(&[]),
            _ => Err(self.shape(node, expected)),
        }
    }

    pub fn expect_seq<'n>(&self, node: &'n Node, expected: &str) -> Result<&'n [Node], LoadError> {
        match &node.value {
            NodeValue::Seq(s) => Ok(s),
            NodeValue::Null => Ok(&[]),
            _ => Err(self.shape(node, expected)),
        }
    }

    pub fn key_text(&self, key: &Node) -> Result<String, LoadError> {
        key.scalar_text().ok_or_else(|| self.shape(key, "scalar key"))
    }

    pub fn value(&self, node: &Node, pointer: &str) -> Value {
        let span = self.node_span(node);
        let kind = match &node.value {
            NodeValue::Null => ValueKind::Null,
            NodeValue::Bool(b) => ValueKind::Bool(*b),
            NodeValue::Int(i) => ValueKind::Int(*i),
            NodeValue::Float(f) => ValueKind::Float(*f),
            NodeValue::Str(s) => ValueKind::Str(s.clone()),
            NodeValue::Seq(items) => ValueKind::Seq(
                items
                    .iter()
                    .enumerate()
                    .map(|(i, n)| self.value(n, &yaml::join_pointer(pointer, &i.to_string())))
                    .collect(),
            ),
            NodeValue::Map(entries) => {
                if self.tosca_functions && entries.len() == 1 {
                    let (k, v) = &entries[0];
                    if let Some(name) = k.as_str().filter(|n| TOSCA_FUNCTIONS.contains(n)) {
                        let args = self.value(v, &yaml::join_pointer(pointer, name));
                        return Value {
                            kind: ValueKind::Function { name: name.to_owned(), args: Box::new(args) },
                            tag: node.tag.clone(),
                            pointer: pointer.to_owned(),
                            span,
                        };
                    }
                }
                ValueKind::Map(self.entries(entries, pointer))
            }
        };
        Value { kind, tag: node.tag.clone(), pointer: pointer.to_owned(), span }
    }

    pub fn entries(&self, entries: &[(Node, Node)], pointer: &str) -> Vec<Entry> {
        entries
            .iter()
            .map(|(k, v)| {
                let key = k.scalar_text().unwrap_or_else(|| k.to_json().to_string());
                Entry { value: self.value(v, &yaml::join_pointer(pointer, &key)), key_span: self.node_span(k), key }
            })
            .collect()
    }

    pub fn entry(&self, k: &Node, v: &Node, pointer: &str) -> Entry {
        self.entries(std::slice::from_ref(&(k.clone(), v.clone())), pointer).pop().expect("one entry in, one entry out")
    }
}
