//! Span-preserving YAML document tree.
//!
//! Every node records the byte range it occupies in the source so analyses can
//! report precise locations and fixes can be expressed as text edits. Plain
//! scalars are resolved with YAML 1.1 rules (`yes`/`no`/`on`/`off` are booleans)
//! since that is what Ansible's loader does.

use std::collections::HashMap;

use saphyr_parser::{Event, Parser, ScalarStyle};
use serde_json::{Map as JsonMap, Number, Value as Json};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message} at byte {offset}")]
pub struct YamlError {
    pub message: String,
    pub offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Plain,
    SingleQuoted,
    DoubleQuoted,
    Literal,
    Folded,
    BlockMap,
    BlockSeq,
    FlowMap,
    FlowSeq,
}

impl Style {
    pub fn is_flow(self) -> bool {
        matches!(self, Style::FlowMap | Style::FlowSeq)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeValue {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Seq(Vec<Node>),
    Map(Vec<(Node, Node)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub value: NodeValue,
    pub start: usize,
    pub end: usize,
    pub style: Style,
    pub tag: Option<String>,
}

impl Node {
    pub fn as_str(&self) -> Option<&str> {
        match &self.value {
            NodeValue::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_map(&self) -> Option<&[(Node, Node)]> {
        match &self.value {
            NodeValue::Map(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_seq(&self) -> Option<&[Node]> {
        match &self.value {
            NodeValue::Seq(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self.value, NodeValue::Null)
    }

    /// Scalar rendered as text, for keys and free-form values.
    pub fn scalar_text(&self) -> Option<String> {
        match &self.value {
            NodeValue::Null => Some(String::new()),
            NodeValue::Bool(b) => Some(b.to_string()),
            NodeValue::Int(i) => Some(i.to_string()),
            NodeValue::Float(f) => Some(f.to_string()),
            NodeValue::Str(s) => Some(s.clone()),
            _ => None,
        }
    }

    /// First entry whose key is the scalar `key`.
    pub fn get(&self, key: &str) -> Option<&Node> {
        self.get_entry(key).map(|(_, v)| v)
    }

    pub fn get_entry(&self, key: &str) -> Option<(&Node, &Node)> {
        self.as_map()?.iter().find(|(k, _)| k.scalar_text().as_deref() == Some(key)).map(|(k, v)| (k, v))
    }

    pub fn kind_name(&self) -> &'static str {
        match self.value {
            NodeValue::Null => "null",
            NodeValue::Bool(_) => "boolean",
            NodeValue::Int(_) => "integer",
            NodeValue::Float(_) => "float",
            NodeValue::Str(_) => "string",
            NodeValue::Seq(_) => "sequence",
            NodeValue::Map(_) => "mapping",
        }
    }

    /// Follow a `/`-separated pointer of mapping keys and sequence indices.
    /// Segments use JSON-pointer escaping (`~0` for `~`, `~1` for `/`).
    pub fn resolve(&self, pointer: &str) -> Option<&Node> {
        let mut cur = self;
        for seg in split_pointer(pointer) {
            cur = match &cur.value {
                NodeValue::Map(_) => cur.get(&seg)?,
                NodeValue::Seq(items) => items.get(seg.parse::<usize>().ok()?)?,
                _ => return None,
            };
        }
        Some(cur)
    }

    /// Plain-data view without spans, for comparing structure.
    pub fn to_json(&self) -> Json {
        match &self.value {
            NodeValue::Null => Json::Null,
            NodeValue::Bool(b) => Json::Bool(*b),
            NodeValue::Int(i) => Json::Number((*i).into()),
            NodeValue::Float(f) => Number::from_f64(*f).map(Json::Number).unwrap_or(Json::Null),
            NodeValue::Str(s) => Json::String(s.clone()),
            NodeValue::Seq(items) => Json::Array(items.iter().map(Node::to_json).collect()),
            NodeValue::Map(entries) => {
                let mut m = JsonMap::new();
                for (k, v) in entries {
                    let key = k.scalar_text().unwrap_or_else(|| k.to_json().to_string());
                    m.entry(key).or_insert_with(|| v.to_json());
                }
                Json::Object(m)
            }
        }
    }
}

pub fn split_pointer(pointer: &str) -> Vec<String> {
    if pointer.is_empty() {
        return Vec::new();
    }
    pointer.split('/').map(|s| s.replace("~1", "/").replace("~0", "~")).collect()
}

pub fn escape_segment(seg: &str) -> String {
    seg.replace('~', "~0").replace('/', "~1")
}

pub fn join_pointer(base: &str, seg: &str) -> String {
    if base.is_empty() {
        escape_segment(seg)
    } else {
        format!("{base}/{}", escape_segment(seg))
    }
}

enum Frame {
    Seq {
        start: usize,
        flow: bool,
        anchor: usize,
        tag: Option<String>,
        items: Vec<Node>,
    },
    Map {
        start: usize,
        flow: bool,
        anchor: usize,
        tag: Option<String>,
        entries: Vec<(Node, Node)>,
        pending: Option<Node>,
    },
}

/// Parse the first document of `text`. An empty stream yields a null node.
pub fn parse(text: &str) -> Result<Node, YamlError> {
    let mut stack: Vec<Frame> = Vec::new();
    let mut anchors: HashMap<usize, Node> = HashMap::new();
    let mut root: Option<Node> = None;

    for item in Parser::new_from_str(text) {
        let (event, span) = item.map_err(|e| YamlError { message: e.info().to_owned(), offset: e.marker().index() })?;
        let (s, e) = (span.start.index(), span.end.index());
        let finished = match event {
            Event::DocumentEnd => break,
            Event::Scalar(value, style, anchor, tag) => {
                let tag = tag.map(|t| format!("{}{}", t.handle, t.suffix));
                let node = scalar_node(text, &value, style, s, e, tag);
                if anchor > 0 {
                    anchors.insert(anchor, node.clone());
                }
                Some(node)
            }
            Event::Alias(id) => {
                let mut node = anchors
                    .get(&id)
                    .cloned()
                    .ok_or_else(|| YamlError { message: format!("unknown alias {id}"), offset: s })?;
                node.start = s;
                node.end = e;
                Some(node)
            }
            Event::SequenceStart(anchor, tag) => {
                stack.push(Frame::Seq {
                    start: s,
                    flow: e > s,
                    anchor,
                    tag: tag.map(|t| format!("{}{}", t.handle, t.suffix)),
                    items: Vec::new(),
                });
                None
            }
            Event::MappingStart(anchor, tag) => {
                stack.push(Frame::Map {
                    start: s,
                    flow: e > s,
                    anchor,
                    tag: tag.map(|t| format!("{}{}", t.handle, t.suffix)),
                    entries: Vec::new(),
                    pending: None,
                });
                None
            }
            Event::SequenceEnd => match stack.pop() {
                Some(Frame::Seq { start, flow, anchor, tag, items }) => {
                    let end = if flow { e } else { items.last().map_or(start, |n| n.end) };
                    let node = Node {
                        value: NodeValue::Seq(items),
                        start,
                        end,
                        style: if flow { Style::FlowSeq } else { Style::BlockSeq },
                        tag,
                    };
                    if anchor > 0 {
                        anchors.insert(anchor, node.clone());
                    }
                    Some(node)
                }
                _ => return Err(YamlError { message: "unbalanced sequence end".into(), offset: s }),
            },
            Event::MappingEnd => match stack.pop() {
                Some(Frame::Map { start, flow, anchor, tag, entries, pending }) => {
                    if pending.is_some() {
                        return Err(YamlError { message: "mapping key without value".into(), offset: s });
                    }
                    let end = if flow { e } else { entries.last().map_or(start, |(k, v)| v.end.max(k.end)) };
                    let node = Node {
                        value: NodeValue::Map(entries),
                        start,
                        end,
                        style: if flow { Style::FlowMap } else { Style::BlockMap },
                        tag,
                    };
                    if anchor > 0 {
                        anchors.insert(anchor, node.clone());
                    }
                    Some(node)
                }
                _ => return Err(YamlError { message: "unbalanced mapping end".into(), offset: s }),
            },
            _ => None,
        };

        if let Some(node) = finished {
            match stack.last_mut() {
                Some(Frame::Seq { items, .. }) => items.push(node),
                Some(Frame::Map { entries, pending, .. }) => match pending.take() {
                    Some(key) => entries.push((key, node)),
                    None => *pending = Some(node),
                },
                None => {
                    root = Some(node);
                }
            }
        }
    }

    Ok(root.unwrap_or(Node { value: NodeValue::Null, start: 0, end: 0, style: Style::Plain, tag: None }))
}

fn scalar_node(text: &str, value: &str, style: ScalarStyle, s: usize, e: usize, tag: Option<String>) -> Node {
    let (style, start) = match style {
        ScalarStyle::Plain => (Style::Plain, s),
        ScalarStyle::SingleQuoted => (Style::SingleQuoted, s),
        ScalarStyle::DoubleQuoted => (Style::DoubleQuoted, s),
        ScalarStyle::Literal => (Style::Literal, block_indicator_start(text, s)),
        ScalarStyle::Folded => (Style::Folded, block_indicator_start(text, s)),
    };
    let value = match (style, tag.as_deref()) {
        (_, Some("!!str")) => NodeValue::Str(value.to_owned()),
        (Style::Plain, _) => resolve_plain(value),
        _ => NodeValue::Str(value.to_owned()),
    };
    let end = match style {
        Style::SingleQuoted | Style::DoubleQuoted => quoted_end(text, start).unwrap_or(e),
        // Empty block scalars report an end before their header; keep the range ordered.
        _ => e.max(start),
    };
    Node { value, start, end, style, tag }
}

/// The parser reports quoted scalars as ending after any trailing space and
/// comment; cut the range at the closing quote.
fn quoted_end(text: &str, start: usize) -> Option<usize> {
    let bytes = text.as_bytes();
    let quote = *bytes.get(start)?;
    let mut i = start + 1;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' if quote == b'"' => i += 2,
            b'\'' if quote == b'\'' && bytes.get(i + 1) == Some(&b'\'') => i += 2,
            b if b == quote => return Some(i + 1),
            _ => i += 1,
        }
    }
    None
}

/// Block scalars are reported starting at their first content line; move the
/// start back onto the `|` / `>` header so the node covers the whole value.
fn block_indicator_start(text: &str, content_start: usize) -> usize {
    let bytes = text.as_bytes();
    let mut i = content_start.min(bytes.len());
    while i > 0 {
        i -= 1;
        if bytes[i] == b'|' || bytes[i] == b'>' {
            return i;
        }
    }
    content_start
}

fn resolve_plain(v: &str) -> NodeValue {
    match v {
        "" | "~" | "null" | "Null" | "NULL" => return NodeValue::Null,
        "true" | "True" | "TRUE" | "yes" | "Yes" | "YES" | "on" | "On" | "ON" => return NodeValue::Bool(true),
        "false" | "False" | "FALSE" | "no" | "No" | "NO" | "off" | "Off" | "OFF" => return NodeValue::Bool(false),
        ".inf" | "+.inf" | ".Inf" | "+.Inf" => return NodeValue::Float(f64::INFINITY),
        "-.inf" | "-.Inf" => return NodeValue::Float(f64::NEG_INFINITY),
        ".nan" | ".NaN" => return NodeValue::Float(f64::NAN),
        _ => {}
    }
    let digits = v.strip_prefix(['-', '+']).unwrap_or(v);
    if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
        if let Ok(i) = v.parse::<i64>() {
            return NodeValue::Int(i);
        }
    }
    if let Some(hex) = v.strip_prefix("0x") {
        if let Ok(i) = i64::from_str_radix(hex, 16) {
            return NodeValue::Int(i);
        }
    }
    if let Some(oct) = v.strip_prefix("0o") {
        if let Ok(i) = i64::from_str_radix(oct, 8) {
            return NodeValue::Int(i);
        }
    }
    if looks_like_float(digits) {
        if let Ok(f) = v.parse::<f64>() {
            return NodeValue::Float(f);
        }
    }
    NodeValue::Str(v.to_owned())
}

fn looks_like_float(s: &str) -> bool {
    let mut seen_digit = false;
    let mut chars = s.chars().peekable();
    while let Some(c) = chars.peek().copied() {
        if c.is_ascii_digit() {
            seen_digit = true;
            chars.next();
        } else {
            break;
        }
    }
    if chars.peek() == Some(&'.') {
        chars.next();
        while let Some(c) = chars.peek().copied() {
            if c.is_ascii_digit() {
                seen_digit = true;
                chars.next();
            } else {
                break;
            }
        }
    }
    if !seen_digit {
        return false;
    }
    if matches!(chars.peek(), Some('e') | Some('E')) {
        chars.next();
        if matches!(chars.peek(), Some('+') | Some('-')) {
            chars.next();
        }
        let mut exp = false;
        while let Some(c) = chars.peek().copied() {
            if c.is_ascii_digit() {
                exp = true;
                chars.next();
            } else {
                break;
            }
        }
        if !exp {
            return false;
        }
    }
    chars.next().is_none()
}

/// True when `s` would read back as the same string if written as a plain scalar.
pub fn is_plain_safe(s: &str) -> bool {
    if s.is_empty() || s.trim() != s || s.contains('\n') {
        return false;
    }
    if !matches!(resolve_plain(s), NodeValue::Str(_)) {
        return false;
    }
    let first = s.chars().next().unwrap();
    if "-?:,[]{}#&*!|>'\"%@`".contains(first) {
        return false;
    }
    !(s.contains(": ") || s.contains(" #") || s.ends_with(':') || s.contains('\t'))
}

/// Render `s` as a YAML scalar: plain when safe, double-quoted otherwise.
pub fn quote_scalar(s: &str) -> String {
    if is_plain_safe(s) {
        return s.to_owned();
    }
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if c.is_control() => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Emit plain data as block-style YAML.
pub fn emit(value: &Json) -> String {
    let mut out = String::new();
    emit_into(value, 0, &mut out);
    if !out.ends_with('\n') {
        out.push('\n');
    }
    out
}

fn emit_scalar(v: &Json) -> String {
    match v {
        Json::Null => "null".into(),
        Json::Bool(b) => b.to_string(),
        Json::Number(n) => n.to_string(),
        Json::String(s) => quote_scalar(s),
        Json::Array(a) if a.is_empty() => "[]".into(),
        Json::Object(o) if o.is_empty() => "{}".into(),
        _ => unreachable!("collections are emitted in block style"),
    }
}

fn is_block(v: &Json) -> bool {
    match v {
        Json::Array(a) => !a.is_empty(),
        Json::Object(o) => !o.is_empty(),
        _ => false,
    }
}

fn emit_into(value: &Json, indent: usize, out: &mut String) {
    let pad = " ".repeat(indent);
    match value {
        Json::Object(map) if !map.is_empty() => {
            for (k, v) in map {
                out.push_str(&pad);
                out.push_str(&quote_scalar(k));
                out.push(':');
                if is_block(v) {
                    out.push('\n');
                    let child = if v.is_array() { indent } else { indent + 2 };
                    emit_into(v, child, out);
                } else {
                    out.push(' ');
                    out.push_str(&emit_scalar(v));
                    out.push('\n');
                }
            }
        }
        Json::Array(items) if !items.is_empty() => {
            for item in items {
                out.push_str(&pad);
                out.push_str("- ");
                if is_block(item) {
                    let mut nested = String::new();
                    emit_into(item, indent + 2, &mut nested);
                    // The first nested line shares the dash line.
                    out.push_str(nested.trim_start());
                } else {
                    out.push_str(&emit_scalar(item));
                    out.push('\n');
                }
            }
        }
        other => {
            out.push_str(&pad);
            out.push_str(&emit_scalar(other));
            out.push('\n');
        }
    }
}
