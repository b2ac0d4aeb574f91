//! Ansible playbook parsing.
//!
//! A task's module is the first key that is not a task keyword. The keyword
//! set is fixed: the core keywords `name`, `when`, `notify`, `ignore_errors`,
//! `block`, `rescue`, `always`, `vars`, `register`, `loop`, `become`, `tags`,
//! plus the other standard task keywords listed in [`TASK_KEYWORDS`] and any
//! `with_*` lookup loop.

use crate::ir::{Entry, Play, PlaybookModel, SourceSpan, TaskKind, TaskNode, Value, ValueKind};
use crate::yaml::{join_pointer, Node, NodeValue, Style};

use super::convert::Doc;
use super::LoadError;

pub const TASK_KEYWORDS: &[&str] = &[
    "name",
    "when",
    "notify",
    "ignore_errors",
    "block",
    "rescue",
    "always",
    "vars",
    "register",
    "loop",
    "become",
    "tags",
    "args",
    "become_user",
    "become_method",
    "become_flags",
    "changed_when",
    "failed_when",
    "delegate_to",
    "delegate_facts",
    "environment",
    "no_log",
    "until",
    "retries",
    "delay",
    "run_once",
    "loop_control",
    "check_mode",
    "diff",
    "listen",
    "async",
    "poll",
    "any_errors_fatal",
    "throttle",
    "timeout",
    "collections",
    "module_defaults",
    "connection",
    "remote_user",
    "port",
    "debugger",
    "ignore_unreachable",
];

const PLAY_KEYS: &[&str] = &["hosts", "tasks", "pre_tasks", "post_tasks", "roles", "handlers", "import_playbook"];

/// Modules whose free-form argument is a command line; only these keys are
/// split out of it.
const COMMAND_MODULES: &[&str] = &["command", "shell", "raw", "script", "win_command", "win_shell"];
const COMMAND_KEYS: &[&str] = &["creates", "removes", "chdir", "executable", "stdin", "warn"];

pub fn is_task_keyword(key: &str) -> bool {
    TASK_KEYWORDS.contains(&key) || key.starts_with("with_")
}

/// Parse a playbook whose root is a list of plays. A root list of bare tasks
/// (a role or `include_tasks` file) becomes a single implicit play.
pub fn parse_playbook(text: &str, file: &str) -> Result<PlaybookModel, LoadError> {
    let doc = Doc::new(file, text, false);
    let root = doc.parse_root()?;
    let items = match &root.value {
        NodeValue::Seq(items) => items,
        NodeValue::Null => {
            return Ok(PlaybookModel {
                file: file.to_owned(),
                plays: Vec::new(),
                line_count: doc.lines.line_count(),
                span: doc.node_span(&root),
            })
        }
        _ => return Err(doc.shape(&root, "list of plays")),
    };

    let task_file = items.first().is_some_and(|first| {
        first.as_map().is_some_and(|m| !m.iter().any(|(k, _)| k.as_str().is_some_and(|k| PLAY_KEYS.contains(&k))))
    });

    let plays = if task_file {
        let tasks = parse_task_list(&doc, &root, "")?;
        vec![Play {
            name: None,
            hosts: None,
            tasks,
            handlers: Vec::new(),
            vars: Vec::new(),
            pointer: String::new(),
            span: doc.node_span(&root),
        }]
    } else {
        items.iter().enumerate().map(|(i, item)| parse_play(&doc, item, &i.to_string())).collect::<Result<_, _>>()?
    };

    Ok(PlaybookModel { file: file.to_owned(), plays, line_count: doc.lines.line_count(), span: doc.node_span(&root) })
}

fn parse_play(doc: &Doc, node: &Node, pointer: &str) -> Result<Play, LoadError> {
    let map = match &node.value {
        NodeValue::Map(m) => m,
        _ => return Err(doc.shape(node, "play mapping")),
    };
    let mut play = Play {
        name: None,
        hosts: None,
        tasks: Vec::new(),
        handlers: Vec::new(),
        vars: Vec::new(),
        pointer: pointer.to_owned(),
        span: doc.node_span(node),
    };
    // pre_tasks run before tasks, post_tasks after, whatever the key order
    let mut sections: [Vec<TaskNode>; 3] = Default::default();
    for (k, v) in map {
        let key = doc.key_text(k)?;
        let p = join_pointer(pointer, &key);
        match key.as_str() {
            "name" => play.name = v.scalar_text(),
            "hosts" => {
                play.hosts = match &v.value {
                    NodeValue::Seq(items) => {
                        Some(items.iter().filter_map(Node::scalar_text).collect::<Vec<_>>().join(","))
                    }
                    _ => v.scalar_text(),
                }
            }
            "vars" => play.vars = doc.entries(doc.expect_map(v, "vars mapping")?, &p),
            "pre_tasks" => sections[0] = parse_task_list(doc, v, &p)?,
            "tasks" => sections[1] = parse_task_list(doc, v, &p)?,
            "post_tasks" => sections[2] = parse_task_list(doc, v, &p)?,
            "handlers" => play.handlers = parse_task_list(doc, v, &p)?,
            _ => {}
        }
    }
    play.tasks = sections.into_iter().flatten().collect();
    Ok(play)
}

fn parse_task_list(doc: &Doc, node: &Node, pointer: &str) -> Result<Vec<TaskNode>, LoadError> {
    doc.expect_seq(node, "list of tasks")?
        .iter()
        .enumerate()
        .map(|(i, item)| parse_task(doc, item, &join_pointer(pointer, &i.to_string())))
        .collect()
}

fn parse_task(doc: &Doc, node: &Node, pointer: &str) -> Result<TaskNode, LoadError> {
    let map = match &node.value {
        NodeValue::Map(m) => m,
        _ => return Err(doc.shape(node, "task mapping")),
    };
    let mut task = TaskNode {
        kind: TaskKind::Task,
        name: None,
        module: None,
        module_span: None,
        args: Vec::new(),
        when_expr: None,
        notify: Vec::new(),
        listen: Vec::new(),
        ignore_errors: false,
        children: Vec::new(),
        rescue: Vec::new(),
        always: Vec::new(),
        keywords: Vec::new(),
        pointer: pointer.to_owned(),
        span: doc.node_span(node),
    };
    let mut extra_args: Vec<Entry> = Vec::new();
    let mut is_block = false;

    for (k, v) in map {
        let key = doc.key_text(k)?;
        let p = join_pointer(pointer, &key);
        if !is_task_keyword(&key) {
            if task.module.is_none() {
                let (module, args) = if key == "action" || key == "local_action" {
                    action_form(doc, v, &p)?
                } else {
                    (key.clone(), module_args(doc, &key, v, &p))
                };
                // the span names the module only when the module is the key itself
                if key != "action" && key != "local_action" {
                    task.module_span = Some(doc.node_span(k));
                }
                task.module = Some(module);
                task.args = args;
            }
            // later non-keyword keys are ignored, as Ansible rejects them anyway
            continue;
        }
        match key.as_str() {
            "name" => task.name = v.scalar_text(),
            "when" => task.when_expr = Some(when_text(v)),
            "notify" => task.notify = string_list(v),
            "listen" => task.listen = string_list(v),
            "ignore_errors" => task.ignore_errors = truthy(v),
            "block" => {
                is_block = true;
                task.children = parse_task_list(doc, v, &p)?;
            }
            "rescue" => task.rescue = parse_task_list(doc, v, &p)?,
            "always" => task.always = parse_task_list(doc, v, &p)?,
            "args" => {
                extra_args = doc.entries(doc.expect_map(v, "args mapping")?, &p);
            }
            _ => {}
        }
        if !matches!(key.as_str(), "block" | "rescue" | "always") {
            task.keywords.push(doc.entry(k, v, pointer));
        }
    }

    if is_block {
        task.kind = TaskKind::Block;
        if let Some(module) = task.module {
            return Err(LoadError::SchemaShape {
                span: task.module_span.unwrap_or_else(|| task.span.clone()),
                expected: "block without a module".into(),
                found: format!("module `{module}`"),
            });
        }
    } else if task.module.is_none() {
        return Err(doc.shape(node, "task with a module or a block"));
    } else {
        task.args.extend(extra_args);
    }
    Ok(task)
}

fn truthy(v: &Node) -> bool {
    match &v.value {
        NodeValue::Bool(b) => *b,
        NodeValue::Str(s) => matches!(s.to_ascii_lowercase().as_str(), "yes" | "true" | "on" | "1"),
        NodeValue::Int(i) => *i != 0,
        _ => false,
    }
}

fn when_text(v: &Node) -> String {
    match &v.value {
        NodeValue::Seq(items) if items.len() == 1 => items[0].scalar_text().unwrap_or_default(),
        NodeValue::Seq(items) => items
            .iter()
            .filter_map(Node::scalar_text)
            .map(|c| if c.contains(char::is_whitespace) { format!("({c})") } else { c })
            .collect::<Vec<_>>()
            .join(" and "),
        _ => v.scalar_text().unwrap_or_default(),
    }
}

fn string_list(v: &Node) -> Vec<String> {
    match &v.value {
        NodeValue::Seq(items) => items.iter().filter_map(Node::scalar_text).collect(),
        NodeValue::Null => Vec::new(),
        _ => v.scalar_text().into_iter().collect(),
    }
}

/// `action: shell echo hi` or `action: {module: shell, ...}`.
fn action_form(doc: &Doc, v: &Node, pointer: &str) -> Result<(String, Vec<Entry>), LoadError> {
    match &v.value {
        NodeValue::Map(m) => {
            let mut entries = doc.entries(m, pointer);
            let idx = entries
                .iter()
                .position(|e| e.key == "module")
                .ok_or_else(|| doc.shape(v, "action mapping with `module`"))?;
            let module = entries.remove(idx).value.scalar_text().unwrap_or_default();
            Ok((module, entries))
        }
        NodeValue::Str(s) => {
            let trimmed = s.trim_start();
            let module: String = trimmed.chars().take_while(|c| !c.is_whitespace()).collect();
            let rest_at = s.len() - trimmed.len() + module.len();
            let rest = &s[rest_at..];
            let offset = rest.len() - rest.trim_start().len();
            let args = free_form(doc, &module, v, rest.trim_start(), rest_at + offset, pointer);
            Ok((module, args))
        }
        _ => Err(doc.shape(v, "action string or mapping")),
    }
}

fn module_args(doc: &Doc, module: &str, v: &Node, pointer: &str) -> Vec<Entry> {
    match &v.value {
        NodeValue::Map(m) => doc.entries(m, pointer),
        NodeValue::Null => Vec::new(),
        _ => match v.scalar_text() {
            Some(text) => free_form(doc, module, v, &text, 0, pointer),
            None => Vec::new(),
        },
    }
}

/// Split a free-form argument string into `key=value` entries and `_raw_params`.
/// Sub-spans are exact for single-line plain scalars; otherwise every entry
/// gets the whole scalar's span.
fn free_form(doc: &Doc, module: &str, node: &Node, text: &str, base: usize, pointer: &str) -> Vec<Entry> {
    let short = module.strip_prefix("ansible.builtin.").unwrap_or(module);
    let command_like = COMMAND_MODULES.contains(&short);
    let exact = node.style == Style::Plain
        && doc.text.get(node.start..node.end).is_some_and(|src| src.get(base..base + text.len()) == Some(text));
    let span_of = |start: usize, end: usize| -> SourceSpan {
        if exact {
            doc.span(node.start + base + start, node.start + base + end)
        } else {
            doc.node_span(node)
        }
    };

    let mut entries = Vec::new();
    let mut raw: Vec<(usize, usize)> = Vec::new();
    for (start, end) in tokenize(text) {
        let tok = &text[start..end];
        let kv = tok.split_once('=').filter(|(k, _)| {
            !k.is_empty()
                && k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
                && (!command_like || COMMAND_KEYS.contains(k))
        });
        match kv {
            Some((k, raw_v)) => {
                let vstart = start + k.len() + 1;
                let val = unquote(raw_v);
                entries.push(Entry {
                    key: k.to_owned(),
                    key_span: span_of(start, start + k.len()),
                    value: Value {
                        kind: ValueKind::Str(val),
                        tag: None,
                        pointer: pointer.to_owned(),
                        span: span_of(vstart, end),
                    },
                });
            }
            None => raw.push((start, end)),
        }
    }
    if let (Some(first), Some(last)) = (raw.first(), raw.last()) {
        let joined = raw.iter().map(|&(s, e)| &text[s..e]).collect::<Vec<_>>().join(" ");
        let span = span_of(first.0, last.1);
        entries.insert(
            0,
            Entry {
                key: "_raw_params".into(),
                key_span: span.clone(),
                value: Value { kind: ValueKind::Str(joined), tag: None, pointer: pointer.to_owned(), span },
            },
        );
    }
    entries
}

fn unquote(s: &str) -> String {
    let b = s.as_bytes();
    if b.len() >= 2 && (b[0] == b'"' || b[0] == b'\'') && b[b.len() - 1] == b[0] {
        s[1..s.len() - 1].to_owned()
    } else {
        s.to_owned()
    }
}

/// Whitespace-separated tokens, honouring single and double quotes.
fn tokenize(text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let mut quote: Option<char> = None;
    for (i, c) in text.char_indices() {
        match quote {
            Some(q) if c == q => quote = None,
            Some(_) => {}
            None if c == '"' || c == '\'' => {
                quote = Some(c);
                start.get_or_insert(i);
            }
            None if c.is_whitespace() => {
                if let Some(s) = start.take() {
                    out.push((s, i));
                }
            }
            None => {
                start.get_or_insert(i);
            }
        }
    }
    if let Some(s) = start {
        out.push((s, text.len()));
    }
    out
}
