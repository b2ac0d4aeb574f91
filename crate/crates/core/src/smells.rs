//! Smell detectors over playbooks and topologies.
//!
//! Each enabled catalog entry for the artifact kind is run through the
//! detector it names; findings carry the entry's rule id.

use std::collections::{BTreeMap, HashMap};

use regex::Regex;
use serde_json::{json, Value as Json};

use crate::catalog::{Catalog, DefectEntry, RuleConfig};
use crate::finding::{normalize, Finding, Target};
use crate::ir::{iter_tasks, Entry, PlaybookModel, Section, TaskKind, TaskNode, TopologyModel, Value, ValueKind};
use crate::span::{LineIndex, SourceSpan};
use crate::yaml::{self, escape_segment, Node, NodeValue};

/// Catalog plus per-rule configuration.
#[derive(Debug, Clone, Copy)]
pub struct RuleContext<'a> {
    pub catalog: &'a Catalog,
    pub config: &'a RuleConfig,
}

impl<'a> RuleContext<'a> {
    pub fn new(catalog: &'a Catalog, config: &'a RuleConfig) -> Self {
        RuleContext { catalog, config }
    }

    fn entries(&self, target: Target) -> impl Iterator<Item = &'a DefectEntry> + 'a {
        let config = self.config;
        self.catalog.entries_for(target).filter(move |e| config.is_enabled(&e.rule_id))
    }
}

/// A scalar in scope for value-based detectors, with the key it sits under.
struct Scalar<'a> {
    key: Option<&'a str>,
    value: &'a Value,
}

impl Scalar<'_> {
    /// Literal text of the scalar; `None` for templated, vaulted or non-text values.
    fn literal(&self) -> Option<String> {
        if self.value.tag.as_deref().is_some_and(|t| t.contains("vault")) {
            return None;
        }
        let text = match &self.value.kind {
            ValueKind::Str(s) => s.clone(),
            ValueKind::Int(_) | ValueKind::Float(_) => self.value.scalar_text()?,
            _ => return None,
        };
        (!text.contains("{{") && !text.contains("{%")).then_some(text)
    }

    /// Whether the value was split out of a free-form `k=v` argument string.
    fn free_form(&self) -> bool {
        self.key.is_some_and(|k| {
            !self.value.pointer.ends_with(&format!("/{}", escape_segment(k))) && self.value.pointer != escape_segment(k)
        })
    }
}

fn collect<'a>(entries: &'a [Entry], out: &mut Vec<Scalar<'a>>) {
    for e in entries {
        e.value.visit_scalars(Some(&e.key), &mut |key, value| out.push(Scalar { key, value }));
    }
}

fn compile(pattern: &str) -> Option<Regex> {
    Regex::new(pattern).ok()
}

fn data<const N: usize>(pairs: [(&str, Json); N]) -> BTreeMap<String, Json> {
    pairs.into_iter().map(|(k, v)| (k.to_owned(), v)).collect()
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Dialect {
    Ansible,
    Tosca,
}

/// Detectors shared by both artifact kinds, applied to in-scope scalars.
fn scalar_rules(
    ctx: &RuleContext<'_>,
    entry: &DefectEntry,
    scalars: &[Scalar<'_>],
    dialect: Dialect,
    inputs: &[String],
    out: &mut Vec<Finding>,
) {
    let cfg = ctx.config;
    let mut emit = |message: String, v: &Value, data| {
        out.push(ctx.catalog.finding(entry, message, v.span.clone(), v.pointer.clone(), data));
    };
    match entry.detection.detector.as_str() {
        det @ ("hardcoded_secret" | "empty_password") => {
            let Some(re) = cfg.param_str(entry, "key_pattern").and_then(|p| compile(&p)) else { return };
            let ignore = cfg.param_str_list(entry, "ignore_keys");
            for s in scalars {
                let Some(key) = s.key.filter(|k| re.is_match(k) && !ignore.iter().any(|i| i.eq_ignore_ascii_case(k)))
                else {
                    continue;
                };
                let Some(text) = s.literal() else { continue };
                if (det == "empty_password") != text.is_empty() {
                    continue;
                }
                let mut d = data([("key", json!(key))]);
                let input =
                    s.value.pointer.strip_prefix("topology_template/inputs/").and_then(|r| r.strip_suffix("/default"));
                match (dialect, input) {
                    (Dialect::Tosca, Some(name)) => {
                        d.insert("input_name".into(), json!(name));
                    }
                    (Dialect::Tosca, None) => {
                        let input = key.to_ascii_lowercase();
                        let _ = inputs;
                        d.insert("secret_ref".into(), json!(format!("{{ get_input: {input} }}")));
                    }
                    (Dialect::Ansible, _) => {
                        let var: String = key
                            .to_ascii_lowercase()
                            .chars()
                            .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
                            .collect();
                        let reference = if s.free_form() {
                            format!("{{{{vault_{var}}}}}")
                        } else {
                            format!("\"{{{{ vault_{var} }}}}\"")
                        };
                        d.insert("secret_ref".into(), json!(reference));
                    }
                }
                let message = if text.is_empty() {
                    format!("`{key}` is set to an empty string")
                } else {
                    format!("`{key}` holds a hard-coded secret")
                };
                emit(message, s.value, d);
            }
        }
        "unrestricted_ip" => {
            let addresses = cfg.param_str_list(entry, "addresses");
            for s in scalars {
                if let Some(text) = s.value.as_str().filter(|t| addresses.iter().any(|a| a == t.trim())) {
                    emit(format!("bound to unrestricted address {text}"), s.value, data([("address", json!(text))]));
                }
            }
        }
        "plain_http" => {
            let loopback = cfg.param_str_list(entry, "loopback_hosts");
            let re = Regex::new(r#"http://(\[[^\]]*\]|[^/\s:'"?#]+)"#).expect("valid regex");
            for s in scalars {
                let Some(text) = s.literal() else { continue };
                let is_loopback =
                    |host: &str| loopback.iter().any(|l| l.eq_ignore_ascii_case(host)) || host.starts_with("127.");
                let hits: Vec<_> = re.captures_iter(&text).filter(|c| !is_loopback(&c[1])).collect();
                if hits.is_empty() {
                    continue;
                }
                let fixed =
                    re.replace_all(&text, |c: &regex::Captures<'_>| {
                        if is_loopback(&c[1]) {
                            c[0].to_owned()
                        } else {
                            format!("https://{}", &c[1])
                        }
                    })
                    .into_owned();
                emit(
                    format!("plain HTTP URL to {}", &hits[0][1]),
                    s.value,
                    data([("url", json!(hits[0][0].to_owned())), ("https_url", json!(fixed))]),
                );
            }
        }
        "weak_crypto" => {
            let algorithms = cfg.param_str_list(entry, "algorithms");
            let Some(key_re) = cfg.param_str(entry, "key_pattern").and_then(|p| compile(&p)) else { return };
            let alg_re = compile(&format!(
                r"(?i)\b(?:{})\b",
                algorithms.iter().map(|a| regex::escape(a)).collect::<Vec<_>>().join("|")
            ));
            let Some(alg_re) = alg_re.filter(|_| !algorithms.is_empty()) else { return };
            for s in scalars {
                let (Some(key), Some(text)) = (s.key, s.literal()) else { continue };
                if !key_re.is_match(key) {
                    continue;
                }
                if let Some(m) = alg_re.find(&text) {
                    emit(
                        format!("weak algorithm {} selected by `{key}`", m.as_str()),
                        s.value,
                        data([("algorithm", json!(m.as_str().to_ascii_lowercase()))]),
                    );
                }
            }
        }
        _ => {}
    }
}

fn task_args_scalars(task: &TaskNode) -> Vec<Scalar<'_>> {
    let mut out = Vec::new();
    collect(&task.args, &mut out);
    for kw in ["vars", "environment"] {
        if let Some(e) = task.keyword(kw) {
            collect(std::slice::from_ref(e), &mut out);
        }
    }
    out
}

/// Byte ranges of every scalar (keys included) in a YAML document.
fn scalar_ranges(node: &Node, out: &mut Vec<(usize, usize)>) {
    match &node.value {
        NodeValue::Seq(items) => items.iter().for_each(|n| scalar_ranges(n, out)),
        NodeValue::Map(entries) => entries.iter().for_each(|(k, v)| {
            scalar_ranges(k, out);
            scalar_ranges(v, out);
        }),
        _ => out.push((node.start, node.end)),
    }
}

/// Comments in `text` as byte ranges from `#` to end of line.
pub fn comments(text: &str) -> Vec<(usize, usize)> {
    let mut scalars = Vec::new();
    if let Ok(root) = yaml::parse(text) {
        scalar_ranges(&root, &mut scalars);
    }
    scalars.sort_unstable();
    let inside = |o: usize| {
        let i = scalars.partition_point(|&(s, _)| s <= o);
        scalars[..i].iter().rev().take(64).any(|&(s, e)| s <= o && o < e)
    };
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut line_start = 0;
    for line in text.split_inclusive('\n') {
        let content = line.trim_end_matches(['\n', '\r']);
        let mut search = 0;
        while let Some(rel) = content[search..].find('#') {
            let o = line_start + search + rel;
            if (o == line_start || bytes[o - 1] == b' ' || bytes[o - 1] == b'\t') && !inside(o) {
                out.push((o, line_start + content.len()));
                break;
            }
            search += rel + 1;
        }
        line_start += line.len();
    }
    out
}

fn count_tasks(tasks: &[TaskNode]) -> usize {
    tasks
        .iter()
        .map(|t| match t.kind {
            TaskKind::Task => 1,
            TaskKind::Block => count_tasks(&t.children) + count_tasks(&t.rescue) + count_tasks(&t.always),
        })
        .sum()
}

fn flatten<'a>(tasks: &'a [TaskNode], out: &mut Vec<&'a TaskNode>) {
    for t in tasks {
        match t.kind {
            TaskKind::Task => out.push(t),
            TaskKind::Block => {
                flatten(&t.children, out);
                flatten(&t.rescue, out);
                flatten(&t.always, out);
            }
        }
    }
}

fn is_truthy_bool_compare() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)==\s*(true|false)\b").expect("valid regex"))
}

/// `x == true` becomes `x`, `x == false` becomes `not x`.
pub fn simplify_bool_compare(expr: &str) -> String {
    let re = Regex::new(r"(?i)(\S+)\s*==\s*(true|false)\b").expect("valid regex");
    re.replace_all(
        expr,
        |c: &regex::Captures<'_>| {
            if c[2].eq_ignore_ascii_case("true") {
                c[1].to_owned()
            } else {
                format!("not {}", &c[1])
            }
        },
    )
    .into_owned()
}

pub fn detect_playbook_smells(playbook: &PlaybookModel, source: &str, ctx: &RuleContext<'_>) -> Vec<Finding> {
    let mut out = Vec::new();
    let tasks = iter_tasks(playbook);
    let mut scalars: Vec<Scalar<'_>> = Vec::new();
    for play in &playbook.plays {
        collect(&play.vars, &mut scalars);
    }
    for (task, _) in &tasks {
        scalars.extend(task_args_scalars(task));
    }

    for entry in ctx.entries(Target::Ansible) {
        let cfg = ctx.config;
        let task_finding = |message: String, task: &TaskNode, d| {
            ctx.catalog.finding(entry, message, task.span.clone(), task.pointer.clone(), d)
        };
        match entry.detection.detector.as_str() {
            "admin_by_default" => {
                let modules = cfg.param_str_list(entry, "modules");
                let args = cfg.param_str_list(entry, "user_args");
                let admins = cfg.param_str_list(entry, "admin_names");
                for (task, _) in &tasks {
                    if !task.short_module().is_some_and(|m| modules.iter().any(|x| x == m)) {
                        continue;
                    }
                    for a in task.args.iter().filter(|a| args.contains(&a.key)) {
                        if let Some(name) = a.value.as_str().filter(|v| admins.iter().any(|x| x == v)) {
                            out.push(ctx.catalog.finding(
                                entry,
                                format!("account `{name}` is privileged by default"),
                                a.value.span.clone(),
                                a.value.pointer.clone(),
                                data([("user", json!(name))]),
                            ));
                        }
                    }
                }
            }
            "suspicious_comment" => {
                let markers = cfg.param_str_list(entry, "markers");
                let pattern =
                    format!(r"(?i)\b(?:{})\b", markers.iter().map(|m| regex::escape(m)).collect::<Vec<_>>().join("|"));
                let Some(re) = compile(&pattern).filter(|_| !markers.is_empty()) else { continue };
                let lines = LineIndex::new(source);
                for (start, end) in comments(source) {
                    if let Some(m) = re.find(&source[start..end]) {
                        let span = SourceSpan::new(&playbook.file, start, end, &lines);
                        let subject = format!("#comment/{}", span.start_line);
                        out.push(ctx.catalog.finding(
                            entry,
                            format!("comment flags unfinished work ({})", m.as_str()),
                            span,
                            subject,
                            data([("marker", json!(m.as_str().to_ascii_uppercase()))]),
                        ));
                    }
                }
            }
            "unverified_download" => {
                let modules = cfg.param_str_list(entry, "modules");
                for (task, _) in &tasks {
                    let Some(m) = task.short_module().filter(|m| modules.iter().any(|x| x == m)) else { continue };
                    let download = m != "uri" || task.arg("dest").is_some();
                    if download && task.arg("checksum").is_none() {
                        out.push(task_finding(
                            format!("`{m}` downloads without a checksum"),
                            task,
                            data([("module", json!(m))]),
                        ));
                    }
                }
            }
            "unnamed_task" => {
                for (task, _) in &tasks {
                    if task.kind == TaskKind::Task && task.name.as_deref().is_none_or(|n| n.trim().is_empty()) {
                        let module = task.short_module().unwrap_or("unnamed");
                        out.push(task_finding(
                            format!("`{module}` task has no name"),
                            task,
                            data([("module", json!(module))]),
                        ));
                    }
                }
            }
            "command_instead_of_module" => {
                let modules = cfg.param_str_list(entry, "modules");
                let allow = cfg.param_str_list(entry, "allow_args");
                for (task, _) in &tasks {
                    let Some(m) = task.short_module().filter(|m| modules.iter().any(|x| x == m)) else { continue };
                    if !allow.iter().any(|a| task.arg(a).is_some()) {
                        out.push(task_finding(
                            format!("`{m}` used where a module would be idempotent"),
                            task,
                            data([("module", json!(m))]),
                        ));
                    }
                }
            }
            "ignore_errors" => {
                for (task, _) in &tasks {
                    if task.ignore_errors {
                        out.push(task_finding("errors of this task are ignored".into(), task, BTreeMap::new()));
                    }
                }
            }
            "deprecated_module" => {
                let Some(Json::Object(map)) = cfg.param(entry, "deprecated") else { continue };
                for (task, _) in &tasks {
                    let Some(short) = task.short_module() else { continue };
                    let Some(replacement) = map.get(short).and_then(Json::as_str) else { continue };
                    let written = task.module.clone().unwrap_or_default();
                    let mut d = data([("deprecated", json!(short))]);
                    if task.module_span.is_some() {
                        let prefix = &written[..written.len() - short.len()];
                        d.insert("module".into(), json!(written));
                        d.insert("replacement".into(), json!(format!("{prefix}{replacement}")));
                    }
                    out.push(task_finding(format!("module `{short}` is deprecated; use `{replacement}`"), task, d));
                }
            }
            "literal_bool_compare" => {
                for (task, _) in &tasks {
                    let Some(expr) = task.when_expr.as_deref().filter(|w| is_truthy_bool_compare().is_match(w)) else {
                        continue;
                    };
                    out.push(task_finding(
                        format!("`when: {expr}` compares against a boolean literal"),
                        task,
                        data([("when", json!(expr)), ("fixed_when", json!(simplify_bool_compare(expr)))]),
                    ));
                }
            }
            "long_play" => {
                let Some(max) = cfg.param_u64(entry, "max_tasks") else { continue };
                for play in &playbook.plays {
                    let n = count_tasks(&play.tasks);
                    if n as u64 > max {
                        out.push(ctx.catalog.finding(
                            entry,
                            format!("play has {n} tasks (limit {max})"),
                            play.span.clone(),
                            play.pointer.clone(),
                            data([("tasks", json!(n)), ("limit", json!(max))]),
                        ));
                    }
                }
            }
            "duplicate_task" => {
                for play in &playbook.plays {
                    let mut flat = Vec::new();
                    flatten(&play.tasks, &mut flat);
                    let mut seen: HashMap<String, &TaskNode> = HashMap::new();
                    for task in flat {
                        let args: BTreeMap<&str, Json> =
                            task.args.iter().map(|a| (a.key.as_str(), a.value.to_json())).collect();
                        let key = json!([task.short_module(), args]).to_string();
                        match seen.get(&key) {
                            Some(first) => out.push(task_finding(
                                "task repeats an earlier task with the same module and arguments".into(),
                                task,
                                data([("first_line", json!(first.span.start_line))]),
                            )),
                            None => {
                                seen.insert(key, task);
                            }
                        }
                    }
                }
            }
            "monolithic_playbook" => {
                let (Some(max_plays), Some(max_lines)) =
                    (cfg.param_u64(entry, "max_plays"), cfg.param_u64(entry, "max_lines"))
                else {
                    continue;
                };
                let plays = playbook.plays.len() as u64;
                let lines = playbook.line_count as u64;
                if plays > max_plays && lines > max_lines {
                    out.push(ctx.catalog.finding(
                        entry,
                        format!("playbook has {plays} plays and {lines} lines"),
                        playbook.span.clone(),
                        "",
                        data([("plays", json!(plays)), ("lines", json!(lines))]),
                    ));
                }
            }
            _ => scalar_rules(ctx, entry, &scalars, Dialect::Ansible, &[], &mut out),
        }
    }
    debug_assert!(tasks.iter().all(|(_, p)| p.section == Section::Tasks || p.section == Section::Handlers));
    normalize(&mut out);
    out
}

pub fn detect_topology_smells(topology: &TopologyModel, ctx: &RuleContext<'_>) -> Vec<Finding> {
    let mut out = Vec::new();
    let mut scalars: Vec<Scalar<'_>> = Vec::new();
    for node in &topology.node_templates {
        collect(&node.properties, &mut scalars);
    }
    for input in &topology.inputs {
        if let Some(v) = &input.value {
            v.visit_scalars(Some(&input.name), &mut |key, value| scalars.push(Scalar { key, value }));
        }
    }
    let inputs: Vec<String> = topology.inputs.iter().map(|i| i.name.clone()).collect();

    for entry in ctx.entries(Target::Tosca) {
        let cfg = ctx.config;
        match entry.detection.detector.as_str() {
            "admin_by_default" => {
                let keys = cfg.param_str_list(entry, "property_keys");
                let admins = cfg.param_str_list(entry, "admin_names");
                for s in &scalars {
                    let (Some(key), Some(v)) = (s.key, s.value.as_str()) else { continue };
                    if keys.iter().any(|k| k == key) && admins.iter().any(|a| a == v) {
                        out.push(ctx.catalog.finding(
                            entry,
                            format!("account `{v}` is privileged by default"),
                            s.value.span.clone(),
                            s.value.pointer.clone(),
                            data([("user", json!(v))]),
                        ));
                    }
                }
            }
            "god_node" => {
                let Some(max) = cfg.param_u64(entry, "max_requirements") else { continue };
                for node in &topology.node_templates {
                    let n = node.requirements.len();
                    if n as u64 > max {
                        out.push(ctx.catalog.finding(
                            entry,
                            format!("node `{}` has {n} requirements (limit {max})", node.name),
                            node.span.clone(),
                            node.pointer.clone(),
                            data([("requirements", json!(n)), ("limit", json!(max))]),
                        ));
                    }
                }
            }
            _ => scalar_rules(ctx, entry, &scalars, Dialect::Tosca, &inputs, &mut out),
        }
    }
    normalize(&mut out);
    out
}

/// Category of a finding's rule according to the catalog.
pub fn category_of(finding: &Finding, catalog: &Catalog) -> Result<crate::finding::Category, UnknownRule> {
    catalog.get(&finding.rule_id).map(|e| e.category).ok_or_else(|| UnknownRule(finding.rule_id.clone()))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("rule {0} is not in the catalog")]
pub struct UnknownRule(pub String);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csar::{parse_playbook, parse_tosca};
    use crate::finding::Category;

    fn smells(text: &str) -> Vec<Finding> {
        let pb = parse_playbook(text, "p.yml").unwrap();
        let c = Catalog::builtin();
        let cfg = RuleConfig::default();
        detect_playbook_smells(&pb, text, &RuleContext::new(&c, &cfg))
    }

    fn ids(f: &[Finding]) -> Vec<&str> {
        f.iter().map(|f| f.rule_id.as_str()).collect()
    }

    #[test]
    fn user_with_admin_and_password() {
        let text = "- hosts: all\n  tasks:\n    - name: add user\n      user: {name: admin, password: admin123}\n";
        let f = smells(text);
        assert_eq!(ids(&f), ["S003", "S001"]);
        assert_eq!(f[1].span.slice(text), "admin123");
        assert_eq!(f[1].data["secret_ref"], json!("\"{{ vault_password }}\""));
    }

    #[test]
    fn clean_playbook() {
        let text = "- hosts: web\n  vars:\n    port: 8080\n  tasks:\n    - name: install nginx\n      apt:\n        name: nginx\n        state: present\n    - name: start nginx\n      service:\n        name: nginx\n        state: started\n";
        assert!(smells(text).is_empty());
    }

    #[test]
    fn templated_and_vaulted_values_are_not_secrets() {
        let text = "- hosts: all\n  vars:\n    db_password: \"{{ vault_db_password }}\"\n    api_token: !vault |\n      $ANSIBLE_VAULT;1.1;AES256\n      6162\n  tasks: []\n";
        assert!(smells(text).is_empty());
    }

    #[test]
    fn empty_password() {
        let f = smells("- hosts: all\n  vars:\n    admin_password: ''\n  tasks: []\n");
        assert_eq!(ids(&f), ["S002"]);
    }

    #[test]
    fn free_form_secret_gets_compact_reference() {
        let text = "- hosts: all\n  tasks:\n    - name: add\n      mysql_user: name=app password=hunter2\n";
        let f = smells(text);
        assert_eq!(ids(&f), ["S001"]);
        assert_eq!(f[0].span.slice(text), "hunter2");
        assert_eq!(f[0].data["secret_ref"], json!("{{vault_password}}"));
    }

    #[test]
    fn network_and_crypto_smells() {
        let text = "- hosts: all\n  vars:\n    bind: 0.0.0.0\n    repo: http://mirror.example.com/x\n    local: http://localhost:8080/\n    hash_algorithm: md5\n  tasks: []\n";
        let f = smells(text);
        assert_eq!(ids(&f), ["S004", "S005", "S008"]);
        assert_eq!(f[1].data["https_url"], json!("https://mirror.example.com/x"));
    }

    #[test]
    fn suspicious_comment_outside_scalars() {
        let text =
            "# TODO: tighten\n- hosts: all\n  vars:\n    msg: \"# todo inside string\"\n  tasks: [] # FIXME later\n";
        let f = smells(text);
        assert_eq!(ids(&f), ["S006", "S006"]);
        assert_eq!(f[0].span.slice(text), "# TODO: tighten");
        assert_eq!(f[1].span.slice(text), "# FIXME later");
    }

    #[test]
    fn implementation_smells() {
        let text = "\
- hosts: all
  tasks:
    - apt: name=git
    - name: run
      shell: make
    - name: guarded
      command: make install creates=/usr/bin/x
    - name: ignore
      command: /bin/false
      args:
        removes: /tmp/x
      ignore_errors: yes
    - name: old
      include: other.yml
    - name: cond
      debug: msg=hi
      when: enabled == True
    - name: fetch
      get_url: url=https://example.com/a dest=/tmp/a
";
        let f = smells(text);
        assert_eq!(ids(&f), ["I001", "I002", "I003", "I004", "I005", "S007"]);
        assert_eq!(f[3].data["replacement"], json!("include_tasks"));
        assert_eq!(f[4].data["fixed_when"], json!("enabled"));
    }

    #[test]
    fn design_smells_with_overrides() {
        let mut text = String::from("- hosts: all\n  tasks:\n");
        for i in 0..4 {
            text.push_str(&format!("    - name: t{i}\n      debug: msg={}\n", i % 3));
        }
        let pb = parse_playbook(&text, "p.yml").unwrap();
        let c = Catalog::builtin();
        let mut cfg = RuleConfig::default();
        cfg.overrides.entry("D001".into()).or_default().insert("max_tasks".into(), json!(3));
        let f = detect_playbook_smells(&pb, &text, &RuleContext::new(&c, &cfg));
        assert_eq!(ids(&f), ["D001", "D002"]);
        assert_eq!(f[1].span.start_line, 9);
    }

    #[test]
    fn monolithic_playbook() {
        let mut text = String::new();
        for i in 0..4 {
            text.push_str(&format!("- hosts: h{i}\n  tasks:\n"));
            for j in 0..13 {
                text.push_str(&format!(
                    "    - name: t{i}-{j}\n      debug:\n        msg: m{i}-{j}\n        verbosity: 0\n"
                ));
            }
        }
        let f = smells(&text);
        assert_eq!(ids(&f), ["D003"]);
    }

    #[test]
    fn simplify_boolean_comparisons() {
        assert_eq!(simplify_bool_compare("a == true and b == False"), "a and not b");
    }

    fn topo_smells(text: &str) -> Vec<Finding> {
        let t = parse_tosca(text, "t.yaml").unwrap();
        let c = Catalog::builtin();
        let cfg = RuleConfig::default();
        detect_topology_smells(&t, &RuleContext::new(&c, &cfg))
    }

    #[test]
    fn topology_smells() {
        let text = "topology_template:\n  inputs:\n    root_password: {type: string, default: s3cret}\n  node_templates:\n    db:\n      type: tosca.nodes.Root\n      properties:\n        db_password: ''\n        admin_password: { get_input: pw }\n        admin_user: root\n        listen: 0.0.0.0\n";
        let f = topo_smells(text);
        assert_eq!(ids(&f), ["S001", "S002", "S003", "S004"]);
        assert_eq!(f[0].data["input_name"], json!("root_password"));
        assert_eq!(f[1].data["secret_ref"], json!("{ get_input: db_password }"));
    }

    #[test]
    fn god_node() {
        let mut text = String::from(
            "topology_template:\n  node_templates:\n    hub:\n      type: tosca.nodes.Root\n      requirements:\n",
        );
        for i in 0..11 {
            text.push_str(&format!("        - dependency: n{i}\n"));
        }
        assert_eq!(ids(&topo_smells(&text)), ["D010"]);
    }

    #[test]
    fn categories() {
        let c = Catalog::builtin();
        let f = smells("- hosts: all\n  vars:\n    bind: 0.0.0.0\n  tasks:\n    - apt: name=git\n");
        let cats: Vec<_> = f.iter().map(|f| category_of(f, &c).unwrap()).collect();
        assert_eq!(cats, [Category::Security, Category::Implementation]);
        let mut bogus = f[0].clone();
        bogus.rule_id = "Z999".into();
        assert!(category_of(&bogus, &c).is_err());
    }
}
