//! Generated CSARs with a manifest of every finding they are built to contain.
//!
//! Each archive starts from a clean base (a linear chain of application nodes
//! with one playbook each) and receives injected defects. Spans in the manifest
//! are recorded while the text is written, from the layout conventions: a
//! scalar spans its token (quotes included), a task or play spans from its
//! first key to the end of its last scalar, a named node or type spans from
//! its name, a comment spans from `#` to the end of its line.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;

/// (rule id, file, start byte, end byte)
pub type Expected = (String, String, usize, usize);

#[derive(Debug, Clone)]
pub struct Case {
    pub name: String,
    pub files: BTreeMap<String, String>,
    pub expected: BTreeSet<Expected>,
    /// Number of defects injected (one injection may imply several findings).
    pub injections: usize,
}

/// Every rule the corpus can inject, in round-robin order.
pub const INJECTABLE: &[&str] = &[
    "E001", "E002", "E003", "E003a", "E004", "E005", "E006", "E007", "P001", "S001", "S002", "S003", "S004", "S005",
    "S006", "S007", "S008", "I001", "I002", "I003", "I004", "I005", "D001", "D002", "D003", "D010",
];

/// Rules that only appear as consequences of another injection.
pub const IMPLIED: &[&str] = &["W101", "W102"];

struct Writer {
    text: String,
    marks: Vec<(&'static str, usize, usize)>,
}

impl Writer {
    fn new() -> Self {
        Writer { text: String::new(), marks: Vec::new() }
    }

    fn line(&mut self, indent: usize, s: &str) -> usize {
        let start = self.text.len() + indent;
        self.text.push_str(&" ".repeat(indent));
        self.text.push_str(s);
        self.text.push('\n');
        start
    }

    /// Write a line and mark the last occurrence of `token` in it.
    fn line_token(&mut self, indent: usize, s: &str, token: &str, rule: &'static str) {
        let start = self.line(indent, s);
        let at = s.rfind(token).expect("token in line");
        self.marks.push((rule, start + at, start + at + token.len()));
    }

    /// End of the content written so far, without the final newline.
    fn content_end(&self) -> usize {
        self.text.trim_end_matches('\n').len()
    }
}

#[derive(Clone)]
struct Task {
    /// First line follows `- `; the rest are relative to the key column.
    lines: Vec<String>,
    whole: Option<&'static str>,
    token: Option<(usize, String, &'static str)>,
}

impl Task {
    fn new(lines: &[&str]) -> Self {
        Task { lines: lines.iter().map(|s| s.to_string()).collect(), whole: None, token: None }
    }

    fn whole(mut self, rule: &'static str) -> Self {
        self.whole = Some(rule);
        self
    }

    fn token(mut self, line: usize, token: &str, rule: &'static str) -> Self {
        self.token = Some((line, token.to_owned(), rule));
        self
    }

    fn write(&self, w: &mut Writer, indent: usize) {
        let mut start = 0;
        for (i, l) in self.lines.iter().enumerate() {
            let (ind, text) = if i == 0 { (indent, format!("- {l}")) } else { (indent + 2, l.clone()) };
            match &self.token {
                Some((li, tok, rule)) if *li == i => w.line_token(ind, &text, tok, rule),
                _ => {
                    let s = w.line(ind, &text);
                    if i == 0 {
                        start = s + 2;
                    }
                }
            }
            if i == 0 && self.token.as_ref().is_some_and(|t| t.0 == 0) {
                start = w.text.len() - text.len() - 1 + 2;
            }
        }
        if let Some(rule) = self.whole {
            w.marks.push((rule, start, w.content_end()));
        }
    }
}

#[derive(Clone)]
enum Item {
    Task(Task),
    Comment(String, Option<&'static str>),
}

#[derive(Clone, Default)]
struct Play {
    hosts: String,
    vars: Vec<(String, String, Option<&'static str>)>,
    tasks: Vec<Item>,
    handlers: Vec<Task>,
    whole: Option<&'static str>,
}

impl Play {
    fn write(&self, w: &mut Writer) {
        let start = w.line(0, &format!("- hosts: {}", self.hosts)) + 2;
        w.line(2, "become: true");
        if !self.vars.is_empty() {
            w.line(2, "vars:");
            for (k, v, rule) in &self.vars {
                let line = format!("{k}: {v}");
                match rule {
                    Some(r) => w.line_token(4, &line, v, r),
                    None => {
                        w.line(4, &line);
                    }
                }
            }
        }
        w.line(2, "tasks:");
        for item in &self.tasks {
            match item {
                Item::Task(t) => t.write(w, 4),
                Item::Comment(c, rule) => {
                    let s = w.line(4, c);
                    if let Some(r) = rule {
                        w.marks.push((r, s, s + c.len()));
                    }
                }
            }
        }
        if !self.handlers.is_empty() {
            w.line(2, "handlers:");
            for h in &self.handlers {
                h.write(w, 4);
            }
        }
        if let Some(rule) = self.whole {
            w.marks.push((rule, start, w.content_end()));
        }
    }

    fn task_count(&self) -> usize {
        self.tasks.iter().filter(|i| matches!(i, Item::Task(_))).count()
    }
}

#[derive(Clone, Default)]
struct Playbook {
    plays: Vec<Play>,
    whole: Option<&'static str>,
}

impl Playbook {
    fn render(&self) -> (String, Vec<(&'static str, usize, usize)>) {
        let mut w = Writer::new();
        for p in &self.plays {
            p.write(&mut w);
        }
        if let Some(rule) = self.whole {
            w.marks.push((rule, 0, w.content_end()));
        }
        (w.text, w.marks)
    }
}

#[derive(Clone, Default)]
struct Node {
    name: String,
    type_name: String,
    props: Vec<(String, String, Option<&'static str>)>,
    /// Each requirement is a list of lines; the first follows `- `.
    reqs: Vec<(Vec<String>, Option<&'static str>)>,
    artifact: Option<String>,
    whole: Vec<&'static str>,
}

impl Node {
    fn write(&self, w: &mut Writer) {
        let start = w.line(4, &format!("{}:", self.name));
        w.line(6, &format!("type: {}", self.type_name));
        if !self.props.is_empty() {
            w.line(6, "properties:");
            for (k, v, rule) in &self.props {
                let line = format!("{k}: {v}");
                match rule {
                    Some(r) => w.line_token(8, &line, v, r),
                    None => {
                        w.line(8, &line);
                    }
                }
            }
        }
        if !self.reqs.is_empty() {
            w.line(6, "requirements:");
            for (lines, rule) in &self.reqs {
                let s = w.line(8, &format!("- {}", lines[0])) + 2;
                for l in &lines[1..] {
                    w.line(10, l);
                }
                if let Some(r) = rule {
                    w.marks.push((r, s, w.content_end()));
                }
            }
        }
        if let Some(a) = &self.artifact {
            w.line(6, "artifacts:");
            w.line(8, &format!("install: {a}"));
        }
        for r in &self.whole {
            w.marks.push((r, start, w.content_end()));
        }
    }
}

struct TypeDef {
    name: String,
    lines: Vec<String>,
    whole: Option<&'static str>,
}

struct Goal {
    threshold: f64,
    at: f64,
    data: String,
    violated: bool,
}

struct Builder {
    case: String,
    types: Vec<TypeDef>,
    inputs: Vec<(String, String, Option<&'static str>)>,
    nodes: Vec<Node>,
    /// Rendered after all other nodes.
    duplicates: Vec<Node>,
    playbooks: BTreeMap<String, Playbook>,
    /// Node each playbook is bound to.
    goals: Vec<Goal>,
    csv: BTreeMap<String, String>,
    /// Last node of the dependency chain.
    prev: String,
    blocked: Vec<String>,
    counter: usize,
}

const APP_TYPE: &str = "corp.nodes.App";

impl Builder {
    fn fresh(&mut self) -> usize {
        self.counter += 1;
        self.counter
    }

    fn chain_node(&mut self, name: String, type_name: &str) -> &mut Node {
        let node = Node {
            name: name.clone(),
            type_name: type_name.to_owned(),
            reqs: vec![(vec![format!("dependency: {}", self.prev)], None)],
            ..Node::default()
        };
        self.prev = name;
        self.nodes.push(node);
        self.nodes.last_mut().unwrap()
    }

    fn base_playbook_names(&self) -> Vec<String> {
        self.playbooks.keys().filter(|k| k.contains("/base_")).cloned().collect()
    }

    /// The single play of a base playbook with the fewest tasks.
    fn target_play<R: Rng>(&mut self, rng: &mut R) -> &mut Play {
        let mut names = self.base_playbook_names();
        names.shuffle(rng);
        let name = names.into_iter().min_by_key(|n| self.playbooks[n].plays[0].task_count()).expect("base playbook");
        &mut self.playbooks.get_mut(&name).unwrap().plays[0]
    }

    fn add_task<R: Rng>(&mut self, rng: &mut R, task: Task) {
        let play = self.target_play(rng);
        let at = rng.random_range(0..=play.tasks.len());
        play.tasks.insert(at, Item::Task(task));
    }

    fn add_var<R: Rng>(&mut self, rng: &mut R, key: String, value: String, rule: &'static str) {
        let play = self.target_play(rng);
        play.vars.push((key, value, Some(rule)));
    }

    fn inject<R: Rng>(&mut self, rng: &mut R, rule: &'static str) {
        let i = self.fresh();
        match rule {
            "E001" => {
                let node = self.chain_node(format!("orphan{i}"), "tosca.nodes.Root");
                node.reqs.push((vec![format!("dependency: ghost{i}")], Some("E001")));
            }
            "E002" => {
                let target = self.prev.clone();
                let node = self.chain_node(format!("misfit{i}"), "tosca.nodes.Root");
                node.reqs = vec![(
                    vec![
                        "host:".into(),
                        format!("  node: {target}"),
                        "  capability: tosca.capabilities.Compute".into(),
                    ],
                    Some("E002"),
                )];
            }
            "E003" => {
                let node = self.chain_node(format!("stray{i}"), &format!("corp.nodes.Missing{i}"));
                node.whole.push("E003");
            }
            "E003a" => {
                let (a, b) = (format!("corp.loop{i}.A"), format!("corp.loop{i}.B"));
                self.types.push(TypeDef {
                    name: a.clone(),
                    lines: vec![format!("derived_from: {b}")],
                    whole: Some("E003a"),
                });
                self.types.push(TypeDef { name: b, lines: vec![format!("derived_from: {a}")], whole: None });
            }
            "E004" => {
                let node = self.chain_node(format!("bare{i}"), APP_TYPE);
                node.whole.push("E004");
            }
            "E005" => {
                let node = self.chain_node(format!("ranged{i}"), APP_TYPE);
                let port = 65536 + i;
                node.props.push(("port".into(), port.to_string(), Some("E005")));
            }
            "E006" => {
                let (a, b) = (format!("loop{i}a"), format!("loop{i}b"));
                for (me, other, rules) in [(&a, &b, vec!["E006", "W102"]), (&b, &a, vec!["W102"])] {
                    self.nodes.push(Node {
                        name: me.clone(),
                        type_name: "tosca.nodes.Root".into(),
                        reqs: vec![(vec![format!("dependency: {other}")], None)],
                        whole: rules,
                        ..Node::default()
                    });
                }
                self.blocked.extend([a, b]);
            }
            "E007" => {
                let name = format!("twin{i}");
                self.chain_node(name.clone(), "tosca.nodes.Root");
                self.duplicates.push(Node {
                    name,
                    type_name: "tosca.nodes.Root".into(),
                    whole: vec!["E007"],
                    ..Node::default()
                });
            }
            "P001" => {
                let data = format!("bench/run{i}.csv");
                self.add_bench(&data, i);
                // the data follow y = 10 + 2x exactly
                let at = 50.0 + i as f64;
                self.goals.push(Goal { threshold: 10.0 + 2.0 * at - 5.0, at, data, violated: true });
            }
            "S001" => match rng.random_range(0..4) {
                0 => {
                    let task = Task::new(&[
                        &format!("name: create database user {i}"),
                        "mysql_user:",
                        &format!("  name: app{i}"),
                        &format!("  password: Pw{i}-secret"),
                    ])
                    .token(3, &format!("Pw{i}-secret"), "S001");
                    self.add_task(rng, task);
                }
                1 => self.add_var(rng, format!("db{i}_password"), format!("Hunter{i}x"), "S001"),
                2 => {
                    let node = self.chain_node(format!("vault{i}"), "tosca.nodes.Root");
                    node.props.push(("db_password".into(), format!("S3cret{i}"), Some("S001")));
                }
                _ => self.inputs.push((format!("db{i}_password"), format!("Default{i}"), Some("S001"))),
            },
            "S002" => match rng.random_range(0..3) {
                0 => {
                    let task = Task::new(&[
                        &format!("name: create service account {i}"),
                        "mysql_user:",
                        &format!("  name: svc{i}"),
                        "  password: ''",
                    ])
                    .token(3, "''", "S002");
                    self.add_task(rng, task);
                }
                1 => self.add_var(rng, format!("api{i}_token"), "\"\"".into(), "S002"),
                _ => {
                    let node = self.chain_node(format!("open{i}"), "tosca.nodes.Root");
                    node.props.push(("admin_password".into(), "''".into(), Some("S002")));
                }
            },
            "S003" => {
                if rng.random_bool(0.5) {
                    let task = Task::new(&[
                        &format!("name: create operator {i}"),
                        "user:",
                        "  name: admin",
                        &format!("  comment: operator {i}"),
                    ])
                    .token(2, "admin", "S003");
                    self.add_task(rng, task);
                } else {
                    let node = self.chain_node(format!("super{i}"), "tosca.nodes.Root");
                    node.props.push(("admin_user".into(), "root".into(), Some("S003")));
                }
            }
            "S004" => {
                if rng.random_bool(0.5) {
                    self.add_var(rng, format!("bind{i}_address"), "0.0.0.0".into(), "S004");
                } else {
                    let node = self.chain_node(format!("exposed{i}"), "tosca.nodes.Root");
                    node.props.push(("listen_address".into(), "0.0.0.0".into(), Some("S004")));
                }
            }
            "S005" => {
                let url = format!("http://mirror{i}.example.org/repo");
                if rng.random_bool(0.5) {
                    self.add_var(rng, format!("mirror{i}_url"), url, "S005");
                } else {
                    let node = self.chain_node(format!("plain{i}"), "tosca.nodes.Root");
                    node.props.push(("endpoint".into(), url, Some("S005")));
                }
            }
            "S006" => {
                let marker = ["TODO", "FIXME", "HACK"][i % 3];
                let comment = format!("# {marker}: revisit batch {i}");
                let play = self.target_play(rng);
                let at = rng.random_range(0..=play.tasks.len());
                play.tasks.insert(at, Item::Comment(comment, Some("S006")));
            }
            "S007" => {
                let task = Task::new(&[
                    &format!("name: fetch package {i}"),
                    "get_url:",
                    &format!("  url: https://downloads.example.org/pkg{i}.tgz"),
                    &format!("  dest: /tmp/pkg{i}.tgz"),
                ])
                .whole("S007");
                self.add_task(rng, task);
            }
            "S008" => {
                if rng.random_bool(0.5) {
                    self.add_var(rng, format!("hash{i}_algorithm"), "md5".into(), "S008");
                } else {
                    let node = self.chain_node(format!("signer{i}"), "tosca.nodes.Root");
                    node.props.push(("signature_algorithm".into(), "sha1".into(), Some("S008")));
                }
            }
            "I001" => {
                let task = Task::new(&["apt:", &format!("  name: tool{i}"), "  state: present"]).whole("I001");
                self.add_task(rng, task);
            }
            "I002" => {
                let task = Task::new(&[&format!("name: build tree {i}"), &format!("command: make -C /srv/build{i}")])
                    .whole("I002");
                self.add_task(rng, task);
            }
            "I003" => {
                let task = Task::new(&[
                    &format!("name: touch marker {i}"),
                    "file:",
                    &format!("  path: /var/run/marker{i}"),
                    "  state: touch",
                    "ignore_errors: true",
                ])
                .whole("I003");
                self.add_task(rng, task);
            }
            "I004" => {
                let task =
                    Task::new(&[&format!("name: include part {i}"), &format!("include: part{i}.yml")]).whole("I004");
                self.add_task(rng, task);
            }
            "I005" => {
                let value = if i.is_multiple_of(2) { "true" } else { "False" };
                let task = Task::new(&[
                    &format!("name: report {i}"),
                    "debug:",
                    &format!("  msg: ready {i}"),
                    &format!("when: ready{i} == {value}"),
                ])
                .whole("I005");
                self.add_task(rng, task);
            }
            "D001" => {
                let tasks = (0..21)
                    .map(|j| {
                        Item::Task(Task::new(&[
                            &format!("name: step {j}"),
                            "debug:",
                            &format!("  msg: long {i} step {j}"),
                        ]))
                    })
                    .collect();
                let play = Play { hosts: format!("long{i}"), tasks, whole: Some("D001"), ..Play::default() };
                let path = format!("playbooks/long{i}.yml");
                self.playbooks.insert(path.clone(), Playbook { plays: vec![play], whole: None });
                self.chain_node(format!("long{i}"), "tosca.nodes.Root").artifact = Some(path);
            }
            "D002" => {
                let body =
                    ["copy:".to_string(), format!("  src: files/sync{i}.conf"), format!("  dest: /etc/sync{i}.conf")];
                let first = [&[format!("name: sync {i}")], &body[..]].concat();
                let second = [&[format!("name: sync again {i}")], &body[..]].concat();
                let play = self.target_play(rng);
                let at = rng.random_range(0..=play.tasks.len());
                let t = |lines: &[String]| Task::new(&lines.iter().map(String::as_str).collect::<Vec<_>>());
                play.tasks.insert(at, Item::Task(t(&second).whole("D002")));
                play.tasks.insert(at, Item::Task(t(&first)));
            }
            "D003" => {
                let plays = (0..4)
                    .map(|p| Play {
                        hosts: format!("tier{p}"),
                        tasks: (0..13)
                            .map(|j| {
                                Item::Task(Task::new(&[
                                    &format!("name: tier {p} item {j}"),
                                    "debug:",
                                    &format!("  msg: mono {i} tier {p} item {j}"),
                                    "  verbosity: 1",
                                ]))
                            })
                            .collect(),
                        ..Play::default()
                    })
                    .collect();
                let path = format!("playbooks/mono{i}.yml");
                self.playbooks.insert(path.clone(), Playbook { plays, whole: Some("D003") });
                self.chain_node(format!("mono{i}"), "tosca.nodes.Root").artifact = Some(path);
            }
            "D010" => {
                let target = self.prev.clone();
                let node = self.chain_node(format!("hub{i}"), "tosca.nodes.Root");
                node.reqs = (0..11).map(|_| (vec![format!("dependency: {target}")], None)).collect();
                node.whole.push("D010");
            }
            other => panic!("no injector for {other}"),
        }
    }

    fn add_bench(&mut self, path: &str, i: usize) {
        let label = ["LINPACK", "STREAM"][i % 2];
        let mut csv = format!("# source: {label}\nload,latency\n");
        for x in 0..8 {
            csv.push_str(&format!("{},{}\n", x * 10, 10 + 2 * x * 10));
        }
        self.csv.insert(path.to_owned(), csv);
    }

    fn render(mut self) -> (BTreeMap<String, String>, BTreeSet<Expected>) {
        let mut files = BTreeMap::new();
        let mut expected = BTreeSet::new();
        let mut record = |file: &str, marks: Vec<(&'static str, usize, usize)>| {
            for (r, s, e) in marks {
                expected.insert((r.to_owned(), file.to_owned(), s, e));
            }
        };

        if let Some(first) = self.blocked.iter().min().cloned() {
            self.nodes.iter_mut().find(|n| n.name == first).unwrap().whole.push("W101");
        }

        let mut w = Writer::new();
        w.line(0, "tosca_definitions_version: tosca_simple_yaml_1_3");
        w.line(0, "");
        w.line(0, &format!("description: generated service {}", self.case));
        w.line(0, "");
        w.line(0, "node_types:");
        w.line(2, &format!("{APP_TYPE}:"));
        for l in [
            "derived_from: tosca.nodes.SoftwareComponent",
            "properties:",
            "  port:",
            "    type: integer",
            "    required: true",
            "    constraints:",
            "      - in_range: [1, 65535]",
            "  install_dir:",
            "    type: string",
            "    default: /opt/app",
        ] {
            w.line(4, l);
        }
        for t in &self.types {
            let start = w.line(2, &format!("{}:", t.name));
            for l in &t.lines {
                w.line(4, l);
            }
            if let Some(r) = t.whole {
                w.marks.push((r, start, w.content_end()));
            }
        }
        w.line(0, "");
        w.line(0, "topology_template:");
        w.line(2, "inputs:");
        w.line(4, "app_port:");
        w.line(6, "type: integer");
        w.line(6, "default: 8080");
        for (name, default, rule) in &self.inputs {
            w.line(4, &format!("{name}:"));
            w.line(6, "type: string");
            let line = format!("default: {default}");
            match rule {
                Some(r) => w.line_token(6, &line, default, r),
                None => {
                    w.line(6, &line);
                }
            }
        }
        w.line(2, "node_templates:");
        for n in self.nodes.iter().chain(&self.duplicates) {
            n.write(&mut w);
        }
        files.insert("service.yaml".to_owned(), w.text);
        record("service.yaml", w.marks);

        for (path, pb) in &self.playbooks {
            let (text, marks) = pb.render();
            files.insert(path.clone(), text);
            record(path, marks);
        }

        if !self.goals.is_empty() {
            let mut w = Writer::new();
            for g in &self.goals {
                let start = w.line(0, "- response: latency") + 2;
                w.line(2, "comparator: '<='");
                w.line(2, &format!("threshold: {}", g.threshold));
                w.line(2, &format!("at: {}", g.at));
                w.line(2, &format!("data: {}", g.data));
                w.line(2, "degree: 1");
                if g.violated {
                    w.marks.push(("P001", start, w.content_end()));
                }
            }
            files.insert("goals.yaml".to_owned(), w.text);
            record("goals.yaml", w.marks);
        }
        files.extend(self.csv);
        (files, expected)
    }
}

const CLEAN_TASKS: &[&[&str]] = &[
    &["name: install {pkg}", "apt:", "  name: {pkg}", "  state: present"],
    &[
        "name: render {node} config",
        "template:",
        "  src: templates/{node}.conf.j2",
        "  dest: /etc/{node}/{node}.conf",
        "  mode: '0644'",
    ],
    &["name: create {node} directory", "file:", "  path: /opt/{node}", "  state: directory", "  owner: {node}"],
    &["name: add {node} account", "user:", "  name: {node}", "  shell: /usr/sbin/nologin", "  system: true"],
    &[
        "name: tune {node} limits",
        "lineinfile:",
        "  path: /etc/security/limits.d/{node}.conf",
        "  line: '{node} soft nofile 65536'",
        "  create: true",
    ],
    &["name: report {node} version", "debug:", "  msg: '{node} ready'"],
    &["name: copy {node} unit", "copy:", "  src: files/{node}.service", "  dest: /etc/systemd/system/{node}.service"],
];

const PACKAGES: &[&str] =
    &["nginx", "postgresql", "redis-server", "openjdk-17-jre", "python3-venv", "haproxy", "slurm-client"];

fn clean_playbook<R: Rng>(rng: &mut R, node: &str) -> Playbook {
    let mut picks: Vec<usize> = (0..CLEAN_TASKS.len()).collect();
    picks.shuffle(rng);
    let n = rng.random_range(3..=5);
    let pkg = PACKAGES[rng.random_range(0..PACKAGES.len())];
    let mut tasks: Vec<Item> = picks[..n]
        .iter()
        .map(|&k| {
            let lines: Vec<String> =
                CLEAN_TASKS[k].iter().map(|l| l.replace("{node}", node).replace("{pkg}", pkg)).collect();
            Item::Task(Task::new(&lines.iter().map(String::as_str).collect::<Vec<_>>()))
        })
        .collect();
    let mut handlers = Vec::new();
    if rng.random_bool(0.5) {
        tasks.push(Item::Task(Task::new(&[
            &format!("name: enable {node} service"),
            "service:",
            &format!("  name: {node}"),
            "  enabled: true",
            &format!("notify: restart {node}"),
        ])));
        handlers.push(Task::new(&[
            &format!("name: restart {node}"),
            "service:",
            &format!("  name: {node}"),
            "  state: restarted",
        ]));
    }
    if rng.random_bool(0.4) {
        tasks.push(Item::Task(Task::new(&[
            &format!("name: migrate {node} schema"),
            &format!("command: /opt/{node}/bin/migrate creates=/opt/{node}/.migrated"),
            "when: run_migrations | bool",
        ])));
    }
    if rng.random_bool(0.5) {
        tasks.insert(0, Item::Comment(format!("# configuration for {node}"), None));
    }
    let vars = vec![
        ("app_dir".to_owned(), format!("/opt/{node}"), None),
        ("app_port".to_owned(), rng.random_range(1024..9000).to_string(), None),
    ];
    Playbook { plays: vec![Play { hosts: node.to_owned(), vars, tasks, handlers, whole: None }], whole: None }
}

fn base<R: Rng>(rng: &mut R, case: &str) -> Builder {
    let mut b = Builder {
        case: case.to_owned(),
        types: Vec::new(),
        inputs: Vec::new(),
        nodes: Vec::new(),
        duplicates: Vec::new(),
        playbooks: BTreeMap::new(),
        goals: Vec::new(),
        csv: BTreeMap::new(),
        prev: "vm".into(),
        blocked: Vec::new(),
        counter: 0,
    };
    b.nodes.push(Node {
        name: "vm".into(),
        type_name: "tosca.nodes.Compute".into(),
        props: vec![("flavor".into(), "m1.medium".into(), None)],
        ..Node::default()
    });
    let roles = ["web", "api", "db", "cache", "worker"];
    let count = rng.random_range(2..=3);
    for role in &roles[..count] {
        let name = role.to_string();
        let path = format!("playbooks/base_{name}.yml");
        b.playbooks.insert(path.clone(), clean_playbook(rng, &name));
        let prev = b.prev.clone();
        let node = b.chain_node(name.clone(), APP_TYPE);
        node.reqs = vec![(vec!["host: vm".into()], None), (vec![format!("dependency: {prev}")], None)];
        node.reqs.dedup();
        node.props = vec![
            ("port".into(), "{ get_input: app_port }".into(), None),
            ("install_dir".into(), format!("/srv/{name}"), None),
        ];
        node.artifact = Some(path);
    }
    if rng.random_bool(0.5) {
        let data = "bench/baseline.csv".to_owned();
        b.add_bench(&data, 0);
        b.goals.push(Goal { threshold: 10.0 + 2.0 * 40.0 + 25.0, at: 40.0, data, violated: false });
    }
    b
}

/// `clean` archives with no injections followed by `injected` archives with
/// `per_case` injections each; rules are assigned round-robin from `INJECTABLE`.
pub fn generate<R: Rng>(rng: &mut R, clean: usize, injected: usize, per_case: usize) -> Vec<Case> {
    let mut cases = Vec::new();
    let mut next_rule = 0;
    for c in 0..clean + injected {
        let name = format!("case{c:03}");
        let mut b = base(rng, &name);
        let mut injections = 0;
        if c >= clean {
            let mut rules: Vec<&'static str> = Vec::new();
            while rules.len() < per_case {
                let rule = INJECTABLE[next_rule % INJECTABLE.len()];
                next_rule += 1;
                // at most one cycle and one monolith per archive keeps the state space small
                if (rule == "E006" || rule == "D003") && rules.contains(&rule) {
                    continue;
                }
                rules.push(rule);
            }
            for r in rules {
                b.inject(rng, r);
                injections += 1;
            }
        }
        let (files, expected) = b.render();
        cases.push(Case { name, files, expected, injections });
    }
    cases
}

impl Case {
    /// The case as an in-memory CSAR.
    pub fn archive(&self) -> Result<deployqa::csar::CsarArchive, deployqa::csar::LoadError> {
        let files = self.files.iter().map(|(k, v)| (k.clone(), v.as_bytes().to_vec())).collect();
        deployqa::csar::load_from_files(std::path::PathBuf::from(&self.name), files, false)
    }
}
