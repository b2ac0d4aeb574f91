//! Construction of the provisioning workflow net.
//!
//! Each node template gets the lifecycle chain
//! `p_ready -> t_create -> p_created -> configure -> p_configured -> t_start -> p_started`.
//! A dependency `A -> B` adds a test arc from `p_started_B` to `t_create_A`,
//! so a dependency cycle shows up as a deadlock in the initial marking. The
//! configure segment is `t_configure` alone, or one transition per task of the
//! bound playbook, with `when` and `rescue` as nondeterministic choices.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use super::{Origin, PetriNet};
use crate::ir::{Play, PlaybookModel, TaskKind, TaskNode, TopologyModel};
use crate::verifier::dependency_graph;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("playbook bound to unknown node `{0}`")]
pub struct UnboundPlaybook(pub String);

/// Identifier-safe form of a node name; collisions get a numeric suffix.
fn sanitize(name: &str, used: &mut BTreeSet<String>) -> String {
    let base: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.' { c } else { '_' })
        .collect();
    let mut id = base.clone();
    let mut k = 2;
    while !used.insert(id.clone()) {
        id = format!("{base}_{k}");
        k += 1;
    }
    id
}

struct Builder<'a> {
    net: PetriNet,
    node: String,
    counter: usize,
    node_origin: &'a Origin,
}

struct PlayHandlers {
    /// handler index -> notification place
    places: BTreeMap<usize, String>,
    /// notify name -> handler indices
    by_name: HashMap<String, Vec<usize>>,
}

impl Builder<'_> {
    fn fresh(&mut self) -> usize {
        self.counter += 1;
        self.counter
    }

    fn step_place(&mut self, k: usize) -> String {
        let id = format!("p_step_{}_{k}", self.node);
        self.net.place(id, format!("{} step {k}", self.node))
    }

    fn task_origin(task: &TaskNode) -> Origin {
        Origin { subject: task.pointer.clone(), span: Some(task.span.clone()) }
    }

    fn task_label(task: &TaskNode) -> String {
        task.name.clone().or_else(|| task.module.clone()).unwrap_or_else(|| "block".into())
    }

    fn chain(&mut self, tasks: &[TaskNode], mut cur: String, handlers: &PlayHandlers) -> String {
        for task in tasks {
            cur = self.task(task, cur, handlers);
        }
        cur
    }

    fn task(&mut self, task: &TaskNode, pre: String, handlers: &PlayHandlers) -> String {
        let k = self.fresh();
        let label = Self::task_label(task);
        let origin = Self::task_origin(task);
        let node = self.node.clone();
        match task.kind {
            TaskKind::Task => {
                let post = self.step_place(k);
                let run = if task.when_expr.is_some() {
                    let skip =
                        self.net.transition(format!("t_skip_{node}_{k}"), format!("skip {label}"), origin.clone());
                    self.net.arc(&pre, &skip);
                    self.net.arc(&skip, &post);
                    format!("t_exec_{node}_{k}")
                } else {
                    format!("t_task_{node}_{k}")
                };
                let run = self.net.transition(run, label, origin);
                self.net.arc(&pre, &run);
                self.net.arc(&run, &post);
                for name in &task.notify {
                    for h in handlers.by_name.get(name).into_iter().flatten() {
                        self.net.arc(&run, &handlers.places[h]);
                    }
                }
                post
            }
            TaskKind::Block => {
                let mut inner = pre.clone();
                let mut skip_to = None;
                if task.when_expr.is_some() {
                    let start = self.step_place(k);
                    let enter =
                        self.net.transition(format!("t_exec_{node}_{k}"), format!("enter {label}"), origin.clone());
                    let skip =
                        self.net.transition(format!("t_skip_{node}_{k}"), format!("skip {label}"), origin.clone());
                    self.net.arc(&pre, &enter);
                    self.net.arc(&enter, &start);
                    self.net.arc(&pre, &skip);
                    skip_to = Some(skip);
                    inner = start;
                }
                let mut end = self.chain(&task.children, inner.clone(), handlers);
                if !task.rescue.is_empty() {
                    let k2 = self.fresh();
                    let rescue_start = self.step_place(k2);
                    let fail =
                        self.net.transition(format!("t_fail_{node}_{k2}"), format!("fail {label}"), origin.clone());
                    self.net.arc(&end, &fail);
                    self.net.arc(&fail, &rescue_start);
                    let converge = self.chain(&task.rescue, rescue_start, handlers);
                    let ok =
                        self.net.transition(format!("t_ok_{node}_{k2}"), format!("succeed {label}"), origin.clone());
                    self.net.arc(&end, &ok);
                    self.net.arc(&ok, &converge);
                    end = converge;
                }
                end = self.chain(&task.always, end, handlers);
                if end == pre || (skip_to.is_some() && end == inner) {
                    // nothing inside the block: keep the chain moving with a no-op step
                    let fresh = self.fresh();
                    let post = self.step_place(fresh);
                    let noop = self.net.transition(format!("t_task_{node}_{k}"), label, origin);
                    self.net.arc(&end, &noop);
                    self.net.arc(&noop, &post);
                    end = post;
                }
                if let Some(skip) = skip_to {
                    self.net.arc(&skip, &end);
                }
                end
            }
        }
    }

    fn play(&mut self, play_index: usize, play: &Play, cur: String) -> String {
        let notified: BTreeSet<&str> = {
            fn collect<'t>(tasks: &'t [TaskNode], out: &mut BTreeSet<&'t str>) {
                for t in tasks {
                    out.extend(t.notify.iter().map(String::as_str));
                    collect(&t.children, out);
                    collect(&t.rescue, out);
                    collect(&t.always, out);
                }
            }
            let mut out = BTreeSet::new();
            collect(&play.tasks, &mut out);
            out
        };
        let mut handlers = PlayHandlers { places: BTreeMap::new(), by_name: HashMap::new() };
        for (i, h) in play.handlers.iter().enumerate() {
            let names: Vec<&str> = h.name.iter().chain(&h.listen).map(String::as_str).collect();
            let hit: Vec<&str> = names.into_iter().filter(|n| notified.contains(n)).collect();
            if hit.is_empty() {
                continue;
            }
            let id = format!("p_notified_{}_p{play_index}_h{i}", self.node);
            self.net.places.push(super::Place {
                id: id.clone(),
                label: format!("{} notified", Self::task_label(h)),
                mergeable: true,
            });
            handlers.places.insert(i, id);
            for n in hit {
                handlers.by_name.entry(n.to_owned()).or_default().push(i);
            }
        }

        let mut cur = self.chain(&play.tasks, cur, &handlers);
        let node = self.node.clone();
        for (&i, notified_place) in &handlers.places.clone() {
            let h = &play.handlers[i];
            let label = Self::task_label(h);
            let origin = Self::task_origin(h);
            let fresh = self.fresh();
            let post = self.step_place(fresh);
            let flush = self.net.transition(
                format!("t_flush_{node}_p{play_index}_h{i}"),
                format!("run {label}"),
                origin.clone(),
            );
            let noflush =
                self.net.transition(format!("t_noflush_{node}_p{play_index}_h{i}"), format!("no {label}"), origin);
            self.net.arc(&cur, &flush);
            self.net.arc(notified_place, &flush);
            self.net.arc(&flush, &post);
            self.net.arc(&cur, &noflush);
            self.net.arc(&noflush, &post);
            cur = post;
        }
        cur
    }
}

/// Build the workflow net for a topology. `playbooks` maps node template
/// names to their bound playbooks.
pub fn build_workflow_net(
    topology: &TopologyModel,
    playbooks: &BTreeMap<String, PlaybookModel>,
) -> Result<PetriNet, UnboundPlaybook> {
    let graph = dependency_graph(topology);
    if let Some(name) = playbooks.keys().find(|n| !graph.vertices.contains(n)) {
        return Err(UnboundPlaybook(name.clone()));
    }
    let mut used = BTreeSet::new();
    let ids: HashMap<&str, String> = graph.vertices.iter().map(|n| (n.as_str(), sanitize(n, &mut used))).collect();

    let mut net = PetriNet::default();
    for name in &graph.vertices {
        let node = crate::ir::resolve_node(topology, name).expect("graph vertices are templates");
        let id = &ids[name.as_str()];
        let origin = Origin { subject: node.pointer.clone(), span: Some(node.span.clone()) };

        let ready = net.place(format!("p_ready_{id}"), format!("{name} ready"));
        let created = net.place(format!("p_created_{id}"), format!("{name} created"));
        let create = net.transition(format!("t_create_{id}"), format!("create {name}"), origin.clone());
        net.arc(&ready, &create);
        net.arc(&create, &created);
        net.initial.insert(ready);

        let mut b = Builder { net: std::mem::take(&mut net), node: id.clone(), counter: 0, node_origin: &origin };
        let mut end = created.clone();
        if let Some(pb) = playbooks.get(name) {
            for (pi, play) in pb.plays.iter().enumerate() {
                end = b.play(pi, play, end);
            }
        }
        let configured = format!("p_configured_{id}");
        if end == created {
            let t = b.net.transition(format!("t_configure_{id}"), format!("configure {name}"), b.node_origin.clone());
            b.net.place(configured.clone(), format!("{name} configured"));
            b.net.arc(&created, &t);
            b.net.arc(&t, &configured);
        } else {
            // the segment's last place becomes p_configured
            for p in &mut b.net.places {
                if p.id == end {
                    p.id = configured.clone();
                    p.label = format!("{name} configured");
                }
            }
            for a in &mut b.net.arcs {
                if a.src == end {
                    a.src = configured.clone();
                }
                if a.dst == end {
                    a.dst = configured.clone();
                }
            }
        }
        net = b.net;
        let started = net.place(format!("p_started_{id}"), format!("{name} started"));
        let start = net.transition(format!("t_start_{id}"), format!("start {name}"), origin);
        net.arc(&configured, &start);
        net.arc(&start, &started);
        net.terminal_places.insert(started);
    }
    for e in &graph.edges {
        net.test_arc(&format!("p_started_{}", ids[e.target.as_str()]), &format!("t_create_{}", ids[e.source.as_str()]));
    }
    net.arcs.dedup();
    debug_assert!(net.validate().is_empty(), "{:?}", net.validate());
    Ok(net)
}
