//! Deadlock and dead-transition analyses over a complete reachability graph.

use std::collections::BTreeMap;

use serde_json::json;
use thiserror::Error;

use super::{PetriNet, ReachabilityGraph};
use crate::catalog::{Catalog, RuleConfig};
use crate::finding::{Finding, Target};
use crate::span::SourceSpan;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("reachability graph is incomplete; analysis refused")]
pub struct IncompleteGraph;

fn no_span() -> SourceSpan {
    SourceSpan::file_start("")
}

impl ReachabilityGraph {
    /// Vertices that enable nothing and lack some terminal place.
    pub fn dead_markings(&self) -> Vec<usize> {
        (0..self.vertices.len())
            .filter(|&v| {
                let m = &self.vertices[v];
                !self.net.is_final(m) && (0..self.net.order.len()).all(|t| !self.net.enabled(m, t))
            })
            .collect()
    }

    /// Transition slots that label no edge.
    pub fn dead_slots(&self) -> Vec<usize> {
        let mut fired = vec![false; self.net.order.len()];
        for &(_, t, _) in &self.edges {
            fired[t] = true;
        }
        (0..fired.len()).filter(|&t| !fired[t]).collect()
    }
}

fn entries<'c>(
    catalog: &'c Catalog,
    config: &'c RuleConfig,
    detector: &'c str,
) -> impl Iterator<Item = &'c crate::catalog::DefectEntry> {
    catalog
        .entries_for(Target::Workflow)
        .filter(move |e| e.detection.detector == detector && config.is_enabled(&e.rule_id))
}

/// One finding per dead marking, located at the transition it is stuck on.
pub fn detect_deadlocks(
    graph: &ReachabilityGraph,
    net: &PetriNet,
    catalog: &Catalog,
    config: &RuleConfig,
) -> Result<Vec<Finding>, IncompleteGraph> {
    if !graph.is_complete() {
        return Err(IncompleteGraph);
    }
    let mut out = Vec::new();
    for entry in entries(catalog, config, "workflow_deadlock") {
        for v in graph.dead_markings() {
            let m = &graph.vertices[v];
            let cn = &graph.net;
            // prefer a transition whose consumed inputs are all present (blocked only
            // by what it reads), else any transition with some marked input
            let slots = 0..cn.order.len();
            let blocked = slots
                .clone()
                .find(|&t| !cn.consume[t].is_empty() && cn.consume[t].iter().all(|&p| m.contains(p)))
                .or_else(|| slots.clone().find(|&t| cn.consume[t].iter().chain(&cn.read[t]).any(|&p| m.contains(p))));
            let transition = blocked.map(|t| &net.transitions[cn.order[t]]);
            let waiting: Vec<String> = blocked
                .map(|t| {
                    cn.consume[t]
                        .iter()
                        .chain(&cn.read[t])
                        .filter(|&&p| !m.contains(p))
                        .map(|&p| cn.place_ids[p].clone())
                        .collect()
                })
                .unwrap_or_default();
            let witness: Vec<&str> = graph.path_to(v).into_iter().map(|t| graph.transition_id(net, t)).collect();
            let (span, subject) = match transition {
                Some(t) => (t.origin.span.clone().unwrap_or_else(no_span), t.origin.subject.clone()),
                None => (no_span(), String::new()),
            };
            let message = match transition {
                Some(t) => format!("workflow deadlock: `{}` waits for {}", t.label, waiting.join(", ")),
                None => "workflow deadlock: no step can fire".to_owned(),
            };
            let data = BTreeMap::from([
                ("marking".to_owned(), json!(cn.marking_ids(m))),
                ("witness".to_owned(), json!(witness)),
                ("blocked_transition".to_owned(), json!(transition.map(|t| t.id.clone()))),
                ("waiting_for".to_owned(), json!(waiting)),
            ]);
            out.push(catalog.finding(entry, message, span, subject, data));
        }
    }
    Ok(out)
}

/// One finding per transition that never fires.
pub fn dead_transitions(
    graph: &ReachabilityGraph,
    net: &PetriNet,
    catalog: &Catalog,
    config: &RuleConfig,
) -> Result<Vec<Finding>, IncompleteGraph> {
    if !graph.is_complete() {
        return Err(IncompleteGraph);
    }
    let mut out = Vec::new();
    for entry in entries(catalog, config, "dead_transition") {
        for slot in graph.dead_slots() {
            let t = &net.transitions[graph.net.order[slot]];
            out.push(catalog.finding(
                entry,
                format!("workflow step `{}` can never run", t.label),
                t.origin.span.clone().unwrap_or_else(no_span),
                t.origin.subject.clone(),
                BTreeMap::from([("transition".to_owned(), json!(t.id))]),
            ));
        }
    }
    Ok(out)
}
