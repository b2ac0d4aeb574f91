//! Workflow Petri nets: construction from a topology and its playbooks,
//! reachability analysis and export.
//!
//! Nets are 1-safe by construction: a marking is the set of marked places and
//! adding a token to a marked place leaves it marked.

mod analysis;
mod build;
mod export;
mod reach;

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use crate::span::SourceSpan;

pub use analysis::{dead_transitions, detect_deadlocks, IncompleteGraph};
pub use build::{build_workflow_net, UnboundPlaybook};
pub use export::{export_net, ExportFormat};
pub use reach::{reachability_graph, ReachStats, ReachabilityGraph, StateSpaceExceeded, DEFAULT_MAX_MARKINGS};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Place {
    pub id: String,
    pub label: String,
    /// Handler notification places may receive a token while already marked.
    pub mergeable: bool,
}

/// Where a transition comes from: a topology element or a playbook task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Origin {
    pub subject: String,
    pub span: Option<SourceSpan>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Transition {
    pub id: String,
    pub label: String,
    pub origin: Origin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ArcKind {
    Normal,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Arc {
    pub src: String,
    pub dst: String,
    pub kind: ArcKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct PetriNet {
    pub places: Vec<Place>,
    pub transitions: Vec<Transition>,
    pub arcs: Vec<Arc>,
    pub initial: BTreeSet<String>,
    pub terminal_places: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NetError {
    DuplicateId(String),
    UnknownEndpoint(String),
    NotBipartite { src: String, dst: String },
    TestArcIntoPlace { src: String, dst: String },
    UnknownMarkedPlace(String),
}

impl std::fmt::Display for NetError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NetError::DuplicateId(id) => write!(f, "duplicate id {id}"),
            NetError::UnknownEndpoint(id) => write!(f, "arc endpoint {id} does not exist"),
            NetError::NotBipartite { src, dst } => {
                write!(f, "arc {src} -> {dst} does not join a place and a transition")
            }
            NetError::TestArcIntoPlace { src, dst } => write!(f, "test arc {src} -> {dst} must run from a place"),
            NetError::UnknownMarkedPlace(id) => write!(f, "marked place {id} does not exist"),
        }
    }
}

impl PetriNet {
    pub fn place(&mut self, id: impl Into<String>, label: impl Into<String>) -> String {
        let id = id.into();
        self.places.push(Place { id: id.clone(), label: label.into(), mergeable: false });
        id
    }

    pub fn transition(&mut self, id: impl Into<String>, label: impl Into<String>, origin: Origin) -> String {
        let id = id.into();
        self.transitions.push(Transition { id: id.clone(), label: label.into(), origin });
        id
    }

    pub fn arc(&mut self, src: &str, dst: &str) {
        self.arcs.push(Arc { src: src.to_owned(), dst: dst.to_owned(), kind: ArcKind::Normal });
    }

    pub fn test_arc(&mut self, place: &str, transition: &str) {
        self.arcs.push(Arc { src: place.to_owned(), dst: transition.to_owned(), kind: ArcKind::Test });
    }

    pub fn transition_by_id(&self, id: &str) -> Option<&Transition> {
        self.transitions.iter().find(|t| t.id == id)
    }

    /// Structural well-formedness: unique ids, existing endpoints, bipartite
    /// arcs, test arcs from places only, initial marking within the places.
    pub fn validate(&self) -> Vec<NetError> {
        let mut errors = Vec::new();
        let mut kinds: HashMap<&str, bool> = HashMap::new();
        for p in &self.places {
            if kinds.insert(&p.id, true).is_some() {
                errors.push(NetError::DuplicateId(p.id.clone()));
            }
        }
        for t in &self.transitions {
            if kinds.insert(&t.id, false).is_some() {
                errors.push(NetError::DuplicateId(t.id.clone()));
            }
        }
        for a in &self.arcs {
            match (kinds.get(a.src.as_str()), kinds.get(a.dst.as_str())) {
                (None, _) => errors.push(NetError::UnknownEndpoint(a.src.clone())),
                (_, None) => errors.push(NetError::UnknownEndpoint(a.dst.clone())),
                (Some(s), Some(d)) if s == d => {
                    errors.push(NetError::NotBipartite { src: a.src.clone(), dst: a.dst.clone() })
                }
                (Some(false), Some(true)) if a.kind == ArcKind::Test => {
                    errors.push(NetError::TestArcIntoPlace { src: a.src.clone(), dst: a.dst.clone() })
                }
                _ => {}
            }
        }
        for p in self.initial.iter().chain(&self.terminal_places) {
            if kinds.get(p.as_str()) != Some(&true) {
                errors.push(NetError::UnknownMarkedPlace(p.clone()));
            }
        }
        errors
    }
}

/// A set of marked places, as a bitset over place indices of a [`CompiledNet`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Marking(Vec<u64>);

impl Marking {
    pub fn empty(places: usize) -> Self {
        Marking(vec![0; places.div_ceil(64).max(1)])
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn insert(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    pub fn remove(&mut self, i: usize) {
        self.0[i / 64] &= !(1 << (i % 64));
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .enumerate()
            .flat_map(|(w, bits)| (0..64).filter(move |b| bits & (1 << b) != 0).map(move |b| w * 64 + b))
    }
}

/// Index form of a net used by the analyses. Transitions are ordered by id.
#[derive(Debug, Clone)]
pub struct CompiledNet {
    pub place_ids: Vec<String>,
    pub mergeable: Vec<bool>,
    /// Transition indices into `PetriNet::transitions`, sorted by id.
    pub order: Vec<usize>,
    pub consume: Vec<Vec<usize>>,
    pub read: Vec<Vec<usize>>,
    pub produce: Vec<Vec<usize>>,
    pub initial: Marking,
    pub terminal: Vec<usize>,
}

impl CompiledNet {
    /// Compile a net; panics if the net fails [`PetriNet::validate`].
    pub fn new(net: &PetriNet) -> Self {
        let errors = net.validate();
        assert!(errors.is_empty(), "invalid net: {}", errors[0]);
        let place_index: HashMap<&str, usize> =
            net.places.iter().enumerate().map(|(i, p)| (p.id.as_str(), i)).collect();
        let mut order: Vec<usize> = (0..net.transitions.len()).collect();
        order.sort_by(|&a, &b| net.transitions[a].id.cmp(&net.transitions[b].id));
        let slot: HashMap<&str, usize> =
            order.iter().enumerate().map(|(k, &t)| (net.transitions[t].id.as_str(), k)).collect();
        let n = order.len();
        let (mut consume, mut read, mut produce) = (vec![Vec::new(); n], vec![Vec::new(); n], vec![Vec::new(); n]);
        for a in &net.arcs {
            if let (Some(&p), Some(&t)) = (place_index.get(a.src.as_str()), slot.get(a.dst.as_str())) {
                let list = if a.kind == ArcKind::Test { &mut read[t] } else { &mut consume[t] };
                if !list.contains(&p) {
                    list.push(p);
                }
            } else if let (Some(&t), Some(&p)) = (slot.get(a.src.as_str()), place_index.get(a.dst.as_str())) {
                if !produce[t].contains(&p) {
                    produce[t].push(p);
                }
            }
        }
        let mut initial = Marking::empty(net.places.len());
        for p in &net.initial {
            initial.insert(place_index[p.as_str()]);
        }
        CompiledNet {
            place_ids: net.places.iter().map(|p| p.id.clone()).collect(),
            mergeable: net.places.iter().map(|p| p.mergeable).collect(),
            order,
            consume,
            read,
            produce,
            initial,
            terminal: net.terminal_places.iter().map(|p| place_index[p.as_str()]).collect(),
        }
    }

    pub fn enabled(&self, m: &Marking, t: usize) -> bool {
        self.consume[t].iter().chain(&self.read[t]).all(|&p| m.contains(p))
    }

    /// Fire transition slot `t`; also reports whether a token landed on an
    /// already marked place that is not mergeable.
    pub fn fire(&self, m: &Marking, t: usize) -> (Marking, bool) {
        let mut next = m.clone();
        for &p in &self.consume[t] {
            next.remove(p);
        }
        let mut unsafe_merge = false;
        for &p in &self.produce[t] {
            if next.contains(p) && !self.mergeable[p] {
                unsafe_merge = true;
            }
            next.insert(p);
        }
        (next, unsafe_merge)
    }

    pub fn is_final(&self, m: &Marking) -> bool {
        self.terminal.iter().all(|&p| m.contains(p))
    }

    pub fn marking_ids(&self, m: &Marking) -> Vec<String> {
        let mut ids: Vec<String> = m.iter().map(|p| self.place_ids[p].clone()).collect();
        ids.sort();
        ids
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn origin() -> Origin {
        Origin { subject: String::new(), span: None }
    }

    #[test]
    fn validate_catches_structural_errors() {
        let mut net = PetriNet::default();
        net.place("p", "p");
        net.place("q", "q");
        net.transition("t", "t", origin());
        net.arc("p", "q");
        net.arc("t", "missing");
        net.arcs.push(Arc { src: "t".into(), dst: "p".into(), kind: ArcKind::Test });
        net.transition("p", "dup", origin());
        let errors = net.validate();
        assert!(errors.contains(&NetError::DuplicateId("p".into())));
        assert!(errors.contains(&NetError::UnknownEndpoint("missing".into())));
        assert!(errors.iter().any(|e| matches!(e, NetError::NotBipartite { .. })));
    }

    #[test]
    fn marking_bitset() {
        let mut m = Marking::empty(130);
        m.insert(0);
        m.insert(129);
        assert!(m.contains(129));
        assert_eq!(m.iter().collect::<Vec<_>>(), vec![0, 129]);
        m.remove(0);
        assert!(!m.contains(0));
    }
}
