//! Breadth-first reachability graph construction.

use std::collections::{HashMap, VecDeque};

use thiserror::Error;

use super::{CompiledNet, Marking, PetriNet};

pub const DEFAULT_MAX_MARKINGS: usize = 1_000_000;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReachStats {
    pub visited: usize,
    /// True when the frontier emptied before the marking budget ran out.
    pub frontier_exhausted: bool,
    /// Firings that put a token on a marked place other than a handler place.
    pub unsafe_merges: usize,
}

#[derive(Debug, Clone)]
pub struct ReachabilityGraph {
    pub net: CompiledNet,
    /// Vertex 0 is the initial marking; vertices are numbered in discovery order.
    pub vertices: Vec<Marking>,
    /// (source vertex, transition slot in `net.order`, destination vertex)
    pub edges: Vec<(usize, usize, usize)>,
    /// BFS tree: (parent vertex, transition slot) for every vertex but the initial one.
    pub parent: Vec<Option<(usize, usize)>>,
    pub stats: ReachStats,
}

impl ReachabilityGraph {
    pub fn is_complete(&self) -> bool {
        self.stats.frontier_exhausted
    }

    pub fn transition_id<'n>(&self, net: &'n PetriNet, slot: usize) -> &'n str {
        &net.transitions[self.net.order[slot]].id
    }

    /// Shortest firing sequence (transition slots) from the initial marking.
    pub fn path_to(&self, vertex: usize) -> Vec<usize> {
        let mut path = Vec::new();
        let mut v = vertex;
        while let Some((p, t)) = self.parent[v] {
            path.push(t);
            v = p;
        }
        path.reverse();
        path
    }

    pub fn enabled_slots(&self, m: &Marking) -> impl Iterator<Item = usize> + '_ {
        let m = m.clone();
        (0..self.net.order.len()).filter(move |&t| self.net.enabled(&m, t))
    }
}

#[derive(Debug, Clone, Error)]
#[error("state space exceeds {max_markings} markings")]
pub struct StateSpaceExceeded {
    pub max_markings: usize,
    /// The graph explored so far, flagged incomplete.
    pub partial: Box<ReachabilityGraph>,
}

/// Explore all markings reachable from the initial one. Transitions are tried
/// in id order, so BFS parents give shortest witness paths with ties broken by
/// transition id.
pub fn reachability_graph(net: &PetriNet, max_markings: usize) -> Result<ReachabilityGraph, StateSpaceExceeded> {
    let compiled = CompiledNet::new(net);
    let mut g = ReachabilityGraph {
        vertices: vec![compiled.initial.clone()],
        edges: Vec::new(),
        parent: vec![None],
        stats: ReachStats::default(),
        net: compiled,
    };
    let mut index: HashMap<Marking, usize> = HashMap::from([(g.vertices[0].clone(), 0)]);
    let mut queue = VecDeque::from([0usize]);
    while let Some(v) = queue.pop_front() {
        g.stats.visited += 1;
        let m = g.vertices[v].clone();
        for t in 0..g.net.order.len() {
            if !g.net.enabled(&m, t) {
                continue;
            }
            let (next, unsafe_merge) = g.net.fire(&m, t);
            if unsafe_merge {
                g.stats.unsafe_merges += 1;
            }
            let w = match index.get(&next) {
                Some(&w) => w,
                None => {
                    if g.vertices.len() >= max_markings {
                        return Err(StateSpaceExceeded { max_markings, partial: Box::new(g) });
                    }
                    let w = g.vertices.len();
                    index.insert(next.clone(), w);
                    g.vertices.push(next);
                    g.parent.push(Some((v, t)));
                    queue.push_back(w);
                    w
                }
            };
            g.edges.push((v, t, w));
        }
    }
    g.stats.frontier_exhausted = true;
    Ok(g)
}
