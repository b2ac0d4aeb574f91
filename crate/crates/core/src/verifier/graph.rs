//! Node-template dependency graph and cycle detection.

use std::collections::{BTreeSet, HashMap, VecDeque};

use serde::Serialize;

use crate::ir::TopologyModel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Edge {
    pub source: String,
    pub target: String,
    pub requirement: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct DependencyGraph {
    /// Node template names, first occurrences only, in source order.
    pub vertices: Vec<String>,
    /// One edge per resolvable requirement, in source order.
    pub edges: Vec<Edge>,
}

impl DependencyGraph {
    pub fn successors<'a>(&'a self, vertex: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.edges.iter().filter(move |e| e.source == vertex).map(|e| e.target.as_str())
    }
}

/// Edges for requirements whose target names an existing template. Duplicate
/// templates contribute only their first occurrence.
pub fn dependency_graph(topology: &TopologyModel) -> DependencyGraph {
    let mut graph = DependencyGraph::default();
    let mut seen = BTreeSet::new();
    let firsts: Vec<_> = topology.node_templates.iter().filter(|n| seen.insert(n.name.as_str())).collect();
    graph.vertices = firsts.iter().map(|n| n.name.clone()).collect();
    for node in &firsts {
        for req in &node.requirements {
            if let Some(target) = req.target_node.as_deref().filter(|t| seen.contains(t)) {
                graph.edges.push(Edge {
                    source: node.name.clone(),
                    target: target.to_owned(),
                    requirement: req.name.clone(),
                });
            }
        }
    }
    graph
}

/// Strongly connected components (Tarjan), each as a list of vertex indices.
fn tarjan(n: usize, adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    struct State<'a> {
        adj: &'a [Vec<usize>],
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        next: usize,
        out: Vec<Vec<usize>>,
    }

    // iterative to stay safe on long chains
    fn strongconnect(s: &mut State<'_>, root: usize) {
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        s.index[root] = Some(s.next);
        s.low[root] = s.next;
        s.next += 1;
        s.stack.push(root);
        s.on_stack[root] = true;
        while let Some(&mut (v, ref mut child)) = call.last_mut() {
            if let Some(&w) = s.adj[v].get(*child) {
                *child += 1;
                match s.index[w] {
                    None => {
                        s.index[w] = Some(s.next);
                        s.low[w] = s.next;
                        s.next += 1;
                        s.stack.push(w);
                        s.on_stack[w] = true;
                        call.push((w, 0));
                    }
                    Some(iw) if s.on_stack[w] => s.low[v] = s.low[v].min(iw),
                    Some(_) => {}
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                s.low[parent] = s.low[parent].min(s.low[v]);
            }
            if Some(s.low[v]) == s.index[v] {
                let mut comp = Vec::new();
                while let Some(w) = s.stack.pop() {
                    s.on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                s.out.push(comp);
            }
        }
    }

    let mut s = State {
        adj,
        index: vec![None; n],
        low: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        next: 0,
        out: Vec::new(),
    };
    for v in 0..n {
        if s.index[v].is_none() {
            strongconnect(&mut s, v);
        }
    }
    s.out
}

/// One witness cycle per cyclic strongly connected component, plus self-loops
/// on otherwise acyclic vertices. Each cycle starts at its lexicographically
/// smallest vertex and is the shortest cycle through it; the list is sorted.
pub fn detect_cycles(graph: &DependencyGraph) -> Vec<Vec<String>> {
    let ids: HashMap<&str, usize> = graph.vertices.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect();
    let n = graph.vertices.len();
    let mut adj = vec![Vec::new(); n];
    for e in &graph.edges {
        if let (Some(&s), Some(&t)) = (ids.get(e.source.as_str()), ids.get(e.target.as_str())) {
            if !adj[s].contains(&t) {
                adj[s].push(t);
            }
        }
    }
    let name = |i: usize| graph.vertices[i].clone();

    let mut cycles = Vec::new();
    for comp in tarjan(n, &adj) {
        let start = *comp.iter().min_by_key(|&&i| &graph.vertices[i]).expect("non-empty component");
        if comp.len() == 1 {
            if adj[start].contains(&start) {
                cycles.push(vec![name(start)]);
            }
            continue;
        }
        let members: BTreeSet<usize> = comp.iter().copied().collect();
        // BFS over the component for the shortest non-trivial path back to start;
        // successors visited in name order so ties resolve deterministically
        let mut prev: HashMap<usize, usize> = HashMap::new();
        let mut queue = VecDeque::from([start]);
        let mut last = None;
        'bfs: while let Some(v) = queue.pop_front() {
            let mut succ: Vec<usize> = adj[v].iter().copied().filter(|w| members.contains(w)).collect();
            succ.sort_by_key(|&w| &graph.vertices[w]);
            for w in succ {
                if w == start && v != start {
                    last = Some(v);
                    break 'bfs;
                }
                if w != start && !prev.contains_key(&w) {
                    prev.insert(w, v);
                    queue.push_back(w);
                }
            }
        }
        let mut path = Vec::new();
        let mut cur = last.expect("strongly connected component has a cycle through every vertex");
        while cur != start {
            path.push(name(cur));
            cur = prev[&cur];
        }
        path.push(name(start));
        path.reverse();
        cycles.push(path);
    }
    cycles.sort();
    cycles
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(vertices: &[&str], edges: &[(&str, &str)]) -> DependencyGraph {
        DependencyGraph {
            vertices: vertices.iter().map(|v| v.to_string()).collect(),
            edges: edges
                .iter()
                .map(|(s, t)| Edge { source: s.to_string(), target: t.to_string(), requirement: "dependency".into() })
                .collect(),
        }
    }

    #[test]
    fn two_cycle() {
        assert_eq!(detect_cycles(&graph(&["A", "B"], &[("A", "B"), ("B", "A")])), vec![vec!["A", "B"]]);
    }

    #[test]
    fn dag_has_no_cycles() {
        assert!(detect_cycles(&graph(&["A", "B", "C"], &[("A", "B"), ("B", "C"), ("A", "C")])).is_empty());
    }

    #[test]
    fn triangle_rotated_to_smallest() {
        let g = graph(&["C", "A", "B"], &[("B", "C"), ("C", "A"), ("A", "B")]);
        assert_eq!(detect_cycles(&g), vec![vec!["A", "B", "C"]]);
    }

    #[test]
    fn disjoint_cycles_sorted() {
        let g = graph(&["X", "Y", "B", "A"], &[("X", "Y"), ("Y", "X"), ("B", "A"), ("A", "B")]);
        assert_eq!(detect_cycles(&g), vec![vec!["A", "B"], vec!["X", "Y"]]);
    }

    #[test]
    fn self_loop() {
        assert_eq!(detect_cycles(&graph(&["A", "B"], &[("A", "A"), ("A", "B")])), vec![vec!["A"]]);
    }

    #[test]
    fn long_chain_does_not_overflow() {
        let names: Vec<String> = (0..50_000).map(|i| format!("n{i:05}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let edges: Vec<(&str, &str)> = refs.windows(2).map(|w| (w[0], w[1])).collect();
        assert!(detect_cycles(&graph(&refs, &edges)).is_empty());
    }
}
