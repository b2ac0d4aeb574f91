//! Random dependency topologies with empty lifecycle playbooks.

use rand::Rng;

/// A blueprint of up to `max_nodes` `tosca.nodes.Root` nodes joined by random
/// `dependency` requirements, plus the edge list it encodes.
pub fn random_topology<R: Rng>(rng: &mut R, max_nodes: usize) -> (String, Vec<(usize, usize)>) {
    let n = rng.random_range(1..=max_nodes.max(1));
    let density: f64 = rng.random_range(0.05..0.4);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a != b && rng.random_bool(density) {
                edges.push((a, b));
            }
        }
    }
    let mut text =
        String::from("tosca_definitions_version: tosca_simple_yaml_1_3\ntopology_template:\n  node_templates:\n");
    for a in 0..n {
        text.push_str(&format!("    n{a}:\n      type: tosca.nodes.Root\n"));
        let deps: Vec<usize> = edges.iter().filter(|e| e.0 == a).map(|e| e.1).collect();
        if !deps.is_empty() {
            text.push_str("      requirements:\n");
            for b in deps {
                text.push_str(&format!("        - dependency: n{b}\n"));
            }
        }
    }
    (text, edges)
}

/// Whether the directed graph on `n` vertices has a cycle (Kahn's algorithm).
pub fn has_cycle(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut indeg = vec![0usize; n];
    for &(_, b) in edges {
        indeg[b] += 1;
    }
    let mut queue: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut seen = 0;
    while let Some(v) = queue.pop() {
        seen += 1;
        for &(a, b) in edges {
            if a == v {
                indeg[b] -= 1;
                if indeg[b] == 0 {
                    queue.push(b);
                }
            }
        }
    }
    seen < n
}
