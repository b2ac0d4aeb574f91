use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::Instant;

use deployqa::catalog::{Catalog, RuleConfig};
use deployqa::csar::load_from_files;
use deployqa::petri::{export_net, reachability_graph, ArcKind, ExportFormat, PetriNet, DEFAULT_MAX_MARKINGS};
use deployqa::pipeline::{analyze, Input, Limits};
use deployqa::smells::RuleContext;
use deployqa_testkit::nets::{enumerate, random_net, Enumeration, State};
use deployqa_testkit::topo::{has_cycle, random_topology};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn library_view(net: &PetriNet) -> Enumeration {
    let g = reachability_graph(net, DEFAULT_MAX_MARKINGS).unwrap();
    let state = |v: usize| -> State { g.net.marking_ids(&g.vertices[v]).into_iter().collect() };
    Enumeration {
        vertices: (0..g.vertices.len()).map(state).collect(),
        edges: g.edges.iter().map(|&(a, t, b)| (state(a), g.transition_id(net, t).to_owned(), state(b))).collect(),
        dead_markings: g.dead_markings().into_iter().map(state).collect(),
        dead_transitions: g.dead_slots().into_iter().map(|t| g.transition_id(net, t).to_owned()).collect(),
    }
}

#[test]
fn reachability_matches_brute_force_on_random_nets() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..300 {
        let net = random_net(&mut rng, 10);
        assert!(net.places.len() <= 10);
        assert_eq!(library_view(&net), enumerate(&net), "net {i}: {net:#?}");
    }
    assert!(started.elapsed().as_secs() < 60);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_edge_is_a_legal_firing(seed in any::<u64>()) {
        let net = random_net(&mut ChaCha8Rng::seed_from_u64(seed), 8);
        let g = reachability_graph(&net, DEFAULT_MAX_MARKINGS).unwrap();
        prop_assert!(g.is_complete());
        for &(a, t, b) in &g.edges {
            prop_assert!(g.net.enabled(&g.vertices[a], t));
            prop_assert_eq!(&g.net.fire(&g.vertices[a], t).0, &g.vertices[b]);
        }
        let distinct: BTreeSet<_> = g.vertices.iter().collect();
        prop_assert_eq!(distinct.len(), g.vertices.len());
    }

    #[test]
    fn bfs_parents_are_shortest_paths(seed in any::<u64>()) {
        let net = random_net(&mut ChaCha8Rng::seed_from_u64(seed), 8);
        let g = reachability_graph(&net, DEFAULT_MAX_MARKINGS).unwrap();
        // plain BFS distances over the edge list
        let mut dist = vec![usize::MAX; g.vertices.len()];
        dist[0] = 0;
        let mut changed = true;
        while changed {
            changed = false;
            for &(a, _, b) in &g.edges {
                if dist[a] != usize::MAX && dist[a] + 1 < dist[b] {
                    dist[b] = dist[a] + 1;
                    changed = true;
                }
            }
        }
        for (v, d) in dist.iter().enumerate() {
            let path = g.path_to(v);
            prop_assert_eq!(path.len(), *d);
            let mut m = g.vertices[0].clone();
            for t in path {
                m = g.net.fire(&m, t).0;
            }
            prop_assert_eq!(&m, &g.vertices[v]);
        }
    }

    #[test]
    fn budget_is_respected(seed in any::<u64>(), budget in 1usize..6) {
        let net = random_net(&mut ChaCha8Rng::seed_from_u64(seed), 10);
        let full = enumerate(&net).vertices.len();
        match reachability_graph(&net, budget) {
            Ok(g) => prop_assert!(full <= budget && g.vertices.len() == full),
            Err(e) => {
                prop_assert!(full > budget);
                prop_assert!(!e.partial.is_complete());
            }
        }
    }
}

#[test]
fn pnml_export_is_well_formed() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let net = random_net(&mut rng, 10);
        let xml = export_net(&net, ExportFormat::Pnml);
        let doc = roxmltree::Document::parse(&xml).unwrap();
        let count = |tag: &str| doc.descendants().filter(|n| n.has_tag_name(tag)).count();
        assert_eq!(count("place"), net.places.len());
        assert_eq!(count("transition"), net.transitions.len());
        // a read arc is written as a consume/produce pair
        let reads = net.arcs.iter().filter(|a| a.kind == ArcKind::Test).count();
        assert_eq!(count("arc"), net.arcs.len() + reads);
        let ids: BTreeSet<&str> = doc.descendants().filter_map(|n| n.attribute("id")).collect();
        for a in doc.descendants().filter(|n| n.has_tag_name("arc")) {
            assert!(ids.contains(a.attribute("source").unwrap()) && ids.contains(a.attribute("target").unwrap()));
        }
        let initial = doc.descendants().filter(|n| n.has_tag_name("initialMarking")).count();
        assert_eq!(initial, net.initial.len());
    }
}

#[test]
fn cycles_and_deadlocks_agree_on_small_topologies() {
    let c = Catalog::builtin();
    let cfg = RuleConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut cyclic = 0;
    for i in 0..150 {
        let (text, edges) = random_topology(&mut rng, 8);
        let files = [("service.yaml".to_owned(), text.into_bytes())].into_iter().collect();
        let archive = load_from_files(PathBuf::from("mem"), files, false).unwrap();
        let a = analyze(&Input::Archive(archive), &RuleContext::new(&c, &cfg), Limits::default()).unwrap();
        assert!(a.complete);
        let e006 = a.findings.iter().any(|f| f.rule_id == "E006");
        let w101 = a.findings.iter().any(|f| f.rule_id == "W101");
        let n = edges.iter().flat_map(|e| [e.0, e.1]).max().map_or(0, |m| m + 1);
        assert_eq!(e006, w101, "topology {i}: {edges:?}");
        assert_eq!(e006, has_cycle(n.max(1), &edges), "topology {i}: {edges:?}");
        cyclic += e006 as usize;
    }
    assert!(cyclic > 20 && cyclic < 130, "{cyclic} cyclic topologies");
}
