//! Random small nets and a brute-force state enumerator that shares no code
//! with the library's reachability engine.

use std::collections::{BTreeSet, HashSet};

use deployqa::petri::{ArcKind, Origin, PetriNet};
use rand::seq::IndexedRandom;
use rand::Rng;

pub type State = BTreeSet<String>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Enumeration {
    pub vertices: BTreeSet<State>,
    pub edges: BTreeSet<(State, String, State)>,
    pub dead_markings: BTreeSet<State>,
    pub dead_transitions: BTreeSet<String>,
}

/// Depth-first exploration over named markings, recomputing every transition's
/// pre- and post-sets from the arc list at each step.
pub fn enumerate(net: &PetriNet) -> Enumeration {
    let pre = |t: &str, kind: ArcKind| -> Vec<&str> {
        net.arcs.iter().filter(|a| a.dst == t && a.kind == kind).map(|a| a.src.as_str()).collect()
    };
    let post = |t: &str| -> Vec<&str> { net.arcs.iter().filter(|a| a.src == t).map(|a| a.dst.as_str()).collect() };

    let start: State = net.initial.clone();
    let mut seen: HashSet<State> = HashSet::new();
    let mut stack = vec![start.clone()];
    seen.insert(start);
    let mut out = Enumeration {
        vertices: BTreeSet::new(),
        edges: BTreeSet::new(),
        dead_markings: BTreeSet::new(),
        dead_transitions: net.transitions.iter().map(|t| t.id.clone()).collect(),
    };
    while let Some(m) = stack.pop() {
        let mut any = false;
        for t in &net.transitions {
            let consume = pre(&t.id, ArcKind::Normal);
            let read = pre(&t.id, ArcKind::Test);
            if !consume.iter().chain(&read).all(|p| m.contains(*p)) {
                continue;
            }
            any = true;
            let mut next = m.clone();
            for p in &consume {
                next.remove(*p);
            }
            for p in post(&t.id) {
                next.insert(p.to_owned());
            }
            out.dead_transitions.remove(&t.id);
            out.edges.insert((m.clone(), t.id.clone(), next.clone()));
            if seen.insert(next.clone()) {
                stack.push(next);
            }
        }
        let accepted = net.terminal_places.iter().all(|p| m.contains(p));
        if !any && !accepted {
            out.dead_markings.insert(m.clone());
        }
        out.vertices.insert(m);
    }
    out
}

/// A net of at most `max_places` places mixing sequential chains, free
/// choices, joins and test arcs.
pub fn random_net<R: Rng>(rng: &mut R, max_places: usize) -> PetriNet {
    let n_places = rng.random_range(2..=max_places.max(2));
    let mut net = PetriNet::default();
    let places: Vec<String> = (0..n_places).map(|i| net.place(format!("p{i}"), format!("place {i}"))).collect();
    let n_trans = rng.random_range(1..=n_places + 3);
    for t in 0..n_trans {
        let id = net.transition(
            format!("t{t:02}"),
            format!("transition {t}"),
            Origin { subject: String::new(), span: None },
        );
        match rng.random_range(0..4) {
            // chain step
            0 => {
                let i = rng.random_range(0..n_places - 1);
                net.arc(&places[i], &id);
                net.arc(&id, &places[i + 1]);
            }
            // fork into two places
            1 => {
                let src = places.choose(rng).unwrap();
                net.arc(src, &id);
                let mut targets: Vec<&String> = places.iter().filter(|p| *p != src).collect();
                targets.sort_by_key(|_| rng.random::<u32>());
                for p in targets.into_iter().take(2) {
                    net.arc(&id, p);
                }
            }
            // join
            2 => {
                let mut srcs: Vec<&String> = places.iter().collect();
                srcs.sort_by_key(|_| rng.random::<u32>());
                for p in srcs.iter().take(2) {
                    net.arc(p, &id);
                }
                let dst = places.choose(rng).unwrap();
                net.arc(&id, dst);
            }
            // guarded step
            _ => {
                let mut ps: Vec<&String> = places.iter().collect();
                ps.sort_by_key(|_| rng.random::<u32>());
                net.arc(ps[0], &id);
                net.test_arc(ps[1], &id);
                net.arc(&id, ps[ps.len() - 1]);
            }
        }
        // occasional extra read arc
        if rng.random_bool(0.15) {
            let p = places.choose(rng).unwrap();
            if !net.arcs.iter().any(|a| &a.src == p && a.dst == id) {
                net.test_arc(p, &id);
            }
        }
    }
    net.initial.insert(places[0].clone());
    if rng.random_bool(0.3) {
        net.initial.insert(places.choose(rng).unwrap().clone());
    }
    net.terminal_places.insert(places[n_places - 1].clone());
    net
}
