//! Randomized checks of every protocol against an MSF computed by petgraph.

use std::collections::HashMap;

use petgraph::algo::{connected_components, min_spanning_tree};
use petgraph::data::Element;
use petgraph::graph::UnGraph;
use petgraph::unionfind::UnionFind;
use proptest::prelude::*;

use asyncmst::graph::{generate, Family, Graph};
use asyncmst::harness::{execute, CheckLevel, ProtocolKind, RunReport, RunSpec};

fn reference(g: &Graph) -> (u64, usize) {
    let mut pg = UnGraph::<(), u64>::new_undirected();
    let nodes: Vec<_> = (0..g.n()).map(|_| pg.add_node(())).collect();
    for e in g.edges() {
        pg.add_edge(nodes[e.u], nodes[e.v], e.weight.base);
    }
    let weight = min_spanning_tree(&pg)
        .filter_map(|el| match el {
            Element::Edge { weight, .. } => Some(weight),
            _ => None,
        })
        .sum();
    (weight, connected_components(&pg))
}

/// Output weight, and whether the output is a forest of `g`.
fn output_weight(g: &Graph, r: &RunReport) -> (u64, bool) {
    let by_name: HashMap<u64, _> = g.edges().iter().map(|e| (e.name.0, e)).collect();
    let mut uf = UnionFind::<usize>::new(g.n());
    let mut total = 0;
    let mut acyclic = true;
    for name in &r.output_edges {
        let e = by_name[name];
        acyclic &= uf.union(e.u, e.v);
        total += e.weight.base;
    }
    (total, acyclic)
}

fn policy() -> impl Strategy<Value = String> {
    prop_oneof![
        (1u64..200).prop_map(|d| format!("uniform:{d}")),
        (1u64..200).prop_map(|d| format!("fifo:{d}")),
        Just("reorder".to_string()),
    ]
}

fn run(protocol: ProtocolKind, family: Family, n: usize, seed: u64, policy: String) -> (Graph, RunReport) {
    let mut spec = RunSpec::new(protocol, family.clone(), n, seed);
    spec.policy = policy;
    spec.check = CheckLevel::Full;
    let report = execute(&spec).expect("valid spec");
    let g = generate(&family, n, spec.c, report.graph_seed).unwrap();
    (g, report)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn msf_equals_reference_forest(n in 2usize..48, p in 0.0f64..0.6, seed in 0u64..1_000_000, pol in policy()) {
        let (g, r) = run(ProtocolKind::Msf, Family::Gnp { p }, n, seed, pol);
        prop_assert!(r.error.is_none(), "{:?}", r.error);
        prop_assert!(r.violations.is_empty(), "{:?}", r.violations);
        let (want, comps) = reference(&g);
        let (got, acyclic) = output_weight(&g, &r);
        prop_assert!(acyclic);
        prop_assert_eq!(r.output_edges.len(), n - comps);
        prop_assert_eq!(got, want);
    }

    #[test]
    fn pipeline_equals_reference_tree(n in 2usize..48, p in 0.05f64..1.0, seed in 0u64..1_000_000, pol in policy()) {
        let (g, r) = run(ProtocolKind::Pipeline, Family::GnpConnected { p }, n, seed, pol);
        prop_assert!(r.error.is_none(), "{:?}", r.error);
        prop_assert!(r.violations.is_empty(), "{:?}", r.violations);
        let (got, acyclic) = output_weight(&g, &r);
        prop_assert!(acyclic);
        prop_assert_eq!(r.output_edges.len(), n - 1);
        prop_assert_eq!(got, reference(&g).0);
    }

    #[test]
    fn findst_spans(n in 2usize..64, p in 0.05f64..1.0, seed in 0u64..1_000_000, pol in policy()) {
        let (g, r) = run(ProtocolKind::Findst, Family::GnpConnected { p }, n, seed, pol);
        prop_assert!(r.error.is_none(), "{:?}", r.error);
        prop_assert!(r.violations.is_empty(), "{:?}", r.violations);
        let (_, acyclic) = output_weight(&g, &r);
        prop_assert!(acyclic);
        prop_assert_eq!(r.output_edges.len(), n - 1);
    }

    #[test]
    fn runs_are_reproducible(n in 2usize..32, seed in 0u64..1_000_000, pol in policy()) {
        let spec = |s| {
            let mut x = RunSpec::new(ProtocolKind::Pipeline, Family::GnpConnected { p: 0.3 }, n, s);
            x.policy = pol.clone();
            x
        };
        let mut a = execute(&spec(seed)).unwrap();
        let mut b = execute(&spec(seed)).unwrap();
        a.wallclock_ms = 0;
        b.wallclock_ms = 0;
        prop_assert_eq!(a, b);
    }
}
