use super::*;
use crate::findst::choose_stars;
use crate::graph::{generate, oracle_msf, Family, Scale};
use crate::simnet::{node_rng, run_plain, DelayPolicy, SimConfig, SimOutcome};

fn solve(g: &Graph, stars: &[bool], policy: DelayPolicy, seed: u64) -> SimOutcome<MsfNode> {
    let nodes = MsfNode::network(g, stars, FindStParams::of(g));
    run_plain(g, nodes, &SimConfig::new(policy, seed))
}

fn policies() -> [DelayPolicy; 3] {
    [DelayPolicy::Uniform { max: 1000 }, DelayPolicy::FifoPerEdge { max: 1000 }, DelayPolicy::ReorderAdversary]
}

#[test]
fn two_triangles_without_stars_use_ghs() {
    let ids = (1..=6).map(NodeId).collect();
    let raw = [(0, 1, 3), (1, 2, 1), (0, 2, 2), (3, 4, 5), (4, 5, 6), (3, 5, 4)];
    let g = Graph::new(Scale::new(6, 2), ids, &raw).unwrap();
    let out = solve(&g, &[false; 6], DelayPolicy::ReorderAdversary, 3);
    assert!(out.ok(), "{:?}", out.error);
    assert!(out.nodes.iter().all(|x| x.ghs_halted()));
    assert_eq!(forest_edges(&g, &out.nodes), oracle_msf(&g));
    assert_eq!(out.metrics.kind_count("ExpandId"), 0);
}

#[test]
fn ghs_alone_matches_oracle() {
    for seed in 0..20 {
        let g = generate(&Family::Gnp { p: 0.15 }, 40, 2, seed).unwrap();
        let out = solve(&g, &[false; 40], policies()[seed as usize % 3].clone(), seed);
        assert!(out.ok(), "seed {seed}: {:?}", out.error);
        assert_eq!(forest_edges(&g, &out.nodes), oracle_msf(&g), "seed {seed}");
    }
}

#[test]
fn two_low_degree_nodes_exchange_acks() {
    let g = generate(&Family::Path, 2, 2, 1).unwrap();
    let out = solve(&g, &[false; 2], DelayPolicy::ReorderAdversary, 1);
    assert!(out.ok());
    assert_eq!(out.metrics.kind_count("LowDegree"), 2);
    assert_eq!(out.metrics.kind_count("LdAck"), 2);
}

#[test]
fn highest_star_owns_the_component() {
    for seed in 0..40 {
        let g = generate(&Family::GnpConnected { p: 0.2 }, 48, 2, seed).unwrap();
        let stars: Vec<bool> = (0..48).map(|x| x % 7 == (seed as usize % 7)).collect();
        let out = solve(&g, &stars, policies()[seed as usize % 3].clone(), seed);
        assert!(out.ok(), "seed {seed}: {:?}", out.error);
        let top = (0..48).filter(|&x| stars[x]).map(|x| g.id(x)).max().unwrap();
        assert!(out.nodes.iter().all(|x| x.vid() == top), "seed {seed}");
        assert_eq!(forest_edges(&g, &out.nodes), oracle_msf(&g), "seed {seed}");
        let lower_leaders_halted =
            out.nodes.iter().filter(|x| x.st.star && x.st.local.me != top).all(|x| !x.st.leader || x.st.halted);
        assert!(lower_leaders_halted);
    }
}

#[test]
fn mixed_components_match_oracle() {
    for seed in 0..40 {
        let fam = Family::Disconnected { sizes: vec![6, 20, 3, 35], p: 0.25 };
        let g = generate(&fam, 64, 2, seed).unwrap();
        let mut stars = choose_stars(&g, seed);
        // guarantee a star in the two larger components on even seeds
        if seed % 2 == 0 {
            stars[10] = true;
            stars[40] = true;
        }
        let out = solve(&g, &stars, policies()[seed as usize % 3].clone(), seed);
        assert!(out.ok(), "seed {seed}: {:?}", out.error);
        assert_eq!(forest_edges(&g, &out.nodes), oracle_msf(&g), "seed {seed}");
    }
}

#[test]
fn repeated_rejection_adds_one_reject_entry() {
    let g = generate(&Family::Complete, 4, 2, 1).unwrap();
    let mut nodes = FindStNode::network_multi(&g, &[false, true, false, true], FindStParams::of(&g));
    let (lo, hi) = if g.id(1) < g.id(3) { (1, 3) } else { (3, 1) };
    let mut out = Vec::new();
    let mut rng = node_rng(0, hi);
    let mut marks = Vec::new();
    let mut ctx = Ctx::new(hi, &mut out, &mut rng, &mut marks);
    let tid = g.id(lo);
    let x = &mut nodes[hi];
    for from in [lo, lo, 0] {
        assert!(matches!(x.on_message(&mut ctx, from, Msg::ExpandId { tid }), Step::Done));
    }
    assert_eq!(x.reject, vec![lo]);
    assert_eq!(out.iter().filter(|(_, m)| *m == Msg::RejectedLowerId { tid, joined: false }).count(), 3);
}

#[test]
fn forest_matches_single_leader_pipeline_on_connected_graphs() {
    use crate::findmst::mst_edges;
    use crate::findst::{FindStNode, SpanningTree};
    for seed in 0..10 {
        let g = generate(&Family::GnpConnected { p: 0.3 }, 32, 2, seed).unwrap();
        let stars = choose_stars(&g, seed);
        let cfg = SimConfig::new(DelayPolicy::Uniform { max: 1000 }, seed);
        let st = run_plain(&g, FindStNode::network(&g, 0, &stars, FindStParams::of(&g)), &cfg);
        assert!(st.ok());
        let tree = SpanningTree::from_nodes(&g, &st.nodes).unwrap();
        let mst = run_plain(&g, FindMstNode::network(&g, tree.root, &tree.parent, &tree.children), &cfg);
        assert!(mst.ok());
        let out = solve(&g, &stars, DelayPolicy::Uniform { max: 1000 }, seed);
        assert!(out.ok(), "seed {seed}: {:?}", out.error);
        assert_eq!(forest_edges(&g, &out.nodes), mst_edges(&g, &mst.nodes), "seed {seed}");
    }
}
