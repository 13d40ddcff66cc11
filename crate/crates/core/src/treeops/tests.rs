use std::collections::VecDeque;

use super::*;
use crate::graph::{generate, Family};
use crate::simnet::{run_plain, DelayPolicy, SimConfig};

/// BFS tree from `root` over the first `size` nodes it reaches.
fn bfs_tree(g: &Graph, root: usize, size: usize) -> Vec<Option<Option<usize>>> {
    let mut parent = vec![None; g.n()];
    parent[root] = Some(None);
    let mut q = VecDeque::from([root]);
    let mut taken = 1;
    while let Some(x) = q.pop_front() {
        for a in g.neighbors(x) {
            if taken < size && parent[a.nbr].is_none() {
                parent[a.nbr] = Some(Some(x));
                taken += 1;
                q.push_back(a.nbr);
            }
        }
    }
    parent
}

fn cut_edges(g: &Graph, parent: &[Option<Option<usize>>]) -> Vec<EdgeName> {
    g.edges().iter().filter(|e| parent[e.u].is_some() != parent[e.v].is_some()).map(|e| e.name).collect()
}

fn probe(g: &Graph, parent: &[Option<Option<usize>>], task: ProbeTask, seed: u64) -> (TreeProbe, u64) {
    let nodes = TreeProbe::network(g, parent, task);
    let root = parent.iter().position(|p| *p == Some(None)).unwrap();
    let out = run_plain(g, nodes, &SimConfig::new(DelayPolicy::ReorderAdversary, seed));
    assert!(out.ok(), "{:?}", out.error);
    let total = out.metrics.total;
    (out.nodes.into_iter().nth(root).unwrap(), total)
}

#[test]
fn broadcast_costs_tree_size_minus_one() {
    let path = generate(&Family::Path, 5, 2, 1).unwrap();
    let (_, m) = probe(&path, &bfs_tree(&path, 0, 5), ProbeTask::Broadcast, 1);
    assert_eq!(m, 4);
    let (root, m) = probe(&path, &bfs_tree(&path, 2, 1), ProbeTask::Broadcast, 1);
    assert_eq!(m, 0);
    assert!(root.terminated);
    let k8 = generate(&Family::Complete, 8, 2, 1).unwrap();
    let (_, m) = probe(&k8, &bfs_tree(&k8, 0, 8), ProbeTask::Broadcast, 1);
    assert_eq!(m, 7);
}

#[test]
fn convergecast_min_rank() {
    let g = generate(&Family::Path, 6, 2, 3).unwrap();
    let parent = bfs_tree(&g, 0, 6);
    let mut nodes = TreeProbe::network(&g, &parent, ProbeTask::MinRank);
    for (x, v) in [4, 2, 7, 1, 9, 3].into_iter().enumerate() {
        nodes[x].value = v;
    }
    let out = run_plain(&g, nodes, &SimConfig::new(DelayPolicy::ReorderAdversary, 9));
    assert!(out.ok());
    assert_eq!(out.nodes[0].result.min_rank, Some(1));
    assert_eq!(out.metrics.total, 10);
}

#[test]
fn find_any_single_cut_edge_always_found() {
    let g = generate(&Family::Path, 6, 2, 5).unwrap();
    let parent = bfs_tree(&g, 0, 3);
    let cut = cut_edges(&g, &parent);
    assert_eq!(cut.len(), 1);
    let (root, _) = probe(&g, &parent, ProbeTask::FindAny { trials: 50 }, 2);
    for r in &root.result.rounds {
        assert_eq!(*r, RoundOutcome::Found(Candidate { name: cut[0], high: false, key: r.key() }));
    }
}

#[test]
fn find_any_without_outgoing_edges_is_zero() {
    let g = generate(&Family::Gnp { p: 0.5 }, 12, 2, 5).unwrap();
    let comps = g.components();
    let root = 0;
    let size = comps.iter().filter(|&&c| c == comps[root]).count();
    let (root, _) = probe(&g, &bfs_tree(&g, root, size), ProbeTask::FindAny { trials: 30 }, 4);
    assert!(root.result.rounds.iter().all(|r| *r == RoundOutcome::Zero));
}

#[test]
fn find_any_returns_only_cut_edges() {
    for seed in 0..6 {
        let g = generate(&Family::Gnp { p: 0.3 }, 40, 2, seed).unwrap();
        let parent = bfs_tree(&g, 0, 15);
        let cut = cut_edges(&g, &parent);
        let (root, _) = probe(&g, &parent, ProbeTask::FindAny { trials: 100 }, seed);
        let found: Vec<_> = root
            .result
            .rounds
            .iter()
            .filter_map(|r| match r {
                RoundOutcome::Found(c) => Some(c.name),
                _ => None,
            })
            .collect();
        assert!(found.iter().all(|e| cut.contains(e)));
        if !cut.is_empty() {
            assert!(found.len() >= 100 / 16, "seed {seed}: {} successes", found.len());
        }
    }
}

#[test]
fn find_min_matches_direct_cut_scan() {
    for seed in 0..40 {
        let g = generate(&Family::Gnp { p: 0.3 }, 32, 2, seed).unwrap();
        let parent = bfs_tree(&g, 0, 10 + (seed as usize % 12));
        let b = g.scale().id_bits();
        let want = g
            .edges()
            .iter()
            .filter(|e| parent[e.u].is_some() != parent[e.v].is_some())
            .min_by_key(|e| e.weight.key(b))
            .map(|e| e.name);
        let (root, _) = probe(&g, &parent, ProbeTask::FindMin { trials: 5 }, seed);
        for got in &root.result.minima {
            assert_eq!(got.map(|c| c.name), want, "seed {seed}");
        }
    }
}

#[test]
fn approx_cut_of_empty_cut_is_zero() {
    let g = generate(&Family::Complete, 10, 2, 1).unwrap();
    let (root, _) = probe(&g, &bfs_tree(&g, 0, 10), ProbeTask::ApproxCut { trials: 5 }, 1);
    assert_eq!(root.result.estimates, vec![0; 5]);
}

#[test]
fn approx_cut_message_cost_linear_in_tree() {
    let g = generate(&Family::Gnp { p: 0.2 }, 64, 2, 7).unwrap();
    let parent = bfs_tree(&g, 0, 30);
    let (_, m) = probe(&g, &parent, ProbeTask::ApproxCut { trials: 1 }, 7);
    let waves = g.scale().c_log_n() as u64;
    assert_eq!(m, waves * 2 * 29);
}

#[test]
fn stale_tag_and_non_parent_waves_ignored() {
    let g = generate(&Family::Path, 3, 2, 1).unwrap();
    let local = Local::of(&g, 1);
    let mut agent = TreeAgent::new(Plane::Frag, g.id(0));
    agent.parent = Some(0);
    let mut out = Vec::new();
    let mut rng = crate::simnet::node_rng(0, 1);
    let mut marks = Vec::new();
    let mut ctx = Ctx::new(1, &mut out, &mut rng, &mut marks);
    let stale = Msg::Query { plane: Plane::Frag, tag: g.id(2), reset: false, cap: None };
    assert!(agent.on_down(&mut ctx, 0, stale, &local).is_empty());
    let fresh = Msg::Query { plane: Plane::Frag, tag: g.id(0), reset: false, cap: None };
    assert!(agent.on_down(&mut ctx, 2, fresh.clone(), &local).is_empty());
    assert!(ctx.outbox_len() == 0);
    agent.on_down(&mut ctx, 0, fresh, &local);
    assert_eq!(out, vec![(0, Msg::Ack { plane: Plane::Frag, tag: g.id(0) })]);
}

impl RoundOutcome {
    fn key(&self) -> u128 {
        match self {
            RoundOutcome::Found(c) => c.key,
            _ => 0,
        }
    }
}
