//! MST over a known spanning tree by rank-synchronized fragment merging.
//!
//! The spanning tree carries phase control: its root collects the minimum
//! fragment rank, broadcasts it with `Proceed`, and waits for a `PhaseDone`
//! convergecast in which each node reports only once its own rank has
//! moved past that minimum. Within a phase every fragment at the minimum
//! rank finds its lightest outgoing edge and sends `Connect` across it.
//!
//! The receiving endpoint answers by rank:
//!
//! * its fragment has a higher rank: `Accept` at once, and the connecting
//!   fragment adopts the receiver's identity and rank;
//! * both endpoints picked the same edge: the endpoint with the larger
//!   identity becomes the leader of the union at rank + 1;
//! * otherwise the `Connect` stays in the inbox until the receiver's rank
//!   rises, and is then accepted with the new identity and rank.
//!
//! Identity changes travel through the fragment as `IdentityUpdate`,
//! which also re-roots the fragment tree toward its sender.

use std::collections::BTreeSet;

use crate::graph::{EdgeName, Graph, NodeId};
use crate::simnet::{Ctx, Protocol, Step};
use crate::treeops::{drive, is_upward, wave_plane, Event, FindMin, Local, TreeAgent, Up};
use crate::wire::{Msg, Plane};

pub mod mark {
    /// The spanning-tree root is about to collect ranks; all fragments
    /// are settled.
    pub const PHASE: &str = "mst-phase";
    /// A fragment found no outgoing edge.
    pub const TERMINAL: &str = "mst-terminal";
}

#[derive(Clone, Debug)]
pub struct FindMstNode {
    pub local: Local,
    /// Spanning-tree plane; static.
    pub span: TreeAgent,
    /// Fragment plane; the tag is the fragment identity.
    pub frag: TreeAgent,
    pub rank: u32,
    /// Neighbour a `Connect` was sent to and not yet answered.
    pub connect_to: Option<usize>,
    /// Minimum rank of the running phase while this node's `PhaseDone`
    /// is still owed.
    owe_done: Option<u32>,
    finder: Option<FindMin>,
    /// Phases started (meaningful at the spanning-tree root).
    pub phases: u32,
    pub terminated: bool,
    /// Identity changes seen by this node.
    pub merges: u32,
}

impl FindMstNode {
    /// One node per graph node; `parent`/`children` describe the spanning
    /// tree and `root` is its root.
    pub fn network(g: &Graph, root: usize, parent: &[Option<usize>], children: &[Vec<usize>]) -> Vec<FindMstNode> {
        let root_id = g.id(root);
        Local::all(g)
            .into_iter()
            .enumerate()
            .map(|(x, local)| FindMstNode::new(local, root_id, parent[x], children[x].clone()))
            .collect()
    }

    /// A single node whose spanning tree is rooted at `root_id`.
    pub fn new(local: Local, root_id: NodeId, parent: Option<usize>, children: Vec<usize>) -> FindMstNode {
        let mut span = TreeAgent::new(Plane::Span, root_id);
        span.parent = parent;
        span.children = children;
        let frag = TreeAgent::new(Plane::Frag, local.me);
        FindMstNode {
            local,
            span,
            frag,
            rank: 0,
            connect_to: None,
            owe_done: None,
            finder: None,
            phases: 0,
            terminated: false,
            merges: 0,
        }
    }

    pub fn fragment(&self) -> NodeId {
        self.frag.tag
    }

    fn tree_nbrs(&self) -> Vec<usize> {
        self.frag.parent.iter().chain(self.frag.children.iter()).copied().collect()
    }

    /// Takes a new identity received from `from` (or, with `from = None`,
    /// becomes the leader) and floods it through the fragment.
    fn adopt(&mut self, ctx: &mut Ctx, from: Option<usize>, id: NodeId, rank: u32, extra: Option<usize>) {
        let mut children: Vec<usize> = self.tree_nbrs().into_iter().filter(|&v| Some(v) != from).collect();
        children.extend(extra);
        self.frag.parent = from;
        self.frag.children = children;
        self.frag.tag = id;
        self.rank = rank;
        self.merges += 1;
        // an unfinished search of the old fragment can no longer complete
        self.finder = None;
        for &c in &self.frag.children {
            ctx.send(c, Msg::IdentityUpdate { id, rank });
        }
        self.settle_done(ctx);
    }

    fn settle_done(&mut self, ctx: &mut Ctx) {
        if let Some(min) = self.owe_done {
            if self.rank > min {
                self.owe_done = None;
                let evs = self.span.contribute(ctx, Up::Done);
                self.handle(ctx, evs);
            }
        }
    }

    fn handle(&mut self, ctx: &mut Ctx, events: Vec<Event>) {
        for ev in events {
            match ev {
                Event::RankRequest => {
                    let more = self.span.contribute(ctx, Up::Rank(self.rank));
                    self.handle(ctx, more);
                }
                Event::Proceed { min_rank } => self.on_proceed(ctx, min_rank),
                Event::Completed(up) => self.on_span_completed(ctx, up),
                Event::Result { name, .. } => self.on_chosen(ctx, name),
                Event::Terminate => self.terminated = true,
                Event::SendTrigger { .. } => {}
            }
        }
    }

    fn start_phase(&mut self, ctx: &mut Ctx) {
        self.phases += 1;
        ctx.checkpoint(mark::PHASE, self.phases);
        let evs = self.span.begin(ctx, Msg::RankRequest { tag: self.span.tag }, &self.local);
        self.handle(ctx, evs);
    }

    /// Completion of a spanning-tree wave at its root.
    fn on_span_completed(&mut self, ctx: &mut Ctx, up: Up) {
        match up {
            Up::Rank(min_rank) => {
                let evs = self.span.begin(ctx, Msg::Proceed { tag: self.span.tag, min_rank }, &self.local);
                self.handle(ctx, evs);
            }
            Up::Done if !self.terminated => self.start_phase(ctx),
            _ => {}
        }
    }

    fn on_proceed(&mut self, ctx: &mut Ctx, min_rank: u32) {
        self.owe_done = Some(min_rank);
        if self.rank == min_rank && self.frag.is_root() {
            self.finder = Some(FindMin::new(Plane::Frag, self.frag.tag, self.local.scale, self.local.p));
            self.advance(ctx, None);
        }
        self.settle_done(ctx);
    }

    fn advance(&mut self, ctx: &mut Ctx, up: Option<Up>) {
        let Some(finder) = self.finder.as_mut() else { return };
        let mut sink = Vec::new();
        let out = drive(finder, &mut self.frag, ctx, &self.local, up, &mut sink);
        self.handle(ctx, sink);
        if let Some(found) = out {
            self.finder = None;
            if found.is_none() {
                ctx.checkpoint(mark::TERMINAL, self.phases);
                let evs = self.frag.begin(ctx, Msg::Terminate { plane: Plane::Frag, tag: self.frag.tag }, &self.local);
                self.handle(ctx, evs);
            }
        }
    }

    /// This node is the inside endpoint of its fragment's chosen edge.
    fn on_chosen(&mut self, ctx: &mut Ctx, name: EdgeName) {
        let Some(e) = self.local.edge_named(name) else { return };
        self.connect_to = Some(e.nbr);
        ctx.send(e.nbr, Msg::Connect { id: self.frag.tag, rank: self.rank });
    }

    fn on_connect(&mut self, ctx: &mut Ctx, from: usize, id: NodeId, rank: u32) -> Step {
        if self.connect_to == Some(from) {
            self.connect_to = None;
            let other = self.local.edge_to(from).expect("neighbour").nbr_id;
            if self.local.me > other {
                let me = self.local.me;
                self.adopt(ctx, None, me, self.rank + 1, Some(from));
            }
            Step::Done
        } else if self.rank > rank {
            self.frag.children.push(from);
            ctx.send(from, Msg::Accept { id: self.frag.tag, rank: self.rank });
            Step::Done
        } else {
            Step::Hold(Msg::Connect { id, rank })
        }
    }

    fn on_frag_down(&mut self, ctx: &mut Ctx, from: usize, msg: Msg) {
        let evs = self.frag.on_down(ctx, from, msg, &self.local);
        self.handle(ctx, evs);
    }

    fn on_frag_up(&mut self, ctx: &mut Ctx, from: usize, msg: &Msg) {
        for ev in self.frag.on_up(ctx, from, msg) {
            match ev {
                Event::Completed(up) => self.advance(ctx, Some(up)),
                other => self.handle(ctx, vec![other]),
            }
        }
    }
}

impl Protocol for FindMstNode {
    fn on_wake(&mut self, ctx: &mut Ctx) {
        if self.span.is_root() {
            self.start_phase(ctx);
        }
    }

    fn on_message(&mut self, ctx: &mut Ctx, from: usize, msg: Msg) -> Step {
        match msg {
            Msg::Connect { id, rank } => return self.on_connect(ctx, from, id, rank),
            Msg::Accept { id, rank } | Msg::IdentityUpdate { id, rank } => {
                let accept = matches!(msg, Msg::Accept { .. });
                if accept {
                    if self.connect_to != Some(from) {
                        return Step::Done;
                    }
                    self.connect_to = None;
                } else if self.connect_to == Some(from) {
                    return Step::Hold(msg);
                }
                if rank > self.rank {
                    self.adopt(ctx, Some(from), id, rank, None);
                }
            }
            _ => match wave_plane(&msg) {
                Some(Plane::Span) if is_upward(&msg) => {
                    let evs = self.span.on_up(ctx, from, &msg);
                    self.handle(ctx, evs);
                }
                Some(Plane::Span) => {
                    let evs = self.span.on_down(ctx, from, msg, &self.local);
                    self.handle(ctx, evs);
                }
                Some(Plane::Frag) if is_upward(&msg) => self.on_frag_up(ctx, from, &msg),
                Some(Plane::Frag) => self.on_frag_down(ctx, from, msg),
                None => {}
            },
        }
        Step::Done
    }

    fn is_terminal(&self) -> bool {
        self.terminated
    }
}

/// The fragment-tree edges at the end of a run.
pub fn mst_edges(g: &Graph, nodes: &[FindMstNode]) -> BTreeSet<EdgeName> {
    let b = g.scale().id_bits();
    nodes
        .iter()
        .enumerate()
        .filter_map(|(x, s)| s.frag.parent.map(|p| crate::graph::edge_name(g.id(x), g.id(p), b).expect("valid ids")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::findst::SpanningTree;
    use crate::graph::{generate, oracle_msf, Family};
    use crate::simnet::{run_plain, DelayPolicy, SimConfig};

    fn bfs(g: &Graph, root: usize) -> SpanningTree {
        let mut parent = vec![None; g.n()];
        let mut children = vec![Vec::new(); g.n()];
        let mut seen = vec![false; g.n()];
        seen[root] = true;
        let mut q = std::collections::VecDeque::from([root]);
        while let Some(x) = q.pop_front() {
            for a in g.neighbors(x) {
                if !seen[a.nbr] {
                    seen[a.nbr] = true;
                    parent[a.nbr] = Some(x);
                    children[x].push(a.nbr);
                    q.push_back(a.nbr);
                }
            }
        }
        SpanningTree { root, parent, children }
    }

    fn solve(g: &Graph, policy: DelayPolicy, seed: u64) -> (Vec<FindMstNode>, u64) {
        let t = bfs(g, 0);
        let nodes = FindMstNode::network(g, t.root, &t.parent, &t.children);
        let out = run_plain(g, nodes, &SimConfig::new(policy, seed));
        assert!(out.ok(), "seed {seed}: {:?}", out.error);
        (out.nodes, out.metrics.total)
    }

    #[test]
    fn triangle_takes_two_lightest() {
        let ids = (1..=3).map(NodeId).collect();
        let g = Graph::new(crate::graph::Scale::new(3, 2), ids, &[(0, 1, 1), (1, 2, 2), (0, 2, 3)]).unwrap();
        let (nodes, _) = solve(&g, DelayPolicy::ReorderAdversary, 1);
        assert_eq!(mst_edges(&g, &nodes), oracle_msf(&g));
        assert_eq!(mst_edges(&g, &nodes).len(), 2);
    }

    #[test]
    fn matches_oracle_on_random_graphs() {
        let policies = [DelayPolicy::Uniform { max: 1000 }, DelayPolicy::FifoPerEdge { max: 1000 }, DelayPolicy::ReorderAdversary];
        for seed in 0..30 {
            let g = generate(&Family::GnpConnected { p: 0.15 }, 64, 2, seed).unwrap();
            let (nodes, _) = solve(&g, policies[seed as usize % 3].clone(), seed);
            assert_eq!(mst_edges(&g, &nodes), oracle_msf(&g), "seed {seed}");
            let log_n = g.scale().log_n();
            assert!(nodes.iter().all(|s| s.rank <= log_n));
            assert!(nodes[0].phases <= log_n + 1, "phases {}", nodes[0].phases);
            let frag = nodes[0].fragment();
            assert!(nodes.iter().all(|s| s.fragment() == frag && s.terminated));
        }
    }

    #[test]
    fn single_node_terminates() {
        let g = generate(&Family::Path, 1, 2, 0).unwrap();
        let (nodes, total) = solve(&g, DelayPolicy::ReorderAdversary, 0);
        assert!(nodes[0].terminated);
        assert_eq!(total, 0);
    }
}
