//! Single-leader spanning tree: the leader grows one tree through
//! repeated expand, search and wait phases.
//!
//! * **Expand** pushes `Expand` down the tree and across every edge held in
//!   a Found list; nodes reached for the first time join. A low-degree or
//!   star joiner forwards to all of its neighbours, a high-degree non-star
//!   waits for a `Star` and then forwards over its Found lists.
//! * **Search** samples outgoing edges without replacement and files each
//!   one, tagged with the far endpoint's degree class, in a Found list.
//! * **Wait** estimates the cut and arms the threshold detector; the next
//!   phase starts when enough triggers reach the leader.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{select_stars_with, star_probability, EdgeName, Graph, NodeId};
use crate::simnet::{Ctx, Protocol, Step};
use crate::treeops::{
    coin_probability, drive, is_upward, trigger_target, wave_plane, ApproxCut, Event, Local, Search, SearchOutcome,
    SearchParams, TreeAgent, Up,
};
use crate::wire::{Msg, Plane};

/// Tunable constants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FindStParams {
    pub search: SearchParams,
    /// Hash functions per cut estimate; `c·log n` by default.
    pub approx_reps: u32,
}

impl FindStParams {
    pub fn of(g: &Graph) -> Self {
        FindStParams { search: SearchParams::of(g.scale()), approx_reps: g.scale().c_log_n() }
    }
}

/// Checkpoint kinds reported to the observer, all raised at the leader.
pub mod mark {
    /// An expand finished; the tree is stable.
    pub const EXPAND: &str = "expand";
    pub const TERMINAL: &str = "terminal";
}

/// What a phase ended with, as seen by the leader.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseEnd {
    HighFound,
    Few,
    Waited,
    Terminal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub phase: u32,
    pub end: PhaseEnd,
    pub search_rounds: u32,
    pub found: u32,
    /// `r` handed to the threshold detector, if the phase waited.
    pub r: Option<u64>,
}

#[derive(Clone, Debug)]
struct Pending {
    awaiting: BTreeSet<usize>,
    accepted: Vec<usize>,
    sent: BTreeSet<usize>,
    /// A `RejectedLowerId` came back from some target.
    lower: bool,
}

#[derive(Clone, Debug)]
enum Stage {
    Idle,
    Expanding,
    Searching(Search),
    Estimating(ApproxCut, Search),
    Waiting { got: u32 },
    Finished,
}

#[derive(Clone, Debug)]
struct Window {
    phase: u32,
    r: u64,
    counted: HashSet<usize>,
}

#[derive(Clone, Debug)]
pub struct FindStNode {
    pub local: Local,
    pub star: bool,
    pub leader: bool,
    pub in_tree: bool,
    pub agent: TreeAgent,
    /// Neighbours whose `LowDegree` (or a low-degree search result) arrived.
    pub found_l: Vec<usize>,
    /// Neighbours whose `Star` (or a high-degree search result) arrived.
    pub found_o: Vec<usize>,
    /// Neighbours that sent this node an `Expand`.
    pub t_neighbor: BTreeSet<usize>,
    pub phase: u32,
    got_star: bool,
    /// Joined but still waiting for a `Star` before forwarding.
    stalled: bool,
    pending: Option<Pending>,
    window: Option<Window>,
    /// Trigger coins that came up heads here.
    pub heads: u64,
    /// Triggers the leader counted.
    pub triggers_in: u64,
    /// `Trigger` messages sent to and received from each neighbour.
    pub trig_sent: BTreeMap<usize, u64>,
    pub trig_recv: BTreeMap<usize, u64>,
    stage: Stage,
    params: FindStParams,
    pub terminated: bool,
    pub log: Vec<PhaseRecord>,
    /// Expansions are labelled with fragment identities and several
    /// leaders may run at once.
    pub multi: bool,
    /// Edges (by neighbour) over which an expansion of a lower fragment
    /// was first rejected.
    pub reject: Vec<usize>,
    rejected_ids: HashSet<NodeId>,
    /// This leader learned that its fragment touched a higher one.
    pub halted: bool,
    /// Expansions completed at this leader, and those with no lower-id
    /// rejection.
    pub expansions: u32,
    pub successful: u32,
}

impl FindStNode {
    /// Builds every node. `stars` marks self-selected star nodes.
    pub fn network(g: &Graph, leader: usize, stars: &[bool], params: FindStParams) -> Vec<FindStNode> {
        Local::all(g)
            .into_iter()
            .enumerate()
            .map(|(x, local)| {
                let tag = if leader < g.n() { g.id(leader) } else { NodeId(0) };
                let mut agent = TreeAgent::new(Plane::Span, tag);
                agent.adopt = true;
                FindStNode {
                    local,
                    star: stars[x],
                    leader: x == leader,
                    in_tree: x == leader,
                    agent,
                    found_l: Vec::new(),
                    found_o: Vec::new(),
                    t_neighbor: BTreeSet::new(),
                    phase: 0,
                    got_star: false,
                    stalled: false,
                    pending: None,
                    window: None,
                    heads: 0,
                    triggers_in: 0,
                    trig_sent: BTreeMap::new(),
                    trig_recv: BTreeMap::new(),
                    stage: Stage::Idle,
                    params,
                    terminated: false,
                    log: Vec::new(),
                    multi: false,
                    reject: Vec::new(),
                    rejected_ids: HashSet::new(),
                    halted: false,
                    expansions: 0,
                    successful: 0,
                }
            })
            .collect()
    }

    /// Builds every node for the leaderless variant: each star leads its
    /// own fragment, everyone else starts outside any fragment (id 0).
    pub fn network_multi(g: &Graph, stars: &[bool], params: FindStParams) -> Vec<FindStNode> {
        let mut nodes = Self::network(g, usize::MAX, stars, params);
        for node in &mut nodes {
            node.multi = true;
            node.agent.adopt = false;
            node.leader = node.star;
            node.in_tree = node.star;
            node.agent.tag = if node.star { node.local.me } else { NodeId(0) };
        }
        nodes
    }

    /// Identity of the fragment this node belongs to (0 when none).
    pub fn vid(&self) -> NodeId {
        if self.in_tree {
            self.agent.tag
        } else {
            NodeId(0)
        }
    }

    pub fn low(&self) -> bool {
        !self.local.high
    }

    pub fn parent(&self) -> Option<usize> {
        self.agent.parent
    }

    pub fn children(&self) -> &[usize] {
        &self.agent.children
    }

    fn tag(&self) -> NodeId {
        self.agent.tag
    }

    fn take_found(&mut self, except: Option<usize>) -> BTreeSet<usize> {
        let mut out: BTreeSet<usize> = self.found_l.drain(..).chain(self.found_o.drain(..)).collect();
        if let Some(s) = except {
            out.remove(&s);
        }
        out
    }

    fn send_expand(&mut self, ctx: &mut Ctx, targets: BTreeSet<usize>) -> bool {
        let msg = if self.multi { Msg::ExpandId { tid: self.agent.tag } } else { Msg::Expand { phase: self.phase } };
        for &t in &targets {
            ctx.send(t, msg.clone());
        }
        let done = targets.is_empty();
        self.pending = Some(Pending { awaiting: targets.clone(), accepted: Vec::new(), sent: targets, lower: false });
        done
    }

    fn take_reject(&mut self, except: usize) -> BTreeSet<usize> {
        self.reject.drain(..).filter(|&v| v != except).collect()
    }

    fn forget_found(&mut self, v: usize) {
        self.found_l.retain(|&u| u != v);
        self.found_o.retain(|&u| u != v);
    }

    /// Labelled expansion: compare fragment identities, reject lower ones
    /// at once, and otherwise wait for any expansion this node is still
    /// part of before joining or forwarding.
    fn on_expand_id(&mut self, ctx: &mut Ctx, from: usize, tid: NodeId) -> Step {
        let vid = self.vid();
        if tid < vid {
            ctx.send(from, Msg::RejectedLowerId { tid, joined: false });
            if self.rejected_ids.insert(tid) {
                self.reject.push(from);
            }
            return Step::Done;
        }
        if tid == vid && self.agent.parent != Some(from) {
            ctx.send(from, Msg::RejectSameTree { tid });
            return Step::Done;
        }
        if self.pending.is_some() || self.stalled {
            return Step::Hold(Msg::ExpandId { tid });
        }
        self.forget_found(from);
        self.window = None;
        let targets = if tid == vid {
            let mut t = self.take_found(Some(from));
            t.extend(self.take_reject(from));
            t.extend(self.agent.children.iter().copied());
            t
        } else {
            let was_member = self.in_tree;
            let mut old: BTreeSet<usize> = self.agent.parent.iter().chain(&self.agent.children).copied().collect();
            old.remove(&from);
            self.in_tree = true;
            self.agent.tag = tid;
            self.agent.parent = Some(from);
            self.agent.children.clear();
            if self.leader {
                self.leader = false;
                self.stage = Stage::Finished;
            }
            if was_member {
                old.extend(self.take_found(Some(from)));
                old.extend(self.take_reject(from));
                old
            } else if !self.low() && !self.star && !self.got_star {
                self.stalled = true;
                return Step::Done;
            } else {
                self.join_targets(Some(from))
            }
        };
        if self.send_expand(ctx, targets) {
            self.expand_done(ctx);
        }
        Step::Done
    }

    /// Forwarding for a node that just joined (or, for the leader, the
    /// first phase): everything except the sender.
    fn join_targets(&mut self, from: Option<usize>) -> BTreeSet<usize> {
        if self.low() || self.star || self.leader {
            self.found_l.clear();
            self.found_o.clear();
            self.local.edges.iter().map(|e| e.nbr).filter(|&v| Some(v) != from).collect()
        } else {
            self.take_found(from)
        }
    }

    fn on_expand(&mut self, ctx: &mut Ctx, from: usize, phase: u32) {
        self.t_neighbor.insert(from);
        if !self.in_tree {
            self.in_tree = true;
            self.agent.parent = Some(from);
            self.agent.children.clear();
            self.phase = phase;
            self.window = None;
            if !self.low() && !self.star && !self.got_star {
                self.stalled = true;
                return;
            }
            let targets = self.join_targets(Some(from));
            if self.send_expand(ctx, targets) {
                self.expand_done(ctx);
            }
        } else if Some(from) == self.agent.parent && !self.stalled {
            self.phase = phase;
            self.window = None;
            let mut targets = self.take_found(Some(from));
            targets.extend(self.agent.children.iter().copied());
            if self.send_expand(ctx, targets) {
                self.expand_done(ctx);
            }
        } else {
            ctx.send(from, Msg::DoneByReject);
        }
    }

    fn on_done(&mut self, ctx: &mut Ctx, from: usize, accepted: bool, lower: bool) {
        let Some(p) = self.pending.as_mut() else { return };
        if !p.awaiting.remove(&from) {
            return;
        }
        if accepted {
            p.accepted.push(from);
        }
        p.lower |= lower;
        if p.awaiting.is_empty() {
            self.expand_done(ctx);
        }
    }

    fn expand_done(&mut self, ctx: &mut Ctx) {
        let p = self.pending.take().expect("expand in progress");
        let mut children = p.accepted;
        children.sort_unstable();
        self.agent.children = children;
        if self.multi {
            // replies are gated behind the neighbour's LowDegree, so any
            // entry filed while this expansion ran is removed here too
            self.found_l.retain(|v| !p.sent.contains(v));
            self.found_o.retain(|v| !p.sent.contains(v));
            self.reject.retain(|v| !p.sent.contains(v));
            if self.leader {
                self.expansions += 1;
                if p.lower {
                    self.halted = true;
                    self.stage = Stage::Finished;
                    return;
                }
                self.successful += 1;
            } else if let Some(parent) = self.agent.parent {
                let tid = self.agent.tag;
                let reply = if p.lower { Msg::RejectedLowerId { tid, joined: true } } else { Msg::AcceptId { tid } };
                ctx.send(parent, reply);
                return;
            }
        }
        if self.leader {
            ctx.checkpoint(mark::EXPAND, self.phase);
            let s = Search::new(Plane::Span, self.tag(), self.local.scale, self.local.p, self.params.search);
            self.stage = Stage::Searching(s);
            self.advance(ctx, None);
        } else if let Some(parent) = self.agent.parent {
            ctx.send(parent, Msg::DoneByAccept);
        }
    }

    fn start_phase(&mut self, ctx: &mut Ctx) {
        self.phase += 1;
        self.window = None;
        self.stage = Stage::Expanding;
        let targets = if self.phase == 1 {
            self.join_targets(None)
        } else {
            let mut t = self.take_found(None);
            t.extend(self.reject.drain(..));
            t.extend(self.agent.children.iter().copied());
            t
        };
        if self.send_expand(ctx, targets) {
            self.expand_done(ctx);
        }
    }

    fn record(&mut self, s: &Search, end: PhaseEnd, r: Option<u64>) {
        self.log.push(PhaseRecord { phase: self.phase, end, search_rounds: s.rounds, found: s.found, r });
    }

    /// Leader FSM: feeds a completed wave (or nothing) to the current driver.
    fn advance(&mut self, ctx: &mut Ctx, up: Option<Up>) {
        let mut sink = Vec::new();
        match std::mem::replace(&mut self.stage, Stage::Idle) {
            Stage::Searching(mut s) => match drive(&mut s, &mut self.agent, ctx, &self.local, up, &mut sink) {
                None => self.stage = Stage::Searching(s),
                Some(SearchOutcome::Terminal) => {
                    self.record(&s, PhaseEnd::Terminal, None);
                    self.stage = Stage::Finished;
                    let tag = self.tag();
                    sink.extend(self.agent.begin(ctx, Msg::Terminate { plane: Plane::Span, tag }, &self.local));
                    ctx.checkpoint(mark::TERMINAL, self.phase);
                }
                Some(SearchOutcome::Wait) => {
                    let reps = self.params.approx_reps;
                    let a = ApproxCut::with_reps(Plane::Span, self.tag(), self.local.scale, self.local.p, reps);
                    self.stage = Stage::Estimating(a, s);
                    self.handle(ctx, sink);
                    return self.advance(ctx, None);
                }
                Some(out) => {
                    let end = if out == SearchOutcome::HighFound { PhaseEnd::HighFound } else { PhaseEnd::Few };
                    self.record(&s, end, None);
                    self.handle(ctx, sink);
                    return self.start_phase(ctx);
                }
            },
            Stage::Estimating(mut a, s) => match drive(&mut a, &mut self.agent, ctx, &self.local, up, &mut sink) {
                None => self.stage = Stage::Estimating(a, s),
                Some(q) => {
                    let r = (q / 2).max(1);
                    self.record(&s, PhaseEnd::Waited, Some(r));
                    self.stage = Stage::Waiting { got: 0 };
                    let (tag, phase) = (self.tag(), self.phase);
                    sink.extend(self.agent.begin(ctx, Msg::SendTrigger { tag, r, phase }, &self.local));
                }
            },
            other => self.stage = other,
        }
        self.handle(ctx, sink);
    }

    fn handle(&mut self, ctx: &mut Ctx, events: Vec<Event>) {
        for ev in events {
            match ev {
                Event::Completed(up) => self.advance(ctx, Some(up)),
                Event::Result { name, high } => self.file_result(ctx, name, high),
                Event::Terminate => self.terminated = true,
                Event::SendTrigger { r, phase } => self.open_window(ctx, r, phase),
                Event::RankRequest | Event::Proceed { .. } => {}
            }
        }
    }

    fn file_result(&mut self, ctx: &mut Ctx, name: EdgeName, high: bool) {
        let Some(v) = self.local.edge_named(name).map(|e| e.nbr) else { return };
        if high {
            self.found_o.push(v);
        } else {
            self.found_l.push(v);
            self.note_event(ctx, v);
        }
    }

    fn open_window(&mut self, ctx: &mut Ctx, r: u64, phase: u32) {
        if self.multi && !self.leader {
            self.phase = phase;
        }
        if phase != self.phase {
            return;
        }
        self.window = Some(Window { phase, r, counted: HashSet::new() });
        for v in self.found_l.clone() {
            self.note_event(ctx, v);
        }
    }

    /// A `LowDegree` edge to `v` is an event unless `v` already expanded
    /// into this node.
    fn note_event(&mut self, ctx: &mut Ctx, v: usize) {
        if self.t_neighbor.contains(&v) {
            return;
        }
        let cl = self.local.scale.c_log_n();
        let Some(w) = self.window.as_mut() else { return };
        if !w.counted.insert(v) {
            return;
        }
        let (r, phase) = (w.r, w.phase);
        if ctx.rng().gen_bool(coin_probability(cl, r)) {
            self.heads += 1;
            self.on_trigger(ctx, phase);
        }
    }

    fn on_trigger(&mut self, ctx: &mut Ctx, phase: u32) {
        if phase != self.phase || !self.in_tree {
            return;
        }
        if !self.leader {
            if let Some(p) = self.agent.parent {
                *self.trig_sent.entry(p).or_default() += 1;
                ctx.send(p, Msg::Trigger { tag: self.tag(), phase });
            }
            return;
        }
        if let Stage::Waiting { got } = &mut self.stage {
            *got += 1;
            self.triggers_in += 1;
            if *got >= trigger_target(self.local.scale.c_log_n()) {
                self.start_phase(ctx);
            }
        }
    }
}

impl Protocol for FindStNode {
    fn on_wake(&mut self, ctx: &mut Ctx) {
        let nbrs: Vec<usize> = self.local.edges.iter().map(|e| e.nbr).collect();
        for &v in &nbrs {
            if self.star {
                ctx.send(v, Msg::Star);
            }
            if self.low() {
                ctx.send(v, Msg::LowDegree);
            }
        }
        if self.leader {
            self.start_phase(ctx);
        }
    }

    fn on_message(&mut self, ctx: &mut Ctx, from: usize, msg: Msg) -> Step {
        match msg {
            Msg::Star => {
                self.got_star = true;
                self.found_o.push(from);
                if self.stalled {
                    self.stalled = false;
                    let parent = self.agent.parent;
                    let targets = self.take_found(parent);
                    if self.send_expand(ctx, targets) {
                        self.expand_done(ctx);
                    }
                }
            }
            Msg::LowDegree => {
                self.found_l.push(from);
                self.note_event(ctx, from);
            }
            Msg::DegQuery => ctx.send(from, Msg::DegReply { high: self.local.high }),
            Msg::DegReply { high } => {
                let evs = self.agent.on_deg_reply(ctx, high);
                self.handle(ctx, evs);
            }
            Msg::Expand { phase } => self.on_expand(ctx, from, phase),
            Msg::DoneByAccept | Msg::AcceptId { .. } => self.on_done(ctx, from, true, false),
            Msg::DoneByReject | Msg::RejectSameTree { .. } => self.on_done(ctx, from, false, false),
            Msg::RejectedLowerId { joined, .. } => self.on_done(ctx, from, joined, true),
            Msg::ExpandId { tid } => return self.on_expand_id(ctx, from, tid),
            Msg::Trigger { phase, .. } => {
                *self.trig_recv.entry(from).or_default() += 1;
                if self.agent.children.contains(&from) {
                    self.on_trigger(ctx, phase);
                }
            }
            m if wave_plane(&m) == Some(Plane::Span) => {
                let evs = if is_upward(&m) {
                    self.agent.on_up(ctx, from, &m)
                } else {
                    self.agent.on_down(ctx, from, m, &self.local)
                };
                self.handle(ctx, evs);
            }
            _ => {}
        }
        Step::Done
    }

    fn is_terminal(&self) -> bool {
        self.terminated
    }
}

/// Star selection for a run seed.
pub fn choose_stars(g: &Graph, seed: u64) -> Vec<bool> {
    select_stars_with(g.n(), star_probability(g.n()), seed)
}

/// A rooted spanning tree handed from one stage to the next.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpanningTree {
    pub root: usize,
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
}

impl SpanningTree {
    /// Checks parent/child consistency and that every node reaches the
    /// root; returns a description of the first problem found.
    pub fn from_links(g: &Graph, parent: Vec<Option<usize>>, children: Vec<Vec<usize>>) -> Result<Self, String> {
        let n = g.n();
        let roots: Vec<usize> = (0..n).filter(|&x| parent[x].is_none()).collect();
        if roots.len() != 1 {
            return Err(format!("{} roots", roots.len()));
        }
        for x in 0..n {
            if let Some(p) = parent[x] {
                if g.neighbors(x).iter().all(|a| a.nbr != p) {
                    return Err(format!("parent of {} is not a neighbour", g.id(x)));
                }
                if !children[p].contains(&x) {
                    return Err(format!("{} missing from its parent's children", g.id(x)));
                }
            }
            for &c in &children[x] {
                if parent[c] != Some(x) {
                    return Err(format!("child {} of {} points elsewhere", g.id(c), g.id(x)));
                }
            }
        }
        for start in 0..n {
            let (mut x, mut steps) = (start, 0);
            while let Some(p) = parent[x] {
                x = p;
                steps += 1;
                if steps > n {
                    return Err(format!("cycle through {}", g.id(start)));
                }
            }
        }
        Ok(SpanningTree { root: roots[0], parent, children })
    }

    pub fn edges(&self, g: &Graph) -> BTreeSet<EdgeName> {
        self.parent
            .iter()
            .enumerate()
            .filter_map(|(x, p)| p.map(|p| g.neighbors(x).iter().find(|a| a.nbr == p).map(|a| g.edge(a.edge).name)))
            .flatten()
            .collect()
    }

    /// Reads the tree off final node states.
    pub fn from_nodes(g: &Graph, nodes: &[FindStNode]) -> Result<Self, String> {
        if let Some(x) = nodes.iter().position(|s| !s.in_tree) {
            return Err(format!("node {} never joined", g.id(x)));
        }
        Self::from_links(
            g,
            nodes.iter().map(|s| s.parent()).collect(),
            nodes.iter().map(|s| s.children().to_vec()).collect(),
        )
    }
}
