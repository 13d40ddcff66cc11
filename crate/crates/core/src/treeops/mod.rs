//! Broadcast and convergecast over a rooted fragment tree, and the leader
//! state machines (FindAny, FindMin, ApproxCut, Search) built on them.
//!
//! A [`TreeAgent`] is the per-node half: it forwards downward waves to its
//! children, computes the node's own sketch contribution, folds the
//! children's replies and passes the result up. Leader-side logic lives in
//! [`Driver`] implementations that issue one wave at a time.

mod drivers;
mod probe;
mod threshold;

use std::collections::{HashMap, HashSet};

use rand_chacha::ChaCha8Rng;

use crate::graph::{EdgeName, Graph, NodeId, Scale};
use crate::simnet::Ctx;
use crate::sketch::{in_range, node_vector, HashFn, ParityVector};
use crate::wire::{Msg, Plane};

pub use drivers::{
    ApproxCut, Candidate, FindAnyRetry, FindAnyRound, FindMin, RoundOutcome, Search, SearchOutcome, SearchParams,
};
pub use probe::{ProbeResult, ProbeTask, TreeProbe};
pub use threshold::{coin_probability, threshold_coin_process, trigger_target};

/// One incident edge as the node knows it under KT1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Incident {
    pub nbr: usize,
    pub nbr_id: NodeId,
    pub name: EdgeName,
    pub base: u64,
    pub key: u128,
}

/// Everything a node knows locally at wake-up.
#[derive(Clone, Debug)]
pub struct Local {
    pub me: NodeId,
    pub scale: Scale,
    pub high: bool,
    /// Field modulus for the hash family at this scale.
    pub p: u64,
    pub edges: Vec<Incident>,
    names: Vec<EdgeName>,
    by_name: HashMap<EdgeName, usize>,
    by_nbr: HashMap<usize, usize>,
}

impl Local {
    pub fn of(g: &Graph, x: usize) -> Self {
        Self::with_modulus(g, x, HashFn::modulus(g.scale()))
    }

    /// Like [`Local::of`] with a precomputed modulus, which saves a prime
    /// search per node when building a whole network.
    pub fn with_modulus(g: &Graph, x: usize, p: u64) -> Self {
        let b = g.scale().id_bits();
        let edges: Vec<Incident> = g
            .neighbors(x)
            .iter()
            .map(|a| {
                let e = g.edge(a.edge);
                Incident { nbr: a.nbr, nbr_id: g.id(a.nbr), name: e.name, base: e.weight.base, key: e.weight.key(b) }
            })
            .collect();
        let by_name = edges.iter().enumerate().map(|(i, e)| (e.name, i)).collect();
        let by_nbr = edges.iter().enumerate().map(|(i, e)| (e.nbr, i)).collect();
        Local {
            me: g.id(x),
            scale: g.scale(),
            high: g.classify(x) == crate::graph::DegreeClass::High,
            p,
            names: edges.iter().map(|e| e.name).collect(),
            edges,
            by_name,
            by_nbr,
        }
    }

    /// Builds the local view of every node.
    pub fn all(g: &Graph) -> Vec<Local> {
        let p = HashFn::modulus(g.scale());
        (0..g.n()).map(|x| Self::with_modulus(g, x, p)).collect()
    }

    pub fn edge_named(&self, name: EdgeName) -> Option<&Incident> {
        self.by_name.get(&name).map(|&i| &self.edges[i])
    }

    pub fn edge_to(&self, nbr: usize) -> Option<&Incident> {
        self.by_nbr.get(&nbr).map(|&i| &self.edges[i])
    }

    pub fn names(&self) -> &[EdgeName] {
        &self.names
    }
}

/// Edge restriction for sketch waves: exclusions plus an optional weight cap.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Filter {
    pub excluded: HashSet<EdgeName>,
    pub cap: Option<u128>,
}

impl Filter {
    pub fn passes(&self, e: &Incident) -> bool {
        !self.excluded.contains(&e.name) && self.cap.is_none_or(|c| e.key <= c)
    }
}

/// Value folded up the tree during a convergecast.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Up {
    Ack,
    Vec(ParityVector),
    Name(u64),
    /// `count` saturates at 3; `base` is the weight base of the edge when
    /// exactly one tree node reported it.
    Verify { count: u8, high: bool, base: u64 },
    Rank(u32),
    Done,
}

impl Up {
    fn combine(self, other: Up) -> Option<Up> {
        Some(match (self, other) {
            (Up::Ack, Up::Ack) => Up::Ack,
            (Up::Vec(a), Up::Vec(b)) => Up::Vec(a ^ b),
            (Up::Name(a), Up::Name(b)) => Up::Name(a ^ b),
            (Up::Verify { count: c1, high: h1, base: b1 }, Up::Verify { count: c2, high: h2, base: b2 }) => {
                Up::Verify { count: (c1 + c2).min(3), high: h1 || h2, base: if c1 > 0 { b1 } else { b2 } }
            }
            (Up::Rank(a), Up::Rank(b)) => Up::Rank(a.min(b)),
            (Up::Done, Up::Done) => Up::Done,
            _ => return None,
        })
    }

    fn identity_for(down: &Msg) -> Option<Up> {
        Some(match down {
            Msg::Query { .. } | Msg::Result { .. } => Up::Ack,
            Msg::Hash { .. } => Up::Vec(ParityVector(0)),
            Msg::Index { .. } => Up::Name(0),
            Msg::Verify { .. } => Up::Verify { count: 0, high: false, base: 0 },
            Msg::RankRequest { .. } => Up::Rank(u32::MAX),
            Msg::Proceed { .. } => Up::Done,
            _ => return None,
        })
    }

    fn to_msg(self, plane: Plane, tag: NodeId) -> Msg {
        match self {
            Up::Ack => Msg::Ack { plane, tag },
            Up::Vec(v) => Msg::VecUp { plane, tag, v: v.0 },
            Up::Name(x) => Msg::NameUp { plane, tag, x },
            Up::Verify { count, high, base } => Msg::VerifyUp { plane, tag, count, high, base },
            Up::Rank(rank) => Msg::RankUp { tag, rank },
            Up::Done => Msg::PhaseDone { tag },
        }
    }

    fn from_msg(msg: &Msg) -> Option<(NodeId, Up)> {
        Some(match *msg {
            Msg::Ack { tag, .. } => (tag, Up::Ack),
            Msg::VecUp { tag, v, .. } => (tag, Up::Vec(ParityVector(v))),
            Msg::NameUp { tag, x, .. } => (tag, Up::Name(x)),
            Msg::VerifyUp { tag, count, high, base, .. } => (tag, Up::Verify { count, high, base }),
            Msg::RankUp { tag, rank } => (tag, Up::Rank(rank)),
            Msg::PhaseDone { tag } => (tag, Up::Done),
            _ => return None,
        })
    }
}

/// The plane a tree-wave message travels on, or `None` for anything else.
pub fn wave_plane(msg: &Msg) -> Option<Plane> {
    match *msg {
        Msg::Query { plane, .. }
        | Msg::Hash { plane, .. }
        | Msg::Index { plane, .. }
        | Msg::Verify { plane, .. }
        | Msg::Result { plane, .. }
        | Msg::Terminate { plane, .. }
        | Msg::Ack { plane, .. }
        | Msg::VecUp { plane, .. }
        | Msg::NameUp { plane, .. }
        | Msg::VerifyUp { plane, .. } => Some(plane),
        Msg::SendTrigger { .. }
        | Msg::RankRequest { .. }
        | Msg::Proceed { .. }
        | Msg::RankUp { .. }
        | Msg::PhaseDone { .. } => Some(Plane::Span),
        _ => None,
    }
}

/// Whether a tree-wave message travels toward the root.
pub fn is_upward(msg: &Msg) -> bool {
    Up::from_msg(msg).is_some()
}

fn down_tag(msg: &Msg) -> Option<NodeId> {
    match *msg {
        Msg::Query { tag, .. }
        | Msg::Hash { tag, .. }
        | Msg::Index { tag, .. }
        | Msg::Verify { tag, .. }
        | Msg::Result { tag, .. }
        | Msg::Terminate { tag, .. }
        | Msg::SendTrigger { tag, .. }
        | Msg::RankRequest { tag }
        | Msg::Proceed { tag, .. } => Some(tag),
        _ => None,
    }
}

/// Something the owning protocol has to act on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Event {
    /// The wave started at this root has folded back.
    Completed(Up),
    /// A chosen edge incident to this node was announced.
    Result { name: EdgeName, high: bool },
    Terminate,
    SendTrigger { r: u64, phase: u32 },
    /// Contribute `Up::Rank` through [`TreeAgent::contribute`].
    RankRequest,
    /// Contribute `Up::Done` once the node's own condition holds.
    Proceed { min_rank: u32 },
}

#[derive(Clone, Debug)]
struct Wave {
    pending: Vec<usize>,
    own: bool,
    acc: Up,
}

/// Per-node, per-plane tree membership and wave bookkeeping.
#[derive(Clone, Debug)]
pub struct TreeAgent {
    pub plane: Plane,
    /// Identity of the tree (its leader); waves with another tag are stale.
    pub tag: NodeId,
    /// Take the tag from whatever the parent sends instead of checking it.
    pub adopt: bool,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub filter: Filter,
    hash: Option<HashFn>,
    filtered: bool,
    index: u32,
    wave: Option<Wave>,
    deg_wait: Option<u64>,
}

impl TreeAgent {
    pub fn new(plane: Plane, tag: NodeId) -> Self {
        TreeAgent {
            plane,
            tag,
            adopt: false,
            parent: None,
            children: Vec::new(),
            filter: Filter::default(),
            hash: None,
            filtered: false,
            index: 0,
            wave: None,
            deg_wait: None,
        }
    }

    pub fn is_root(&self) -> bool {
        self.parent.is_none()
    }

    /// A convergecast is in progress at this node.
    pub fn busy(&self) -> bool {
        self.wave.is_some()
    }

    /// Starts a wave at the root.
    pub fn begin(&mut self, ctx: &mut Ctx, msg: Msg, local: &Local) -> Vec<Event> {
        debug_assert!(self.is_root());
        self.start(ctx, msg, local)
    }

    /// Handles a downward wave message from `from`.
    pub fn on_down(&mut self, ctx: &mut Ctx, from: usize, msg: Msg, local: &Local) -> Vec<Event> {
        if self.parent != Some(from) {
            return Vec::new();
        }
        let Some(tag) = down_tag(&msg) else { return Vec::new() };
        if self.adopt {
            self.tag = tag;
        } else if tag != self.tag {
            return Vec::new();
        }
        self.start(ctx, msg, local)
    }

    /// Handles an upward wave message from a child.
    pub fn on_up(&mut self, ctx: &mut Ctx, from: usize, msg: &Msg) -> Vec<Event> {
        let Some((tag, up)) = Up::from_msg(msg) else { return Vec::new() };
        if tag != self.tag {
            return Vec::new();
        }
        let Some(w) = self.wave.as_mut() else { return Vec::new() };
        let Some(pos) = w.pending.iter().position(|&c| c == from) else { return Vec::new() };
        let Some(acc) = w.acc.combine(up) else { return Vec::new() };
        w.pending.swap_remove(pos);
        w.acc = acc;
        self.finish_if_ready(ctx)
    }

    /// Adds this node's own value to the running wave.
    pub fn contribute(&mut self, ctx: &mut Ctx, up: Up) -> Vec<Event> {
        let Some(w) = self.wave.as_mut() else { return Vec::new() };
        if w.own {
            return Vec::new();
        }
        let Some(acc) = w.acc.combine(up) else { return Vec::new() };
        w.acc = acc;
        w.own = true;
        self.finish_if_ready(ctx)
    }

    /// Whether this node still owes its own contribution to a wave.
    pub fn owes(&self) -> bool {
        self.wave.as_ref().is_some_and(|w| !w.own)
    }

    /// Delivers the degree class reported by the far endpoint of an edge
    /// under verification.
    pub fn on_deg_reply(&mut self, ctx: &mut Ctx, high: bool) -> Vec<Event> {
        match self.deg_wait.take() {
            Some(base) => self.contribute(ctx, Up::Verify { count: 1, high, base }),
            None => Vec::new(),
        }
    }

    pub fn awaiting_degree(&self) -> bool {
        self.deg_wait.is_some()
    }

    fn start(&mut self, ctx: &mut Ctx, msg: Msg, local: &Local) -> Vec<Event> {
        for &c in &self.children {
            ctx.send(c, msg.clone());
        }
        let mut events = Vec::new();
        if let Some(acc) = Up::identity_for(&msg) {
            self.wave = Some(Wave { pending: self.children.clone(), own: false, acc });
            self.deg_wait = None;
        }
        match msg {
            Msg::Query { reset, cap, .. } => {
                if reset {
                    self.filter.excluded.clear();
                }
                self.filter.cap = cap;
                events.extend(self.contribute(ctx, Up::Ack));
            }
            Msg::Hash { a, b, filtered, reset, .. } => {
                if reset {
                    self.filter = Filter::default();
                }
                let h = HashFn { a, b, p: local.p, l: local.scale.sketch_bits() };
                self.hash = Some(h);
                self.filtered = filtered;
                let v = self.vector(local, &h);
                events.extend(self.contribute(ctx, Up::Vec(v)));
            }
            Msg::Index { i, .. } => {
                self.index = i;
                let x = match self.hash {
                    Some(h) => local
                        .edges
                        .iter()
                        .filter(|e| self.counts(e) && in_range(&h, e.name, i))
                        .fold(0, |acc, e| acc ^ e.name.0),
                    None => 0,
                };
                events.extend(self.contribute(ctx, Up::Name(x)));
            }
            Msg::Verify { name, degree, .. } => {
                let hit = match (self.hash, local.edge_named(name)) {
                    (Some(h), Some(e)) if self.counts(e) && in_range(&h, name, self.index) => Some(*e),
                    _ => None,
                };
                match hit {
                    Some(e) if degree => {
                        self.deg_wait = Some(e.base);
                        ctx.send(e.nbr, Msg::DegQuery);
                    }
                    Some(e) => events.extend(self.contribute(ctx, Up::Verify { count: 1, high: false, base: e.base })),
                    None => events.extend(self.contribute(ctx, Up::Verify { count: 0, high: false, base: 0 })),
                }
            }
            Msg::Result { name, high, .. } => {
                if local.edge_named(name).is_some() {
                    self.filter.excluded.insert(name);
                    events.push(Event::Result { name, high });
                }
                events.extend(self.contribute(ctx, Up::Ack));
            }
            Msg::Terminate { .. } => events.push(Event::Terminate),
            Msg::SendTrigger { r, phase, .. } => events.push(Event::SendTrigger { r, phase }),
            Msg::RankRequest { .. } => events.push(Event::RankRequest),
            Msg::Proceed { min_rank, .. } => events.push(Event::Proceed { min_rank }),
            _ => {}
        }
        events
    }

    fn counts(&self, e: &Incident) -> bool {
        !self.filtered || self.filter.passes(e)
    }

    fn vector(&self, local: &Local, h: &HashFn) -> ParityVector {
        if !self.filtered {
            return node_vector(h, local.names(), |_| true);
        }
        ParityVector::from_hashes(local.edges.iter().filter(|e| self.filter.passes(e)).map(|e| h.eval(e.name.0)), h.l)
    }

    fn finish_if_ready(&mut self, ctx: &mut Ctx) -> Vec<Event> {
        let ready = self.wave.as_ref().is_some_and(|w| w.own && w.pending.is_empty());
        if !ready {
            return Vec::new();
        }
        let acc = self.wave.take().unwrap().acc;
        match self.parent {
            Some(p) => {
                ctx.send(p, acc.to_msg(self.plane, self.tag));
                Vec::new()
            }
            None => vec![Event::Completed(acc)],
        }
    }
}

/// What a leader state machine wants next.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Action<T> {
    Wave(Msg),
    Done(T),
}

/// A leader-side sub-protocol that runs one wave at a time.
pub trait Driver {
    type Out;
    /// Called first with `None`, then with the folded result of each wave.
    fn step(&mut self, rng: &mut ChaCha8Rng, up: Option<Up>) -> Action<Self::Out>;
}

/// Advances `driver` at the root, issuing waves until one is outstanding
/// or the driver finishes. Events other than wave completion (for example
/// a `Result` naming an edge at the root) are pushed to `sink`.
pub fn drive<D: Driver>(
    driver: &mut D,
    agent: &mut TreeAgent,
    ctx: &mut Ctx,
    local: &Local,
    mut up: Option<Up>,
    sink: &mut Vec<Event>,
) -> Option<D::Out> {
    loop {
        match driver.step(ctx.rng(), up.take()) {
            Action::Done(out) => return Some(out),
            Action::Wave(msg) => {
                for ev in agent.begin(ctx, msg, local) {
                    match ev {
                        Event::Completed(u) => up = Some(u),
                        other => sink.push(other),
                    }
                }
                up?;
            }
        }
    }
}

#[cfg(test)]
mod tests;
