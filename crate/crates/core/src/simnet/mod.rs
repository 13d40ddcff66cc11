//! Deterministic discrete-event simulation of an asynchronous network.
//!
//! Each node is a [`Protocol`] value. All nodes wake at time zero; after
//! that a node runs only when a message is delivered to it. A handler may
//! refuse a message for now by returning [`Step::Hold`]; held messages are
//! offered again after the node next makes progress on some other message.
//! That guarded continuation is the only control primitive beyond plain
//! handlers.

mod metrics;
mod policy;

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::wire::{self, congest_budget, Msg, Widths};

pub use metrics::{Metrics, MetricsSummary};
pub use policy::DelayPolicy;
use policy::Scheduler;

/// Outcome of handling one message.
#[derive(Debug)]
pub enum Step {
    Done,
    /// Not ready for this message; keep it and offer it again later.
    Hold(Msg),
}

/// A protocol-level milestone reported to the observer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Checkpoint {
    pub node: usize,
    pub kind: &'static str,
    pub phase: u32,
}

pub trait Protocol {
    fn on_wake(&mut self, ctx: &mut Ctx);
    fn on_message(&mut self, ctx: &mut Ctx, from: usize, msg: Msg) -> Step;
    fn is_terminal(&self) -> bool;
}

/// Handler-side view of the network: sends, local randomness, checkpoints.
pub struct Ctx<'a> {
    me: usize,
    out: &'a mut Vec<(usize, Msg)>,
    rng: &'a mut ChaCha8Rng,
    marks: &'a mut Vec<Checkpoint>,
}

impl<'a> Ctx<'a> {
    pub fn new(
        me: usize,
        out: &'a mut Vec<(usize, Msg)>,
        rng: &'a mut ChaCha8Rng,
        marks: &'a mut Vec<Checkpoint>,
    ) -> Self {
        Ctx { me, out, rng, marks }
    }

    pub fn me(&self) -> usize {
        self.me
    }

    pub fn send(&mut self, to: usize, msg: Msg) {
        self.out.push((to, msg));
    }

    /// Number of sends queued so far in this handler call.
    pub fn outbox_len(&self) -> usize {
        self.out.len()
    }

    /// Removes and returns the sends queued after position `start`, so a
    /// protocol layer can gate or reorder them before they leave the node.
    pub fn take_outbox_from(&mut self, start: usize) -> Vec<(usize, Msg)> {
        self.out.split_off(start.min(self.out.len()))
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        self.rng
    }

    pub fn checkpoint(&mut self, kind: &'static str, phase: u32) {
        self.marks.push(Checkpoint { node: self.me, kind, phase });
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaultAction {
    Drop,
    Duplicate,
    /// Adds this much virtual time to the delivery.
    Delay(u64),
}

/// Test-only interference with the `nth` (1-based) send of a kind;
/// `nth = 0` matches every send of the kind.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fault {
    pub kind: &'static str,
    pub nth: u64,
    pub action: FaultAction,
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub policy: DelayPolicy,
    pub seed: u64,
    /// Delivery cap; `None` means `10·n³`.
    pub event_cap: Option<u64>,
    pub trace: bool,
    pub faults: Vec<Fault>,
}

impl SimConfig {
    pub fn new(policy: DelayPolicy, seed: u64) -> Self {
        SimConfig { policy, seed, event_cap: None, trace: false, faults: Vec::new() }
    }
}

pub struct SimOutcome<P> {
    pub nodes: Vec<P>,
    pub metrics: Metrics,
    pub trace: Vec<String>,
    /// Number of deliveries performed.
    pub deliveries: u64,
    pub error: Option<Error>,
}

impl<P> SimOutcome<P> {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

struct Event {
    time: u64,
    seq: u64,
    src: usize,
    dst: usize,
    edge: usize,
    msg: Msg,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

/// Per-node randomness independent of the delay stream.
pub fn node_rng(seed: u64, node: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(node as u64 + 1);
    r
}

struct Engine<'g> {
    graph: &'g Graph,
    ports: Vec<Vec<(usize, usize)>>,
    widths: Widths,
    budget: usize,
    sched: Scheduler,
    delay_rng: ChaCha8Rng,
    queue: BinaryHeap<Event>,
    seq: u64,
    now: u64,
    metrics: Metrics,
    trace: Option<Vec<String>>,
    faults: Vec<Fault>,
    sent_per_kind: [u64; wire::KINDS.len()],
}

impl Engine<'_> {
    fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        let p = &self.ports[a];
        p.binary_search_by_key(&b, |&(nbr, _)| nbr).ok().map(|i| p[i].1)
    }

    fn flush(&mut self, src: usize, out: &mut Vec<(usize, Msg)>) -> Result<()> {
        for (dst, msg) in out.drain(..) {
            let edge = self.edge_between(src, dst).ok_or(Error::ModelViolation {
                src: self.graph.id(src),
                dst: if dst < self.graph.n() { self.graph.id(dst) } else { crate::graph::NodeId(0) },
                kind: msg.kind(),
            })?;
            let bits = wire::encoded_bits(&msg, &self.widths)?;
            if bits > self.budget {
                return Err(Error::CongestViolation { kind: msg.kind(), bits, budget: self.budget });
            }
            self.metrics.note_bits(bits);
            let tag = msg.tag() as usize;
            self.sent_per_kind[tag] += 1;
            let nth = self.sent_per_kind[tag];
            let fault =
                self.faults.iter().find(|f| f.kind == msg.kind() && (f.nth == nth || f.nth == 0)).map(|f| f.action);
            let (copies, extra) = match fault {
                Some(FaultAction::Drop) => (0, 0),
                Some(FaultAction::Duplicate) => (2, 0),
                Some(FaultAction::Delay(t)) => (1, t),
                None => (1, 0),
            };
            for _ in 0..copies {
                let time = self.sched.delivery_time(&mut self.delay_rng, self.now, src, dst) + extra;
                self.seq += 1;
                self.queue.push(Event { time, seq: self.seq, src, dst, edge, msg: msg.clone() });
            }
        }
        Ok(())
    }
}

/// Runs `nodes` (one per graph node, in index order) to quiescence.
///
/// `observer` sees every checkpoint together with the global node state;
/// protocols themselves never see it.
pub fn run<P, O>(graph: &Graph, mut nodes: Vec<P>, cfg: &SimConfig, mut observer: O) -> SimOutcome<P>
where
    P: Protocol,
    O: FnMut(&Graph, &[P], &Checkpoint),
{
    assert_eq!(nodes.len(), graph.n(), "one protocol instance per node");
    let n = graph.n();
    let ports = (0..n)
        .map(|x| {
            let mut p: Vec<(usize, usize)> = graph.neighbors(x).iter().map(|a| (a.nbr, a.edge)).collect();
            p.sort_unstable();
            p
        })
        .collect();
    let scale = graph.scale();
    let mut delay_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    delay_rng.set_stream(0);
    let mut eng = Engine {
        graph,
        ports,
        widths: Widths::of(scale),
        budget: congest_budget(n.max(2), scale.c),
        sched: Scheduler::new(cfg.policy.clone()),
        delay_rng,
        queue: BinaryHeap::new(),
        seq: 0,
        now: 0,
        metrics: Metrics::new(graph.m()),
        trace: cfg.trace.then(Vec::new),
        faults: cfg.faults.clone(),
        sent_per_kind: [0; wire::KINDS.len()],
    };
    let cap = cfg.event_cap.unwrap_or_else(|| 10u64.saturating_mul((n as u64).max(2).pow(3)));
    let mut rngs: Vec<ChaCha8Rng> = (0..n).map(|x| node_rng(cfg.seed, x)).collect();
    let mut held: Vec<VecDeque<(usize, Msg)>> = vec![VecDeque::new(); n];
    let mut out = Vec::new();
    let mut marks = Vec::new();
    let mut deliveries = 0u64;

    let finish = |nodes: Vec<P>, eng: Engine, deliveries, error| SimOutcome {
        nodes,
        metrics: eng.metrics,
        trace: eng.trace.unwrap_or_default(),
        deliveries,
        error,
    };

    for x in 0..n {
        let mut ctx = Ctx::new(x, &mut out, &mut rngs[x], &mut marks);
        nodes[x].on_wake(&mut ctx);
        if let Err(e) = eng.flush(x, &mut out) {
            return finish(nodes, eng, deliveries, Some(e));
        }
        for m in marks.drain(..) {
            observer(graph, &nodes, &m);
        }
    }

    while let Some(ev) = eng.queue.pop() {
        if deliveries >= cap {
            return finish(nodes, eng, deliveries, Some(Error::Livelock { cap }));
        }
        deliveries += 1;
        eng.now = ev.time;
        eng.metrics.record(ev.edge, &ev.msg);
        if let Some(t) = eng.trace.as_mut() {
            t.push(format!("{} {} {} {}", ev.seq, graph.id(ev.src), graph.id(ev.dst), ev.msg.kind()));
        }
        let x = ev.dst;
        let mut progressed = {
            let mut ctx = Ctx::new(x, &mut out, &mut rngs[x], &mut marks);
            match nodes[x].on_message(&mut ctx, ev.src, ev.msg) {
                Step::Done => true,
                Step::Hold(m) => {
                    held[x].push_back((ev.src, m));
                    false
                }
            }
        };
        // retry held messages until none of them makes progress
        while progressed && !held[x].is_empty() {
            progressed = false;
            for _ in 0..held[x].len() {
                let (from, m) = held[x].pop_front().unwrap();
                let mut ctx = Ctx::new(x, &mut out, &mut rngs[x], &mut marks);
                match nodes[x].on_message(&mut ctx, from, m) {
                    Step::Done => progressed = true,
                    Step::Hold(m) => held[x].push_back((from, m)),
                }
            }
        }
        if let Err(e) = eng.flush(x, &mut out) {
            return finish(nodes, eng, deliveries, Some(e));
        }
        for m in marks.drain(..) {
            observer(graph, &nodes, &m);
        }
    }

    let waiting = nodes.iter().filter(|p| !p.is_terminal()).count();
    let held_total: usize = held.iter().map(|h| h.len()).sum();
    let error = (waiting > 0 || held_total > 0).then_some(Error::Stalled { waiting, held: held_total });
    finish(nodes, eng, deliveries, error)
}

/// Runs without an observer.
pub fn run_plain<P: Protocol>(graph: &Graph, nodes: Vec<P>, cfg: &SimConfig) -> SimOutcome<P> {
    run(graph, nodes, cfg, |_, _, _| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate, Family};

    struct Silent;
    impl Protocol for Silent {
        fn on_wake(&mut self, _: &mut Ctx) {}
        fn on_message(&mut self, _: &mut Ctx, _: usize, _: Msg) -> Step {
            Step::Done
        }
        fn is_terminal(&self) -> bool {
            true
        }
    }

    /// Sends one Star to every neighbor and records arrivals.
    struct Flood {
        nbrs: Vec<usize>,
        got: Vec<usize>,
    }
    impl Protocol for Flood {
        fn on_wake(&mut self, ctx: &mut Ctx) {
            for &v in &self.nbrs {
                ctx.send(v, Msg::Star);
            }
        }
        fn on_message(&mut self, _: &mut Ctx, from: usize, _: Msg) -> Step {
            self.got.push(from);
            Step::Done
        }
        fn is_terminal(&self) -> bool {
            self.got.len() >= self.nbrs.len()
        }
    }

    fn flood_nodes(g: &Graph) -> Vec<Flood> {
        (0..g.n()).map(|x| Flood { nbrs: g.neighbors(x).iter().map(|a| a.nbr).collect(), got: vec![] }).collect()
    }

    #[test]
    fn silent_protocol_sends_nothing() {
        let g = generate(&Family::Complete, 6, 2, 1).unwrap();
        let out = run_plain(&g, (0..6).map(|_| Silent).collect(), &SimConfig::new(DelayPolicy::default(), 1));
        assert!(out.ok());
        assert_eq!(out.metrics.total, 0);
    }

    #[test]
    fn handshake_count_is_twice_m() {
        for policy in ["uniform", "fifo", "reorder", "region-stall"] {
            let g = generate(&Family::Gnp { p: 0.3 }, 30, 2, 5).unwrap();
            let cfg = SimConfig::new(DelayPolicy::parse(policy, 30).unwrap(), 3);
            let out = run_plain(&g, flood_nodes(&g), &cfg);
            assert!(out.ok(), "{:?}", out.error);
            assert_eq!(out.metrics.total, 2 * g.m() as u64);
            assert_eq!(out.metrics.total, out.deliveries);
            assert_eq!(out.metrics.sum_per_edge(), out.metrics.total);
            assert!((0..g.m()).all(|e| out.metrics.edge_count(e) == 2));
        }
    }

    #[test]
    fn same_seed_same_trace() {
        let g = generate(&Family::Gnp { p: 0.4 }, 20, 2, 8).unwrap();
        let mut cfg = SimConfig::new(DelayPolicy::ReorderAdversary, 42);
        cfg.trace = true;
        let a = run_plain(&g, flood_nodes(&g), &cfg);
        let b = run_plain(&g, flood_nodes(&g), &cfg);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.metrics, b.metrics);
        cfg.seed = 43;
        let c = run_plain(&g, flood_nodes(&g), &cfg);
        assert_ne!(a.trace, c.trace);
    }

    /// Sends `k` numbered messages over one edge; records arrival order.
    struct Burst {
        to: Option<usize>,
        got: Vec<u32>,
    }
    impl Protocol for Burst {
        fn on_wake(&mut self, ctx: &mut Ctx) {
            if let Some(t) = self.to {
                for k in 0..4 {
                    ctx.send(t, Msg::Expand { phase: k });
                }
            }
        }
        fn on_message(&mut self, _: &mut Ctx, _: usize, m: Msg) -> Step {
            if let Msg::Expand { phase } = m {
                self.got.push(phase);
            }
            Step::Done
        }
        fn is_terminal(&self) -> bool {
            true
        }
    }

    // n = 2 gives 2-bit phase fields, so bursts stay below 4.
    fn burst_order(policy: DelayPolicy, seed: u64) -> Vec<u32> {
        let g = generate(&Family::Path, 2, 2, 0).unwrap();
        let nodes = vec![Burst { to: Some(1), got: vec![] }, Burst { to: None, got: vec![] }];
        run_plain(&g, nodes, &SimConfig::new(policy, seed)).nodes[1].got.clone()
    }

    #[test]
    fn reorder_adversary_reorders_some_seed() {
        let sorted: Vec<u32> = (0..4).collect();
        assert!((0..50).any(|s| burst_order(DelayPolicy::ReorderAdversary, s) != sorted));
    }

    #[test]
    fn fifo_keeps_edge_order() {
        let sorted: Vec<u32> = (0..4).collect();
        for s in 0..50 {
            assert_eq!(burst_order(DelayPolicy::FifoPerEdge { max: 100 }, s), sorted);
        }
    }

    struct Rogue;
    impl Protocol for Rogue {
        fn on_wake(&mut self, ctx: &mut Ctx) {
            if ctx.me() == 0 {
                ctx.send(2, Msg::Star);
            }
        }
        fn on_message(&mut self, _: &mut Ctx, _: usize, _: Msg) -> Step {
            Step::Done
        }
        fn is_terminal(&self) -> bool {
            true
        }
    }

    #[test]
    fn non_neighbor_send_is_model_violation() {
        let g = generate(&Family::Path, 3, 2, 0).unwrap();
        let out = run_plain(&g, vec![Rogue, Rogue, Rogue], &SimConfig::new(DelayPolicy::default(), 0));
        assert!(matches!(out.error, Some(Error::ModelViolation { kind: "Star", .. })));
    }

    struct Oversize;
    impl Protocol for Oversize {
        fn on_wake(&mut self, ctx: &mut Ctx) {
            if ctx.me() == 0 {
                ctx.send(1, Msg::ExpandId { tid: crate::graph::NodeId(1 << 40) });
            }
        }
        fn on_message(&mut self, _: &mut Ctx, _: usize, _: Msg) -> Step {
            Step::Done
        }
        fn is_terminal(&self) -> bool {
            true
        }
    }

    #[test]
    fn field_overflow_rejected() {
        let g = generate(&Family::Path, 2, 2, 0).unwrap();
        let out = run_plain(&g, vec![Oversize, Oversize], &SimConfig::new(DelayPolicy::default(), 0));
        assert!(matches!(out.error, Some(Error::Codec(_))));
    }

    /// Ping-pong forever.
    struct Echo;
    impl Protocol for Echo {
        fn on_wake(&mut self, ctx: &mut Ctx) {
            if ctx.me() == 0 {
                ctx.send(1, Msg::Star);
            }
        }
        fn on_message(&mut self, ctx: &mut Ctx, from: usize, m: Msg) -> Step {
            ctx.send(from, m);
            Step::Done
        }
        fn is_terminal(&self) -> bool {
            false
        }
    }

    #[test]
    fn livelock_detected() {
        let g = generate(&Family::Path, 2, 2, 0).unwrap();
        let mut cfg = SimConfig::new(DelayPolicy::default(), 0);
        cfg.event_cap = Some(1000);
        let out = run_plain(&g, vec![Echo, Echo], &cfg);
        assert_eq!(out.error, Some(Error::Livelock { cap: 1000 }));
    }

    /// Node 1 holds Star until it has seen LowDegree.
    struct Gate {
        seen_low: bool,
        order: Vec<&'static str>,
    }
    impl Protocol for Gate {
        fn on_wake(&mut self, ctx: &mut Ctx) {
            if ctx.me() == 0 {
                ctx.send(1, Msg::Star);
                ctx.send(1, Msg::LowDegree);
            }
        }
        fn on_message(&mut self, _: &mut Ctx, _: usize, m: Msg) -> Step {
            match m {
                Msg::Star if !self.seen_low => Step::Hold(m),
                Msg::LowDegree => {
                    self.seen_low = true;
                    self.order.push("low");
                    Step::Done
                }
                other => {
                    self.order.push(other.kind());
                    Step::Done
                }
            }
        }
        fn is_terminal(&self) -> bool {
            true
        }
    }

    #[test]
    fn held_message_resumes_after_progress() {
        let g = generate(&Family::Path, 2, 2, 0).unwrap();
        for seed in 0..20 {
            let nodes = vec![Gate { seen_low: false, order: vec![] }, Gate { seen_low: false, order: vec![] }];
            let out = run_plain(&g, nodes, &SimConfig::new(DelayPolicy::default(), seed));
            assert!(out.ok());
            assert_eq!(out.nodes[1].order, vec!["low", "Star"]);
        }
    }

    #[test]
    fn quiescence_with_waiting_node_is_stall() {
        let g = generate(&Family::Path, 3, 2, 0).unwrap();
        let mut nodes = flood_nodes(&g);
        nodes[1].nbrs.clear(); // node 1 never sends, so its neighbours wait
        let out = run_plain(&g, nodes, &SimConfig::new(DelayPolicy::default(), 0));
        assert!(matches!(out.error, Some(Error::Stalled { waiting: 2, held: 0 })));
    }

    #[test]
    fn faults_drop_and_duplicate() {
        let g = generate(&Family::Path, 2, 2, 0).unwrap();
        let mut cfg = SimConfig::new(DelayPolicy::default(), 0);
        cfg.faults = vec![Fault { kind: "Expand", nth: 3, action: FaultAction::Drop }];
        let nodes = vec![Burst { to: Some(1), got: vec![] }, Burst { to: None, got: vec![] }];
        let out = run_plain(&g, nodes, &cfg);
        assert_eq!(out.nodes[1].got.len(), 3);
        assert!(!out.nodes[1].got.contains(&2));
        cfg.faults[0].action = FaultAction::Duplicate;
        let nodes = vec![Burst { to: Some(1), got: vec![] }, Burst { to: None, got: vec![] }];
        let out = run_plain(&g, nodes, &cfg);
        assert_eq!(out.nodes[1].got.iter().filter(|&&p| p == 2).count(), 2);
    }
}
