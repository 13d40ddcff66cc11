//! A fixed-tree test protocol that runs one tree operation many times from
//! the root. Nodes outside the tree only answer degree queries.

use super::{drive, ApproxCut, Candidate, Event, FindAnyRound, FindMin, Local, RoundOutcome, TreeAgent, Up};
use crate::graph::Graph;
use crate::simnet::{Ctx, Protocol, Step};
use crate::wire::{Msg, Plane};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbeTask {
    /// Independent single FindAny rounds (unannounced, no degree query).
    FindAny { trials: u32 },
    ApproxCut { trials: u32 },
    FindMin { trials: u32 },
    /// Min-fold of each member's `value`.
    MinRank,
    /// One `Terminate` broadcast.
    Broadcast,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ProbeResult {
    pub rounds: Vec<RoundOutcome>,
    pub estimates: Vec<u64>,
    pub minima: Vec<Option<Candidate>>,
    pub min_rank: Option<u32>,
}

#[derive(Clone, Debug)]
enum Running {
    Any(FindAnyRound),
    Cut(ApproxCut),
    Min(FindMin),
    Other,
}

#[derive(Clone, Debug)]
pub struct TreeProbe {
    local: Local,
    agent: TreeAgent,
    member: bool,
    task: Option<ProbeTask>,
    running: Running,
    remaining: u32,
    /// Contribution to a `MinRank` fold.
    pub value: u32,
    pub result: ProbeResult,
    pub terminated: bool,
    done: bool,
}

impl TreeProbe {
    /// One instance per node. `parent[x]` is `Some(Some(p))` for a tree
    /// member with parent `p`, `Some(None)` for the root, `None` for a node
    /// outside the tree.
    pub fn network(g: &Graph, parent: &[Option<Option<usize>>], task: ProbeTask) -> Vec<TreeProbe> {
        let root = parent.iter().position(|p| *p == Some(None)).expect("tree needs a root");
        let tag = g.id(root);
        let locals = Local::all(g);
        let scale = g.scale();
        locals
            .into_iter()
            .enumerate()
            .map(|(x, local)| {
                let mut agent = TreeAgent::new(Plane::Frag, tag);
                let member = parent[x].is_some();
                if let Some(p) = parent[x] {
                    agent.parent = p;
                    agent.children = (0..g.n()).filter(|&y| parent[y] == Some(Some(x))).collect();
                }
                let is_root = x == root;
                let running = match task {
                    ProbeTask::FindAny { .. } => Running::Any(FindAnyRound::new(Plane::Frag, tag, scale, local.p)),
                    ProbeTask::ApproxCut { .. } => Running::Cut(ApproxCut::new(Plane::Frag, tag, scale, local.p)),
                    ProbeTask::FindMin { .. } => Running::Min(FindMin::new(Plane::Frag, tag, scale, local.p)),
                    _ => Running::Other,
                };
                let remaining = match task {
                    ProbeTask::FindAny { trials } | ProbeTask::ApproxCut { trials } | ProbeTask::FindMin { trials } => {
                        trials
                    }
                    _ => 1,
                };
                TreeProbe {
                    local,
                    agent,
                    member,
                    task: is_root.then_some(task),
                    running,
                    remaining,
                    value: 0,
                    result: ProbeResult::default(),
                    terminated: false,
                    done: !is_root,
                }
            })
            .collect()
    }

    fn handle(&mut self, ctx: &mut Ctx, events: Vec<Event>) {
        for ev in events {
            match ev {
                Event::Completed(up) => self.advance(ctx, Some(up)),
                Event::RankRequest => {
                    let more = self.agent.contribute(ctx, Up::Rank(self.value));
                    self.handle(ctx, more);
                }
                Event::Terminate => self.terminated = true,
                _ => {}
            }
        }
    }

    fn advance(&mut self, ctx: &mut Ctx, mut up: Option<Up>) {
        let scale = self.local.scale;
        let tag = self.agent.tag;
        let p = self.local.p;
        while self.remaining > 0 {
            let mut sink = Vec::new();
            let finished = match &mut self.running {
                Running::Any(d) => drive(d, &mut self.agent, ctx, &self.local, up.take(), &mut sink).map(|o| {
                    self.result.rounds.push(o);
                    *d = FindAnyRound::new(Plane::Frag, tag, scale, p);
                }),
                Running::Cut(d) => drive(d, &mut self.agent, ctx, &self.local, up.take(), &mut sink).map(|o| {
                    self.result.estimates.push(o);
                    *d = ApproxCut::new(Plane::Frag, tag, scale, p);
                }),
                Running::Min(d) => drive(d, &mut self.agent, ctx, &self.local, up.take(), &mut sink).map(|o| {
                    self.result.minima.push(o);
                    *d = FindMin::new(Plane::Frag, tag, scale, p);
                }),
                Running::Other => {
                    if let Some(Up::Rank(r)) = up.take() {
                        self.result.min_rank = Some(r);
                    }
                    Some(())
                }
            };
            self.handle(ctx, sink);
            if finished.is_none() {
                return;
            }
            self.remaining -= 1;
        }
        self.done = true;
    }
}

impl Protocol for TreeProbe {
    fn on_wake(&mut self, ctx: &mut Ctx) {
        let Some(task) = self.task else { return };
        let tag = self.agent.tag;
        match task {
            ProbeTask::MinRank => {
                let evs = self.agent.begin(ctx, Msg::RankRequest { tag }, &self.local);
                self.handle(ctx, evs);
            }
            ProbeTask::Broadcast => {
                let evs = self.agent.begin(ctx, Msg::Terminate { plane: Plane::Frag, tag }, &self.local);
                self.handle(ctx, evs);
                self.remaining = 0;
                self.done = true;
            }
            _ => self.advance(ctx, None),
        }
    }

    fn on_message(&mut self, ctx: &mut Ctx, from: usize, msg: Msg) -> Step {
        match msg {
            Msg::DegQuery => ctx.send(from, Msg::DegReply { high: self.local.high }),
            Msg::DegReply { high } => {
                let evs = self.agent.on_deg_reply(ctx, high);
                self.handle(ctx, evs);
            }
            _ if self.member && super::is_upward(&msg) => {
                let evs = self.agent.on_up(ctx, from, &msg);
                self.handle(ctx, evs);
            }
            _ if self.member => {
                let evs = self.agent.on_down(ctx, from, msg, &self.local);
                self.handle(ctx, evs);
            }
            _ => {}
        }
        Step::Done
    }

    fn is_terminal(&self) -> bool {
        self.done
    }
}
