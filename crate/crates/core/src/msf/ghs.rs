//! Textbook GHS for the low-degree non-star nodes of a component.
//!
//! Levels, `Test`/`Accept`/`Reject` edge classification, `Report`
//! convergecast to the core and `ChangeRoot` follow the 1983 protocol.
//! The protocol assumes links deliver in order, which the simulated
//! network does not promise, so each edge runs stop-and-wait: a GHS message
//! is acknowledged with `GhsAck` on arrival and the sender keeps the next
//! one queued until then. Messages the protocol must postpone wait in a
//! local queue and are retried after every state change. The fragment
//! name is the core edge.

use std::collections::{HashMap, VecDeque};

use crate::graph::EdgeName;
use crate::simnet::Ctx;
use crate::treeops::Local;
use crate::wire::Msg;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeState {
    Basic,
    Branch,
    Rejected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Find,
    Found,
}

#[derive(Clone, Copy, Debug)]
struct Link {
    nbr: usize,
    key: u128,
    name: EdgeName,
}

/// `None` is an infinite weight.
fn lighter(a: Option<u128>, b: Option<u128>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => x < y,
        (Some(_), None) => true,
        _ => false,
    }
}

#[derive(Clone, Debug)]
pub struct Ghs {
    links: Vec<Link>,
    by_nbr: HashMap<usize, usize>,
    pub state: Vec<EdgeState>,
    pub level: u32,
    name: Option<EdgeName>,
    mode: Mode,
    in_branch: Option<usize>,
    best_edge: Option<usize>,
    best: Option<u128>,
    test_edge: Option<usize>,
    find_count: u32,
    pub halted: bool,
    outq: Vec<VecDeque<Msg>>,
    unacked: Vec<bool>,
    deferred: VecDeque<(usize, Msg)>,
}

impl Ghs {
    pub fn new(local: &Local) -> Self {
        let mut links: Vec<Link> = local.edges.iter().map(|e| Link { nbr: e.nbr, key: e.key, name: e.name }).collect();
        links.sort_by_key(|l| l.key);
        let by_nbr = links.iter().enumerate().map(|(i, l)| (l.nbr, i)).collect();
        let n = links.len();
        Ghs {
            state: vec![EdgeState::Basic; links.len()],
            links,
            by_nbr,
            level: 0,
            name: None,
            mode: Mode::Found,
            in_branch: None,
            best_edge: None,
            best: None,
            test_edge: None,
            find_count: 0,
            halted: false,
            outq: vec![VecDeque::new(); n],
            unacked: vec![false; n],
            deferred: VecDeque::new(),
        }
    }

    /// Branch edges, by neighbour.
    pub fn branches(&self) -> impl Iterator<Item = usize> + '_ {
        self.links.iter().zip(&self.state).filter(|(_, s)| **s == EdgeState::Branch).map(|(l, _)| l.nbr)
    }

    pub fn wake(&mut self, ctx: &mut Ctx) {
        if self.links.is_empty() {
            self.halted = true;
            return;
        }
        self.state[0] = EdgeState::Branch;
        self.level = 0;
        self.mode = Mode::Found;
        self.find_count = 0;
        self.send(ctx, 0, Msg::GhsConnect { level: 0 });
    }

    fn send(&mut self, ctx: &mut Ctx, i: usize, msg: Msg) {
        if self.unacked[i] {
            self.outq[i].push_back(msg);
        } else {
            self.unacked[i] = true;
            ctx.send(self.links[i].nbr, msg);
        }
    }

    pub fn on_message(&mut self, ctx: &mut Ctx, from: usize, msg: Msg) {
        let Some(&j) = self.by_nbr.get(&from) else { return };
        if msg == Msg::GhsAck {
            self.unacked[j] = false;
            if let Some(next) = self.outq[j].pop_front() {
                self.send(ctx, j, next);
            }
            return;
        }
        ctx.send(from, Msg::GhsAck);
        self.deferred.push_back((j, msg));
        let mut progress = true;
        while progress {
            progress = false;
            for _ in 0..self.deferred.len() {
                let (j, msg) = self.deferred.pop_front().expect("counted");
                match self.process(ctx, j, msg) {
                    Some(m) => self.deferred.push_back((j, m)),
                    None => progress = true,
                }
            }
        }
    }

    /// Handles one message, or gives it back if it has to wait.
    fn process(&mut self, ctx: &mut Ctx, j: usize, msg: Msg) -> Option<Msg> {
        match msg {
            Msg::GhsConnect { level } => {
                if level < self.level {
                    self.state[j] = EdgeState::Branch;
                    let find = self.mode == Mode::Find;
                    let name = self.name.expect("a fragment above level 0 has a name");
                    self.send(ctx, j, Msg::GhsInitiate { level: self.level, name, find });
                    if find {
                        self.find_count += 1;
                    }
                } else if self.state[j] == EdgeState::Basic {
                    return Some(msg);
                } else {
                    let name = self.links[j].name;
                    self.send(ctx, j, Msg::GhsInitiate { level: self.level + 1, name, find: true });
                }
            }
            Msg::GhsInitiate { level, name, find } => {
                self.level = level;
                self.name = Some(name);
                self.mode = if find { Mode::Find } else { Mode::Found };
                self.in_branch = Some(j);
                self.best_edge = None;
                self.best = None;
                for i in 0..self.links.len() {
                    if i != j && self.state[i] == EdgeState::Branch {
                        self.send(ctx, i, Msg::GhsInitiate { level, name, find });
                        if find {
                            self.find_count += 1;
                        }
                    }
                }
                if find {
                    self.test(ctx);
                }
            }
            Msg::GhsTest { level, name } => {
                if level > self.level {
                    return Some(msg);
                }
                if Some(name) != self.name {
                    self.send(ctx, j, Msg::GhsAccept);
                } else {
                    if self.state[j] == EdgeState::Basic {
                        self.state[j] = EdgeState::Rejected;
                    }
                    if self.test_edge != Some(j) {
                        self.send(ctx, j, Msg::GhsReject);
                    } else {
                        self.test(ctx);
                    }
                }
            }
            Msg::GhsAccept => {
                self.test_edge = None;
                let w = Some(self.links[j].key);
                if lighter(w, self.best) {
                    self.best_edge = Some(j);
                    self.best = w;
                }
                self.report(ctx);
            }
            Msg::GhsReject => {
                if self.state[j] == EdgeState::Basic {
                    self.state[j] = EdgeState::Rejected;
                }
                self.test(ctx);
            }
            Msg::GhsReport { best } => {
                if Some(j) != self.in_branch {
                    self.find_count = self.find_count.saturating_sub(1);
                    if lighter(best, self.best) {
                        self.best = best;
                        self.best_edge = Some(j);
                    }
                    self.report(ctx);
                } else if self.mode == Mode::Find {
                    return Some(msg);
                } else if lighter(self.best, best) {
                    self.change_root(ctx);
                } else if best.is_none() && self.best.is_none() {
                    self.halt(ctx, Some(j));
                }
            }
            Msg::GhsChangeRoot => self.change_root(ctx),
            Msg::GhsHalt => self.halt(ctx, Some(j)),
            _ => {}
        }
        None
    }

    fn test(&mut self, ctx: &mut Ctx) {
        match self.state.iter().position(|s| *s == EdgeState::Basic) {
            Some(i) => {
                self.test_edge = Some(i);
                let name = self.name.expect("testing fragments are named");
                self.send(ctx, i, Msg::GhsTest { level: self.level, name });
            }
            None => {
                self.test_edge = None;
                self.report(ctx);
            }
        }
    }

    fn report(&mut self, ctx: &mut Ctx) {
        if self.find_count == 0 && self.test_edge.is_none() {
            self.mode = Mode::Found;
            if let Some(i) = self.in_branch {
                self.send(ctx, i, Msg::GhsReport { best: self.best });
            }
        }
    }

    fn change_root(&mut self, ctx: &mut Ctx) {
        let Some(b) = self.best_edge else { return };
        if self.state[b] == EdgeState::Branch {
            self.send(ctx, b, Msg::GhsChangeRoot);
        } else {
            self.send(ctx, b, Msg::GhsConnect { level: self.level });
            self.state[b] = EdgeState::Branch;
        }
    }

    fn halt(&mut self, ctx: &mut Ctx, except: Option<usize>) {
        if self.halted {
            return;
        }
        self.halted = true;
        for i in 0..self.links.len() {
            if Some(i) != except && self.state[i] == EdgeState::Branch {
                self.send(ctx, i, Msg::GhsHalt);
            }
        }
    }
}
