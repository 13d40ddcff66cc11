use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Action, Driver, Up};
use crate::graph::{EdgeName, NodeId, Scale, Weight};
use crate::sketch::{approx_cut_estimate, ParityVector};
use crate::wire::{Msg, Plane};

/// An edge confirmed to leave the tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Candidate {
    pub name: EdgeName,
    /// Degree class of the far endpoint; only meaningful when the round
    /// asked for it.
    pub high: bool,
    pub key: u128,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RoundOutcome {
    Found(Candidate),
    /// The aggregated vector was zero.
    Zero,
    /// Non-zero vector but the recovered name did not verify.
    Fail,
}

#[derive(Clone, Debug)]
enum RoundStage {
    Start,
    Hashed,
    Indexed,
    Verifying(EdgeName),
    Announcing(Candidate),
}

/// One FindAny sampling round: hash, index, verify, and optionally
/// announce the result to the tree.
#[derive(Clone, Debug)]
pub struct FindAnyRound {
    pub plane: Plane,
    pub tag: NodeId,
    pub scale: Scale,
    pub p: u64,
    /// Apply the nodes' exclusions and weight cap.
    pub filtered: bool,
    /// Clear exclusions and cap before hashing.
    pub reset: bool,
    /// Ask the far endpoint for its degree class during verification.
    pub degree: bool,
    /// Broadcast a `Result` for a found edge.
    pub announce: bool,
    stage: RoundStage,
}

impl FindAnyRound {
    pub fn new(plane: Plane, tag: NodeId, scale: Scale, p: u64) -> Self {
        FindAnyRound {
            plane,
            tag,
            scale,
            p,
            filtered: true,
            reset: false,
            degree: false,
            announce: false,
            stage: RoundStage::Start,
        }
    }

    pub fn with(mut self, reset: bool, degree: bool, announce: bool) -> Self {
        self.reset = reset;
        self.degree = degree;
        self.announce = announce;
        self
    }

    /// Rearms the round for another sampling attempt.
    pub fn restart(&mut self, reset: bool) {
        self.reset = reset;
        self.stage = RoundStage::Start;
    }

    /// Whether `x` could be an edge name at all: two distinct endpoints in
    /// the identity range, smaller first.
    fn plausible(&self, x: u64) -> bool {
        let b = self.scale.id_bits();
        if x == 0 || x >> (2 * b) != 0 {
            return false;
        }
        let (lo, hi) = EdgeName(x).endpoints(b);
        lo.0 >= 1 && lo < hi && hi.0 <= self.scale.max_id()
    }
}

impl Driver for FindAnyRound {
    type Out = RoundOutcome;

    fn step(&mut self, rng: &mut ChaCha8Rng, up: Option<Up>) -> Action<RoundOutcome> {
        let (plane, tag) = (self.plane, self.tag);
        match (self.stage.clone(), up) {
            (RoundStage::Start, _) => {
                self.stage = RoundStage::Hashed;
                let a = rng.gen_range(1..self.p);
                let b = rng.gen_range(0..self.p);
                Action::Wave(Msg::Hash { plane, tag, a, b, filtered: self.filtered, reset: self.reset })
            }
            (RoundStage::Hashed, Some(Up::Vec(v))) => match v.min_index() {
                None => Action::Done(RoundOutcome::Zero),
                Some(i) => {
                    self.stage = RoundStage::Indexed;
                    Action::Wave(Msg::Index { plane, tag, i })
                }
            },
            (RoundStage::Indexed, Some(Up::Name(x))) => {
                if !self.plausible(x) {
                    return Action::Done(RoundOutcome::Fail);
                }
                let name = EdgeName(x);
                self.stage = RoundStage::Verifying(name);
                Action::Wave(Msg::Verify { plane, tag, name, degree: self.degree })
            }
            (RoundStage::Verifying(name), Some(Up::Verify { count, high, base })) => {
                if count != 1 {
                    return Action::Done(RoundOutcome::Fail);
                }
                let b = self.scale.id_bits();
                let (lo, hi) = name.endpoints(b);
                let cand = Candidate { name, high, key: Weight::new(base, lo, hi).key(b) };
                if self.announce {
                    self.stage = RoundStage::Announcing(cand);
                    Action::Wave(Msg::Result { plane, tag, name, high })
                } else {
                    Action::Done(RoundOutcome::Found(cand))
                }
            }
            (RoundStage::Announcing(cand), Some(Up::Ack)) => Action::Done(RoundOutcome::Found(cand)),
            (stage, up) => panic!("FindAny round out of sync: {stage:?} got {up:?}"),
        }
    }
}

/// Repeats FindAny rounds until one succeeds or `limit` rounds fail.
#[derive(Clone, Debug)]
pub struct FindAnyRetry {
    round: FindAnyRound,
    limit: u32,
    used: u32,
}

impl FindAnyRetry {
    /// Default limit is `16·⌈log₂ n⌉` rounds.
    pub fn new(round: FindAnyRound) -> Self {
        let limit = 16 * round.scale.log_n();
        FindAnyRetry { round, limit, used: 0 }
    }

    pub fn rounds_used(&self) -> u32 {
        self.used
    }
}

impl Driver for FindAnyRetry {
    type Out = Option<Candidate>;

    fn step(&mut self, rng: &mut ChaCha8Rng, up: Option<Up>) -> Action<Option<Candidate>> {
        let mut up = up;
        loop {
            match self.round.step(rng, up.take()) {
                Action::Wave(m) => return Action::Wave(m),
                Action::Done(RoundOutcome::Found(c)) => {
                    self.used += 1;
                    return Action::Done(Some(c));
                }
                Action::Done(_) => {
                    self.used += 1;
                    if self.used >= self.limit {
                        return Action::Done(None);
                    }
                    self.round.restart(false);
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
enum MinStage {
    Start,
    /// A `Query` setting the cap is outstanding.
    Capping,
    Sampling,
    Announcing,
}

/// Minimum-weight outgoing edge by repeated capped sampling.
///
/// Every success lowers the cap below the edge just found. After `patience`
/// consecutive empty rounds the best edge so far is confirmed by sampling
/// once more with the cap at its own weight, then announced.
#[derive(Clone, Debug)]
pub struct FindMin {
    round: FindAnyRound,
    patience: u32,
    best: Option<Candidate>,
    misses: u32,
    confirming: bool,
    stage: MinStage,
    pub rounds: u32,
}

impl FindMin {
    pub fn new(plane: Plane, tag: NodeId, scale: Scale, p: u64) -> Self {
        Self::with_patience(plane, tag, scale, p, 4 * scale.log_n())
    }

    pub fn with_patience(plane: Plane, tag: NodeId, scale: Scale, p: u64, patience: u32) -> Self {
        FindMin {
            round: FindAnyRound::new(plane, tag, scale, p),
            patience: patience.max(1),
            best: None,
            misses: 0,
            confirming: false,
            stage: MinStage::Start,
            rounds: 0,
        }
    }

    fn query(&self, reset: bool, cap: Option<u128>) -> Msg {
        Msg::Query { plane: self.round.plane, tag: self.round.tag, reset, cap }
    }
}

impl Driver for FindMin {
    type Out = Option<Candidate>;

    fn step(&mut self, rng: &mut ChaCha8Rng, up: Option<Up>) -> Action<Option<Candidate>> {
        let mut up = up;
        loop {
            match self.stage {
                MinStage::Start => {
                    self.stage = MinStage::Capping;
                    return Action::Wave(self.query(true, None));
                }
                MinStage::Capping => {
                    debug_assert_eq!(up.take(), Some(Up::Ack));
                    self.stage = MinStage::Sampling;
                    self.round.restart(false);
                }
                MinStage::Sampling => {
                    let outcome = match self.round.step(rng, up.take()) {
                        Action::Wave(m) => return Action::Wave(m),
                        Action::Done(o) => o,
                    };
                    self.rounds += 1;
                    match outcome {
                        RoundOutcome::Found(c) if self.confirming && Some(c.name) == self.best.map(|b| b.name) => {
                            self.stage = MinStage::Announcing;
                            let plane = self.round.plane;
                            let tag = self.round.tag;
                            return Action::Wave(Msg::Result { plane, tag, name: c.name, high: c.high });
                        }
                        RoundOutcome::Found(c) => {
                            self.best = Some(c);
                            self.misses = 0;
                            self.confirming = false;
                            self.stage = MinStage::Capping;
                            return Action::Wave(self.query(false, Some(c.key - 1)));
                        }
                        RoundOutcome::Zero | RoundOutcome::Fail => {
                            self.misses += 1;
                            if self.misses < self.patience {
                                self.round.restart(false);
                                continue;
                            }
                            match self.best {
                                None => return Action::Done(None),
                                Some(b) if !self.confirming => {
                                    self.confirming = true;
                                    self.misses = 0;
                                    self.stage = MinStage::Capping;
                                    return Action::Wave(self.query(false, Some(b.key)));
                                }
                                Some(b) => {
                                    // the confirmation kept missing; announce what we have
                                    self.stage = MinStage::Announcing;
                                    let plane = self.round.plane;
                                    let tag = self.round.tag;
                                    return Action::Wave(Msg::Result { plane, tag, name: b.name, high: b.high });
                                }
                            }
                        }
                    }
                }
                MinStage::Announcing => {
                    debug_assert_eq!(up.take(), Some(Up::Ack));
                    return Action::Done(self.best);
                }
            }
        }
    }
}

/// Cut-size estimate from `c·log n` unfiltered parity vectors.
#[derive(Clone, Debug)]
pub struct ApproxCut {
    plane: Plane,
    tag: NodeId,
    scale: Scale,
    p: u64,
    reps: u32,
    vectors: Vec<ParityVector>,
}

impl ApproxCut {
    pub fn new(plane: Plane, tag: NodeId, scale: Scale, p: u64) -> Self {
        Self::with_reps(plane, tag, scale, p, scale.c_log_n())
    }

    /// Uses `reps` hash functions in place of `c·log n`; the index
    /// threshold scales with it.
    pub fn with_reps(plane: Plane, tag: NodeId, scale: Scale, p: u64, reps: u32) -> Self {
        ApproxCut { plane, tag, scale, p, reps: reps.max(1), vectors: Vec::new() }
    }
}

impl Driver for ApproxCut {
    type Out = u64;

    fn step(&mut self, rng: &mut ChaCha8Rng, up: Option<Up>) -> Action<u64> {
        if let Some(Up::Vec(v)) = up {
            self.vectors.push(v);
        }
        if self.vectors.len() >= self.reps as usize {
            return Action::Done(approx_cut_estimate(&self.vectors, self.scale.sketch_bits(), self.reps));
        }
        let a = rng.gen_range(1..self.p);
        let b = rng.gen_range(0..self.p);
        Action::Wave(Msg::Hash { plane: self.plane, tag: self.tag, a, b, filtered: false, reset: false })
    }
}

/// Limits for one Search stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchParams {
    /// Maximum sampling rounds (`48·c·log n`).
    pub max_rounds: u32,
    /// Found-edge count that sends the leader into the wait stage
    /// (`2·c·log n`).
    pub enough: u32,
    /// Consecutive zero vectors after which sampling stops early.
    pub zero_streak: u32,
}

impl SearchParams {
    pub fn of(scale: Scale) -> Self {
        let cl = scale.c_log_n();
        SearchParams { max_rounds: 48 * cl, enough: 2 * cl, zero_streak: 2 * cl }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SearchOutcome {
    /// No outgoing edge was found.
    Terminal,
    /// An outgoing edge to a high-degree node was found.
    HighFound,
    /// Some, but fewer than `enough`, outgoing edges were found.
    Few,
    /// `enough` edges were found, all to low-degree nodes.
    Wait,
}

/// Sampling without replacement: each found edge is announced, its tree
/// endpoint excludes it from later rounds and files it in a Found list.
#[derive(Clone, Debug)]
pub struct Search {
    round: FindAnyRound,
    params: SearchParams,
    pub rounds: u32,
    pub found: u32,
    zeros: u32,
}

impl Search {
    pub fn new(plane: Plane, tag: NodeId, scale: Scale, p: u64, params: SearchParams) -> Self {
        Search {
            round: FindAnyRound::new(plane, tag, scale, p).with(true, true, true),
            params,
            rounds: 0,
            found: 0,
            zeros: 0,
        }
    }
}

impl Driver for Search {
    type Out = SearchOutcome;

    fn step(&mut self, rng: &mut ChaCha8Rng, up: Option<Up>) -> Action<SearchOutcome> {
        let mut up = up;
        loop {
            let outcome = match self.round.step(rng, up.take()) {
                Action::Wave(m) => return Action::Wave(m),
                Action::Done(o) => o,
            };
            self.rounds += 1;
            match outcome {
                RoundOutcome::Found(c) => {
                    self.found += 1;
                    self.zeros = 0;
                    if c.high {
                        return Action::Done(SearchOutcome::HighFound);
                    }
                    if self.found >= self.params.enough {
                        return Action::Done(SearchOutcome::Wait);
                    }
                }
                RoundOutcome::Zero => self.zeros += 1,
                RoundOutcome::Fail => self.zeros = 0,
            }
            if self.rounds >= self.params.max_rounds || self.zeros >= self.params.zero_streak {
                return Action::Done(if self.found == 0 { SearchOutcome::Terminal } else { SearchOutcome::Few });
            }
            self.round.restart(false);
        }
    }
}
