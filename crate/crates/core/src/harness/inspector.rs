//! Global-view checks run at protocol checkpoints.
//!
//! The inspector sees every node's state at once, which no protocol can;
//! it only reports and never feeds anything back into a run.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::findmst::{self, FindMstNode};
use crate::findst::{self, FindStNode, PhaseEnd, SpanningTree};
use crate::graph::{Graph, NodeId};
use crate::msf::MsfNode;
use crate::simnet::Checkpoint;

/// How much checking a run gets.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckLevel {
    Off,
    /// Leader-phase checkpoints and the final state.
    #[default]
    Phase,
    /// Every checkpoint, plus Found-list bookkeeping.
    Full,
}

impl CheckLevel {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "off" => Some(CheckLevel::Off),
            "phase" => Some(CheckLevel::Phase),
            "full" => Some(CheckLevel::Full),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    /// Low-degree and star members (and the leader) have all neighbours
    /// in the tree; each other high-degree member has a star neighbour in
    /// the tree.
    Invariant,
    TreeShape,
    Bookkeeping,
    RankBound,
    VidMonotone,
    StarOwnership,
    PhaseDichotomy,
    TriggerCount,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub check: Check,
    pub phase: u32,
    pub node: Option<u64>,
    pub detail: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseKind {
    /// The search hit a high-degree endpoint.
    A,
    /// The phase went through the low-degree cut.
    B,
    Terminal,
}

/// One findst phase as seen from outside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseStat {
    pub phase: u32,
    pub kind: PhaseKind,
    /// Edges from the tree to low-degree non-members after this phase's
    /// expand, and after the next one.
    pub low_before: u64,
    pub low_after: u64,
    pub high_added: bool,
}

impl PhaseStat {
    pub fn ratio(&self) -> f64 {
        if self.low_before == 0 {
            0.0
        } else {
            self.low_after as f64 / self.low_before as f64
        }
    }
}

struct Snapshot {
    phase: u32,
    members: BTreeSet<usize>,
    low_cut: u64,
}

#[derive(Default)]
pub struct Inspector {
    pub level: CheckLevel,
    pub violations: Vec<Violation>,
    pub phases: Vec<PhaseStat>,
    last: Option<Snapshot>,
    vids: Vec<NodeId>,
}

/// Edges from `members` to low-degree non-members, using each node's own
/// view of its degree class.
fn low_cut(g: &Graph, nodes: &[FindStNode], members: &BTreeSet<usize>) -> u64 {
    g.edges()
        .iter()
        .filter(|e| {
            let (a, b) = (members.contains(&e.u), members.contains(&e.v));
            (a && !b && nodes[e.v].low()) || (b && !a && nodes[e.u].low())
        })
        .count() as u64
}

impl Inspector {
    pub fn new(level: CheckLevel) -> Self {
        Inspector { level, ..Default::default() }
    }

    fn flag(&mut self, check: Check, phase: u32, node: Option<NodeId>, detail: impl Into<String>) {
        self.violations.push(Violation { check, phase, node: node.map(|x| x.0), detail: detail.into() });
    }

    pub fn count(&self, check: Check) -> usize {
        self.violations.iter().filter(|v| v.check == check).count()
    }

    // ---- findst -------------------------------------------------------

    pub fn findst(&mut self, g: &Graph, nodes: &[FindStNode], cp: &Checkpoint) {
        if self.level == CheckLevel::Off || (cp.kind != findst::mark::EXPAND && cp.kind != findst::mark::TERMINAL) {
            return;
        }
        if cp.kind == findst::mark::TERMINAL {
            self.close_phase(g, nodes, cp.phase, true);
            return;
        }
        let members: BTreeSet<usize> = (0..g.n()).filter(|&x| nodes[x].in_tree).collect();
        self.check_invariant(g, nodes, &members, cp.phase);
        self.check_partial_tree(g, nodes, &members, cp.node, cp.phase);
        self.check_triggers(g, nodes, cp.phase);
        if self.level == CheckLevel::Full {
            self.check_found(g, nodes, cp.phase);
        }
        if let Some(prev) = self.last.take() {
            let kind = phase_kind(&nodes[cp.node], prev.phase);
            let high_added = members.difference(&prev.members).any(|&x| !nodes[x].low());
            let stat = PhaseStat {
                phase: prev.phase,
                kind,
                low_before: prev.low_cut,
                low_after: low_cut(g, nodes, &members),
                high_added,
            };
            if !stat.high_added && stat.low_after >= stat.low_before && stat.low_before > 0 {
                let d = format!("no high-degree node added and low cut {} -> {}", stat.low_before, stat.low_after);
                self.flag(Check::PhaseDichotomy, stat.phase, None, d);
            }
            self.phases.push(stat);
        }
        let low = low_cut(g, nodes, &members);
        self.last = Some(Snapshot { phase: cp.phase, members, low_cut: low });
    }

    fn close_phase(&mut self, g: &Graph, nodes: &[FindStNode], phase: u32, terminal: bool) {
        if let Some(prev) = self.last.take() {
            let members: BTreeSet<usize> = (0..g.n()).filter(|&x| nodes[x].in_tree).collect();
            self.phases.push(PhaseStat {
                phase: prev.phase.max(phase),
                kind: if terminal { PhaseKind::Terminal } else { PhaseKind::B },
                low_before: prev.low_cut,
                low_after: low_cut(g, nodes, &members),
                high_added: false,
            });
        }
    }

    fn check_invariant(&mut self, g: &Graph, nodes: &[FindStNode], members: &BTreeSet<usize>, phase: u32) {
        for &x in members {
            let s = &nodes[x];
            if s.low() || s.star || s.leader {
                if let Some(a) = g.neighbors(x).iter().find(|a| !members.contains(&a.nbr)) {
                    let d = format!("neighbour {} of a low-degree or star member is outside", g.id(a.nbr));
                    self.flag(Check::Invariant, phase, Some(g.id(x)), d);
                }
            } else if !g.neighbors(x).iter().any(|a| members.contains(&a.nbr) && nodes[a.nbr].star) {
                self.flag(Check::Invariant, phase, Some(g.id(x)), "high-degree member without a star neighbour in the tree");
            }
        }
    }

    /// Parent/child consistency among members, everything hanging off `root`.
    fn check_partial_tree(
        &mut self,
        g: &Graph,
        nodes: &[FindStNode],
        members: &BTreeSet<usize>,
        root: usize,
        phase: u32,
    ) {
        let parent: Vec<Option<usize>> = nodes.iter().map(|s| s.parent()).collect();
        let children: Vec<Vec<usize>> = nodes.iter().map(|s| s.children().to_vec()).collect();
        if let Err(d) = forest_shape(g, members, &parent, &children, |x| x == root) {
            self.flag(Check::TreeShape, phase, None, d);
        }
    }

    /// Triggers only ever originate from a coin: the leader cannot count
    /// more than came up heads, and no link delivers more than was sent.
    fn check_triggers(&mut self, g: &Graph, nodes: &[FindStNode], phase: u32) {
        let heads: u64 = nodes.iter().map(|s| s.heads).sum();
        let got: u64 = nodes.iter().map(|s| s.triggers_in).sum();
        if got > heads {
            self.flag(Check::TriggerCount, phase, None, format!("{got} triggers counted, {heads} coins came up heads"));
        }
        for (x, s) in nodes.iter().enumerate() {
            for (&from, &k) in &s.trig_recv {
                let sent = nodes[from].trig_sent.get(&x).copied().unwrap_or(0);
                if k > sent {
                    let d = format!("{k} triggers received from {}, which sent {sent}", g.id(from));
                    self.flag(Check::TriggerCount, phase, Some(g.id(x)), d);
                }
            }
        }
    }

    fn check_found(&mut self, g: &Graph, nodes: &[FindStNode], phase: u32) {
        for (x, s) in nodes.iter().enumerate() {
            let nbr = |v: usize| g.neighbors(x).iter().any(|a| a.nbr == v);
            if let Some(&v) = s.found_l.iter().chain(&s.found_o).chain(&s.reject).find(|&&v| !nbr(v)) {
                let d = format!("list entry {} is not a neighbour", g.id(v));
                self.flag(Check::Bookkeeping, phase, Some(g.id(x)), d);
            }
            if let Some(&v) = s.found_l.iter().find(|&&v| !nodes[v].low()) {
                let d = format!("Found_L entry {} is high-degree", g.id(v));
                self.flag(Check::Bookkeeping, phase, Some(g.id(x)), d);
            }
        }
    }

    /// End-of-run checks for a single-leader spanning tree.
    pub fn findst_final(&mut self, g: &Graph, nodes: &[FindStNode]) {
        if self.level == CheckLevel::Off {
            return;
        }
        let phase = nodes.iter().map(|s| s.phase).max().unwrap_or(0);
        self.close_phase(g, nodes, phase, false);
        if let Err(d) = SpanningTree::from_nodes(g, nodes) {
            self.flag(Check::TreeShape, phase, None, d);
        }
        self.check_triggers(g, nodes, phase);
    }

    // ---- findmst ------------------------------------------------------

    pub fn findmst(&mut self, g: &Graph, nodes: &[FindMstNode], cp: &Checkpoint) {
        let wanted = match self.level {
            CheckLevel::Off => false,
            CheckLevel::Phase => cp.kind == findmst::mark::PHASE,
            CheckLevel::Full => true,
        };
        if wanted {
            self.check_fragments(g, nodes, cp.phase);
        }
    }

    pub fn findmst_final(&mut self, g: &Graph, nodes: &[FindMstNode]) {
        if self.level != CheckLevel::Off {
            let phase = nodes.iter().map(|s| s.phases).max().unwrap_or(0);
            self.check_fragments(g, nodes, phase);
        }
    }

    /// Rank bound and fragment-tree shape; only meaningful while no
    /// identity update is in flight, i.e. at phase boundaries.
    fn check_fragments(&mut self, g: &Graph, nodes: &[FindMstNode], phase: u32) {
        let mut size: BTreeMap<NodeId, u64> = BTreeMap::new();
        for s in nodes {
            *size.entry(s.fragment()).or_default() += 1;
        }
        for (x, s) in nodes.iter().enumerate() {
            let need = 1u64 << s.rank.min(63);
            let have = size[&s.fragment()];
            if have < need {
                let d = format!("rank {} in a fragment of {have} nodes", s.rank);
                self.flag(Check::RankBound, phase, Some(g.id(x)), d);
            }
        }
        let all: BTreeSet<usize> = (0..g.n()).collect();
        let parent: Vec<Option<usize>> = nodes.iter().map(|s| s.frag.parent).collect();
        let children: Vec<Vec<usize>> = nodes.iter().map(|s| s.frag.children.clone()).collect();
        if let Err(d) = forest_shape(g, &all, &parent, &children, |x| nodes[x].frag.parent.is_none()) {
            self.flag(Check::TreeShape, phase, None, d);
        }
        let mut roots: BTreeMap<NodeId, u32> = BTreeMap::new();
        for s in nodes.iter().filter(|s| s.frag.parent.is_none()) {
            *roots.entry(s.fragment()).or_default() += 1;
        }
        if let Some((id, k)) = roots.iter().find(|(_, &k)| k > 1) {
            self.flag(Check::TreeShape, phase, Some(*id), format!("fragment has {k} roots"));
        }
    }

    // ---- msf ----------------------------------------------------------

    pub fn msf(&mut self, g: &Graph, nodes: &[MsfNode], cp: &Checkpoint) {
        let wanted = match self.level {
            CheckLevel::Off => false,
            CheckLevel::Phase => cp.kind == findst::mark::EXPAND,
            CheckLevel::Full => true,
        };
        if wanted {
            self.check_vids(g, nodes, cp.phase);
        }
    }

    fn check_vids(&mut self, g: &Graph, nodes: &[MsfNode], phase: u32) {
        if self.vids.is_empty() {
            self.vids = vec![NodeId(0); nodes.len()];
        }
        for (x, s) in nodes.iter().enumerate() {
            let v = s.vid();
            if v < self.vids[x] {
                let d = format!("identity went from {} to {}", self.vids[x], v);
                self.flag(Check::VidMonotone, phase, Some(g.id(x)), d);
            }
            self.vids[x] = v;
        }
    }

    pub fn msf_final(&mut self, g: &Graph, nodes: &[MsfNode], stars: &[bool]) {
        if self.level == CheckLevel::Off {
            return;
        }
        self.check_vids(g, nodes, u32::MAX);
        let comp = g.components();
        let mut top: BTreeMap<usize, NodeId> = BTreeMap::new();
        for x in (0..g.n()).filter(|&x| stars[x]) {
            let t = top.entry(comp[x]).or_insert(g.id(x));
            *t = (*t).max(g.id(x));
        }
        for x in 0..g.n() {
            if let Some(&t) = top.get(&comp[x]) {
                if nodes[x].vid() != t {
                    let d = format!("owned by {} instead of star {t}", nodes[x].vid());
                    self.flag(Check::StarOwnership, u32::MAX, Some(g.id(x)), d);
                }
            }
        }
        let members: BTreeSet<usize> = (0..g.n()).filter(|&x| top.contains_key(&comp[x])).collect();
        let parent: Vec<Option<usize>> = nodes.iter().map(|s| s.st.parent()).collect();
        let children: Vec<Vec<usize>> = nodes.iter().map(|s| s.st.children().to_vec()).collect();
        let roots: BTreeSet<usize> = members.iter().copied().filter(|&x| g.id(x) == top[&comp[x]]).collect();
        if let Err(d) = forest_shape(g, &members, &parent, &children, |x| roots.contains(&x)) {
            self.flag(Check::TreeShape, u32::MAX, None, d);
        }
    }
}

fn phase_kind(leader: &FindStNode, phase: u32) -> PhaseKind {
    match leader.log.iter().find(|r| r.phase == phase).map(|r| r.end) {
        Some(PhaseEnd::HighFound) => PhaseKind::A,
        Some(PhaseEnd::Terminal) => PhaseKind::Terminal,
        _ => PhaseKind::B,
    }
}

/// Checks that within `members` every parent edge is a graph edge, parent
/// and child lists agree, and every member reaches a node accepted by
/// `is_root` without leaving `members` or looping.
fn forest_shape(
    g: &Graph,
    members: &BTreeSet<usize>,
    parent: &[Option<usize>],
    children: &[Vec<usize>],
    is_root: impl Fn(usize) -> bool,
) -> Result<(), String> {
    for &x in members {
        if let Some(p) = parent[x] {
            if !members.contains(&p) {
                return Err(format!("parent of {} is outside the tree", g.id(x)));
            }
            if g.neighbors(x).iter().all(|a| a.nbr != p) {
                return Err(format!("parent of {} is not a neighbour", g.id(x)));
            }
            if !children[p].contains(&x) {
                return Err(format!("{} missing from its parent's children", g.id(x)));
            }
        }
        if let Some(&c) = children[x].iter().find(|&&c| parent[c] != Some(x)) {
            return Err(format!("child {} of {} points elsewhere", g.id(c), g.id(x)));
        }
        let (mut y, mut steps) = (x, 0);
        while let Some(p) = parent[y] {
            y = p;
            steps += 1;
            if steps > members.len() {
                return Err(format!("cycle through {}", g.id(x)));
            }
        }
        if !is_root(y) {
            return Err(format!("{} hangs off {}, which is not a root", g.id(x), g.id(y)));
        }
    }
    Ok(())
}
