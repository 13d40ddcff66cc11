//! Minimum spanning forest without a preselected leader.
//!
//! Every star leads a fragment and grows it with identity-labelled
//! expansions; a fragment that touches a higher identity stops and is
//! later absorbed, so in each component the highest star ends up owning
//! every node. Low-degree nodes that are not stars run GHS meanwhile; that
//! run can only finish in a component with no star and no high-degree
//! node, because neither ever answers a GHS message. Once a star's
//! spanning tree covers its component, the MST stage runs over that tree.
//!
//! A low-degree node sends nothing but initialization messages to a
//! neighbour until that neighbour has acknowledged its `LowDegree`.

mod ghs;

use std::collections::{BTreeMap, BTreeSet, HashSet};

pub use ghs::{EdgeState, Ghs};

use crate::findmst::FindMstNode;
use crate::findst::{FindStNode, FindStParams};
use crate::graph::{edge_name, EdgeName, Graph, NodeId};
use crate::simnet::{Ctx, Protocol, Step};
use crate::treeops::wave_plane;
use crate::wire::{Msg, Plane};

#[derive(Clone, Debug, Default)]
struct Gate {
    acked: HashSet<usize>,
    queued: BTreeMap<usize, Vec<Msg>>,
}

#[derive(Clone, Debug)]
pub struct MsfNode {
    pub st: FindStNode,
    /// Present while the node still takes part in GHS.
    pub ghs: Option<Ghs>,
    /// The MST stage, once the owning star's tree is complete.
    pub mst: Option<FindMstNode>,
    gate: Option<Gate>,
    /// Set when a fragment absorbed this node out of GHS.
    pub left_ghs: bool,
}

fn is_mst_kind(msg: &Msg) -> bool {
    matches!(
        msg,
        Msg::RankRequest { .. }
            | Msg::RankUp { .. }
            | Msg::Proceed { .. }
            | Msg::PhaseDone { .. }
            | Msg::Connect { .. }
            | Msg::Accept { .. }
            | Msg::IdentityUpdate { .. }
    ) || wave_plane(msg) == Some(Plane::Frag)
}

fn exempt_from_gate(msg: &Msg) -> bool {
    matches!(msg, Msg::LowDegree | Msg::Star | Msg::LdAck)
}

impl MsfNode {
    pub fn network(g: &Graph, stars: &[bool], params: FindStParams) -> Vec<MsfNode> {
        FindStNode::network_multi(g, stars, params)
            .into_iter()
            .map(|st| {
                let low = st.low();
                let ghs = (low && !st.star).then(|| Ghs::new(&st.local));
                MsfNode { ghs, mst: None, gate: low.then(Gate::default), left_ghs: false, st }
            })
            .collect()
    }

    /// Holds back anything sent since `start` to neighbours that have not
    /// acknowledged this node's `LowDegree` yet.
    fn gate(&mut self, ctx: &mut Ctx, start: usize) {
        let Some(gate) = self.gate.as_mut() else { return };
        for (to, msg) in ctx.take_outbox_from(start) {
            if exempt_from_gate(&msg) || gate.acked.contains(&to) {
                ctx.send(to, msg);
            } else {
                gate.queued.entry(to).or_default().push(msg);
            }
        }
    }

    fn on_ack(&mut self, ctx: &mut Ctx, from: usize) {
        let Some(gate) = self.gate.as_mut() else { return };
        gate.acked.insert(from);
        for msg in gate.queued.remove(&from).unwrap_or_default() {
            ctx.send(from, msg);
        }
    }

    fn after(&mut self, ctx: &mut Ctx) {
        if self.st.in_tree && self.ghs.is_some() {
            self.ghs = None;
            self.left_ghs = true;
        }
        if self.st.terminated && self.mst.is_none() {
            let agent = &self.st.agent;
            let mut mst = FindMstNode::new(self.st.local.clone(), agent.tag, agent.parent, agent.children.clone());
            if agent.parent.is_none() {
                mst.on_wake(ctx);
            }
            self.mst = Some(mst);
        }
    }

    /// Fragment identity (0 outside any star fragment).
    pub fn vid(&self) -> NodeId {
        self.st.vid()
    }

    /// Whether GHS finished at this node.
    pub fn ghs_halted(&self) -> bool {
        self.ghs.as_ref().is_some_and(|g| g.halted)
    }
}

impl Protocol for MsfNode {
    fn on_wake(&mut self, ctx: &mut Ctx) {
        let start = ctx.outbox_len();
        self.st.on_wake(ctx);
        if let Some(g) = self.ghs.as_mut() {
            g.wake(ctx);
        }
        self.after(ctx);
        self.gate(ctx, start);
    }

    fn on_message(&mut self, ctx: &mut Ctx, from: usize, msg: Msg) -> Step {
        let start = ctx.outbox_len();
        let step = match msg {
            Msg::LdAck => {
                self.on_ack(ctx, from);
                Step::Done
            }
            Msg::LowDegree => {
                ctx.send(from, Msg::LdAck);
                self.st.on_message(ctx, from, msg)
            }
            m if m.is_ghs() => {
                // stars, high-degree nodes and absorbed nodes stay silent
                if let Some(g) = self.ghs.as_mut() {
                    g.on_message(ctx, from, m);
                }
                Step::Done
            }
            m if is_mst_kind(&m) => match self.mst.as_mut() {
                Some(mst) => mst.on_message(ctx, from, m),
                None => Step::Hold(m),
            },
            m => self.st.on_message(ctx, from, m),
        };
        self.after(ctx);
        self.gate(ctx, start);
        step
    }

    fn is_terminal(&self) -> bool {
        match (&self.ghs, &self.mst) {
            (Some(g), _) => g.halted,
            (None, Some(m)) => m.terminated,
            (None, None) => false,
        }
    }
}

/// The forest the nodes hold at the end of a run: GHS branches in
/// components finished by GHS, fragment-tree edges of the MST stage
/// elsewhere.
pub fn forest_edges(g: &Graph, nodes: &[MsfNode]) -> BTreeSet<EdgeName> {
    let b = g.scale().id_bits();
    let name = |x: usize, y: usize| edge_name(g.id(x), g.id(y), b).expect("valid ids");
    let mut out = BTreeSet::new();
    for (x, node) in nodes.iter().enumerate() {
        if let Some(ghs) = node.ghs.as_ref().filter(|g| g.halted) {
            out.extend(ghs.branches().map(|y| name(x, y)));
        } else if let Some(p) = node.mst.as_ref().and_then(|m| m.frag.parent) {
            out.insert(name(x, p));
        }
    }
    out
}

#[cfg(test)]
mod tests;
