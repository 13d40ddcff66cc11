//! Every message that crosses a simulated link, with a bit-exact codec.
//!
//! Field widths derive from the [`Scale`]: with `b = c·⌈log₂ n⌉`,
//! identities take `b` bits, edge names `2b`, weight keys `3b`, hash
//! coefficients `2b + 1`, parity vectors `l + 1`. The simulator encodes
//! each send and rejects anything above [`congest_budget`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ceil_log2, EdgeName, NodeId, Scale};

/// Width of the message tag.
pub const TAG_BITS: u32 = 6;

/// The per-message bit budget `8·c·max(⌈log₂ n⌉, 2)`.
pub fn congest_budget(n: usize, c: u32) -> usize {
    8 * c as usize * ceil_log2(n as u64).max(2) as usize
}

/// Which tree a fragment-level wave travels on. Nodes running the MST
/// stage carry two trees at once: the spanning tree built first and the
/// current MST fragment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Plane {
    Span,
    Frag,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Msg {
    // initialization and degree probing (unlabeled)
    Star,
    LowDegree,
    LdAck,
    DegQuery,
    DegReply { high: bool },

    // single-leader expansion
    Expand { phase: u32 },
    DoneByAccept,
    DoneByReject,

    // multi-leader expansion
    ExpandId { tid: NodeId },
    AcceptId { tid: NodeId },
    /// `joined` is set when the sender took `tid` as its parent before a
    /// lower identity turned up further out.
    RejectedLowerId { tid: NodeId, joined: bool },
    RejectSameTree { tid: NodeId },

    // fragment waves, downward
    Query { plane: Plane, tag: NodeId, reset: bool, cap: Option<u128> },
    Hash { plane: Plane, tag: NodeId, a: u64, b: u64, filtered: bool, reset: bool },
    Index { plane: Plane, tag: NodeId, i: u32 },
    Verify { plane: Plane, tag: NodeId, name: EdgeName, degree: bool },
    Result { plane: Plane, tag: NodeId, name: EdgeName, high: bool },
    SendTrigger { tag: NodeId, r: u64, phase: u32 },
    Terminate { plane: Plane, tag: NodeId },

    // fragment waves, upward
    Trigger { tag: NodeId, phase: u32 },
    Ack { plane: Plane, tag: NodeId },
    VecUp { plane: Plane, tag: NodeId, v: u64 },
    NameUp { plane: Plane, tag: NodeId, x: u64 },
    VerifyUp { plane: Plane, tag: NodeId, count: u8, high: bool, base: u64 },

    // MST phase control over the spanning tree
    RankRequest { tag: NodeId },
    RankUp { tag: NodeId, rank: u32 },
    Proceed { tag: NodeId, min_rank: u32 },
    PhaseDone { tag: NodeId },

    // MST fragment merging
    Connect { id: NodeId, rank: u32 },
    Accept { id: NodeId, rank: u32 },
    IdentityUpdate { id: NodeId, rank: u32 },

    // GHS
    GhsConnect { level: u32 },
    GhsInitiate { level: u32, name: EdgeName, find: bool },
    GhsTest { level: u32, name: EdgeName },
    GhsAccept,
    GhsReject,
    GhsReport { best: Option<u128> },
    GhsChangeRoot,
    GhsHalt,
    /// Link-level acknowledgement that keeps GHS traffic on each edge in order.
    GhsAck,
}

/// All kind names, in tag order.
pub const KINDS: [&str; 40] = [
    "Star",
    "LowDegree",
    "LdAck",
    "DegQuery",
    "DegReply",
    "Expand",
    "DoneByAccept",
    "DoneByReject",
    "ExpandId",
    "AcceptId",
    "RejectedLowerId",
    "RejectSameTree",
    "QueryBcast",
    "HashBcast",
    "IndexBcast",
    "VerifyBcast",
    "ResultBcast",
    "SendTrigger",
    "Terminate",
    "Trigger",
    "AckUp",
    "VecUp",
    "NameUp",
    "VerifyUp",
    "RankRequest",
    "RankUp",
    "Proceed",
    "PhaseDone",
    "Connect",
    "Accept",
    "IdentityUpdate",
    "GhsConnect",
    "GhsInitiate",
    "GhsTest",
    "GhsAccept",
    "GhsReject",
    "GhsReport",
    "GhsChangeRoot",
    "GhsHalt",
    "GhsAck",
];

impl Msg {
    pub fn tag(&self) -> u32 {
        use Msg::*;
        match self {
            Star => 0,
            LowDegree => 1,
            LdAck => 2,
            DegQuery => 3,
            DegReply { .. } => 4,
            Expand { .. } => 5,
            DoneByAccept => 6,
            DoneByReject => 7,
            ExpandId { .. } => 8,
            AcceptId { .. } => 9,
            RejectedLowerId { .. } => 10,
            RejectSameTree { .. } => 11,
            Query { .. } => 12,
            Hash { .. } => 13,
            Index { .. } => 14,
            Verify { .. } => 15,
            Result { .. } => 16,
            SendTrigger { .. } => 17,
            Terminate { .. } => 18,
            Trigger { .. } => 19,
            Ack { .. } => 20,
            VecUp { .. } => 21,
            NameUp { .. } => 22,
            VerifyUp { .. } => 23,
            RankRequest { .. } => 24,
            RankUp { .. } => 25,
            Proceed { .. } => 26,
            PhaseDone { .. } => 27,
            Connect { .. } => 28,
            Accept { .. } => 29,
            IdentityUpdate { .. } => 30,
            GhsConnect { .. } => 31,
            GhsInitiate { .. } => 32,
            GhsTest { .. } => 33,
            GhsAccept => 34,
            GhsReject => 35,
            GhsReport { .. } => 36,
            GhsChangeRoot => 37,
            GhsHalt => 38,
            GhsAck => 39,
        }
    }

    pub fn kind(&self) -> &'static str {
        KINDS[self.tag() as usize]
    }

    pub fn is_ghs(&self) -> bool {
        self.tag() >= 31
    }
}

/// Field widths for one scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Widths {
    pub id: u32,
    pub name: u32,
    pub key: u32,
    pub coef: u32,
    pub vec: u32,
    pub rank: u32,
    pub idx: u32,
}

impl Widths {
    pub fn of(scale: Scale) -> Self {
        let b = scale.id_bits();
        Widths {
            id: b,
            name: 2 * b,
            key: 3 * b,
            coef: 2 * b + 1,
            vec: scale.sketch_bits() + 1,
            rank: ceil_log2(scale.log_n() as u64 + 2).max(1),
            idx: ceil_log2(scale.sketch_bits() as u64 + 1).max(1),
        }
    }
}

/// Packed message bits, least significant first.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Bits {
    words: Vec<u64>,
    len: usize,
}

impl Bits {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn push(&mut self, value: u128, width: u32) -> Result<()> {
        if width < 128 && value >> width != 0 {
            return Err(Error::Codec(format!("value {value} does not fit in {width} bits")));
        }
        let mut v = value;
        let mut rem = width as usize;
        while rem > 0 {
            let off = self.len % 64;
            if off == 0 {
                self.words.push(0);
            }
            let take = (64 - off).min(rem);
            let chunk = if take == 64 { v as u64 } else { (v as u64) & ((1u64 << take) - 1) };
            *self.words.last_mut().unwrap() |= chunk << off;
            v = if take >= 128 { 0 } else { v >> take };
            rem -= take;
            self.len += take;
        }
        Ok(())
    }
}

struct Reader<'a> {
    bits: &'a Bits,
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, width: u32) -> Result<u128> {
        if self.pos + width as usize > self.bits.len {
            return Err(Error::Codec("truncated message".into()));
        }
        let mut v = 0u128;
        let mut got = 0usize;
        while got < width as usize {
            let p = self.pos + got;
            let off = p % 64;
            let take = (64 - off).min(width as usize - got);
            let word = self.bits.words[p / 64] >> off;
            let chunk = if take == 64 { word } else { word & ((1u64 << take) - 1) };
            v |= (chunk as u128) << got;
            got += take;
        }
        self.pos += width as usize;
        Ok(v)
    }

    fn flag(&mut self) -> Result<bool> {
        Ok(self.take(1)? == 1)
    }

    fn u32(&mut self, w: u32) -> Result<u32> {
        Ok(self.take(w)? as u32)
    }

    fn u64(&mut self, w: u32) -> Result<u64> {
        Ok(self.take(w)? as u64)
    }

    fn plane(&mut self) -> Result<Plane> {
        Ok(if self.flag()? { Plane::Frag } else { Plane::Span })
    }

    fn id(&mut self, w: &Widths) -> Result<NodeId> {
        Ok(NodeId(self.u64(w.id)?))
    }

    fn name(&mut self, w: &Widths) -> Result<EdgeName> {
        Ok(EdgeName(self.u64(w.name)?))
    }

    fn opt_key(&mut self, w: &Widths) -> Result<Option<u128>> {
        let has = self.flag()?;
        let v = self.take(w.key)?;
        Ok(has.then_some(v))
    }
}

struct Writer<'a> {
    out: Bits,
    w: &'a Widths,
}

impl Writer<'_> {
    fn put(&mut self, v: u128, width: u32) -> Result<&mut Self> {
        self.out.push(v, width)?;
        Ok(self)
    }

    fn flag(&mut self, b: bool) -> Result<&mut Self> {
        self.put(b as u128, 1)
    }

    fn plane(&mut self, p: Plane) -> Result<&mut Self> {
        self.flag(p == Plane::Frag)
    }

    fn id(&mut self, id: NodeId) -> Result<&mut Self> {
        let w = self.w.id;
        self.put(id.0 as u128, w)
    }

    fn name(&mut self, name: EdgeName) -> Result<&mut Self> {
        let w = self.w.name;
        self.put(name.0 as u128, w)
    }

    fn rank(&mut self, r: u32) -> Result<&mut Self> {
        let w = self.w.rank;
        self.put(r as u128, w)
    }

    fn opt_key(&mut self, k: Option<u128>) -> Result<&mut Self> {
        let w = self.w.key;
        self.flag(k.is_some())?.put(k.unwrap_or(0), w)
    }
}

pub fn encode(msg: &Msg, w: &Widths) -> Result<Bits> {
    use Msg::*;
    let mut wr = Writer { out: Bits::default(), w };
    wr.put(msg.tag() as u128, TAG_BITS)?;
    match *msg {
        Star | LowDegree | LdAck | DegQuery | DoneByAccept | DoneByReject | GhsAccept | GhsReject
        | GhsChangeRoot | GhsHalt | GhsAck => {}
        DegReply { high } => {
            wr.flag(high)?;
        }
        Expand { phase } => {
            wr.put(phase as u128, w.id)?;
        }
        ExpandId { tid } | AcceptId { tid } | RejectSameTree { tid } => {
            wr.id(tid)?;
        }
        RejectedLowerId { tid, joined } => {
            wr.id(tid)?.flag(joined)?;
        }
        Query { plane, tag, reset, cap } => {
            wr.plane(plane)?.id(tag)?.flag(reset)?.opt_key(cap)?;
        }
        Hash { plane, tag, a, b, filtered, reset } => {
            wr.plane(plane)?.id(tag)?.put(a as u128, w.coef)?.put(b as u128, w.coef)?.flag(filtered)?.flag(reset)?;
        }
        Index { plane, tag, i } => {
            wr.plane(plane)?.id(tag)?.put(i as u128, w.idx)?;
        }
        Verify { plane, tag, name, degree } => {
            wr.plane(plane)?.id(tag)?.name(name)?.flag(degree)?;
        }
        Result { plane, tag, name, high } => {
            wr.plane(plane)?.id(tag)?.name(name)?.flag(high)?;
        }
        SendTrigger { tag, r, phase } => {
            wr.id(tag)?.put(r as u128, w.name)?.put(phase as u128, w.id)?;
        }
        Terminate { plane, tag } | Ack { plane, tag } => {
            wr.plane(plane)?.id(tag)?;
        }
        Trigger { tag, phase } => {
            wr.id(tag)?.put(phase as u128, w.id)?;
        }
        VecUp { plane, tag, v } => {
            wr.plane(plane)?.id(tag)?.put(v as u128, w.vec)?;
        }
        NameUp { plane, tag, x } => {
            wr.plane(plane)?.id(tag)?.put(x as u128, w.name)?;
        }
        VerifyUp { plane, tag, count, high, base } => {
            wr.plane(plane)?.id(tag)?.put(count as u128, 2)?.flag(high)?.put(base as u128, w.id)?;
        }
        RankRequest { tag } | PhaseDone { tag } => {
            wr.id(tag)?;
        }
        RankUp { tag, rank } => {
            wr.id(tag)?.rank(rank)?;
        }
        Proceed { tag, min_rank } => {
            wr.id(tag)?.rank(min_rank)?;
        }
        Connect { id, rank } | Accept { id, rank } | IdentityUpdate { id, rank } => {
            wr.id(id)?.rank(rank)?;
        }
        GhsConnect { level } => {
            wr.rank(level)?;
        }
        GhsInitiate { level, name, find } => {
            wr.rank(level)?.name(name)?.flag(find)?;
        }
        GhsTest { level, name } => {
            wr.rank(level)?.name(name)?;
        }
        GhsReport { best } => {
            wr.opt_key(best)?;
        }
    }
    Ok(wr.out)
}

pub fn decode(bits: &Bits, w: &Widths) -> Result<Msg> {
    use Msg::*;
    let mut r = Reader { bits, pos: 0 };
    let tag = r.u32(TAG_BITS)?;
    let msg = match tag {
        0 => Star,
        1 => LowDegree,
        2 => LdAck,
        3 => DegQuery,
        4 => DegReply { high: r.flag()? },
        5 => Expand { phase: r.u32(w.id)? },
        6 => DoneByAccept,
        7 => DoneByReject,
        8 => ExpandId { tid: r.id(w)? },
        9 => AcceptId { tid: r.id(w)? },
        10 => RejectedLowerId { tid: r.id(w)?, joined: r.flag()? },
        11 => RejectSameTree { tid: r.id(w)? },
        12 => Query { plane: r.plane()?, tag: r.id(w)?, reset: r.flag()?, cap: r.opt_key(w)? },
        13 => Hash {
            plane: r.plane()?,
            tag: r.id(w)?,
            a: r.u64(w.coef)?,
            b: r.u64(w.coef)?,
            filtered: r.flag()?,
            reset: r.flag()?,
        },
        14 => Index { plane: r.plane()?, tag: r.id(w)?, i: r.u32(w.idx)? },
        15 => Verify { plane: r.plane()?, tag: r.id(w)?, name: r.name(w)?, degree: r.flag()? },
        16 => Result { plane: r.plane()?, tag: r.id(w)?, name: r.name(w)?, high: r.flag()? },
        17 => SendTrigger { tag: r.id(w)?, r: r.u64(w.name)?, phase: r.u32(w.id)? },
        18 => Terminate { plane: r.plane()?, tag: r.id(w)? },
        19 => Trigger { tag: r.id(w)?, phase: r.u32(w.id)? },
        20 => Ack { plane: r.plane()?, tag: r.id(w)? },
        21 => VecUp { plane: r.plane()?, tag: r.id(w)?, v: r.u64(w.vec)? },
        22 => NameUp { plane: r.plane()?, tag: r.id(w)?, x: r.u64(w.name)? },
        23 => VerifyUp {
            plane: r.plane()?,
            tag: r.id(w)?,
            count: r.u32(2)? as u8,
            high: r.flag()?,
            base: r.u64(w.id)?,
        },
        24 => RankRequest { tag: r.id(w)? },
        25 => RankUp { tag: r.id(w)?, rank: r.u32(w.rank)? },
        26 => Proceed { tag: r.id(w)?, min_rank: r.u32(w.rank)? },
        27 => PhaseDone { tag: r.id(w)? },
        28 => Connect { id: r.id(w)?, rank: r.u32(w.rank)? },
        29 => Accept { id: r.id(w)?, rank: r.u32(w.rank)? },
        30 => IdentityUpdate { id: r.id(w)?, rank: r.u32(w.rank)? },
        31 => GhsConnect { level: r.u32(w.rank)? },
        32 => GhsInitiate { level: r.u32(w.rank)?, name: r.name(w)?, find: r.flag()? },
        33 => GhsTest { level: r.u32(w.rank)?, name: r.name(w)? },
        34 => GhsAccept,
        35 => GhsReject,
        36 => GhsReport { best: r.opt_key(w)? },
        37 => GhsChangeRoot,
        38 => GhsHalt,
        39 => GhsAck,
        t => return Err(Error::Codec(format!("unknown tag {t}"))),
    };
    if r.pos != bits.len {
        return Err(Error::Codec("trailing bits".into()));
    }
    Ok(msg)
}

/// Serialized size of `msg` in bits.
pub fn encoded_bits(msg: &Msg, w: &Widths) -> Result<usize> {
    encode(msg, w).map(|b| b.len())
}

fn max_of(width: u32) -> u128 {
    if width >= 128 {
        u128::MAX
    } else {
        (1u128 << width) - 1
    }
}

/// One message of every kind with every field at its maximum width; used
/// to check the budget across scales.
pub fn extremal_messages(w: &Widths) -> Vec<Msg> {
    let id = NodeId(max_of(w.id) as u64);
    let name = EdgeName(max_of(w.name) as u64);
    let key = max_of(w.key);
    let rank = max_of(w.rank) as u32;
    let coef = max_of(w.coef) as u64;
    let pl = Plane::Frag;
    use Msg::*;
    vec![
        Star,
        LowDegree,
        LdAck,
        DegQuery,
        DegReply { high: true },
        Expand { phase: id.0 as u32 },
        DoneByAccept,
        DoneByReject,
        ExpandId { tid: id },
        AcceptId { tid: id },
        RejectedLowerId { tid: id, joined: true },
        RejectSameTree { tid: id },
        Query { plane: pl, tag: id, reset: true, cap: Some(key) },
        Hash { plane: pl, tag: id, a: coef, b: coef, filtered: true, reset: true },
        Index { plane: pl, tag: id, i: w.vec - 1 },
        Verify { plane: pl, tag: id, name, degree: true },
        Result { plane: pl, tag: id, name, high: true },
        SendTrigger { tag: id, r: name.0, phase: id.0 as u32 },
        Terminate { plane: pl, tag: id },
        Trigger { tag: id, phase: id.0 as u32 },
        Ack { plane: pl, tag: id },
        VecUp { plane: pl, tag: id, v: max_of(w.vec) as u64 },
        NameUp { plane: pl, tag: id, x: name.0 },
        VerifyUp { plane: pl, tag: id, count: 3, high: true, base: id.0 },
        RankRequest { tag: id },
        RankUp { tag: id, rank },
        Proceed { tag: id, min_rank: rank },
        PhaseDone { tag: id },
        Connect { id, rank },
        Accept { id, rank },
        IdentityUpdate { id, rank },
        GhsConnect { level: rank },
        GhsInitiate { level: rank, name, find: true },
        GhsTest { level: rank, name },
        GhsAccept,
        GhsReject,
        GhsReport { best: Some(key) },
        GhsChangeRoot,
        GhsHalt,
        GhsAck,
    ]
}
