use std::collections::{HashMap, HashSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Heavy-tail cap for the reordering adversary.
const REORDER_CAP: u64 = 1 << 20;

/// How long each message spends in flight. Virtual time only orders
/// deliveries; protocols never observe it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum DelayPolicy {
    /// i.i.d. delays uniform in `[1, max]`.
    Uniform { max: u64 },
    /// Uniform delays, but deliveries on each directed edge keep send order.
    FifoPerEdge { max: u64 },
    /// i.i.d. heavy-tailed delays `⌈u^{-2}⌉`, which reorder aggressively.
    ReorderAdversary,
    /// Uniform delays multiplied by `factor` for messages into `nodes`.
    RegionStall { nodes: Vec<usize>, factor: u64, max: u64 },
}

impl Default for DelayPolicy {
    fn default() -> Self {
        DelayPolicy::Uniform { max: 100 }
    }
}

impl DelayPolicy {
    /// Parses `uniform[:max]`, `fifo[:max]`, `reorder`,
    /// `region-stall[:factor[:i,j,...]]`. A region stall without a node
    /// list stalls the lower half of the node indices.
    pub fn parse(spec: &str, n: usize) -> Result<Self> {
        let mut parts = spec.split(':');
        let name = parts.next().unwrap_or_default();
        let num = |s: Option<&str>, default: u64| -> Result<u64> {
            match s {
                None | Some("") => Ok(default),
                Some(t) => t
                    .parse::<u64>()
                    .ok()
                    .filter(|&v| v >= 1)
                    .ok_or_else(|| Error::Config(format!("bad number {t:?} in policy {spec:?}"))),
            }
        };
        Ok(match name {
            "uniform" => DelayPolicy::Uniform { max: num(parts.next(), 100)? },
            "fifo" | "fifo-per-edge" => DelayPolicy::FifoPerEdge { max: num(parts.next(), 100)? },
            "reorder" | "reorder-adversary" => DelayPolicy::ReorderAdversary,
            "region-stall" => {
                let factor = num(parts.next(), 50)?;
                let nodes = match parts.next() {
                    None | Some("") => (0..n / 2).collect(),
                    Some(list) => list
                        .split(',')
                        .map(|t| t.trim().parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| Error::Config(format!("bad node list in {spec:?}")))?,
                };
                if let Some(&bad) = nodes.iter().find(|&&x| x >= n) {
                    return Err(Error::Config(format!("stalled node {bad} out of range")));
                }
                DelayPolicy::RegionStall { nodes, factor, max: 100 }
            }
            other => return Err(Error::Config(format!("unknown delay policy {other:?}"))),
        })
    }

    pub fn label(&self) -> String {
        match self {
            DelayPolicy::Uniform { max } => format!("uniform:{max}"),
            DelayPolicy::FifoPerEdge { max } => format!("fifo:{max}"),
            DelayPolicy::ReorderAdversary => "reorder".into(),
            DelayPolicy::RegionStall { nodes, factor, .. } => format!("region-stall:{factor}:{}", nodes.len()),
        }
    }
}

/// Mutable per-run scheduling state for a policy.
pub(crate) struct Scheduler {
    policy: DelayPolicy,
    stalled: HashSet<usize>,
    last: HashMap<(usize, usize), u64>,
}

impl Scheduler {
    pub fn new(policy: DelayPolicy) -> Self {
        let stalled = match &policy {
            DelayPolicy::RegionStall { nodes, .. } => nodes.iter().copied().collect(),
            _ => HashSet::new(),
        };
        Scheduler { policy, stalled, last: HashMap::new() }
    }

    /// Delivery time for a message sent at `now`.
    pub fn delivery_time(&mut self, rng: &mut ChaCha8Rng, now: u64, src: usize, dst: usize) -> u64 {
        match self.policy {
            DelayPolicy::Uniform { max } => now + rng.gen_range(1..=max),
            DelayPolicy::FifoPerEdge { max } => {
                let t = now + rng.gen_range(1..=max);
                let slot = self.last.entry((src, dst)).or_insert(0);
                *slot = (*slot).max(t);
                *slot
            }
            DelayPolicy::ReorderAdversary => {
                let u: f64 = rng.gen_range(f64::EPSILON..=1.0);
                now + ((1.0 / (u * u)).ceil() as u64).min(REORDER_CAP)
            }
            DelayPolicy::RegionStall { factor, max, .. } => {
                let d = rng.gen_range(1..=max);
                now + if self.stalled.contains(&dst) { d * factor } else { d }
            }
        }
    }
}
