//! Graph model shared by every protocol and by the sequential oracle.
//!
//! Nodes are addressed internally by a dense index (`usize`); the protocol
//! layer only ever sees [`NodeId`]s, which are the adversary-assigned
//! identities from `[1, n^c]`.

mod generate;
mod io;
mod oracle;

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use generate::{generate, Family};
pub use io::{read_graph, write_graph};
pub use oracle::{oracle_msf, DisjointSets};

/// Node identity from `[1, n^c]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Canonical edge name `id(x) * 2^b + id(y)` with `id(x) < id(y)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeName(pub u64);

impl EdgeName {
    /// Splits the name back into its two endpoint identities.
    pub fn endpoints(self, id_bits: u32) -> (NodeId, NodeId) {
        let mask = (1u64 << id_bits) - 1;
        (NodeId(self.0 >> id_bits), NodeId(self.0 & mask))
    }
}

impl fmt::Display for EdgeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Edge weight made unique by appending the endpoint identities.
///
/// Ordering is lexicographic on `(base, lo, hi)`, which is total over the
/// edges of a simple graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Weight {
    pub base: u64,
    pub lo: NodeId,
    pub hi: NodeId,
}

impl Weight {
    pub fn new(base: u64, a: NodeId, b: NodeId) -> Self {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        Weight { base, lo, hi }
    }

    /// Packs the weight into a single integer with the same order.
    pub fn key(&self, id_bits: u32) -> u128 {
        ((self.base as u128) << (2 * id_bits)) | ((self.lo.0 as u128) << id_bits) | self.hi.0 as u128
    }
}

/// Size parameters every node knows: `n` and the exponent `c`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scale {
    pub n: usize,
    pub c: u32,
}

impl Scale {
    pub fn new(n: usize, c: u32) -> Self {
        Scale { n, c }
    }

    /// `⌈log₂ n⌉`, never below 1.
    pub fn log_n(&self) -> u32 {
        ceil_log2(self.n as u64).max(1)
    }

    /// Bits of a node identity: `c·⌈log₂ n⌉`.
    pub fn id_bits(&self) -> u32 {
        self.c * self.log_n()
    }

    /// Largest identity / base weight that fits in `id_bits`.
    pub fn max_id(&self) -> u64 {
        let cap = (1u64 << self.id_bits()) - 1;
        let mut pow: u64 = 1;
        for _ in 0..self.c {
            pow = pow.saturating_mul(self.n.max(1) as u64);
        }
        pow.min(cap)
    }

    /// Hash output width `l = ⌈2·c·log₂ n⌉`.
    pub fn sketch_bits(&self) -> u32 {
        if self.n < 2 {
            return 1;
        }
        let l = (2.0 * self.c as f64 * (self.n as f64).log2()).ceil() as u32;
        l.clamp(1, 2 * self.id_bits())
    }

    /// `⌈c·log₂ n⌉`, the repetition count used by ApproxCut and the
    /// threshold detector.
    pub fn c_log_n(&self) -> u32 {
        if self.n < 2 {
            return 1;
        }
        ((self.c as f64 * (self.n as f64).log2()).ceil() as u32).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.c < 1 {
            return Err(Error::Config("c must be at least 1".into()));
        }
        if self.id_bits() > 30 {
            return Err(Error::Config(format!(
                "c·⌈log₂ n⌉ = {} exceeds the supported 30 bits",
                self.id_bits()
            )));
        }
        Ok(())
    }
}

pub fn ceil_log2(x: u64) -> u32 {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros()
    }
}

/// Order-independent canonical edge name.
pub fn edge_name(u: NodeId, v: NodeId, id_bits: u32) -> Result<EdgeName> {
    if u == v {
        return Err(Error::InvalidEdge(format!("self-loop at {u}")));
    }
    let (lo, hi) = if u < v { (u, v) } else { (v, u) };
    Ok(EdgeName((lo.0 << id_bits) | hi.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DegreeClass {
    Low,
    High,
}

/// Degree threshold `√n · (log₂ n)^{3/2}`.
pub fn degree_threshold(n: usize) -> f64 {
    if n <= 3 {
        return f64::INFINITY;
    }
    let n = n as f64;
    n.sqrt() * n.log2().powf(1.5)
}

pub fn classify_degree(degree: usize, n: usize) -> DegreeClass {
    if (degree as f64) < degree_threshold(n) {
        DegreeClass::Low
    } else {
        DegreeClass::High
    }
}

/// Star selection probability `1/√(n·log₂ n)`.
pub fn star_probability(n: usize) -> f64 {
    if n < 2 {
        return 1.0;
    }
    let n = n as f64;
    (1.0 / (n * n.log2()).sqrt()).min(1.0)
}

/// Independent per-node coin flips with probability `p`, in index order.
pub fn select_stars_with(node_count: usize, p: f64, seed: u64) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5354_4152_5f53_454c);
    (0..node_count).map(|_| rng.gen_bool(p.clamp(0.0, 1.0))).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Adj {
    pub nbr: usize,
    pub edge: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: Weight,
    pub name: EdgeName,
}

impl Edge {
    pub fn other(&self, x: usize) -> usize {
        if self.u == x {
            self.v
        } else {
            self.u
        }
    }
}

/// Immutable weighted undirected simple graph.
#[derive(Clone, Debug)]
pub struct Graph {
    scale: Scale,
    ids: Vec<NodeId>,
    index: std::collections::HashMap<NodeId, usize>,
    adj: Vec<Vec<Adj>>,
    edges: Vec<Edge>,
}

impl Graph {
    /// Builds a graph from node identities and `(u, v, base_weight)` index
    /// triples.
    pub fn new(scale: Scale, ids: Vec<NodeId>, raw_edges: &[(usize, usize, u64)]) -> Result<Self> {
        scale.validate()?;
        if ids.len() != scale.n {
            return Err(Error::Config(format!("{} ids for n = {}", ids.len(), scale.n)));
        }
        let max_id = scale.max_id();
        let mut seen = std::collections::HashSet::with_capacity(ids.len());
        for id in &ids {
            if id.0 < 1 || id.0 > max_id {
                return Err(Error::Config(format!("id {id} outside [1, {max_id}]")));
            }
            if !seen.insert(*id) {
                return Err(Error::Config(format!("duplicate id {id}")));
            }
        }
        let bits = scale.id_bits();
        let mut adj = vec![Vec::new(); scale.n];
        let mut edges = Vec::with_capacity(raw_edges.len());
        let mut names = std::collections::HashSet::with_capacity(raw_edges.len());
        for &(u, v, base) in raw_edges {
            if u >= scale.n || v >= scale.n {
                return Err(Error::InvalidEdge(format!("endpoint out of range: ({u}, {v})")));
            }
            let name = edge_name(ids[u], ids[v], bits)?;
            if !names.insert(name) {
                return Err(Error::InvalidEdge(format!("parallel edge ({}, {})", ids[u], ids[v])));
            }
            if base < 1 || base > max_id {
                return Err(Error::InvalidEdge(format!("weight {base} outside [1, {max_id}]")));
            }
            let e = edges.len();
            edges.push(Edge {
                u,
                v,
                weight: Weight::new(base, ids[u], ids[v]),
                name,
            });
            adj[u].push(Adj { nbr: v, edge: e });
            adj[v].push(Adj { nbr: u, edge: e });
        }
        let index = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        Ok(Graph {
            scale,
            ids,
            index,
            adj,
            edges,
        })
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn n(&self) -> usize {
        self.scale.n
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn id(&self, x: usize) -> NodeId {
        self.ids[x]
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn neighbors(&self, x: usize) -> &[Adj] {
        &self.adj[x]
    }

    pub fn degree(&self, x: usize) -> usize {
        self.adj[x].len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    pub fn classify(&self, x: usize) -> DegreeClass {
        classify_degree(self.degree(x), self.n())
    }

    /// Connected component label per node.
    pub fn components(&self) -> Vec<usize> {
        let mut dsu = DisjointSets::new(self.n());
        for e in &self.edges {
            dsu.union(e.u, e.v);
        }
        let mut label = vec![usize::MAX; self.n()];
        let mut next = 0;
        (0..self.n())
            .map(|x| {
                let r = dsu.find(x);
                if label[r] == usize::MAX {
                    label[r] = next;
                    next += 1;
                }
                label[r]
            })
            .collect()
    }

    pub fn is_connected(&self) -> bool {
        self.n() <= 1 || self.components().iter().all(|&c| c == 0)
    }

    pub fn edge_by_name(&self, name: EdgeName) -> Option<&Edge> {
        let (a, b) = name.endpoints(self.scale.id_bits());
        let x = self.index_of(a)?;
        self.adj[x]
            .iter()
            .map(|a| &self.edges[a.edge])
            .find(|e| e.name == name && (self.ids[e.u] == b || self.ids[e.v] == b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_name_examples() {
        assert_eq!(edge_name(NodeId(3), NodeId(5), 4).unwrap(), EdgeName(53));
        assert_eq!(edge_name(NodeId(5), NodeId(3), 4).unwrap(), EdgeName(53));
        assert_eq!(edge_name(NodeId(1), NodeId(2), 8).unwrap(), EdgeName(258));
        assert!(matches!(edge_name(NodeId(4), NodeId(4), 8), Err(Error::InvalidEdge(_))));
    }

    #[test]
    fn edge_name_injective_small_n() {
        for n in 2..=64usize {
            let s = Scale::new(n, 2);
            let ids: Vec<NodeId> = (1..=n as u64).map(NodeId).collect();
            let mut seen = std::collections::HashSet::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    let name = edge_name(ids[i], ids[j], s.id_bits()).unwrap();
                    assert!(seen.insert(name), "collision at n={n}");
                    assert_eq!(name.endpoints(s.id_bits()), (ids[i], ids[j]));
                }
            }
        }
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify_degree(100, 256), DegreeClass::Low);
        assert_eq!(classify_degree(400, 256), DegreeClass::High);
        assert_eq!(classify_degree(3, 4), DegreeClass::Low);
        for n in 1..=3 {
            assert_eq!(classify_degree(n, n), DegreeClass::Low);
        }
    }

    #[test]
    fn classify_matches_threshold_arithmetic() {
        for n in 4..=4096usize {
            let t = (n as f64).sqrt() * (n as f64).log2().powf(1.5);
            for d in [0, t.floor() as usize, t.ceil() as usize, n - 1] {
                let want = if (d as f64) < t { DegreeClass::Low } else { DegreeClass::High };
                assert_eq!(classify_degree(d, n), want, "n={n} d={d}");
            }
        }
    }

    #[test]
    fn star_probability_examples() {
        let p = star_probability(256);
        assert!((p - 0.0221).abs() < 1e-4);
        assert!((256.0 * p - 5.66).abs() < 0.01);
    }

    #[test]
    fn star_selection_reproducible() {
        assert_eq!(select_stars_with(500, 0.1, 9), select_stars_with(500, 0.1, 9));
        assert_ne!(select_stars_with(500, 0.1, 9), select_stars_with(500, 0.1, 10));
    }

    #[test]
    fn star_count_monte_carlo() {
        let n = 256;
        let p = star_probability(n);
        let seeds = 10_000u64;
        let total: usize = (0..seeds)
            .map(|s| select_stars_with(n, p, s).iter().filter(|&&b| b).count())
            .sum();
        let mean = total as f64 / seeds as f64;
        let sigma = (n as f64 * p * (1.0 - p) / seeds as f64).sqrt();
        assert!((mean - n as f64 * p).abs() <= 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn star_inclusion_independent_chi_square() {
        // 2x2 contingency of (node 0 star, node 1 star) over seeds.
        let p = 0.3;
        let mut table = [[0f64; 2]; 2];
        let runs = 20_000u64;
        for s in 0..runs {
            let v = select_stars_with(2, p, s);
            table[v[0] as usize][v[1] as usize] += 1.0;
        }
        let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
        let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
        let mut chi = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let e = rows[i] * cols[j] / runs as f64;
                chi += (table[i][j] - e).powi(2) / e;
            }
        }
        // 1 dof, p = 0.001 critical value.
        assert!(chi < 10.83, "chi2 = {chi}");
    }

    #[test]
    fn scale_widths() {
        let s = Scale::new(256, 2);
        assert_eq!(s.id_bits(), 16);
        assert_eq!(s.sketch_bits(), 32);
        assert_eq!(s.c_log_n(), 16);
        assert_eq!(s.max_id(), 65535);
        assert_eq!(Scale::new(3, 2).max_id(), 9);
    }

    #[test]
    fn rejects_bad_graphs() {
        let s = Scale::new(3, 2);
        let ids = vec![NodeId(1), NodeId(2), NodeId(3)];
        assert!(Graph::new(s, ids.clone(), &[(0, 0, 1)]).is_err());
        assert!(Graph::new(s, ids.clone(), &[(0, 1, 1), (1, 0, 2)]).is_err());
        assert!(Graph::new(s, vec![NodeId(1), NodeId(1), NodeId(3)], &[]).is_err());
        let g = Graph::new(s, ids, &[(0, 1, 1), (1, 2, 2)]).unwrap();
        assert_eq!(g.m(), 2);
        assert!(g.is_connected());
        let e = g.edge(1);
        assert_eq!(g.edge_by_name(e.name).unwrap().weight, e.weight);
    }
}
