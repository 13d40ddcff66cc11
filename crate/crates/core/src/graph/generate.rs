use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Graph, NodeId, Scale};
use crate::error::{Error, Result};

/// Graph families addressable from the harness configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    Complete,
    /// Erdős–Rényi `G(n, p)`, possibly disconnected.
    Gnp { p: f64 },
    /// `G(n, p)` united with a random spanning tree.
    GnpConnected { p: f64 },
    Path,
    /// Disjoint connected blocks of the given sizes, each `G(s, p)` plus a
    /// random spanning tree.
    Disconnected { sizes: Vec<usize>, p: f64 },
    /// `K_{n/2}` with a path `P_{n/4}` attached on each side; identities
    /// descend from the left end of the left path.
    Lollipop,
    /// A descending-identity path leading into a `√n`-regular cluster on the
    /// last `n/2` nodes.
    LowIdChain,
}

impl Family {
    /// Parses `name` or `name:arg[:arg...]`, e.g. `gnp:0.3`,
    /// `disconnected:0.5:10,20,30`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut parts = spec.split(':');
        let name = parts.next().unwrap_or_default();
        let arg = parts.next();
        let p = |a: Option<&str>| -> Result<f64> {
            let v: f64 = a
                .ok_or_else(|| Error::Config(format!("family {name} needs a probability")))?
                .parse()
                .map_err(|_| Error::Config(format!("bad probability in {spec}")))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("probability {v} outside [0, 1]")));
            }
            Ok(v)
        };
        Ok(match name {
            "complete" => Family::Complete,
            "gnp" => Family::Gnp { p: p(arg)? },
            "gnp-connected" => Family::GnpConnected { p: p(arg)? },
            "path" => Family::Path,
            "lollipop" => Family::Lollipop,
            "low-id-chain" => Family::LowIdChain,
            "disconnected" => {
                let prob = p(arg)?;
                let sizes = parts
                    .next()
                    .ok_or_else(|| Error::Config("disconnected needs sizes".into()))?
                    .split(',')
                    .map(|s| s.trim().parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::Config(format!("bad sizes in {spec}")))?;
                Family::Disconnected { sizes, p: prob }
            }
            other => return Err(Error::Config(format!("unknown graph family {other:?}"))),
        })
    }

    pub fn label(&self) -> String {
        match self {
            Family::Complete => "complete".into(),
            Family::Gnp { p } => format!("gnp:{p}"),
            Family::GnpConnected { p } => format!("gnp-connected:{p}"),
            Family::Path => "path".into(),
            Family::Lollipop => "lollipop".into(),
            Family::LowIdChain => "low-id-chain".into(),
            Family::Disconnected { sizes, p } => {
                let s: Vec<String> = sizes.iter().map(|x| x.to_string()).collect();
                format!("disconnected:{p}:{}", s.join(","))
            }
        }
    }
}

/// Distinct identities drawn uniformly from `[1, max_id]`.
fn random_ids(scale: Scale, rng: &mut ChaCha8Rng) -> Vec<NodeId> {
    let max = scale.max_id();
    let n = scale.n;
    if (max as usize) <= 4 * n {
        let mut pool: Vec<u64> = (1..=max).collect();
        pool.shuffle(rng);
        pool.truncate(n);
        return pool.into_iter().map(NodeId).collect();
    }
    let mut seen = std::collections::HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let id = rng.gen_range(1..=max);
        if seen.insert(id) {
            out.push(NodeId(id));
        }
    }
    out
}

fn gnp_edges(nodes: &[usize], p: f64, rng: &mut ChaCha8Rng, out: &mut Vec<(usize, usize)>) {
    for (i, &u) in nodes.iter().enumerate() {
        for &v in &nodes[i + 1..] {
            if rng.gen_bool(p) {
                out.push((u, v));
            }
        }
    }
}

fn random_tree(nodes: &[usize], rng: &mut ChaCha8Rng, out: &mut Vec<(usize, usize)>) {
    let mut order = nodes.to_vec();
    order.shuffle(rng);
    for i in 1..order.len() {
        let j = rng.gen_range(0..i);
        out.push((order[j], order[i]));
    }
}

fn dedup(edges: &mut Vec<(usize, usize)>) {
    for e in edges.iter_mut() {
        if e.0 > e.1 {
            *e = (e.1, e.0);
        }
    }
    edges.sort_unstable();
    edges.dedup();
}

/// Builds a graph of the given family. Identities and base weights are
/// seeded random draws from `[1, n^c]`; families that need ordered
/// identities sort them.
pub fn generate(family: &Family, n: usize, c: u32, seed: u64) -> Result<Graph> {
    if n < 1 {
        return Err(Error::Config("n must be at least 1".into()));
    }
    let scale = Scale::new(n, c);
    scale.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids = random_ids(scale, &mut rng);
    let all: Vec<usize> = (0..n).collect();
    let mut edges = Vec::new();
    match family {
        Family::Complete => gnp_edges(&all, 1.0, &mut rng, &mut edges),
        Family::Gnp { p } => gnp_edges(&all, *p, &mut rng, &mut edges),
        Family::GnpConnected { p } => {
            gnp_edges(&all, *p, &mut rng, &mut edges);
            random_tree(&all, &mut rng, &mut edges);
        }
        Family::Path => edges.extend((1..n).map(|i| (i - 1, i))),
        Family::Disconnected { sizes, p } => {
            if sizes.iter().sum::<usize>() != n || sizes.contains(&0) {
                return Err(Error::Config(format!(
                    "component sizes {sizes:?} must be positive and sum to n = {n}"
                )));
            }
            let mut start = 0;
            for &s in sizes {
                let block: Vec<usize> = (start..start + s).collect();
                gnp_edges(&block, *p, &mut rng, &mut edges);
                random_tree(&block, &mut rng, &mut edges);
                start += s;
            }
        }
        Family::Lollipop => {
            ids.sort_unstable_by(|a, b| b.cmp(a));
            let left = n / 4;
            let clique = n / 2;
            edges.extend((1..left).map(|i| (i - 1, i)));
            let k: Vec<usize> = (left..left + clique).collect();
            gnp_edges(&k, 1.0, &mut rng, &mut edges);
            if left > 0 && clique > 0 {
                edges.push((left - 1, left));
            }
            let right_start = left + clique;
            if right_start < n && clique > 0 {
                edges.push((right_start - 1, right_start));
            }
            edges.extend((right_start + 1..n).map(|i| (i - 1, i)));
        }
        Family::LowIdChain => {
            ids.sort_unstable_by(|a, b| b.cmp(a));
            let chain = n - n / 2;
            edges.extend((1..chain).map(|i| (i - 1, i)));
            let cluster: Vec<usize> = (chain..n).collect();
            if let Some(&first) = cluster.first() {
                if chain > 0 {
                    edges.push((chain - 1, first));
                }
            }
            // circulant graph with offsets 1..=d/2 gives a d-regular cluster
            let s = cluster.len();
            let d = ((n as f64).sqrt().round() as usize).min(s.saturating_sub(1));
            for off in 1..=(d / 2).max(1) {
                if s < 2 {
                    break;
                }
                for i in 0..s {
                    edges.push((cluster[i], cluster[(i + off) % s]));
                }
            }
            edges.retain(|(a, b)| a != b);
        }
    }
    dedup(&mut edges);
    let max = scale.max_id();
    let raw: Vec<(usize, usize, u64)> =
        edges.into_iter().map(|(u, v)| (u, v, rng.gen_range(1..=max))).collect();
    Graph::new(scale, ids, &raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complete_edge_count() {
        let g = generate(&Family::Complete, 8, 2, 1).unwrap();
        assert_eq!(g.m(), 28);
    }

    #[test]
    fn path_shape() {
        let g = generate(&Family::Path, 5, 2, 1).unwrap();
        assert_eq!(g.m(), 4);
        assert_eq!((0..5).map(|x| g.degree(x)).max(), Some(2));
    }

    #[test]
    fn lollipop_counts() {
        let g = generate(&Family::Lollipop, 16, 2, 3).unwrap();
        assert_eq!(g.m(), 28 + 3 + 3 + 2);
        assert!(g.is_connected());
        // identities descend along the layout
        assert!(g.ids().windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn low_id_chain_shape() {
        let g = generate(&Family::LowIdChain, 64, 2, 3).unwrap();
        assert!(g.is_connected());
        assert!(g.ids().windows(2).all(|w| w[0] > w[1]));
        for x in 33..64 {
            assert_eq!(g.degree(x), 8, "cluster node {x}");
        }
    }

    #[test]
    fn disconnected_components() {
        let f = Family::Disconnected { sizes: vec![5, 7, 3], p: 0.3 };
        let g = generate(&f, 15, 2, 11).unwrap();
        let comps = g.components();
        let distinct: std::collections::BTreeSet<_> = comps.iter().collect();
        assert_eq!(distinct.len(), 3);
        assert!(matches!(
            generate(&Family::Disconnected { sizes: vec![5, 5], p: 0.3 }, 11, 2, 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn parse_round_trip() {
        for s in ["complete", "gnp:0.25", "gnp-connected:0.5", "path", "lollipop", "low-id-chain", "disconnected:0.5:3,4"] {
            assert_eq!(Family::parse(s).unwrap().label(), s);
        }
        assert!(Family::parse("gnp:1.5").is_err());
        assert!(Family::parse("torus").is_err());
    }

    #[test]
    fn deterministic() {
        let a = generate(&Family::Gnp { p: 0.4 }, 40, 2, 77).unwrap();
        let b = generate(&Family::Gnp { p: 0.4 }, 40, 2, 77).unwrap();
        assert_eq!(a.edges(), b.edges());
        assert_eq!(a.ids(), b.ids());
    }
}
