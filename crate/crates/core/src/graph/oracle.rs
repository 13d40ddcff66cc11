use std::collections::BTreeSet;

use super::{EdgeName, Graph};

/// Union-find with path halving and union by size.
#[derive(Clone, Debug)]
pub struct DisjointSets {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSets {
    pub fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false if `a` and `b` were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
        true
    }
}

/// Sequential Kruskal: the unique minimum spanning forest under the total
/// weight order.
pub fn oracle_msf(g: &Graph) -> BTreeSet<EdgeName> {
    let mut order: Vec<usize> = (0..g.m()).collect();
    order.sort_unstable_by_key(|&e| g.edge(e).weight);
    let mut dsu = DisjointSets::new(g.n());
    order
        .into_iter()
        .filter(|&e| dsu.union(g.edge(e).u, g.edge(e).v))
        .map(|e| g.edge(e).name)
        .collect()
}
