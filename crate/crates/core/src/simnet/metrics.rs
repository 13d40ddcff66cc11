use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::graph::Graph;
use crate::wire::{Msg, KINDS};

/// Message accounting for one run. Counts are taken at delivery.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Metrics {
    per_edge: Vec<u64>,
    per_kind: [u64; KINDS.len()],
    pub total: u64,
    pub max_payload_bits: usize,
}

impl Metrics {
    pub fn new(edges: usize) -> Self {
        Metrics { per_edge: vec![0; edges], per_kind: [0; KINDS.len()], total: 0, max_payload_bits: 0 }
    }

    pub(crate) fn record(&mut self, edge: usize, msg: &Msg) {
        self.per_edge[edge] += 1;
        self.per_kind[msg.tag() as usize] += 1;
        self.total += 1;
    }

    pub(crate) fn note_bits(&mut self, bits: usize) {
        self.max_payload_bits = self.max_payload_bits.max(bits);
    }

    pub fn edge_count(&self, edge: usize) -> u64 {
        self.per_edge[edge]
    }

    pub fn kind_count(&self, kind: &str) -> u64 {
        KINDS.iter().position(|k| *k == kind).map_or(0, |i| self.per_kind[i])
    }

    /// Non-zero per-kind counts by name.
    pub fn per_kind(&self) -> BTreeMap<String, u64> {
        KINDS
            .iter()
            .zip(self.per_kind.iter())
            .filter(|(_, &c)| c > 0)
            .map(|(k, &c)| (k.to_string(), c))
            .collect()
    }

    pub fn sum_per_edge(&self) -> u64 {
        self.per_edge.iter().sum()
    }

    /// Adds another run's counts (used when stages run back to back).
    pub fn absorb(&mut self, other: &Metrics) {
        for (a, b) in self.per_edge.iter_mut().zip(&other.per_edge) {
            *a += b;
        }
        for (a, b) in self.per_kind.iter_mut().zip(&other.per_kind) {
            *a += b;
        }
        self.total += other.total;
        self.max_payload_bits = self.max_payload_bits.max(other.max_payload_bits);
    }

    pub fn summary(&self, g: &Graph) -> MetricsSummary {
        MetricsSummary {
            total: self.total,
            max_payload_bits: self.max_payload_bits,
            per_kind: self.per_kind(),
            busiest_edge: self
                .per_edge
                .iter()
                .enumerate()
                .max_by_key(|(_, &c)| c)
                .filter(|(_, &c)| c > 0)
                .map(|(e, &c)| (g.edge(e).name.0, c)),
            edges_used: self.per_edge.iter().filter(|&&c| c > 0).count(),
        }
    }
}

/// Serializable digest of [`Metrics`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub total: u64,
    pub max_payload_bits: usize,
    pub per_kind: BTreeMap<String, u64>,
    pub busiest_edge: Option<(u64, u64)>,
    pub edges_used: usize,
}
