use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::inspector::{PhaseStat, Violation};
use crate::error::{Error, Result};
use crate::findst::PhaseRecord;
use crate::graph::EdgeName;
use crate::simnet::MetricsSummary;
use crate::wire::KINDS;

/// Bumped whenever a JSON field or CSV column changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Verdict {
    Match,
    Mismatch { missing: Vec<u64>, extra: Vec<u64> },
    /// The run ended without an output to compare.
    NoOutput,
}

impl Verdict {
    pub fn compare(got: &BTreeSet<EdgeName>, want: &BTreeSet<EdgeName>) -> Verdict {
        if got == want {
            return Verdict::Match;
        }
        Verdict::Mismatch {
            missing: want.difference(got).map(|e| e.0).collect(),
            extra: got.difference(want).map(|e| e.0).collect(),
        }
    }

    pub fn is_match(&self) -> bool {
        *self == Verdict::Match
    }
}

/// Everything recorded about one `(n, seed, policy)` run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub protocol: String,
    pub family: String,
    pub n: usize,
    pub m: usize,
    pub c: u32,
    pub seed: u64,
    pub graph_seed: u64,
    pub policy: String,
    pub check: String,
    pub metrics: MetricsSummary,
    /// Deliveries the simulator performed, summed over stages.
    pub deliveries: u64,
    /// findst phases (leader view) plus findmst phases, or the largest
    /// phase count reached by any msf leader.
    pub phases: u32,
    pub st_log: Vec<PhaseRecord>,
    pub phase_stats: Vec<PhaseStat>,
    pub output_edges: Vec<u64>,
    pub oracle: Verdict,
    pub violations: Vec<Violation>,
    /// Simulator error, if the run did not reach quiescence cleanly.
    pub error: Option<String>,
    pub livelock: bool,
    pub stars: usize,
    pub wallclock_ms: u64,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// Exit status for this run alone: 5 livelock or stall, 4 invariant
    /// violation, 3 oracle mismatch, 0 otherwise.
    pub fn status(&self) -> i32 {
        if self.livelock {
            5
        } else if !self.violations.is_empty() {
            4
        } else if !self.oracle.is_match() {
            3
        } else {
            0
        }
    }
}

/// CSV header: fixed columns, then one count column per message kind in
/// wire-tag order, then phases, oracle_match and wallclock_ms.
pub fn csv_header() -> Vec<String> {
    let mut h: Vec<String> =
        ["n", "m", "protocol", "policy", "seed", "total_messages"].iter().map(|s| s.to_string()).collect();
    h.extend(KINDS.iter().map(|k| format!("msgs_{k}")));
    h.extend(["phases", "oracle_match", "wallclock_ms"].iter().map(|s| s.to_string()));
    h
}

pub fn csv_row(r: &RunReport) -> Vec<String> {
    let mut row = vec![
        r.n.to_string(),
        r.m.to_string(),
        r.protocol.clone(),
        r.policy.clone(),
        r.seed.to_string(),
        r.metrics.total.to_string(),
    ];
    row.extend(KINDS.iter().map(|k| r.metrics.per_kind.get(*k).copied().unwrap_or(0).to_string()));
    row.push(r.phases.to_string());
    row.push(r.oracle.is_match().to_string());
    row.push(r.wallclock_ms.to_string());
    row
}

pub fn write_csv<W: Write>(reports: &[RunReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(csv_header()).map_err(io)?;
    for r in reports {
        w.write_record(csv_row(r)).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// One CSV row as read back by the scaling check.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRun {
    pub n: usize,
    pub protocol: String,
    pub seed: u64,
    pub total_messages: u64,
    pub phases: u32,
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<CsvRun>> {
    let mut rd = csv::Reader::from_reader(input);
    let headers = rd.headers().map_err(|e| Error::Config(e.to_string()))?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Config(format!("CSV lacks a {name} column")))
    };
    let (cn, cp, cs, ct, cph) = (col("n")?, col("protocol")?, col("seed")?, col("total_messages")?, col("phases")?);
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| Error::Config(e.to_string()))?;
        let num = |c: usize| -> Result<u64> {
            rec.get(c)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse { line: i + 2, msg: format!("bad number in column {}", &headers[c]) })
        };
        out.push(CsvRun {
            n: num(cn)? as usize,
            protocol: rec.get(cp).unwrap_or_default().to_string(),
            seed: num(cs)?,
            total_messages: num(ct)?,
            phases: num(cph)? as u32,
        });
    }
    Ok(out)
}
