//! Flat `key = value` experiment files.
//!
//! ```text
//! # findst on cliques
//! protocol = findst
//! family   = complete
//! n        = 128, 256, 512
//! seeds    = 0..10
//! graph_seed = 7
//! policy   = uniform:100 | reorder
//! check    = phase
//! out      = runs/cliques
//! ```
//!
//! `n` and `seeds` take comma-separated integers or `a..b` ranges. `policy`
//! takes several policies separated by `|`, because policy and family
//! specifications use commas themselves.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::inspector::CheckLevel;
use crate::error::{Error, Result};
use crate::graph::Family;
use crate::simnet::DelayPolicy;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    Findst,
    /// MST over a breadth-first tree the harness hands in.
    Findmst,
    Msf,
    /// findst, then findmst over its tree.
    Pipeline,
}

impl ProtocolKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "findst" => ProtocolKind::Findst,
            "findmst" => ProtocolKind::Findmst,
            "msf" => ProtocolKind::Msf,
            "pipeline" => ProtocolKind::Pipeline,
            other => return Err(Error::Config(format!("unknown protocol {other:?}"))),
        })
    }

    pub fn label(self) -> &'static str {
        match self {
            ProtocolKind::Findst => "findst",
            ProtocolKind::Findmst => "findmst",
            ProtocolKind::Msf => "msf",
            ProtocolKind::Pipeline => "pipeline",
        }
    }
}

/// One experiment: the cross product of `ns`, `seeds` and `policies`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub protocol: ProtocolKind,
    pub family: Family,
    pub ns: Vec<usize>,
    pub c: u32,
    pub seeds: Vec<u64>,
    /// One fixed graph for every seed instead of one graph per seed.
    pub graph_seed: Option<u64>,
    pub policies: Vec<String>,
    pub check: CheckLevel,
    pub out: Option<PathBuf>,
    /// Leader index for findst and the pipeline.
    pub leader: usize,
    /// Upper bound on the fitted slope for the `scaling` subcommand.
    pub slope_bound: Option<f64>,
    pub event_cap: Option<u64>,
    /// Hash functions per cut estimate, as a multiple of `c·log n`.
    pub approx_reps: Option<u32>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            protocol: ProtocolKind::Findst,
            family: Family::Complete,
            ns: vec![64],
            c: 2,
            seeds: vec![0],
            graph_seed: None,
            policies: vec!["uniform:100".into()],
            check: CheckLevel::Phase,
            out: None,
            leader: 0,
            slope_bound: None,
            event_cap: None,
            approx_reps: None,
        }
    }
}

fn int_list(key: &str, v: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("bad list for {key}: {v:?}"));
    let mut out = Vec::new();
    for item in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((a, b)) = item.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            let b: u64 = b.trim().parse().map_err(|_| bad())?;
            out.extend(a..b);
        } else {
            out.push(item.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: i + 1, msg: "expected key = value".into() })?;
            if kv.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Parse { line: i + 1, msg: format!("duplicate key {}", k.trim()) });
            }
        }
        let mut cfg = ExperimentConfig::default();
        for (k, v) in &kv {
            match k.as_str() {
                "protocol" => cfg.protocol = ProtocolKind::parse(v)?,
                "family" => cfg.family = Family::parse(v)?,
                "n" => cfg.ns = int_list(k, v)?.into_iter().map(|x| x as usize).collect(),
                "c" => cfg.c = v.parse().map_err(|_| Error::Config(format!("bad c {v:?}")))?,
                "seeds" => cfg.seeds = int_list(k, v)?,
                "graph_seed" => {
                    cfg.graph_seed = Some(v.parse().map_err(|_| Error::Config(format!("bad graph_seed {v:?}")))?)
                }
                "policy" => cfg.policies = v.split('|').map(|s| s.trim().to_string()).collect(),
                "check" => cfg.check = parse_check(v)?,
                "out" => cfg.out = Some(PathBuf::from(v)),
                "leader" => cfg.leader = v.parse().map_err(|_| Error::Config(format!("bad leader {v:?}")))?,
                "slope_bound" => {
                    cfg.slope_bound = Some(v.parse().map_err(|_| Error::Config(format!("bad slope_bound {v:?}")))?)
                }
                "event_cap" => {
                    cfg.event_cap = Some(v.parse().map_err(|_| Error::Config(format!("bad event_cap {v:?}")))?)
                }
                "approx_reps" => {
                    cfg.approx_reps = Some(v.parse().map_err(|_| Error::Config(format!("bad approx_reps {v:?}")))?)
                }
                other => return Err(Error::Config(format!("unknown key {other:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.c == 0 {
            return Err(Error::Config("c must be at least 1".into()));
        }
        if self.ns.contains(&0) {
            return Err(Error::Config("n must be positive".into()));
        }
        if let Family::Disconnected { sizes, .. } = &self.family {
            let total: usize = sizes.iter().sum();
            if let Some(&n) = self.ns.iter().find(|&&n| n != total) {
                return Err(Error::Config(format!("component sizes sum to {total}, n is {n}")));
            }
        }
        for &n in &self.ns {
            for p in &self.policies {
                DelayPolicy::parse(p, n)?;
            }
            if matches!(self.protocol, ProtocolKind::Findst | ProtocolKind::Pipeline) && self.leader >= n {
                return Err(Error::Config(format!("leader {} out of range for n = {n}", self.leader)));
            }
        }
        if self.policies.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("empty policy or seed list".into()));
        }
        Ok(())
    }
}

pub fn parse_check(v: &str) -> Result<CheckLevel> {
    CheckLevel::parse(v).ok_or_else(|| Error::Config(format!("check must be off, phase or full, not {v:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_file() {
        let cfg = ExperimentConfig::parse(
            "protocol = msf\nfamily = disconnected:0.5:3,5\n# comment\nn = 8\nseeds = 0..3, 9\n\
             policy = uniform:10 | reorder\ncheck = full\nout = x\n",
        )
        .unwrap();
        assert_eq!(cfg.protocol, ProtocolKind::Msf);
        assert_eq!(cfg.seeds, vec![0, 1, 2, 9]);
        assert_eq!(cfg.policies, vec!["uniform:10", "reorder"]);
        assert_eq!(cfg.check, CheckLevel::Full);
    }

    #[test]
    fn errors_are_config_errors() {
        for bad in [
            "protocol = kruskal",
            "n = 8\nfamily = disconnected:0.5:3,4",
            "n = ",
            "policy = sometimes",
            "c = 0",
            "colour = blue",
            "just text",
            "n = 4\nn = 5",
        ] {
            let e = ExperimentConfig::parse(bad).unwrap_err();
            assert!(matches!(e, Error::Config(_) | Error::Parse { .. }), "{bad}: {e}");
        }
    }
}
