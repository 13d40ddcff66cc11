//! Experiment orchestration: builds graphs, runs protocols under the
//! inspector, compares outputs with the sequential oracle and writes
//! reports.

pub mod config;
pub mod inspector;
pub mod report;
pub mod scaling;

use std::collections::{BTreeSet, VecDeque};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

pub use config::{ExperimentConfig, ProtocolKind};
pub use inspector::{Check, CheckLevel, Inspector, PhaseKind, PhaseStat, Violation};
pub use report::{RunReport, Verdict, SCHEMA_VERSION};

use crate::error::{Error, Result};
use crate::findmst::{mst_edges, FindMstNode};
use crate::findst::{choose_stars, FindStNode, FindStParams, SpanningTree};
use crate::graph::{generate, oracle_msf, EdgeName, Family, Graph};
use crate::msf::{forest_edges, MsfNode};
use crate::simnet::{run, DelayPolicy, Fault, Metrics, SimConfig};

/// A single run, fully specified.
#[derive(Clone, Debug)]
pub struct RunSpec {
    pub protocol: ProtocolKind,
    pub family: Family,
    pub n: usize,
    pub c: u32,
    /// Seeds the schedule, node coins and star selection.
    pub seed: u64,
    /// Seeds graph generation; `None` uses `seed`.
    pub graph_seed: Option<u64>,
    pub policy: String,
    pub check: CheckLevel,
    pub leader: usize,
    pub event_cap: Option<u64>,
    pub approx_reps: Option<u32>,
    /// Test-only interference, applied to every stage.
    pub faults: Vec<Fault>,
}

impl RunSpec {
    pub fn new(protocol: ProtocolKind, family: Family, n: usize, seed: u64) -> Self {
        RunSpec {
            protocol,
            family,
            n,
            c: 2,
            seed,
            graph_seed: None,
            policy: "uniform:100".into(),
            check: CheckLevel::Phase,
            leader: 0,
            event_cap: None,
            approx_reps: None,
            faults: Vec::new(),
        }
    }
}

/// What one protocol stage left behind.
struct Stage {
    metrics: Metrics,
    deliveries: u64,
    error: Option<Error>,
}

impl Stage {
    fn of<P>(out: &crate::simnet::SimOutcome<P>) -> Self {
        Stage { metrics: out.metrics.clone(), deliveries: out.deliveries, error: out.error.clone() }
    }
}

/// Breadth-first tree from node 0; the graph must be connected.
pub fn bfs_tree(g: &Graph) -> Result<SpanningTree> {
    let n = g.n();
    let mut parent = vec![None; n];
    let mut children = vec![Vec::new(); n];
    let mut seen = vec![false; n];
    let mut q = VecDeque::from([0]);
    seen[0] = true;
    while let Some(x) = q.pop_front() {
        let mut nbrs: Vec<usize> = g.neighbors(x).iter().map(|a| a.nbr).collect();
        nbrs.sort_unstable();
        for v in nbrs {
            if !seen[v] {
                seen[v] = true;
                parent[v] = Some(x);
                children[x].push(v);
                q.push_back(v);
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Config("the MST stage needs a connected graph".into()));
    }
    SpanningTree::from_links(g, parent, children).map_err(Error::Config)
}

fn is_livelock(e: &Option<Error>) -> bool {
    matches!(e, Some(Error::Livelock { .. } | Error::Stalled { .. }))
}

/// Executes one run. Only configuration problems are returned as errors;
/// protocol failures end up in the report.
pub fn execute(spec: &RunSpec) -> Result<RunReport> {
    let started = Instant::now();
    let g = generate(&spec.family, spec.n, spec.c, spec.graph_seed.unwrap_or(spec.seed))?;
    execute_inner(spec, &g, spec.family.label(), started)
}

/// Like [`execute`] on a caller-supplied graph; `spec.family`, `spec.n`,
/// `spec.c` and `spec.graph_seed` are ignored and the report's family
/// reads `explicit`.
pub fn execute_graph(spec: &RunSpec, g: &Graph) -> Result<RunReport> {
    let started = Instant::now();
    let spec = RunSpec { n: g.n(), c: g.scale().c, graph_seed: Some(0), ..spec.clone() };
    execute_inner(&spec, g, "explicit".into(), started)
}

fn execute_inner(spec: &RunSpec, g: &Graph, family: String, started: Instant) -> Result<RunReport> {
    let policy = DelayPolicy::parse(&spec.policy, spec.n)?;
    let mut sim = SimConfig::new(policy.clone(), spec.seed);
    sim.event_cap = spec.event_cap;
    sim.faults = spec.faults.clone();
    let mut params = FindStParams::of(g);
    if let Some(k) = spec.approx_reps {
        params.approx_reps = k.max(1) * g.scale().c_log_n();
    }
    let stars = choose_stars(g, spec.seed);
    let mut insp = Inspector::new(spec.check);
    let want = oracle_msf(g);

    let mut stages = Vec::new();
    let mut phases = 0;
    let mut st_log = Vec::new();
    let mut output: Option<BTreeSet<EdgeName>> = None;
    let mut tree_ok = false;

    match spec.protocol {
        ProtocolKind::Findst | ProtocolKind::Pipeline => {
            if spec.leader >= g.n() {
                return Err(Error::Config(format!("leader {} out of range", spec.leader)));
            }
            let nodes = FindStNode::network(g, spec.leader, &stars, params);
            let out = run(g, nodes, &sim, |g, ns: &[FindStNode], cp| insp.findst(g, ns, cp));
            insp.findst_final(g, &out.nodes);
            stages.push(Stage::of(&out));
            phases += out.nodes[spec.leader].phase;
            st_log = out.nodes[spec.leader].log.clone();
            let tree = SpanningTree::from_nodes(g, &out.nodes).ok().filter(|_| out.ok());
            if let Some(tree) = tree {
                tree_ok = true;
                if spec.protocol == ProtocolKind::Findst {
                    output = Some(tree.edges(g));
                } else {
                    let nodes = FindMstNode::network(g, tree.root, &tree.parent, &tree.children);
                    let out = run(g, nodes, &sim, |g, ns: &[FindMstNode], cp| insp.findmst(g, ns, cp));
                    insp.findmst_final(g, &out.nodes);
                    stages.push(Stage::of(&out));
                    phases += out.nodes[tree.root].phases;
                    output = out.ok().then(|| mst_edges(g, &out.nodes));
                }
            }
        }
        ProtocolKind::Findmst => {
            let tree = bfs_tree(g)?;
            let nodes = FindMstNode::network(g, tree.root, &tree.parent, &tree.children);
            let out = run(g, nodes, &sim, |g, ns: &[FindMstNode], cp| insp.findmst(g, ns, cp));
            insp.findmst_final(g, &out.nodes);
            stages.push(Stage::of(&out));
            phases = out.nodes[tree.root].phases;
            output = out.ok().then(|| mst_edges(g, &out.nodes));
        }
        ProtocolKind::Msf => {
            let nodes = MsfNode::network(g, &stars, params);
            let out = run(g, nodes, &sim, |g, ns: &[MsfNode], cp| insp.msf(g, ns, cp));
            insp.msf_final(g, &out.nodes, &stars);
            stages.push(Stage::of(&out));
            phases = out.nodes.iter().map(|s| s.st.phase).max().unwrap_or(0);
            output = out.ok().then(|| forest_edges(g, &out.nodes));
        }
    }

    let mut metrics = Metrics::new(g.m());
    let mut deliveries = 0;
    let mut error = None;
    for s in &stages {
        metrics.absorb(&s.metrics);
        deliveries += s.deliveries;
        error = error.or_else(|| s.error.clone());
    }
    let oracle = match (&output, spec.protocol) {
        (None, _) => Verdict::NoOutput,
        // a spanning tree has no unique answer; validity was checked above
        (Some(_), ProtocolKind::Findst) if tree_ok => Verdict::Match,
        (Some(got), _) => Verdict::compare(got, &want),
    };
    Ok(RunReport {
        schema_version: SCHEMA_VERSION,
        protocol: spec.protocol.label().into(),
        family,
        n: g.n(),
        m: g.m(),
        c: spec.c,
        seed: spec.seed,
        graph_seed: spec.graph_seed.unwrap_or(spec.seed),
        policy: policy.label(),
        check: format!("{:?}", spec.check).to_lowercase(),
        metrics: metrics.summary(g),
        deliveries,
        phases,
        st_log,
        phase_stats: insp.phases,
        output_edges: output.unwrap_or_default().into_iter().map(|e| e.0).collect(),
        oracle,
        violations: insp.violations,
        livelock: is_livelock(&error),
        error: error.map(|e| e.to_string()),
        stars: stars.iter().filter(|&&s| s).count(),
        wallclock_ms: started.elapsed().as_millis() as u64,
    })
}

impl ExperimentConfig {
    /// The cross product in a fixed order: n, then policy, then seed.
    pub fn runs(&self) -> Vec<RunSpec> {
        let mut out = Vec::new();
        for &n in &self.ns {
            for policy in &self.policies {
                for &seed in &self.seeds {
                    out.push(RunSpec {
                        protocol: self.protocol,
                        family: self.family.clone(),
                        n,
                        c: self.c,
                        seed,
                        graph_seed: self.graph_seed,
                        policy: policy.clone(),
                        check: self.check,
                        leader: self.leader,
                        event_cap: self.event_cap,
                        approx_reps: self.approx_reps,
                        faults: Vec::new(),
                    });
                }
            }
        }
        out
    }
}

/// Runs every spec, up to `threads` at a time; the result order matches
/// the input order regardless of scheduling.
pub fn execute_all(specs: &[RunSpec], threads: usize) -> Result<Vec<RunReport>> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<RunReport>>>> = Mutex::new(vec![None; specs.len()]);
    std::thread::scope(|s| {
        for _ in 0..threads.clamp(1, specs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(spec) = specs.get(i) else { break };
                let r = execute(spec);
                slots.lock().expect("no panics while holding the lock")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("threads joined").into_iter().map(|r| r.expect("every slot filled")).collect()
}

pub fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// File name of a run's JSON report.
pub fn report_name(r: &RunReport) -> String {
    let policy: String = r.policy.chars().map(|ch| if ch.is_ascii_alphanumeric() { ch } else { '_' }).collect();
    format!("{}-n{}-{}-s{}.json", r.protocol, r.n, policy, r.seed)
}

/// Writes one JSON report per run and `runs.csv` into `dir`.
pub fn write_outputs(dir: &Path, reports: &[RunReport]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for r in reports {
        std::fs::write(dir.join(report_name(r)), r.to_json())?;
    }
    let f = std::fs::File::create(dir.join("runs.csv"))?;
    report::write_csv(reports, std::io::BufWriter::new(f))
}

/// Worst status over a batch (livelock > invariant > mismatch > ok, with
/// any other simulator error counted as 1).
pub fn batch_status(reports: &[RunReport]) -> i32 {
    let crashed = reports.iter().any(|r| r.error.is_some() && !r.livelock);
    let worst = reports.iter().map(|r| r.status()).max().unwrap_or(0);
    if worst == 0 && crashed {
        1
    } else {
        worst
    }
}
