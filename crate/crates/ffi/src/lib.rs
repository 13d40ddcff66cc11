//! C interface to the asyncmst simulator.
//!
//! Every fallible call returns an [`AsyncmstStatus`]; on failure the
//! message is available from [`asyncmst_last_error`] on the same thread.
//! Graphs, reports and batches are opaque handles owned by the caller and
//! released with their `*_free` function. Strings returned to the caller
//! are released with [`asyncmst_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use asyncmst::graph::{generate, Family, Graph, NodeId, Scale};
use asyncmst::harness::report::write_csv;
use asyncmst::harness::{execute, execute_all, execute_graph, ExperimentConfig, ProtocolKind, RunReport, RunSpec};
use asyncmst::wire::congest_budget;
use asyncmst::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AsyncmstStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    /// Bad configuration text, protocol, family or policy name.
    Config = 3,
    /// Edge list rejected (self-loop, duplicate, endpoint out of range).
    InvalidGraph = 4,
    Io = 5,
    /// A simulator error escaped the report (not expected in normal use).
    Simulation = 6,
    /// An internal panic was caught at the boundary.
    Panic = 7,
}

/// An undirected weighted graph with node identities.
pub struct AsyncmstGraph {
    graph: Graph,
}

/// The outcome of one run.
pub struct AsyncmstReport {
    report: RunReport,
    /// Output edges as node-index pairs, in edge-name order.
    edges: Vec<(usize, usize)>,
}

/// The reports of a configuration sweep, in run order.
pub struct AsyncmstBatch {
    reports: Vec<AsyncmstReport>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure {
    status: AsyncmstStatus,
    msg: String,
}

impl Failure {
    fn new(status: AsyncmstStatus, msg: impl Into<String>) -> Self {
        Failure { status, msg: msg.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Config(_) | Error::Parse { .. } => AsyncmstStatus::Config,
            Error::InvalidEdge(_) => AsyncmstStatus::InvalidGraph,
            Error::Io(_) => AsyncmstStatus::Io,
            _ => AsyncmstStatus::Simulation,
        };
        Failure::new(status, e.to_string())
    }
}

fn set_error(msg: Option<String>) {
    let c = msg.map(|m| CString::new(m.replace('\0', " ")).expect("interior NULs removed"));
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AsyncmstStatus {
    set_error(None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AsyncmstStatus::Ok,
        Ok(Err(fail)) => {
            set_error(Some(fail.msg));
            fail.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(Some(format!("internal panic: {msg}")));
            AsyncmstStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(AsyncmstStatus::NullArgument, format!("{what} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(AsyncmstStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn opt_text<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, what).map(Some)
    }
}

fn check_out<T>(out: *mut *mut T) -> Result<(), Failure> {
    if out.is_null() {
        Err(Failure::new(AsyncmstStatus::NullArgument, "output pointer is NULL"))
    } else {
        Ok(())
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::new(AsyncmstStatus::NullArgument, format!("{what} is NULL")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("interior NULs removed").into_raw()
}

fn with_edges(report: RunReport, g: &Graph) -> AsyncmstReport {
    let edges = report
        .output_edges
        .iter()
        .filter_map(|&name| g.edges().iter().find(|e| e.name.0 == name))
        .map(|e| (e.u.min(e.v), e.u.max(e.v)))
        .collect();
    AsyncmstReport { report, edges }
}

fn spec(protocol: &str, family: Family, n: usize, seed: u64, policy: Option<&str>) -> Result<RunSpec, Failure> {
    let mut s = RunSpec::new(ProtocolKind::parse(protocol)?, family, n, seed);
    if let Some(p) = policy {
        s.policy = p.to_string();
    }
    Ok(s)
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn asyncmst_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Bits one message may carry at size `n` with constant `c`.
#[no_mangle]
pub extern "C" fn asyncmst_congest_budget(n: usize, c: u32) -> usize {
    congest_budget(n, c)
}

/// Builds a graph from `m` edges `(us[i], vs[i])` with weights
/// `weights[i]`. Endpoints are node indices in `0..n`. `ids` may be NULL,
/// in which case node `i` gets identity `i + 1`.
///
/// # Safety
/// Non-NULL arrays must hold at least `n` (ids) or `m` (edge arrays) elements.
#[no_mangle]
pub unsafe extern "C" fn asyncmst_graph_new(
    n: usize,
    c: u32,
    ids: *const u64,
    m: usize,
    us: *const usize,
    vs: *const usize,
    weights: *const u64,
    out: *mut *mut AsyncmstGraph,
) -> AsyncmstStatus {
    guard(|| {
        check_out(out)?;
        let ids: Vec<NodeId> = if ids.is_null() {
            (1..=n as u64).map(NodeId).collect()
        } else {
            slice(ids, n, "ids")?.iter().copied().map(NodeId).collect()
        };
        let (us, vs, ws) = (slice(us, m, "us")?, slice(vs, m, "vs")?, slice(weights, m, "weights")?);
        let raw: Vec<(usize, usize, u64)> = (0..m).map(|i| (us[i], vs[i], ws[i])).collect();
        let graph = Graph::new(Scale::new(n, c), ids, &raw)?;
        *out = Box::into_raw(Box::new(AsyncmstGraph { graph }));
        Ok(())
    })
}

/// Generates a graph from a family spec such as `complete`,
/// `gnp-connected:0.3` or `disconnected:0.5:10,20`.
///
/// # Safety
/// `family` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn asyncmst_graph_generate(
    family: *const c_char,
    n: usize,
    c: u32,
    seed: u64,
    out: *mut *mut AsyncmstGraph,
) -> AsyncmstStatus {
    guard(|| {
        check_out(out)?;
        let family = Family::parse(text(family, "family")?)?;
        let graph = generate(&family, n, c, seed)?;
        *out = Box::into_raw(Box::new(AsyncmstGraph { graph }));
        Ok(())
    })
}

/// Node count, or 0 for NULL.
///
/// # Safety
/// `g` must be NULL or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn asyncmst_graph_node_count(g: *const AsyncmstGraph) -> usize {
    g.as_ref().map_or(0, |g| g.graph.n())
}

/// Edge count, or 0 for NULL.
///
/// # Safety
/// `g` must be NULL or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn asyncmst_graph_edge_count(g: *const AsyncmstGraph) -> usize {
    g.as_ref().map_or(0, |g| g.graph.m())
}

/// # Safety
/// `g` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn asyncmst_graph_free(g: *mut AsyncmstGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Runs `protocol` (`findst`, `findmst`, `msf` or `pipeline`) on `g`.
/// `policy` may be NULL for the default delay policy. Protocol failures
/// such as stalls are reported inside the report, not as a status.
///
/// # Safety
/// `g` must be a live graph; strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn asyncmst_run(
    g: *const AsyncmstGraph,
    protocol: *const c_char,
    policy: *const c_char,
    seed: u64,
    out: *mut *mut AsyncmstReport,
) -> AsyncmstStatus {
    guard(|| {
        check_out(out)?;
        let g = &g.as_ref().ok_or_else(|| Failure::new(AsyncmstStatus::NullArgument, "graph is NULL"))?.graph;
        let s = spec(text(protocol, "protocol")?, Family::Complete, g.n(), seed, opt_text(policy, "policy")?)?;
        let report = execute_graph(&s, g)?;
        *out = Box::into_raw(Box::new(with_edges(report, g)));
        Ok(())
    })
}

/// Generates a graph from `family` (seeded by `seed`) and runs `protocol`
/// on it, exactly as one run of a sweep would.
///
/// # Safety
/// Strings must be NUL-terminated (`policy` may be NULL); `out` writable.
#[no_mangle]
pub unsafe extern "C" fn asyncmst_run_family(
    protocol: *const c_char,
    family: *const c_char,
    n: usize,
    seed: u64,
    policy: *const c_char,
    out: *mut *mut AsyncmstReport,
) -> AsyncmstStatus {
    guard(|| {
        check_out(out)?;
        let family = Family::parse(text(family, "family")?)?;
        let s = spec(text(protocol, "protocol")?, family, n, seed, opt_text(policy, "policy")?)?;
        let report = execute(&s)?;
        let g = generate(&s.family, s.n, s.c, report.graph_seed)?;
        *out = Box::into_raw(Box::new(with_edges(report, &g)));
        Ok(())
    })
}

/// Runs every `(n, policy, seed)` combination of a configuration file's
/// text on `threads` threads (0 picks the CPU count).
///
/// # Safety
/// `config` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn asyncmst_sweep(
    config: *const c_char,
    threads: usize,
    out: *mut *mut AsyncmstBatch,
) -> AsyncmstStatus {
    guard(|| {
        check_out(out)?;
        let cfg = ExperimentConfig::parse(text(config, "config")?)?;
        cfg.validate()?;
        let specs = cfg.runs();
        let threads = if threads == 0 { asyncmst::harness::default_threads() } else { threads };
        let reports = execute_all(&specs, threads)?;
        let mut wrapped = Vec::with_capacity(reports.len());
        for (s, r) in specs.iter().zip(reports) {
            let g = generate(&s.family, s.n, s.c, r.graph_seed)?;
            wrapped.push(with_edges(r, &g));
        }
        *out = Box::into_raw(Box::new(AsyncmstBatch { reports: wrapped }));
        Ok(())
    })
}

/// # Safety
/// `b` must be NULL or a live batch.
#[no_mangle]
pub unsafe extern "C" fn asyncmst_batch_len(b: *const AsyncmstBatch) -> usize {
    b.as_ref().map_or(0, |b| b.reports.len())
}

/// Borrowed report `i` of the batch, or NULL when out of range. It lives
/// as long as the batch and must not be freed separately.
///
/// # Safety
/// `b` must be NULL or a live batch.
#[no_mangle]
pub unsafe extern "C" fn asyncmst_batch_report(b: *const AsyncmstBatch, i: usize) -> *const AsyncmstReport {
    b.as_ref().and_then(|b| b.reports.get(i)).map_or(ptr::null(), |r| r as *const _)
}

/// The batch as CSV text (same columns as `runs.csv`), or NULL on error.
///
/// # Safety
/// `b` must be NULL or a live batch.
#[no_mangle]
pub unsafe extern "C" fn asyncmst_batch_csv(b: *const AsyncmstBatch) -> *mut c_char {
    let mut result = ptr::null_mut();
    guard(|| {
        let b = b.as_ref().ok_or_else(|| Failure::new(AsyncmstStatus::NullArgument, "batch is NULL"))?;
        let reports: Vec<RunReport> = b.reports.iter().map(|r| r.report.clone()).collect();
        let mut buf = Vec::new();
        write_csv(&reports, &mut buf)?;
        result = into_c_string(String::from_utf8(buf).expect("CSV is UTF-8"));
        Ok(())
    });
    result
}

/// # Safety
/// `b` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn asyncmst_batch_free(b: *mut AsyncmstBatch) {
    if !b.is_null() {
        drop(Box::from_raw(b));
    }
}

/// Total messages sent.
///
/// # Safety
/// `r` must be NULL (yields 0) or a live report.
#[no_mangle]
pub unsafe extern "C" fn asyncmst_report_total_messages(r: *const AsyncmstReport) -> u64 {
    r.as_ref().map_or(0, |r| r.report.metrics.total)
}

/// # Safety
/// `r` must be NULL (yields 0) or a live report.
#[no_mangle]
pub unsafe extern "C" fn asyncmst_report_phases(r: *const AsyncmstReport) -> u32 {
    r.as_ref().map_or(0, |r| r.report.phases)
}

/// Whether the output agrees with the sequential oracle.
///
/// # Safety
/// `r` must be NULL (yields false) or a live report.
#[no_mangle]
pub unsafe extern "C" fn asyncmst_report_oracle_match(r: *const AsyncmstReport) -> bool {
    r.as_ref().is_some_and(|r| r.report.oracle.is_match())
}

/// Per-run status: 0 ok, 3 oracle mismatch, 4 invariant violation,
/// 5 livelock or stall; -1 for NULL.
///
/// # Safety
/// `r` must be NULL or a live report.
#[no_mangle]
pub unsafe extern "C" fn asyncmst_report_status(r: *const AsyncmstReport) -> i32 {
    r.as_ref().map_or(-1, |r| r.report.status())
}

/// Number of output edges.
///
/// # Safety
/// `r` must be NULL (yields 0) or a live report.
#[no_mangle]
pub unsafe extern "C" fn asyncmst_report_edge_count(r: *const AsyncmstReport) -> usize {
    r.as_ref().map_or(0, |r| r.edges.len())
}

/// Copies up to `cap` output edges as index pairs (smaller index first)
/// into `us`/`vs` and returns the total edge count.
///
/// # Safety
/// `r` must be NULL or a live report; when `cap > 0`, `us` and `vs` must
/// have room for `cap` elements.
#[no_mangle]
pub unsafe extern "C" fn asyncmst_report_edges(
    r: *const AsyncmstReport,
    us: *mut usize,
    vs: *mut usize,
    cap: usize,
) -> usize {
    let Some(r) = r.as_ref() else { return 0 };
    if cap > 0 && !us.is_null() && !vs.is_null() {
        for (i, &(u, v)) in r.edges.iter().take(cap).enumerate() {
            *us.add(i) = u;
            *vs.add(i) = v;
        }
    }
    r.edges.len()
}

/// The full report as JSON; free with [`asyncmst_string_free`]. NULL for
/// a NULL report.
///
/// # Safety
/// `r` must be NULL or a live report.
#[no_mangle]
pub unsafe extern "C" fn asyncmst_report_json(r: *const AsyncmstReport) -> *mut c_char {
    r.as_ref().map_or(ptr::null_mut(), |r| into_c_string(r.report.to_json()))
}

/// # Safety
/// `r` must be NULL or an owned report not yet freed (not one borrowed
/// from a batch).
#[no_mangle]
pub unsafe extern "C" fn asyncmst_report_free(r: *mut AsyncmstReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn asyncmst_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
