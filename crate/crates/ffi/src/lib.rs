//! C ABI for the analysis side of p2pscope.
//!
//! Objects cross the boundary as opaque handles that the caller frees with
//! the matching `*_free`. Every fallible call returns a [`P2psStatus`]; the
//! message for the last failure on the calling thread is available from
//! [`p2ps_last_error`]. Structured results come back as JSON strings owned
//! by the library and released with [`p2ps_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use p2pscope::fit;
use p2pscope::graph::{self, build_graph, AnalyzeOptions, OverlayGraph};
use p2pscope::harness::{self, SimCrawlOptions, SimTopology};
use p2pscope::resilience::{self, PercolateOptions, Strategy};
use p2pscope::snapstore::{self, EdgeSetSnapshot};

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum P2psStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Analysis = 5,
    Panic = 6,
}

/// A parsed snapshot.
pub struct P2psSnapshot(EdgeSetSnapshot);

/// A directed overlay graph.
pub struct P2psGraph(OverlayGraph);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl ToString) {
    let msg = msg.to_string().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

type FfiResult<T> = Result<T, (P2psStatus, String)>;

fn fail<E: ToString>(code: P2psStatus) -> impl FnOnce(E) -> (P2psStatus, String) {
    move |e| (code, e.to_string())
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> P2psStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => P2psStatus::Ok,
        Ok(Err((code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            P2psStatus::Panic
        }
    }
}

unsafe fn as_str<'a>(p: *const c_char) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err((P2psStatus::NullArgument, "null string".into()));
    }
    CStr::from_ptr(p).to_str().map_err(fail(P2psStatus::InvalidUtf8))
}

unsafe fn as_ref<'a, T>(p: *const T) -> FfiResult<&'a T> {
    p.as_ref().ok_or((P2psStatus::NullArgument, "null handle".into()))
}

unsafe fn put<T>(out: *mut T, v: T) -> FfiResult<()> {
    if out.is_null() {
        return Err((P2psStatus::NullArgument, "null output pointer".into()));
    }
    out.write(v);
    Ok(())
}

unsafe fn put_json<T: serde::Serialize>(out: *mut *mut c_char, v: &T) -> FfiResult<()> {
    let s = serde_json::to_string(v).map_err(fail(P2psStatus::Analysis))?;
    let c = CString::new(s).map_err(fail(P2psStatus::Analysis))?;
    put(out, c.into_raw())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn p2ps_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn p2ps_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn p2ps_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Reads a snapshot file.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn p2ps_snapshot_read(path: *const c_char, out: *mut *mut P2psSnapshot) -> P2psStatus {
    guard(|| {
        let path = as_str(path)?;
        let snap = snapstore::read_snapshot(Path::new(path)).map_err(|e| match e {
            snapstore::SnapError::Io(e) => (P2psStatus::Io, e.to_string()),
            other => (P2psStatus::Parse, other.to_string()),
        })?;
        put(out, Box::into_raw(Box::new(P2psSnapshot(snap))))
    })
}

/// Parses a snapshot from an in-memory buffer.
///
/// # Safety
/// `data` points to `len` readable bytes; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn p2ps_snapshot_parse(data: *const u8, len: usize, out: *mut *mut P2psSnapshot) -> P2psStatus {
    guard(|| {
        if data.is_null() && len > 0 {
            return Err((P2psStatus::NullArgument, "null buffer".into()));
        }
        let bytes = if len == 0 { &[][..] } else { std::slice::from_raw_parts(data, len) };
        let snap = EdgeSetSnapshot::from_bytes(bytes).map_err(fail(P2psStatus::Parse))?;
        put(out, Box::into_raw(Box::new(P2psSnapshot(snap))))
    })
}

/// Number of records (crawled nodes) in the snapshot.
///
/// # Safety
/// `snap` is a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn p2ps_snapshot_record_count(snap: *const P2psSnapshot) -> usize {
    snap.as_ref().map_or(0, |s| s.0.record_count())
}

/// # Safety
/// `snap` comes from this library and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn p2ps_snapshot_free(snap: *mut P2psSnapshot) {
    if !snap.is_null() {
        drop(Box::from_raw(snap));
    }
}

/// Builds the overlay graph of a snapshot.
///
/// # Safety
/// `snap` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn p2ps_graph_from_snapshot(snap: *const P2psSnapshot, out: *mut *mut P2psGraph) -> P2psStatus {
    guard(|| {
        let s = as_ref(snap)?;
        put(out, Box::into_raw(Box::new(P2psGraph(build_graph(&s.0)))))
    })
}

/// Builds a graph on nodes `0..n` from `m` directed edges `src[i] -> dst[i]`.
///
/// # Safety
/// `src` and `dst` each point to `m` readable values; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn p2ps_graph_from_edges(
    n: u32,
    src: *const u32,
    dst: *const u32,
    m: usize,
    out: *mut *mut P2psGraph,
) -> P2psStatus {
    guard(|| {
        if m > 0 && (src.is_null() || dst.is_null()) {
            return Err((P2psStatus::NullArgument, "null edge array".into()));
        }
        let mut adj = vec![Vec::new(); n as usize];
        for i in 0..m {
            let (a, b) = (*src.add(i), *dst.add(i));
            if a >= n || b >= n {
                return Err((P2psStatus::Parse, format!("edge {i} ({a}, {b}) outside 0..{n}")));
            }
            adj[a as usize].push(b);
        }
        put(out, Box::into_raw(Box::new(P2psGraph(OverlayGraph::from_adjacency(&adj)))))
    })
}

/// # Safety
/// `g` is a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn p2ps_graph_node_count(g: *const P2psGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.node_count())
}

/// # Safety
/// `g` is a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn p2ps_graph_edge_count(g: *const P2psGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.edge_count())
}

/// # Safety
/// `g` comes from this library and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn p2ps_graph_free(g: *mut P2psGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Full metric report as JSON. `omega_samples` of 0 skips the small-world
/// coefficient.
///
/// # Safety
/// `g` is a live handle; `out_json` is writable.
#[no_mangle]
pub unsafe extern "C" fn p2ps_graph_analyze(
    g: *const P2psGraph,
    seed: u64,
    omega_samples: usize,
    out_json: *mut *mut c_char,
) -> P2psStatus {
    guard(|| {
        let g = as_ref(g)?;
        let opts = AnalyzeOptions {
            seed,
            omega_samples,
            ..Default::default()
        };
        let (report, _) = graph::analyze(&g.0, &opts).map_err(fail(P2psStatus::Analysis))?;
        put_json(out_json, &report)
    })
}

/// Spectral bisection of the undirected projection.
///
/// # Safety
/// `g` is a live handle; the three outputs are writable.
#[no_mangle]
pub unsafe extern "C" fn p2ps_graph_fiedler_cut(
    g: *const P2psGraph,
    lambda2: *mut f64,
    edges_removed: *mut usize,
    cut_ratio: *mut f64,
) -> P2psStatus {
    guard(|| {
        let g = as_ref(g)?;
        if lambda2.is_null() || edges_removed.is_null() || cut_ratio.is_null() {
            return Err((P2psStatus::NullArgument, "null output pointer".into()));
        }
        let c = resilience::fiedler_cut(&g.0).map_err(fail(P2psStatus::Analysis))?;
        lambda2.write(c.lambda2);
        edges_removed.write(c.edges_removed);
        cut_ratio.write(c.cut_ratio);
        Ok(())
    })
}

/// Static removal attack; the trace is returned as JSON. `strategy` is
/// `out_degree`, `betweenness`, `random` or `random:<seed>`.
///
/// # Safety
/// `g` is a live handle, `strategy` a NUL-terminated string and `out_json`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn p2ps_graph_attack(
    g: *const P2psGraph,
    strategy: *const c_char,
    max_frac: f64,
    seed: u64,
    out_json: *mut *mut c_char,
) -> P2psStatus {
    guard(|| {
        let g = as_ref(g)?;
        let s: Strategy = as_str(strategy)?.parse().map_err(fail(P2psStatus::Parse))?;
        if !(0.0..=1.0).contains(&max_frac) {
            return Err((P2psStatus::Parse, format!("max_frac {max_frac} outside [0, 1]")));
        }
        let aopts = AnalyzeOptions {
            seed,
            ..Default::default()
        };
        let order = resilience::rank_nodes(&g.0, s, &aopts);
        let popts = PercolateOptions {
            max_frac,
            seed,
            ..Default::default()
        };
        put_json(out_json, &resilience::percolate(&g.0, &order, &s.name(), &popts))
    })
}

/// Best-fitting heavy-tailed family for `len` samples, as JSON.
///
/// # Safety
/// `xs` points to `len` readable doubles; `out_json` is writable.
#[no_mangle]
pub unsafe extern "C" fn p2ps_fit_best(
    xs: *const f64,
    len: usize,
    discrete: bool,
    p_threshold: f64,
    out_json: *mut *mut c_char,
) -> P2psStatus {
    guard(|| {
        if xs.is_null() && len > 0 {
            return Err((P2psStatus::NullArgument, "null sample array".into()));
        }
        let data = if len == 0 { &[][..] } else { std::slice::from_raw_parts(xs, len) };
        let best = fit::best_fit(data, discrete, p_threshold).map_err(fail(P2psStatus::Analysis))?;
        put_json(out_json, &best)
    })
}

/// Crawls a simulated overlay in memory and returns per-tick recall as JSON.
///
/// # Safety
/// `topology` is a NUL-terminated spec string; `out_json` is writable.
#[no_mangle]
pub unsafe extern "C" fn p2ps_simnet_recall(
    topology: *const c_char,
    rounds: u64,
    getaddr_per_conn: usize,
    out_json: *mut *mut c_char,
) -> P2psStatus {
    guard(|| {
        let topo: SimTopology = as_str(topology)?.parse().map_err(fail(P2psStatus::Parse))?;
        let opts = SimCrawlOptions {
            rounds,
            getaddr_per_conn,
            ..Default::default()
        };
        let res = harness::crawl_simnet(&topo, &opts).map_err(fail(P2psStatus::Analysis))?;
        put_json(out_json, &res.recall)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_message_is_thread_local() {
        let mut g = ptr::null_mut();
        let st = unsafe { p2ps_graph_from_edges(2, [0u32].as_ptr(), [5u32].as_ptr(), 1, &mut g) };
        assert_eq!(st, P2psStatus::Parse);
        assert!(g.is_null());
        let msg = unsafe { CStr::from_ptr(p2ps_last_error()) }.to_str().unwrap().to_string();
        assert!(msg.contains("outside"));
        let other = std::thread::spawn(|| p2ps_last_error().is_null()).join().unwrap();
        assert!(other);
    }

    #[test]
    fn frees_accept_null() {
        unsafe {
            p2ps_graph_free(ptr::null_mut());
            p2ps_snapshot_free(ptr::null_mut());
            p2ps_string_free(ptr::null_mut());
        }
    }
}
