//! C ABI over `gcnrefine`.
//!
//! Objects are opaque handles created by `gcr_*` constructors and released
//! with the matching `*_free`. Every fallible call returns a [`GcrStatus`];
//! on failure, [`gcr_last_error`] describes the most recent error on the
//! calling thread. Panics never cross the boundary: they become
//! `GCR_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gcnrefine::gcn::{infer_prune, refine, GcnModel, RefineConfig};
use gcnrefine::{
    build_graph, cluster_by_threshold, generate_synthetic, nmi, EmbeddingSet, Error, LabelAssignment,
    ScoringMethod, SimilarityGraph, SynthSpec,
};

/// Result codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GcrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    DimensionMismatch = 5,
    Numeric = 6,
    Internal = 7,
}

/// Edge scoring methods for [`gcr_cluster`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GcrScoringMethod {
    Product = 0,
    Sum = 1,
    Weighted = 2,
    GcnWeighted = 3,
}

impl From<GcrScoringMethod> for ScoringMethod {
    fn from(m: GcrScoringMethod) -> Self {
        match m {
            GcrScoringMethod::Product => ScoringMethod::Product,
            GcrScoringMethod::Sum => ScoringMethod::Sum,
            GcrScoringMethod::Weighted => ScoringMethod::Weighted,
            GcrScoringMethod::GcnWeighted => ScoringMethod::GcnWeighted,
        }
    }
}

/// Label value of samples that belong to no cluster.
pub const GCR_UNASSIGNED: u32 = u32::MAX;

pub struct GcrEmbeddings(EmbeddingSet);
pub struct GcrGraph(SimilarityGraph);
pub struct GcrLabels(LabelAssignment);
pub struct GcrModel(GcnModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> GcrStatus {
    match err {
        Error::Io { .. } => GcrStatus::Io,
        Error::BadMagic { .. }
        | Error::UnsupportedVersion(_)
        | Error::Truncated { .. }
        | Error::Parse { .. }
        | Error::Shape(_) => GcrStatus::Format,
        Error::NonFinite { .. } | Error::ZeroRow(_) | Error::Divergence { .. } => GcrStatus::Numeric,
        Error::DimensionMismatch(_) | Error::LengthMismatch { .. } => GcrStatus::DimensionMismatch,
        Error::Stage { source, .. } => status_of(source),
        _ => GcrStatus::InvalidArgument,
    }
}

/// Runs `f`, recording errors and panics for [`gcr_last_error`].
fn guard(f: impl FnOnce() -> Result<(), (GcrStatus, String)>) -> GcrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GcrStatus::Ok,
        Ok(Err((status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_last_error(format!("internal error: {msg}"));
            GcrStatus::Internal
        }
    }
}

fn lib_err(e: Error) -> (GcrStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (GcrStatus, String) {
    (GcrStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (GcrStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<String, (GcrStatus, String)> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| (GcrStatus::InvalidArgument, "path is not valid UTF-8".to_string()))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), (GcrStatus, String)> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message for the most recent failure on this thread, or null. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gcr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gcr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `n * d` row-major floats into a new embedding set.
///
/// # Safety
/// `data` must point to `n * d` readable floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcr_embeddings_from_rows(
    data: *const f32,
    n: usize,
    d: usize,
    out: *mut *mut GcrEmbeddings,
) -> GcrStatus {
    guard(|| {
        if data.is_null() {
            return Err(null("data"));
        }
        let len = n
            .checked_mul(d)
            .ok_or((GcrStatus::InvalidArgument, "n * d overflows".to_string()))?;
        let values = std::slice::from_raw_parts(data, len).to_vec();
        let e = EmbeddingSet::from_flat(n, d, values).map_err(lib_err)?;
        emit(out, GcrEmbeddings(e))
    })
}

/// Loads an EMB1 file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcr_embeddings_load(path: *const c_char, out: *mut *mut GcrEmbeddings) -> GcrStatus {
    guard(|| {
        let e = EmbeddingSet::load(path_arg(path)?).map_err(lib_err)?;
        emit(out, GcrEmbeddings(e))
    })
}

/// # Safety
/// `e` must be null or a live embeddings handle.
#[no_mangle]
pub unsafe extern "C" fn gcr_embeddings_n(e: *const GcrEmbeddings) -> usize {
    e.as_ref().map_or(0, |e| e.0.n())
}

/// # Safety
/// `e` must be null or a live embeddings handle.
#[no_mangle]
pub unsafe extern "C" fn gcr_embeddings_dim(e: *const GcrEmbeddings) -> usize {
    e.as_ref().map_or(0, |e| e.0.d())
}

/// # Safety
/// `e` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gcr_embeddings_free(e: *mut GcrEmbeddings) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// Synthetic unit-norm embeddings with ground-truth labels.
///
/// # Safety
/// `out_embeddings` and `out_labels` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcr_synth_generate(
    num_classes: usize,
    samples_per_class: usize,
    dim: usize,
    noise_sigma: f64,
    seed: u64,
    out_embeddings: *mut *mut GcrEmbeddings,
    out_labels: *mut *mut GcrLabels,
) -> GcrStatus {
    guard(|| {
        if out_embeddings.is_null() || out_labels.is_null() {
            return Err(null("output pointer"));
        }
        let (e, l) = generate_synthetic(&SynthSpec {
            num_classes,
            samples_per_class,
            dim,
            noise_sigma,
            seed,
        })
        .map_err(lib_err)?;
        emit(out_embeddings, GcrEmbeddings(e))?;
        emit(out_labels, GcrLabels(l))
    })
}

/// Exact KNN similarity graph over unit-norm embeddings.
///
/// # Safety
/// `e` must be a live embeddings handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcr_graph_build(
    e: *const GcrEmbeddings,
    k: usize,
    prune_threshold: f64,
    out: *mut *mut GcrGraph,
) -> GcrStatus {
    guard(|| {
        let e = deref(e, "embeddings")?;
        let g = build_graph(&e.0, k, prune_threshold).map_err(lib_err)?;
        emit(out, GcrGraph(g))
    })
}

/// Loads a `src,dst,similarity` CSV over `n` nodes.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcr_graph_load(path: *const c_char, n: usize, out: *mut *mut GcrGraph) -> GcrStatus {
    guard(|| {
        let g = SimilarityGraph::load(path_arg(path)?, n).map_err(lib_err)?;
        emit(out, GcrGraph(g))
    })
}

/// # Safety
/// `g` must be a live graph handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gcr_graph_save(g: *const GcrGraph, path: *const c_char) -> GcrStatus {
    guard(|| deref(g, "graph")?.0.save(path_arg(path)?).map_err(lib_err))
}

/// # Safety
/// `g` must be null or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn gcr_graph_num_nodes(g: *const GcrGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.n())
}

/// # Safety
/// `g` must be null or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn gcr_graph_num_edges(g: *const GcrGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.num_edges())
}

/// # Safety
/// `g` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gcr_graph_free(g: *mut GcrGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Connected components over edges whose score reaches `threshold`.
///
/// # Safety
/// `g` must be a live graph handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcr_cluster(
    g: *const GcrGraph,
    method: GcrScoringMethod,
    threshold: f64,
    out: *mut *mut GcrLabels,
) -> GcrStatus {
    guard(|| {
        let g = deref(g, "graph")?;
        if !threshold.is_finite() {
            return Err((GcrStatus::InvalidArgument, format!("threshold {threshold}")));
        }
        emit(out, GcrLabels(cluster_by_threshold(&g.0, method.into(), threshold)))
    })
}

/// Copies `n` labels; [`GCR_UNASSIGNED`] marks unassigned samples.
///
/// # Safety
/// `labels` must point to `n` readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcr_labels_from_array(labels: *const u32, n: usize, out: *mut *mut GcrLabels) -> GcrStatus {
    guard(|| {
        if labels.is_null() && n > 0 {
            return Err(null("labels"));
        }
        let values = if n == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(labels, n).to_vec()
        };
        emit(out, GcrLabels(LabelAssignment::new(values)))
    })
}

/// Loads an `index,label` CSV.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcr_labels_load(path: *const c_char, out: *mut *mut GcrLabels) -> GcrStatus {
    guard(|| {
        let l = LabelAssignment::load(path_arg(path)?).map_err(lib_err)?;
        emit(out, GcrLabels(l))
    })
}

/// # Safety
/// `l` must be a live labels handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gcr_labels_save(l: *const GcrLabels, path: *const c_char) -> GcrStatus {
    guard(|| deref(l, "labels")?.0.save(path_arg(path)?).map_err(lib_err))
}

/// # Safety
/// `l` must be null or a live labels handle.
#[no_mangle]
pub unsafe extern "C" fn gcr_labels_len(l: *const GcrLabels) -> usize {
    l.as_ref().map_or(0, |l| l.0.len())
}

/// # Safety
/// `l` must be null or a live labels handle.
#[no_mangle]
pub unsafe extern "C" fn gcr_labels_num_clusters(l: *const GcrLabels) -> usize {
    l.as_ref().map_or(0, |l| l.0.num_clusters())
}

/// Copies all labels into `out`, which must hold `gcr_labels_len` values.
///
/// # Safety
/// `l` must be a live labels handle; `out` must point to `capacity`
/// writable values.
#[no_mangle]
pub unsafe extern "C" fn gcr_labels_copy(l: *const GcrLabels, out: *mut u32, capacity: usize) -> GcrStatus {
    guard(|| {
        let l = deref(l, "labels")?;
        if out.is_null() {
            return Err(null("output buffer"));
        }
        if capacity < l.0.len() {
            return Err((
                GcrStatus::DimensionMismatch,
                format!("buffer holds {capacity} labels, need {}", l.0.len()),
            ));
        }
        ptr::copy_nonoverlapping(l.0.labels().as_ptr(), out, l.0.len());
        Ok(())
    })
}

/// # Safety
/// `l` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gcr_labels_free(l: *mut GcrLabels) {
    if !l.is_null() {
        drop(Box::from_raw(l));
    }
}

/// Normalized mutual information between two fully assigned labelings.
///
/// # Safety
/// `a` and `b` must be live labels handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcr_nmi(a: *const GcrLabels, b: *const GcrLabels, out: *mut f64) -> GcrStatus {
    guard(|| {
        let (a, b) = (deref(a, "labels a")?, deref(b, "labels b")?);
        if out.is_null() {
            return Err(null("output pointer"));
        }
        *out = nmi(&a.0, &b.0).map_err(lib_err)?;
        Ok(())
    })
}

/// Loads a GCN checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcr_model_load(path: *const c_char, out: *mut *mut GcrModel) -> GcrStatus {
    guard(|| {
        let m = GcnModel::load(path_arg(path)?).map_err(lib_err)?;
        emit(out, GcrModel(m))
    })
}

/// # Safety
/// `m` must be a live model handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gcr_model_save(m: *const GcrModel, path: *const c_char) -> GcrStatus {
    guard(|| deref(m, "model")?.0.save(path_arg(path)?).map_err(lib_err))
}

/// # Safety
/// `m` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gcr_model_free(m: *mut GcrModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Removes every edge of `g` whose predicted probability is below `p_cut`.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcr_infer_prune(
    m: *const GcrModel,
    g: *const GcrGraph,
    e: *const GcrEmbeddings,
    p_cut: f64,
    out: *mut *mut GcrGraph,
) -> GcrStatus {
    guard(|| {
        let (m, g, e) = (deref(m, "model")?, deref(g, "graph")?, deref(e, "embeddings")?);
        let adjacency = RefineConfig::default().train.adjacency;
        let (pruned, _) = infer_prune(&m.0, &g.0, &e.0, p_cut, adjacency).map_err(lib_err)?;
        emit(out, GcrGraph(pruned))
    })
}

/// Trains a GCN on the most reliable classes of `labels` with default
/// settings, prunes `g` and re-clusters at `score_threshold`. `out_model`
/// may be null; it receives null when training was skipped.
///
/// # Safety
/// Handles must be live; `out_labels` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcr_refine(
    g: *const GcrGraph,
    e: *const GcrEmbeddings,
    labels: *const GcrLabels,
    score_threshold: f64,
    seed: u64,
    out_labels: *mut *mut GcrLabels,
    out_model: *mut *mut GcrModel,
) -> GcrStatus {
    guard(|| {
        let (g, e, l) = (deref(g, "graph")?, deref(e, "embeddings")?, deref(labels, "labels")?);
        if out_labels.is_null() {
            return Err(null("output pointer"));
        }
        let mut cfg = RefineConfig {
            score_threshold,
            ..RefineConfig::default()
        };
        cfg.train.seed = seed;
        let model = cfg.init_model(e.0.d(), seed).map_err(lib_err)?;
        let outcome = refine(&g.0, &e.0, &l.0, &model, &cfg).map_err(lib_err)?;
        if !out_model.is_null() {
            *out_model = outcome
                .model
                .map_or(ptr::null_mut(), |m| Box::into_raw(Box::new(GcrModel(m))));
        }
        emit(out_labels, GcrLabels(outcome.labels))
    })
}
