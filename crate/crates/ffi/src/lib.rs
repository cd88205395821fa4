//! C ABI for the docret engine.
//!
//! Every fallible call returns a [`DocretStatus`]; on failure the message is
//! available from [`docret_last_error`] on the same thread. Handles are
//! opaque and must be released with their `_free` function.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::collections::HashMap;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use docret::index::{build_dense_index, load_index, save_index, DenseIndex, HnswParams, SearchMode, StoredIndex};
use docret::merge::{load_checkpoint, merge, save_checkpoint, CheckpointTensors, MergeConfig, MergeMethod};
use docret::providers::{EmbedInput, EmbeddingProvider, SyntheticProvider};
use docret::{scoring, DenseEmbedding, DocId, Error, MultiVectorEmbedding};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DocretStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    DimMismatch = 4,
    ZeroVector = 5,
    InvalidData = 6,
    Io = 7,
    BufferTooSmall = 8,
    Internal = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DocretMergeMethod {
    Linear = 0,
    Slerp = 1,
}

/// One search result: row position in the index and its score.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DocretHit {
    pub position: usize,
    pub score: f64,
}

pub struct DocretProvider {
    inner: SyntheticProvider,
}

pub struct DocretIndex {
    inner: DenseIndex,
    ids: Vec<CString>,
    positions: HashMap<DocId, usize>,
}

pub struct DocretCheckpoint {
    inner: CheckpointTensors,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DocretStatus {
    match e {
        Error::InvalidConfig(_) | Error::DimError { .. } => DocretStatus::InvalidArgument,
        Error::DimMismatch { .. } => DocretStatus::DimMismatch,
        Error::ZeroVector => DocretStatus::ZeroVector,
        Error::Io { .. } => DocretStatus::Io,
        Error::Internal(_) => DocretStatus::Internal,
        _ => DocretStatus::InvalidData,
    }
}

struct Fail(DocretStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

type FfiResult<T> = std::result::Result<T, Fail>;

fn guard(f: impl FnOnce() -> FfiResult<()>) -> DocretStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DocretStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            DocretStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(DocretStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(DocretStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn floats<'a>(p: *const f32, len: usize, what: &str) -> FfiResult<&'a [f32]> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next docret call on the same thread.
#[no_mangle]
pub extern "C" fn docret_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

// ------------------------------------------------------------------ scoring

#[no_mangle]
pub unsafe extern "C" fn docret_cosine(a: *const f32, b: *const f32, dim: usize, out: *mut f64) -> DocretStatus {
    guard(|| {
        let a = floats(a, dim, "a")?;
        let b = floats(b, dim, "b")?;
        *out_ptr(out, "out")? = scoring::cosine_slices(a, b)?;
        Ok(())
    })
}

/// MaxSim of row-major token matrices `q` (`nq x dim`) and `d` (`nd x dim`).
/// Rows are used as given, without normalization.
#[no_mangle]
pub unsafe extern "C" fn docret_maxsim(
    q: *const f32,
    nq: usize,
    d: *const f32,
    nd: usize,
    dim: usize,
    out: *mut f64,
) -> DocretStatus {
    guard(|| {
        let q = MultiVectorEmbedding::from_flat(floats(q, nq * dim, "q")?.to_vec(), nq, dim)?;
        let d = MultiVectorEmbedding::from_flat(floats(d, nd * dim, "d")?.to_vec(), nd, dim)?;
        *out_ptr(out, "out")? = scoring::maxsim(&q, &d)?;
        Ok(())
    })
}

// ------------------------------------------------------------------ provider

#[no_mangle]
pub unsafe extern "C" fn docret_synthetic_new(seed: u64, dim: usize, out: *mut *mut DocretProvider) -> DocretStatus {
    guard(|| {
        let slot = out_ptr(out, "out")?;
        let inner = SyntheticProvider::new(seed, dim)?;
        *slot = Box::into_raw(Box::new(DocretProvider { inner }));
        Ok(())
    })
}

/// Embeds `text` into `out` (capacity `cap` floats); `written` receives the
/// dimension. Returns `BufferTooSmall` when `cap` is short.
#[no_mangle]
pub unsafe extern "C" fn docret_provider_embed(
    provider: *const DocretProvider,
    text: *const c_char,
    out: *mut f32,
    cap: usize,
    written: *mut usize,
) -> DocretStatus {
    guard(|| {
        let p = handle(provider, "provider")?;
        let text = str_arg(text, "text")?;
        let written = out_ptr(written, "written")?;
        let emb = p.inner.embed_dense(&EmbedInput::text(text))?;
        *written = emb.dim();
        if cap < emb.dim() {
            return Err(Fail(
                DocretStatus::BufferTooSmall,
                format!("need {} floats, got {cap}", emb.dim()),
            ));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        std::slice::from_raw_parts_mut(out, emb.dim()).copy_from_slice(emb.values());
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn docret_provider_free(provider: *mut DocretProvider) {
    if !provider.is_null() {
        drop(Box::from_raw(provider));
    }
}

// ------------------------------------------------------------------ index

fn wrap_index(inner: DenseIndex) -> FfiResult<*mut DocretIndex> {
    let ids = inner
        .ids()
        .iter()
        .map(|id| {
            CString::new(id.as_str()).map_err(|_| Fail(DocretStatus::InvalidData, format!("id `{id}` holds NUL")))
        })
        .collect::<FfiResult<Vec<_>>>()?;
    let positions = inner.ids().iter().cloned().enumerate().map(|(i, id)| (id, i)).collect();
    Ok(Box::into_raw(Box::new(DocretIndex { inner, ids, positions })))
}

/// Builds a dense index from `n` ids and a row-major `n x dim` matrix.
/// A nonzero `ann` also builds an HNSW graph with default parameters.
#[no_mangle]
pub unsafe extern "C" fn docret_index_build(
    ids: *const *const c_char,
    vectors: *const f32,
    n: usize,
    dim: usize,
    ann: c_int,
    out: *mut *mut DocretIndex,
) -> DocretStatus {
    guard(|| {
        let slot = out_ptr(out, "out")?;
        if ids.is_null() {
            return Err(null("ids"));
        }
        let matrix = floats(vectors, n * dim, "vectors")?;
        let mut records = Vec::with_capacity(n);
        for i in 0..n {
            let id = DocId::new(str_arg(*ids.add(i), "id")?)?;
            records.push((id, DenseEmbedding::new(matrix[i * dim..(i + 1) * dim].to_vec())?));
        }
        let params = (ann != 0).then(HnswParams::default);
        *slot = wrap_index(build_dense_index(records, params)?)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn docret_index_load(dir: *const c_char, out: *mut *mut DocretIndex) -> DocretStatus {
    guard(|| {
        let slot = out_ptr(out, "out")?;
        let (_, stored) = load_index(Path::new(str_arg(dir, "dir")?))?;
        match stored {
            StoredIndex::Dense(ix) => *slot = wrap_index(ix)?,
            StoredIndex::MultiVector(_) => {
                return Err(Fail(
                    DocretStatus::InvalidData,
                    "multi-vector indexes are not exposed".into(),
                ))
            }
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn docret_index_save(index: *const DocretIndex, dir: *const c_char) -> DocretStatus {
    guard(|| {
        let ix = handle(index, "index")?;
        let dir = str_arg(dir, "dir")?;
        save_index(Path::new(dir), &StoredIndex::Dense(ix.inner.clone()), None, None)?;
        Ok(())
    })
}

/// Number of documents, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn docret_index_len(index: *const DocretIndex) -> usize {
    index.as_ref().map_or(0, |ix| ix.inner.len())
}

/// Id of the document at `position`, or NULL when out of range. Borrowed
/// from the index; valid until it is freed.
#[no_mangle]
pub unsafe extern "C" fn docret_index_id(index: *const DocretIndex, position: usize) -> *const c_char {
    index
        .as_ref()
        .and_then(|ix| ix.ids.get(position))
        .map_or(ptr::null(), |c| c.as_ptr())
}

/// Top-`k` search. `hits` must hold `k` entries; `found` receives the count
/// written. A nonzero `ann` uses the HNSW graph.
#[no_mangle]
pub unsafe extern "C" fn docret_index_search(
    index: *const DocretIndex,
    query: *const f32,
    dim: usize,
    k: usize,
    ann: c_int,
    hits: *mut DocretHit,
    found: *mut usize,
) -> DocretStatus {
    guard(|| {
        let ix = handle(index, "index")?;
        let found = out_ptr(found, "found")?;
        *found = 0;
        let q = DenseEmbedding::new(floats(query, dim, "query")?.to_vec())?;
        let mode = if ann != 0 { SearchMode::Ann } else { SearchMode::Exact };
        let results = ix.inner.search(&q, k, mode)?;
        if hits.is_null() && !results.is_empty() {
            return Err(null("hits"));
        }
        for (i, r) in results.iter().enumerate() {
            *hits.add(i) = DocretHit {
                position: ix.positions[&r.doc],
                score: r.score,
            };
        }
        *found = results.len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn docret_index_free(index: *mut DocretIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

// ------------------------------------------------------------------ checkpoints

#[no_mangle]
pub unsafe extern "C" fn docret_checkpoint_load(path: *const c_char, out: *mut *mut DocretCheckpoint) -> DocretStatus {
    guard(|| {
        let slot = out_ptr(out, "out")?;
        let inner = load_checkpoint(Path::new(str_arg(path, "path")?))?;
        *slot = Box::into_raw(Box::new(DocretCheckpoint { inner }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn docret_checkpoint_save(ckpt: *const DocretCheckpoint, path: *const c_char) -> DocretStatus {
    guard(|| {
        let c = handle(ckpt, "checkpoint")?;
        save_checkpoint(Path::new(str_arg(path, "path")?), &c.inner)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn docret_checkpoint_tensor_count(ckpt: *const DocretCheckpoint) -> usize {
    ckpt.as_ref().map_or(0, |c| c.inner.tensors.len())
}

/// Merges two checkpoints with the same schema. `method` is a
/// `DocretMergeMethod` value. For SLERP `alpha = 0`
/// returns `a`; for linear `alpha` is the weight of `a`.
#[no_mangle]
pub unsafe extern "C" fn docret_checkpoint_merge(
    a: *const DocretCheckpoint,
    b: *const DocretCheckpoint,
    method: c_int,
    alpha: f64,
    out: *mut *mut DocretCheckpoint,
) -> DocretStatus {
    guard(|| {
        let a = handle(a, "a")?;
        let b = handle(b, "b")?;
        let slot = out_ptr(out, "out")?;
        let config = MergeConfig {
            method: match method {
                m if m == DocretMergeMethod::Linear as c_int => MergeMethod::Linear,
                m if m == DocretMergeMethod::Slerp as c_int => MergeMethod::Slerp,
                m => return Err(Fail(DocretStatus::InvalidArgument, format!("unknown merge method {m}"))),
            },
            alpha,
            ..MergeConfig::default()
        };
        let inner = merge(&a.inner, &b.inner, &config)?;
        *slot = Box::into_raw(Box::new(DocretCheckpoint { inner }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn docret_checkpoint_free(ckpt: *mut DocretCheckpoint) {
    if !ckpt.is_null() {
        drop(Box::from_raw(ckpt));
    }
}
