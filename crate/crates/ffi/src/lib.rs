//! C ABI for embrec.
//!
//! Every function returns an [`EmbrecStatus`] and writes results through out
//! pointers. Handles are opaque and must be released with the matching
//! `*_free`. On failure [`embrec_last_error`] holds a message for the calling
//! thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use embrec::corpus::ItemRecord;
use embrec::nn::{load_checkpoint, ModelParams};
use embrec::pipeline::{ResultsStore, Source};
use embrec::retrieval::{retrieve, ClusteredIndex};
use embrec::towers::{encode_item, Featurizer};
use embrec::Error;

/// Result of every call. Values 2-4 match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbrecStatus {
    Ok = 0,
    /// Lookup of an unknown user; not an error.
    NotFound = 1,
    Config = 2,
    /// Missing, corrupt or inconsistent files and inputs.
    Data = 3,
    Numeric = 4,
    /// Null pointer, bad UTF-8, index out of range, wrong buffer size.
    InvalidArgument = 5,
    Panic = 6,
}

/// Loaded results store.
pub struct EmbrecStore {
    inner: ResultsStore,
}

/// Loaded clustered index.
pub struct EmbrecIndex {
    inner: ClusteredIndex,
}

/// Checkpoint plus the vocabularies it was trained with.
pub struct EmbrecModel {
    params: ModelParams,
    featurizer: Featurizer,
}

/// Ranked `(item id, score)` list.
pub struct EmbrecList {
    ids: Vec<CString>,
    scores: Vec<f32>,
    fallback: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Fail(EmbrecStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match e.exit_code() {
            2 => EmbrecStatus::Config,
            4 => EmbrecStatus::Numeric,
            _ => EmbrecStatus::Data,
        };
        Fail(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(EmbrecStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<EmbrecStatus, Fail>) -> EmbrecStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => {
            set_error(String::new());
            s
        }
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            EmbrecStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(invalid(format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("`{name}` is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| invalid(format!("`{name}` is null")))
}

unsafe fn out_arg<T>(out: *mut *mut T, value: T) -> Result<EmbrecStatus, Fail> {
    if out.is_null() {
        return Err(invalid("out pointer is null"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(EmbrecStatus::Ok)
}

fn list(items: Vec<(String, f32)>, fallback: bool) -> Result<EmbrecList, Fail> {
    let mut ids = Vec::with_capacity(items.len());
    let mut scores = Vec::with_capacity(items.len());
    for (id, s) in items {
        ids.push(CString::new(id).map_err(|_| invalid("item id holds a NUL byte"))?);
        scores.push(s);
    }
    Ok(EmbrecList { ids, scores, fallback })
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn embrec_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, static.
#[no_mangle]
pub extern "C" fn embrec_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ------------------------------------------------------------------ store

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn embrec_store_open(path: *const c_char, out: *mut *mut EmbrecStore) -> EmbrecStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        let inner = ResultsStore::load(&path)?;
        out_arg(out, EmbrecStore { inner })
    })
}

/// # Safety
/// `store` must come from [`embrec_store_open`] or be null.
#[no_mangle]
pub unsafe extern "C" fn embrec_store_free(store: *mut EmbrecStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// # Safety
/// `store` must be a live handle; `out_users` must be writable.
#[no_mangle]
pub unsafe extern "C" fn embrec_store_len(store: *const EmbrecStore, out_users: *mut usize) -> EmbrecStatus {
    guard(|| {
        let s = ref_arg(store, "store")?;
        if out_users.is_null() {
            return Err(invalid("`out_users` is null"));
        }
        *out_users = s.inner.entries.len();
        Ok(EmbrecStatus::Ok)
    })
}

/// Stored list of one user. Unknown users give `NotFound` and leave `*out`
/// untouched.
///
/// # Safety
/// `store` must be a live handle, `user` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn embrec_store_lookup(
    store: *const EmbrecStore,
    user: *const c_char,
    out: *mut *mut EmbrecList,
) -> EmbrecStatus {
    guard(|| {
        let s = ref_arg(store, "store")?;
        let user = str_arg(user, "user")?;
        match s.inner.entries.get(user) {
            Some(e) => out_arg(out, list(e.items.clone(), e.source == Source::Fallback)?),
            None => Ok(EmbrecStatus::NotFound),
        }
    })
}

// ------------------------------------------------------------------ lists

/// # Safety
/// `list` must be a live handle or null (which counts as empty).
#[no_mangle]
pub unsafe extern "C" fn embrec_list_len(list: *const EmbrecList) -> usize {
    list.as_ref().map_or(0, |l| l.ids.len())
}

/// Item id at rank `i`, owned by the list; null when out of range.
///
/// # Safety
/// `list` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn embrec_list_item_id(list: *const EmbrecList, i: usize) -> *const c_char {
    list.as_ref()
        .and_then(|l| l.ids.get(i))
        .map_or(ptr::null(), |c| c.as_ptr())
}

/// Score at rank `i`; NaN when out of range.
///
/// # Safety
/// `list` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn embrec_list_score(list: *const EmbrecList, i: usize) -> f32 {
    list.as_ref()
        .and_then(|l| l.scores.get(i).copied())
        .unwrap_or(f32::NAN)
}

/// 1 when the list is the popularity fallback for a user without embedding.
///
/// # Safety
/// `list` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn embrec_list_is_fallback(list: *const EmbrecList) -> i32 {
    list.as_ref().is_some_and(|l| l.fallback) as i32
}

/// # Safety
/// `list` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn embrec_list_free(list: *mut EmbrecList) {
    if !list.is_null() {
        drop(Box::from_raw(list));
    }
}

// ------------------------------------------------------------------ index

/// # Safety
/// `path` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn embrec_index_open(path: *const c_char, out: *mut *mut EmbrecIndex) -> EmbrecStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        let inner = ClusteredIndex::load(&path)?;
        out_arg(out, EmbrecIndex { inner })
    })
}

/// # Safety
/// `index` must come from [`embrec_index_open`] or be null.
#[no_mangle]
pub unsafe extern "C" fn embrec_index_free(index: *mut EmbrecIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Embedding width; 0 for a null handle.
///
/// # Safety
/// `index` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn embrec_index_dim(index: *const EmbrecIndex) -> usize {
    index.as_ref().map_or(0, |i| i.inner.dim)
}

/// Top `n` items for a user vector, probing the `m` nearest clusters.
///
/// # Safety
/// `index` must be a live handle, `user` must point at `dim` floats, `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn embrec_index_retrieve(
    index: *const EmbrecIndex,
    user: *const f32,
    dim: usize,
    n: usize,
    m: usize,
    out: *mut *mut EmbrecList,
) -> EmbrecStatus {
    guard(|| {
        let index = ref_arg(index, "index")?;
        if user.is_null() {
            return Err(invalid("`user` is null"));
        }
        if dim != index.inner.dim {
            return Err(invalid(format!("user vector has {dim} values, index wants {}", index.inner.dim)));
        }
        let u = std::slice::from_raw_parts(user, dim);
        let r = retrieve(&index.inner, u, n, m)?;
        out_arg(out, list(r.items, false)?)
    })
}

// ------------------------------------------------------------------ model

/// # Safety
/// All paths must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn embrec_model_open(
    checkpoint: *const c_char,
    title_vocab: *const c_char,
    aspect_vocab: *const c_char,
    out: *mut *mut EmbrecModel,
) -> EmbrecStatus {
    guard(|| {
        let params = load_checkpoint(&PathBuf::from(str_arg(checkpoint, "checkpoint")?))?;
        let featurizer = Featurizer::load(
            &PathBuf::from(str_arg(title_vocab, "title_vocab")?),
            &PathBuf::from(str_arg(aspect_vocab, "aspect_vocab")?),
            params.shape.categories,
        )?;
        featurizer.check_compatible(&params.shape)?;
        out_arg(out, EmbrecModel { params, featurizer })
    })
}

/// # Safety
/// `model` must come from [`embrec_model_open`] or be null.
#[no_mangle]
pub unsafe extern "C" fn embrec_model_free(model: *mut EmbrecModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Embedding width; 0 for a null handle.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn embrec_model_dim(model: *const EmbrecModel) -> usize {
    model.as_ref().map_or(0, |m| m.params.hyper.dim)
}

/// Item tower output for one listing, written to `out[0..out_len]`;
/// `out_len` must equal the model dim.
///
/// # Safety
/// `title` NUL-terminated; `aspects` points at `n_aspects` NUL-terminated
/// strings (may be null when `n_aspects` is 0); `out` holds `out_len` floats.
#[no_mangle]
pub unsafe extern "C" fn embrec_model_embed_item(
    model: *const EmbrecModel,
    title: *const c_char,
    category_id: u32,
    aspects: *const *const c_char,
    n_aspects: usize,
    out: *mut f32,
    out_len: usize,
) -> EmbrecStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let title = str_arg(title, "title")?.to_string();
        let mut asp = Vec::with_capacity(n_aspects);
        if n_aspects > 0 {
            if aspects.is_null() {
                return Err(invalid("`aspects` is null"));
            }
            for i in 0..n_aspects {
                asp.push(str_arg(*aspects.add(i), "aspect")?.to_string());
            }
        }
        if out.is_null() || out_len != m.params.hyper.dim {
            return Err(invalid(format!("output buffer must hold {} floats", m.params.hyper.dim)));
        }
        let rec = ItemRecord {
            item_id: String::new(),
            title,
            category_id,
            aspects: asp,
        };
        let v = encode_item(&m.params, &m.featurizer.item(&rec))?;
        std::slice::from_raw_parts_mut(out, out_len).copy_from_slice(v.values());
        Ok(EmbrecStatus::Ok)
    })
}
