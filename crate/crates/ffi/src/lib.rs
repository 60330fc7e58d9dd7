//! C interface to the `beeformer` library.
//!
//! Objects are opaque handles created by `bf_*_new`/`bf_*_load` and released
//! with the matching `bf_*_free`. Every fallible call returns a
//! [`BfStatus`]; on failure [`bf_last_error_message`] describes the error
//! for the calling thread. Output pointers are written only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use beeformer::dataio::matfile::Precision;
use beeformer::dataio::{self, DatasetBundle};
use beeformer::encoders::{
    build_encoder, load_checkpoint, save_checkpoint, CheckpointMeta, EncoderKind, EncoderSpec,
    ItemEncoder,
};
use beeformer::recsys::{score_cbf, top_k_among, EmbeddingMatrix};
use beeformer::training::{train, TrainConfig};
use beeformer::{DenseMatrix, ElsaObjective, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Config = 4,
    Data = 5,
    Numeric = 6,
    Corrupt = 7,
    Io = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Training settings; obtain defaults from [`bf_train_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BfTrainConfig {
    pub m: usize,
    pub batch_users: usize,
    pub epochs: usize,
    pub lr: f64,
    pub item_chunk_size: usize,
    pub seed: u64,
    pub normalize_a: bool,
}

/// Interactions and item texts of a prepared dataset.
pub struct BfDataset {
    inner: DatasetBundle,
}

/// A trainable item encoder bound to one dataset's catalog.
pub struct BfEncoder {
    inner: Box<dyn ItemEncoder>,
    item_ids: Vec<String>,
    normalize_a: bool,
}

pub struct BfEmbeddings {
    inner: EmbeddingMatrix,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> BfStatus {
    match e.class() {
        "shape" => BfStatus::Shape,
        "config" => BfStatus::Config,
        "data" => BfStatus::Data,
        "numeric" => BfStatus::Numeric,
        "corrupt" => BfStatus::Corrupt,
        "io" => BfStatus::Io,
        _ => BfStatus::InvalidArgument,
    }
}

struct Fail(BfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> BfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BfStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            BfStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    str_arg(p, what).map(PathBuf::from)
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(BfStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(BfStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref()
        .ok_or_else(|| Fail(BfStatus::NullPointer, format!("{what} is null")))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut()
        .ok_or_else(|| Fail(BfStatus::NullPointer, format!("{what} is null")))
}

fn out_ptr<T>(p: *mut T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail(BfStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `bundle_dir` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bf_dataset_load(
    bundle_dir: *const c_char,
    out: *mut *mut BfDataset,
) -> BfStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let dir = path_arg(bundle_dir, "bundle_dir")?;
        let inner = DatasetBundle::load(&dir)?;
        *out = Box::into_raw(Box::new(BfDataset { inner }));
        Ok(())
    })
}

/// # Safety
/// `ds` must come from [`bf_dataset_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bf_dataset_free(ds: *mut BfDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// # Safety
/// `ds` must be a live dataset; output pointers may be NULL to skip.
#[no_mangle]
pub unsafe extern "C" fn bf_dataset_dims(
    ds: *const BfDataset,
    n_users: *mut usize,
    n_items: *mut usize,
    n_interactions: *mut usize,
) -> BfStatus {
    guard(|| {
        let x = &handle(ds, "dataset")?.inner.interactions;
        for (p, v) in [(n_users, x.n_users()), (n_items, x.n_items()), (n_interactions, x.nnz())] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Creates a freshly initialized encoder over the dataset's items.
/// `kind` is one of `table`, `bow-linear`, `bow-mlp`, `frozen-head`;
/// `frozen_path` is only read for `frozen-head` and may otherwise be NULL.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn bf_encoder_new(
    ds: *const BfDataset,
    kind: *const c_char,
    dim: usize,
    hash_bits: u32,
    hidden: usize,
    bias: bool,
    frozen_path: *const c_char,
    seed: u64,
    out: *mut *mut BfEncoder,
) -> BfStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let ds = &handle(ds, "dataset")?.inner;
        let kind: EncoderKind = str_arg(kind, "kind")?.parse()?;
        let spec = EncoderSpec {
            kind,
            dim,
            hash_bits: matches!(kind, EncoderKind::BowLinear | EncoderKind::BowMlp)
                .then_some(hash_bits),
            hidden: (kind == EncoderKind::BowMlp).then_some(hidden),
            bias,
            frozen_path: if kind == EncoderKind::FrozenHead {
                Some(path_arg(frozen_path, "frozen_path")?)
            } else {
                None
            },
        };
        let inner = build_encoder(&spec, &ds.corpus, seed)?;
        *out = Box::into_raw(Box::new(BfEncoder {
            inner,
            item_ids: ds.corpus.item_ids().to_vec(),
            normalize_a: true,
        }));
        Ok(())
    })
}

/// Loads a checkpoint written by [`bf_encoder_save`] or `beeformer train`.
///
/// # Safety
/// Pointers must be valid; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn bf_encoder_load(
    ds: *const BfDataset,
    path: *const c_char,
    out: *mut *mut BfEncoder,
) -> BfStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let ds = &handle(ds, "dataset")?.inner;
        let (inner, meta) = load_checkpoint(&path_arg(path, "path")?, &ds.corpus)?;
        *out = Box::into_raw(Box::new(BfEncoder {
            inner,
            item_ids: ds.corpus.item_ids().to_vec(),
            normalize_a: meta.normalize_a,
        }));
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn bf_encoder_save(enc: *const BfEncoder, path: *const c_char) -> BfStatus {
    guard(|| {
        let enc = handle(enc, "encoder")?;
        let meta = CheckpointMeta {
            encoder: enc.inner.spec(),
            item_ids: enc.item_ids.clone(),
            normalize_a: enc.normalize_a,
        };
        save_checkpoint(enc.inner.as_ref(), &meta, &path_arg(path, "path")?)?;
        Ok(())
    })
}

/// # Safety
/// `enc` must come from `bf_encoder_new`/`bf_encoder_load`.
#[no_mangle]
pub unsafe extern "C" fn bf_encoder_free(enc: *mut BfEncoder) {
    if !enc.is_null() {
        drop(Box::from_raw(enc));
    }
}

/// # Safety
/// `enc` must be a live encoder or NULL.
#[no_mangle]
pub unsafe extern "C" fn bf_encoder_n_params(enc: *const BfEncoder) -> usize {
    enc.as_ref().map_or(0, |e| e.inner.n_params())
}

#[no_mangle]
pub extern "C" fn bf_train_config_default() -> BfTrainConfig {
    BfTrainConfig {
        m: 1024,
        batch_users: 128,
        epochs: 5,
        lr: 1e-3,
        item_chunk_size: 256,
        seed: 0,
        normalize_a: true,
    }
}

/// Trains `enc` on the dataset's interactions; `final_loss` (may be NULL)
/// receives the loss of the last step.
///
/// # Safety
/// Pointers must be valid; `enc` must have been created for `ds`.
#[no_mangle]
pub unsafe extern "C" fn bf_train(
    enc: *mut BfEncoder,
    ds: *const BfDataset,
    config: *const BfTrainConfig,
    final_loss: *mut f64,
) -> BfStatus {
    guard(|| {
        let enc = handle_mut(enc, "encoder")?;
        let ds = &handle(ds, "dataset")?.inner;
        let c = *handle(config, "config")?;
        let cfg = TrainConfig {
            m: c.m,
            batch_users: c.batch_users,
            epochs: c.epochs,
            lr: c.lr,
            item_chunk_size: c.item_chunk_size,
            seed: c.seed,
            normalize_a: c.normalize_a,
        };
        let report = train(enc.inner.as_mut(), &ds.interactions, &cfg)?;
        enc.normalize_a = c.normalize_a;
        if !final_loss.is_null() {
            *final_loss = report.steps.last().map_or(f64::NAN, |s| s.loss);
        }
        Ok(())
    })
}

/// Encodes every item of the encoder's catalog, row-normalized when the
/// encoder was trained with a normalized decoder.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn bf_embed(
    enc: *const BfEncoder,
    chunk_size: usize,
    out: *mut *mut BfEmbeddings,
) -> BfStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let enc = handle(enc, "encoder")?;
        if chunk_size == 0 {
            return Err(Fail(BfStatus::Config, "chunk_size must be at least 1".into()));
        }
        let all: Vec<usize> = (0..enc.inner.n_items()).collect();
        let blocks = all
            .chunks(chunk_size)
            .map(|c| enc.inner.encode(c))
            .collect::<beeformer::Result<Vec<_>>>()?;
        let a = ElsaObjective::new(enc.normalize_a).effective_a(&DenseMatrix::vstack(&blocks)?);
        let inner = EmbeddingMatrix {
            a,
            item_ids: enc.item_ids.clone(),
            normalized: enc.normalize_a,
        };
        *out = Box::into_raw(Box::new(BfEmbeddings { inner }));
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn bf_embeddings_load(
    path: *const c_char,
    out: *mut *mut BfEmbeddings,
) -> BfStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let (inner, _) = dataio::import_embeddings(&path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(BfEmbeddings { inner }));
        Ok(())
    })
}

/// Writes the embedding file, as 32-bit floats when `single_precision`.
///
/// # Safety
/// Pointers must be valid; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn bf_embeddings_save(
    emb: *const BfEmbeddings,
    path: *const c_char,
    single_precision: bool,
) -> BfStatus {
    guard(|| {
        let emb = handle(emb, "embeddings")?;
        let precision = if single_precision { Precision::F32 } else { Precision::F64 };
        dataio::export_embeddings(&emb.inner, &path_arg(path, "path")?, precision)?;
        Ok(())
    })
}

/// # Safety
/// `emb` must be live; output pointers may be NULL to skip.
#[no_mangle]
pub unsafe extern "C" fn bf_embeddings_dims(
    emb: *const BfEmbeddings,
    n_rows: *mut usize,
    n_cols: *mut usize,
) -> BfStatus {
    guard(|| {
        let a = &handle(emb, "embeddings")?.inner.a;
        if !n_rows.is_null() {
            *n_rows = a.n_rows();
        }
        if !n_cols.is_null() {
            *n_cols = a.n_cols();
        }
        Ok(())
    })
}

/// Copies the row-major matrix into `buf` of `len` doubles.
///
/// # Safety
/// `buf` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn bf_embeddings_copy(
    emb: *const BfEmbeddings,
    buf: *mut f64,
    len: usize,
) -> BfStatus {
    guard(|| {
        let data = handle(emb, "embeddings")?.inner.a.as_slice();
        out_ptr(buf, "buf")?;
        if len < data.len() {
            return Err(Fail(
                BfStatus::BufferTooSmall,
                format!("buffer holds {len} values, need {}", data.len()),
            ));
        }
        std::ptr::copy_nonoverlapping(data.as_ptr(), buf, data.len());
        Ok(())
    })
}

/// # Safety
/// `emb` must come from `bf_embed`/`bf_embeddings_load`.
#[no_mangle]
pub unsafe extern "C" fn bf_embeddings_free(emb: *mut BfEmbeddings) {
    if !emb.is_null() {
        drop(Box::from_raw(emb));
    }
}

/// Cosine-similarity top-`k` items for user `user` of `ds`, excluding
/// items the user already has. Writes up to `k` item indices and scores
/// and the actual count to `out_len`.
///
/// # Safety
/// `out_items` and `out_scores` must hold `k` elements each.
#[no_mangle]
pub unsafe extern "C" fn bf_recommend(
    emb: *const BfEmbeddings,
    ds: *const BfDataset,
    user: usize,
    k: usize,
    out_items: *mut usize,
    out_scores: *mut f64,
    out_len: *mut usize,
) -> BfStatus {
    guard(|| {
        let emb = &handle(emb, "embeddings")?.inner;
        let x = &handle(ds, "dataset")?.inner.interactions;
        out_ptr(out_items, "out_items")?;
        out_ptr(out_scores, "out_scores")?;
        out_ptr(out_len, "out_len")?;
        if emb.item_ids != x.item_ids() {
            return Err(Fail(
                BfStatus::Data,
                "embedding catalog does not match the dataset".into(),
            ));
        }
        if user >= x.n_users() {
            return Err(Fail(
                BfStatus::Shape,
                format!("user {user} out of range for {} users", x.n_users()),
            ));
        }
        let all: Vec<usize> = (0..x.n_items()).collect();
        let input = x.gather(&[user], &all)?;
        let scores = score_cbf(&input, emb, &all)?;
        let ranked = top_k_among(&scores, None, &input, k, true)?;
        let items = &ranked[0].items;
        for (n, &(i, s)) in items.iter().enumerate() {
            *out_items.add(n) = i;
            *out_scores.add(n) = s;
        }
        *out_len = items.len();
        Ok(())
    })
}
