//! C ABI for the hashing toolkit.
//!
//! Conventions:
//!
//! * Handles (`DmhModel`, `DmhCodes`) are opaque; create them through the
//!   constructors here and release them with the matching `_free` call.
//! * Every fallible function returns a [`DmhStatus`]; on anything but
//!   `DMH_STATUS_OK` a human-readable explanation is available from
//!   [`dmh_last_error_message`] until the next failure on the same thread.
//! * Output parameters are written only on success.
//! * Matrices cross the boundary as row-major `double` buffers; per-query
//!   ground truth crosses as offset/index arrays in the usual CSR layout.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use ndarray::Array2;

use dmh_core::error::DmhError;
use dmh_core::io::{self, ModelArtifact};
use dmh_core::optimizer::{train, TrainConfig, ViewHyper};
use dmh_core::{encode_view, eval, hamming_distance, PackedCodes};

/// Status code returned by every fallible function of this library.
#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmhStatus {
    /// The call succeeded.
    Ok = 0,
    /// An unclassified failure; see `dmh_last_error_message`.
    Error = 1,
    /// A contract violation: bad shapes, indices, or configuration.
    Contract = 2,
    /// The training objective became non-finite.
    Diverged = 3,
    /// An I/O failure or a malformed file.
    Io = 4,
    /// A required pointer argument was null.
    NullArgument = 5,
}

/// A trained model: per-view projections plus the training configuration.
pub struct DmhModel {
    artifact: ModelArtifact,
}

/// A set of fixed-length binary codes, bit-packed.
pub struct DmhCodes {
    codes: PackedCodes,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let clean = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(clean).unwrap_or_default();
    });
}

fn fail(err: DmhError) -> DmhStatus {
    set_last_error(&err.to_string());
    match err {
        DmhError::Contract(_) | DmhError::InvalidConfig(_) => DmhStatus::Contract,
        DmhError::Diverged { .. } => DmhStatus::Diverged,
        DmhError::Io(_) | DmhError::Format(_) => DmhStatus::Io,
        _ => DmhStatus::Error,
    }
}

fn null_argument(name: &str) -> DmhStatus {
    set_last_error(&format!("{name} must not be null"));
    DmhStatus::NullArgument
}

fn contract(message: &str) -> DmhStatus {
    set_last_error(message);
    DmhStatus::Contract
}

/// Runs a body that may touch caller memory, converting panics into a
/// status instead of unwinding across the boundary.
fn guarded<F: FnOnce() -> DmhStatus>(body: F) -> DmhStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_last_error("internal panic");
            DmhStatus::Error
        }
    }
}

/// # Safety
/// `path` must be a valid NUL-terminated string.
unsafe fn path_from(ptr: *const c_char) -> Result<String, DmhStatus> {
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(s.to_owned()),
        Err(_) => Err(contract("path is not valid UTF-8")),
    }
}

/// Returns the explanation of the most recent failure on this thread, or
/// an empty string if nothing failed yet. The pointer stays valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dmh_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Returns the library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dmh_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Trains a model on `n_views` feature views of `n` samples each.
///
/// `views[v]` points at a row-major `n x dims[v]` matrix. `is_label_view`,
/// `alphas`, `betas` and `gammas` each hold one entry per view. Pass
/// `step_start`/`step_end`/`max_iterations`/`convergence_rtol` as the
/// training schedule (`convergence_rtol = 0` disables early stopping).
/// On success `*out_model` receives a handle owned by the caller.
///
/// # Safety
/// All pointers must be valid for the lengths implied above.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn dmh_train(
    n: usize,
    n_views: usize,
    dims: *const usize,
    views: *const *const f64,
    is_label_view: *const u8,
    alphas: *const f64,
    betas: *const f64,
    gammas: *const f64,
    code_length: usize,
    step_start: f64,
    step_end: f64,
    max_iterations: usize,
    convergence_rtol: f64,
    seed: u64,
    out_model: *mut *mut DmhModel,
) -> DmhStatus {
    guarded(|| {
        if out_model.is_null() {
            return null_argument("out_model");
        }
        for (ptr, name) in [
            (dims as *const u8, "dims"),
            (views as *const u8, "views"),
            (is_label_view, "is_label_view"),
            (alphas as *const u8, "alphas"),
            (betas as *const u8, "betas"),
            (gammas as *const u8, "gammas"),
        ] {
            if ptr.is_null() {
                return null_argument(name);
            }
        }
        if n_views == 0 {
            return contract("at least one view is required");
        }
        let dims = slice::from_raw_parts(dims, n_views);
        let view_ptrs = slice::from_raw_parts(views, n_views);
        let labels = slice::from_raw_parts(is_label_view, n_views);
        let alphas = slice::from_raw_parts(alphas, n_views);
        let betas = slice::from_raw_parts(betas, n_views);
        let gammas = slice::from_raw_parts(gammas, n_views);

        let mut matrices = Vec::with_capacity(n_views);
        for (v, (&ptr, &d)) in view_ptrs.iter().zip(dims).enumerate() {
            if ptr.is_null() {
                return null_argument(&format!("views[{v}]"));
            }
            let data = slice::from_raw_parts(ptr, n * d).to_vec();
            match Array2::from_shape_vec((n, d), data) {
                Ok(matrix) => matrices.push(matrix),
                Err(e) => return contract(&format!("view {v}: {e}")),
            }
        }
        let hyper: Vec<ViewHyper> = alphas
            .iter()
            .zip(betas)
            .zip(gammas)
            .map(|((&alpha, &beta), &gamma)| ViewHyper { alpha, beta, gamma })
            .collect();
        let config = TrainConfig {
            k_s: step_start,
            k_e: step_end,
            max_iter: max_iterations,
            convergence_rtol,
            seed,
        };
        match train(&matrices, &hyper, code_length, &config) {
            Ok(result) => {
                let artifact = ModelArtifact {
                    params: result.params,
                    is_label_view: labels.iter().map(|&b| b != 0).collect(),
                    config,
                };
                *out_model = Box::into_raw(Box::new(DmhModel { artifact }));
                DmhStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Writes a model to `path` in the documented binary format.
///
/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dmh_model_save(model: *const DmhModel, path: *const c_char) -> DmhStatus {
    guarded(|| {
        if model.is_null() {
            return null_argument("model");
        }
        if path.is_null() {
            return null_argument("path");
        }
        let path = match path_from(path) {
            Ok(p) => p,
            Err(status) => return status,
        };
        match io::write_model(path, &(*model).artifact) {
            Ok(()) => DmhStatus::Ok,
            Err(err) => fail(err),
        }
    })
}

/// Reads a model previously written by `dmh_model_save` (or the CLI).
/// On success `*out_model` receives a handle owned by the caller.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_model` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dmh_model_load(
    path: *const c_char,
    out_model: *mut *mut DmhModel,
) -> DmhStatus {
    guarded(|| {
        if out_model.is_null() {
            return null_argument("out_model");
        }
        if path.is_null() {
            return null_argument("path");
        }
        let path = match path_from(path) {
            Ok(p) => p,
            Err(status) => return status,
        };
        match io::read_model(path) {
            Ok(artifact) => {
                *out_model = Box::into_raw(Box::new(DmhModel { artifact }));
                DmhStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Number of views the model was trained on (label view included).
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dmh_model_view_count(model: *const DmhModel) -> usize {
    if model.is_null() {
        return 0;
    }
    (*model).artifact.params.len()
}

/// Code length in bits produced by the model.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dmh_model_code_length(model: *const DmhModel) -> usize {
    if model.is_null() {
        return 0;
    }
    (*model)
        .artifact
        .params
        .first()
        .map_or(0, |p| p.code_length())
}

/// Releases a model handle. Passing null is a no-op.
///
/// # Safety
/// `model` must be a handle from this library, released at most once.
#[no_mangle]
pub unsafe extern "C" fn dmh_model_free(model: *mut DmhModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Encodes a row-major `n x d` matrix with the model's view
/// `view_index`. On success `*out_codes` receives a handle owned by the
/// caller.
///
/// # Safety
/// All pointers must be valid; `data` must hold `n * d` doubles.
#[no_mangle]
pub unsafe extern "C" fn dmh_encode(
    model: *const DmhModel,
    view_index: usize,
    data: *const f64,
    n: usize,
    d: usize,
    out_codes: *mut *mut DmhCodes,
) -> DmhStatus {
    guarded(|| {
        if out_codes.is_null() {
            return null_argument("out_codes");
        }
        if model.is_null() {
            return null_argument("model");
        }
        if data.is_null() {
            return null_argument("data");
        }
        let artifact = &(*model).artifact;
        let Some(params) = artifact.params.get(view_index) else {
            return contract(&format!(
                "view index {view_index} out of range for {} views",
                artifact.params.len()
            ));
        };
        let buffer = slice::from_raw_parts(data, n * d).to_vec();
        let matrix = match Array2::from_shape_vec((n, d), buffer) {
            Ok(m) => m,
            Err(e) => return contract(&format!("query matrix: {e}")),
        };
        match encode_view(&matrix, params) {
            Ok(codes) => {
                *out_codes = Box::into_raw(Box::new(DmhCodes { codes }));
                DmhStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Writes codes to `path` in the documented packed format.
///
/// # Safety
/// `codes` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dmh_codes_save(codes: *const DmhCodes, path: *const c_char) -> DmhStatus {
    guarded(|| {
        if codes.is_null() {
            return null_argument("codes");
        }
        if path.is_null() {
            return null_argument("path");
        }
        let path = match path_from(path) {
            Ok(p) => p,
            Err(status) => return status,
        };
        match io::write_codes(path, &(*codes).codes) {
            Ok(()) => DmhStatus::Ok,
            Err(err) => fail(err),
        }
    })
}

/// Reads codes previously written by `dmh_codes_save` (or the CLI).
/// On success `*out_codes` receives a handle owned by the caller.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_codes` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dmh_codes_load(
    path: *const c_char,
    out_codes: *mut *mut DmhCodes,
) -> DmhStatus {
    guarded(|| {
        if out_codes.is_null() {
            return null_argument("out_codes");
        }
        if path.is_null() {
            return null_argument("path");
        }
        let path = match path_from(path) {
            Ok(p) => p,
            Err(status) => return status,
        };
        match io::read_codes(path) {
            Ok(codes) => {
                *out_codes = Box::into_raw(Box::new(DmhCodes { codes }));
                DmhStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Number of codes in the set.
///
/// # Safety
/// `codes` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dmh_codes_count(codes: *const DmhCodes) -> usize {
    if codes.is_null() {
        return 0;
    }
    (*codes).codes.len()
}

/// Code length in bits.
///
/// # Safety
/// `codes` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dmh_codes_code_length(codes: *const DmhCodes) -> usize {
    if codes.is_null() {
        return 0;
    }
    (*codes).codes.code_length()
}

/// Releases a codes handle. Passing null is a no-op.
///
/// # Safety
/// `codes` must be a handle from this library, released at most once.
#[no_mangle]
pub unsafe extern "C" fn dmh_codes_free(codes: *mut DmhCodes) {
    if !codes.is_null() {
        drop(Box::from_raw(codes));
    }
}

/// Hamming distance between code `i` of `a` and code `j` of `b`.
///
/// # Safety
/// `a`, `b` and `out_distance` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dmh_hamming_distance(
    a: *const DmhCodes,
    i: usize,
    b: *const DmhCodes,
    j: usize,
    out_distance: *mut u32,
) -> DmhStatus {
    guarded(|| {
        if out_distance.is_null() {
            return null_argument("out_distance");
        }
        if a.is_null() {
            return null_argument("a");
        }
        if b.is_null() {
            return null_argument("b");
        }
        let a = &(*a).codes;
        let b = &(*b).codes;
        if i >= a.len() || j >= b.len() {
            return contract(&format!(
                "code index out of range: {i} of {}, {j} of {}",
                a.len(),
                b.len()
            ));
        }
        match hamming_distance(a.row(i), b.row(j)) {
            Ok(distance) => {
                *out_distance = distance;
                DmhStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Reconstructs per-query relevant sets from a CSR layout.
///
/// # Safety
/// Caller guarantees the pointer/length contracts described on the
/// public functions below.
unsafe fn ground_truth_from_csr(
    n_queries: usize,
    offsets: *const usize,
    indices: *const usize,
) -> Result<Vec<Vec<usize>>, DmhStatus> {
    let offsets = slice::from_raw_parts(offsets, n_queries + 1);
    for pair in offsets.windows(2) {
        if pair[1] < pair[0] {
            return Err(contract("relevant_offsets must be non-decreasing"));
        }
    }
    let total = offsets[n_queries];
    let indices = slice::from_raw_parts(indices, total);
    Ok(offsets
        .windows(2)
        .map(|pair| indices[pair[0]..pair[1]].to_vec())
        .collect())
}

/// Mean average precision of `queries` against `database` under Hamming
/// ranking. The relevant database indices of query `q` are
/// `relevant_indices[relevant_offsets[q] .. relevant_offsets[q + 1]]`;
/// `relevant_offsets` holds `count(queries) + 1` entries. Queries with an
/// empty relevant set are excluded from the mean. `r_cutoff = 0` ranks
/// the whole database.
///
/// # Safety
/// All pointers must be valid for the lengths implied above.
#[no_mangle]
pub unsafe extern "C" fn dmh_mean_average_precision(
    queries: *const DmhCodes,
    database: *const DmhCodes,
    relevant_offsets: *const usize,
    relevant_indices: *const usize,
    r_cutoff: usize,
    out_map: *mut f64,
) -> DmhStatus {
    guarded(|| {
        if out_map.is_null() {
            return null_argument("out_map");
        }
        if queries.is_null() {
            return null_argument("queries");
        }
        if database.is_null() {
            return null_argument("database");
        }
        if relevant_offsets.is_null() {
            return null_argument("relevant_offsets");
        }
        if relevant_indices.is_null() {
            return null_argument("relevant_indices");
        }
        let queries = &(*queries).codes;
        let database = &(*database).codes;
        let gt = match ground_truth_from_csr(queries.len(), relevant_offsets, relevant_indices) {
            Ok(gt) => gt,
            Err(status) => return status,
        };
        let cutoff = if r_cutoff == 0 {
            database.len()
        } else {
            r_cutoff
        };
        match eval::mean_average_precision(queries, database, &gt, cutoff) {
            Ok(summary) => {
                *out_map = summary.map;
                DmhStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Hash-lookup precision/recall/F1 of `queries` against `database` at
/// the given Hamming `radius`, with ground truth in the same CSR layout
/// as `dmh_mean_average_precision`. Queries with an empty relevant set
/// are excluded from the averages.
///
/// # Safety
/// All pointers must be valid for the lengths implied above.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn dmh_lookup_f1(
    queries: *const DmhCodes,
    database: *const DmhCodes,
    relevant_offsets: *const usize,
    relevant_indices: *const usize,
    radius: usize,
    out_precision: *mut f64,
    out_recall: *mut f64,
    out_f1: *mut f64,
) -> DmhStatus {
    guarded(|| {
        for (ptr, name) in [
            (out_precision, "out_precision"),
            (out_recall, "out_recall"),
            (out_f1, "out_f1"),
        ] {
            if ptr.is_null() {
                return null_argument(name);
            }
        }
        if queries.is_null() {
            return null_argument("queries");
        }
        if database.is_null() {
            return null_argument("database");
        }
        if relevant_offsets.is_null() {
            return null_argument("relevant_offsets");
        }
        if relevant_indices.is_null() {
            return null_argument("relevant_indices");
        }
        let queries = &(*queries).codes;
        let database = &(*database).codes;
        let gt = match ground_truth_from_csr(queries.len(), relevant_offsets, relevant_indices) {
            Ok(gt) => gt,
            Err(status) => return status,
        };
        match eval::lookup_f1(queries, database, &gt, radius) {
            Ok(summary) => {
                *out_precision = summary.precision;
                *out_recall = summary.recall;
                *out_f1 = summary.f1;
                DmhStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}
