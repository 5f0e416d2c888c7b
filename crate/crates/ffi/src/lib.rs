//! C ABI for the sidco gradient sparsification library.
//!
//! The surface is deliberately small: construct a compressor by name,
//! feed it dense f64 gradients, and read the sparse selection back out
//! through an opaque result handle. All functions are panic-safe (panics
//! are caught at the boundary and reported as `SIDCO_STATUS_INTERNAL`)
//! and null-safe (null pointers are reported as
//! `SIDCO_STATUS_NULL_ARGUMENT`, never dereferenced).
//!
//! Handles returned through out-parameters are owned by the caller and
//! must be released with the matching `_free` function. Handles are not
//! thread-safe; use one compressor per thread or synchronize externally.
//!
//! The generated header lives at `include/sidco.h` and is refreshed on
//! every build of this crate.

#![deny(unsafe_op_in_unsafe_fn)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use sidco::compressor::{Compressor, CompressorConfig, CompressorName};
use sidco::sparsify::{CompressionStats, SparseGradient};
use sidco::Error;

/// Status code returned by every fallible function in this interface.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SidcoStatus {
    /// Success.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// An argument failed validation (unknown compressor name, ratio out
    /// of range, buffer too small, non-finite input, ...).
    InvalidArgument = 2,
    /// The input was numerically degenerate (all-zero gradient, fit with
    /// too few usable elements, ...).
    DegenerateInput = 3,
    /// Internal failure; inspect `sidco_last_error_message`.
    Internal = 4,
}

/// Opaque compressor handle. Stateful: multi-stage estimators adapt their
/// stage count across successive `sidco_compress` calls, exactly like the
/// Rust API.
pub struct SidcoCompressor {
    inner: Compressor,
    seed: u64,
    calls: u64,
}

/// Opaque result of one compression call.
pub struct SidcoResult {
    sparse: SparseGradient,
    stats: CompressionStats,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> SidcoStatus {
    match err {
        Error::Config(_)
        | Error::UnsupportedRatio(_)
        | Error::InvalidK { .. }
        | Error::DimMismatch { .. }
        | Error::Format(_) => SidcoStatus::InvalidArgument,
        Error::AllZeroInput | Error::DegenerateInput(_) | Error::NonConvergence(_) => {
            SidcoStatus::DegenerateInput
        }
        Error::Io(_) => SidcoStatus::Internal,
    }
}

fn fail(err: &Error) -> SidcoStatus {
    set_last_error(&err.to_string());
    status_of(err)
}

/// Runs `f` with panics converted to `SIDCO_STATUS_INTERNAL`.
fn guarded(f: impl FnOnce() -> SidcoStatus) -> SidcoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_last_error("internal panic caught at the C boundary");
            SidcoStatus::Internal
        }
    }
}

/// Creates a compressor.
///
/// `name` is one of: "none", "topk", "randk", "quantile", "dgc",
/// "gaussian", "sidco-e", "sidco-gp", "sidco-p". `delta` is the target
/// compression ratio k/d in (0, 1]. `seed` feeds the randomized
/// compressors; call i uses stream seed + i, so repeated runs with one
/// seed are reproducible.
///
/// On success writes an owned handle to `*out`; release it with
/// `sidco_compressor_free`.
///
/// # Safety
///
/// `name` must point to a NUL-terminated string and `out` must be valid
/// for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn sidco_compressor_new(
    name: *const c_char,
    delta: f64,
    seed: u64,
    out: *mut *mut SidcoCompressor,
) -> SidcoStatus {
    guarded(|| {
        if name.is_null() || out.is_null() {
            set_last_error("name and out must be non-null");
            return SidcoStatus::NullArgument;
        }
        let name = match unsafe { CStr::from_ptr(name) }.to_str() {
            Ok(s) => s,
            Err(_) => {
                set_last_error("compressor name is not valid UTF-8");
                return SidcoStatus::InvalidArgument;
            }
        };
        let parsed: CompressorName = match name.parse() {
            Ok(p) => p,
            Err(e) => return fail(&e),
        };
        let config = CompressorConfig::new(parsed, delta);
        match Compressor::from_config(&config) {
            Ok(inner) => {
                let handle = Box::new(SidcoCompressor {
                    inner,
                    seed,
                    calls: 0,
                });
                unsafe { *out = Box::into_raw(handle) };
                SidcoStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Releases a compressor handle. Null is a no-op.
///
/// # Safety
///
/// `compressor` must be null or a handle from `sidco_compressor_new`
/// that has not already been freed.
#[no_mangle]
pub unsafe extern "C" fn sidco_compressor_free(compressor: *mut SidcoCompressor) {
    if !compressor.is_null() {
        drop(unsafe { Box::from_raw(compressor) });
    }
}

/// Compresses a dense gradient of `dim` f64 values.
///
/// On success writes an owned result handle to `*out`; release it with
/// `sidco_result_free`.
///
/// # Safety
///
/// `compressor` must be a live handle, `gradient` must point to `dim`
/// readable f64 values, and `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn sidco_compress(
    compressor: *mut SidcoCompressor,
    gradient: *const f64,
    dim: usize,
    out: *mut *mut SidcoResult,
) -> SidcoStatus {
    guarded(|| {
        if compressor.is_null() || gradient.is_null() || out.is_null() {
            set_last_error("compressor, gradient, and out must be non-null");
            return SidcoStatus::NullArgument;
        }
        if dim == 0 {
            set_last_error("dim must be positive");
            return SidcoStatus::InvalidArgument;
        }
        let handle = unsafe { &mut *compressor };
        let grad = unsafe { std::slice::from_raw_parts(gradient, dim) };
        if let Some(bad) = grad.iter().find(|v| !v.is_finite()) {
            set_last_error(&format!("gradient contains non-finite value {bad}"));
            return SidcoStatus::InvalidArgument;
        }
        let call_seed = handle.seed.wrapping_add(handle.calls);
        handle.calls += 1;
        match handle.inner.compress(grad, call_seed) {
            Ok((sparse, stats)) => {
                let result = Box::new(SidcoResult { sparse, stats });
                unsafe { *out = Box::into_raw(result) };
                SidcoStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Current stage count of a multi-stage estimator, or 0 for single-shot
/// compressors. Null returns 0.
///
/// # Safety
///
/// `compressor` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sidco_compressor_stages(compressor: *const SidcoCompressor) -> u32 {
    if compressor.is_null() {
        return 0;
    }
    unsafe { &*compressor }.inner.stages().unwrap_or(0)
}

/// Releases a result handle. Null is a no-op.
///
/// # Safety
///
/// `result` must be null or a handle from `sidco_compress` that has not
/// already been freed.
#[no_mangle]
pub unsafe extern "C" fn sidco_result_free(result: *mut SidcoResult) {
    if !result.is_null() {
        drop(unsafe { Box::from_raw(result) });
    }
}

/// Number of selected elements. Null returns 0.
///
/// # Safety
///
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sidco_result_nnz(result: *const SidcoResult) -> usize {
    if result.is_null() {
        return 0;
    }
    unsafe { &*result }.sparse.nnz()
}

/// Dimension of the compressed gradient. Null returns 0.
///
/// # Safety
///
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sidco_result_dim(result: *const SidcoResult) -> usize {
    if result.is_null() {
        return 0;
    }
    unsafe { &*result }.sparse.dim()
}

/// Requested selection count (`ceil(delta * dim)` for ratio-driven
/// compressors). Null returns 0.
///
/// # Safety
///
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sidco_result_k_target(result: *const SidcoResult) -> usize {
    if result.is_null() {
        return 0;
    }
    unsafe { &*result }.stats.k_target
}

/// Magnitude threshold that produced the selection. Null returns NaN.
///
/// # Safety
///
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sidco_result_threshold(result: *const SidcoResult) -> f64 {
    if result.is_null() {
        return f64::NAN;
    }
    unsafe { &*result }.stats.threshold
}

/// Wall time of the compression call, in nanoseconds. Null returns 0.
///
/// # Safety
///
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sidco_result_elapsed_ns(result: *const SidcoResult) -> u64 {
    if result.is_null() {
        return 0;
    }
    unsafe { &*result }.stats.elapsed.as_nanos() as u64
}

/// Copies the selection into caller-owned arrays of at least
/// `sidco_result_nnz` entries each. `indices` receives the element
/// positions in ascending order; `values` the corresponding gradient
/// values. Either output may be null to skip it.
///
/// # Safety
///
/// `result` must be a live handle; `indices` and `values`, when
/// non-null, must each be valid for writing `capacity` entries.
#[no_mangle]
pub unsafe extern "C" fn sidco_result_copy(
    result: *const SidcoResult,
    indices: *mut u64,
    values: *mut f64,
    capacity: usize,
) -> SidcoStatus {
    guarded(|| {
        if result.is_null() {
            set_last_error("result must be non-null");
            return SidcoStatus::NullArgument;
        }
        let r = unsafe { &*result };
        let nnz = r.sparse.nnz();
        if capacity < nnz {
            set_last_error(&format!("capacity {capacity} is below nnz {nnz}"));
            return SidcoStatus::InvalidArgument;
        }
        if !indices.is_null() {
            let dst = unsafe { std::slice::from_raw_parts_mut(indices, nnz) };
            for (d, s) in dst.iter_mut().zip(r.sparse.indices()) {
                *d = *s as u64;
            }
        }
        if !values.is_null() {
            let dst = unsafe { std::slice::from_raw_parts_mut(values, nnz) };
            dst.copy_from_slice(r.sparse.values());
        }
        SidcoStatus::Ok
    })
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn sidco_status_message(status: SidcoStatus) -> *const c_char {
    let msg: &'static [u8] = match status {
        SidcoStatus::Ok => b"ok\0",
        SidcoStatus::NullArgument => b"null argument\0",
        SidcoStatus::InvalidArgument => b"invalid argument\0",
        SidcoStatus::DegenerateInput => b"degenerate input\0",
        SidcoStatus::Internal => b"internal error\0",
    };
    msg.as_ptr().cast()
}

/// Detail message for the most recent failure on this thread. The pointer
/// is valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sidco_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sidco_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
