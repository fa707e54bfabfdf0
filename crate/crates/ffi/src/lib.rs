//! C ABI over the dtlids networks and metrics.
//!
//! Networks are opaque `DtlNetwork` handles created by `dtl_network_build` or
//! `dtl_network_load` and released with `dtl_network_free`. Every fallible
//! call returns a `DtlStatus`; on failure `dtl_last_error_message` describes
//! the error until the next failing call on the same thread. Panics never
//! cross the boundary: they surface as `DTL_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use dtlids::network::{build_baseline, build_multi_channel_dnn, build_presnet, build_single_channel_dnn, BaselineKind};
use dtlids::{Error, Network, Tensor};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DtlStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Bad argument value: unknown model kind, invalid UTF-8, zero sizes.
    InvalidArgument = 2,
    /// Buffer length or tensor geometry mismatch.
    Shape = 3,
    /// File could not be read or written.
    Io = 4,
    /// Malformed checkpoint.
    Format = 5,
    /// A metric is undefined for the input (e.g. a single-class AUC).
    Undefined = 6,
    /// Any other library error.
    Failed = 7,
    /// The library panicked; the handle involved should be freed.
    Panic = 8,
}

/// Opaque network handle.
pub struct DtlNetwork(Network);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

fn status_of(e: &Error) -> DtlStatus {
    match e {
        Error::Shape(_) => DtlStatus::Shape,
        Error::Io { .. } => DtlStatus::Io,
        Error::Format(_) => DtlStatus::Format,
        Error::Config(_) => DtlStatus::InvalidArgument,
        Error::UndefinedAuc(_) => DtlStatus::Undefined,
        _ => DtlStatus::Failed,
    }
}

/// Runs `f`, recording any error or panic for `dtl_last_error_message`.
fn guard(f: impl FnOnce() -> Result<(), (DtlStatus, String)>) -> DtlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DtlStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DtlStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (DtlStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (DtlStatus, String) {
    (DtlStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (DtlStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (DtlStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (DtlStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn net_arg<'a>(p: *const DtlNetwork) -> Result<&'a Network, (DtlStatus, String)> {
    p.as_ref().map(|n| &n.0).ok_or_else(|| null("net"))
}

fn into_handle(net: Network, out: *mut *mut DtlNetwork) {
    // SAFETY: callers check `out` for null first.
    unsafe { *out = Box::into_raw(Box::new(DtlNetwork(net))) };
}

/// Builds a freshly initialised network.
///
/// `kind` is one of `presnet`, `single` (single-channel DNN; `channels` must
/// be 1), `multi` (multi-channel DNN, one branch per channel), `mlp` or `fcn`.
///
/// # Safety
/// `kind` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dtl_network_build(
    kind: *const c_char,
    channels: usize,
    window: usize,
    classes: usize,
    seed: u64,
    out: *mut *mut DtlNetwork,
) -> DtlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let net = match str_arg(kind, "kind")? {
            "presnet" => build_presnet(channels, window, classes, seed),
            "single" if channels == 1 => build_single_channel_dnn(window, classes, seed),
            "single" => return Err((DtlStatus::InvalidArgument, "single-channel DNN needs channels = 1".into())),
            "multi" => build_multi_channel_dnn(channels, window, classes, seed),
            other => {
                let k = BaselineKind::parse(other)
                    .map_err(|_| (DtlStatus::InvalidArgument, format!("unknown model kind `{other}`")))?;
                build_baseline(k, channels, window, classes, seed)
            }
        }
        .map_err(lib_err)?;
        into_handle(net, out);
        Ok(())
    })
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dtl_network_load(path: *const c_char, out: *mut *mut DtlNetwork) -> DtlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let net = dtlids::network::load_checkpoint(Path::new(str_arg(path, "path")?)).map_err(lib_err)?;
        into_handle(net, out);
        Ok(())
    })
}

/// Writes a checkpoint file.
///
/// # Safety
/// `net` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dtl_network_save(net: *const DtlNetwork, path: *const c_char) -> DtlStatus {
    guard(|| dtlids::network::save_checkpoint(net_arg(net)?, Path::new(str_arg(path, "path")?)).map_err(lib_err))
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `net` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dtl_network_free(net: *mut DtlNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Input geometry and class count.
///
/// # Safety
/// `net` must be a live handle; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dtl_network_geometry(
    net: *const DtlNetwork,
    channels: *mut usize,
    window: *mut usize,
    classes: *mut usize,
) -> DtlStatus {
    guard(|| {
        let net = net_arg(net)?;
        if channels.is_null() || window.is_null() || classes.is_null() {
            return Err(null("geometry output"));
        }
        let (c, l) = net.input_geometry();
        (*channels, *window, *classes) = (c, l, net.classes());
        Ok(())
    })
}

/// Number of stored values, batch-norm running statistics included.
///
/// # Safety
/// `net` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dtl_network_param_count(net: *const DtlNetwork, out: *mut usize) -> DtlStatus {
    guard(|| {
        let net = net_arg(net)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = net.param_count();
        Ok(())
    })
}

/// Class probabilities in inference mode.
///
/// `x` holds `n * channels * window` values, row-major `[n, channels,
/// window]`; `probs` receives `n * classes` values and `probs_len` must be
/// exactly that.
///
/// # Safety
/// `net` must be a live handle and the buffers valid for the given lengths.
#[no_mangle]
pub unsafe extern "C" fn dtl_network_predict(
    net: *const DtlNetwork,
    x: *const f64,
    n: usize,
    probs: *mut f64,
    probs_len: usize,
) -> DtlStatus {
    guard(|| {
        let net = net_arg(net)?;
        let (c, l) = net.input_geometry();
        if n == 0 {
            return Err((DtlStatus::InvalidArgument, "empty batch".into()));
        }
        if probs_len != n * net.classes() {
            return Err((DtlStatus::Shape, format!("probs has {probs_len} slots, need {}", n * net.classes())));
        }
        if probs.is_null() {
            return Err(null("probs"));
        }
        let input = Tensor::new(vec![n, c, l], slice_arg(x, n * c * l, "x")?.to_vec()).map_err(lib_err)?;
        let p = net.predict(&input).map_err(lib_err)?;
        std::slice::from_raw_parts_mut(probs, probs_len).copy_from_slice(p.data());
        Ok(())
    })
}

/// Squared distance between the mean rows of `a` (`[n, features]`) and `b`
/// (`[m, features]`), both row-major.
///
/// # Safety
/// The buffers must be valid for the given lengths and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dtl_mmd(
    a: *const f64,
    n: usize,
    b: *const f64,
    m: usize,
    features: usize,
    out: *mut f64,
) -> DtlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if n == 0 || m == 0 || features == 0 {
            return Err((DtlStatus::InvalidArgument, "MMD needs non-empty inputs".into()));
        }
        let ta = Tensor::new(vec![n, features], slice_arg(a, n * features, "a")?.to_vec()).map_err(lib_err)?;
        let tb = Tensor::new(vec![m, features], slice_arg(b, m * features, "b")?.to_vec()).map_err(lib_err)?;
        *out = dtlids::transfer::mmd_features(&ta, &tb).map_err(lib_err)?;
        Ok(())
    })
}

/// Area under the ROC curve; `positive[i]` is non-zero for positives.
/// Returns `DTL_STATUS_UNDEFINED` unless both classes occur.
///
/// # Safety
/// `scores` and `positive` must hold `n` values and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dtl_roc_auc(scores: *const f64, positive: *const u8, n: usize, out: *mut f64) -> DtlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let s = slice_arg(scores, n, "scores")?;
        let p: Vec<bool> = slice_arg(positive, n, "positive")?.iter().map(|&v| v != 0).collect();
        *out = dtlids::training::roc_auc(s, &p).map_err(lib_err)?;
        Ok(())
    })
}

/// Message of the last failed call on this thread (empty if none). The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dtl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dtl_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}
