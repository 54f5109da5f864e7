//! C ABI over `freefront`.
//!
//! Handles are opaque and owned by the caller, who frees them with the
//! matching `*_free` function. Every fallible call returns a
//! [`FreefrontStatus`]; on failure the message is kept per thread and
//! read back with [`freefront_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use freefront::config::{Config, RawConfig};
use freefront::dichotomy::spreading_guarantee;
use freefront::ensemble::EnsembleStats;
use freefront::error::Error;
use freefront::ff::ff_stability_limit;
use freefront::ft::ft_stability_limit;
use freefront::model::derive_constants;
use freefront::solution::{Method, RealizationResult};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FreefrontStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    ModelViolation = 4,
    Stability = 5,
    Solver = 6,
    NoRootFound = 7,
    BufferTooSmall = 8,
    Io = 9,
    Panic = 10,
    Other = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FreefrontMethod {
    FrontFixing = 0,
    FrontTracking = 1,
}

impl From<FreefrontMethod> for Method {
    fn from(m: FreefrontMethod) -> Self {
        match m {
            FreefrontMethod::FrontFixing => Method::FrontFixing,
            FreefrontMethod::FrontTracking => Method::FrontTracking,
        }
    }
}

/// Validated model and run configuration.
pub struct FreefrontModel {
    raw: RawConfig,
    config: Config,
}

/// One solved realization.
pub struct FreefrontRealization {
    result: RealizationResult,
}

/// Ensemble moments.
pub struct FreefrontStats {
    stats: EnsembleStats,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FreefrontStatus {
    match e {
        Error::Config { .. } | Error::InsufficientData(_) | Error::IncompatibleEnsemble(_) => FreefrontStatus::Config,
        Error::ModelViolation(_) | Error::Extrapolation { .. } => FreefrontStatus::ModelViolation,
        Error::Stability { .. } => FreefrontStatus::Stability,
        Error::FrontCollapse { .. }
        | Error::InvariantViolation { .. }
        | Error::NonFinite { .. }
        | Error::StepSizeViolation { .. }
        | Error::DomainExhausted { .. }
        | Error::Contract { .. } => FreefrontStatus::Solver,
        Error::NoRootFound { .. } => FreefrontStatus::NoRootFound,
        Error::Realization { source, .. } => status_of(source),
        Error::Io { .. } => FreefrontStatus::Io,
        Error::Output(_) => FreefrontStatus::Other,
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard<F>(f: F) -> FreefrontStatus
where
    F: FnOnce() -> Result<(), (FreefrontStatus, String)>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FreefrontStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("panic inside freefront".to_string());
            FreefrontStatus::Panic
        }
    }
}

fn lib(e: Error) -> (FreefrontStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (FreefrontStatus, String) {
    (FreefrontStatus::NullPointer, format!("null pointer: {what}"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (FreefrontStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (FreefrontStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Copies `src` into `dst[..len]`; `dst` may be null only when `src` is empty.
unsafe fn copy_out(src: &[f64], dst: *mut f64, len: usize, what: &str) -> Result<(), (FreefrontStatus, String)> {
    if len < src.len() {
        return Err((
            FreefrontStatus::BufferTooSmall,
            format!("{what}: buffer holds {len}, need {}", src.len()),
        ));
    }
    if src.is_empty() {
        return Ok(());
    }
    if dst.is_null() {
        return Err(null(what));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length plus one, or 0 when
/// there is no error.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn freefront_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n - 1) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn freefront_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses and validates a TOML configuration.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn freefront_model_from_toml(
    toml: *const c_char,
    out_model: *mut *mut FreefrontModel,
) -> FreefrontStatus {
    guard(|| {
        let slot = out(out_model, "out_model")?;
        *slot = ptr::null_mut();
        if toml.is_null() {
            return Err(null("toml"));
        }
        let text = CStr::from_ptr(toml)
            .to_str()
            .map_err(|e| (FreefrontStatus::InvalidUtf8, format!("toml: {e}")))?;
        let raw = RawConfig::from_toml(text).map_err(lib)?;
        let config = raw.resolve().map_err(lib)?;
        *slot = Box::into_raw(Box::new(FreefrontModel { raw, config }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`freefront_model_from_toml`] or be null.
#[no_mangle]
pub unsafe extern "C" fn freefront_model_free(model: *mut FreefrontModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Writes the configuration as parsed, in JSON, NUL-terminated. `required`
/// (optional) receives the buffer size needed.
///
/// # Safety
/// `model` must be valid; `buf` null or `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn freefront_model_config_json(
    model: *const FreefrontModel,
    buf: *mut c_char,
    len: usize,
    required: *mut usize,
) -> FreefrontStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let json = serde_json_string(&m.raw)?;
        let bytes = json.as_bytes();
        if let Some(r) = required.as_mut() {
            *r = bytes.len() + 1;
        }
        if len < bytes.len() + 1 || buf.is_null() {
            return Err((
                FreefrontStatus::BufferTooSmall,
                format!("config json needs {} bytes", bytes.len() + 1),
            ));
        }
        ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, bytes.len());
        *buf.add(bytes.len()) = 0;
        Ok(())
    })
}

fn serde_json_string(raw: &RawConfig) -> Result<String, (FreefrontStatus, String)> {
    serde_json::to_string(raw).map_err(|e| (FreefrontStatus::Other, e.to_string()))
}

/// Step-size limits of both schemes at the model's `M` and `eps`.
///
/// # Safety
/// `model` must be valid; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn freefront_stability_limits(
    model: *const FreefrontModel,
    ff: *mut f64,
    ft: *mut f64,
) -> FreefrontStatus {
    guard(|| {
        let c = &deref(model, "model")?.config;
        let (ff, ft) = (out(ff, "ff")?, out(ft, "ft")?);
        let consts = derive_constants(&c.spec, c.r_max).map_err(lib)?;
        *ff = ff_stability_limit(&c.spec, &consts, 1.0 / c.m as f64);
        *ft = ft_stability_limit(&c.spec, &consts, c.spec.h0() / c.m as f64, c.m - 1, c.eps).map_err(lib)?;
        Ok(())
    })
}

/// Threshold radius at the largest diffusion and whether `H0` reaches it.
///
/// # Safety
/// `model` must be valid; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn freefront_rstar(
    model: *const FreefrontModel,
    r_star: *mut f64,
    guaranteed: *mut bool,
) -> FreefrontStatus {
    guard(|| {
        let c = &deref(model, "model")?.config;
        let (r, g) = (out(r_star, "r_star")?, out(guaranteed, "guaranteed")?);
        let s = spreading_guarantee(&c.spec).map_err(lib)?;
        *r = s.r_star_max;
        *g = s.guaranteed;
        Ok(())
    })
}

/// Solves realization `index` (the point sample for a deterministic model).
///
/// # Safety
/// `model` must be valid; `out_realization` writable.
#[no_mangle]
pub unsafe extern "C" fn freefront_solve(
    model: *const FreefrontModel,
    method: FreefrontMethod,
    index: usize,
    out_realization: *mut *mut FreefrontRealization,
) -> FreefrontStatus {
    guard(|| {
        let slot = out(out_realization, "out_realization")?;
        *slot = ptr::null_mut();
        let c = &deref(model, "model")?.config;
        let prepared = c.ensemble(method.into()).prepare().map_err(lib)?;
        let sample = c.spec.point_sample().unwrap_or_else(|| prepared.sample(index));
        let result = prepared.solve_sample(sample).map_err(lib)?;
        *slot = Box::into_raw(Box::new(FreefrontRealization { result }));
        Ok(())
    })
}

/// # Safety
/// `r` must come from [`freefront_solve`] or be null.
#[no_mangle]
pub unsafe extern "C" fn freefront_realization_free(r: *mut FreefrontRealization) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Front position at the horizon; NaN for a null handle.
///
/// # Safety
/// `r` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn freefront_realization_final_front(r: *const FreefrontRealization) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.result.final_front())
}

/// Number of active nodes at the horizon; 0 for a null handle.
///
/// # Safety
/// `r` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn freefront_realization_node_count(r: *const FreefrontRealization) -> usize {
    r.as_ref().map_or(0, |r| r.result.node_count)
}

/// Length of the final profile; 0 for a null handle.
///
/// # Safety
/// `r` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn freefront_realization_profile_len(r: *const FreefrontRealization) -> usize {
    r.as_ref().map_or(0, |r| r.result.profile.len())
}

/// Copies the final radii and population values.
///
/// # Safety
/// `r` must be valid; `radii` and `values` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn freefront_realization_profile(
    r: *const FreefrontRealization,
    radii: *mut f64,
    values: *mut f64,
    len: usize,
) -> FreefrontStatus {
    guard(|| {
        let r = &deref(r, "realization")?.result;
        copy_out(&r.radii, radii, len, "radii")?;
        copy_out(&r.profile, values, len, "values")
    })
}

/// Runs `k` realizations with the given seed and worker count
/// (0 selects the global pool).
///
/// # Safety
/// `model` must be valid; `out_stats` writable.
#[no_mangle]
pub unsafe extern "C" fn freefront_ensemble(
    model: *const FreefrontModel,
    method: FreefrontMethod,
    k: usize,
    seed: u64,
    workers: usize,
    out_stats: *mut *mut FreefrontStats,
) -> FreefrontStatus {
    guard(|| {
        let slot = out(out_stats, "out_stats")?;
        *slot = ptr::null_mut();
        let c = &deref(model, "model")?.config;
        let mut cfg = c.ensemble(method.into());
        cfg.k_realizations = k;
        cfg.seed = seed;
        cfg.workers = workers;
        let stats = cfg.prepare().and_then(|p| p.run()).map_err(lib)?;
        *slot = Box::into_raw(Box::new(FreefrontStats { stats }));
        Ok(())
    })
}

/// # Safety
/// `s` must come from [`freefront_ensemble`] or be null.
#[no_mangle]
pub unsafe extern "C" fn freefront_stats_free(s: *mut FreefrontStats) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Number of recorded time levels of the front moments.
///
/// # Safety
/// `s` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn freefront_stats_front_len(s: *const FreefrontStats) -> usize {
    s.as_ref().map_or(0, |s| s.stats.mean_h.len())
}

/// Number of profile entries of the population moments.
///
/// # Safety
/// `s` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn freefront_stats_profile_len(s: *const FreefrontStats) -> usize {
    s.as_ref().map_or(0, |s| s.stats.mean_u.len())
}

/// Copies mean and standard deviation of the front over time.
///
/// # Safety
/// `s` must be valid; `mean` and `std` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn freefront_stats_front(
    s: *const FreefrontStats,
    mean: *mut f64,
    std: *mut f64,
    len: usize,
) -> FreefrontStatus {
    guard(|| {
        let s = &deref(s, "stats")?.stats;
        copy_out(&s.mean_h, mean, len, "mean")?;
        copy_out(&s.std_h, std, len, "std")
    })
}

/// Copies mean and standard deviation of the final population.
///
/// # Safety
/// `s` must be valid; `mean` and `std` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn freefront_stats_profile(
    s: *const FreefrontStats,
    mean: *mut f64,
    std: *mut f64,
    len: usize,
) -> FreefrontStatus {
    guard(|| {
        let s = &deref(s, "stats")?.stats;
        copy_out(&s.mean_u, mean, len, "mean")?;
        copy_out(&s.std_u, std, len, "std")
    })
}
