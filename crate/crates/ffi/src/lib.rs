//! C ABI for the sfuc laboratory.
//!
//! Objects cross the boundary as opaque handles owned by the caller and
//! released with the matching `*_free`. Every fallible call returns an
//! [`SfucStatus`]; the message of the last failure on the calling thread is
//! available from [`sfuc_last_error`]. Panics never unwind into C.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use serde_json::Value;
use sfuc::cli::ExperimentConfig;
use sfuc::constants::{c_sfuc, uc_report};
use sfuc::error::UcError;
use sfuc::geometry::{generate_sequence, BoundaryCondition, CubeDomain, SequenceMode};
use sfuc::verifier::{observability_ratio, verify_equidistribution, ObservabilityRecord};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SfucStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Inadmissible = 3,
    Numerical = 4,
    Io = 5,
    Utf8 = 6,
    OutOfRange = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SfucBoundary {
    Dirichlet = 0,
    Periodic = 1,
}

impl From<SfucBoundary> for BoundaryCondition {
    fn from(b: SfucBoundary) -> Self {
        match b {
            SfucBoundary::Dirichlet => BoundaryCondition::Dirichlet,
            SfucBoundary::Periodic => BoundaryCondition::Periodic,
        }
    }
}

/// Opaque experiment configuration.
pub struct SfucConfig {
    inner: ExperimentConfig,
}

/// Opaque list of observability records.
pub struct SfucRecords {
    inner: Vec<ObservabilityRecord>,
}

/// Plain view of one record.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SfucRecordView {
    pub seed: u64,
    pub delta: f64,
    pub eigenvalue: f64,
    pub ratio: f64,
    pub zeta_term: f64,
    pub log_bound: f64,
    pub log_margin: f64,
    pub passed: bool,
    pub trivial_pass: bool,
    /// 0 eigenfunction, 1 projector sample, 2 inequality pair.
    pub psi_kind: u32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &UcError) -> SfucStatus {
    match e {
        UcError::InvalidParameter { .. } | UcError::ShapeMismatch { .. } | UcError::Serde(_) | UcError::Incommensurate(_) => {
            SfucStatus::InvalidArgument
        }
        UcError::Inadmissible(_) | UcError::BoundaryCondition(_) | UcError::Support(_) => SfucStatus::Inadmissible,
        UcError::Io(_) => SfucStatus::Io,
        _ => SfucStatus::Numerical,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (SfucStatus, String)>) -> SfucStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SfucStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            SfucStatus::Panic
        }
    }
}

fn uc(e: UcError) -> (SfucStatus, String) {
    (status_of(&e), e.to_string())
}

fn null() -> (SfucStatus, String) {
    (SfucStatus::NullPointer, "null pointer argument".into())
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, (SfucStatus, String)> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p).to_str().map_err(|e| (SfucStatus::Utf8, e.to_string()))
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sfuc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn sfuc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default configuration.
#[no_mangle]
pub extern "C" fn sfuc_config_new() -> *mut SfucConfig {
    Box::into_raw(Box::new(SfucConfig {
        inner: ExperimentConfig::default(),
    }))
}

/// Parse a flat-dotted-key JSON configuration.
///
/// # Safety
/// `json` must be a NUL-terminated string, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sfuc_config_from_json(json: *const c_char, out: *mut *mut SfucConfig) -> SfucStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let cfg = ExperimentConfig::from_json_str(str_arg(json)?).map_err(uc)?;
        *out = Box::into_raw(Box::new(SfucConfig { inner: cfg }));
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from this library and not be used afterwards; NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn sfuc_config_free(cfg: *mut SfucConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Set one numeric field by dotted key, e.g. `"model.theta1"`.
///
/// # Safety
/// `cfg` must be a live handle, `key` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sfuc_config_set_number(cfg: *mut SfucConfig, key: *const c_char, value: f64) -> SfucStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(null)?;
        let key = str_arg(key)?;
        let mut v = serde_json::to_value(&cfg.inner).map_err(|e| (SfucStatus::Numerical, e.to_string()))?;
        let mut node = &mut v;
        for part in key.split('.') {
            node = node
                .get_mut(part)
                .ok_or_else(|| (SfucStatus::InvalidArgument, format!("unknown key `{key}`")))?;
        }
        *node = match node {
            Value::Number(n) if n.is_u64() || n.is_i64() => {
                if value.fract() != 0.0 || value < 0.0 {
                    return Err((SfucStatus::InvalidArgument, format!("`{key}` takes a non-negative integer")));
                }
                Value::from(value as u64)
            }
            Value::Number(_) | Value::Null => serde_json::Number::from_f64(value)
                .map(Value::Number)
                .ok_or_else(|| (SfucStatus::InvalidArgument, "non-finite value".to_string()))?,
            _ => return Err((SfucStatus::InvalidArgument, format!("`{key}` is not numeric"))),
        };
        cfg.inner = serde_json::from_value(v).map_err(|e| (SfucStatus::InvalidArgument, e.to_string()))?;
        Ok(())
    })
}

/// Validate the configuration as the CLI does before running experiments.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sfuc_config_validate(cfg: *const SfucConfig) -> SfucStatus {
    guard(|| cfg.as_ref().ok_or_else(null)?.inner.validate(true).map_err(uc))
}

/// Natural log of the scale-free constant at the configured parameters.
///
/// # Safety
/// `cfg` must be a live handle, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn sfuc_log_c_sfuc(cfg: *const SfucConfig, out: *mut f64) -> SfucStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(null)?;
        let out = out.as_mut().ok_or_else(null)?;
        *out = c_sfuc(&cfg.inner.model, &cfg.inner.free).map_err(uc)?.log_value;
        Ok(())
    })
}

/// Full constants report as JSON; release with [`sfuc_string_free`].
///
/// # Safety
/// `cfg` must be a live handle, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn sfuc_constants_json(cfg: *const SfucConfig, energy: f64, out: *mut *mut c_char) -> SfucStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(null)?;
        if out.is_null() {
            return Err(null());
        }
        let rep = uc_report(&cfg.inner.model, &cfg.inner.free, energy).map_err(uc)?;
        let s = serde_json::to_string(&rep).map_err(|e| (SfucStatus::Numerical, e.to_string()))?;
        *out = CString::new(s).map_err(|e| (SfucStatus::Utf8, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library; NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn sfuc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Observability ratio of a real grid function for a centered or seeded
/// sequence (`random_seed < 0` selects centers).
///
/// # Safety
/// `psi` must point to `len` doubles, `out` valid.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn sfuc_observability_ratio(
    d: usize,
    l: f64,
    g: f64,
    h: f64,
    bc: SfucBoundary,
    delta: f64,
    random_seed: i64,
    psi: *const f64,
    len: usize,
    out: *mut f64,
) -> SfucStatus {
    guard(|| {
        if psi.is_null() {
            return Err(null());
        }
        let out = out.as_mut().ok_or_else(null)?;
        let domain = CubeDomain::new(d, l, h, bc.into()).map_err(uc)?;
        let mode = if random_seed < 0 {
            SequenceMode::Centered
        } else {
            SequenceMode::UniformRandom(random_seed as u64)
        };
        let seq = generate_sequence(d, g, delta, l, mode).map_err(uc)?;
        let psi = std::slice::from_raw_parts(psi, len);
        *out = observability_ratio(psi, &seq, &domain).map_err(uc)?;
        Ok(())
    })
}

/// Run the observability trials of the configuration.
///
/// # Safety
/// `cfg` must be a live handle, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn sfuc_verify(cfg: *const SfucConfig, out: *mut *mut SfucRecords) -> SfucStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(null)?;
        if out.is_null() {
            return Err(null());
        }
        cfg.inner.validate(true).map_err(uc)?;
        let recs = verify_equidistribution(&cfg.inner.verify_config()).map_err(uc)?;
        *out = Box::into_raw(Box::new(SfucRecords { inner: recs }));
        Ok(())
    })
}

/// # Safety
/// `recs` must be a live handle or NULL (length 0).
#[no_mangle]
pub unsafe extern "C" fn sfuc_records_len(recs: *const SfucRecords) -> usize {
    recs.as_ref().map_or(0, |r| r.inner.len())
}

/// # Safety
/// `recs` must be a live handle, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn sfuc_records_get(recs: *const SfucRecords, index: usize, out: *mut SfucRecordView) -> SfucStatus {
    guard(|| {
        let recs = recs.as_ref().ok_or_else(null)?;
        let out = out.as_mut().ok_or_else(null)?;
        let r = recs
            .inner
            .get(index)
            .ok_or_else(|| (SfucStatus::OutOfRange, format!("index {index} of {}", recs.inner.len())))?;
        *out = SfucRecordView {
            seed: r.seed,
            delta: r.params.delta,
            eigenvalue: r.eigenvalue,
            ratio: r.ratio,
            zeta_term: r.zeta_term,
            log_bound: r.log_bound,
            log_margin: r.log_margin,
            passed: r.passed,
            trivial_pass: r.trivial_pass,
            psi_kind: r.psi_kind as u32,
        };
        Ok(())
    })
}

/// # Safety
/// `recs` must come from this library; NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn sfuc_records_free(recs: *mut SfucRecords) {
    if !recs.is_null() {
        drop(Box::from_raw(recs));
    }
}
