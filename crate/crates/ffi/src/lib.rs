//! C ABI over `msdoa`.
//!
//! Objects are opaque heap handles released with their `_free` function.
//! Every fallible call returns an [`MsdoaStatus`]; on failure the message is
//! available from [`msdoa_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use msdoa::config::{load_config, parse_config, ExperimentConfig};
use msdoa::harness::{estimate_from_series, run_crb, run_single, run_sweep, write_single, SweepResult};
use msdoa::{Error, TimeSeries};
use num_complex::Complex64;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsdoaStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8 or an undersized buffer.
    InvalidArgument = 1,
    /// Configuration or input rejected.
    Validation = 2,
    /// Numerical failure during a run.
    Numerical = 3,
    Io = 4,
    /// A panic was caught at the boundary.
    Internal = 5,
}

/// Parsed, validated experiment configuration.
pub struct MsdoaConfig {
    inner: ExperimentConfig,
}

/// Result of a Monte Carlo sweep.
pub struct MsdoaSweep {
    inner: SweepResult,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes removed"));
}

fn status_of(e: &Error) -> MsdoaStatus {
    match e {
        Error::Io(_) => MsdoaStatus::Io,
        e if e.is_validation() => MsdoaStatus::Validation,
        _ => MsdoaStatus::Numerical,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (MsdoaStatus, String)>) -> MsdoaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MsdoaStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MsdoaStatus::Internal
        }
    }
}

fn lib<T>(r: msdoa::Result<T>) -> Result<T, (MsdoaStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn invalid(msg: &str) -> (MsdoaStatus, String) {
    (MsdoaStatus::InvalidArgument, msg.to_string())
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, (MsdoaStatus, String)> {
    if p.is_null() {
        return Err(invalid(&format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(&format!("{name} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, (MsdoaStatus, String)> {
    p.as_ref().ok_or_else(|| invalid(&format!("{name} is null")))
}

fn export_string(s: String, out: *mut *mut c_char) -> Result<(), (MsdoaStatus, String)> {
    let c = CString::new(s).map_err(|_| invalid("string contains a nul byte"))?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Last error message on this thread; empty after a successful call. The
/// pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn msdoa_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, static string.
#[no_mangle]
pub extern "C" fn msdoa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a TOML configuration document.
///
/// # Safety
/// `text` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn msdoa_config_parse(text: *const c_char, out: *mut *mut MsdoaConfig) -> MsdoaStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        let cfg = lib(parse_config(str_arg(text, "text")?))?;
        *out = Box::into_raw(Box::new(MsdoaConfig { inner: cfg }));
        Ok(())
    })
}

/// Reads and parses a configuration file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn msdoa_config_load(path: *const c_char, out: *mut *mut MsdoaConfig) -> MsdoaStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        let cfg = lib(load_config(Path::new(str_arg(path, "path")?)))?;
        *out = Box::into_raw(Box::new(MsdoaConfig { inner: cfg }));
        Ok(())
    })
}

/// Applies a `section.key=value` override and revalidates. The handle is
/// left unchanged on failure.
///
/// # Safety
/// `cfg` must come from this library; `assignment` must be nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn msdoa_config_set(cfg: *mut MsdoaConfig, assignment: *const c_char) -> MsdoaStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| invalid("cfg is null"))?;
        let mut next = cfg.inner.clone();
        lib(next.set(str_arg(assignment, "assignment")?))?;
        lib(next.validate())?;
        cfg.inner = next;
        Ok(())
    })
}

/// Re-checks every precondition.
///
/// # Safety
/// `cfg` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn msdoa_config_validate(cfg: *const MsdoaConfig) -> MsdoaStatus {
    guard(|| lib(ref_arg(cfg, "cfg")?.inner.validate()))
}

/// Serializes the configuration; free the string with [`msdoa_string_free`].
///
/// # Safety
/// `cfg` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn msdoa_config_emit(cfg: *const MsdoaConfig, out: *mut *mut c_char) -> MsdoaStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        export_string(lib(msdoa::config::emit(&ref_arg(cfg, "cfg")?.inner))?, out)
    })
}

/// # Safety
/// `cfg` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn msdoa_config_free(cfg: *mut MsdoaConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs the configured sweep. `threads = 0` keeps the configured or default
/// worker count.
///
/// # Safety
/// `cfg` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn msdoa_run_sweep(cfg: *const MsdoaConfig, threads: u32, out: *mut *mut MsdoaSweep) -> MsdoaStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        let cfg = ref_arg(cfg, "cfg")?;
        let threads = (threads > 0).then_some(threads as usize);
        let res = lib(run_sweep(&cfg.inner, threads))?;
        *out = Box::into_raw(Box::new(MsdoaSweep { inner: res }));
        Ok(())
    })
}

/// Number of rows, 0 for null.
///
/// # Safety
/// `sweep` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn msdoa_sweep_rows(sweep: *const MsdoaSweep) -> usize {
    sweep.as_ref().map_or(0, |s| s.inner.rows.len())
}

/// Number of sources (CRB columns), 0 for null.
///
/// # Safety
/// `sweep` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn msdoa_sweep_sources(sweep: *const MsdoaSweep) -> usize {
    sweep.as_ref().map_or(0, |s| s.inner.sources)
}

/// PR and RMSE (degrees) of one row.
///
/// # Safety
/// `sweep` must come from this library; `pr` and `rmse_deg` must be valid.
#[no_mangle]
pub unsafe extern "C" fn msdoa_sweep_row(
    sweep: *const MsdoaSweep,
    row: usize,
    pr: *mut f64,
    rmse_deg: *mut f64,
) -> MsdoaStatus {
    guard(|| {
        let s = ref_arg(sweep, "sweep")?;
        if pr.is_null() || rmse_deg.is_null() {
            return Err(invalid("output pointer is null"));
        }
        let r = s.inner.rows.get(row).ok_or_else(|| invalid("row out of range"))?;
        *pr = r.aggregate.pr;
        *rmse_deg = r.aggregate.rmse_deg;
        Ok(())
    })
}

/// Copies the per-source square-root CRB (degrees) of one row into `out`,
/// which must hold at least [`msdoa_sweep_sources`] values.
///
/// # Safety
/// `sweep` must come from this library; `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn msdoa_sweep_crb(sweep: *const MsdoaSweep, row: usize, out: *mut f64, len: usize) -> MsdoaStatus {
    guard(|| {
        let s = ref_arg(sweep, "sweep")?;
        let r = s.inner.rows.get(row).ok_or_else(|| invalid("row out of range"))?;
        if r.sqrt_crb_deg.is_empty() {
            return Ok(());
        }
        if out.is_null() || len < r.sqrt_crb_deg.len() {
            return Err(invalid("buffer too small"));
        }
        std::slice::from_raw_parts_mut(out, r.sqrt_crb_deg.len()).copy_from_slice(&r.sqrt_crb_deg);
        Ok(())
    })
}

/// The sweep as CSV; free the string with [`msdoa_string_free`].
///
/// # Safety
/// `sweep` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn msdoa_sweep_csv(sweep: *const MsdoaSweep, out: *mut *mut c_char) -> MsdoaStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        export_string(lib(ref_arg(sweep, "sweep")?.inner.to_csv_string())?, out)
    })
}

/// # Safety
/// `sweep` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn msdoa_sweep_free(sweep: *mut MsdoaSweep) {
    if !sweep.is_null() {
        drop(Box::from_raw(sweep));
    }
}

/// Square-root CRB table as CSV; free with [`msdoa_string_free`].
///
/// # Safety
/// `cfg` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn msdoa_crb_csv(cfg: *const MsdoaConfig, threads: u32, out: *mut *mut c_char) -> MsdoaStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        let cfg = ref_arg(cfg, "cfg")?;
        let table = lib(run_crb(&cfg.inner, (threads > 0).then_some(threads as usize)))?;
        let mut buf = Vec::new();
        lib(table.write_csv(&mut buf))?;
        export_string(String::from_utf8(buf).map_err(|_| invalid("non-UTF-8 output"))?, out)
    })
}

/// Runs one trial and writes its CSV dumps into `out_dir`.
///
/// # Safety
/// `cfg` must come from this library; `out_dir` must be nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn msdoa_run_single(cfg: *const MsdoaConfig, out_dir: *const c_char, raw: bool) -> MsdoaStatus {
    guard(|| {
        let cfg = ref_arg(cfg, "cfg")?;
        let dir = str_arg(out_dir, "out_dir")?;
        let run = lib(run_single(&cfg.inner))?;
        lib(write_single(&run, &cfg.inner, Path::new(dir), raw))?;
        Ok(())
    })
}

/// Estimates directions from `n_samples` interleaved I/Q samples taken at the
/// configured rate. Up to `capacity` estimates (degrees) are written; `found`
/// receives the number available.
///
/// # Safety
/// `iq` must point to `2·n_samples` doubles, `theta_deg` and `phi_deg` to
/// `capacity` doubles each, `found` must be valid.
#[no_mangle]
pub unsafe extern "C" fn msdoa_estimate_series(
    cfg: *const MsdoaConfig,
    iq: *const f64,
    n_samples: usize,
    theta_deg: *mut f64,
    phi_deg: *mut f64,
    capacity: usize,
    found: *mut usize,
) -> MsdoaStatus {
    guard(|| {
        let cfg = ref_arg(cfg, "cfg")?;
        if iq.is_null() || found.is_null() {
            return Err(invalid("input pointer is null"));
        }
        let raw = std::slice::from_raw_parts(iq, 2 * n_samples);
        let series = TimeSeries {
            samples: raw.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect(),
            fs: cfg.inner.fs(),
            t_origin: 0.0,
        };
        let result = lib(estimate_from_series(&cfg.inner, &series))?;
        *found = result.estimates.len();
        if capacity > 0 && (theta_deg.is_null() || phi_deg.is_null()) {
            return Err(invalid("output buffer is null"));
        }
        for (k, d) in result.estimates.iter().take(capacity).enumerate() {
            *theta_deg.add(k) = d.theta_deg();
            *phi_deg.add(k) = d.phi_deg();
        }
        Ok(())
    })
}

/// Frees a string returned by this library.
///
/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn msdoa_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
