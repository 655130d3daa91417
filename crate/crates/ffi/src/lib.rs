//! C ABI for the phaseless toolkit.
//!
//! Objects cross the boundary as opaque handles created by `phls_*_new`/`phls_*_load`
//! and released by the matching `phls_*_free`. Every fallible call returns a
//! [`PhlsStatus`]; on failure the message is available from
//! [`phls_last_error_message`] until the next failing call on the same thread.
//! Strings returned by the library are released with [`phls_string_free`].

use phaseless::config::ExperimentConfig;
use phaseless::geometry::{Bump, Chord, Phantom, Vec3};
use phaseless::pipeline;
use phaseless::report::RunReport;
use phaseless::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhlsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    PreconditionViolated = 3,
    Numerical = 4,
    Io = 5,
    Format = 6,
    Panic = 7,
}

/// Experiment configuration handle.
pub struct PhlsConfig(ExperimentConfig);
/// Phantom handle.
pub struct PhlsPhantom(Phantom);
/// Run report handle.
pub struct PhlsReport(RunReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PhlsStatus {
    match e {
        Error::Stage { source, .. } => status_of(source),
        Error::InvalidArgument(_) | Error::WindowEmpty { .. } => PhlsStatus::InvalidArgument,
        Error::PreconditionViolated(_)
        | Error::SeparationViolated(_)
        | Error::LeadingValueZero(_) => PhlsStatus::PreconditionViolated,
        Error::Io(_) => PhlsStatus::Io,
        Error::Format(_) => PhlsStatus::Format,
        _ => PhlsStatus::Numerical,
    }
}

/// Runs `f`, converting errors and panics into a status and the last-error string.
fn guard(f: impl FnOnce() -> Result<(), (PhlsStatus, String)>) -> PhlsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PhlsStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            PhlsStatus::Panic
        }
    }
}

fn core(e: Error) -> (PhlsStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (PhlsStatus, String) {
    (PhlsStatus::NullPointer, format!("{what} is null"))
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (PhlsStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn as_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (PhlsStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (PhlsStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn as_vec3(p: *const f64, what: &str) -> Result<Vec3, (PhlsStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = std::slice::from_raw_parts(p, 3);
    Ok(Vec3::new(s[0], s[1], s[2]))
}

unsafe fn write_out<T>(out: *mut T, v: T) -> Result<(), (PhlsStatus, String)> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(v);
    Ok(())
}

/// Message of the last failing call on this thread, or null. Owned by the library.
#[no_mangle]
pub extern "C" fn phls_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by the library.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn phls_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Default configuration.
#[no_mangle]
pub extern "C" fn phls_config_default() -> *mut PhlsConfig {
    Box::into_raw(Box::new(PhlsConfig(ExperimentConfig::default())))
}

/// Parses a TOML configuration.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn phls_config_from_toml(
    toml: *const c_char,
    out: *mut *mut PhlsConfig,
) -> PhlsStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_toml(as_str(toml, "toml")?).map_err(core)?;
        write_out(out, Box::into_raw(Box::new(PhlsConfig(cfg))))
    })
}

/// Loads a TOML configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn phls_config_load(
    path: *const c_char,
    out: *mut *mut PhlsConfig,
) -> PhlsStatus {
    guard(|| {
        let cfg = ExperimentConfig::load(Path::new(as_str(path, "path")?)).map_err(core)?;
        write_out(out, Box::into_raw(Box::new(PhlsConfig(cfg))))
    })
}

/// Serializes a configuration to TOML; release with `phls_string_free`.
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn phls_config_to_toml(
    cfg: *const PhlsConfig,
    out: *mut *mut c_char,
) -> PhlsStatus {
    guard(|| {
        let s = as_ref(cfg, "cfg")?.0.to_toml().map_err(core)?;
        write_out(
            out,
            CString::new(s)
                .map_err(|e| (PhlsStatus::Format, e.to_string()))?
                .into_raw(),
        )
    })
}

/// # Safety
/// `cfg` must be a live handle. Seeds above `INT64_MAX` are rejected.
#[no_mangle]
pub unsafe extern "C" fn phls_config_set_seed(cfg: *mut PhlsConfig, seed: u64) -> PhlsStatus {
    guard(|| {
        if seed > i64::MAX as u64 {
            return Err((
                PhlsStatus::InvalidArgument,
                format!("seed {seed} exceeds {}", i64::MAX),
            ));
        }
        cfg.as_mut().ok_or_else(|| null("cfg"))?.0.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn phls_config_free(cfg: *mut PhlsConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// The phantom described by a configuration.
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn phls_config_phantom(
    cfg: *const PhlsConfig,
    out: *mut *mut PhlsPhantom,
) -> PhlsStatus {
    guard(|| {
        let q = as_ref(cfg, "cfg")?.0.phantom();
        write_out(out, Box::into_raw(Box::new(PhlsPhantom(q))))
    })
}

/// Empty phantom (`q = 0`).
#[no_mangle]
pub extern "C" fn phls_phantom_new() -> *mut PhlsPhantom {
    Box::into_raw(Box::new(PhlsPhantom(Phantom::empty())))
}

/// Adds a bump to the unknown part (`unknown != 0`) or to the background.
///
/// # Safety
/// `q` must be a live handle and `center` point to three doubles.
#[no_mangle]
pub unsafe extern "C" fn phls_phantom_add_bump(
    q: *mut PhlsPhantom,
    unknown: i32,
    center: *const f64,
    radius: f64,
    amplitude: f64,
) -> PhlsStatus {
    guard(|| {
        let q = q.as_mut().ok_or_else(|| null("q"))?;
        let c = as_vec3(center, "center")?;
        if !(radius > 0.0) || !amplitude.is_finite() {
            return Err((
                PhlsStatus::InvalidArgument,
                "radius must be positive and amplitude finite".into(),
            ));
        }
        let b = Bump::new(c, radius, amplitude);
        if unknown != 0 {
            q.0.unknown.push(b);
        } else {
            q.0.background.push(b);
        }
        Ok(())
    })
}

/// # Safety
/// `q` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn phls_phantom_free(q: *mut PhlsPhantom) {
    if !q.is_null() {
        drop(Box::from_raw(q));
    }
}

/// Number of samples of the configured band grid.
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn phls_band_len(cfg: *const PhlsConfig, out: *mut usize) -> PhlsStatus {
    guard(|| write_out(out, as_ref(cfg, "cfg")?.0.band_grid().len()))
}

/// Band modulus `|u(k)|` of the chord `source -> receiver` on the configured band grid.
/// `k_out` and `modulus_out` must hold `phls_band_len` doubles each; `k_out` may be null.
///
/// # Safety
/// Handles must be live; `source`/`receiver` point to three doubles; buffers hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn phls_chord_modulus(
    cfg: *const PhlsConfig,
    q: *const PhlsPhantom,
    source: *const f64,
    receiver: *const f64,
    k_out: *mut f64,
    modulus_out: *mut f64,
    len: usize,
) -> PhlsStatus {
    guard(|| {
        let cfg = &as_ref(cfg, "cfg")?.0;
        let q = &as_ref(q, "q")?.0;
        let chord =
            Chord::new(as_vec3(source, "source")?, as_vec3(receiver, "receiver")?).map_err(core)?;
        if modulus_out.is_null() {
            return Err(null("modulus_out"));
        }
        let (band, m) = pipeline::chord_modulus(cfg, q, &chord).map_err(core)?;
        if len != m.len() {
            return Err((
                PhlsStatus::InvalidArgument,
                format!("buffers hold {len} samples, band has {}", m.len()),
            ));
        }
        std::slice::from_raw_parts_mut(modulus_out, len).copy_from_slice(&m);
        if !k_out.is_null() {
            std::slice::from_raw_parts_mut(k_out, len).copy_from_slice(&band);
        }
        Ok(())
    })
}

/// Line integral of the unknown along the chord, recovered from its band modulus
/// sampled at `k` (uniform, as produced by `phls_chord_modulus`).
///
/// # Safety
/// `cfg` must be live; `source`/`receiver` point to three doubles; `k`/`modulus` hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn phls_chord_line_integral(
    cfg: *const PhlsConfig,
    source: *const f64,
    receiver: *const f64,
    k: *const f64,
    modulus: *const f64,
    len: usize,
    out: *mut f64,
) -> PhlsStatus {
    guard(|| {
        let cfg = &as_ref(cfg, "cfg")?.0;
        let chord =
            Chord::new(as_vec3(source, "source")?, as_vec3(receiver, "receiver")?).map_err(core)?;
        if k.is_null() || modulus.is_null() {
            return Err(null("k or modulus"));
        }
        let k = std::slice::from_raw_parts(k, len);
        let m = std::slice::from_raw_parts(modulus, len);
        let v = pipeline::chord_line_integral_from_modulus(cfg, &chord, k, m).map_err(core)?;
        write_out(out, v)
    })
}

/// Simulation, reconstruction and evaluation into `out_dir`.
///
/// # Safety
/// `cfg` must be live, `out_dir` NUL-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn phls_full_pipeline(
    cfg: *const PhlsConfig,
    out_dir: *const c_char,
    out: *mut *mut PhlsReport,
) -> PhlsStatus {
    guard(|| {
        let cfg = &as_ref(cfg, "cfg")?.0;
        let r =
            pipeline::full_pipeline(cfg, Path::new(as_str(out_dir, "out_dir")?)).map_err(core)?;
        write_out(out, Box::into_raw(Box::new(PhlsReport(r))))
    })
}

/// Distinguishability probe between the configured phantom and its perturbation
/// (or itself when `identical != 0`).
///
/// # Safety
/// `cfg` must be live and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn phls_verify_uniqueness(
    cfg: *const PhlsConfig,
    identical: i32,
    out: *mut *mut PhlsReport,
) -> PhlsStatus {
    guard(|| {
        let cfg = &as_ref(cfg, "cfg")?.0;
        let q1 = cfg.phantom();
        let q2 = if identical != 0 {
            q1.clone()
        } else {
            cfg.perturbed_phantom()
        };
        let (_, r) = pipeline::verify_uniqueness(cfg, &q1, &q2).map_err(core)?;
        write_out(out, Box::into_raw(Box::new(PhlsReport(r))))
    })
}

/// Report as pretty JSON; release with `phls_string_free`.
///
/// # Safety
/// `r` must be live and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn phls_report_to_json(
    r: *const PhlsReport,
    out: *mut *mut c_char,
) -> PhlsStatus {
    guard(|| {
        let s = as_ref(r, "report")?.0.to_json().map_err(core)?;
        write_out(
            out,
            CString::new(s)
                .map_err(|e| (PhlsStatus::Format, e.to_string()))?
                .into_raw(),
        )
    })
}

/// 1 when every flag passed, 0 otherwise (also 0 for a null handle).
///
/// # Safety
/// `r` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn phls_report_all_passed(r: *const PhlsReport) -> i32 {
    r.as_ref().map_or(0, |r| r.0.all_passed() as i32)
}

/// Named error norm of a report, e.g. `volume_rel_l2`.
///
/// # Safety
/// `r` must be live, `name` NUL-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn phls_report_error(
    r: *const PhlsReport,
    name: *const c_char,
    out: *mut f64,
) -> PhlsStatus {
    guard(|| {
        let r = &as_ref(r, "report")?.0;
        let name = as_str(name, "name")?;
        let v = r.errors.get(name).ok_or_else(|| {
            (
                PhlsStatus::InvalidArgument,
                format!("no error entry `{name}`"),
            )
        })?;
        write_out(out, *v)
    })
}

/// # Safety
/// `r` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn phls_report_free(r: *mut PhlsReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}
