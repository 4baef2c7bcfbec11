//! C interface. Handles are opaque and owned by the caller, who releases
//! them with the matching `_free` function. Every fallible call returns an
//! `MsfemStatus`; on failure `msfem_last_error` describes the cause.
//! Panics never cross the boundary; they are reported as `MSFEM_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use msfem_eddy::assembly::ProblemSetup;
use msfem_eddy::config::LoadedConfig;
use msfem_eddy::estimator::{equilibrate, evaluate_indicators, solve_msfem, IndicatorField, MsfemSolution};
use msfem_eddy::reference;
use msfem_eddy::thickness::{coefficient_table, ThicknessProfile};
use msfem_eddy::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsfemStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Configuration or mesh input rejected.
    Config = 3,
    /// Singular system or failed solve.
    Solver = 4,
    Io = 5,
    /// The output buffer is shorter than required; nothing was written.
    BufferTooSmall = 6,
    Panic = 7,
}

/// A configured problem (mesh, materials, excitation, orders).
pub struct MsfemProblem {
    setup: ProblemSetup,
}

/// A solved problem with its error indicators.
pub struct MsfemResult {
    solution: MsfemSolution,
    indicators: IndicatorField,
    residuals: [f64; 2],
}

/// Thickness integrals of one material weighting, in the order of the
/// library's `CoefficientTable`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MsfemCoefficientTable {
    pub phi1hat_sq: f64,
    pub phi2_sq: f64,
    pub dphi2_sq: f64,
    pub phi0_phi2: f64,
    pub phi3hat_sq: f64,
    pub phi1hat_phi3hat: f64,
    pub phi0_sq_full: f64,
    pub phi0_sq_sheet: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn status_of(e: &Error) -> MsfemStatus {
    match e {
        Error::Config(_) | Error::ConfigAt { .. } | Error::MeshFormat { .. } | Error::InvalidGeometry(_) => {
            MsfemStatus::Config
        }
        Error::InvalidArgument(_) | Error::Domain(_) => MsfemStatus::InvalidArgument,
        Error::Singular { .. } | Error::Solver(_) | Error::Consistency(_) => MsfemStatus::Solver,
        Error::Io(_) => MsfemStatus::Io,
    }
}

/// Runs `f`, recording errors and containing panics.
fn guard(f: impl FnOnce() -> Result<(), (MsfemStatus, String)>) -> MsfemStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MsfemStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MsfemStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (MsfemStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (MsfemStatus, String) {
    (MsfemStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (MsfemStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (MsfemStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

fn boxed<T>(out: *mut *mut T, value: T) {
    // SAFETY: callers check `out` for null first
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn msfem_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn msfem_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a TOML configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn msfem_problem_from_file(path: *const c_char, out: *mut *mut MsfemProblem) -> MsfemStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = PathBuf::from(str_arg(path, "path")?);
        let setup = LoadedConfig::from_path(&path).and_then(|c| c.setup()).map_err(lib_err)?;
        boxed(out, MsfemProblem { setup });
        Ok(())
    })
}

/// Parses a TOML configuration held in memory; relative mesh paths are
/// resolved against the working directory.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn msfem_problem_from_str(text: *const c_char, out: *mut *mut MsfemProblem) -> MsfemStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = str_arg(text, "text")?;
        let setup = LoadedConfig::from_str(text, PathBuf::new()).and_then(|c| c.setup()).map_err(lib_err)?;
        boxed(out, MsfemProblem { setup });
        Ok(())
    })
}

/// The shipped slab benchmark with `cells_per_mm` cells per millimetre.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn msfem_problem_slab_benchmark(cells_per_mm: usize, out: *mut *mut MsfemProblem) -> MsfemStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if cells_per_mm == 0 {
            return Err((MsfemStatus::InvalidArgument, "cells_per_mm must be at least 1".into()));
        }
        let setup = reference::slab_benchmark(cells_per_mm).map_err(lib_err)?;
        boxed(out, MsfemProblem { setup });
        Ok(())
    })
}

/// # Safety
/// `problem` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn msfem_problem_free(problem: *mut MsfemProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Number of mesh triangles of the problem.
///
/// # Safety
/// `problem` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn msfem_problem_n_triangles(problem: *const MsfemProblem, out: *mut usize) -> MsfemStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = p.setup.mesh().n_triangles();
        Ok(())
    })
}

/// Solves, equilibrates and evaluates the error indicators.
///
/// # Safety
/// `problem` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn msfem_solve(problem: *const MsfemProblem, out: *mut *mut MsfemResult) -> MsfemStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let solution = solve_msfem(&p.setup).map_err(lib_err)?;
        let flux = equilibrate(&p.setup, &solution).map_err(lib_err)?;
        let indicators = evaluate_indicators(&p.setup, &solution, &flux).map_err(lib_err)?;
        boxed(out, MsfemResult { solution, indicators, residuals: flux.residuals });
        Ok(())
    })
}

/// # Safety
/// `result` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn msfem_result_free(result: *mut MsfemResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

unsafe fn read_result(result: *const MsfemResult, out: *mut f64, f: impl FnOnce(&MsfemResult) -> f64) -> MsfemStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = f(r);
        Ok(())
    })
}

/// Time-averaged loss of one sheet over the modelled cross-section (W).
///
/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn msfem_result_losses(result: *const MsfemResult, out: *mut f64) -> MsfemStatus {
    read_result(result, out, |r| r.solution.losses())
}

/// Total error estimate `η`.
///
/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn msfem_result_eta(result: *const MsfemResult, out: *mut f64) -> MsfemStatus {
    read_result(result, out, |r| r.indicators.eta_total())
}

/// Largest relative constraint residual of the two equilibration problems.
///
/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn msfem_result_residual(result: *const MsfemResult, out: *mut f64) -> MsfemStatus {
    read_result(result, out, |r| r.residuals[0].max(r.residuals[1]))
}

/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn msfem_result_n_dofs(result: *const MsfemResult, out: *mut usize) -> MsfemStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = r.solution.n_dofs();
        Ok(())
    })
}

/// Copies `η²_T` for every triangle (zero off the conductor) into `buf`.
/// `len` must be at least the triangle count; `written` (may be null)
/// receives the count either way.
///
/// # Safety
/// `result` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn msfem_result_indicators(
    result: *const MsfemResult,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> MsfemStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        let values = r.indicators.values();
        if !written.is_null() {
            *written = values.len();
        }
        if len < values.len() {
            return Err((MsfemStatus::BufferTooSmall, format!("need {} entries, got {len}", values.len())));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
        Ok(())
    })
}

/// Loss per unit area of an infinite sheet (W/m²), see the library's
/// `reference::slab_losses`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn msfem_slab_losses(
    d_fe: f64,
    sigma: f64,
    mu: f64,
    frequency: f64,
    h_surface: f64,
    out: *mut f64,
) -> MsfemStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if !(d_fe > 0.0 && sigma > 0.0 && mu > 0.0 && frequency >= 0.0 && h_surface.is_finite()) {
            return Err((MsfemStatus::InvalidArgument, "d_fe, sigma and mu must be positive, frequency non-negative".into()));
        }
        *out = reference::slab_losses(d_fe, sigma, mu, frequency, h_surface);
        Ok(())
    })
}

/// Thickness integrals weighted by `kappa_fe` in the sheet and `kappa_0` in
/// the insulation.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn msfem_coefficient_table(
    kappa_fe: f64,
    kappa_0: f64,
    d_fe: f64,
    d_0: f64,
    out: *mut MsfemCoefficientTable,
) -> MsfemStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = ThicknessProfile::new(d_fe, d_0).map_err(lib_err)?;
        let t = coefficient_table(kappa_fe, kappa_0, &p);
        *out = MsfemCoefficientTable {
            phi1hat_sq: t.phi1hat_sq,
            phi2_sq: t.phi2_sq,
            dphi2_sq: t.dphi2_sq,
            phi0_phi2: t.phi0_phi2,
            phi3hat_sq: t.phi3hat_sq,
            phi1hat_phi3hat: t.phi1hat_phi3hat,
            phi0_sq_full: t.phi0_sq_full,
            phi0_sq_sheet: t.phi0_sq_sheet,
        };
        Ok(())
    })
}
