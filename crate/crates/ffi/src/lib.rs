//! C ABI over the qbspde library.
//!
//! Every entry point returns a [`QbsStatus`]. On failure the message is kept
//! per thread and can be read with [`qbs_last_error`]. Handles are opaque and
//! must be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use qbspde::cli::{run_named, RunConfig};
use qbspde::grid::{GridStack, SolutionField};
use qbspde::presets::{self, ProblemDoc};
use qbspde::solver::{solve, SolverConfig};
use qbspde::spec::ProblemSpec;
use qbspde::Error;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QbsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    UnknownPreset = 3,
    Numerical = 4,
    Io = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// A problem definition plus its default grid.
pub struct QbsProblem {
    spec: ProblemSpec,
    nx: Vec<usize>,
    n_t: usize,
    n_w: usize,
    w_max: f64,
}

/// A solved field.
pub struct QbsSolution {
    field: SolutionField,
}

/// Grid and solver overrides; zero fields keep the problem defaults.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct QbsSolveOptions {
    pub nx: usize,
    pub nt: usize,
    pub nw: usize,
    pub w_max: f64,
    pub theta: f64,
    pub picard_tol: f64,
}

/// Shape of a solution: `u` holds `n_levels * n_space * n_w` values,
/// `q` holds that times `d0`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct QbsDims {
    pub dim: usize,
    pub n_levels: usize,
    pub n_space: usize,
    pub n_w: usize,
    pub d0: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> QbsStatus {
    match e {
        Error::UnknownPreset(_) => QbsStatus::UnknownPreset,
        Error::Io(_) => QbsStatus::Io,
        Error::Sequence { source, .. } => status_of(source),
        Error::PicardDivergence { .. }
        | Error::BlowUp { .. }
        | Error::SearchFailure { .. }
        | Error::RankDeficient { .. }
        | Error::NoiseTruncation { .. }
        | Error::OdeBlowUp { .. } => QbsStatus::Numerical,
        _ => QbsStatus::InvalidArgument,
    }
}

fn guard<F: FnOnce() -> Result<(), QbsStatus>>(f: F) -> QbsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QbsStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal panic: {msg}"));
            QbsStatus::Panic
        }
    }
}

fn lib<T>(r: qbspde::Result<T>) -> Result<T, QbsStatus> {
    r.map_err(|e| {
        set_error(&e.to_string());
        status_of(&e)
    })
}

fn null_check<T>(p: *const T, what: &str) -> Result<(), QbsStatus> {
    if p.is_null() {
        set_error(&format!("{what} is null"));
        Err(QbsStatus::NullPointer)
    } else {
        Ok(())
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, QbsStatus> {
    null_check(p, what)?;
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(&format!("{what} is not valid UTF-8"));
        QbsStatus::InvalidArgument
    })
}

fn invalid(msg: &str) -> QbsStatus {
    set_error(msg);
    QbsStatus::InvalidArgument
}

/// Message of the last failure on this thread. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn qbs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn qbs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Load a shipped preset by name.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qbs_problem_from_preset(name: *const c_char, out: *mut *mut QbsProblem) -> QbsStatus {
    guard(|| {
        null_check(out, "out")?;
        let name = read_str(name, "name")?;
        let p = lib(presets::preset(name))?;
        let problem = QbsProblem {
            spec: p.spec,
            nx: p.nx,
            n_t: p.n_t,
            n_w: p.n_w,
            w_max: p.w_max,
        };
        *out = Box::into_raw(Box::new(problem));
        Ok(())
    })
}

/// Build a problem from a JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qbs_problem_from_json(json: *const c_char, out: *mut *mut QbsProblem) -> QbsStatus {
    guard(|| {
        null_check(out, "out")?;
        let text = read_str(json, "json")?;
        let spec = lib(ProblemDoc::from_json(text).and_then(|d| d.build()))?;
        let problem = QbsProblem {
            nx: vec![41; spec.d],
            n_t: 50,
            n_w: 41,
            w_max: 5.0 * spec.horizon.sqrt(),
            spec,
        };
        *out = Box::into_raw(Box::new(problem));
        Ok(())
    })
}

/// Release a problem. Null is ignored.
///
/// # Safety
/// `p` must come from a `qbs_problem_from_*` call and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn qbs_problem_free(p: *mut QbsProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Solve a problem. `options` may be null.
///
/// # Safety
/// `problem` must be a live handle, `options` null or valid, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn qbs_solve(problem: *const QbsProblem, options: *const QbsSolveOptions, out: *mut *mut QbsSolution) -> QbsStatus {
    guard(|| {
        null_check(problem, "problem")?;
        null_check(out, "out")?;
        let p = &*problem;
        let o = if options.is_null() { QbsSolveOptions::default() } else { *options };
        let nx = if o.nx > 0 { vec![o.nx; p.nx.len()] } else { p.nx.clone() };
        let pick = |v: usize, d: usize| if v > 0 { v } else { d };
        let w_max = if o.w_max > 0.0 { o.w_max } else { p.w_max };
        let grid = lib(GridStack::for_spec(&p.spec, &nx, pick(o.nw, p.n_w), w_max, pick(o.nt, p.n_t)))?;
        let mut cfg = SolverConfig::default();
        if o.theta > 0.0 {
            cfg.theta = o.theta;
        }
        if o.picard_tol > 0.0 {
            cfg.picard_tol = o.picard_tol;
        }
        let field = lib(qbspde::rng::thread_pool().install(|| solve(&p.spec, &grid, &cfg)))?;
        *out = Box::into_raw(Box::new(QbsSolution { field }));
        Ok(())
    })
}

/// Release a solution. Null is ignored.
///
/// # Safety
/// `s` must come from [`qbs_solve`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn qbs_solution_free(s: *mut QbsSolution) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Shape of a solution.
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn qbs_solution_dims(s: *const QbsSolution, out: *mut QbsDims) -> QbsStatus {
    guard(|| {
        null_check(s, "solution")?;
        null_check(out, "out")?;
        let f = &(*s).field;
        *out = QbsDims {
            dim: f.grid.dim(),
            n_levels: f.grid.n_levels(),
            n_space: f.grid.n_space(),
            n_w: f.grid.n_w(),
            d0: f.d0,
        };
        Ok(())
    })
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> Result<(), QbsStatus> {
    null_check(buf, "buffer")?;
    if len < src.len() {
        set_error(&format!("buffer holds {len} values, {} needed", src.len()));
        return Err(QbsStatus::BufferTooSmall);
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// Copy `u` (level-major, then space, then noise) into `buf`.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qbs_solution_copy_u(s: *const QbsSolution, buf: *mut f64, len: usize) -> QbsStatus {
    guard(|| {
        null_check(s, "solution")?;
        copy_out(&(*s).field.u, buf, len)
    })
}

/// Copy `q` (same order as `u`, `d0` components innermost) into `buf`.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qbs_solution_copy_q(s: *const QbsSolution, buf: *mut f64, len: usize) -> QbsStatus {
    guard(|| {
        null_check(s, "solution")?;
        copy_out(&(*s).field.q, buf, len)
    })
}

/// Write a solution; the format follows the extension (`.csv` or `.bin`).
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn qbs_solution_write(s: *const QbsSolution, path: *const c_char) -> QbsStatus {
    guard(|| {
        null_check(s, "solution")?;
        let path = read_str(path, "path")?;
        lib(qbspde::io::write_solution(&(*s).field, Path::new(path)))
    })
}

/// Coercivity constant `kappa / (1 + 2K)`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qbs_mu0(kappa: f64, k: f64, out: *mut f64) -> QbsStatus {
    guard(|| {
        null_check(out, "out")?;
        *out = lib(qbspde::spec::mu0(kappa, k))?;
        Ok(())
    })
}

/// A priori sup bound at time `t`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qbs_linf_bound(t: f64, lambda0_sup: f64, lambda1: f64, phi_sup: f64, horizon: f64, out: *mut f64) -> QbsStatus {
    guard(|| {
        null_check(out, "out")?;
        *out = lib(qbspde::estimates::linf_bound(t, lambda0_sup, lambda1, phi_sup, horizon))?;
        Ok(())
    })
}

/// Undo the exponential change of variables on `n` scalar pairs.
///
/// # Safety
/// All four buffers must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn qbs_exp_inverse(v: *const f64, r: *const f64, n: usize, lambda: f64, u_out: *mut f64, q_out: *mut f64) -> QbsStatus {
    guard(|| {
        for (p, w) in [(v, "v"), (r, "r"), (u_out.cast_const(), "u_out"), (q_out.cast_const(), "q_out")] {
            null_check(p, w)?;
        }
        let v = std::slice::from_raw_parts(v, n);
        let r = std::slice::from_raw_parts(r, n);
        let (u, q) = lib(qbspde::transforms::exp_inverse(v, r, lambda))?;
        ptr::copy_nonoverlapping(u.as_ptr(), u_out, n);
        ptr::copy_nonoverlapping(q.as_ptr(), q_out, n);
        Ok(())
    })
}

/// Search for uniqueness transform parameters. On a failed search the best
/// margin is still written and the status is `Numerical`.
///
/// # Safety
/// Output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn qbs_choose_beta_b(mu0: f64, big_lambda: f64, m: f64, beta: *mut f64, b: *mut f64, margin: *mut f64) -> QbsStatus {
    guard(|| {
        for (p, w) in [(beta, "beta"), (b, "b"), (margin, "margin")] {
            null_check(p, w)?;
        }
        match qbspde::transforms::choose_beta_b(mu0, big_lambda, m) {
            Ok(c) => {
                *beta = c.beta;
                *b = c.b;
                *margin = c.margin;
                Ok(())
            }
            Err(e) => {
                if let Error::SearchFailure { best_margin } = e {
                    *margin = best_margin;
                }
                lib(Err(e))
            }
        }
    })
}

/// Run a CLI subcommand described by JSON, e.g.
/// `{"command": "estimate", "config": {"check": "linf"}}`, and return the
/// report as a string to be released with [`qbs_string_free`].
///
/// # Safety
/// `request` must be a NUL-terminated string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn qbs_run_json(request: *const c_char, out: *mut *mut c_char) -> QbsStatus {
    #[derive(serde::Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Request {
        command: String,
        #[serde(default)]
        config: RunConfig,
    }
    guard(|| {
        null_check(out, "out")?;
        let text = read_str(request, "request")?;
        let req: Request = serde_json::from_str(text).map_err(|e| invalid(&format!("request: {e}")))?;
        let report = lib(qbspde::rng::thread_pool().install(|| run_named(&req.command, req.config)))?;
        let json = serde_json::to_string(&report).map_err(|e| invalid(&e.to_string()))?;
        *out = CString::new(json).map_err(|e| invalid(&e.to_string()))?.into_raw();
        Ok(())
    })
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn qbs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
