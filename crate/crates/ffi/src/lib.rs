//! C ABI for glasslab.
//!
//! Objects cross the boundary as opaque handles created by a `*_new` or
//! producing call and released by the matching `*_free`. Every fallible
//! call returns a [`GlasslabStatus`]; on failure the message is kept per
//! thread and read back with [`glasslab_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use glasslab::cli::{run_experiment, ExperimentConfig, ExperimentKind};
use glasslab::exact::{enumerate, ExactSummary};
use glasslab::models::{parse_model_spec, Disorder, ModelKind, ModelSpec};
use glasslab::rs::{solve, Quadrature, RSSolution, SolverOptions};
use glasslab::sampler::sweep_disorder;
use glasslab::seed::seed_stream;
use glasslab::verify::full_inputs;
use glasslab::Error;

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GlasslabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidParameter = 3,
    DomainMismatch = 4,
    DimensionMismatch = 5,
    Unsupported = 6,
    TooLarge = 7,
    Solver = 8,
    Config = 9,
    TooManyFailures = 10,
    Io = 11,
    Panic = 12,
    BufferTooSmall = 13,
}

impl From<&Error> for GlasslabStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidParameter { .. } => Self::InvalidParameter,
            Error::DomainMismatch { .. } => Self::DomainMismatch,
            Error::DimensionMismatch { .. } => Self::DimensionMismatch,
            Error::Unsupported(_) => Self::Unsupported,
            Error::TooLarge { .. } => Self::TooLarge,
            Error::Solver(_) => Self::Solver,
            Error::Config { .. } | Error::ConfigField { .. } | Error::DisorderFormat(_) | Error::Json(_) => {
                Self::Config
            }
            Error::TooManyFailures { .. } => Self::TooManyFailures,
            Error::Io(_) => Self::Io,
        }
    }
}

/// Model specification.
pub struct GlasslabModel(ModelSpec);

/// One disorder realisation.
pub struct GlasslabDisorder(Disorder);

/// Exact Gibbs summary of one disorder.
pub struct GlasslabExact(ExactSummary);

/// Replica-symmetric fixed point.
pub struct GlasslabRs(RSSolution);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn fail(status: GlasslabStatus, msg: &str) -> GlasslabStatus {
    set_error(msg);
    status
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), GlasslabStatus>) -> GlasslabStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GlasslabStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(GlasslabStatus::Panic, "internal panic"),
    }
}

fn check<T>(r: glasslab::Result<T>) -> Result<T, GlasslabStatus> {
    r.map_err(|e| fail((&e).into(), &e.to_string()))
}

unsafe fn borrow<'a, T>(p: *const T) -> Result<&'a T, GlasslabStatus> {
    p.as_ref().ok_or_else(|| fail(GlasslabStatus::NullPointer, "null handle"))
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, GlasslabStatus> {
    if p.is_null() {
        return Err(fail(GlasslabStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(GlasslabStatus::InvalidUtf8, "string is not UTF-8"))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), GlasslabStatus> {
    if out.is_null() {
        return Err(fail(GlasslabStatus::NullPointer, "null output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<(), GlasslabStatus> {
    if out.is_null() {
        return Err(fail(GlasslabStatus::NullPointer, "null output pointer"));
    }
    *out = value;
    Ok(())
}

/// Copies `src` into a caller buffer of `cap` doubles; `len` receives the
/// required length even when the buffer is too small.
unsafe fn fill(src: &[f64], buf: *mut f64, cap: usize, len: *mut usize) -> Result<(), GlasslabStatus> {
    if !len.is_null() {
        *len = src.len();
    }
    if cap < src.len() {
        return Err(fail(GlasslabStatus::BufferTooSmall, &format!("need {} entries", src.len())));
    }
    if buf.is_null() {
        return Err(fail(GlasslabStatus::NullPointer, "null buffer"));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next glasslab call on the same thread.
#[no_mangle]
pub extern "C" fn glasslab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn glasslab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// 256-bit stream key for `(master_seed, disorder_index, role)`.
///
/// # Safety
/// `out` must point to 32 writable bytes.
#[no_mangle]
pub unsafe extern "C" fn glasslab_seed_stream(master_seed: u64, disorder_index: u64, role: u8, out: *mut u8) -> GlasslabStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(GlasslabStatus::NullPointer, "null output pointer"));
        }
        let key = seed_stream(master_seed, disorder_index, role);
        ptr::copy_nonoverlapping(key.as_ptr(), out, 32);
        Ok(())
    })
}

/// SK model; `kind` is 1 for ±1 spins and 2 for box spins.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn glasslab_model_sk(kind: u32, beta: f64, h: f64, out: *mut *mut GlasslabModel) -> GlasslabStatus {
    guard(|| {
        let spec = match ModelKind::from_code(kind) {
            Some(ModelKind::SkIsing) => ModelSpec::sk_ising(beta, h),
            Some(ModelKind::SkBox) => ModelSpec::sk_box(beta, h),
            _ => return Err(fail(GlasslabStatus::InvalidParameter, &format!("kind {kind} is not an SK model"))),
        };
        check(spec.validate())?;
        put(out, GlasslabModel(spec))
    })
}

/// Model from `key = value` lines, as in experiment configs.
///
/// # Safety
/// `spec` must be a NUL-terminated string and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn glasslab_model_parse(spec: *const c_char, out: *mut *mut GlasslabModel) -> GlasslabStatus {
    guard(|| {
        let spec = check(parse_model_spec(text(spec)?))?;
        put(out, GlasslabModel(spec))
    })
}

/// Numeric kind code of a model (1 SK, 2 SK box, 3 perceptron, 4 ST).
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn glasslab_model_kind(model: *const GlasslabModel) -> u32 {
    model.as_ref().map_or(0, |m| m.0.kind.code())
}

/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn glasslab_model_free(model: *mut GlasslabModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Disorder `index` of the sweep with `master_seed`, on `n` sites.
///
/// # Safety
/// `model` must be a live handle and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn glasslab_disorder_sample(
    model: *const GlasslabModel,
    n: usize,
    master_seed: u64,
    index: u64,
    out: *mut *mut GlasslabDisorder,
) -> GlasslabStatus {
    guard(|| {
        let m = borrow(model)?;
        let d = check(sweep_disorder(&m.0, n, master_seed, index))?;
        put(out, GlasslabDisorder(d))
    })
}

/// # Safety
/// `disorder` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn glasslab_disorder_free(disorder: *mut GlasslabDisorder) {
    if !disorder.is_null() {
        drop(Box::from_raw(disorder));
    }
}

/// Exact enumeration with the first `k` sites' joint law.
///
/// # Safety
/// Handles must be live and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn glasslab_exact_enumerate(
    model: *const GlasslabModel,
    disorder: *const GlasslabDisorder,
    k: usize,
    out: *mut *mut GlasslabExact,
) -> GlasslabStatus {
    guard(|| {
        let summary = check(enumerate(&borrow(model)?.0, &borrow(disorder)?.0, k))?;
        put(out, GlasslabExact(summary))
    })
}

/// # Safety
/// `exact` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn glasslab_exact_log_partition(exact: *const GlasslabExact, out: *mut f64) -> GlasslabStatus {
    guard(|| write(out, borrow(exact)?.0.log_partition))
}

/// Site means `⟨x_i⟩`, `N` entries.
///
/// # Safety
/// `buf` must hold `cap` doubles; `len` may be null.
#[no_mangle]
pub unsafe extern "C" fn glasslab_exact_site_means(
    exact: *const GlasslabExact,
    buf: *mut f64,
    cap: usize,
    len: *mut usize,
) -> GlasslabStatus {
    guard(|| fill(&borrow(exact)?.0.site_means, buf, cap, len))
}

/// The `2^k` probabilities of the first `k` sites; site 1 is the most
/// significant bit and a set bit means `+1`.
///
/// # Safety
/// `buf` must hold `cap` doubles; `len` may be null.
#[no_mangle]
pub unsafe extern "C" fn glasslab_exact_marginal(
    exact: *const GlasslabExact,
    buf: *mut f64,
    cap: usize,
    len: *mut usize,
) -> GlasslabStatus {
    guard(|| fill(&borrow(exact)?.0.marginal.probs, buf, cap, len))
}

/// # Safety
/// `exact` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn glasslab_exact_free(exact: *mut GlasslabExact) {
    if !exact.is_null() {
        drop(Box::from_raw(exact));
    }
}

/// Replica-symmetric solution for `model` at size `n` (`n` sets the
/// constraint ratio of Gardner models). `quad_order` 0 picks the default.
///
/// # Safety
/// `model` must be live and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn glasslab_rs_solve(
    model: *const GlasslabModel,
    n: usize,
    quad_order: usize,
    out: *mut *mut GlasslabRs,
) -> GlasslabStatus {
    guard(|| {
        let m = borrow(model)?;
        if n == 0 {
            return Err(fail(GlasslabStatus::InvalidParameter, "n must be positive"));
        }
        let quad = if quad_order == 0 { Ok(Quadrature::default()) } else { Quadrature::new(quad_order) };
        let quad = check(quad)?;
        let sol = check(solve(&full_inputs(&m.0, n), &quad, &SolverOptions::default()))?;
        put(out, GlasslabRs(sol))
    })
}

/// Named order parameter, e.g. `q`, `r`, `sigma`.
///
/// # Safety
/// `rs` must be live, `name` NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn glasslab_rs_param(rs: *const GlasslabRs, name: *const c_char, out: *mut f64) -> GlasslabStatus {
    guard(|| {
        let rs = borrow(rs)?;
        let name = text(name)?;
        match rs.0.get(name) {
            Some(v) => write(out, v),
            None => Err(fail(GlasslabStatus::InvalidParameter, &format!("no parameter `{name}`"))),
        }
    })
}

/// Sup-norm fixed-point residual of the solution.
///
/// # Safety
/// `rs` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn glasslab_rs_residual(rs: *const GlasslabRs, out: *mut f64) -> GlasslabStatus {
    guard(|| write(out, borrow(rs)?.0.residual_inf))
}

/// # Safety
/// `rs` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn glasslab_rs_free(rs: *mut GlasslabRs) {
    if !rs.is_null() {
        drop(Box::from_raw(rs));
    }
}

/// Runs an experiment (`rs-solve`, `li-sweep`, `concentration`,
/// `decompose-gap` or `projection`) from config text into `out_dir`.
/// `workers` 0 uses the default pool size.
///
/// # Safety
/// Strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn glasslab_run_experiment(
    experiment: *const c_char,
    config: *const c_char,
    out_dir: *const c_char,
    workers: usize,
) -> GlasslabStatus {
    guard(|| {
        let kind: ExperimentKind = check(text(experiment)?.parse())?;
        let cfg = check(ExperimentConfig::parse(text(config)?, kind))?;
        let workers = if workers == 0 { cfg.workers.unwrap_or_else(glasslab::sampler::default_workers) } else { workers };
        check(run_experiment(&cfg, Path::new(text(out_dir)?), workers)).map(|_| ())
    })
}
