//! C ABI for privtext.
//!
//! Every fallible function returns a [`PtStatus`]. On failure a message is
//! stored per thread and can be read with [`pt_last_error_message`]. Objects
//! are handed out as opaque pointers and must be released with the matching
//! `*_free` function. Panics never cross the boundary; they surface as
//! `PT_STATUS_PANIC`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use privtext::dp::{self, AccountantState, PrivacyBudget};
use privtext::federated::{aggregate, ClientUpdate, Weighting};
use privtext::harness::{self, ExperimentConfig, RunOptions};
use privtext::models::{self, ModelConfig, ParamVector};
use privtext::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Config = 5,
    Calibration = 6,
    NonFinite = 7,
    DimensionMismatch = 8,
    Checkpoint = 9,
    /// A run finished but broke a run-time contract (epsilon overshoot or nondeterminism).
    Invariant = 10,
    Panic = 99,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    let c = CString::new(msg).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PtStatus {
    match e {
        Error::Io { .. } => PtStatus::Io,
        Error::Parse { .. } => PtStatus::Parse,
        Error::InvalidArgument(_) => PtStatus::InvalidArgument,
        Error::DimensionMismatch { .. } => PtStatus::DimensionMismatch,
        Error::NonFinite(_) => PtStatus::NonFinite,
        Error::Calibration { .. } => PtStatus::Calibration,
        Error::Config(_) => PtStatus::Config,
        Error::Checkpoint(_) => PtStatus::Checkpoint,
    }
}

/// Runs `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), PtStatus>) -> PtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PtStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            PtStatus::Panic
        }
    }
}

fn fail(e: Error) -> PtStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

fn null(what: &str) -> PtStatus {
    set_error(format!("{what} is null"));
    PtStatus::NullPointer
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, PtStatus> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], PtStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], PtStatus> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn string(p: *const c_char, what: &str) -> Result<String, PtStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map(str::to_owned).map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        PtStatus::InvalidArgument
    })
}

/// Message of the last failure on this thread, or null if there was none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn pt_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// RDP of one subsampled Gaussian step at integer order `alpha`.
#[no_mangle]
pub unsafe extern "C" fn pt_rdp_subsampled_gaussian(q: f64, sigma: f64, alpha: u32, out: *mut f64) -> PtStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = dp::rdp_subsampled_gaussian(q, sigma, alpha).map_err(fail)?;
        Ok(())
    })
}

/// Noise multiplier meeting `(epsilon, delta)` for `steps` steps at sample rate `q`.
#[no_mangle]
pub unsafe extern "C" fn pt_calibrate_sigma(
    epsilon: f64,
    delta: f64,
    q: f64,
    steps: u64,
    out_sigma: *mut f64,
    out_epsilon: *mut f64,
) -> PtStatus {
    guard(|| {
        let sigma = out_ref(out_sigma, "out_sigma")?;
        let achieved = out_ref(out_epsilon, "out_epsilon")?;
        let budget = PrivacyBudget::new(epsilon, delta).map_err(fail)?;
        let cal = dp::calibrate_sigma(&budget, q, steps).map_err(fail)?;
        *sigma = cal.sigma;
        *achieved = cal.epsilon;
        Ok(())
    })
}

/// Opaque RDP accountant.
pub struct PtAccountant(AccountantState);

#[no_mangle]
pub extern "C" fn pt_accountant_new() -> *mut PtAccountant {
    Box::into_raw(Box::new(PtAccountant(AccountantState::new())))
}

/// Adds `steps` steps of the subsampled Gaussian at `(q, sigma)`.
#[no_mangle]
pub unsafe extern "C" fn pt_accountant_compose(acc: *mut PtAccountant, q: f64, sigma: f64, steps: u64) -> PtStatus {
    guard(|| {
        let acc = out_ref(acc, "accountant")?;
        acc.0.compose_in_place(q, sigma, steps).map_err(fail)
    })
}

/// Current epsilon at `delta` and the order that attains it.
#[no_mangle]
pub unsafe extern "C" fn pt_accountant_epsilon(
    acc: *const PtAccountant,
    delta: f64,
    out_epsilon: *mut f64,
    out_order: *mut u32,
) -> PtStatus {
    guard(|| {
        let acc = acc.as_ref().ok_or_else(|| null("accountant"))?;
        let eps = out_ref(out_epsilon, "out_epsilon")?;
        let report = acc.0.to_epsilon(delta).map_err(fail)?;
        *eps = report.epsilon;
        if let Some(o) = out_order.as_mut() {
            *o = report.best_order;
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn pt_accountant_steps(acc: *const PtAccountant) -> u64 {
    acc.as_ref().map_or(0, |a| a.0.steps_recorded())
}

#[no_mangle]
pub unsafe extern "C" fn pt_accountant_free(acc: *mut PtAccountant) {
    if !acc.is_null() {
        drop(Box::from_raw(acc));
    }
}

/// Writes `grad * min(1, clip_norm / ||grad||)` to `out` (may alias `grad`).
#[no_mangle]
pub unsafe extern "C" fn pt_clip(grad: *const f64, len: usize, clip_norm: f64, out: *mut f64) -> PtStatus {
    guard(|| {
        let g = slice(grad, len, "grad")?.to_vec();
        let clipped = dp::clip(&g, clip_norm).map_err(fail)?;
        slice_mut(out, len, "out")?.copy_from_slice(&clipped);
        Ok(())
    })
}

/// Example-count weighted average of `n_clients` parameter vectors stored
/// row-major in `params` (`n_clients * dim` values). Row `i` belongs to
/// client `i` and carries weight `example_counts[i]`.
#[no_mangle]
pub unsafe extern "C" fn pt_aggregate(
    params: *const f64,
    example_counts: *const u64,
    n_clients: usize,
    dim: usize,
    out: *mut f64,
) -> PtStatus {
    guard(|| {
        let total = n_clients.checked_mul(dim).ok_or_else(|| {
            set_error("n_clients * dim overflows");
            PtStatus::InvalidArgument
        })?;
        let flat = slice(params, total, "params")?;
        let counts = slice(example_counts, n_clients, "example_counts")?;
        let rows: Vec<ParamVector> = (0..n_clients)
            .map(|i| ParamVector(flat[i * dim..(i + 1) * dim].to_vec()))
            .collect();
        let updates: Vec<ClientUpdate<'_>> = rows
            .iter()
            .enumerate()
            .map(|(i, p)| ClientUpdate {
                client_id: i,
                params: p,
                examples_used: counts[i] as usize,
            })
            .collect();
        let avg = aggregate(&updates, Weighting::ByExampleCount).map_err(fail)?;
        slice_mut(out, dim, "out")?.copy_from_slice(avg.as_slice());
        Ok(())
    })
}

/// Opaque trained model: configuration plus parameters.
pub struct PtModel {
    config: ModelConfig,
    params: ParamVector,
}

/// Loads a checkpoint written by `privtext`.
#[no_mangle]
pub unsafe extern "C" fn pt_model_load(path: *const c_char, out: *mut *mut PtModel) -> PtStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let path = PathBuf::from(string(path, "path")?);
        let (config, params) = models::load_checkpoint(&path).map_err(fail)?;
        *out = Box::into_raw(Box::new(PtModel { config, params }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn pt_model_param_count(model: *const PtModel) -> usize {
    model.as_ref().map_or(0, |m| m.params.len())
}

/// Writes negative, neutral and positive probabilities for `text` to `out[0..3]`.
#[no_mangle]
pub unsafe extern "C" fn pt_model_predict_proba(model: *const PtModel, text: *const c_char, out: *mut f64) -> PtStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let text = string(text, "text")?;
        let probs = models::forward_text(&m.params, &text, &m.config).map_err(fail)?;
        slice_mut(out, probs.len(), "out")?.copy_from_slice(&probs);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn pt_model_free(model: *mut PtModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Runs the experiment in the TOML file at `config_path` and writes the
/// result files into `out_dir`. `threads = 0` uses one thread per core.
/// Returns `PT_STATUS_INVARIANT` if the grid ran but a contract check failed.
#[no_mangle]
pub unsafe extern "C" fn pt_run_experiment(
    config_path: *const c_char,
    out_dir: *const c_char,
    threads: u32,
) -> PtStatus {
    guard(|| {
        let cfg_path = PathBuf::from(string(config_path, "config_path")?);
        let out_dir = PathBuf::from(string(out_dir, "out_dir")?);
        let config = ExperimentConfig::load(&cfg_path, &[]).map_err(fail)?;
        let options = RunOptions {
            threads: threads as usize,
        };
        let report = harness::run_experiment(&config, &options).map_err(fail)?;
        harness::write_outputs(&report, &out_dir).map_err(fail)?;
        if !report.ok() {
            set_error(report.invariant_failures.join("; "));
            return Err(PtStatus::Invariant);
        }
        Ok(())
    })
}
