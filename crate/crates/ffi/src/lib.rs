//! C ABI over `wclass_sim`.
//!
//! Objects cross the boundary as opaque handles created by `wcs_*_new` /
//! `wcs_*` constructors and released with the matching `*_free`. Every
//! fallible call returns a [`WcsStatus`]; the message of the last failure on
//! the calling thread is available from [`wcs_last_error_message`]. Strings
//! returned to the caller must be released with [`wcs_string_free`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use wclass_sim::analysis::trial_rng;
use wclass_sim::analysis::{predicted_generation_time, run_experiment, Experiment, RunReport};
use wclass_sim::protocol::{Protocol, ProtocolConfig};
use wclass_sim::{Error, FockState};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WcsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Precondition = 3,
    AttemptsExhausted = 4,
    InsufficientData = 5,
    Domain = 6,
    Internal = 7,
}

/// Protocol parameters.
pub struct WcsConfig {
    inner: ProtocolConfig,
}

/// A prepared state together with the ideal W state on the same modes.
pub struct WcsState {
    state: FockState,
    ideal: FockState,
}

/// Aggregate of a batch run.
pub struct WcsReport {
    inner: RunReport,
}

/// Headline numbers of a report; absent estimates are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct WcsReportSummary {
    pub trials: u64,
    pub successes: u64,
    pub p_c_hat: f64,
    pub mean_time_s: f64,
    pub predicted_time_s: f64,
    pub c_n_hat: f64,
    pub fidelity_mean: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> WcsStatus {
    match err {
        Error::Config(_) => WcsStatus::InvalidArgument,
        Error::Precondition(_) | Error::Sequencing(_) | Error::Normalization => {
            WcsStatus::Precondition
        }
        Error::AttemptsExhausted { .. } => WcsStatus::AttemptsExhausted,
        Error::InsufficientData(_) => WcsStatus::InsufficientData,
        Error::Domain(_) => WcsStatus::Domain,
        _ => WcsStatus::Internal,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (WcsStatus, String)>) -> WcsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            WcsStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            WcsStatus::Internal
        }
    }
}

fn lib(err: Error) -> (WcsStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (WcsStatus, String) {
    (WcsStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (WcsStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn as_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (WcsStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .map(CString::into_raw)
        .unwrap_or(ptr::null_mut())
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn wcs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub unsafe extern "C" fn wcs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Default configuration for `n` parties with zero phases.
#[no_mangle]
pub unsafe extern "C" fn wcs_config_new(n: usize, out: *mut *mut WcsConfig) -> WcsStatus {
    guard(|| {
        let out = as_mut(out, "out")?;
        let cfg = ProtocolConfig::with_parties(n);
        cfg.validate().map_err(lib)?;
        *out = Box::into_raw(Box::new(WcsConfig { inner: cfg }));
        Ok(())
    })
}

/// Configuration from a JSON object with the fields of a report's
/// `config.protocol`; missing fields take their defaults.
#[no_mangle]
pub unsafe extern "C" fn wcs_config_from_json(
    json: *const c_char,
    out: *mut *mut WcsConfig,
) -> WcsStatus {
    guard(|| {
        let out = as_mut(out, "out")?;
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|e| {
            (
                WcsStatus::InvalidArgument,
                format!("json is not UTF-8: {e}"),
            )
        })?;
        let cfg: ProtocolConfig = serde_json::from_str(text)
            .map_err(|e| (WcsStatus::InvalidArgument, format!("invalid config: {e}")))?;
        cfg.validate().map_err(lib)?;
        *out = Box::into_raw(Box::new(WcsConfig { inner: cfg }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn wcs_config_free(cfg: *mut WcsConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

fn update(cfg: *mut WcsConfig, f: impl FnOnce(&mut ProtocolConfig)) -> WcsStatus {
    guard(|| {
        let cfg = unsafe { as_mut(cfg, "cfg") }?;
        let mut next = cfg.inner.clone();
        f(&mut next);
        next.validate().map_err(lib)?;
        cfg.inner = next;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn wcs_config_set_p_e(cfg: *mut WcsConfig, p_e: f64) -> WcsStatus {
    update(cfg, |c| c.p_e = p_e)
}

#[no_mangle]
pub unsafe extern "C" fn wcs_config_set_eta(cfg: *mut WcsConfig, eta: f64) -> WcsStatus {
    update(cfg, |c| c.eta = eta)
}

#[no_mangle]
pub unsafe extern "C" fn wcs_config_set_seed(cfg: *mut WcsConfig, seed: u64) -> WcsStatus {
    update(cfg, |c| c.seed = seed)
}

#[no_mangle]
pub unsafe extern "C" fn wcs_config_set_max_attempts(
    cfg: *mut WcsConfig,
    max_attempts: u64,
) -> WcsStatus {
    update(cfg, |c| c.max_attempts = max_attempts)
}

#[no_mangle]
pub unsafe extern "C" fn wcs_config_set_double_pair(
    cfg: *mut WcsConfig,
    enabled: bool,
) -> WcsStatus {
    update(cfg, |c| c.double_pair = enabled)
}

/// Sets the channel phase of party `party` (1-based); party 1 is the
/// reference and only accepts 0.
#[no_mangle]
pub unsafe extern "C" fn wcs_config_set_phase(
    cfg: *mut WcsConfig,
    party: usize,
    phase: f64,
) -> WcsStatus {
    let n = match cfg.as_ref() {
        Some(c) => c.inner.n,
        None => return guard(|| Err(null("cfg"))),
    };
    if party == 0 || party > n {
        return guard(|| {
            Err((
                WcsStatus::InvalidArgument,
                format!("party {party} outside 1..={n}"),
            ))
        });
    }
    update(cfg, |c| c.phases[party - 1] = phase)
}

/// Prepares one W state with the trial-0 random stream of the configured
/// seed. `attempts` (may be NULL) receives the number of full attempts.
#[no_mangle]
pub unsafe extern "C" fn wcs_build_w_chain(
    cfg: *const WcsConfig,
    out: *mut *mut WcsState,
    attempts: *mut u64,
) -> WcsStatus {
    guard(|| {
        let cfg = as_ref(cfg, "cfg")?;
        let out = as_mut(out, "out")?;
        let proto = Protocol::new(cfg.inner.clone()).map_err(lib)?;
        let mut rng = trial_rng(cfg.inner.seed, 0);
        let step = proto.build_w_chain(&mut rng).map_err(lib)?;
        let ideal = proto.ideal_w_state().map_err(lib)?;
        if let Some(a) = attempts.as_mut() {
            *a = step.attempts;
        }
        *out = Box::into_raw(Box::new(WcsState {
            state: step.state,
            ideal,
        }));
        Ok(())
    })
}

/// The ideal W state of the configuration.
#[no_mangle]
pub unsafe extern "C" fn wcs_ideal_w_state(
    cfg: *const WcsConfig,
    out: *mut *mut WcsState,
) -> WcsStatus {
    guard(|| {
        let cfg = as_ref(cfg, "cfg")?;
        let out = as_mut(out, "out")?;
        let proto = Protocol::new(cfg.inner.clone()).map_err(lib)?;
        let ideal = proto.ideal_w_state().map_err(lib)?;
        *out = Box::into_raw(Box::new(WcsState {
            state: ideal.clone(),
            ideal,
        }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn wcs_state_free(state: *mut WcsState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// `|⟨W|ψ⟩|²` of the state with the ideal W state on the same modes.
#[no_mangle]
pub unsafe extern "C" fn wcs_state_fidelity(state: *const WcsState, out: *mut f64) -> WcsStatus {
    guard(|| {
        let state = as_ref(state, "state")?;
        let out = as_mut(out, "out")?;
        *out = state.state.fidelity(&state.ideal).map_err(lib)?;
        Ok(())
    })
}

/// One line per basis ket: `re im : n_1 n_2 ...`.
#[no_mangle]
pub unsafe extern "C" fn wcs_state_to_text(
    state: *const WcsState,
    out: *mut *mut c_char,
) -> WcsStatus {
    guard(|| {
        let state = as_ref(state, "state")?;
        let out = as_mut(out, "out")?;
        *out = to_c_string(state.state.to_debug_text());
        Ok(())
    })
}

/// Runs `trials` chain builds. `workers = 0` uses the default thread pool.
#[no_mangle]
pub unsafe extern "C" fn wcs_run_batch(
    cfg: *const WcsConfig,
    trials: u64,
    workers: usize,
    out: *mut *mut WcsReport,
) -> WcsStatus {
    guard(|| {
        let cfg = as_ref(cfg, "cfg")?;
        let out = as_mut(out, "out")?;
        let workers = (workers > 0).then_some(workers);
        let report =
            run_experiment(&cfg.inner, Experiment::WState, trials, workers).map_err(lib)?;
        *out = Box::into_raw(Box::new(WcsReport { inner: report }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn wcs_report_free(report: *mut WcsReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

#[no_mangle]
pub unsafe extern "C" fn wcs_report_summary(
    report: *const WcsReport,
    out: *mut WcsReportSummary,
) -> WcsStatus {
    guard(|| {
        let r = &as_ref(report, "report")?.inner;
        let out = as_mut(out, "out")?;
        *out = WcsReportSummary {
            trials: r.trials,
            successes: r.successes,
            p_c_hat: r.p_c_hat,
            mean_time_s: r.mean_time_s,
            predicted_time_s: r.predicted_time_s.unwrap_or(f64::NAN),
            c_n_hat: r.c_n_hat.unwrap_or(f64::NAN),
            fidelity_mean: r.fidelity_mean.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}

/// The report's `results` object as pretty-printed JSON.
#[no_mangle]
pub unsafe extern "C" fn wcs_report_to_json(
    report: *const WcsReport,
    out: *mut *mut c_char,
) -> WcsStatus {
    guard(|| {
        let r = &as_ref(report, "report")?.inner;
        let out = as_mut(out, "out")?;
        let json =
            serde_json::to_string_pretty(r).map_err(|e| (WcsStatus::Internal, e.to_string()))?;
        *out = to_c_string(json);
        Ok(())
    })
}

/// `t0 / ((1 − η)^{2n−1} p_c^n)`.
#[no_mangle]
pub unsafe extern "C" fn wcs_predicted_generation_time(
    n: usize,
    eta: f64,
    p_c: f64,
    t0: f64,
    out: *mut f64,
) -> WcsStatus {
    guard(|| {
        let out = as_mut(out, "out")?;
        *out = predicted_generation_time(n, eta, p_c, t0).map_err(lib)?;
        Ok(())
    })
}
