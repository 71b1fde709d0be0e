//! C ABI over the subdiff laboratory: opaque scenario and run handles with integer status codes.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use subdiff::decayfit::{verify_decay_theorem, DecayReport, Status};
use subdiff::evolve::{monitor_energy, solve_transient, SolutionHistory, TransientOptions};
use subdiff::scenario::{build, ScenarioConfig};
use subdiff::space::norm_l2_sq;
use subdiff::specialfn::ml_neg;
use subdiff::Error;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubdiffStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Condition = 4,
    Solver = 5,
    OutOfRange = 6,
    BufferTooSmall = 7,
    Panic = 8,
    Other = 9,
}

/// Outcome of a verdict.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubdiffVerdict {
    Pass = 0,
    Fail = 1,
    Abstain = 2,
}

/// Parsed scenario configuration.
pub struct SubdiffScenario {
    config: ScenarioConfig,
}

/// Completed trajectory with its decay report.
pub struct SubdiffRun {
    history: SolutionHistory,
    u_inf: Vec<f64>,
    report: Option<DecayReport>,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn classify(e: &Error) -> SubdiffStatus {
    match e {
        Error::Config { .. } | Error::Expression { .. } => SubdiffStatus::Config,
        Error::Ellipticity(_)
        | Error::Domain(_)
        | Error::Problem(_)
        | Error::Precondition(_)
        | Error::TimeGrid(_)
        | Error::SpaceGrid(_) => SubdiffStatus::Condition,
        Error::BlowUp { .. } | Error::SingularJacobian { .. } | Error::NewtonStagnation { .. } => {
            SubdiffStatus::Solver
        }
        Error::OutOfRange { .. } => SubdiffStatus::OutOfRange,
        _ => SubdiffStatus::Other,
    }
}

fn fail(e: Error) -> SubdiffStatus {
    let code = classify(&e);
    set_error(e.to_string());
    code
}

fn guard<F: FnOnce() -> SubdiffStatus>(f: F) -> SubdiffStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == SubdiffStatus::Ok {
                set_error("");
            }
            s
        }
        Err(_) => {
            set_error("internal panic");
            SubdiffStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, SubdiffStatus> {
    if p.is_null() {
        set_error("null string argument");
        return Err(SubdiffStatus::NullPointer);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        SubdiffStatus::InvalidUtf8
    })
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> SubdiffStatus {
    if buf.is_null() {
        set_error("null output buffer");
        return SubdiffStatus::NullPointer;
    }
    if len < src.len() {
        set_error(format!("buffer holds {len} values, need {}", src.len()));
        return SubdiffStatus::BufferTooSmall;
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    SubdiffStatus::Ok
}

macro_rules! try_status {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! deref {
    ($p:expr) => {{
        if $p.is_null() {
            set_error("null handle");
            return SubdiffStatus::NullPointer;
        }
        &*$p
    }};
}

/// Copies the message of the last failure on this thread (NUL-terminated, truncated to `len`).
/// Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn subdiff_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn subdiff_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// E_{α,β}(−x) for x ≥ 0.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn subdiff_mittag_leffler(
    alpha: f64,
    beta: f64,
    x: f64,
    out: *mut f64,
) -> SubdiffStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return SubdiffStatus::NullPointer;
        }
        if !(alpha > 0.0 && alpha <= 1.0 && beta > 0.0 && x >= 0.0 && x.is_finite()) {
            set_error(format!(
                "need 0 < alpha <= 1, beta > 0, x >= 0; got ({alpha}, {beta}, {x})"
            ));
            return SubdiffStatus::Condition;
        }
        *out = ml_neg(alpha, beta, x);
        SubdiffStatus::Ok
    })
}

fn new_scenario(config: ScenarioConfig, out: *mut *mut SubdiffScenario) -> SubdiffStatus {
    unsafe { *out = Box::into_raw(Box::new(SubdiffScenario { config })) };
    SubdiffStatus::Ok
}

/// Loads a built-in scenario by name.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn subdiff_scenario_builtin(
    name: *const c_char,
    out: *mut *mut SubdiffScenario,
) -> SubdiffStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return SubdiffStatus::NullPointer;
        }
        let name = try_status!(read_str(name));
        match ScenarioConfig::builtin(name, &[]) {
            Ok(c) => new_scenario(c, out),
            Err(e) => fail(e),
        }
    })
}

/// Parses a scenario from TOML text.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn subdiff_scenario_from_toml(
    text: *const c_char,
    out: *mut *mut SubdiffScenario,
) -> SubdiffStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return SubdiffStatus::NullPointer;
        }
        let text = try_status!(read_str(text));
        match ScenarioConfig::from_toml(text, &[]) {
            Ok(c) => new_scenario(c, out),
            Err(e) => fail(e),
        }
    })
}

/// Applies a dotted `key=value` override; the scenario is unchanged on failure.
///
/// # Safety
/// `scenario` must come from this library; `assignment` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn subdiff_scenario_set(
    scenario: *mut SubdiffScenario,
    assignment: *const c_char,
) -> SubdiffStatus {
    guard(|| {
        if scenario.is_null() {
            set_error("null handle");
            return SubdiffStatus::NullPointer;
        }
        let sc = &mut *scenario;
        let a = try_status!(read_str(assignment));
        let text = match sc.config.to_toml() {
            Ok(t) => t,
            Err(e) => return fail(e),
        };
        match ScenarioConfig::from_toml(&text, &[a.to_string()]) {
            Ok(c) => {
                sc.config = c;
                SubdiffStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Number of spatial nodes.
///
/// # Safety
/// `scenario` must come from this library and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn subdiff_scenario_nx(
    scenario: *const SubdiffScenario,
    out: *mut usize,
) -> SubdiffStatus {
    guard(|| {
        let sc = deref!(scenario);
        if out.is_null() {
            set_error("null output pointer");
            return SubdiffStatus::NullPointer;
        }
        *out = sc.config.domain.nx;
        SubdiffStatus::Ok
    })
}

/// Solves for the steady state and copies its nodal values into `buf`.
///
/// # Safety
/// `scenario` must come from this library; `buf` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn subdiff_scenario_steady(
    scenario: *const SubdiffScenario,
    buf: *mut f64,
    len: usize,
) -> SubdiffStatus {
    guard(|| {
        let sc = deref!(scenario);
        match build(&sc.config) {
            Ok(s) => copy_out(s.u_inf(), buf, len),
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `scenario` must come from this library (or be null) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn subdiff_scenario_free(scenario: *mut SubdiffScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Integrates the scenario and evaluates the decay verdicts.
///
/// # Safety
/// `scenario` must come from this library and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn subdiff_run(
    scenario: *const SubdiffScenario,
    out: *mut *mut SubdiffRun,
) -> SubdiffStatus {
    guard(|| {
        let sc = deref!(scenario);
        if out.is_null() {
            set_error("null output pointer");
            return SubdiffStatus::NullPointer;
        }
        let built = match build(&sc.config) {
            Ok(b) => b,
            Err(e) => return fail(e),
        };
        let history = match solve_transient(&built.problem, &TransientOptions::default()) {
            Ok(h) => h,
            Err(e) => {
                set_error(format!("step {}: {}", e.step, e.source));
                return SubdiffStatus::Solver;
            }
        };
        let u_inf = built.u_inf().to_vec();
        let report = monitor_energy(
            &history,
            &built.problem,
            &u_inf,
            &sc.config.monitor_options(),
        )
        .ok()
        .map(|tr| verify_decay_theorem(&tr, &sc.config.decay_options()));
        *out = Box::into_raw(Box::new(SubdiffRun {
            history,
            u_inf,
            report,
        }));
        SubdiffStatus::Ok
    })
}

/// Number of time nodes (steps + 1).
///
/// # Safety
/// `run` must come from this library and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn subdiff_run_len(run: *const SubdiffRun, out: *mut usize) -> SubdiffStatus {
    guard(|| {
        let r = deref!(run);
        if out.is_null() {
            set_error("null output pointer");
            return SubdiffStatus::NullPointer;
        }
        *out = r.history.len();
        SubdiffStatus::Ok
    })
}

/// Copies the time nodes.
///
/// # Safety
/// `run` must come from this library; `buf` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn subdiff_run_times(
    run: *const SubdiffRun,
    buf: *mut f64,
    len: usize,
) -> SubdiffStatus {
    guard(|| {
        let r = deref!(run);
        copy_out(r.history.times(), buf, len)
    })
}

/// Copies ‖u(t_n) − u∞‖²_{L²} for every node.
///
/// # Safety
/// `run` must come from this library; `buf` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn subdiff_run_l2_sq(
    run: *const SubdiffRun,
    buf: *mut f64,
    len: usize,
) -> SubdiffStatus {
    guard(|| {
        let r = deref!(run);
        let v: Vec<f64> = (0..r.history.len())
            .map(|n| norm_l2_sq(&r.history.grid, &r.history.usim(n, &r.u_inf)))
            .collect();
        copy_out(&v, buf, len)
    })
}

/// Copies the state u(t_n).
///
/// # Safety
/// `run` must come from this library; `buf` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn subdiff_run_state(
    run: *const SubdiffRun,
    step: usize,
    buf: *mut f64,
    len: usize,
) -> SubdiffStatus {
    guard(|| {
        let r = deref!(run);
        match r.history.states.get(step) {
            Some(u) => copy_out(u, buf, len),
            None => fail(Error::OutOfRange {
                index: step,
                len: r.history.len(),
            }),
        }
    })
}

/// Overall decay verdict and the fitted exponent (α < 1) or rate (α = 1); NaN without a fit.
///
/// # Safety
/// `run` must come from this library; `verdict` and `fitted` must be valid.
#[no_mangle]
pub unsafe extern "C" fn subdiff_run_decay(
    run: *const SubdiffRun,
    verdict: *mut SubdiffVerdict,
    fitted: *mut f64,
) -> SubdiffStatus {
    guard(|| {
        let r = deref!(run);
        if verdict.is_null() || fitted.is_null() {
            set_error("null output pointer");
            return SubdiffStatus::NullPointer;
        }
        let (v, f) = match &r.report {
            Some(rep) => (
                match rep.status() {
                    Status::Pass => SubdiffVerdict::Pass,
                    Status::Fail => SubdiffVerdict::Fail,
                    Status::Abstain => SubdiffVerdict::Abstain,
                },
                rep.fit.map(|f| f.value).unwrap_or(f64::NAN),
            ),
            None => (SubdiffVerdict::Abstain, f64::NAN),
        };
        *verdict = v;
        *fitted = f;
        SubdiffStatus::Ok
    })
}

/// # Safety
/// `run` must come from this library (or be null) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn subdiff_run_free(run: *mut SubdiffRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
