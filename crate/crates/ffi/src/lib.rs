//! C ABI for the flare simulator.
//!
//! Every fallible function returns a [`FlareStatus`] and writes its result
//! through an out-pointer. On failure the message is kept per thread and
//! can be read with [`flare_last_error`]. Simulations are opaque handles
//! created by [`flare_simulation_new`] and released by
//! [`flare_simulation_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use flare_core::channel::{
    achievable_rate, effective_power, link_geometry, los_probability, received_power, EnvConstants,
};
use flare_core::clustering::ClusterPlan;
use flare_core::env::frame::{FrameRunner, FrameSink, FrameSummary};
use flare_core::harness::config::ExperimentConfig;
use flare_core::harness::oracle::{oracle_min_blocks, OracleBlocks};
use flare_core::harness::output::AuditLog;
use flare_core::learn::{FrameReport, Method, StepObserver, StepView};
use flare_core::mobility::UeState;
use flare_core::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlareStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    /// No block count meets the threshold within the budget.
    Infeasible = 4,
    Io = 5,
    Internal = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlareMethod {
    Flare = 0,
    MaddpgOnly = 1,
    Static = 2,
    /// Mobility and clustering only.
    None = 3,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> FlareStatus {
    match e {
        Error::Config { .. } => FlareStatus::Config,
        Error::Io { .. } | Error::Json(_) | Error::Csv(_) => FlareStatus::Io,
        Error::Constraint { .. } | Error::Checkpoint(_) | Error::NoForwardCache => FlareStatus::Internal,
        _ => FlareStatus::InvalidArgument,
    }
}

/// Run `body`, translating errors and panics into status codes.
fn guard(body: impl FnOnce() -> Result<(), (FlareStatus, String)>) -> FlareStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            clear_error();
            FlareStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            FlareStatus::Internal
        }
    }
}

fn core<T>(r: flare_core::Result<T>) -> Result<T, (FlareStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (FlareStatus, String) {
    (FlareStatus::NullPointer, format!("{what} is null"))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn flare_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn flare_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// LoS probability at elevation `theta` (radians) with the default
/// dense-urban constants.
///
/// # Safety
/// `out` must be null or valid for one `double` write.
#[no_mangle]
pub unsafe extern "C" fn flare_los_probability(theta: f64, out: *mut f64) -> FlareStatus {
    guard(|| {
        let out = unsafe { out.as_mut() }.ok_or_else(|| null("out"))?;
        *out = core(los_probability(theta, &EnvConstants::default()))?;
        Ok(())
    })
}

/// Expected received power of a UE at horizontal distance `distance_m`
/// from a UAV at `altitude_m`, with unit fading and default constants.
///
/// # Safety
/// `out` must be null or valid for one `double` write.
#[no_mangle]
pub unsafe extern "C" fn flare_effective_power(
    p_tx: f64,
    distance_m: f64,
    altitude_m: f64,
    out: *mut f64,
) -> FlareStatus {
    guard(|| {
        let out = unsafe { out.as_mut() }.ok_or_else(|| null("out"))?;
        let k = EnvConstants::default();
        let g = core(link_geometry([0.0, 0.0], [distance_m, 0.0, altitude_m]))?;
        let p_los = core(los_probability(g.theta, &k))?;
        let los = core(received_power(p_tx, g.r, 1.0, k.alpha_los))?;
        let nlos = core(received_power(p_tx, g.r, 1.0, k.alpha_nlos))?;
        *out = effective_power(p_los, los, nlos);
        Ok(())
    })
}

/// Shannon rate in bit/s.
///
/// # Safety
/// `out` must be null or valid for one `double` write.
#[no_mangle]
pub unsafe extern "C" fn flare_achievable_rate(
    bandwidth: f64,
    power_eff: f64,
    interference: f64,
    noise: f64,
    out: *mut f64,
) -> FlareStatus {
    guard(|| {
        let out = unsafe { out.as_mut() }.ok_or_else(|| null("out"))?;
        if !(bandwidth >= 0.0 && power_eff >= 0.0 && interference >= 0.0 && noise > 0.0) {
            return Err((
                FlareStatus::InvalidArgument,
                "need bandwidth, powers >= 0 and noise > 0".into(),
            ));
        }
        *out = achievable_rate(bandwidth, power_eff, interference, noise);
        Ok(())
    })
}

/// Smallest block count meeting `r_th`. Returns `Infeasible` (with
/// `*out_blocks` untouched) when the link has zero rate or needs more than
/// `block_limit` blocks.
///
/// # Safety
/// `out_blocks` must be null or valid for one `uint32_t` write.
#[no_mangle]
pub unsafe extern "C" fn flare_oracle_min_blocks(
    power_eff: f64,
    interference: f64,
    noise: f64,
    block_size: f64,
    r_th: f64,
    block_limit: u32,
    out_blocks: *mut u32,
) -> FlareStatus {
    guard(|| {
        let out = unsafe { out_blocks.as_mut() }.ok_or_else(|| null("out_blocks"))?;
        match core(oracle_min_blocks(
            power_eff,
            interference,
            noise,
            block_size,
            r_th,
            block_limit,
        ))? {
            OracleBlocks::Blocks(n) => {
                *out = n;
                Ok(())
            }
            OracleBlocks::ZeroRate => Err((FlareStatus::Infeasible, "link has zero rate".into())),
            OracleBlocks::OverBudget(n) => Err((FlareStatus::Infeasible, format!("needs {n} blocks"))),
        }
    })
}

#[derive(Default)]
struct Tally {
    audit: AuditLog,
}

impl StepObserver for Tally {
    fn on_step(&mut self, view: &StepView<'_>) -> flare_core::Result<()> {
        self.audit.check(view);
        Ok(())
    }
}

impl FrameSink for Tally {
    fn on_frame(
        &mut self,
        _summary: &FrameSummary,
        _ues: &UeState,
        _plan: &ClusterPlan,
        _report: Option<&FrameReport>,
    ) -> flare_core::Result<()> {
        Ok(())
    }
}

/// Opaque simulation of one seed.
pub struct FlareSimulation {
    runner: FrameRunner,
    tally: Tally,
}

/// Create a simulation from config text (`key = value` lines; may be empty
/// or just `profile = desk`).
///
/// # Safety
/// `config_text` must be null or a valid NUL-terminated string; `out` must
/// be null or valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn flare_simulation_new(
    config_text: *const c_char,
    method: FlareMethod,
    seed: u64,
    out: *mut *mut FlareSimulation,
) -> FlareStatus {
    guard(|| {
        let out = unsafe { out.as_mut() }.ok_or_else(|| null("out"))?;
        if config_text.is_null() {
            return Err(null("config_text"));
        }
        let text = unsafe { CStr::from_ptr(config_text) }
            .to_str()
            .map_err(|_| (FlareStatus::InvalidArgument, "config text is not UTF-8".to_string()))?;
        let config = core(ExperimentConfig::parse(text))?;
        let method = match method {
            FlareMethod::Flare => Some(Method::Flare),
            FlareMethod::MaddpgOnly => Some(Method::MaddpgOnly),
            FlareMethod::Static => Some(Method::Static),
            FlareMethod::None => None,
        };
        let runner = core(FrameRunner::new(config.scenario, method, config.schedule, seed))?;
        *out = Box::into_raw(Box::new(FlareSimulation {
            runner,
            tally: Tally::default(),
        }));
        Ok(())
    })
}

/// Advance one frame. Writes the frame's served-UE count and the selected
/// cluster count.
///
/// # Safety
/// `sim` must be a live handle; out-pointers must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn flare_simulation_step(
    sim: *mut FlareSimulation,
    served: *mut u32,
    k_star: *mut u32,
) -> FlareStatus {
    guard(|| {
        let sim = unsafe { sim.as_mut() }.ok_or_else(|| null("sim"))?;
        let summary = core(sim.runner.step(&mut sim.tally))?;
        if let Some(s) = unsafe { served.as_mut() } {
            *s = summary.served_total as u32;
        }
        if let Some(k) = unsafe { k_star.as_mut() } {
            *k = summary.k_star as u32;
        }
        Ok(())
    })
}

/// Index of the next frame to run.
///
/// # Safety
/// `sim` must be a live handle; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn flare_simulation_next_frame(sim: *const FlareSimulation, out: *mut u64) -> FlareStatus {
    guard(|| {
        let sim = unsafe { sim.as_ref() }.ok_or_else(|| null("sim"))?;
        let out = unsafe { out.as_mut() }.ok_or_else(|| null("out"))?;
        *out = sim.runner.next_frame();
        Ok(())
    })
}

/// Audited timesteps and constraint violations so far.
///
/// # Safety
/// `sim` must be a live handle; out-pointers must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn flare_simulation_audit(
    sim: *const FlareSimulation,
    steps: *mut u64,
    violations: *mut u64,
) -> FlareStatus {
    guard(|| {
        let sim = unsafe { sim.as_ref() }.ok_or_else(|| null("sim"))?;
        if let Some(s) = unsafe { steps.as_mut() } {
            *s = sim.tally.audit.steps;
        }
        if let Some(v) = unsafe { violations.as_mut() } {
            *v = sim.tally.audit.violations;
        }
        Ok(())
    })
}

/// Release a handle. Null is ignored.
///
/// # Safety
/// `sim` must be null or a handle from [`flare_simulation_new`] that has
/// not been freed.
#[no_mangle]
pub unsafe extern "C" fn flare_simulation_free(sim: *mut FlareSimulation) {
    if !sim.is_null() {
        drop(unsafe { Box::from_raw(sim) });
    }
}
