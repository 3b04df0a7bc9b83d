//! C ABI for the platoon simulator and certifier.
//!
//! The API hands out opaque handles that must be released with the matching
//! `_free` call. Fallible calls return a [`PlatoonStatus`]; results are
//! written through out-pointers only on [`PlatoonStatus::Ok`]. Every entry
//! point tolerates null pointers (reporting [`PlatoonStatus::NullPointer`])
//! instead of dereferencing them. The companion header `include/platoon.h`
//! is generated from this file at build time.

use std::ffi::{c_char, CStr};
use std::path::Path;

use platoon_core::certify;
use platoon_core::config::load_scenario;
use platoon_core::dynamics::{simulate, Trajectory, VehicleSeries};
use platoon_core::harness::{baseline_scenario, write_trajectory, Scenario};
use platoon_core::Error;

/// Outcome of a fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlatoonStatus {
    /// The call succeeded and any out-pointer now holds a valid result.
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// A file's contents could not be parsed.
    Parse = 3,
    /// The scenario (or a requested change to it) failed validation.
    InvalidScenario = 4,
    /// Reading or writing a file failed.
    Io = 5,
    /// The requested signal name is not one of the recorded signals.
    UnknownSignal = 6,
    /// The provided buffer length does not match the required length.
    BufferMismatch = 7,
    /// A vehicle index was outside the platoon.
    OutOfRange = 8,
    /// The small-gain value is at or above one, so no certificate exists.
    NotStringStable = 9,
    /// No diagonal scaling on the search grid was positive definite.
    CertificationFailed = 10,
}

fn status_of(e: &Error) -> PlatoonStatus {
    match e {
        Error::Io { .. } => PlatoonStatus::Io,
        Error::Format { .. } => PlatoonStatus::Parse,
        Error::NotStringStable { .. } => PlatoonStatus::NotStringStable,
        Error::ScalingSearchFailed { .. } => PlatoonStatus::CertificationFailed,
        Error::IndexOutOfRange { .. } | Error::DimensionMismatch { .. } => {
            PlatoonStatus::OutOfRange
        }
        Error::SweepRun { source, .. } => status_of(source),
        _ => PlatoonStatus::InvalidScenario,
    }
}

/// Opaque experiment description: platoon size, gains, leader schedule,
/// disturbances, limits, integrator settings, and the seed.
pub struct PlatoonScenario(Scenario);

/// Opaque recorded closed-loop run at full integrator resolution.
pub struct PlatoonTrajectory(Trajectory);

/// Flat scalar view of a string-stability certificate.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct PlatoonCertificate {
    /// Number of follower pairs covered by the diagonal-scaling test.
    pub pairs: usize,
    /// Declared lower sandwich coefficient of the storage function.
    pub alpha_lo: f64,
    /// Declared upper sandwich coefficient of the storage function.
    pub alpha_hi: f64,
    /// Declared exponential decay rate.
    pub alpha: f64,
    /// Smallest eigenvalue of the symmetrized decay form (cross-check).
    pub alpha_symmetric: f64,
    /// Rigorous lower sandwich coefficient from the symmetrized storage form.
    pub alpha_lo_symmetric: f64,
    /// Rigorous upper sandwich coefficient from the symmetrized storage form.
    pub alpha_hi_symmetric: f64,
    /// Coupling magnitude `a*gamma_dp + b*gamma_dv`.
    pub d: f64,
    /// Margin split between self-decay and neighbor influence.
    pub upsilon: f64,
    /// Small-gain value; below one means string stable.
    pub gamma_tilde: f64,
    /// Worst-case deviation amplification `1 / (1 - gamma_tilde)`.
    pub recursive_bound_factor: f64,
    /// Geometric ratio of the certifying diagonal scaling.
    pub c_ratio: f64,
    /// Smallest eigenvalue of the symmetrized scaled comparison matrix.
    pub pd_margin: f64,
    /// Whether `gamma_tilde` lies strictly inside (0, 1) or is zero.
    pub string_stable: bool,
}

unsafe fn utf8<'a>(s: *const c_char) -> Result<&'a str, PlatoonStatus> {
    if s.is_null() {
        return Err(PlatoonStatus::NullPointer);
    }
    unsafe { CStr::from_ptr(s) }
        .to_str()
        .map_err(|_| PlatoonStatus::InvalidUtf8)
}

/// Creates the benchmark scenario: an 11-vehicle platoon with the reference
/// gains, speed schedule, disturbance pulses, and integrator settings.
///
/// Never fails. Release the handle with [`platoon_scenario_free`].
#[no_mangle]
pub extern "C" fn platoon_scenario_baseline() -> *mut PlatoonScenario {
    Box::into_raw(Box::new(PlatoonScenario(baseline_scenario())))
}

/// Loads and validates a scenario from a TOML config file.
///
/// On success writes a new handle to `out`; release it with
/// [`platoon_scenario_free`].
///
/// # Safety
/// `path` must be a valid nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn platoon_scenario_from_toml(
    path: *const c_char,
    out: *mut *mut PlatoonScenario,
) -> PlatoonStatus {
    if out.is_null() {
        return PlatoonStatus::NullPointer;
    }
    let path = match unsafe { utf8(path) } {
        Ok(p) => p,
        Err(status) => return status,
    };
    match load_scenario(Path::new(path)) {
        Ok(scenario) => {
            unsafe { *out = Box::into_raw(Box::new(PlatoonScenario(scenario))) };
            PlatoonStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Number of vehicles in the scenario's platoon.
///
/// Returns 0 if `scenario` is null.
///
/// # Safety
/// `scenario` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn platoon_scenario_vehicles(scenario: *const PlatoonScenario) -> usize {
    if scenario.is_null() {
        return 0;
    }
    unsafe { &*scenario }.0.n_vehicles
}

/// Resizes the platoon, keeping every other setting.
///
/// Rejects sizes the rest of the scenario cannot host (for example a size
/// below a disturbance's target vehicle); on rejection the scenario is left
/// unchanged.
///
/// # Safety
/// `scenario` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn platoon_scenario_set_size(
    scenario: *mut PlatoonScenario,
    n_vehicles: usize,
) -> PlatoonStatus {
    if scenario.is_null() {
        return PlatoonStatus::NullPointer;
    }
    let scenario = unsafe { &mut *scenario };
    let previous = scenario.0.n_vehicles;
    scenario.0.n_vehicles = n_vehicles;
    if let Err(e) = scenario.0.validate() {
        scenario.0.n_vehicles = previous;
        return status_of(&e);
    }
    PlatoonStatus::Ok
}

/// Replaces the seed that draws the platoon's initial conditions.
///
/// # Safety
/// `scenario` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn platoon_scenario_set_seed(
    scenario: *mut PlatoonScenario,
    seed: u64,
) -> PlatoonStatus {
    if scenario.is_null() {
        return PlatoonStatus::NullPointer;
    }
    unsafe { &mut *scenario }.0.seed = seed;
    PlatoonStatus::Ok
}

/// Releases a scenario handle. A null handle is ignored.
///
/// # Safety
/// `scenario` must be null or a live handle, and must not be used afterward.
#[no_mangle]
pub unsafe extern "C" fn platoon_scenario_free(scenario: *mut PlatoonScenario) {
    if !scenario.is_null() {
        drop(unsafe { Box::from_raw(scenario) });
    }
}

/// Runs the scenario's closed loop and writes a new trajectory handle to
/// `out`. Identical scenarios produce bit-identical trajectories.
///
/// Release the handle with [`platoon_trajectory_free`].
///
/// # Safety
/// `scenario` must be null or a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn platoon_simulate(
    scenario: *const PlatoonScenario,
    out: *mut *mut PlatoonTrajectory,
) -> PlatoonStatus {
    if scenario.is_null() || out.is_null() {
        return PlatoonStatus::NullPointer;
    }
    match simulate(&unsafe { &*scenario }.0) {
        Ok(traj) => {
            unsafe { *out = Box::into_raw(Box::new(PlatoonTrajectory(traj))) };
            PlatoonStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Number of recorded samples (integrator steps plus one).
///
/// Returns 0 if `traj` is null.
///
/// # Safety
/// `traj` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn platoon_trajectory_samples(traj: *const PlatoonTrajectory) -> usize {
    if traj.is_null() {
        return 0;
    }
    unsafe { &*traj }.0.times.len()
}

/// Number of vehicles recorded in the trajectory.
///
/// Returns 0 if `traj` is null.
///
/// # Safety
/// `traj` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn platoon_trajectory_vehicles(traj: *const PlatoonTrajectory) -> usize {
    if traj.is_null() {
        return 0;
    }
    unsafe { &*traj }.0.vehicles.len()
}

/// Copies the sample times into `buf`, whose length `len` must equal
/// [`platoon_trajectory_samples`].
///
/// # Safety
/// `traj` must be null or a live handle; `buf` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn platoon_trajectory_times(
    traj: *const PlatoonTrajectory,
    buf: *mut f64,
    len: usize,
) -> PlatoonStatus {
    if traj.is_null() || buf.is_null() {
        return PlatoonStatus::NullPointer;
    }
    let times = &unsafe { &*traj }.0.times;
    if len != times.len() {
        return PlatoonStatus::BufferMismatch;
    }
    unsafe { std::slice::from_raw_parts_mut(buf, len) }.copy_from_slice(times);
    PlatoonStatus::Ok
}

fn series<'a>(vehicle: &'a VehicleSeries, signal: &str) -> Option<&'a [f64]> {
    Some(match signal {
        "p" => &vehicle.p,
        "v" => &vehicle.v,
        "u_ctrl" => &vehicle.u_ctrl,
        "u_app" => &vehicle.u_app,
        "dp" => &vehicle.dp,
        "dv" => &vehicle.dv,
        "rho1" => &vehicle.rho1,
        "rho2" => &vehicle.rho2,
        _ => return None,
    })
}

/// Copies one vehicle's signal into `buf`, whose length `len` must equal
/// [`platoon_trajectory_samples`].
///
/// `signal` is one of `p`, `v`, `u_ctrl`, `u_app`, `dp`, `dv`, `rho1`,
/// `rho2` — the same names the CSV columns use.
///
/// # Safety
/// `traj` must be null or a live handle; `signal` must be a valid
/// nul-terminated string; `buf` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn platoon_trajectory_signal(
    traj: *const PlatoonTrajectory,
    vehicle: usize,
    signal: *const c_char,
    buf: *mut f64,
    len: usize,
) -> PlatoonStatus {
    if traj.is_null() || buf.is_null() {
        return PlatoonStatus::NullPointer;
    }
    let signal = match unsafe { utf8(signal) } {
        Ok(s) => s,
        Err(status) => return status,
    };
    let traj = &unsafe { &*traj }.0;
    let Some(vehicle) = traj.vehicles.get(vehicle) else {
        return PlatoonStatus::OutOfRange;
    };
    let Some(values) = series(vehicle, signal) else {
        return PlatoonStatus::UnknownSignal;
    };
    if len != values.len() {
        return PlatoonStatus::BufferMismatch;
    }
    unsafe { std::slice::from_raw_parts_mut(buf, len) }.copy_from_slice(values);
    PlatoonStatus::Ok
}

/// Writes the trajectory as CSV (header `t` then per-vehicle signal
/// columns, decimated to the scenario's output interval).
///
/// # Safety
/// `traj` must be null or a live handle; `path` must be a valid
/// nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn platoon_trajectory_write_csv(
    traj: *const PlatoonTrajectory,
    path: *const c_char,
) -> PlatoonStatus {
    if traj.is_null() {
        return PlatoonStatus::NullPointer;
    }
    let path = match unsafe { utf8(path) } {
        Ok(p) => p,
        Err(status) => return status,
    };
    match write_trajectory(&unsafe { &*traj }.0, Path::new(path)) {
        Ok(()) => PlatoonStatus::Ok,
        Err(e) => status_of(&e),
    }
}

/// Releases a trajectory handle. A null handle is ignored.
///
/// # Safety
/// `traj` must be null or a live handle, and must not be used afterward.
#[no_mangle]
pub unsafe extern "C" fn platoon_trajectory_free(traj: *mut PlatoonTrajectory) {
    if !traj.is_null() {
        drop(unsafe { Box::from_raw(traj) });
    }
}

/// Certifies string stability of the scenario's gains and writes the
/// scalar certificate fields to `out`.
///
/// The diagonal-scaling test covers the scenario's follower pairs (at
/// least one).
///
/// # Safety
/// `scenario` must be null or a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn platoon_certify(
    scenario: *const PlatoonScenario,
    out: *mut PlatoonCertificate,
) -> PlatoonStatus {
    if scenario.is_null() || out.is_null() {
        return PlatoonStatus::NullPointer;
    }
    let scenario = &unsafe { &*scenario }.0;
    let pairs = scenario.n_vehicles.max(2) - 1;
    match certify::certificate(&scenario.params, pairs) {
        Ok(cert) => {
            unsafe {
                *out = PlatoonCertificate {
                    pairs: cert.n,
                    alpha_lo: cert.alpha_lo,
                    alpha_hi: cert.alpha_hi,
                    alpha: cert.alpha,
                    alpha_symmetric: cert.alpha_symmetric,
                    alpha_lo_symmetric: cert.alpha_lo_symmetric,
                    alpha_hi_symmetric: cert.alpha_hi_symmetric,
                    d: cert.d,
                    upsilon: cert.upsilon,
                    gamma_tilde: cert.gamma_tilde,
                    recursive_bound_factor: cert.recursive_bound_factor,
                    c_ratio: cert.c_ratio,
                    pd_margin: cert.pd_margin,
                    string_stable: cert.string_stable,
                };
            }
            PlatoonStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}
