//! Scenario assembly, empirical string-stability metrics, and persistence.
//!
//! A [`Scenario`] bundles everything a closed-loop run needs: platoon size,
//! controller parameters, the leader's cruise-speed schedule, acceleration
//! pulses, actuator limits, integrator settings, and the seed of the
//! initial-condition draw. [`baseline_scenario`] is the benchmark
//! three-phase experiment; [`string_stability_sweep`] re-runs a scenario
//! across platoon sizes and compares peak deviations.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::certify::Certificate;
use crate::controller::ControllerParams;
use crate::dynamics::{
    simulate, DisturbancePulse, LeaderSchedule, Limits, ScheduleStep, Trajectory, VehicleSeries,
};
use crate::{Error, Result};

/// A complete closed-loop experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Number of controlled vehicles, head vehicle included. The virtual
    /// leader ahead of the head vehicle is not counted.
    pub n_vehicles: usize,
    pub params: ControllerParams,
    /// Proportional gain of the virtual leader's speed-tracking law.
    pub k_lead: f64,
    pub schedule: LeaderSchedule,
    pub pulses: Vec<DisturbancePulse>,
    pub limits: Limits,
    /// Integrator step (seconds).
    pub h: f64,
    /// Simulated duration (seconds).
    pub t_end: f64,
    /// Output sample interval for persisted trajectories (seconds); must be
    /// an integer multiple of `h`.
    pub output_every: f64,
    /// Seed of the initial-condition draw.
    pub seed: u64,
    /// Radius of the uniform spacing-error draw around the equilibrium gap
    /// (meters).
    pub ic_radius_dp: f64,
    /// Radius of the uniform closing-speed draw (meters/second).
    pub ic_radius_dv: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &'static str, reason: String| Error::InvalidScenario { field, reason };
        if self.n_vehicles == 0 {
            return Err(Error::EmptyPlatoon);
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(bad("t_end", format!("must be > 0, got {}", self.t_end)));
        }
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(bad("h", format!("must be > 0, got {}", self.h)));
        }
        if !(self.output_every.is_finite() && self.output_every > 0.0) {
            return Err(bad(
                "output_every",
                format!("must be > 0, got {}", self.output_every),
            ));
        }
        let ratio = self.output_every / self.h;
        if ratio < 1.0 - 1e-9 || (ratio - ratio.round()).abs() > 1e-6 {
            return Err(bad(
                "output_every",
                format!(
                    "must be an integer multiple of h = {}, got {}",
                    self.h, self.output_every
                ),
            ));
        }
        if !(self.k_lead.is_finite() && self.k_lead >= 0.0) {
            return Err(bad("k_lead", format!("must be >= 0, got {}", self.k_lead)));
        }
        for (name, r) in [
            ("ic_radius_dp", self.ic_radius_dp),
            ("ic_radius_dv", self.ic_radius_dv),
        ] {
            if !(r.is_finite() && r >= 0.0) {
                return Err(bad(name, format!("must be >= 0, got {r}")));
            }
        }
        self.params.validate()?;
        self.limits.validate()?;
        self.schedule.validate(&self.limits)?;
        for (k, pulse) in self.pulses.iter().enumerate() {
            if pulse.target >= self.n_vehicles {
                return Err(bad(
                    "pulses",
                    format!(
                        "pulse {k} targets vehicle {} but the platoon has {} vehicles",
                        pulse.target, self.n_vehicles
                    ),
                ));
            }
            if let Some(s) = pulse.suppress_macro_for {
                if s >= self.n_vehicles {
                    return Err(bad(
                        "pulses",
                        format!(
                            "pulse {k} suppresses the feed of vehicle {s} but the platoon has {} vehicles",
                            self.n_vehicles
                        ),
                    ));
                }
            }
            for (name, value) in [
                ("t_on", pulse.t_on),
                ("duration", pulse.duration),
                ("amplitude", pulse.amplitude),
            ] {
                if !value.is_finite() {
                    return Err(bad("pulses", format!("pulse {k}: {name} must be finite")));
                }
            }
            if pulse.duration < 0.0 {
                return Err(bad(
                    "pulses",
                    format!("pulse {k}: duration must be >= 0, got {}", pulse.duration),
                ));
            }
        }
        Ok(())
    }
}

/// The benchmark three-phase experiment: an 11-vehicle platoon cruising at
/// 14 m/s converges from randomized initial errors for ten seconds, the
/// head vehicle is hit by a +4 m/s² pulse at t = 10 s and a −4 m/s² pulse
/// at t = 15 s (each 5 s long, with vehicle 1 cut off from the platoon
/// statistics while a pulse is active), and the cruise speed then steps to
/// 30 m/s at t = 30 s and 20 m/s at t = 45 s.
pub fn baseline_scenario() -> Scenario {
    Scenario {
        n_vehicles: 11,
        params: ControllerParams::baseline(),
        k_lead: 2.0,
        schedule: LeaderSchedule {
            initial: 14.0,
            steps: vec![
                ScheduleStep {
                    t: 30.0,
                    v_bar: 30.0,
                },
                ScheduleStep {
                    t: 45.0,
                    v_bar: 20.0,
                },
            ],
        },
        pulses: vec![
            DisturbancePulse {
                target: 0,
                t_on: 10.0,
                duration: 5.0,
                amplitude: 4.0,
                suppress_macro_for: Some(1),
            },
            DisturbancePulse {
                target: 0,
                t_on: 15.0,
                duration: 5.0,
                amplitude: -4.0,
                suppress_macro_for: Some(1),
            },
        ],
        limits: Limits::default(),
        h: 0.01,
        t_end: 60.0,
        output_every: 0.1,
        seed: 42,
        ic_radius_dp: 2.0,
        ic_radius_dv: 1.0,
    }
}

/// A time window with the deviation tolerance that counts as "settled"
/// inside it.
#[derive(Debug, Clone, Copy)]
pub struct PhaseWindow {
    pub t_start: f64,
    pub t_end: f64,
    pub tolerance: f64,
}

/// Settling summary for one phase window.
#[derive(Debug, Clone, Copy)]
pub struct PhaseSettling {
    pub window: PhaseWindow,
    /// Last sample time inside the window at which the platoon deviation
    /// envelope exceeds the window tolerance, or the window start if it
    /// never does.
    pub settled_at: f64,
}

/// The three windows of the benchmark experiment with the deviation
/// tolerances used in reports: free convergence, pulse rejection, and
/// cruise-speed tracking.
pub fn three_phase_windows() -> Vec<PhaseWindow> {
    vec![
        PhaseWindow {
            t_start: 0.0,
            t_end: 10.0,
            tolerance: 0.1,
        },
        PhaseWindow {
            t_start: 10.0,
            t_end: 30.0,
            tolerance: 0.2,
        },
        PhaseWindow {
            t_start: 30.0,
            t_end: 60.0,
            tolerance: 0.15,
        },
    ]
}

/// Empirical deviation statistics of one run. All quantities are derived
/// from the full-resolution trajectory; they do not depend on the output
/// decimation.
#[derive(Debug, Clone)]
pub struct Metrics {
    /// Per vehicle: `max_t |deviation_i(t)|`.
    pub per_vehicle_peak: Vec<f64>,
    /// `max_i` of [`Metrics::per_vehicle_peak`].
    pub platoon_peak: f64,
    /// `peak(i) / peak(i - 1)` for `i = 1..n`; an entry is 1 when both
    /// peaks vanish and infinite when only the upstream peak does.
    pub amplification_profile: Vec<f64>,
    /// Deviation envelope at the final sample.
    pub residual: f64,
    pub settling: Vec<PhaseSettling>,
}

fn deviation_norm_at(vehicle: &VehicleSeries, k: usize, dp_bar: f64) -> f64 {
    let e0 = vehicle.dp[k] + dp_bar;
    let e1 = vehicle.dv[k];
    let e2 = vehicle.rho1[k];
    let e3 = vehicle.rho2[k];
    (e0 * e0 + e1 * e1 + e2 * e2 + e3 * e3).sqrt()
}

/// Deviation envelope `max_i |deviation_i(t_k)|` at every sample.
pub fn deviation_envelope(traj: &Trajectory, dp_bar: f64) -> Vec<f64> {
    (0..traj.times.len())
        .map(|k| {
            traj.vehicles
                .iter()
                .map(|vehicle| deviation_norm_at(vehicle, k, dp_bar))
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Computes the deviation statistics of a run. `dp_bar` is the equilibrium
/// gap the deviations are measured against; `phases` selects the settling
/// windows (pass `&[]` to skip settling analysis).
pub fn compute_metrics(traj: &Trajectory, dp_bar: f64, phases: &[PhaseWindow]) -> Metrics {
    let per_vehicle_peak: Vec<f64> = traj
        .vehicles
        .iter()
        .map(|vehicle| {
            (0..traj.times.len())
                .map(|k| deviation_norm_at(vehicle, k, dp_bar))
                .fold(0.0, f64::max)
        })
        .collect();
    let platoon_peak = per_vehicle_peak.iter().copied().fold(0.0, f64::max);
    let amplification_profile = per_vehicle_peak
        .windows(2)
        .map(|pair| {
            if pair[0] > 0.0 {
                pair[1] / pair[0]
            } else if pair[1] == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let envelope = deviation_envelope(traj, dp_bar);
    let residual = envelope.last().copied().unwrap_or(0.0);
    let settling = phases
        .iter()
        .map(|&window| {
            let settled_at = traj
                .times
                .iter()
                .zip(&envelope)
                .filter(|&(&t, &env)| {
                    t >= window.t_start && t <= window.t_end && env > window.tolerance
                })
                .map(|(&t, _)| t)
                .fold(window.t_start, f64::max);
            PhaseSettling { window, settled_at }
        })
        .collect();
    Metrics {
        per_vehicle_peak,
        platoon_peak,
        amplification_profile,
        residual,
        settling,
    }
}

/// True iff the deviation envelope stays below `eps` for every sample with
/// `t >= t_from` and its one-second running maxima are non-increasing.
pub fn asymptotic_check(traj: &Trajectory, t_from: f64, eps: f64, dp_bar: f64) -> bool {
    let envelope = deviation_envelope(traj, dp_bar);
    let window: Vec<(f64, f64)> = traj
        .times
        .iter()
        .zip(&envelope)
        .filter(|&(&t, _)| t >= t_from)
        .map(|(&t, &env)| (t, env))
        .collect();
    if window.is_empty() {
        return true;
    }
    if window.iter().any(|&(_, env)| env >= eps) {
        return false;
    }
    let n_bins = ((window.last().unwrap().0 - t_from).floor() as usize) + 1;
    let mut bins = vec![0.0f64; n_bins];
    for &(t, env) in &window {
        let bin = ((t - t_from).floor() as usize).min(n_bins - 1);
        bins[bin] = bins[bin].max(env);
    }
    bins.windows(2).all(|pair| pair[1] <= pair[0] + 1e-9)
}

/// One size of a platoon-size sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepEntry {
    pub n_vehicles: usize,
    pub seed: u64,
    pub platoon_peak: f64,
    /// Largest entry of the amplification profile (0 for a single-vehicle
    /// platoon, whose profile is empty).
    pub max_amplification: f64,
    pub residual: f64,
}

/// Outcome of [`string_stability_sweep`].
#[derive(Debug, Clone)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    /// Relative spread of the platoon peak across sizes:
    /// `(max - min) / min`.
    pub peak_variation: f64,
    /// True iff [`SweepReport::peak_variation`] is below the configured
    /// tolerance.
    pub within_tolerance: bool,
}

/// Re-runs `base` at every platoon size in `sizes` and compares peak
/// deviations. Each run redraws its initial conditions from the stream
/// `base.seed ^ size` so that sweeps are reproducible yet the draws differ
/// across sizes. Runs execute concurrently; a failing run reports the size
/// it belongs to.
pub fn string_stability_sweep(
    base: &Scenario,
    sizes: &[usize],
    tolerance: f64,
) -> Result<SweepReport> {
    if sizes.is_empty() {
        return Err(Error::InvalidScenario {
            field: "sizes",
            reason: "sweep needs at least one platoon size".to_string(),
        });
    }
    let entries = sizes
        .par_iter()
        .map(|&size| {
            let mut scenario = base.clone();
            scenario.n_vehicles = size;
            scenario.seed = base.seed ^ size as u64;
            simulate(&scenario)
                .map(|traj| {
                    let metrics = compute_metrics(&traj, scenario.params.dp_bar, &[]);
                    SweepEntry {
                        n_vehicles: size,
                        seed: scenario.seed,
                        platoon_peak: metrics.platoon_peak,
                        max_amplification: metrics
                            .amplification_profile
                            .iter()
                            .copied()
                            .fold(0.0, f64::max),
                        residual: metrics.residual,
                    }
                })
                .map_err(|source| Error::SweepRun {
                    size,
                    source: Box::new(source),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let max = entries
        .iter()
        .map(|e| e.platoon_peak)
        .fold(f64::NEG_INFINITY, f64::max);
    let min = entries
        .iter()
        .map(|e| e.platoon_peak)
        .fold(f64::INFINITY, f64::min);
    let peak_variation = if min > 0.0 {
        (max - min) / min
    } else if max <= 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(SweepReport {
        entries,
        peak_variation,
        within_tolerance: peak_variation < tolerance,
    })
}

/// The per-vehicle signals persisted for each vehicle, in column order.
pub const TRAJECTORY_SIGNALS: [&str; 8] = ["p", "v", "u_ctrl", "u_app", "dp", "dv", "rho1", "rho2"];

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let message = e.to_string();
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        _ => Error::format(path, message),
    }
}

/// Writes the trajectory as CSV: header `t` then per vehicle `i` the
/// columns `p_i, v_i, u_ctrl_i, u_app_i, dp_i, dv_i, rho1_i, rho2_i`; one
/// row per output sample (the full-resolution samples decimated to the
/// scenario's `output_every`). Values are written in shortest
/// round-trippable decimal form, so re-reading reproduces the doubles
/// exactly and identical runs produce byte-identical files.
pub fn write_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = vec!["t".to_string()];
    for i in 0..traj.n_vehicles() {
        for signal in TRAJECTORY_SIGNALS {
            header.push(format!("{signal}_{i}"));
        }
    }
    writer
        .write_record(&header)
        .map_err(|e| csv_error(path, e))?;
    let stride = traj.output_stride();
    let mut record = Vec::with_capacity(header.len());
    for k in (0..traj.times.len()).step_by(stride) {
        record.clear();
        record.push(traj.times[k].to_string());
        for vehicle in &traj.vehicles {
            record.push(vehicle.p[k].to_string());
            record.push(vehicle.v[k].to_string());
            record.push(vehicle.u_ctrl[k].to_string());
            record.push(vehicle.u_app[k].to_string());
            record.push(vehicle.dp[k].to_string());
            record.push(vehicle.dv[k].to_string());
            record.push(vehicle.rho1[k].to_string());
            record.push(vehicle.rho2[k].to_string());
        }
        writer
            .write_record(&record)
            .map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// A trajectory read back from CSV: sample times plus one labelled column
/// per persisted signal, in file order.
#[derive(Debug, Clone)]
pub struct TrajectoryTable {
    pub times: Vec<f64>,
    pub columns: Vec<(String, Vec<f64>)>,
}

/// Reads a CSV written by [`write_trajectory`].
pub fn read_trajectory(path: &Path) -> Result<TrajectoryTable> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.get(0) != Some("t") {
        return Err(Error::format(
            path,
            format!(
                "expected first column `t`, found `{}`",
                headers.get(0).unwrap_or("")
            ),
        ));
    }
    let mut times = Vec::new();
    let mut columns: Vec<(String, Vec<f64>)> = headers
        .iter()
        .skip(1)
        .map(|name| (name.to_string(), Vec::new()))
        .collect();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.len() != headers.len() {
            return Err(Error::format(
                path,
                format!(
                    "row {}: expected {} fields, found {}",
                    row + 2,
                    headers.len(),
                    record.len()
                ),
            ));
        }
        let parse = |field: &str| -> Result<f64> {
            field.parse::<f64>().map_err(|_| {
                Error::format(path, format!("row {}: `{field}` is not a number", row + 2))
            })
        };
        times.push(parse(&record[0])?);
        for (j, column) in columns.iter_mut().enumerate() {
            column.1.push(parse(&record[j + 1])?);
        }
    }
    Ok(TrajectoryTable { times, columns })
}

/// Writes the certificate as key-value text lines at `path` and a JSON
/// twin with the same stem and the extension `json`.
pub fn write_certificate(cert: &Certificate, path: &Path) -> Result<()> {
    let join = |values: &[f64]| {
        values
            .iter()
            .map(f64::to_string)
            .collect::<Vec<_>>()
            .join(",")
    };
    let mut text = String::new();
    let _ = writeln!(text, "n={}", cert.n);
    let _ = writeln!(text, "alpha_lo={}", cert.alpha_lo);
    let _ = writeln!(text, "alpha_hi={}", cert.alpha_hi);
    let _ = writeln!(text, "alpha_lo_symmetric={}", cert.alpha_lo_symmetric);
    let _ = writeln!(text, "alpha_hi_symmetric={}", cert.alpha_hi_symmetric);
    let _ = writeln!(text, "alpha={}", cert.alpha);
    let _ = writeln!(text, "alpha_symmetric={}", cert.alpha_symmetric);
    let _ = writeln!(text, "d={}", cert.d);
    let _ = writeln!(text, "upsilon={}", cert.upsilon);
    let _ = writeln!(text, "gamma_tilde={}", cert.gamma_tilde);
    let _ = writeln!(text, "string_stable={}", cert.string_stable);
    let _ = writeln!(
        text,
        "recursive_bound_factor={}",
        cert.recursive_bound_factor
    );
    let _ = writeln!(text, "k_tilde={}", join(&cert.k_tilde));
    let _ = writeln!(text, "d_diag={}", join(&cert.d_diag));
    let _ = writeln!(text, "c_ratio={}", cert.c_ratio);
    let _ = writeln!(text, "pd_margin={}", cert.pd_margin);
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    let json_path = path.with_extension("json");
    let json =
        serde_json::to_string_pretty(cert).map_err(|e| Error::format(&json_path, e.to_string()))?;
    fs::write(&json_path, json + "\n").map_err(|e| Error::io(&json_path, e))?;
    Ok(())
}
