//! Closed-loop continuous-time model and its fixed-step integration.
//!
//! Ground truth is the absolute state of every vehicle (the virtual
//! leader's dummy position is integrated alongside), packed into a flat
//! vector for the integrator:
//!
//! ```text
//! [p_lead, v_lead, p_0..p_{n-1}, v_0..v_{n-1}, rho1_0.., rho2_0..]
//! ```
//!
//! Relative coordinates are derived from it each evaluation, so the
//! disturbance and the actuator clamp act where they physically do — on
//! absolute accelerations.

use serde::{Deserialize, Serialize};

use crate::controller::{control_input, saturate, ControllerParams, LeaderFeed};
use crate::harness::Scenario;
use crate::macroscopic::{prefix_signals, rho_derivative};
use crate::state::{ExtendedState, PlatoonState, VehicleState};
use crate::{Error, Result};

/// Piecewise-constant desired-speed profile for the virtual leader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderSchedule {
    pub initial: f64,
    pub steps: Vec<ScheduleStep>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleStep {
    pub t: f64,
    pub v_bar: f64,
}

impl LeaderSchedule {
    pub fn constant(v: f64) -> Self {
        LeaderSchedule {
            initial: v,
            steps: Vec::new(),
        }
    }

    /// Desired speed at time `t`: the last step at or before `t`, or the
    /// initial speed if none has fired yet.
    pub fn v_bar(&self, t: f64) -> f64 {
        let mut v = self.initial;
        for s in &self.steps {
            if s.t <= t {
                v = s.v_bar;
            } else {
                break;
            }
        }
        v
    }

    pub fn validate(&self, limits: &Limits) -> Result<()> {
        let ok = |v: f64| v > limits.v_min && v <= limits.v_max;
        if !ok(self.initial) {
            return Err(Error::InvalidScenario {
                field: "schedule.initial",
                reason: format!(
                    "speed {} outside ({}, {}]",
                    self.initial, limits.v_min, limits.v_max
                ),
            });
        }
        for (i, s) in self.steps.iter().enumerate() {
            if !ok(s.v_bar) {
                return Err(Error::InvalidScenario {
                    field: "schedule.steps",
                    reason: format!(
                        "step {i}: speed {} outside ({}, {}]",
                        s.v_bar, limits.v_min, limits.v_max
                    ),
                });
            }
            if i > 0 && self.steps[i - 1].t >= s.t {
                return Err(Error::InvalidScenario {
                    field: "schedule.steps",
                    reason: format!("step {i}: start times must be strictly increasing"),
                });
            }
        }
        Ok(())
    }
}

/// A rectangular acceleration pulse injected on one vehicle. While active
/// it may additionally cut one vehicle off from the macroscopic feed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbancePulse {
    pub target: usize,
    pub t_on: f64,
    pub duration: f64,
    pub amplitude: f64,
    pub suppress_macro_for: Option<usize>,
}

impl DisturbancePulse {
    /// Active on the half-open window `[t_on, t_on + duration)`.
    pub fn active(&self, t: f64) -> bool {
        t >= self.t_on && t < self.t_on + self.duration
    }
}

/// Physical operating box: speeds in `(v_min, v_max]`, accelerations in
/// `[-a_max, a_max]`. The lower speed bound is open; the clamp parks the
/// speed at the boundary value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub v_max: f64,
    pub a_max: f64,
    pub v_min: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            v_max: 36.0,
            a_max: 4.0,
            v_min: 0.0,
        }
    }
}

impl Limits {
    pub fn validate(&self) -> Result<()> {
        if self.v_max <= self.v_min {
            return Err(Error::InvalidScenario {
                field: "limits.v_max",
                reason: format!("v_max {} must exceed v_min {}", self.v_max, self.v_min),
            });
        }
        if self.a_max <= 0.0 {
            return Err(Error::InvalidScenario {
                field: "limits.a_max",
                reason: "a_max must be > 0".to_string(),
            });
        }
        Ok(())
    }
}

/// Everything the closed loop needs besides the state itself.
#[derive(Debug, Clone, Copy)]
pub struct ClosedLoop<'a> {
    pub params: &'a ControllerParams,
    pub schedule: &'a LeaderSchedule,
    pub pulses: &'a [DisturbancePulse],
    pub limits: &'a Limits,
    /// Proportional gain of the leader's speed-tracking law.
    pub k_lead: f64,
}

/// All per-step signals of one closed-loop evaluation.
#[derive(Debug, Clone)]
pub struct StepEval {
    pub v_bar: f64,
    /// Leader's commanded acceleration (already clamped by the actuator).
    pub u_lead: f64,
    /// Leader's acceleration after the velocity box guard.
    pub a_lead: f64,
    /// Prefix coupling pair over vehicles `0..=i`, indexed by `i`.
    pub psi_dp: Vec<f64>,
    pub psi_dv: Vec<f64>,
    /// Coupling pair vehicle `i` actually received (zero for the head
    /// vehicle and for a vehicle whose macroscopic feed is suppressed).
    pub feed_psi_dp: Vec<f64>,
    pub feed_psi_dv: Vec<f64>,
    /// Raw law output per vehicle — the value communicated downstream.
    pub u_ctrl: Vec<f64>,
    /// Applied acceleration: law output plus pulse, clamped.
    pub u_app: Vec<f64>,
    /// Applied acceleration after the velocity box guard.
    pub accel: Vec<f64>,
}

impl<'a> ClosedLoop<'a> {
    fn n(y: &[f64]) -> usize {
        (y.len() - 2) / 4
    }

    /// Evaluate every signal of the loop at state `y` and time `t`.
    pub fn eval(&self, y: &[f64], t: f64) -> StepEval {
        let n = Self::n(y);
        let w = &self.params.weights;
        let lim = self.limits;
        let lv = y[1];
        let (ps, vs, r1s, r2s) = (
            &y[2..2 + n],
            &y[2 + n..2 + 2 * n],
            &y[2 + 2 * n..2 + 3 * n],
            &y[2 + 3 * n..2 + 4 * n],
        );

        let v_bar = self.schedule.v_bar(t);
        let (u_lead, _) = saturate(self.k_lead * (v_bar - lv), lim.a_max);
        let a_lead = box_guard(lv, u_lead, lim);

        let mut dp = vec![0.0; n];
        let mut dv = vec![0.0; n];
        for i in 0..n {
            let (pp, pv) = if i == 0 {
                (y[0], lv)
            } else {
                (ps[i - 1], vs[i - 1])
            };
            dp[i] = ps[i] - pp;
            dv[i] = vs[i] - pv;
        }

        let mut psi_dp = vec![0.0; n];
        let mut psi_dv = vec![0.0; n];
        for i in 0..n {
            let s = prefix_signals(&dp, &dv, self.params.dp_bar, w, i)
                .expect("prefix index in range by construction");
            psi_dp[i] = s.psi_dp;
            psi_dv[i] = s.psi_dv;
        }

        let mut feed_psi_dp = vec![0.0; n];
        let mut feed_psi_dv = vec![0.0; n];
        let mut u_ctrl = vec![0.0; n];
        let mut u_app = vec![0.0; n];
        let mut accel = vec![0.0; n];
        for i in 0..n {
            let suppressed = self
                .pulses
                .iter()
                .any(|pl| pl.active(t) && pl.suppress_macro_for == Some(i));
            let mut feed = if i == 0 {
                LeaderFeed::head(u_lead)
            } else {
                LeaderFeed::new(u_ctrl[i - 1], psi_dp[i - 1], psi_dv[i - 1])
            };
            feed.available = !suppressed;
            let (fp, fv) = feed.effective_psi();
            feed_psi_dp[i] = fp;
            feed_psi_dv[i] = fv;

            let x = ExtendedState {
                dp: dp[i],
                dv: dv[i],
                rho1: r1s[i],
                rho2: r2s[i],
            };
            u_ctrl[i] = control_input(&x, &feed, self.params);
            let pulse: f64 = self
                .pulses
                .iter()
                .filter(|pl| pl.target == i && pl.active(t))
                .map(|pl| pl.amplitude)
                .sum();
            u_app[i] = saturate(u_ctrl[i] + pulse, lim.a_max).0;
            accel[i] = box_guard(vs[i], u_app[i], lim);
        }

        StepEval {
            v_bar,
            u_lead,
            a_lead,
            psi_dp,
            psi_dv,
            feed_psi_dp,
            feed_psi_dv,
            u_ctrl,
            u_app,
            accel,
        }
    }

    /// Time derivative of the flat state vector.
    pub fn derivative(&self, y: &[f64], t: f64) -> Vec<f64> {
        let n = Self::n(y);
        let e = self.eval(y, t);
        let mut dy = vec![0.0; y.len()];
        dy[0] = y[1];
        dy[1] = e.a_lead;
        for i in 0..n {
            dy[2 + i] = y[2 + n + i];
            dy[2 + n + i] = e.accel[i];
            let (d1, d2) = rho_derivative(
                y[2 + 2 * n + i],
                y[2 + 3 * n + i],
                e.feed_psi_dp[i],
                e.feed_psi_dv[i],
                &self.params.weights,
            );
            dy[2 + 2 * n + i] = d1;
            dy[2 + 3 * n + i] = d2;
        }
        dy
    }
}

/// Zero an acceleration that would push the speed out of the box.
fn box_guard(v: f64, a: f64, lim: &Limits) -> f64 {
    if (v >= lim.v_max && a > 0.0) || (v <= lim.v_min && a < 0.0) {
        0.0
    } else {
        a
    }
}

/// Pack a platoon state into the flat absolute vector.
pub fn pack(state: &PlatoonState) -> Vec<f64> {
    let n = state.followers.len();
    let mut y = vec![0.0; 2 + 4 * n];
    y[0] = state.leader.p;
    y[1] = state.leader.v;
    let mut p = state.leader.p;
    let mut v = state.leader.v;
    for (i, f) in state.followers.iter().enumerate() {
        p += f.dp;
        v += f.dv;
        y[2 + i] = p;
        y[2 + n + i] = v;
        y[2 + 2 * n + i] = f.rho1;
        y[2 + 3 * n + i] = f.rho2;
    }
    y
}

/// Inverse of [`pack`].
pub fn unpack(y: &[f64]) -> PlatoonState {
    let n = (y.len() - 2) / 4;
    let leader = VehicleState { p: y[0], v: y[1] };
    let mut followers = Vec::with_capacity(n);
    let mut prev_p = y[0];
    let mut prev_v = y[1];
    for i in 0..n {
        followers.push(ExtendedState {
            dp: y[2 + i] - prev_p,
            dv: y[2 + n + i] - prev_v,
            rho1: y[2 + 2 * n + i],
            rho2: y[2 + 3 * n + i],
        });
        prev_p = y[2 + i];
        prev_v = y[2 + n + i];
    }
    PlatoonState { leader, followers }
}

/// Derivative of the platoon state in its own layout: each field of the
/// returned value holds the time derivative of the corresponding field of
/// `state` (leader position/speed, then per vehicle the relative state).
pub fn closed_loop_derivative(
    state: &PlatoonState,
    t: f64,
    loop_: &ClosedLoop,
) -> Result<PlatoonState> {
    let n = state.followers.len();
    if n == 0 {
        return Err(Error::EmptyPlatoon);
    }
    for pl in loop_.pulses {
        if pl.target >= n {
            return Err(Error::InvalidScenario {
                field: "pulses",
                reason: format!(
                    "pulse targets vehicle {} but the platoon has {n}",
                    pl.target
                ),
            });
        }
    }
    let y = pack(state);
    let e = loop_.eval(&y, t);
    let mut followers = Vec::with_capacity(n);
    for i in 0..n {
        let a_prev = if i == 0 { e.a_lead } else { e.accel[i - 1] };
        let (d1, d2) = rho_derivative(
            state.followers[i].rho1,
            state.followers[i].rho2,
            e.feed_psi_dp[i],
            e.feed_psi_dv[i],
            &loop_.params.weights,
        );
        followers.push(ExtendedState {
            dp: state.followers[i].dv,
            dv: e.accel[i] - a_prev,
            rho1: d1,
            rho2: d2,
        });
    }
    Ok(PlatoonState {
        leader: VehicleState {
            p: state.leader.v,
            v: e.a_lead,
        },
        followers,
    })
}

/// One classical fourth-order Runge-Kutta step of `y' = f(y, t)`.
pub fn rk4_step<F>(y: &[f64], t: f64, h: f64, f: F) -> Vec<f64>
where
    F: Fn(&[f64], f64) -> Vec<f64>,
{
    let half = 0.5 * h;
    let k1 = f(y, t);
    let y2: Vec<f64> = y.iter().zip(&k1).map(|(a, k)| a + half * k).collect();
    let k2 = f(&y2, t + half);
    let y3: Vec<f64> = y.iter().zip(&k2).map(|(a, k)| a + half * k).collect();
    let k3 = f(&y3, t + half);
    let y4: Vec<f64> = y.iter().zip(&k3).map(|(a, k)| a + h * k).collect();
    let k4 = f(&y4, t + h);
    y.iter()
        .enumerate()
        .map(|(i, a)| a + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Recorded signals of one vehicle over the whole run.
#[derive(Debug, Clone, Default)]
pub struct VehicleSeries {
    pub p: Vec<f64>,
    pub v: Vec<f64>,
    pub u_ctrl: Vec<f64>,
    pub u_app: Vec<f64>,
    pub dp: Vec<f64>,
    pub dv: Vec<f64>,
    pub rho1: Vec<f64>,
    pub rho2: Vec<f64>,
    /// Coupling pair the vehicle received that step.
    pub psi_dp_feed: Vec<f64>,
    pub psi_dv_feed: Vec<f64>,
}

/// Recorded signals of the virtual leader.
#[derive(Debug, Clone, Default)]
pub struct LeaderSeries {
    pub p: Vec<f64>,
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    pub v_bar: Vec<f64>,
}

/// Full-resolution simulation output (every integrator step). File output
/// decimates to the scenario's sample interval.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub h: f64,
    pub output_every: f64,
    pub times: Vec<f64>,
    pub leader: LeaderSeries,
    pub vehicles: Vec<VehicleSeries>,
}

impl Trajectory {
    pub fn n_vehicles(&self) -> usize {
        self.vehicles.len()
    }

    /// Index stride between file-output samples.
    pub fn output_stride(&self) -> usize {
        ((self.output_every / self.h).round() as usize).max(1)
    }

    /// Platoon state at step index `k`.
    pub fn state_at(&self, k: usize) -> PlatoonState {
        PlatoonState {
            leader: VehicleState {
                p: self.leader.p[k],
                v: self.leader.v[k],
            },
            followers: self
                .vehicles
                .iter()
                .map(|veh| ExtendedState {
                    dp: veh.dp[k],
                    dv: veh.dv[k],
                    rho1: veh.rho1[k],
                    rho2: veh.rho2[k],
                })
                .collect(),
        }
    }
}

/// Draw the initial platoon state for a scenario: spacing uniform within
/// `ic_radius_dp` of the equilibrium gap, speed difference uniform within
/// `ic_radius_dv` of zero, filter states at rest. The draws are unit
/// uniforms scaled by the radii, so shrinking the radii shrinks every
/// deviation proportionally for a fixed seed.
pub fn initial_state(scenario: &Scenario) -> PlatoonState {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(scenario.seed);
    let mut followers = Vec::with_capacity(scenario.n_vehicles);
    for _ in 0..scenario.n_vehicles {
        let unit_dp: f64 = rng.random_range(-1.0..=1.0);
        let unit_dv: f64 = rng.random_range(-1.0..=1.0);
        followers.push(ExtendedState {
            dp: -scenario.params.dp_bar + scenario.ic_radius_dp * unit_dp,
            dv: scenario.ic_radius_dv * unit_dv,
            rho1: 0.0,
            rho2: 0.0,
        });
    }
    PlatoonState {
        leader: VehicleState {
            p: 0.0,
            v: scenario.schedule.v_bar(0.0),
        },
        followers,
    }
}

/// Run a scenario from its seeded initial state.
pub fn simulate(scenario: &Scenario) -> Result<Trajectory> {
    simulate_from(scenario, initial_state(scenario))
}

/// Run a scenario from an explicit initial state.
///
/// The initial state is recorded exactly as given; speed limits are
/// enforced along the flow (outward accelerations are zeroed at the
/// bounds and speeds are clamped into the box after every step).
pub fn simulate_from(scenario: &Scenario, initial: PlatoonState) -> Result<Trajectory> {
    scenario.validate()?;
    let n = scenario.n_vehicles;
    if initial.followers.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: initial.followers.len(),
        });
    }
    let loop_ = ClosedLoop {
        params: &scenario.params,
        schedule: &scenario.schedule,
        pulses: &scenario.pulses,
        limits: &scenario.limits,
        k_lead: scenario.k_lead,
    };
    let steps = (scenario.t_end / scenario.h).round() as usize;
    let mut traj = Trajectory {
        h: scenario.h,
        output_every: scenario.output_every,
        times: Vec::with_capacity(steps + 1),
        leader: LeaderSeries::default(),
        vehicles: vec![VehicleSeries::default(); n],
    };

    let mut y = pack(&initial);
    for k in 0..=steps {
        let t = k as f64 * scenario.h;
        let e = loop_.eval(&y, t);
        record(&mut traj, t, &y, &e);
        if k == steps {
            break;
        }
        y = rk4_step(&y, t, scenario.h, |yy, tt| loop_.derivative(yy, tt));
        clamp_speeds(&mut y, &scenario.limits);
    }
    Ok(traj)
}

fn clamp_speeds(y: &mut [f64], lim: &Limits) {
    let n = (y.len() - 2) / 4;
    y[1] = y[1].clamp(lim.v_min, lim.v_max);
    for i in 0..n {
        y[2 + n + i] = y[2 + n + i].clamp(lim.v_min, lim.v_max);
    }
}

fn record(traj: &mut Trajectory, t: f64, y: &[f64], e: &StepEval) {
    let n = traj.vehicles.len();
    traj.times.push(t);
    traj.leader.p.push(y[0]);
    traj.leader.v.push(y[1]);
    traj.leader.u.push(e.u_lead);
    traj.leader.v_bar.push(e.v_bar);
    let mut prev_p = y[0];
    let mut prev_v = y[1];
    for i in 0..n {
        let veh = &mut traj.vehicles[i];
        let (p, v) = (y[2 + i], y[2 + n + i]);
        veh.p.push(p);
        veh.v.push(v);
        veh.u_ctrl.push(e.u_ctrl[i]);
        veh.u_app.push(e.u_app[i]);
        veh.dp.push(p - prev_p);
        veh.dv.push(v - prev_v);
        veh.rho1.push(y[2 + 2 * n + i]);
        veh.rho2.push(y[2 + 3 * n + i]);
        veh.psi_dp_feed.push(e.feed_psi_dp[i]);
        veh.psi_dv_feed.push(e.feed_psi_dv[i]);
        prev_p = p;
        prev_v = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::baseline_scenario;
    use approx::assert_relative_eq;

    fn eq_state(n: usize, dp_bar: f64, v: f64) -> PlatoonState {
        PlatoonState {
            leader: VehicleState { p: 0.0, v },
            followers: vec![
                ExtendedState {
                    dp: -dp_bar,
                    dv: 0.0,
                    rho1: 0.0,
                    rho2: 0.0,
                };
                n
            ],
        }
    }

    #[test]
    fn equilibrium_has_zero_relative_derivative() {
        let params = ControllerParams::baseline();
        let schedule = LeaderSchedule::constant(14.0);
        let limits = Limits::default();
        let loop_ = ClosedLoop {
            params: &params,
            schedule: &schedule,
            pulses: &[],
            limits: &limits,
            k_lead: 2.0,
        };
        let state = eq_state(5, 10.0, 14.0);
        let d = closed_loop_derivative(&state, 0.0, &loop_).unwrap();
        assert_eq!(d.leader.p, 14.0);
        assert_eq!(d.leader.v, 0.0);
        for f in &d.followers {
            assert_eq!((f.dp, f.dv, f.rho1, f.rho2), (0.0, 0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn single_follower_speed_error_derivative() {
        let params = ControllerParams::baseline();
        let schedule = LeaderSchedule::constant(14.0);
        let limits = Limits::default();
        let loop_ = ClosedLoop {
            params: &params,
            schedule: &schedule,
            pulses: &[],
            limits: &limits,
            k_lead: 2.0,
        };
        let mut state = eq_state(1, 10.0, 14.0);
        state.followers[0].dv = 1.0;
        let d = closed_loop_derivative(&state, 0.0, &loop_).unwrap();
        assert_relative_eq!(d.followers[0].dv, -3.0, max_relative = 1e-14);
        assert_eq!(d.followers[0].dp, 1.0);
    }

    #[test]
    fn coupling_enters_speed_and_filter_with_opposite_signs() {
        let params = ControllerParams::baseline();
        let schedule = LeaderSchedule::constant(14.0);
        let limits = Limits::default();
        let loop_ = ClosedLoop {
            params: &params,
            schedule: &schedule,
            pulses: &[],
            limits: &limits,
            k_lead: 2.0,
        };
        let mut state = eq_state(3, 10.0, 14.0);
        state.followers[0].dp = -10.4;
        state.followers[0].dv = 0.2;
        let d = closed_loop_derivative(&state, 0.0, &loop_).unwrap();
        // Vehicle 2 sits at equilibrium; its pair feed is the prefix over
        // vehicles 0 and 1, which vehicle 0's displacement makes nonzero.
        let y = pack(&state);
        let e = loop_.eval(&y, 0.0);
        let g = params.weights.a * e.psi_dp[1] + params.weights.b * e.psi_dv[1];
        assert!(g != 0.0);
        let f2 = &d.followers[2];
        assert_eq!(f2.dp, 0.0);
        assert_eq!(f2.rho1, 0.0);
        assert_relative_eq!(f2.dv, -g, max_relative = 1e-12);
        assert_relative_eq!(f2.rho2, g, max_relative = 1e-12);
    }

    #[test]
    fn empty_platoon_derivative_is_an_error() {
        let params = ControllerParams::baseline();
        let schedule = LeaderSchedule::constant(14.0);
        let limits = Limits::default();
        let loop_ = ClosedLoop {
            params: &params,
            schedule: &schedule,
            pulses: &[],
            limits: &limits,
            k_lead: 2.0,
        };
        let state = PlatoonState {
            leader: VehicleState { p: 0.0, v: 14.0 },
            followers: vec![],
        };
        assert!(matches!(
            closed_loop_derivative(&state, 0.0, &loop_),
            Err(Error::EmptyPlatoon)
        ));
    }

    #[test]
    fn rk4_is_exact_for_constant_speed() {
        let y = vec![1.0, 3.0];
        // p' = v, v' = 0
        let out = rk4_step(&y, 0.0, 0.25, |y, _| vec![y[1], 0.0]);
        assert_eq!(out, vec![1.75, 3.0]);
    }

    #[test]
    fn rk4_matches_exponential_decay() {
        let mut y = vec![1.0];
        let mut t = 0.0;
        for _ in 0..100 {
            y = rk4_step(&y, t, 0.01, |y, _| vec![-y[0]]);
            t += 0.01;
        }
        assert_relative_eq!(y[0], (-1.0f64).exp(), epsilon = 1e-9);
    }

    #[test]
    fn rk4_matches_filter_pair_flow() {
        // Unforced filter pair with equal time constants: the matrix
        // exponential is e^{-l t} [[1, t], [0, 1]].
        let w = ControllerParams::baseline().weights;
        let (r1_0, r2_0) = (1.0, 2.0);
        let mut y = vec![r1_0, r2_0];
        let mut t = 0.0;
        let h = 0.01;
        for _ in 0..100 {
            y = rk4_step(&y, t, h, |y, _| {
                let (d1, d2) = rho_derivative(y[0], y[1], 0.0, 0.0, &w);
                vec![d1, d2]
            });
            t += h;
        }
        let decay = (-w.lambda1 * t).exp();
        assert_relative_eq!(y[0], decay * (r1_0 + t * r2_0), epsilon = 1e-8);
        assert_relative_eq!(y[1], decay * r2_0, epsilon = 1e-8);
    }

    #[test]
    fn single_vehicle_equilibrium_run_is_constant() {
        let mut sc = baseline_scenario();
        sc.n_vehicles = 1;
        sc.pulses.clear();
        sc.schedule = LeaderSchedule::constant(14.0);
        sc.t_end = 5.0;
        sc.ic_radius_dp = 0.0;
        sc.ic_radius_dv = 0.0;
        let traj = simulate(&sc).unwrap();
        let veh = &traj.vehicles[0];
        // Positions are integrated in absolute coordinates, so the spacing
        // only holds up to cancellation roundoff (~ulp of the gap per step).
        for k in 0..traj.times.len() {
            assert_relative_eq!(veh.dp[k], -10.0, max_relative = 1e-12);
            assert!(veh.dv[k].abs() <= 1e-12);
            assert!(veh.u_app[k].abs() <= 1e-12);
            assert_eq!(traj.leader.v[k], 14.0);
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let mut sc = baseline_scenario();
        sc.t_end = 3.0;
        let a = simulate(&sc).unwrap();
        let b = simulate(&sc).unwrap();
        assert_eq!(a.times, b.times);
        for (va, vb) in a.vehicles.iter().zip(&b.vehicles) {
            assert_eq!(va.p, vb.p);
            assert_eq!(va.v, vb.v);
            assert_eq!(va.u_ctrl, vb.u_ctrl);
            assert_eq!(va.rho2, vb.rho2);
        }
    }

    #[test]
    fn applied_acceleration_respects_the_clamp() {
        let mut sc = baseline_scenario();
        sc.t_end = 30.0;
        let traj = simulate(&sc).unwrap();
        for veh in &traj.vehicles {
            for &u in &veh.u_app {
                assert!(u.abs() <= sc.limits.a_max + 1e-12);
            }
        }
    }

    #[test]
    fn speeds_stay_inside_the_box() {
        // Start in-box at the near-cap cruise speed; the pulse then pushes
        // the head vehicle against the cap. (Initial states are taken as
        // given — only the flow is clamped.)
        let mut sc = baseline_scenario();
        sc.schedule = LeaderSchedule::constant(35.8);
        sc.ic_radius_dp = 0.0;
        sc.ic_radius_dv = 0.0;
        sc.pulses = vec![DisturbancePulse {
            target: 0,
            t_on: 1.0,
            duration: 6.0,
            amplitude: 4.0,
            suppress_macro_for: None,
        }];
        sc.t_end = 10.0;
        let traj = simulate(&sc).unwrap();
        let vmax = sc.limits.v_max;
        let mut peak = f64::NEG_INFINITY;
        let mut at = (0usize, 0usize);
        for (i, veh) in traj.vehicles.iter().enumerate() {
            for (k, &v) in veh.v.iter().enumerate() {
                if v > peak {
                    peak = v;
                    at = (i, k);
                }
            }
        }
        assert!(
            peak <= vmax + 1e-12,
            "peak speed {peak:.17} above {vmax} at vehicle {} sample {} (t={})",
            at.0,
            at.1,
            traj.times[at.1]
        );
        assert!(peak > 35.9, "pulse should push the head vehicle to the cap");
    }

    #[test]
    fn step_size_convergence_is_fourth_order() {
        // Single vehicle, small offset, no clamp events: the flow is smooth
        // (no prefix-pair kinks because a lone vehicle has zero variance),
        // so halving h should shrink the end-state error ~16x.
        let mut sc = baseline_scenario();
        sc.n_vehicles = 1;
        sc.pulses.clear();
        sc.schedule = LeaderSchedule::constant(14.0);
        sc.t_end = 2.0;
        sc.ic_radius_dp = 0.5;
        sc.ic_radius_dv = 0.25;

        let end_state = |h: f64| {
            let mut s = sc.clone();
            s.h = h;
            let traj = simulate(&s).unwrap();
            let k = traj.times.len() - 1;
            let veh = &traj.vehicles[0];
            vec![veh.dp[k], veh.dv[k], veh.rho1[k], veh.rho2[k]]
        };
        let coarse = end_state(0.02);
        let mid = end_state(0.01);
        let fine = end_state(0.005);
        let err = |a: &[f64], b: &[f64]| -> f64 {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        };
        let ratio = err(&coarse, &mid) / err(&mid, &fine);
        assert!(
            ratio > 8.0,
            "expected ~16x error contraction per halving, got {ratio}"
        );
    }

    #[test]
    fn zero_coupling_weights_decouple_the_pairs() {
        // With a = b = 0 and no clamp events, the communicated-acceleration
        // term cancels in the pair dynamics, so a vehicle's relative
        // trajectory depends only on its own initial pair state.
        let mut sc = baseline_scenario();
        sc.params.weights.a = 0.0;
        sc.params.weights.b = 0.0;
        sc.pulses.clear();
        sc.schedule = LeaderSchedule::constant(14.0);
        sc.t_end = 5.0;

        let mut init_a = eq_state(4, 10.0, 14.0);
        init_a.followers[0].dp = -10.3;
        init_a.followers[0].dv = 0.2;
        init_a.followers[3].dp = -9.8;
        init_a.followers[3].dv = -0.1;
        let mut init_b = init_a.clone();
        init_b.followers[0].dp = -9.6;
        init_b.followers[0].dv = -0.25;
        sc.n_vehicles = 4;

        let ta = simulate_from(&sc, init_a).unwrap();
        let tb = simulate_from(&sc, init_b).unwrap();
        let va = &ta.vehicles[3];
        let vb = &tb.vehicles[3];
        let mut worst: f64 = 0.0;
        for k in 0..ta.times.len() {
            worst = worst
                .max((va.dp[k] - vb.dp[k]).abs())
                .max((va.dv[k] - vb.dv[k]).abs())
                .max((va.rho1[k] - vb.rho1[k]).abs())
                .max((va.rho2[k] - vb.rho2[k]).abs());
        }
        assert!(worst <= 1e-9, "vehicle 3 drifted by {worst} across runs");
    }

    #[test]
    fn pair_error_dynamics_follow_the_design_identity() {
        // Along unsaturated segments, the velocity-tracking error s2 of each
        // vehicle obeys s2' = -s1 - k_dv * s2 where s1 is the spacing error.
        let mut sc = baseline_scenario();
        sc.pulses.clear();
        sc.schedule = LeaderSchedule::constant(14.0);
        sc.t_end = 9.0;
        sc.ic_radius_dp = 0.5;
        sc.ic_radius_dv = 0.25;
        let traj = simulate(&sc).unwrap();
        let p = &sc.params;
        let l1 = p.weights.lambda1;
        let mut worst: f64 = 0.0;
        for veh in &traj.vehicles {
            for k in 200..800 {
                let s1 = |k: usize| veh.dp[k] + p.dp_bar + veh.rho1[k];
                let s2 = |k: usize| veh.dv[k] - l1 * veh.rho1[k] + veh.rho2[k] + p.k_dp * s1(k);
                let fd = (s2(k + 1) - s2(k)) / traj.h;
                let analytic = -s1(k) - p.k_dv * s2(k);
                worst = worst.max((fd - analytic).abs());
            }
        }
        assert!(worst <= 0.05, "identity violated by {worst}");
    }
}
