//! The backstepping control law.
//!
//! Each vehicle tracks a spacing reference that the filter state rho1
//! relaxes away from the constant gap, and a velocity reference built from
//! the spacing error. The law needs two things from its predecessor: the
//! predecessor's commanded acceleration and the prefix coupling pair
//! (psi_dp, psi_dv). Both arrive through [`LeaderFeed`].

use serde::{Deserialize, Serialize};

use crate::macroscopic::MacroWeights;
use crate::state::ExtendedState;
use crate::{Error, Result};

/// All gains of the control law plus the analysis weight `upsilon` used by
/// the certification routines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    pub k_dp: f64,
    pub k_dv: f64,
    pub dp_bar: f64,
    pub upsilon: f64,
    pub weights: MacroWeights,
}

impl ControllerParams {
    /// The benchmark gain set used throughout the test suite and as the
    /// shipped default configuration.
    pub fn baseline() -> Self {
        ControllerParams {
            k_dp: 1.0,
            k_dv: 2.0,
            dp_bar: 10.0,
            upsilon: 0.9,
            weights: MacroWeights {
                gamma_dp: 0.5,
                gamma_dv: 0.5,
                a: 0.2,
                b: 1.0,
                lambda1: 1.5,
                lambda2: 1.5,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &'static str, ok: bool, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    reason: reason.to_string(),
                })
            }
        };
        check("k_dp", self.k_dp > 0.0, "must be > 0")?;
        check("k_dv", self.k_dv > 0.0, "must be > 0")?;
        check("dp_bar", self.dp_bar > 0.0, "must be > 0")?;
        check(
            "upsilon",
            self.upsilon > 0.0 && self.upsilon < 1.0,
            "must lie in (0, 1)",
        )?;
        self.weights.validate()
    }
}

/// What vehicle i receives from upstream: the predecessor's commanded
/// acceleration and the coupling pair over vehicles 0..i-1. When
/// `available` is false the coupling pair is treated as zero, modelling a
/// vehicle that is cut off from the platoon-wide statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderFeed {
    pub u_prev: f64,
    pub psi_dp_prev: f64,
    pub psi_dv_prev: f64,
    pub available: bool,
}

impl LeaderFeed {
    pub fn new(u_prev: f64, psi_dp_prev: f64, psi_dv_prev: f64) -> Self {
        LeaderFeed {
            u_prev,
            psi_dp_prev,
            psi_dv_prev,
            available: true,
        }
    }

    /// Feed for the head vehicle: there is no prefix ahead of it, so the
    /// coupling pair is identically zero.
    pub fn head(u_leader: f64) -> Self {
        LeaderFeed::new(u_leader, 0.0, 0.0)
    }

    /// The coupling pair after applying the availability flag.
    pub fn effective_psi(&self) -> (f64, f64) {
        if self.available {
            (self.psi_dp_prev, self.psi_dv_prev)
        } else {
            (0.0, 0.0)
        }
    }
}

/// Spacing reference `-dp_bar - rho1`: the constant gap, relaxed by the
/// first filter state.
pub fn spacing_reference(rho1: f64, dp_bar: f64) -> f64 {
    -dp_bar - rho1
}

/// Velocity reference `lambda1*rho1 - rho2 - k_dp*(dp - spacing_reference)`.
pub fn velocity_reference(x: &ExtendedState, p: &ControllerParams) -> f64 {
    let dpr = spacing_reference(x.rho1, p.dp_bar);
    p.weights.lambda1 * x.rho1 - x.rho2 - p.k_dp * (x.dp - dpr)
}

/// The commanded acceleration for one vehicle.
///
/// The feed's coupling pair enters only through the availability flag;
/// the output is affine in `(u_prev, psi_dp_prev, psi_dv_prev)` with
/// coefficients `(1, -a, -b)`.
pub fn control_input(x: &ExtendedState, feed: &LeaderFeed, p: &ControllerParams) -> f64 {
    let w = &p.weights;
    let (psi_dp, psi_dv) = feed.effective_psi();
    let dpr = spacing_reference(x.rho1, p.dp_bar);
    let dvr = velocity_reference(x, p);
    feed.u_prev - (x.dp - dpr) - p.k_dv * (x.dv - dvr)
        + (p.k_dp - w.lambda1) * (w.lambda1 * x.rho1 - x.rho2)
        + w.lambda2 * x.rho2
        - p.k_dp * x.dv
        - w.a * psi_dp
        - w.b * psi_dv
}

/// Symmetric actuator clamp to `[-a_max, a_max]`, with a flag telling
/// whether the clamp engaged.
pub fn saturate(u: f64, a_max: f64) -> (f64, bool) {
    let clamped = u.clamp(-a_max, a_max);
    (clamped, clamped != u)
}
