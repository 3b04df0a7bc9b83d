//! Vehicle and platoon state containers, and the coordinate changes
//! between absolute states, car-following states, and deviations from
//! the constant-spacing equilibrium.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Absolute longitudinal state of one vehicle: position and speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub p: f64,
    pub v: f64,
}

/// State of one car-following pair, follower minus predecessor.
///
/// `dp` is negative whenever the follower is physically behind the vehicle
/// it follows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarFollowingState {
    pub dp: f64,
    pub dv: f64,
}

/// Car-following pair extended with the vehicle's two macroscopic filter
/// states. Both filter states start at zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ExtendedState {
    pub dp: f64,
    pub dv: f64,
    pub rho1: f64,
    pub rho2: f64,
}

/// Constant-spacing equilibrium of a car-following pair: spacing `-dp_bar`,
/// zero speed difference, filter states at rest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibrium {
    pub dp_eq: f64,
    pub dv_eq: f64,
    pub rho1_eq: f64,
    pub rho2_eq: f64,
}

impl Equilibrium {
    pub fn for_spacing(dp_bar: f64) -> Self {
        Equilibrium {
            dp_eq: -dp_bar,
            dv_eq: 0.0,
            rho1_eq: 0.0,
            rho2_eq: 0.0,
        }
    }
}

/// Lumped state of the platoon: the virtual leader plus one extended
/// car-following state per real vehicle. Index 0 is the head vehicle's
/// pair with the virtual leader.
#[derive(Debug, Clone, PartialEq)]
pub struct PlatoonState {
    pub leader: VehicleState,
    pub followers: Vec<ExtendedState>,
}

/// Componentwise difference from the equilibrium, `(dp - dp_eq, dv, rho1, rho2)`.
pub fn deviation(x: &ExtendedState, e: &Equilibrium) -> [f64; 4] {
    [
        x.dp - e.dp_eq,
        x.dv - e.dv_eq,
        x.rho1 - e.rho1_eq,
        x.rho2 - e.rho2_eq,
    ]
}

/// Euclidean norm of the deviation from equilibrium.
pub fn deviation_norm(x: &ExtendedState, e: &Equilibrium) -> f64 {
    let d = deviation(x, e);
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2] + d[3] * d[3]).sqrt()
}

/// Pairwise differences down the platoon: element 0 is the head vehicle
/// minus the leader, element i is vehicle i minus vehicle i-1.
pub fn absolute_to_relative(
    states: &[VehicleState],
    leader: &VehicleState,
) -> Result<Vec<CarFollowingState>> {
    if states.is_empty() {
        return Err(Error::EmptyPlatoon);
    }
    let mut out = Vec::with_capacity(states.len());
    let mut prev = *leader;
    for s in states {
        out.push(CarFollowingState {
            dp: s.p - prev.p,
            dv: s.v - prev.v,
        });
        prev = *s;
    }
    Ok(out)
}

/// Inverse of [`absolute_to_relative`]: rebuild absolute states by summing
/// pairwise differences down from the leader.
pub fn relative_to_absolute(rel: &[CarFollowingState], leader: &VehicleState) -> Vec<VehicleState> {
    let mut out = Vec::with_capacity(rel.len());
    let mut prev = *leader;
    for r in rel {
        let s = VehicleState {
            p: prev.p + r.dp,
            v: prev.v + r.dv,
        };
        out.push(s);
        prev = s;
    }
    out
}
