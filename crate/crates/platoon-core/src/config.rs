//! TOML configuration files for scenarios.
//!
//! A config file carries one [`Scenario`] split into the sections
//! `[platoon]`, `[gains]`, `[macro]`, `[limits]`, `[schedule]`, `[[pulses]]`
//! and `[integrator]`. `[limits]` and `[[pulses]]` may be omitted (physical
//! defaults, no pulses). The gain and weight keys are the parameter names
//! themselves: `k_dp`, `k_dv`, `dp_bar`, `upsilon`, `a`, `b`, `gamma_dp`,
//! `gamma_dv`, `lambda1`, `lambda2`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controller::ControllerParams;
use crate::dynamics::{DisturbancePulse, LeaderSchedule, Limits, ScheduleStep};
use crate::harness::Scenario;
use crate::macroscopic::MacroWeights;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatoonSection {
    pub n_vehicles: usize,
    pub seed: u64,
    pub ic_radius_dp: f64,
    pub ic_radius_dv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSection {
    pub k_dp: f64,
    pub k_dv: f64,
    pub dp_bar: f64,
    pub upsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub initial: f64,
    pub k_lead: f64,
    #[serde(default)]
    pub steps: Vec<ScheduleStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub h: f64,
    pub t_end: f64,
    pub output_every: f64,
}

/// One scenario in file form. [`Config::scenario`] converts to the domain
/// type and validates; [`Config::from_scenario`] goes the other way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub platoon: PlatoonSection,
    pub gains: GainsSection,
    #[serde(rename = "macro")]
    pub weights: MacroWeights,
    #[serde(default)]
    pub limits: Limits,
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub pulses: Vec<DisturbancePulse>,
    pub integrator: IntegratorSection,
}

impl Config {
    pub fn from_path(path: &Path) -> Result<Config> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).map_err(|e| Error::format(path, e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Builds and validates the scenario this config describes.
    pub fn scenario(&self) -> Result<Scenario> {
        let scenario = Scenario {
            n_vehicles: self.platoon.n_vehicles,
            params: ControllerParams {
                k_dp: self.gains.k_dp,
                k_dv: self.gains.k_dv,
                dp_bar: self.gains.dp_bar,
                upsilon: self.gains.upsilon,
                weights: self.weights,
            },
            k_lead: self.schedule.k_lead,
            schedule: LeaderSchedule {
                initial: self.schedule.initial,
                steps: self.schedule.steps.clone(),
            },
            pulses: self.pulses.clone(),
            limits: self.limits,
            h: self.integrator.h,
            t_end: self.integrator.t_end,
            output_every: self.integrator.output_every,
            seed: self.platoon.seed,
            ic_radius_dp: self.platoon.ic_radius_dp,
            ic_radius_dv: self.platoon.ic_radius_dv,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_scenario(scenario: &Scenario) -> Config {
        Config {
            platoon: PlatoonSection {
                n_vehicles: scenario.n_vehicles,
                seed: scenario.seed,
                ic_radius_dp: scenario.ic_radius_dp,
                ic_radius_dv: scenario.ic_radius_dv,
            },
            gains: GainsSection {
                k_dp: scenario.params.k_dp,
                k_dv: scenario.params.k_dv,
                dp_bar: scenario.params.dp_bar,
                upsilon: scenario.params.upsilon,
            },
            weights: scenario.params.weights,
            limits: scenario.limits,
            schedule: ScheduleSection {
                initial: scenario.schedule.initial,
                k_lead: scenario.k_lead,
                steps: scenario.schedule.steps.clone(),
            },
            pulses: scenario.pulses.clone(),
            integrator: IntegratorSection {
                h: scenario.h,
                t_end: scenario.t_end,
                output_every: scenario.output_every,
            },
        }
    }
}

/// Reads a config file and returns its validated scenario.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    Config::from_path(path)?.scenario()
}
