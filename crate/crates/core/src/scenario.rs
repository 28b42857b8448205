//! Scenario files: JSON in, validated network + controller + simulator
//! settings out. Rates are given in veh/h and converted to veh/s here.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::ControllerConfig;
use crate::dynamics::ControlMode;
use crate::error::{Error, Result};
use crate::net::{build_grid, NetworkModel};
use crate::sim::{ContentionParams, DemandTable, SimParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub rows: usize,
    pub cols: usize,
    pub link_length_m: f64,
    pub saturation_flow_veh_h: f64,
    #[serde(default = "default_turn_ratio")]
    pub turn_ratio: f64,
    /// Junction capacity; defaults to 1.1 times the saturation flow.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub junction_capacity_veh_h: Option<f64>,
}

fn default_turn_ratio() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandEntry {
    pub from: String,
    pub to: String,
    pub veh_h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    pub mode: ControlMode,
    /// Friction coefficient of the contention window.
    pub gamma: f64,
    #[serde(default)]
    pub pin_yellows: bool,
    pub r: f64,
    pub lambda: f64,
    /// Nominal vehicles per link.
    pub x_nominal: f64,
    pub g_nominal_s: f64,
    pub g_min_s: f64,
    pub cycle_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContentionConfig {
    pub yield_distance_m: f64,
    pub lookout_distance_m: f64,
}

impl Default for ContentionConfig {
    fn default() -> Self {
        let p = ContentionParams::default();
        Self {
            yield_distance_m: p.m,
            lookout_distance_m: p.big_m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub network: NetworkConfig,
    pub demand: Vec<DemandEntry>,
    pub control: ControlConfig,
    #[serde(default)]
    pub contention: ContentionConfig,
    #[serde(default)]
    pub vehicle: SimParams,
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
}

/// A validated scenario, ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub network: NetworkModel,
    pub demand: DemandTable,
    pub controller: ControllerConfig,
    pub contention: ContentionParams,
    pub sim: SimParams,
    pub cycles: usize,
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    ScenarioConfig::from_json(&text)
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Short label such as `semi-g0.3` or `classical`.
    pub fn label(&self) -> String {
        match self.control.mode {
            ControlMode::Classical => "classical".to_string(),
            ControlMode::Semi if self.control.pin_yellows => "semi-pinned".to_string(),
            ControlMode::Semi => format!("semi-g{}", self.control.gamma),
        }
    }

    /// Check every invariant and build the runtime objects.
    pub fn resolve(&self) -> Result<Scenario> {
        let mut problems = Vec::new();
        let n = &self.network;
        let c = &self.control;
        let mut check = |ok: bool, msg: String| {
            if !ok {
                problems.push(msg);
            }
        };
        check(
            n.rows >= 2 && n.cols >= 2,
            format!("network: grid must be at least 2x2, got {}x{}", n.rows, n.cols),
        );
        check(
            n.link_length_m > 0.0,
            format!("network.link_length_m must be positive, got {}", n.link_length_m),
        );
        check(
            n.saturation_flow_veh_h > 0.0,
            format!(
                "network.saturation_flow_veh_h must be positive, got {}",
                n.saturation_flow_veh_h
            ),
        );
        check(
            n.turn_ratio > 0.0 && n.turn_ratio <= 0.5,
            format!("network.turn_ratio must lie in (0, 0.5], got {}", n.turn_ratio),
        );
        if let Some(q) = n.junction_capacity_veh_h {
            check(
                q >= n.saturation_flow_veh_h,
                format!("network.junction_capacity_veh_h {q} is below the saturation flow"),
            );
        }
        check(
            (0.0..=1.0).contains(&c.gamma),
            format!("control.gamma must lie in [0, 1], got {}", c.gamma),
        );
        check(
            c.r > 0.0 && c.r.is_finite(),
            format!("control.r must be positive, got {}", c.r),
        );
        check(
            c.lambda >= 0.0 && c.lambda.is_finite(),
            format!("control.lambda must be non-negative, got {}", c.lambda),
        );
        check(
            c.x_nominal >= 0.0,
            format!("control.x_nominal must be non-negative, got {}", c.x_nominal),
        );
        check(
            c.cycle_s > 0.0,
            format!("control.cycle_s must be positive, got {}", c.cycle_s),
        );
        check(
            c.g_min_s >= 0.0,
            format!("control.g_min_s must be non-negative, got {}", c.g_min_s),
        );
        check(
            2.0 * c.g_min_s <= c.cycle_s,
            format!(
                "control.g_min_s {} leaves no room in a {} s cycle",
                c.g_min_s, c.cycle_s
            ),
        );
        check(
            c.g_nominal_s >= c.g_min_s && c.g_nominal_s <= c.cycle_s - c.g_min_s,
            format!(
                "control.g_nominal_s {} must lie in [g_min_s, cycle_s - g_min_s]",
                c.g_nominal_s
            ),
        );
        check(
            !(c.pin_yellows && c.mode == ControlMode::Classical),
            "control.pin_yellows only applies to semi mode".to_string(),
        );
        check(
            self.duration_s > 0.0,
            format!("duration_s must be positive, got {}", self.duration_s),
        );
        let cycles = if c.cycle_s > 0.0 {
            self.duration_s / c.cycle_s
        } else {
            0.0
        };
        check(
            (cycles - cycles.round()).abs() < 1e-9,
            format!(
                "duration_s {} is not a multiple of cycle_s {}",
                self.duration_s, c.cycle_s
            ),
        );
        let contention = &self.contention;
        check(
            contention.yield_distance_m > 0.0 && contention.yield_distance_m < contention.lookout_distance_m,
            format!(
                "contention needs 0 < yield_distance_m < lookout_distance_m, got {} and {}",
                contention.yield_distance_m, contention.lookout_distance_m
            ),
        );
        if let Err(e) = self.vehicle.validate() {
            problems.push(format!("vehicle: {e}"));
        }
        let mut demand = DemandTable::new();
        for (i, d) in self.demand.iter().enumerate() {
            if let Err(e) = demand.add(&d.from, &d.to, d.veh_h) {
                problems.push(format!("demand[{i}]: {e}"));
            }
        }

        let network = if n.rows >= 2 && n.cols >= 2 && n.link_length_m > 0.0 && n.saturation_flow_veh_h > 0.0 {
            let s = n.saturation_flow_veh_h / 3600.0;
            let mut net = build_grid(n.rows, n.cols, n.link_length_m, s)?
                .with_friction(c.gamma.clamp(0.0, 1.0))
                .with_turn_ratio(n.turn_ratio);
            if let Some(q) = n.junction_capacity_veh_h {
                net = net.with_capacity(q / 3600.0);
            }
            if let Err(e) = demand.check_zones(&net) {
                match e {
                    Error::InvalidConfig(v) => problems.extend(v),
                    other => problems.push(other.to_string()),
                }
            }
            Some(net)
        } else {
            None
        };

        if !problems.is_empty() {
            return Err(Error::InvalidConfig(problems));
        }
        let network = network.expect("checked above");
        if let Err(v) = network.validate() {
            return Err(Error::InvalidNetwork(v));
        }
        Ok(Scenario {
            config: self.clone(),
            network,
            demand,
            controller: ControllerConfig {
                mode: c.mode,
                pin_yellows: c.pin_yellows,
                r: c.r,
                discount: c.lambda,
                x_nominal: c.x_nominal,
                g_nominal: c.g_nominal_s,
                g_min: c.g_min_s,
                cycle: c.cycle_s,
            },
            contention: ContentionParams {
                m: contention.yield_distance_m,
                big_m: contention.lookout_distance_m,
            },
            sim: self.vehicle,
            cycles: cycles.round() as usize,
        })
    }

    /// Name of the first setting that differs beyond mode, friction,
    /// yellow pinning, seed and name, if any.
    pub fn incompatibility(&self, other: &ScenarioConfig) -> Option<&'static str> {
        let strip = |c: &ScenarioConfig| {
            let mut c = c.clone();
            c.name.clear();
            c.seed = 0;
            c.control.mode = ControlMode::Classical;
            c.control.gamma = 0.0;
            c.control.pin_yellows = false;
            c
        };
        let (a, b) = (strip(self), strip(other));
        if a.network != b.network {
            Some("network")
        } else if a.demand != b.demand {
            Some("demand")
        } else if a.duration_s != b.duration_s {
            Some("duration_s")
        } else if a.control != b.control {
            Some("control")
        } else if a.contention != b.contention {
            Some("contention")
        } else if a.vehicle != b.vehicle {
            Some("vehicle")
        } else {
            None
        }
    }
}

/// The shipped baseline scenario.
pub const BASELINE_JSON: &str = include_str!("../scenarios/baseline.json");

pub fn baseline_config() -> ScenarioConfig {
    ScenarioConfig::from_json(BASELINE_JSON).expect("shipped scenario parses")
}

/// The baseline with side-to-side demand raised by half, which keeps a large
/// share of junctions above the nominal queue without locking the grid.
pub const CONGESTED_JSON: &str = include_str!("../scenarios/congested.json");

pub fn congested_config() -> ScenarioConfig {
    ScenarioConfig::from_json(CONGESTED_JSON).expect("shipped scenario parses")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_holds_table_values() {
        let c = baseline_config();
        assert_eq!(c.control.r, 0.5);
        assert_eq!(c.control.lambda, 0.1);
        assert_eq!(c.control.x_nominal, 10.5);
        assert_eq!(c.control.g_nominal_s, 30.0);
        assert_eq!(c.control.g_min_s, 4.0);
        assert_eq!(c.control.cycle_s, 60.0);
        assert_eq!(c.network.link_length_m, 300.0);
        assert_eq!(c.network.turn_ratio, 0.5);
        assert_eq!(c.network.saturation_flow_veh_h, 1800.0);
        let s = c.resolve().unwrap();
        assert_eq!(s.network.links[0].saturation_flow, 0.5);
        assert_eq!(s.cycles, 360);
        assert_eq!(s.demand.rate("north", "south"), 250.0);
        assert_eq!(s.demand.rate("central", "west"), 40.0);
    }

    #[test]
    fn negative_lambda_is_rejected() {
        let mut c = baseline_config();
        c.control.lambda = -0.1;
        let err = c.resolve().unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("lambda"), "{err}");
    }

    #[test]
    fn every_violation_is_listed() {
        let mut c = baseline_config();
        c.control.lambda = -1.0;
        c.control.r = 0.0;
        c.duration_s = 90.0;
        let Error::InvalidConfig(v) = c.resolve().unwrap_err() else {
            panic!("expected a config error")
        };
        assert_eq!(v.len(), 3, "{v:?}");
    }

    #[test]
    fn missing_demand_names_the_field() {
        let mut json: serde_json::Value = serde_json::from_str(BASELINE_JSON).unwrap();
        json.as_object_mut().unwrap().remove("demand");
        let err = ScenarioConfig::from_json(&json.to_string()).unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("demand"), "{err}");
    }

    #[test]
    fn unknown_zone_is_a_validation_error() {
        let mut c = baseline_config();
        c.demand.push(DemandEntry {
            from: "airport".into(),
            to: "north".into(),
            veh_h: 10.0,
        });
        let err = c.resolve().unwrap_err();
        assert!(err.to_string().contains("airport"), "{err}");
    }

    #[test]
    fn compatibility_ignores_mode_gamma_seed() {
        let a = baseline_config();
        let mut b = a.clone();
        b.control.mode = ControlMode::Classical;
        b.control.gamma = 0.7;
        b.seed = 99;
        assert_eq!(a.incompatibility(&b), None);
        b.duration_s = 600.0;
        assert_eq!(a.incompatibility(&b), Some("duration_s"));
    }

    #[test]
    fn json_round_trip() {
        let a = baseline_config();
        assert_eq!(ScenarioConfig::from_json(&a.to_json()).unwrap(), a);
    }

    #[test]
    fn congested_variant_only_scales_side_demand() {
        let (a, b) = (baseline_config(), congested_config());
        assert_eq!(a.control, b.control);
        assert_eq!(a.network, b.network);
        let (sa, sb) = (a.resolve().unwrap(), b.resolve().unwrap());
        assert_eq!(sb.demand.rate("north", "south"), 1.5 * sa.demand.rate("north", "south"));
        assert_eq!(sb.demand.rate("central", "west"), sa.demand.rate("central", "west"));
    }
}
