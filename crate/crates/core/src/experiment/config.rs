//! Simulation config: a sectioned TOML file where every key has a default
//! and unknown keys are rejected.

use std::path::Path;

use nalgebra::{Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::channel::{LinkConfig, LinkParams};
use crate::dynamics::{linearize, ForceConfig, ProcessConfig, ProcessModel};
use crate::error::{Error, Result};
use crate::estimator::{Belief, KalmanFilter, RequirementConfig, Requirements};
use crate::scheduler::PolicyKind;
use crate::sensing::{AgentSpec, Fleet, Placement};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub link: LinkConfig,
    pub requirements: RequirementConfig,
    pub dynamics: DynamicsConfig,
    pub fleet: FleetConfig,
    pub scheduler: SchedulerConfig,
    pub estimator: KalmanFilter,
    pub harness: HarnessConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsConfig {
    pub amp: [f64; 2],
    pub freq: [f64; 2],
    pub restore_gain: f64,
    pub center: [f64; 2],
    pub region_radius: f64,
    pub mass: f64,
    pub step: f64,
    pub sigma_sq_pos: f64,
    pub sigma_sq_vel: f64,
    pub known_input: bool,
    pub init_mean: [f64; 4],
    pub init_var: [f64; 4],
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        let f = ForceConfig::default();
        let p = ProcessConfig::default();
        Self {
            amp: f.amp,
            freq: f.freq,
            restore_gain: f.restore_gain,
            center: f.center,
            region_radius: f.region_radius,
            mass: f.mass,
            step: p.step,
            sigma_sq_pos: p.sigma_sq_pos,
            sigma_sq_vel: p.sigma_sq_vel,
            known_input: p.known_input,
            init_mean: [0.0; 4],
            init_var: [1.0, 1.0, 0.1, 0.1],
        }
    }
}

impl DynamicsConfig {
    pub fn forces(&self) -> ForceConfig {
        ForceConfig {
            amp: self.amp,
            freq: self.freq,
            restore_gain: self.restore_gain,
            center: self.center,
            region_radius: self.region_radius,
            mass: self.mass,
        }
    }

    pub fn process(&self) -> ProcessConfig {
        ProcessConfig {
            step: self.step,
            sigma_sq_pos: self.sigma_sq_pos,
            sigma_sq_vel: self.sigma_sq_vel,
            known_input: self.known_input,
        }
    }

    pub fn initial_belief(&self) -> Belief {
        Belief::new(
            Vector4::from(self.init_mean),
            Matrix4::from_diagonal(&Vector4::from(self.init_var)),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetConfig {
    pub m_pos: usize,
    pub m_vel: usize,
    /// Sensing range (m).
    pub d_max: f64,
    pub pos_var_range: [f64; 2],
    pub vel_var_range: [f64; 2],
    /// Fixed agent list. When non-empty it replaces random placement and is
    /// shared by every run.
    pub agents: Vec<AgentSpec>,
}

impl Default for FleetConfig {
    fn default() -> Self {
        Self {
            m_pos: 30,
            m_vel: 30,
            d_max: 20.0,
            pos_var_range: [0.01, 0.09],
            vel_var_range: [0.0025, 0.0225],
            agents: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerConfig {
    /// Uplink slots per interval (C).
    pub slots: usize,
    /// Per-agent power budget (W); exceeding it only logs a warning.
    pub power_budget_w: f64,
    /// Accuracy/power weight of the reported objective.
    pub alpha: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            slots: 10,
            power_budget_w: 1000.0,
            alpha: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    /// Query intervals per episode (N).
    pub qis: usize,
    pub runs: usize,
    pub base_seed: u64,
    pub policies: Vec<PolicyKind>,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            qis: 100,
            runs: 500,
            base_seed: 20240601,
            policies: PolicyKind::ALL.to_vec(),
        }
    }
}

/// Everything an episode needs, derived once from a validated config.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub forces: ForceConfig,
    pub process: ProcessModel,
    pub link: LinkParams,
    pub requirements: Requirements,
    pub filter: KalmanFilter,
    pub initial: Belief,
    pub placement: Placement,
    /// Fixed fleet from the config, if any.
    pub fixed_fleet: Option<Fleet>,
    pub slots: usize,
    pub alpha: f64,
    pub power_budget_w: f64,
    pub qis: usize,
    pub base_seed: u64,
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file (or defaults when `path` is `None`) and applies
    /// `section.key=value` overrides, values in TOML syntax.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                text.parse()
                    .map_err(|e: toml::de::Error| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: SimConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Fully defaulted config echo.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario().map(|_| ())
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let forces = self.dynamics.forces();
        forces.validate()?;
        let process = linearize(&self.dynamics.process(), &forces)?;
        if self.dynamics.init_var.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config("init_var entries must be >= 0".into()));
        }
        let link = self.link.params()?;
        let requirements = Requirements::pos_vel(self.requirements.xi_sq_pos, self.requirements.xi_sq_vel)?;

        let f = &self.fleet;
        if !(f.d_max >= 0.0) {
            return Err(Error::Config(format!("d_max must be >= 0, got {}", f.d_max)));
        }
        for (name, [lo, hi]) in [("pos_var_range", f.pos_var_range), ("vel_var_range", f.vel_var_range)] {
            if !(lo > 0.0 && hi >= lo) {
                return Err(Error::Config(format!(
                    "{name} must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
                )));
            }
        }
        let center = Vector2::from(self.dynamics.center);
        let fixed_fleet = if f.agents.is_empty() {
            None
        } else {
            Some(Fleet::from_specs(&f.agents, f.d_max, &center)?)
        };

        let s = &self.scheduler;
        if !(0.0..=1.0).contains(&s.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", s.alpha)));
        }
        if !(s.power_budget_w > 0.0) {
            return Err(Error::Config("power_budget_w must be > 0".into()));
        }
        if self.harness.runs == 0 {
            return Err(Error::Config("runs must be >= 1".into()));
        }

        Ok(Scenario {
            placement: Placement {
                m_pos: f.m_pos,
                m_vel: f.m_vel,
                region_radius: forces.region_radius,
                center,
                pos_var_range: f.pos_var_range,
                vel_var_range: f.vel_var_range,
                d_max: f.d_max,
            },
            forces,
            process,
            link,
            requirements,
            filter: self.estimator,
            initial: self.dynamics.initial_belief(),
            fixed_fleet,
            slots: s.slots,
            alpha: s.alpha,
            power_budget_w: s.power_budget_w,
            qis: self.harness.qis,
            base_seed: self.harness.base_seed,
        })
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{spec}' is not key=value")))?;
    let value: toml::Value = {
        let doc: toml::Table = format!("v = {}", raw.trim())
            .parse()
            .or_else(|_| format!("v = \"{}\"", raw.trim()).parse())
            .map_err(|e: toml::de::Error| Error::Config(format!("override '{spec}': {e}")))?;
        doc["v"].clone()
    };
    let mut parts: Vec<&str> = key.trim().split('.').collect();
    let leaf = parts
        .pop()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::Config(format!("empty key in '{spec}'")))?;
    let mut node = table;
    for part in parts {
        node = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("'{part}' in '{spec}' is not a section")))?;
    }
    node.insert(leaf.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_match_table_values() {
        let cfg = SimConfig::default();
        let sc = cfg.scenario().unwrap();
        assert_eq!(sc.slots, 10);
        assert_eq!(cfg.fleet.d_max, 20.0);
        assert_eq!(cfg.dynamics.mass, 100.0);
        assert!((sc.link.noise_power - 7.0794578e-5).abs() < 1e-11);
        assert!((sc.link.rician_g - 31.6227766).abs() < 1e-6);
        assert_eq!(sc.requirements.xi_sq, Vector4::new(0.015, 0.015, 0.005, 0.005));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(SimConfig::from_toml_str("[link]\nbandwidth = 3\n").is_err());
        assert!(SimConfig::from_toml_str("[nonsense]\n").is_err());
        assert!(SimConfig::from_toml_str("[link]\nbandwidth_hz = 3e6\n").is_ok());
    }

    #[test]
    fn resolved_echo_round_trips() {
        let mut cfg = SimConfig::default();
        cfg.harness.policies = vec![PolicyKind::Voi, PolicyKind::Bcs];
        cfg.fleet.agents = vec![AgentSpec {
            kind: crate::sensing::SensorKind::Velocity,
            x: 1.0,
            y: -2.0,
            variances: [0.01, 0.02],
        }];
        let text = cfg.to_toml_string();
        assert_eq!(SimConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn overrides() {
        let cfg = SimConfig::load(
            None,
            &[
                "scheduler.slots=4".into(),
                "harness.policies=[\"voi\"]".into(),
                "dynamics.known_input = true".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.scheduler.slots, 4);
        assert_eq!(cfg.harness.policies, vec![PolicyKind::Voi]);
        assert!(cfg.dynamics.known_input);
        assert!(SimConfig::load(None, &["scheduler.slot=4".into()]).is_err());
        assert!(SimConfig::load(None, &["nokey".into()]).is_err());
    }

    #[test]
    fn invalid_values() {
        assert!(SimConfig::from_toml_str("[scheduler]\nalpha = 1.5\n").is_err());
        assert!(SimConfig::from_toml_str("[dynamics]\nmass = 0.0\n").is_err());
        assert!(SimConfig::from_toml_str("[link]\noutage_eps = 0.7\n").is_err());
        assert!(SimConfig::from_toml_str("[harness]\nruns = 0\n").is_err());
        assert!(SimConfig::from_toml_str("[requirements]\nxi_sq_pos = -1.0\n").is_err());
    }
}
