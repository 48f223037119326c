//! TOML run configuration: one section per concern, unknown keys rejected.
//!
//! ```toml
//! [model]
//! kind = "detector-measurement"   # rabi-measured | free-decay | measured-decay
//! initial = "superposition"       # two-level models only
//! omega_a = 1.0
//!
//! [detector]
//! gamma = 10.0
//! lambda = 1.0
//! omega_d = 1.0
//! coupling_target = "ground"
//!
//! [simulation]
//! dt = 0.1
//! t_max = 25.0
//! observables = ["rho_aa"]
//!
//! [ensemble]
//! n_trajectories = 1000
//! master_seed = 1
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{Integrator, SimulationParams};
use crate::ensemble::{run_ensemble, EnsembleConfig, EnsembleStatistics};
use crate::error::{Error, Result};
use crate::models::{
    CouplingTarget, DetectorParams, DriveParams, InitialSystem, Model, ModelSpec, Observable,
    ReservoirSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector: Option<DetectorSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drive: Option<DriveSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reservoir: Option<ReservoirSection>,
    pub simulation: SimulationSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<String>,
    #[serde(default)]
    pub omega_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub gamma: f64,
    pub lambda: f64,
    pub omega_d: f64,
    #[serde(default = "default_target")]
    pub coupling_target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    pub omega_r: f64,
    #[serde(default)]
    pub detuning: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservoirSection {
    pub n_modes: usize,
    pub half_width: f64,
    pub g0: f64,
    #[serde(default)]
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub dt: f64,
    pub t_max: f64,
    #[serde(default = "default_integrator")]
    pub integrator: String,
    pub observables: Vec<String>,
    #[serde(default = "one")]
    pub decimation: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    #[serde(default = "one")]
    pub n_trajectories: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            n_trajectories: 1,
            master_seed: 0,
            workers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_path")]
    pub path: String,
    /// Also write one CSV per trajectory.
    #[serde(default)]
    pub per_trajectory: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            path: default_path(),
            per_trajectory: false,
        }
    }
}

fn default_target() -> String {
    "ground".into()
}

fn default_integrator() -> String {
    "euler".into()
}

fn default_path() -> String {
    "qzeno-out".into()
}

fn one() -> usize {
    1
}

fn config_err(key: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{key}: {msg}"))
}

fn parse_initial(s: Option<&str>) -> Result<InitialSystem> {
    match s {
        None | Some("superposition") => Ok(InitialSystem::Superposition),
        Some("excited") => Ok(InitialSystem::Excited),
        Some("ground") => Ok(InitialSystem::Ground),
        Some(other) => Err(config_err(
            "model.initial",
            format!("unknown initial state `{other}` (excited | ground | superposition)"),
        )),
    }
}

impl RunConfig {
    /// Parses and validates TOML text.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies `section.key = value` overrides. Values are read as TOML
    /// literals, falling back to plain strings.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[(S, S)]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut table: toml::Table = toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        for (key, value) in overrides {
            let (key, value) = (key.as_ref(), value.as_ref());
            let (section, field) = key
                .split_once('.')
                .ok_or_else(|| config_err(key, "override keys look like `section.key`"))?;
            let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(value.to_string()));
            let entry = table
                .entry(section.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            match entry {
                toml::Value::Table(t) => {
                    t.insert(field.to_string(), parsed);
                }
                _ => return Err(config_err(key, "not a section")),
            }
        }
        let text = toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_toml_str(&text)
    }

    fn detector_params(&self) -> Result<DetectorParams> {
        let d = self
            .detector
            .as_ref()
            .ok_or_else(|| config_err("detector", "section required for this model"))?;
        let target = match d.coupling_target.as_str() {
            "ground" => CouplingTarget::Ground,
            "excited" => CouplingTarget::Excited,
            other => {
                return Err(config_err(
                    "detector.coupling_target",
                    format!("unknown target `{other}` (ground | excited)"),
                ))
            }
        };
        Ok(DetectorParams::new(d.gamma, d.lambda, d.omega_d).with_target(target))
    }

    fn reservoir_spec(&self) -> Result<ReservoirSpec> {
        let r = self
            .reservoir
            .as_ref()
            .ok_or_else(|| config_err("reservoir", "section required for this model"))?;
        ReservoirSpec::new(r.n_modes, r.half_width, r.g0, r.slope, self.model.omega_a)
            .map_err(|e| config_err("reservoir", e))
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let initial = || parse_initial(self.model.initial.as_deref());
        let spec = match self.model.kind.as_str() {
            "detector-measurement" => ModelSpec::DetectorMeasurement {
                detector: self.detector_params()?,
                omega_a: self.model.omega_a,
                initial: initial()?,
            },
            "rabi-measured" => {
                let d = self
                    .drive
                    .as_ref()
                    .ok_or_else(|| config_err("drive", "section required for rabi-measured"))?;
                ModelSpec::RabiMeasured {
                    detector: self.detector_params()?,
                    drive: DriveParams {
                        omega_r: d.omega_r,
                        detuning: d.detuning,
                    },
                    initial: initial()?,
                }
            }
            "free-decay" => ModelSpec::FreeDecay {
                reservoir: self.reservoir_spec()?,
            },
            "measured-decay" => ModelSpec::MeasuredDecay {
                reservoir: self.reservoir_spec()?,
                detector: self.detector_params()?,
            },
            other => {
                return Err(config_err(
                    "model.kind",
                    format!(
                        "unknown model `{other}` (detector-measurement | rabi-measured | free-decay | measured-decay)"
                    ),
                ))
            }
        };
        Ok(spec)
    }

    pub fn simulation(&self) -> Result<SimulationParams> {
        let s = &self.simulation;
        let integrator: Integrator = s
            .integrator
            .parse()
            .map_err(|_| config_err("simulation.integrator", format!("unknown integrator `{}` (euler | rk4)", s.integrator)))?;
        let observables = s
            .observables
            .iter()
            .map(|o| o.parse::<Observable>().map_err(|e| config_err("simulation.observables", e)))
            .collect::<Result<Vec<_>>>()?;
        Ok(SimulationParams {
            dt: s.dt,
            t_max: s.t_max,
            integrator,
            observables,
            decimation: s.decimation,
        })
    }

    pub fn ensemble_config(&self) -> EnsembleConfig {
        let mut cfg = EnsembleConfig::new(self.ensemble.n_trajectories, self.ensemble.master_seed);
        cfg.workers = self.ensemble.workers;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.simulation;
        if !(s.dt > 0.0 && s.dt.is_finite()) {
            return Err(config_err("simulation.dt", format!("{} must be > 0", s.dt)));
        }
        if !(s.t_max >= s.dt && s.t_max.is_finite()) {
            return Err(config_err("simulation.t_max", format!("{} must be >= dt", s.t_max)));
        }
        if s.decimation < 1 {
            return Err(config_err("simulation.decimation", "must be >= 1"));
        }
        if self.ensemble.n_trajectories < 1 {
            return Err(config_err("ensemble.n_trajectories", "must be >= 1"));
        }
        if self.ensemble.workers == Some(0) {
            return Err(config_err("ensemble.workers", "must be >= 1"));
        }
        let model = Model::new(self.model_spec()?).map_err(|e| config_err("model", e))?;
        self.simulation()?
            .validate(&model)
            .map_err(|e| config_err("simulation", e))
    }

    /// Runs the configured ensemble.
    pub fn run(&self) -> Result<EnsembleStatistics> {
        let model = Model::new(self.model_spec()?)?;
        run_ensemble(&model, &self.simulation()?, &self.ensemble_config())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DETECTOR: &str = r#"
[model]
kind = "detector-measurement"
omega_a = 1.0

[detector]
gamma = 10.0
lambda = 1.0
omega_d = 1.0

[simulation]
dt = 0.1
t_max = 25.0
observables = ["rho_aa", "rho_eg_re"]

[ensemble]
n_trajectories = 20
master_seed = 4
"#;

    #[test]
    fn parses_and_builds() {
        let cfg = RunConfig::from_toml_str(DETECTOR).unwrap();
        match cfg.model_spec().unwrap() {
            ModelSpec::DetectorMeasurement {
                detector, initial, ..
            } => {
                assert_eq!(detector.gamma, 10.0);
                assert_eq!(detector.coupling_target, CouplingTarget::Ground);
                assert_eq!(initial, InitialSystem::Superposition);
            }
            other => panic!("{other:?}"),
        }
        let sim = cfg.simulation().unwrap();
        assert_eq!(sim.observables, vec![Observable::RhoAa, Observable::CoherenceRe]);
        assert_eq!(sim.integrator, Integrator::Euler);
        assert_eq!(cfg.ensemble_config().n_trajectories, 20);
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let text = DETECTOR.replace("omega_d = 1.0", "omega_d = 1.0\nomega_x = 2.0");
        let err = RunConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("omega_x"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn invalid_values_name_the_key() {
        let text = DETECTOR.replace("dt = 0.1", "dt = -0.1");
        let err = RunConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("simulation.dt"), "{err}");

        let text = DETECTOR.replace("\"rho_aa\"", "\"rho_zz\"");
        assert!(RunConfig::from_toml_str(&text).is_err());

        let text = DETECTOR.replace("detector-measurement", "free-decay");
        let err = RunConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("reservoir"), "{err}");
    }

    #[test]
    fn overrides_apply_and_revalidate() {
        let cfg = RunConfig::from_toml_str(DETECTOR).unwrap();
        let o = cfg
            .with_overrides(&[("ensemble.n_trajectories", "7"), ("detector.coupling_target", "excited")])
            .unwrap();
        assert_eq!(o.ensemble.n_trajectories, 7);
        assert_eq!(o.detector_params().unwrap().coupling_target, CouplingTarget::Excited);
        assert!(cfg.with_overrides(&[("simulation.dt", "0")]).is_err());
        assert!(cfg.with_overrides(&[("nosection", "1")]).is_err());
        assert!(cfg.with_overrides(&[("detector.bogus", "1")]).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig::from_toml_str(DETECTOR).unwrap();
        let again = RunConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }
}
