//! Embedded experiment presets `fig1` … `fig12`.

use crate::config::RunConfig;
use crate::error::{Error, Result};

const PRESETS: [(&str, &str); 12] = [
    ("fig1", include_str!("../presets/fig1.toml")),
    ("fig2", include_str!("../presets/fig2.toml")),
    ("fig3", include_str!("../presets/fig3.toml")),
    ("fig4", include_str!("../presets/fig4.toml")),
    ("fig5", include_str!("../presets/fig5.toml")),
    ("fig6", include_str!("../presets/fig6.toml")),
    ("fig7", include_str!("../presets/fig7.toml")),
    ("fig8", include_str!("../presets/fig8.toml")),
    ("fig9", include_str!("../presets/fig9.toml")),
    ("fig10", include_str!("../presets/fig10.toml")),
    ("fig11", include_str!("../presets/fig11.toml")),
    ("fig12", include_str!("../presets/fig12.toml")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

/// Raw TOML of a preset.
pub fn source(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn preset(name: &str) -> Result<RunConfig> {
    let text = source(name).ok_or_else(|| {
        Error::Config(format!(
            "unknown preset `{name}` (available: {})",
            names().collect::<Vec<_>>().join(", ")
        ))
    })?;
    RunConfig::from_toml_str(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Integrator;
    use crate::models::{CouplingTarget, InitialSystem, ModelSpec, Observable};

    struct Row {
        name: &'static str,
        dt: f64,
        gamma: Option<f64>,
        lambda: Option<f64>,
        omega_d: Option<f64>,
        omega_r: Option<f64>,
        detuning: Option<f64>,
        spacing: Option<f64>,
        half_width: Option<f64>,
        g0: Option<f64>,
        slope: Option<f64>,
        target: Option<CouplingTarget>,
        n: usize,
    }

    const DET: (Option<f64>, Option<f64>, Option<f64>) = (Some(10.0), Some(1.0), Some(1.0));

    fn table() -> Vec<Row> {
        let two_level = |name, dt, omega_r, detuning, n| Row {
            name,
            dt,
            gamma: DET.0,
            lambda: DET.1,
            omega_d: DET.2,
            omega_r,
            detuning,
            spacing: None,
            half_width: None,
            g0: None,
            slope: None,
            target: Some(CouplingTarget::Ground),
            n,
        };
        let decay = |name, slope, measured: Option<CouplingTarget>, n| Row {
            name,
            dt: 0.1,
            gamma: measured.and(DET.0),
            lambda: measured.and(DET.1),
            omega_d: measured.and(DET.2),
            omega_r: None,
            detuning: None,
            spacing: Some(0.001),
            half_width: Some(0.5),
            g0: Some(0.001262),
            slope: Some(slope),
            target: measured,
            n,
        };
        vec![
            two_level("fig1", 0.1, None, None, 4),
            two_level("fig2", 0.1, None, None, 1000),
            two_level("fig3", 0.1, None, None, 1000),
            two_level("fig4", 0.1, Some(0.1), Some(0.0), 1),
            two_level("fig5", 0.1, Some(0.1), Some(0.0), 1000),
            two_level("fig6", 0.001, Some(0.1), Some(0.2), 1000),
            decay("fig7", 0.0, None, 1),
            decay("fig8", 2.0, None, 1),
            decay("fig9", 0.0, Some(CouplingTarget::Ground), 1),
            decay("fig10", 0.0, Some(CouplingTarget::Ground), 1000),
            decay("fig11", 0.0, Some(CouplingTarget::Excited), 1),
            decay("fig12", 2.0, Some(CouplingTarget::Ground), 1000),
        ]
    }

    #[test]
    fn presets_match_the_parameter_table() {
        let rows = table();
        assert_eq!(rows.len(), names().count());
        for row in rows {
            let cfg = preset(row.name).unwrap();
            let sim = cfg.simulation().unwrap();
            assert_eq!(sim.dt, row.dt, "{}", row.name);
            assert_eq!(sim.integrator, Integrator::Euler);
            assert_eq!(cfg.ensemble.n_trajectories, row.n, "{}", row.name);
            let spec = cfg.model_spec().unwrap();
            let det = spec.detector();
            assert_eq!(det.map(|d| d.gamma), row.gamma, "{}", row.name);
            assert_eq!(det.map(|d| d.lambda), row.lambda, "{}", row.name);
            assert_eq!(det.map(|d| d.omega_d), row.omega_d, "{}", row.name);
            assert_eq!(det.map(|d| d.coupling_target), row.target, "{}", row.name);
            let drive = match &spec {
                ModelSpec::RabiMeasured { drive, .. } => Some(*drive),
                _ => None,
            };
            assert_eq!(drive.map(|d| d.omega_r), row.omega_r, "{}", row.name);
            assert_eq!(drive.map(|d| d.detuning), row.detuning, "{}", row.name);
            let res = spec.reservoir();
            assert_eq!(res.map(|r| r.half_width), row.half_width, "{}", row.name);
            assert_eq!(res.map(|r| r.g0), row.g0, "{}", row.name);
            assert_eq!(res.map(|r| r.slope), row.slope, "{}", row.name);
            match (res.map(|r| r.spacing()), row.spacing) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-15, "{}", row.name),
                (a, b) => assert_eq!(a, b),
            }
        }
    }

    #[test]
    fn initial_states() {
        for name in ["fig1", "fig2", "fig3"] {
            match preset(name).unwrap().model_spec().unwrap() {
                ModelSpec::DetectorMeasurement { initial, .. } => {
                    assert_eq!(initial, InitialSystem::Superposition)
                }
                other => panic!("{other:?}"),
            }
        }
        for name in ["fig4", "fig5", "fig6"] {
            match preset(name).unwrap().model_spec().unwrap() {
                ModelSpec::RabiMeasured { initial, .. } => assert_eq!(initial, InitialSystem::Ground),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn golden_rate_of_the_decay_presets() {
        let cfg = preset("fig7").unwrap();
        let spec = cfg.model_spec().unwrap();
        let rate = crate::oracles::golden_rule_rate(spec.reservoir().unwrap()).rate;
        assert!((rate - 0.01).abs() < 1e-5);
        assert_eq!(cfg.simulation().unwrap().observables, vec![Observable::RhoEe]);
    }

    #[test]
    fn unknown_preset() {
        let err = preset("fig13").unwrap_err().to_string();
        assert!(err.contains("fig12"));
    }
}
