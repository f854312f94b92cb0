//! Experiment configuration files and the bundled presets.
//!
//! Configs are TOML with physical inputs in μm, ms and atomic mass units.
//! Times may be given in ms (`dt`, `t_max_ms`) or in units of 1/ω
//! (`dt_inv_omega`, `t_max_inv_omega`), whichever matches the experiment.

use serde::{Deserialize, Serialize};

use crate::bins::TimeGrid;
use crate::detector::{DetectorMode, DetectorSpec};
use crate::error::{Error, Result};
use crate::fokker_planck::FpParams;
use crate::trajectories::{CrossingCorrection, Scheme, TrajectoryConfig};
use crate::units::{derive_params, PhysicalInput, PhysicsParams, UnitSystem};
use crate::wavefunction::WavefunctionSpec;

/// Bundled presets: (name, TOML source).
pub const PRESETS: &[(&str, &str)] = &[
    ("single-well", include_str!("../../../presets/single-well.toml")),
    ("single-well-L2", include_str!("../../../presets/single-well-L2.toml")),
    ("single-well-L50", include_str!("../../../presets/single-well-L50.toml")),
    ("double-well", include_str!("../../../presets/double-well.toml")),
];

pub fn preset_source(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, src)| *src)
        .ok_or_else(|| {
            let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            Error::InvalidConfig(format!("unknown preset `{name}` (known: {})", known.join(", ")))
        })
}

/// Unit of the time columns in outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeAxis {
    Ms,
    InvOmega,
}

impl TimeAxis {
    /// Column suffix, e.g. `t_ms` or `t_inv_omega`.
    pub fn suffix(self) -> &'static str {
        match self {
            TimeAxis::Ms => "ms",
            TimeAxis::InvOmega => "inv_omega",
        }
    }

    pub fn to_internal(self, units: &UnitSystem, t: f64) -> f64 {
        match self {
            TimeAxis::Ms => units.ms_to_internal(t),
            TimeAxis::InvOmega => t / units.omega_internal(),
        }
    }

    pub fn from_internal(self, units: &UnitSystem, t: f64) -> f64 {
        match self {
            TimeAxis::Ms => units.internal_to_ms(t),
            TimeAxis::InvOmega => t * units.omega_internal(),
        }
    }
}

/// Optional solver settings. Lengths in σ, times in 1/ω.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FpSection {
    pub dz_sigma: Option<f64>,
    /// Largest step; defaults to a quarter of the trajectory step.
    pub dt_cap_inv_omega: Option<f64>,
    /// Fixed step overriding the adaptive choice.
    pub dt_pde_inv_omega: Option<f64>,
    pub node_tol: Option<f64>,
    pub z_max_sigma: Option<f64>,
}

/// The file as written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub name: Option<String>,
    pub mass_mu: f64,
    pub sigma_um: f64,
    pub sigma_x_um: Option<f64>,
    pub sigma_y_um: Option<f64>,
    #[serde(default)]
    pub d_um: f64,
    #[serde(rename = "L_um")]
    pub l_um: f64,
    /// Trajectory step in ms.
    pub dt: Option<f64>,
    pub dt_inv_omega: Option<f64>,
    pub t_max_ms: Option<f64>,
    pub t_max_inv_omega: Option<f64>,
    pub n_traj: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub detector_mode: String,
    #[serde(default = "default_scheme")]
    pub scheme: String,
    #[serde(default)]
    pub bridge_correction: bool,
    pub bins: usize,
    /// `ms` or `inv_omega`; double wells default to ms, single wells to 1/ω.
    pub time_axis: Option<TimeAxis>,
    /// Position snapshot times, in the time-axis unit.
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default)]
    pub fokker_planck: FpSection,
}

fn default_mode() -> String {
    "first-arrival".into()
}

fn default_scheme() -> String {
    "stochastic".into()
}

impl RawConfig {
    pub fn from_toml(src: &str) -> Result<Self> {
        toml::from_str(src).map_err(|e| Error::InvalidConfig(e.message().to_string()))
    }

    pub fn preset(name: &str) -> Result<Self> {
        Self::from_toml(preset_source(name)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Sets the trajectory step in the config's own time unit.
    pub fn set_dt(&mut self, dt: f64) {
        match self.axis() {
            TimeAxis::Ms => {
                self.dt = Some(dt);
                self.dt_inv_omega = None;
            }
            TimeAxis::InvOmega => {
                self.dt_inv_omega = Some(dt);
                self.dt = None;
            }
        }
    }

    fn axis(&self) -> TimeAxis {
        self.time_axis.unwrap_or(if self.d_um > 0.0 { TimeAxis::Ms } else { TimeAxis::InvOmega })
    }
}

/// A validated experiment in natural units.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub raw: RawConfig,
    pub params: PhysicsParams,
    pub units: UnitSystem,
    pub spec: WavefunctionSpec,
    pub detector: DetectorSpec,
    pub trajectories: TrajectoryConfig,
    pub fp: FpParams,
    /// Histogram grid over [0, t_max].
    pub grid: TimeGrid,
    pub time_axis: TimeAxis,
}

fn pick(name: &str, ms: Option<f64>, inv_omega: Option<f64>, units: &UnitSystem) -> Result<f64> {
    let t = match (ms, inv_omega) {
        (Some(_), Some(_)) => {
            return Err(Error::InvalidConfig(format!("give {name} in ms or in 1/ω, not both")));
        }
        (Some(ms), None) => TimeAxis::Ms.to_internal(units, ms),
        (None, Some(w)) => TimeAxis::InvOmega.to_internal(units, w),
        (None, None) => return Err(Error::InvalidConfig(format!("missing {name}"))),
    };
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::NonPositiveParameter(name.to_string()));
    }
    Ok(t)
}

impl Experiment {
    pub fn from_raw(raw: RawConfig) -> Result<Self> {
        let params = derive_params(&PhysicalInput {
            mass_mu: raw.mass_mu,
            sigma_um: raw.sigma_um,
            sigma_x_um: raw.sigma_x_um,
            sigma_y_um: raw.sigma_y_um,
            d_um: raw.d_um,
            detector_um: raw.l_um,
        })?;
        let units = params.units();
        let internal = params.to_internal();
        let dt = pick("dt", raw.dt, raw.dt_inv_omega, &units)?;
        let t_max = pick("t_max", raw.t_max_ms, raw.t_max_inv_omega, &units)?;
        let mode: DetectorMode = raw.detector_mode.parse()?;
        let scheme: Scheme = raw.scheme.parse()?;
        if raw.bridge_correction && scheme == Scheme::Bohmian {
            return Err(Error::InvalidConfig("the bridge correction applies to stochastic runs only".into()));
        }
        let time_axis = raw.axis();

        let spec = WavefunctionSpec::from_params(&params);
        let detector = DetectorSpec::below(internal.detector_distance, mode);
        detector.validate_against(&spec.z)?;

        let mut trajectories = TrajectoryConfig::new(raw.n_traj, dt, t_max, raw.seed, scheme);
        if raw.bridge_correction {
            trajectories.crossing_correction = CrossingCorrection::BrownianBridge;
        }
        trajectories.snapshot_times = raw
            .snapshot_times
            .iter()
            .map(|&t| time_axis.to_internal(&units, t))
            .collect();
        trajectories.validate()?;

        let inv_omega = |t: f64| TimeAxis::InvOmega.to_internal(&units, t);
        let s = &raw.fokker_planck;
        let mut fp = FpParams::new(s.dz_sigma.unwrap_or(0.05), s.dt_cap_inv_omega.map_or(dt / 4.0, inv_omega));
        fp.dt_fixed = s.dt_pde_inv_omega.map(inv_omega);
        fp.z_max = s.z_max_sigma;
        if let Some(tol) = s.node_tol {
            fp.node_tol = tol;
        }
        fp.validate()?;

        let grid = TimeGrid::new(0.0, t_max, raw.bins)?;
        Ok(Self {
            raw,
            params,
            units,
            spec,
            detector,
            trajectories,
            fp,
            grid,
            time_axis,
        })
    }

    pub fn from_toml(src: &str) -> Result<Self> {
        Self::from_raw(RawConfig::from_toml(src)?)
    }

    pub fn preset(name: &str) -> Result<Self> {
        Self::from_raw(RawConfig::preset(name)?)
    }

    pub fn t_max(&self) -> f64 {
        self.trajectories.t_max
    }

    pub fn time_out(&self, t: f64) -> f64 {
        self.time_axis.from_internal(&self.units, t)
    }

    /// Converts a rate per internal time unit to the output time unit.
    pub fn rate_out(&self, r: f64) -> f64 {
        r / self.time_out(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse() {
        for (name, _) in PRESETS {
            let e = Experiment::preset(name).unwrap();
            assert_eq!(e.grid.end(), e.t_max());
        }
    }

    #[test]
    fn double_well_preset_matches_the_experiment() {
        let e = Experiment::preset("double-well").unwrap();
        assert_eq!(e.time_axis, TimeAxis::Ms);
        assert!((e.detector.plane + 30.0).abs() < 1e-12);
        assert!((e.time_out(e.t_max()) - 6.0).abs() < 1e-12);
        assert!((e.time_out(e.trajectories.dt) - 3.75e-3).abs() < 1e-15);
        assert_eq!(e.grid.len(), 240);
        assert_eq!(e.spec.z.packets().len(), 2);
    }

    #[test]
    fn single_well_preset_uses_the_reference_step() {
        let e = Experiment::preset("single-well").unwrap();
        assert_eq!(e.time_axis, TimeAxis::InvOmega);
        assert!((e.trajectories.dt - 1.0 / 800.0).abs() < 1e-15);
        assert_eq!(e.trajectories.n_traj, 400);
        assert!((e.detector.plane + 5.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let base = RawConfig::preset("single-well").unwrap();
        let mut r = base.clone();
        r.sigma_um = -1.0;
        assert_eq!(Experiment::from_raw(r), Err(Error::NonPositiveParameter("sigma_um".into())));
        let mut r = base.clone();
        r.t_max_ms = Some(1.0);
        assert!(matches!(Experiment::from_raw(r), Err(Error::InvalidConfig(_))));
        let mut r = base.clone();
        r.detector_mode = "sideways".into();
        assert!(Experiment::from_raw(r).is_err());
        assert!(RawConfig::from_toml("mass_mu = 4\nunknown_key = 1").is_err());
    }

    #[test]
    fn round_trip_through_toml() {
        let r = RawConfig::preset("double-well").unwrap();
        assert_eq!(RawConfig::from_toml(&r.to_toml()).unwrap(), r);
    }
}
