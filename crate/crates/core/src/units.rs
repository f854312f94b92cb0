//! Physical constants, experiment parameters and the natural unit system.
//!
//! Everything downstream of this module works in units where ħ = m = σ = 1,
//! with σ the oscillator length along z. The time unit is therefore
//! mσ²/ħ, which equals 1/(2ω) for the trap frequency ω = ħ/(2mσ²).

use crate::error::{Error, Result};

/// Reduced Planck constant (J·s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Atomic mass unit (kg).
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;

pub const MICROMETRE: f64 = 1e-6;
pub const MILLISECOND: f64 = 1e-3;

/// Experiment inputs as they appear in config files (μm, m_u multiples).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalInput {
    pub mass_mu: f64,
    pub sigma_um: f64,
    pub sigma_x_um: Option<f64>,
    pub sigma_y_um: Option<f64>,
    pub d_um: f64,
    pub detector_um: f64,
}

/// Validated physical parameters in a consistent unit system.
///
/// `omega` is derived, never supplied: ω = ħ/(2mσ²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicsParams {
    pub mass: f64,
    pub hbar: f64,
    pub sigma: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    /// Half-separation of the two wells along z.
    pub d: f64,
    /// Distance of the detector plane below the source centre.
    pub detector_distance: f64,
    pub omega: f64,
}

fn positive(name: &str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::NonPositiveParameter(name.to_string()))
    }
}

impl PhysicsParams {
    pub fn new(
        mass: f64,
        hbar: f64,
        sigma: f64,
        d: f64,
        detector_distance: f64,
    ) -> Result<Self> {
        Self::with_transverse(mass, hbar, sigma, sigma, sigma, d, detector_distance)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_transverse(
        mass: f64,
        hbar: f64,
        sigma: f64,
        sigma_x: f64,
        sigma_y: f64,
        d: f64,
        detector_distance: f64,
    ) -> Result<Self> {
        let mass = positive("mass", mass)?;
        let hbar = positive("hbar", hbar)?;
        let sigma = positive("sigma", sigma)?;
        let sigma_x = positive("sigma_x", sigma_x)?;
        let sigma_y = positive("sigma_y", sigma_y)?;
        let detector_distance = positive("L", detector_distance)?;
        if !(d.is_finite() && d >= 0.0) {
            return Err(Error::InvalidConfig("d must be finite and non-negative".into()));
        }
        Ok(Self {
            mass,
            hbar,
            sigma,
            sigma_x,
            sigma_y,
            d,
            detector_distance,
            omega: hbar / (2.0 * mass * sigma * sigma),
        })
    }

    /// Parameters already expressed in natural units (ħ = m = σ = 1).
    pub fn internal(d: f64, detector_distance: f64) -> Result<Self> {
        Self::new(1.0, 1.0, 1.0, d, detector_distance)
    }

    pub fn units(&self) -> UnitSystem {
        UnitSystem::new(self)
    }

    /// The same experiment re-expressed in natural units.
    pub fn to_internal(&self) -> PhysicsParams {
        let u = self.units();
        PhysicsParams {
            mass: 1.0,
            hbar: 1.0,
            sigma: 1.0,
            sigma_x: u.length_to_internal(self.sigma_x),
            sigma_y: u.length_to_internal(self.sigma_y),
            d: u.length_to_internal(self.d),
            detector_distance: u.length_to_internal(self.detector_distance),
            omega: 0.5,
        }
    }
}

/// Validates raw config values and converts them to SI.
pub fn derive_params(raw: &PhysicalInput) -> Result<PhysicsParams> {
    let mass_mu = positive("mass_mu", raw.mass_mu)?;
    let sigma = positive("sigma_um", raw.sigma_um)? * MICROMETRE;
    let sigma_x = positive("sigma_x_um", raw.sigma_x_um.unwrap_or(raw.sigma_um))? * MICROMETRE;
    let sigma_y = positive("sigma_y_um", raw.sigma_y_um.unwrap_or(raw.sigma_um))? * MICROMETRE;
    let detector = positive("L_um", raw.detector_um)? * MICROMETRE;
    PhysicsParams::with_transverse(
        mass_mu * ATOMIC_MASS_UNIT,
        HBAR,
        sigma,
        sigma_x,
        sigma_y,
        raw.d_um * MICROMETRE,
        detector,
    )
}

/// Linear map between the parameters' unit system and natural units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitSystem {
    /// Reference length, equal to σ.
    pub length_unit: f64,
    /// Reference time mσ²/ħ = 1/(2ω).
    pub time_unit: f64,
}

impl UnitSystem {
    pub fn new(params: &PhysicsParams) -> Self {
        Self {
            length_unit: params.sigma,
            time_unit: params.mass * params.sigma * params.sigma / params.hbar,
        }
    }

    pub fn length_to_internal(&self, x: f64) -> f64 {
        x / self.length_unit
    }

    pub fn length_from_internal(&self, x: f64) -> f64 {
        x * self.length_unit
    }

    pub fn time_to_internal(&self, t: f64) -> f64 {
        t / self.time_unit
    }

    pub fn time_from_internal(&self, t: f64) -> f64 {
        t * self.time_unit
    }

    /// Rates (per time) and densities (per length) scale inversely.
    pub fn rate_from_internal(&self, r: f64) -> f64 {
        r / self.time_unit
    }

    pub fn density_from_internal(&self, rho: f64) -> f64 {
        rho / self.length_unit
    }

    pub fn ms_to_internal(&self, t_ms: f64) -> f64 {
        self.time_to_internal(t_ms * MILLISECOND)
    }

    pub fn internal_to_ms(&self, t: f64) -> f64 {
        self.time_from_internal(t) / MILLISECOND
    }

    pub fn um_to_internal(&self, x_um: f64) -> f64 {
        self.length_to_internal(x_um * MICROMETRE)
    }

    pub fn internal_to_um(&self, x: f64) -> f64 {
        self.length_from_internal(x) / MICROMETRE
    }

    /// Trap frequency in natural units; always 1/2.
    pub fn omega_internal(&self) -> f64 {
        0.5
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn double_well() -> PhysicsParams {
        derive_params(&PhysicalInput {
            mass_mu: 4.0,
            sigma_um: 0.5,
            sigma_x_um: None,
            sigma_y_um: None,
            d_um: 10.0,
            detector_um: 15.0,
        })
        .unwrap()
    }

    #[test]
    fn double_well_parameters() {
        let p = double_well();
        assert_relative_eq!(p.mass, 4.0 * ATOMIC_MASS_UNIT);
        assert_relative_eq!(p.sigma, 0.5e-6);
        assert_relative_eq!(p.hbar / (2.0 * p.mass * p.sigma * p.sigma * p.omega), 1.0, max_relative = 1e-12);
        let i = p.to_internal();
        assert_relative_eq!(i.d, 20.0, max_relative = 1e-12);
        assert_relative_eq!(i.detector_distance, 30.0, max_relative = 1e-12);
        assert_eq!(i.sigma_x, 1.0);
    }

    #[test]
    fn internal_omega_is_half() {
        let p = PhysicsParams::internal(0.0, 5.0).unwrap();
        assert_eq!(p.omega, 0.5);
    }

    #[test]
    fn rejects_non_positive() {
        let raw = PhysicalInput {
            mass_mu: 4.0,
            sigma_um: -1.0,
            sigma_x_um: None,
            sigma_y_um: None,
            d_um: 0.0,
            detector_um: 5.0,
        };
        assert_eq!(
            derive_params(&raw),
            Err(Error::NonPositiveParameter("sigma_um".into()))
        );
        let raw = PhysicalInput { sigma_um: 1.0, mass_mu: 0.0, ..raw };
        assert!(matches!(derive_params(&raw), Err(Error::NonPositiveParameter(n)) if n == "mass_mu"));
        let raw = PhysicalInput { mass_mu: 1.0, detector_um: 0.0, ..raw };
        assert!(matches!(derive_params(&raw), Err(Error::NonPositiveParameter(n)) if n == "L_um"));
    }

    #[test]
    fn length_conversion() {
        let u = double_well().units();
        assert_relative_eq!(u.um_to_internal(15.0), 30.0, max_relative = 1e-12);
        assert_eq!(u.length_to_internal(0.0), 0.0);
    }

    #[test]
    fn double_well_time_step_conversion() {
        // t = 1/(1600 ω) in SI is (1/1600)·(1/ω_internal) in natural units,
        // obtained by chaining t/(mσ²/ħ) with ω = ħ/(2mσ²).
        let p = double_well();
        let u = p.units();
        let t_si = 1.0 / (1600.0 * p.omega);
        let direct = (1.0 / 1600.0) * (1.0 / u.omega_internal());
        assert_relative_eq!(u.time_to_internal(t_si), direct, max_relative = 1e-12);
        assert_relative_eq!(direct, 1.0 / 800.0, max_relative = 1e-15);
    }

    proptest! {
        #[test]
        fn round_trip_preserves_values(exp in -6.0f64..6.0, mant in 1.0f64..10.0) {
            let u = double_well().units();
            let x = mant * 10f64.powf(exp) * u.length_unit;
            let t = mant * 10f64.powf(exp) * u.time_unit;
            let xr = u.length_from_internal(u.length_to_internal(x));
            let tr = u.time_from_internal(u.time_to_internal(t));
            prop_assert!(((xr - x) / x).abs() < 1e-12);
            prop_assert!(((tr - t) / t).abs() < 1e-12);
        }
    }
}
