//! Velocity fields that drive trajectories and the Fokker-Planck solver.

use num_complex::Complex64;

/// A time-dependent complex velocity 𝒱 = u + i·v along one axis.
///
/// Evaluation is split in two stages so per-time constants are computed
/// once and shared by every particle or grid point.
pub trait VelocityField: Sync {
    type Slice: FieldAt;

    fn at(&self, t: f64) -> Self::Slice;
}

pub trait FieldAt: Send + Sync {
    /// Complex velocity at `z`, or `None` where the field is singular.
    fn velocity(&self, z: f64) -> Option<Complex64>;

    /// Natural log of the reference density, if the field carries one.
    fn log_density(&self, _z: f64) -> Option<f64> {
        None
    }

    fn velocity_and_log_density(&self, z: f64) -> (Option<Complex64>, Option<f64>) {
        (self.velocity(z), self.log_density(z))
    }
}

/// Spatially uniform velocity, mostly for oracle tests.
///
/// `osmotic` plays the role of u and `average` of v, so the forward drift is
/// their sum. Both zero gives pure Brownian motion in the stochastic scheme.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UniformField {
    pub osmotic: f64,
    pub average: f64,
}

impl UniformField {
    pub fn zero() -> Self {
        Self::default()
    }

    /// A field whose forward drift is `b` and whose Bohmian velocity is zero.
    pub fn drift(b: f64) -> Self {
        Self {
            osmotic: b,
            average: 0.0,
        }
    }
}

impl VelocityField for UniformField {
    type Slice = UniformField;

    fn at(&self, _t: f64) -> UniformField {
        *self
    }
}

impl FieldAt for UniformField {
    fn velocity(&self, _z: f64) -> Option<Complex64> {
        Some(Complex64::new(self.osmotic, self.average))
    }
}

/// Component choice for consumers that need one real velocity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    /// v, guiding Bohmian trajectories.
    Average,
    /// b = v + u, the forward drift of stochastic trajectories.
    Forward,
}

impl Component {
    #[inline]
    pub fn of(self, vel: Complex64) -> f64 {
        match self {
            Component::Average => vel.im,
            Component::Forward => vel.im + vel.re,
        }
    }
}
