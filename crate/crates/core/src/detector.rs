use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wavefunction::PacketSum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorMode {
    /// The particle is destroyed on its first hit from above.
    FirstArrival,
    /// The detector counts every passage and never blocks.
    AllCrossings,
}

impl std::str::FromStr for DetectorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first-arrival" => Ok(DetectorMode::FirstArrival),
            "all-crossings" => Ok(DetectorMode::AllCrossings),
            other => Err(Error::InvalidConfig(format!(
                "unknown detector mode `{other}` (expected first-arrival or all-crossings)"
            ))),
        }
    }
}

/// A horizontal detector plane below the source.
///
/// The normal points from the detecting side (+z), so the arrival flux of a
/// current `j` is `-n·j = -j_z` evaluated at the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorSpec {
    /// z-coordinate of the plane in natural length units.
    pub plane: f64,
    pub mode: DetectorMode,
}

impl DetectorSpec {
    pub fn new(plane: f64, mode: DetectorMode) -> Self {
        Self { plane, mode }
    }

    /// Detector at distance `distance` below the source centre.
    pub fn below(distance: f64, mode: DetectorMode) -> Self {
        Self::new(-distance, mode)
    }

    pub fn normal(&self) -> f64 {
        1.0
    }

    /// In first-arrival mode the plane must sit at least 2σ below every
    /// initial packet.
    pub fn validate_against(&self, packets: &PacketSum) -> Result<()> {
        if !self.plane.is_finite() {
            return Err(Error::InvalidConfig("detector plane must be finite".into()));
        }
        if self.mode == DetectorMode::FirstArrival {
            let lowest = packets
                .packets()
                .iter()
                .map(|p| p.center - 2.0 * p.sigma)
                .fold(f64::INFINITY, f64::min);
            if self.plane > lowest + 1e-12 {
                return Err(Error::InvalidConfig(format!(
                    "detector plane z = {} is less than 2σ below the initial cloud (lowest edge {})",
                    self.plane, lowest
                )));
            }
        }
        Ok(())
    }
}
