//! Arrival-time distributions from trajectory histograms, the solver flux
//! and the analytic currents, plus normalised comparisons between them.
//!
//! Every curve is stored as the mean of a rate over each bin of a
//! [`TimeGrid`], so curves from different routes can be compared bin by bin.

use serde::{Deserialize, Serialize};

use crate::bins::TimeGrid;
use crate::detector::{DetectorMode, DetectorSpec};
use crate::error::{Error, Result};
use crate::fokker_planck::{FluxSeries, DIFFUSION};
use crate::stats::interval_mean;
use crate::trajectories::{EnsembleResult, Scheme};
use crate::wavefunction::PacketSum;

/// Gauss-Legendre panels per bin for analytic curves.
const PANELS_PER_BIN: usize = 16;

/// A bin whose reference curve expects more than this many counts is
/// vanishing when the histogram has none there.
pub const VANISHING_MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluxKind {
    /// −n·j, the flux of the quantum current.
    BohmianJ,
    /// −n·ρb*, the backward current.
    BackwardJStar,
    /// −n·ρb, the forward current.
    ForwardJ,
    /// First-arrival flux from the Fokker-Planck solver.
    FpFirstArrival,
    /// √(4D/(π dt))·ρ at the plane, the small-step crossing rate.
    DensityProportional,
    /// Histogram of Monte Carlo first arrivals.
    McFirstArrival,
    /// Histogram of every Monte Carlo crossing.
    McCrossings,
}

impl FluxKind {
    /// Curves that count events can never be negative.
    pub fn is_nonnegative(self) -> bool {
        !matches!(self, FluxKind::BohmianJ | FluxKind::BackwardJStar | FluxKind::ForwardJ)
    }
}

/// Bin-averaged rate per unit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxCurve {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    pub kind: FluxKind,
    /// Ensemble size behind a histogram curve, for Poisson errors.
    pub samples: Option<usize>,
}

impl FluxCurve {
    pub fn new(grid: TimeGrid, values: Vec<f64>, kind: FluxKind) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} bins",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid,
            values,
            kind,
            samples: None,
        })
    }

    /// ∫ curve dt over the grid.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.width()
    }

    /// Expected counts per bin for an ensemble of `n`.
    pub fn expected_counts(&self, n: usize) -> Vec<f64> {
        let scale = n as f64 * self.grid.width();
        self.values.iter().map(|v| v * scale).collect()
    }

    /// Curve with unit integral.
    pub fn normalized(&self, name: &str) -> Result<Vec<f64>> {
        let total = self.integral();
        if !(total > 0.0) {
            return Err(Error::EmptyWindow(name.to_string()));
        }
        Ok(self.values.iter().map(|v| v / total).collect())
    }
}

/// Normalisation applied by [`ArrivalHistogram::values`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Raw counts.
    #[default]
    None,
    /// Divided by the number of detected arrivals and the bin width.
    PerDetected,
    /// Divided by the counts inside the window and the bin width, so the
    /// result integrates to one over the window.
    PerWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalHistogram {
    pub grid: TimeGrid,
    pub counts: Vec<u64>,
    pub n_total: usize,
    /// Arrivals recorded anywhere, inside or outside the window.
    pub detected: usize,
    pub normalization: Normalization,
}

impl ArrivalHistogram {
    pub fn from_times(times: &[f64], grid: TimeGrid, n_total: usize) -> Self {
        let mut counts = vec![0u64; grid.len()];
        for &t in times {
            if let Some(k) = grid.index(t) {
                counts[k] += 1;
            }
        }
        Self {
            grid,
            counts,
            n_total,
            detected: times.len(),
            normalization: Normalization::None,
        }
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn in_window(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn values(&self) -> Vec<f64> {
        let w = self.grid.width();
        let scale = match self.normalization {
            Normalization::None => 1.0,
            Normalization::PerDetected => 1.0 / (self.detected.max(1) as f64 * w),
            Normalization::PerWindow => 1.0 / (self.in_window().max(1) as f64 * w),
        };
        self.counts.iter().map(|&c| c as f64 * scale).collect()
    }

    /// Counts per trajectory per unit time, an estimate of the arrival flux.
    pub fn flux(&self, kind: FluxKind) -> FluxCurve {
        let scale = 1.0 / (self.n_total.max(1) as f64 * self.grid.width());
        FluxCurve {
            grid: self.grid,
            values: self.counts.iter().map(|&c| c as f64 * scale).collect(),
            kind,
            samples: Some(self.n_total),
        }
    }
}

/// First-arrival histogram of any first-arrival ensemble.
pub fn arrival_histogram(result: &EnsembleResult, grid: TimeGrid) -> Result<ArrivalHistogram> {
    if result.mode != Some(DetectorMode::FirstArrival) {
        return Err(Error::InvalidConfig("arrival histogram needs a first-arrival run".into()));
    }
    Ok(ArrivalHistogram::from_times(&result.arrival_times(), grid, result.n_traj))
}

/// Histogram of Bohmian first arrivals with reentering trajectories blocked.
///
/// Once a trajectory has hit the plane it is gone, so bins where the
/// current flows back up receive nothing, and neither do the bins where the
/// same trajectories would have come down again.
pub fn bohmian_blocked_histogram(result: &EnsembleResult, grid: TimeGrid) -> Result<ArrivalHistogram> {
    if result.scheme != Scheme::Bohmian {
        return Err(Error::InvalidConfig("blocked histogram needs a Bohmian run".into()));
    }
    arrival_histogram(result, grid)
}

/// Arrival flux −n·(current) at the plane at one time. Nodes and densities
/// below the floor carry no current.
pub fn current_flux_at(packets: &PacketSum, detector: &DetectorSpec, t: f64, kind: FluxKind) -> Result<f64> {
    let k = match packets.kinematics(detector.plane, t) {
        Ok(k) => k,
        Err(Error::NodeSingularity { .. }) => return Ok(0.0),
        Err(e) => return Err(e),
    };
    let current = match kind {
        FluxKind::BohmianJ => k.j,
        FluxKind::ForwardJ => k.j_fwd,
        FluxKind::BackwardJStar => k.j_bwd,
        other => {
            return Err(Error::InvalidConfig(format!("{other:?} is not a probability current")));
        }
    };
    Ok(-detector.normal() * current)
}

/// Bin means of −n·j, −n·𝒥 or −n·𝒥* at the plane.
pub fn current_flux(packets: &PacketSum, detector: &DetectorSpec, grid: TimeGrid, kind: FluxKind) -> Result<FluxCurve> {
    // Surface a wrong kind before integrating.
    current_flux_at(packets, detector, grid.start(), kind)?;
    let values = (0..grid.len())
        .map(|k| {
            interval_mean(
                |t| current_flux_at(packets, detector, t, kind).unwrap_or(0.0),
                grid.edge(k),
                grid.edge(k + 1),
                PANELS_PER_BIN,
            )
        })
        .collect();
    FluxCurve::new(grid, values, kind)
}

/// Bins in which −n·j is negative at every sample point, edges included.
/// A blocked Bohmian histogram must be empty there: any trajectory moving
/// down through the plane would need the current to point down somewhere.
pub fn negative_current_bins(packets: &PacketSum, detector: &DetectorSpec, grid: TimeGrid) -> Vec<usize> {
    const SAMPLES: usize = 32;
    (0..grid.len())
        .filter(|&k| {
            let (a, b) = (grid.edge(k), grid.edge(k + 1));
            (0..=SAMPLES).all(|i| {
                let t = a + (b - a) * i as f64 / SAMPLES as f64;
                current_flux_at(packets, detector, t, FluxKind::BohmianJ).unwrap_or(0.0) < 0.0
            })
        })
        .collect()
}

/// Rate of all plane crossings per trajectory, from an all-crossings run.
///
/// Uses the on-the-fly counts when they were binned on `grid`, otherwise the
/// recorded crossing events.
pub fn multiple_crossing_flux(result: &EnsembleResult, grid: TimeGrid) -> Result<FluxCurve> {
    if result.mode != Some(DetectorMode::AllCrossings) {
        return Err(Error::InvalidConfig("crossing flux needs an all-crossings run".into()));
    }
    let counts = match (&result.crossing_counts, result.crossing_grid) {
        (Some(c), Some(g)) if g.matches(&grid, 1e-12) => c.clone(),
        _ if !result.crossings.is_empty() || result.arrivals.is_empty() => {
            let times: Vec<f64> = result.crossings.iter().map(|c| c.t).collect();
            ArrivalHistogram::from_times(&times, grid, result.n_traj).counts
        }
        _ => {
            return Err(Error::GridMismatch(
                "crossings were neither recorded nor binned on the requested grid".into(),
            ))
        }
    };
    let scale = 1.0 / (result.n_traj as f64 * grid.width());
    Ok(FluxCurve {
        grid,
        values: counts.iter().map(|&c| c as f64 * scale).collect(),
        kind: FluxKind::McCrossings,
        samples: Some(result.n_traj),
    })
}

/// √(4D/(π dt))·ρ(plane, t), the expected crossing rate of a random walk
/// with step variance 2D dt.
pub fn analytic_density_flux(packets: &PacketSum, detector: &DetectorSpec, dt: f64, grid: TimeGrid) -> Result<FluxCurve> {
    if !(dt > 0.0) {
        return Err(Error::NonPositiveParameter("dt".into()));
    }
    let prefactor = (4.0 * DIFFUSION / (std::f64::consts::PI * dt)).sqrt();
    let values = (0..grid.len())
        .map(|k| {
            prefactor
                * interval_mean(
                    |t| packets.density(detector.plane, t),
                    grid.edge(k),
                    grid.edge(k + 1),
                    PANELS_PER_BIN,
                )
        })
        .collect();
    FluxCurve::new(grid, values, FluxKind::DensityProportional)
}

/// Solver flux averaged over each bin.
pub fn fp_flux_curve(series: &FluxSeries, grid: TimeGrid) -> FluxCurve {
    FluxCurve {
        grid,
        values: series.binned(&grid),
        kind: FluxKind::FpFirstArrival,
        samples: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizedCurve {
    pub name: String,
    pub kind: FluxKind,
    /// Unit integral over the window.
    pub values: Vec<f64>,
    /// Integral over the window before normalisation.
    pub detected_fraction: f64,
    pub samples: Option<usize>,
}

impl NormalizedCurve {
    /// Poisson error of each normalised bin; `None` for analytic curves.
    fn errors(&self, width: f64) -> Option<Vec<f64>> {
        let n = self.samples? as f64;
        let total = n * self.detected_fraction;
        Some(
            self.values
                .iter()
                .map(|v| (v * width * total).max(1.0).sqrt() / (total * width))
                .collect(),
        )
    }

    fn counts(&self, width: f64) -> Option<Vec<f64>> {
        let n = self.samples? as f64;
        Some(self.values.iter().map(|v| v * width * n * self.detected_fraction).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairComparison {
    pub a: String,
    pub b: String,
    pub linf: f64,
    pub l2: f64,
    /// Largest |z| over bins, when at least one curve carries sampling noise.
    pub max_z: Option<f64>,
    /// Fraction of bins with |z| ≤ 3.
    pub within_3sigma: Option<f64>,
}

/// Contiguous bins where a histogram is empty while a reference expects
/// counts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VanishingWindow {
    pub curve: String,
    pub reference: String,
    pub t_start: f64,
    pub t_end: f64,
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub grid: TimeGrid,
    pub curves: Vec<NormalizedCurve>,
    pub pairs: Vec<PairComparison>,
    pub vanishing: Vec<VanishingWindow>,
}

impl ComparisonReport {
    pub fn curve(&self, name: &str) -> Option<&NormalizedCurve> {
        self.curves.iter().find(|c| c.name == name)
    }

    pub fn pair(&self, a: &str, b: &str) -> Option<&PairComparison> {
        self.pairs.iter().find(|p| (p.a == a && p.b == b) || (p.a == b && p.b == a))
    }
}

/// Normalises every curve to unit integral over the shared window and
/// compares all pairs.
pub fn normalize_and_compare(curves: &[(&str, &FluxCurve)]) -> Result<ComparisonReport> {
    let Some((_, first)) = curves.first() else {
        return Err(Error::InvalidConfig("nothing to compare".into()));
    };
    let grid = first.grid;
    for (name, c) in curves {
        if !c.grid.matches(&grid, 1e-9) {
            return Err(Error::GridMismatch(format!(
                "`{name}` uses {} bins over [{}, {}], expected {} bins over [{}, {}]",
                c.grid.len(),
                c.grid.start(),
                c.grid.end(),
                grid.len(),
                grid.start(),
                grid.end()
            )));
        }
    }
    let w = grid.width();
    let normalized = curves
        .iter()
        .map(|(name, c)| {
            Ok(NormalizedCurve {
                name: name.to_string(),
                kind: c.kind,
                values: c.normalized(name)?,
                detected_fraction: c.integral(),
                samples: c.samples,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut pairs = Vec::new();
    for (i, a) in normalized.iter().enumerate() {
        for b in &normalized[i + 1..] {
            let diff: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect();
            let linf = diff.iter().fold(0.0, |m: f64, d| m.max(d.abs()));
            let l2 = (diff.iter().map(|d| d * d).sum::<f64>() * w).sqrt();
            let (max_z, within_3sigma) = match (a.errors(w), b.errors(w)) {
                (None, None) => (None, None),
                (ea, eb) => {
                    let zero = vec![0.0; diff.len()];
                    let (ea, eb) = (ea.unwrap_or_else(|| zero.clone()), eb.unwrap_or(zero));
                    let z: Vec<f64> = diff
                        .iter()
                        .zip(ea.iter().zip(&eb))
                        .map(|(d, (x, y))| d.abs() / (x * x + y * y).sqrt())
                        .collect();
                    let inside = z.iter().filter(|&&z| z <= 3.0).count() as f64 / z.len() as f64;
                    (Some(z.iter().copied().fold(0.0, f64::max)), Some(inside))
                }
            };
            pairs.push(PairComparison {
                a: a.name.clone(),
                b: b.name.clone(),
                linf,
                l2,
                max_z,
                within_3sigma,
            });
        }
    }

    let mut vanishing = Vec::new();
    for c in &normalized {
        let Some(counts) = c.counts(w) else { continue };
        for r in normalized.iter().filter(|r| r.name != c.name) {
            // Reference rescaled to the histogram's detected total.
            let total = c.samples.unwrap_or(0) as f64 * c.detected_fraction;
            let mut open: Option<(usize, usize)> = None;
            let close = |from: usize, to: usize, out: &mut Vec<VanishingWindow>| {
                out.push(VanishingWindow {
                    curve: c.name.clone(),
                    reference: r.name.clone(),
                    t_start: grid.edge(from),
                    t_end: grid.edge(to + 1),
                    bins: to + 1 - from,
                });
            };
            for (k, (&count, &reference)) in counts.iter().zip(&r.values).enumerate() {
                let empty = count < 0.5 && reference * w * total > VANISHING_MIN_EXPECTED;
                open = match (open, empty) {
                    (None, true) => Some((k, k)),
                    (Some((s, _)), true) => Some((s, k)),
                    (Some((s, e)), false) => {
                        close(s, e, &mut vanishing);
                        None
                    }
                    (None, false) => None,
                };
            }
            if let Some((s, e)) = open {
                close(s, e, &mut vanishing);
            }
        }
    }

    Ok(ComparisonReport {
        grid,
        curves: normalized,
        pairs,
        vanishing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_wave_function_has_no_current() {
        let det = DetectorSpec::below(5.0, DetectorMode::FirstArrival);
        let p = PacketSum::single(1.0);
        assert_eq!(current_flux_at(&p, &det, 0.0, FluxKind::BohmianJ).unwrap(), 0.0);
    }

    #[test]
    fn deep_tail_counts_as_zero_current() {
        let det = DetectorSpec::below(80.0, DetectorMode::FirstArrival);
        let p = PacketSum::single(1.0);
        assert_eq!(current_flux_at(&p, &det, 1e-3, FluxKind::ForwardJ).unwrap(), 0.0);
    }

    #[test]
    fn empty_ensemble_histogram() {
        let g = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let h = ArrivalHistogram::from_times(&[], g, 100);
        assert!(h.counts.iter().all(|&c| c == 0));
        assert!(h.with_normalization(Normalization::PerWindow).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn per_window_normalization_integrates_to_one() {
        let g = TimeGrid::new(0.0, 2.0, 8).unwrap();
        let h = ArrivalHistogram::from_times(&[0.1, 0.3, 0.3, 1.9, 2.5], g, 10)
            .with_normalization(Normalization::PerWindow);
        let total: f64 = h.values().iter().sum::<f64>() * g.width();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_curve_normalizes_to_one() {
        let g = TimeGrid::new(0.0, 3.0, 30).unwrap();
        let c = FluxCurve::new(g, (0..30).map(|k| (k as f64 * 0.3).sin().abs()).collect(), FluxKind::BohmianJ).unwrap();
        let r = normalize_and_compare(&[("j", &c)]).unwrap();
        let total: f64 = r.curves[0].values.iter().sum::<f64>() * g.width();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(r.pairs.is_empty());
    }

    #[test]
    fn zero_curve_is_an_empty_window() {
        let g = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let c = FluxCurve::new(g, vec![0.0; 4], FluxKind::FpFirstArrival).unwrap();
        assert_eq!(normalize_and_compare(&[("fp", &c)]), Err(Error::EmptyWindow("fp".into())));
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let a = FluxCurve::new(TimeGrid::new(0.0, 1.0, 4).unwrap(), vec![1.0; 4], FluxKind::BohmianJ).unwrap();
        let b = FluxCurve::new(TimeGrid::new(0.0, 2.0, 4).unwrap(), vec![1.0; 4], FluxKind::BohmianJ).unwrap();
        assert!(matches!(normalize_and_compare(&[("a", &a), ("b", &b)]), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn vanishing_bins_are_grouped() {
        let g = TimeGrid::new(0.0, 1.0, 5).unwrap();
        let hist = ArrivalHistogram::from_times(&[0.05; 100].iter().copied().chain([0.9; 100]).collect::<Vec<_>>(), g, 400)
            .flux(FluxKind::McFirstArrival);
        let flat = FluxCurve::new(g, vec![1.0; 5], FluxKind::BohmianJ).unwrap();
        let r = normalize_and_compare(&[("mc", &hist), ("j", &flat)]).unwrap();
        assert_eq!(r.vanishing.len(), 1);
        let v = &r.vanishing[0];
        assert_eq!((v.bins, v.curve.as_str(), v.reference.as_str()), (3, "mc", "j"));
        assert!((v.t_start - 0.2).abs() < 1e-12 && (v.t_end - 0.8).abs() < 1e-12);
        assert!((r.curve("mc").unwrap().detected_fraction - 0.5).abs() < 1e-12);
    }
}
