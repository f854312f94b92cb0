//! Forward Fokker-Planck solver for the density of not-yet-detected
//! stochastic trajectories.
//!
//! ρ_L obeys ∂ₜρ_L + ∂_z(b ρ_L) − D ∂²_z ρ_L = 0 above the detector with
//! ρ_L = 0 on the plane. The first-arrival flux is the rate at which mass
//! leaves through the plane. The scheme treats diffusion implicitly and the
//! drift explicitly with limited upwinding, so ρ_L stays non-negative and
//! the absorbed mass is tracked exactly step by step.

mod grid;
pub mod propagator;
mod tridiag;

pub use grid::{fp_flux, fp_step, Advection, FaceDrift, FpGrid, LowerBoundary, StepReport, DRIFT_CFL};
pub use tridiag::solve_in_place as solve_tridiagonal;

use serde::{Deserialize, Serialize};

use crate::bins::TimeGrid;
use crate::detector::DetectorSpec;
use crate::error::{Error, Result};
use crate::field::VelocityField;
use crate::wavefunction::PacketSum;

/// ħ/2m in natural units.
pub const DIFFUSION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpParams {
    /// Grid spacing.
    pub dz: f64,
    /// Top of the domain; chosen from the cloud spread when absent.
    pub z_max: Option<f64>,
    /// Largest time step. The step is also bounded by the drift CFL limit.
    pub dt_cap: f64,
    /// Fixed step overriding the adaptive choice; must satisfy the CFL
    /// limit at every step.
    pub dt_fixed: Option<f64>,
    /// Faces whose quantum density falls below this fraction of the
    /// maximum are treated as node neighbourhoods and clamped.
    pub node_tol: f64,
}

impl FpParams {
    pub fn new(dz: f64, dt_cap: f64) -> Self {
        Self {
            dz,
            z_max: None,
            dt_cap,
            dt_fixed: None,
            node_tol: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dz.is_finite() && self.dz > 0.0) {
            return Err(Error::NonPositiveParameter("dz".into()));
        }
        if !(self.dt_cap.is_finite() && self.dt_cap > 0.0) {
            return Err(Error::NonPositiveParameter("dt_pde".into()));
        }
        if let Some(dt) = self.dt_fixed {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(Error::NonPositiveParameter("dt_pde".into()));
            }
        }
        if !(self.node_tol > 0.0 && self.node_tol < 1.0) {
            return Err(Error::InvalidConfig("node_tol must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Domain top that clears the cloud by 10σ plus seven spreads at `t_max`.
pub fn default_z_max(packets: &PacketSum, t_max: f64) -> f64 {
    let (_, hi) = packets.center_range();
    let sigma = packets.packets().iter().map(|p| p.sigma).fold(0.0, f64::max);
    hi + 10.0 * sigma + 7.0 * packets.max_width(t_max)
}

/// Grid holding ρ(z, 0) above the detector plane and zero on it.
pub fn fp_initialize(packets: &PacketSum, params: &FpParams, detector: &DetectorSpec, t_max: f64) -> Result<FpGrid> {
    params.validate()?;
    let z_max = params.z_max.unwrap_or_else(|| default_z_max(packets, t_max));
    if !(z_max > detector.plane) {
        return Err(Error::InvalidConfig(format!(
            "domain top {z_max} must lie above the detector plane {}",
            detector.plane
        )));
    }
    let n_nodes = ((z_max - detector.plane) / params.dz).ceil() as usize + 1;
    let grid = FpGrid::from_density(detector.plane, params.dz, n_nodes, LowerBoundary::Absorbing, |z| {
        packets.density(z, 0.0)
    })?;
    let density = packets.density(grid.z_max(), t_max);
    if density > 1e-12 {
        return Err(Error::DomainTooSmall {
            z_max: grid.z_max(),
            t: t_max,
            density,
        });
    }
    Ok(grid)
}

/// First-arrival flux history of a solver run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxSeries {
    pub t_start: f64,
    /// End time of each step.
    pub times: Vec<f64>,
    /// Mean flux over each step: absorbed mass divided by the step.
    pub flux: Vec<f64>,
    /// Absorbed mass up to each step end.
    pub cumulative: Vec<f64>,
    /// −D ∂ρ_L/∂z at each step end from the one-sided difference.
    pub gradient_flux: Vec<f64>,
    /// Mass left on the grid at the end.
    pub remaining: f64,
    pub clamped_faces: u64,
    pub flushed: f64,
}

impl FluxSeries {
    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    fn step_start(&self, k: usize) -> f64 {
        if k == 0 {
            self.t_start
        } else {
            self.times[k - 1]
        }
    }

    /// Mean flux per bin. Each step's absorbed mass is spread uniformly over
    /// the step, so the bin integrals add up to the absorbed mass exactly.
    pub fn binned(&self, grid: &TimeGrid) -> Vec<f64> {
        let mut mass = vec![0.0; grid.len()];
        let w = grid.width();
        for k in 0..self.times.len() {
            let (a, b) = (self.step_start(k), self.times[k]);
            let m = self.flux[k] * (b - a);
            if m == 0.0 || b <= grid.start() || a >= grid.end() {
                continue;
            }
            let first = grid.index(a.max(grid.start())).unwrap_or(0);
            let last = grid.index(b.min(grid.end())).unwrap_or(grid.len() - 1);
            for (j, slot) in mass.iter_mut().enumerate().take(last + 1).skip(first) {
                let lo = a.max(grid.edge(j));
                let hi = b.min(grid.edge(j + 1));
                if hi > lo {
                    *slot += m * (hi - lo) / (b - a);
                }
            }
        }
        mass.into_iter().map(|m| m / w).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensitySnapshot {
    pub t: f64,
    pub z: Vec<f64>,
    pub rho: Vec<f64>,
}

/// Advances `grid` to `t_end`, recording the flux at every step and ρ_L at
/// the requested times.
pub fn solve_first_arrival<F: VelocityField>(
    grid: &mut FpGrid,
    field: &F,
    params: &FpParams,
    t_end: f64,
    snapshot_times: &[f64],
) -> Result<(FluxSeries, Vec<DensitySnapshot>)> {
    params.validate()?;
    let mut targets: Vec<f64> = snapshot_times.iter().copied().filter(|&t| t > grid.time() && t < t_end).collect();
    targets.sort_by(f64::total_cmp);
    targets.push(t_end);
    let mut snapshots: Vec<DensitySnapshot> = snapshot_times
        .iter()
        .filter(|&&t| t <= grid.time())
        .map(|&t| snapshot(grid, t))
        .collect();

    let mut series = FluxSeries {
        t_start: grid.time(),
        times: Vec::new(),
        flux: Vec::new(),
        cumulative: Vec::new(),
        gradient_flux: Vec::new(),
        remaining: 0.0,
        clamped_faces: 0,
        flushed: 0.0,
    };
    let absorbed0 = grid.absorbed();
    let mut guess = params.dt_fixed.unwrap_or(params.dt_cap);
    for target in targets {
        while target - grid.time() > 1e-12 * target.abs().max(1.0) {
            let remaining = target - grid.time();
            let report = match params.dt_fixed {
                Some(dt) => fp_step(grid, field, dt.min(remaining), params.node_tol)?,
                None => adaptive_step(grid, field, params, guess.min(remaining))?,
            };
            guess = (0.95 * report.dt_limit).min(params.dt_cap);
            series.times.push(grid.time());
            series.flux.push(report.absorbed / report.dt);
            series.cumulative.push(grid.absorbed() - absorbed0);
            series.gradient_flux.push(fp_flux(grid));
        }
        if target < t_end {
            snapshots.push(snapshot(grid, target));
        }
    }
    if snapshot_times.iter().any(|&t| (t - t_end).abs() <= 1e-12 * t_end.abs().max(1.0)) {
        snapshots.push(snapshot(grid, t_end));
    }
    series.remaining = grid.mass();
    series.clamped_faces = grid.clamped_faces();
    series.flushed = grid.flushed();
    Ok((series, snapshots))
}

fn adaptive_step<F: VelocityField>(grid: &mut FpGrid, field: &F, params: &FpParams, mut dt: f64) -> Result<StepReport> {
    for _ in 0..30 {
        let drift = grid.evaluate_drift_for(field, grid.time() + 0.5 * dt, params.node_tol, dt);
        if dt <= drift.dt_limit {
            return grid.advance(dt);
        }
        dt = 0.9 * drift.dt_limit;
    }
    Err(Error::StabilityViolation {
        t: grid.time(),
        reason: "could not find a step satisfying the drift CFL limit".into(),
    })
}

fn snapshot(grid: &FpGrid, t: f64) -> DensitySnapshot {
    DensitySnapshot {
        t,
        z: (0..grid.rho().len()).map(|i| grid.z(i)).collect(),
        rho: grid.rho().to_vec(),
    }
}
