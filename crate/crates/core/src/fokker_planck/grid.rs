use crate::error::{Error, Result};
use crate::field::{Component, FieldAt, VelocityField};

use super::tridiag;
use super::DIFFUSION;

/// Densities below this, absolute or relative to the peak, are treated as
/// empty when deciding which faces need a drift evaluation.
const ACTIVE_RHO: f64 = 1e-200;
const ACTIVE_REL: f64 = 1e-40;
/// Values below this are flushed to zero after each step to keep the
/// arithmetic out of the subnormal range.
const FLUSH_RHO: f64 = 1e-250;
/// Tolerated roundoff below zero before a step counts as unstable.
const NEGATIVE_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LowerBoundary {
    /// Dirichlet zero at the detector plane.
    Absorbing,
    /// Zero flux, used for propagator checks without a detector.
    Reflecting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Advection {
    /// Second-order upwind with minmod-limited slopes.
    #[default]
    Muscl,
    /// First-order upwind. Linear in ρ, so the discrete propagator is an
    /// exact semigroup.
    Upwind,
}

/// Largest drift Courant number |b| dt / Δz for which the explicit drift
/// update keeps every cell non-negative.
pub const DRIFT_CFL: f64 = 0.5;

/// Node-based grid on [plane, z_max] carrying ρ_L.
///
/// Node 0 sits on the detector plane; the top node owns a half cell with a
/// zero-flux wall above it. With an absorbing boundary node 0 is pinned to
/// zero and mass crossing into it is counted as detected.
#[derive(Debug, Clone)]
pub struct FpGrid {
    z_min: f64,
    dz: f64,
    rho: Vec<f64>,
    t: f64,
    boundary: LowerBoundary,
    advection: Advection,
    absorbed: f64,
    flushed: f64,
    clamped_faces: u64,
    work: Workspace,
}

#[derive(Debug, Clone, Default)]
struct Workspace {
    drift: Vec<f64>,
    log_rho: Vec<f64>,
    constrains: Vec<bool>,
    slope: Vec<f64>,
    flux: Vec<f64>,
    stage: Vec<f64>,
    stage2: Vec<f64>,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    scratch: Vec<f64>,
}

/// Drift evaluated on the faces for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceDrift {
    /// Largest stable step from faces that are not near a node.
    pub dt_limit: f64,
    pub max_drift: f64,
    /// Position of the face that sets `dt_limit`.
    pub limiting_z: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub dt: f64,
    /// Mass that left through the plane during the step.
    pub absorbed: f64,
    pub clamped_faces: usize,
    pub dt_limit: f64,
}

impl FpGrid {
    /// Grid of `n_nodes` nodes starting at `z_min`, filled with `init(z)`.
    pub fn from_density(
        z_min: f64,
        dz: f64,
        n_nodes: usize,
        boundary: LowerBoundary,
        init: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        if !(dz.is_finite() && dz > 0.0) {
            return Err(Error::NonPositiveParameter("dz".into()));
        }
        if n_nodes < 4 {
            return Err(Error::InvalidConfig("Fokker-Planck grid needs at least 4 nodes".into()));
        }
        let mut rho: Vec<f64> = (0..n_nodes).map(|i| init(z_min + i as f64 * dz)).collect();
        if rho.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::InvalidConfig("initial density must be finite and non-negative".into()));
        }
        if boundary == LowerBoundary::Absorbing {
            rho[0] = 0.0;
        }
        Ok(Self {
            z_min,
            dz,
            rho,
            t: 0.0,
            boundary,
            advection: Advection::Muscl,
            absorbed: 0.0,
            flushed: 0.0,
            clamped_faces: 0,
            work: Workspace::default(),
        })
    }

    /// Unit mass on the node nearest `z0`.
    pub fn delta(z_min: f64, dz: f64, n_nodes: usize, boundary: LowerBoundary, z0: f64) -> Result<Self> {
        let k = ((z0 - z_min) / dz).round();
        if k < 1.0 || k >= (n_nodes - 1) as f64 {
            return Err(Error::InvalidConfig(format!("point {z0} is not an interior node")));
        }
        let k = k as usize;
        Self::from_density(z_min, dz, n_nodes, boundary, |_| 0.0).map(|mut g| {
            g.rho[k] = 1.0 / dz;
            g
        })
    }

    pub fn with_advection(mut self, advection: Advection) -> Self {
        self.advection = advection;
        self
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.t = t;
        self
    }

    pub fn z_min(&self) -> f64 {
        self.z_min
    }

    pub fn z_max(&self) -> f64 {
        self.z(self.rho.len() - 1)
    }

    pub fn dz(&self) -> f64 {
        self.dz
    }

    pub fn n_cells(&self) -> usize {
        self.rho.len() - 1
    }

    pub fn z(&self, i: usize) -> f64 {
        self.z_min + i as f64 * self.dz
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn rho_mut(&mut self) -> &mut [f64] {
        &mut self.rho
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn boundary(&self) -> LowerBoundary {
        self.boundary
    }

    /// Total mass absorbed at the plane so far.
    pub fn absorbed(&self) -> f64 {
        self.absorbed
    }

    /// Mass discarded by flushing subnormal values and clipping roundoff.
    pub fn flushed(&self) -> f64 {
        self.flushed
    }

    pub fn clamped_faces(&self) -> u64 {
        self.clamped_faces
    }

    fn cell_weight(&self, i: usize) -> f64 {
        let last = self.rho.len() - 1;
        if i == last || (i == 0 && self.boundary == LowerBoundary::Reflecting) {
            0.5
        } else {
            1.0
        }
    }

    /// ∫ρ_L dz with the trapezoidal cell weights of the scheme.
    pub fn mass(&self) -> f64 {
        self.rho
            .iter()
            .enumerate()
            .map(|(i, r)| self.cell_weight(i) * r)
            .sum::<f64>()
            * self.dz
    }

    pub fn moments(&self) -> (f64, f64) {
        let m = self.mass();
        let mean = (0..self.rho.len())
            .map(|i| self.cell_weight(i) * self.rho[i] * self.z(i))
            .sum::<f64>()
            * self.dz
            / m;
        let var = (0..self.rho.len())
            .map(|i| self.cell_weight(i) * self.rho[i] * (self.z(i) - mean).powi(2))
            .sum::<f64>()
            * self.dz
            / m;
        (mean, var)
    }

    /// Evaluates the forward drift at the faces at time `t_mid`.
    ///
    /// Faces whose reference density is below `node_tol` times the largest
    /// face density sit next to a node; they do not limit the step and get
    /// clamped instead.
    pub fn evaluate_drift<F: VelocityField>(&mut self, field: &F, t_mid: f64, node_tol: f64) -> FaceDrift {
        self.evaluate_drift_for(field, t_mid, node_tol, 0.0)
    }

    /// As [`evaluate_drift`] for a step of length `dt`, which widens the
    /// range of evaluated faces by the distance diffusion reaches in one step.
    ///
    /// [`evaluate_drift`]: FpGrid::evaluate_drift
    pub fn evaluate_drift_for<F: VelocityField>(&mut self, field: &F, t_mid: f64, node_tol: f64, dt: f64) -> FaceDrift {
        let n = self.rho.len();
        let slice = field.at(t_mid);
        let w = &mut self.work;
        w.drift.clear();
        w.drift.resize(n - 1, 0.0);
        w.log_rho.clear();
        w.log_rho.resize(n - 1, f64::NAN);
        w.constrains.clear();
        w.constrains.resize(n - 1, true);
        // Faces outside the occupied range carry no flux. Diffusion within
        // the step decays like exp(−x/√(D dt)), so 40 of those lengths put
        // the first skipped face far below roundoff.
        let margin = 8 + (40.0 * (DIFFUSION * dt).sqrt() / self.dz).ceil() as usize;
        let peak = self.rho.iter().copied().fold(0.0, f64::max);
        let floor = ACTIVE_RHO.max(ACTIVE_REL * peak);
        let first = self.rho.iter().position(|&r| r > floor);
        let last = self.rho.iter().rposition(|&r| r > floor);
        let (lo, hi) = match (first, last) {
            (Some(a), Some(b)) => (a.saturating_sub(margin), (b + margin).min(n - 2)),
            _ => (1, 0),
        };
        let mut max_log = f64::NEG_INFINITY;
        for i in lo..=hi {
            let z = self.z_min + (i as f64 + 0.5) * self.dz;
            let (vel, log_rho) = slice.velocity_and_log_density(z);
            match vel {
                Some(v) => {
                    w.drift[i] = Component::Forward.of(v);
                    w.log_rho[i] = log_rho.unwrap_or(f64::NAN);
                }
                None => {
                    w.drift[i] = f64::INFINITY;
                    w.log_rho[i] = f64::NEG_INFINITY;
                }
            }
            if let Some(l) = log_rho {
                max_log = max_log.max(l);
            }
        }
        let cutoff = max_log + node_tol.ln();
        let mut max_b: f64 = 0.0;
        let mut limiting = None;
        for i in 0..n - 1 {
            // NaN log density means the field carries none: always constrain.
            let near_node = w.log_rho[i] < cutoff;
            w.constrains[i] = !near_node;
            if !near_node && w.drift[i].is_finite() && w.drift[i].abs() > max_b {
                max_b = w.drift[i].abs();
                limiting = Some(self.z_min + (i as f64 + 0.5) * self.dz);
            }
        }
        FaceDrift {
            dt_limit: if max_b > 0.0 {
                DRIFT_CFL * self.dz / max_b
            } else {
                f64::INFINITY
            },
            max_drift: max_b,
            limiting_z: limiting,
        }
    }

    /// Advances by `dt` with the drift from the last [`evaluate_drift`].
    ///
    /// Constraining faces must satisfy the drift CFL bound, otherwise a
    /// `StabilityViolation` is returned and the grid is left untouched.
    ///
    /// [`evaluate_drift`]: FpGrid::evaluate_drift
    pub fn advance(&mut self, dt: f64) -> Result<StepReport> {
        let n = self.rho.len();
        let dz = self.dz;
        let bound = DRIFT_CFL * dz / dt;
        let t = self.t;
        let w = &mut self.work;
        if w.drift.len() != n - 1 {
            return Err(Error::StabilityViolation {
                t,
                reason: "drift was not evaluated for this grid".into(),
            });
        }
        let mut clamped = 0;
        let mut dt_limit = f64::INFINITY;
        for i in 0..n - 1 {
            let b = w.drift[i];
            if w.constrains[i] && b.is_finite() {
                if b.abs() > 0.0 {
                    dt_limit = dt_limit.min(DRIFT_CFL * dz / b.abs());
                }
                if b.abs() > bound * (1.0 + 1e-12) {
                    return Err(Error::StabilityViolation {
                        t,
                        reason: format!(
                            "drift Courant number {:.3} exceeds {DRIFT_CFL} at z = {:.4} (dt_pde = {dt:.3e}, limit {:.3e})",
                            b.abs() * dt / dz,
                            self.z_min + (i as f64 + 0.5) * dz,
                            DRIFT_CFL * dz / b.abs()
                        ),
                    });
                }
            } else if !b.is_finite() {
                w.drift[i] = 0.0;
                clamped += 1;
            } else if b.abs() > bound {
                w.drift[i] = b.clamp(-bound, bound);
                clamped += 1;
            }
        }

        // Strang splitting: half diffusion, drift, half diffusion. The drift
        // uses two forward-Euler stages (SSP-RK2), each positive under the
        // CFL bound, which removes the b²dt/2 anti-diffusion of one stage.
        let absorbing = self.boundary == LowerBoundary::Absorbing;
        let mut absorbed = diffuse(&mut self.rho, 0.5 * dt, dz, absorbing, w);
        w.stage.resize(n, 0.0);
        w.stage2.resize(n, 0.0);
        let a1 = advect(&self.rho, &mut w.stage, &w.drift, &mut w.slope, &mut w.flux, dt, dz, absorbing, self.advection);
        let a2 = advect(&w.stage, &mut w.stage2, &w.drift, &mut w.slope, &mut w.flux, dt, dz, absorbing, self.advection);
        for (r, s2) in self.rho.iter_mut().zip(&w.stage2) {
            *r = 0.5 * (*r + s2);
        }
        absorbed += 0.5 * (a1 + a2);
        absorbed += diffuse(&mut self.rho, 0.5 * dt, dz, absorbing, w);

        let weight = |i: usize| if i == n - 1 || (i == 0 && !absorbing) { 0.5 } else { 1.0 };
        let mut flushed = 0.0;
        for i in 0..n {
            let r = self.rho[i];
            if !(r >= 0.0) {
                if r > -NEGATIVE_TOL {
                    flushed += r * weight(i) * dz;
                    self.rho[i] = 0.0;
                } else {
                    return Err(Error::StabilityViolation {
                        t,
                        reason: format!("density {r:.3e} at z = {:.4} after step", self.z_min + i as f64 * dz),
                    });
                }
            } else if r < FLUSH_RHO && r > 0.0 {
                flushed += r * weight(i) * dz;
                self.rho[i] = 0.0;
            }
        }
        self.absorbed += absorbed;
        self.flushed += flushed;
        self.clamped_faces += clamped as u64;
        self.t += dt;
        Ok(StepReport {
            dt,
            absorbed,
            clamped_faces: clamped,
            dt_limit,
        })
    }
}

/// Backward-Euler diffusion over `dt`; returns the mass absorbed at node 0.
fn diffuse(rho: &mut [f64], dt: f64, dz: f64, absorbing: bool, w: &mut Workspace) -> f64 {
    let n = rho.len();
    let lam = DIFFUSION * dt / (dz * dz);
    let first = usize::from(absorbing);
    let m = n - first;
    w.lower.resize(m, 0.0);
    w.diag.resize(m, 0.0);
    w.upper.resize(m, 0.0);
    w.scratch.resize(m, 0.0);
    w.lower.fill(-lam);
    w.diag.fill(1.0 + 2.0 * lam);
    w.upper.fill(-lam);
    w.lower[m - 1] = -2.0 * lam;
    if !absorbing {
        w.upper[0] = -2.0 * lam;
    }
    tridiag::solve_in_place(&w.lower, &w.diag, &w.upper, &mut rho[first..], &mut w.scratch);
    if absorbing {
        dt * DIFFUSION * rho[1] / dz
    } else {
        0.0
    }
}

/// One forward-Euler drift stage from `src` into `dst` in flux form;
/// returns the mass that crossed into node 0 on an absorbing grid.
#[allow(clippy::too_many_arguments)]
fn advect(
    src: &[f64],
    dst: &mut [f64],
    drift: &[f64],
    slope: &mut Vec<f64>,
    flux: &mut Vec<f64>,
    dt: f64,
    dz: f64,
    absorbing: bool,
    advection: Advection,
) -> f64 {
    let n = src.len();
    slope.resize(n, 0.0);
    slope[0] = 0.0;
    slope[n - 1] = 0.0;
    for i in 1..n - 1 {
        slope[i] = match advection {
            Advection::Upwind => 0.0,
            Advection::Muscl => minmod(src[i] - src[i - 1], src[i + 1] - src[i]),
        };
    }
    flux.resize(n - 1, 0.0);
    for i in 0..n - 1 {
        let b = drift[i];
        flux[i] = if b > 0.0 {
            b * (src[i] + 0.5 * slope[i])
        } else if b < 0.0 {
            b * (src[i + 1] - 0.5 * slope[i + 1])
        } else {
            0.0
        };
    }
    let c = dt / dz;
    for i in 1..n - 1 {
        dst[i] = src[i] - c * (flux[i] - flux[i - 1]);
    }
    dst[n - 1] = src[n - 1] + 2.0 * c * flux[n - 2];
    if absorbing {
        dst[0] = 0.0;
        -dt * flux[0]
    } else {
        dst[0] = src[0] - 2.0 * c * flux[0];
        0.0
    }
}

#[inline]
fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// One step of fixed size `dt` with drift frozen at the mid-step time.
pub fn fp_step<F: VelocityField>(grid: &mut FpGrid, field: &F, dt: f64, node_tol: f64) -> Result<StepReport> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::NonPositiveParameter("dt_pde".into()));
    }
    grid.evaluate_drift_for(field, grid.time() + 0.5 * dt, node_tol, dt);
    grid.advance(dt)
}

/// −D ∂ρ_L/∂z at the plane from the one-sided second-order difference.
pub fn fp_flux(grid: &FpGrid) -> f64 {
    if grid.boundary != LowerBoundary::Absorbing {
        return 0.0;
    }
    let r = grid.rho();
    DIFFUSION * (-3.0 * r[0] + 4.0 * r[1] - r[2]) / (2.0 * grid.dz())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::UniformField;
    use approx::assert_relative_eq;

    fn gaussian(mean: f64, var: f64) -> impl Fn(f64) -> f64 {
        move |z| (-(z - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    }

    #[test]
    fn zero_grid_has_zero_flux() {
        let g = FpGrid::from_density(0.0, 0.1, 50, LowerBoundary::Absorbing, |_| 0.0).unwrap();
        assert_eq!(fp_flux(&g), 0.0);
    }

    #[test]
    fn heat_kernel_variance() {
        let dz = 0.02;
        let mut g = FpGrid::from_density(-15.0, dz, 1501, LowerBoundary::Reflecting, gaussian(0.0, 1.0)).unwrap();
        let dt = 1e-3;
        for _ in 0..1000 {
            fp_step(&mut g, &UniformField::zero(), dt, 1e-3).unwrap();
        }
        let (_, var) = g.moments();
        assert_relative_eq!(var, 1.0 + 2.0 * DIFFUSION * 1.0, max_relative = 5e-3);
        assert_relative_eq!(g.mass(), 1.0, max_relative = 1e-10);
    }

    #[test]
    fn discrete_mass_balance() {
        let field = crate::wavefunction::PacketSum::single(1.0);
        let mut g = FpGrid::from_density(-3.0, 0.05, 400, LowerBoundary::Absorbing, |z| field.density(z, 0.0)).unwrap();
        let mut mass = g.mass();
        for _ in 0..400 {
            let rep = fp_step(&mut g, &field, 0.005, 1e-3).unwrap();
            let now = g.mass();
            assert!((mass - now - rep.absorbed).abs() < 1e-10);
            assert!(rep.absorbed >= 0.0);
            mass = now;
        }
        assert!(g.rho().iter().all(|&r| r >= 0.0));
        assert_eq!(g.rho()[0], 0.0);
    }

    #[test]
    fn oversized_step_is_rejected() {
        let mut g = FpGrid::from_density(0.0, 0.1, 100, LowerBoundary::Absorbing, gaussian(5.0, 1.0)).unwrap();
        let before = g.rho().to_vec();
        let err = fp_step(&mut g, &UniformField::drift(-3.0), 0.1, 1e-3).unwrap_err();
        assert!(matches!(err, Error::StabilityViolation { .. }));
        assert_eq!(g.rho(), &before[..]);
    }

    #[test]
    fn drift_translates_mass() {
        let mut g = FpGrid::from_density(-20.0, 0.02, 2001, LowerBoundary::Reflecting, gaussian(0.0, 1.0)).unwrap();
        for _ in 0..500 {
            fp_step(&mut g, &UniformField::drift(2.0), 0.004, 1e-3).unwrap();
        }
        let (mean, var) = g.moments();
        assert_relative_eq!(mean, 4.0, epsilon = 2e-3);
        assert_relative_eq!(var, 1.0 + 2.0 * DIFFUSION * 2.0, max_relative = 1e-2);
    }
}
