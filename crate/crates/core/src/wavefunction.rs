//! Freely expanding Gaussian wave packets and the kinematic fields derived
//! from them.
//!
//! A packet of initial width σ centred at c evolves as
//!
//! ```text
//! G(x, t) = exp(-(x - c)² / (4σ s_t)) / (2π s_t²)^{1/4},   s_t = σ + i t / (2σ)
//! ```
//!
//! in natural units. The complex velocity 𝒱 = ∂ₓ ln ψ is evaluated in closed
//! form from the packet sum, so no numerical differentiation is involved.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{FieldAt, VelocityField};
use crate::units::PhysicsParams;

/// Densities below this value are treated as nodes of ψ.
pub const RHO_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPacket {
    pub sigma: f64,
    pub center: f64,
    pub weight: Complex64,
}

impl GaussianPacket {
    pub fn new(sigma: f64, center: f64, weight: Complex64) -> Self {
        Self {
            sigma,
            center,
            weight,
        }
    }

    pub fn unit(sigma: f64, center: f64) -> Self {
        Self::new(sigma, center, Complex64::new(1.0, 0.0))
    }

    pub fn s(&self, t: f64) -> Complex64 {
        Complex64::new(self.sigma, t / (2.0 * self.sigma))
    }

    /// Density width |s_t| at time `t`.
    pub fn width(&self, t: f64) -> f64 {
        self.s(t).norm()
    }

    /// Unweighted amplitude G_σ(x − c, t).
    pub fn amplitude(&self, x: f64, t: f64) -> Complex64 {
        let term = SliceTerm::new(&GaussianPacket { weight: Complex64::new(1.0, 0.0), ..*self }, t);
        term.log_amplitude(x).exp()
    }

    /// ⟨G_self|G_other⟩ at t = 0 (preserved by free evolution).
    fn overlap(&self, other: &GaussianPacket) -> f64 {
        let (s1, s2) = (self.sigma * self.sigma, other.sigma * other.sigma);
        let dc = self.center - other.center;
        (2.0 * self.sigma * other.sigma / (s1 + s2)).sqrt() * (-dc * dc / (4.0 * (s1 + s2))).exp()
    }
}

/// Weighted sum of packets along one axis, normalised to unit norm.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketSum {
    packets: Vec<GaussianPacket>,
    norm: f64,
}

impl PacketSum {
    pub fn new(packets: Vec<GaussianPacket>) -> Result<Self> {
        if packets.is_empty() {
            return Err(Error::InvalidConfig("a packet sum needs at least one packet".into()));
        }
        for p in &packets {
            if !(p.sigma.is_finite() && p.sigma > 0.0) {
                return Err(Error::NonPositiveParameter("sigma".into()));
            }
            if !p.center.is_finite() || !p.weight.is_finite() {
                return Err(Error::InvalidConfig("packet center and weight must be finite".into()));
            }
        }
        let mut norm_sq = Complex64::new(0.0, 0.0);
        for a in &packets {
            for b in &packets {
                norm_sq += a.weight.conj() * b.weight * a.overlap(b);
            }
        }
        if !(norm_sq.re > 0.0) {
            return Err(Error::InvalidConfig("packet sum has zero norm".into()));
        }
        Ok(Self {
            packets,
            norm: 1.0 / norm_sq.re.sqrt(),
        })
    }

    pub fn single(sigma: f64) -> Self {
        Self::new(vec![GaussianPacket::unit(sigma, 0.0)]).expect("valid single packet")
    }

    /// Two equal-weight packets at ±d. The overlap term enters the
    /// normalisation exactly.
    pub fn double(sigma: f64, d: f64) -> Self {
        let w = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self::new(vec![
            GaussianPacket::new(sigma, d, w),
            GaussianPacket::new(sigma, -d, w),
        ])
        .expect("valid double packet")
    }

    pub fn packets(&self) -> &[GaussianPacket] {
        &self.packets
    }

    /// Global real factor multiplying the weighted packet sum.
    pub fn normalization(&self) -> f64 {
        self.norm
    }

    pub fn slice(&self, t: f64) -> FieldSlice {
        FieldSlice {
            t,
            log_norm: self.norm.ln(),
            terms: self
                .packets
                .iter()
                .filter(|p| p.weight != Complex64::new(0.0, 0.0))
                .map(|p| SliceTerm::new(p, t))
                .collect(),
        }
    }

    pub fn psi(&self, x: f64, t: f64) -> Complex64 {
        self.slice(t).psi(x)
    }

    pub fn density(&self, x: f64, t: f64) -> f64 {
        self.slice(t).density(x)
    }

    pub fn kinematics(&self, x: f64, t: f64) -> Result<KinematicsSample> {
        self.slice(t).kinematics(x)
    }

    /// Largest packet width |s_t| at time `t`.
    pub fn max_width(&self, t: f64) -> f64 {
        self.packets.iter().map(|p| p.width(t)).fold(0.0, f64::max)
    }

    pub fn min_width(&self, t: f64) -> f64 {
        self.packets
            .iter()
            .map(|p| p.width(t))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn center_range(&self) -> (f64, f64) {
        self.packets.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.center), hi.max(p.center))
        })
    }

    /// Shortest interference fringe spacing among overlapping packet pairs,
    /// or `None` for a single packet.
    pub fn fringe_spacing(&self, t: f64) -> Option<f64> {
        let mut best: Option<f64> = None;
        for (i, a) in self.packets.iter().enumerate() {
            for b in &self.packets[i + 1..] {
                let dc = (a.center - b.center).abs();
                if dc == 0.0 || t <= 0.0 {
                    continue;
                }
                let sigma = 0.5 * (a.sigma + b.sigma);
                let s2 = sigma * sigma + t * t / (4.0 * sigma * sigma);
                let spacing = 8.0 * PI * sigma * sigma * s2 / (dc * t);
                best = Some(best.map_or(spacing, |x: f64| x.min(spacing)));
            }
        }
        best
    }
}

impl VelocityField for PacketSum {
    type Slice = FieldSlice;

    fn at(&self, t: f64) -> FieldSlice {
        self.slice(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct SliceTerm {
    center: f64,
    /// ln w − ¼ ln(2π) − ½ ln s_t, principal branches.
    log_pref: Complex64,
    /// Exponent coefficient −1/(4σ s_t).
    exp_coef: Complex64,
    /// Gradient coefficient −1/(2σ s_t).
    grad_coef: Complex64,
}

impl SliceTerm {
    fn new(p: &GaussianPacket, t: f64) -> Self {
        let s = p.s(t);
        // Re s_t = σ > 0, so s_t stays in the right half-plane and the
        // principal square root is continuous in t.
        assert!(s.re > 0.0, "s_t must have a positive real part");
        let inv = s.inv();
        Self {
            center: p.center,
            log_pref: p.weight.ln() - 0.25 * (2.0 * PI).ln() - 0.5 * s.ln(),
            exp_coef: -inv / (4.0 * p.sigma),
            grad_coef: -inv / (2.0 * p.sigma),
        }
    }

    #[inline]
    fn log_amplitude(&self, x: f64) -> Complex64 {
        let dx = x - self.center;
        self.log_pref + self.exp_coef * (dx * dx)
    }
}

/// All packet constants of a [`PacketSum`] frozen at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSlice {
    t: f64,
    log_norm: f64,
    terms: Vec<SliceTerm>,
}

/// ψ at one point, kept in factored form to avoid overflow.
#[derive(Debug, Clone, Copy)]
struct Evaluated {
    /// Log amplitude of the dominant packet, including normalisation.
    log_lead: Complex64,
    /// Packet sum divided by the dominant packet.
    ratio_sum: Complex64,
    /// Weighted gradient sum divided by the dominant packet.
    grad_sum: Complex64,
    /// Σ|ratio| over all packets, the scale of rounding in `ratio_sum`.
    ratio_abs: f64,
}

impl Evaluated {
    #[inline]
    fn log_density(&self) -> f64 {
        2.0 * self.log_lead.re + self.ratio_sum.norm_sqr().ln()
    }

    #[inline]
    fn is_node(&self) -> bool {
        // Fast accept before falling back to the exact log test.
        let lead = 2.0 * self.log_lead.re;
        let r2 = self.ratio_sum.norm_sqr();
        let noise = 64.0 * f64::EPSILON * self.ratio_abs;
        if lead > -600.0 && r2 > 1e-24 {
            return false;
        }
        // Cancellation down to rounding level is an exact node.
        r2 <= noise * noise || !(self.log_density() >= RHO_FLOOR.ln())
    }
}

impl FieldSlice {
    pub fn time(&self) -> f64 {
        self.t
    }

    #[inline]
    fn evaluate(&self, x: f64) -> Evaluated {
        if let [only] = self.terms.as_slice() {
            return Evaluated {
                log_lead: only.log_amplitude(x) + self.log_norm,
                ratio_sum: Complex64::new(1.0, 0.0),
                grad_sum: only.grad_coef * (x - only.center),
                ratio_abs: 1.0,
            };
        }
        let mut lead = 0;
        let mut lead_log = Complex64::new(f64::NEG_INFINITY, 0.0);
        let mut stack = [Complex64::new(0.0, 0.0); 8];
        let mut heap;
        let logs: &mut [Complex64] = if self.terms.len() <= stack.len() {
            &mut stack[..self.terms.len()]
        } else {
            heap = vec![Complex64::new(0.0, 0.0); self.terms.len()];
            &mut heap
        };
        for (k, term) in self.terms.iter().enumerate() {
            logs[k] = term.log_amplitude(x);
            if logs[k].re > lead_log.re {
                lead_log = logs[k];
                lead = k;
            }
        }
        let lead_term = &self.terms[lead];
        let mut ratio_sum = Complex64::new(1.0, 0.0);
        let mut ratio_abs = 1.0;
        let mut grad_sum = lead_term.grad_coef * (x - lead_term.center);
        for (k, term) in self.terms.iter().enumerate() {
            if k == lead {
                continue;
            }
            let r = (logs[k] - lead_log).exp();
            ratio_sum += r;
            ratio_abs += r.norm();
            grad_sum += r * (term.grad_coef * (x - term.center));
        }
        Evaluated {
            log_lead: lead_log + self.log_norm,
            ratio_sum,
            grad_sum,
            ratio_abs,
        }
    }

    pub fn psi(&self, x: f64) -> Complex64 {
        let e = self.evaluate(x);
        e.log_lead.exp() * e.ratio_sum
    }

    pub fn density(&self, x: f64) -> f64 {
        self.evaluate(x).log_density().exp()
    }

    /// 𝒱 = ∂ₓ ln ψ in natural units.
    pub fn complex_velocity(&self, x: f64) -> Result<Complex64> {
        let e = self.evaluate(x);
        if e.is_node() {
            return Err(Error::NodeSingularity { z: x, t: self.t });
        }
        Ok(e.grad_sum / e.ratio_sum)
    }

    pub fn kinematics(&self, x: f64) -> Result<KinematicsSample> {
        let e = self.evaluate(x);
        if e.is_node() {
            return Err(Error::NodeSingularity { z: x, t: self.t });
        }
        let vel = e.grad_sum / e.ratio_sum;
        Ok(KinematicsSample::new(e.log_density().exp(), vel.re, vel.im))
    }

    /// Probability current j = ρ v, zero at nodes.
    pub fn current(&self, x: f64) -> f64 {
        self.kinematics(x).map_or(0.0, |k| k.j)
    }
}

impl FieldAt for FieldSlice {
    #[inline]
    fn velocity(&self, z: f64) -> Option<Complex64> {
        self.complex_velocity(z).ok()
    }

    fn log_density(&self, z: f64) -> Option<f64> {
        Some(self.evaluate(z).log_density())
    }

    #[inline]
    fn velocity_and_log_density(&self, z: f64) -> (Option<Complex64>, Option<f64>) {
        let e = self.evaluate(z);
        let vel = (!e.is_node()).then(|| e.grad_sum / e.ratio_sum);
        (vel, Some(e.log_density()))
    }
}

/// Density, velocities and currents at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicsSample {
    pub rho: f64,
    /// Osmotic velocity, Re 𝒱.
    pub u: f64,
    /// Average velocity, Im 𝒱.
    pub v: f64,
    pub b: f64,
    pub b_star: f64,
    pub j: f64,
    pub i: f64,
    pub j_fwd: f64,
    pub j_bwd: f64,
}

impl KinematicsSample {
    pub fn new(rho: f64, u: f64, v: f64) -> Self {
        let b = v + u;
        let b_star = v - u;
        Self {
            rho,
            u,
            v,
            b,
            b_star,
            j: rho * v,
            i: rho * u,
            j_fwd: rho * b,
            j_bwd: rho * b_star,
        }
    }
}

/// Separable three-dimensional wave function ψ = ψ_x ψ_y ψ_z.
#[derive(Debug, Clone, PartialEq)]
pub struct WavefunctionSpec {
    pub z: PacketSum,
    pub x: PacketSum,
    pub y: PacketSum,
}

impl WavefunctionSpec {
    /// Ground state of a single harmonic well, in natural units.
    pub fn single_well(params: &PhysicsParams) -> Self {
        let p = params.to_internal();
        Self {
            z: PacketSum::single(1.0),
            x: PacketSum::single(p.sigma_x),
            y: PacketSum::single(p.sigma_y),
        }
    }

    /// Symmetric superposition of two wells at z = ±d, in natural units.
    pub fn double_well(params: &PhysicsParams) -> Self {
        let p = params.to_internal();
        Self {
            z: PacketSum::double(1.0, p.d),
            x: PacketSum::single(p.sigma_x),
            y: PacketSum::single(p.sigma_y),
        }
    }

    /// Picks single or double well from whether d vanishes.
    pub fn from_params(params: &PhysicsParams) -> Self {
        if params.d > 0.0 {
            Self::double_well(params)
        } else {
            Self::single_well(params)
        }
    }

    pub fn psi(&self, pos: [f64; 3], t: f64) -> Complex64 {
        self.x.psi(pos[0], t) * self.y.psi(pos[1], t) * self.z.psi(pos[2], t)
    }

    pub fn psi_z(&self, z: f64, t: f64) -> Complex64 {
        self.z.psi(z, t)
    }
}

impl VelocityField for WavefunctionSpec {
    type Slice = FieldSlice;

    fn at(&self, t: f64) -> FieldSlice {
        self.z.slice(t)
    }
}

/// ∂ρ/∂t + ∂ₓj by central differences with step `h` in both x and t.
///
/// Only meant as a test oracle for the analytic fields.
pub fn continuity_residual(x: f64, t: f64, packets: &PacketSum, h: f64) -> f64 {
    let drho_dt = (packets.density(x, t + h) - packets.density(x, t - h)) / (2.0 * h);
    let slice = packets.slice(t);
    let dj_dx = (slice.current(x + h) - slice.current(x - h)) / (2.0 * h);
    drho_dt + dj_dx
}
