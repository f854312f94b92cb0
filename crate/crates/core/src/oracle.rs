//! Independent checks of the simulator against closed-form results.
//!
//! Each check compares one route against a result that does not share its
//! numerics: the Lévy first-passage law of free diffusion, |ψ|² for
//! snapshot histograms, the continuity equation, the semigroup property of
//! the solver and the run-to-run determinism of the ensembles.

use std::time::Instant;

use serde::Serialize;
use statrs::function::erf::erfc;

use crate::detector::{DetectorMode, DetectorSpec};
use crate::error::Result;
use crate::field::UniformField;
use crate::fokker_planck::propagator::{chain_rule_discrepancy, normalization_drift, PropagatorGrid};
use crate::fokker_planck::{solve_first_arrival, Advection, FpGrid, FpParams, LowerBoundary, DIFFUSION};
use crate::stats::{chi_square, histogram, interval_mean};
use crate::trajectories::{run_ensemble, CrossingCorrection, InitialDistribution, Scheme, TrajectoryConfig};
use crate::wavefunction::{continuity_residual, PacketSum};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCheck {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    /// True when `value` must stay below `limit`, false when above.
    pub upper: bool,
    pub passed: bool,
    pub seconds: f64,
}

impl OracleCheck {
    fn below(name: &str, value: f64, limit: f64, started: Instant) -> Self {
        Self {
            name: name.into(),
            value,
            limit,
            upper: true,
            passed: value < limit,
            seconds: started.elapsed().as_secs_f64(),
        }
    }

    fn above(name: &str, value: f64, limit: f64, started: Instant) -> Self {
        Self {
            name: name.into(),
            value,
            limit,
            upper: false,
            passed: value > limit,
            seconds: started.elapsed().as_secs_f64(),
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {:.4e} {} {:.1e} ({:.1} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            if self.upper { "<" } else { ">" },
            self.limit,
            self.seconds
        )
    }
}

/// First-passage density of free diffusion from height `z0` above the plane.
pub fn levy_density(z0: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    z0 / (4.0 * std::f64::consts::PI * DIFFUSION * t.powi(3)).sqrt() * (-z0 * z0 / (4.0 * DIFFUSION * t)).exp()
}

/// Probability of having hit the plane by `t`.
pub fn levy_cdf(z0: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    erfc(z0 / (4.0 * DIFFUSION * t).sqrt())
}

/// Solver flux from a point start against the Lévy density, compared as
/// step means. Returns (L∞ error / peak, relative error of the peak value).
pub fn levy_fp(z0: f64, dz: f64, dt: f64, t_end: f64) -> Result<(f64, f64)> {
    let n_nodes = ((z0 + 12.0 * (DIFFUSION * t_end).sqrt() + 4.0) / dz).ceil() as usize;
    let mut grid = FpGrid::delta(0.0, dz, n_nodes, LowerBoundary::Absorbing, z0)?;
    let mut params = FpParams::new(dz, dt);
    params.dt_fixed = Some(dt);
    let (series, _) = solve_first_arrival(&mut grid, &UniformField::zero(), &params, t_end, &[])?;
    let t_peak = z0 * z0 / (6.0 * DIFFUSION);
    let peak = levy_density(z0, t_peak);
    let mut worst: f64 = 0.0;
    let mut start = series.t_start;
    for (&t, &f) in series.times.iter().zip(&series.flux) {
        let exact = (levy_cdf(z0, t) - levy_cdf(z0, start)) / (t - start);
        worst = worst.max((f - exact).abs());
        start = t;
    }
    // Peak of the pointwise gradient flux, located by parabolic fit.
    let k = (0..series.gradient_flux.len())
        .max_by(|&a, &b| series.gradient_flux[a].total_cmp(&series.gradient_flux[b]))
        .unwrap_or(0);
    let fitted = if k > 0 && k + 1 < series.gradient_flux.len() {
        let (a, b, c) = (series.gradient_flux[k - 1], series.gradient_flux[k], series.gradient_flux[k + 1]);
        b - (a - c).powi(2) / (8.0 * (a - 2.0 * b + c))
    } else {
        series.gradient_flux[k]
    };
    Ok((worst / peak, (fitted - peak).abs() / peak))
}

/// Kolmogorov-Smirnov distance between bridge-corrected first-passage
/// times and the Lévy law. Trajectories still alive at `t_max` count as
/// arrivals at infinity.
pub fn levy_bridge_ks(n: usize, z0: f64, dt: f64, t_max: f64, seed: u64) -> Result<f64> {
    let mut cfg = TrajectoryConfig::new(n, dt, t_max, seed, Scheme::Stochastic);
    cfg.crossing_correction = CrossingCorrection::BrownianBridge;
    let det = DetectorSpec::new(0.0, DetectorMode::FirstArrival);
    let r = run_ensemble(&cfg, &UniformField::zero(), &InitialDistribution::Point(z0), Some(&det))?;
    let mut times = r.arrival_times();
    times.sort_by(f64::total_cmp);
    let total = n as f64;
    let mut d: f64 = 0.0;
    for (i, &t) in times.iter().enumerate() {
        let f = levy_cdf(z0, t);
        d = d.max((f - i as f64 / total).abs()).max((f - (i + 1) as f64 / total).abs());
    }
    Ok(d.max((levy_cdf(z0, r.t_end) - times.len() as f64 / total).abs()))
}

/// Smallest chi-square p-value of snapshot histograms against |ψ|² over
/// the given times, for one scheme.
pub fn equivariance_p(packets: &PacketSum, scheme: Scheme, n: usize, dt: f64, times: &[f64], seed: u64) -> Result<f64> {
    const BINS: usize = 50;
    let t_max = times.iter().copied().fold(0.0, f64::max);
    let mut cfg = TrajectoryConfig::new(n, dt, t_max, seed, scheme);
    cfg.snapshot_times = times.to_vec();
    let r = run_ensemble(&cfg, packets, &InitialDistribution::Packets(packets.clone()), None)?;
    let (c_lo, c_hi) = packets.center_range();
    let mut worst: f64 = 1.0;
    for snap in &r.snapshots {
        let w = packets.max_width(snap.t);
        let (lo, hi) = (c_lo - 5.0 * w, c_hi + 5.0 * w);
        let counts = histogram(&snap.z, lo, hi, BINS);
        let width = (hi - lo) / BINS as f64;
        let expected: Vec<f64> = (0..BINS)
            .map(|k| {
                let a = lo + k as f64 * width;
                n as f64 * width * interval_mean(|z| packets.density(z, snap.t), a, a + width, 4)
            })
            .collect();
        worst = worst.min(chi_square(&counts, &expected, 5.0).p_value);
    }
    Ok(worst)
}

/// Largest |∂ₜρ + ∂_z j| relative to max(ρω) over a point cloud.
pub fn continuity_worst(packets: &PacketSum, points: &[(f64, f64)], h: f64) -> f64 {
    points
        .iter()
        .map(|&(z, t)| {
            let scale = packets.density(packets.center_range().1, t).max(packets.density(0.0, t)) * 0.5;
            continuity_residual(z, t, packets, h).abs() / scale.max(1e-300)
        })
        .fold(0.0, f64::max)
}

/// Largest difference between two ensembles run on pools of one and four
/// threads; zero when bit-identical.
pub fn thread_determinism(n: usize, seed: u64) -> Result<bool> {
    let packets = PacketSum::double(1.0, 3.0);
    let det = DetectorSpec::new(-6.0, DetectorMode::FirstArrival);
    let mut cfg = TrajectoryConfig::new(n, 1.0 / 200.0, 8.0, seed, Scheme::Stochastic);
    cfg.snapshot_times = vec![2.0];
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool")
            .install(|| run_ensemble(&cfg, &packets, &InitialDistribution::Packets(packets.clone()), Some(&det)))
    };
    let (a, b) = (run(1)?, run(4)?);
    let same_bits = a.arrivals.len() == b.arrivals.len()
        && a.arrivals.iter().zip(&b.arrivals).all(|(x, y)| {
            x.trajectory_id == y.trajectory_id && x.t_arrival.to_bits() == y.t_arrival.to_bits()
        })
        && a.snapshots[0].z.iter().zip(&b.snapshots[0].z).all(|(x, y)| x.to_bits() == y.to_bits());
    Ok(same_bits)
}

/// Ordering violations among Bohmian trajectories that never needed a
/// velocity clamp, and the number of clamped trajectories.
pub fn bohmian_order_violations(packets: &PacketSum, n: usize, dt: f64, times: &[f64], seed: u64) -> Result<(usize, usize)> {
    let t_max = times.iter().copied().fold(0.0, f64::max);
    let mut cfg = TrajectoryConfig::new(n, dt, t_max, seed, Scheme::Bohmian);
    cfg.snapshot_times = std::iter::once(0.0).chain(times.iter().copied()).collect();
    let r = run_ensemble(&cfg, packets, &InitialDistribution::Packets(packets.clone()), None)?;
    let mut order: Vec<usize> = (0..n).filter(|&i| r.clamped_steps[i] == 0).collect();
    let clamped = n - order.len();
    order.sort_by(|&a, &b| r.snapshots[0].z[a].total_cmp(&r.snapshots[0].z[b]));
    let violations = r.snapshots[1..]
        .iter()
        .map(|s| order.windows(2).filter(|w| s.z[w[0]] > s.z[w[1]]).count())
        .sum();
    Ok((violations, clamped))
}

/// The whole suite at the sizes used by `validate`.
pub fn run_suite(seed: u64) -> Result<Vec<OracleCheck>> {
    let mut out = Vec::new();

    let s = Instant::now();
    let (linf, peak) = levy_fp(1.0, 0.01, 2.5e-4, 3.0)?;
    out.push(OracleCheck::below("Lévy first passage, solver flux L∞ / peak", linf, 0.01, s));
    out.push(OracleCheck::below("Lévy first passage, solver peak value", peak, 0.01, s));

    let s = Instant::now();
    let ks = levy_bridge_ks(100_000, 1.0, 4e-3, 4.0, seed)?;
    out.push(OracleCheck::below("Lévy first passage, bridge-corrected MC KS distance", ks, 0.01, s));

    let times = [0.5, 1.0, 2.0];
    let single = PacketSum::single(1.0);
    let double = PacketSum::double(1.0, 3.0);
    for (label, packets) in [("single well", &single), ("double well d = 3σ", &double)] {
        for scheme in [Scheme::Bohmian, Scheme::Stochastic] {
            let s = Instant::now();
            let p = equivariance_p(packets, scheme, 100_000, 1.0 / 800.0, &times, seed)?;
            out.push(OracleCheck::above(
                &format!("equivariance, {label}, {scheme:?} snapshots, min chi-square p"),
                p,
                0.01,
                s,
            ));
        }
    }

    let s = Instant::now();
    let mut cloud = Vec::new();
    for i in 0..200 {
        let t = 0.05 + 4.0 * (i as f64 * 0.618_034).fract();
        let z = -4.0 + 8.0 * (i as f64 * 0.754_878).fract();
        cloud.push((z, t));
    }
    let single_worst = continuity_worst(&single, &cloud, 1e-4);
    let double_worst = continuity_worst(&double, &cloud, 1e-4);
    out.push(OracleCheck::below("continuity residual / max(ρω)", single_worst.max(double_worst), 1e-5, s));

    let s = Instant::now();
    let g = |advection| PropagatorGrid {
        z_min: -8.0,
        dz: 0.1,
        n_nodes: 161,
        dt: 0.01,
        advection,
    };
    let norm = normalization_drift(&g(Advection::Muscl), &single, 0.3, 0.0, 10_000)?;
    out.push(OracleCheck::below("propagator normalisation drift over 10⁴ steps", norm, 1e-8, s));
    let s = Instant::now();
    let free = chain_rule_discrepancy(&g(Advection::Muscl), &UniformField::zero(), 0.0, 0.0, 30, 30)?;
    out.push(OracleCheck::below("chain rule without drift", free, 1e-6, s));
    let s = Instant::now();
    let drift = chain_rule_discrepancy(&g(Advection::Upwind), &single, 0.5, 0.0, 25, 25)?;
    out.push(OracleCheck::below("chain rule with single-well drift", drift, 1e-5, s));

    let s = Instant::now();
    let same = thread_determinism(20_000, seed)?;
    out.push(OracleCheck::below(
        "thread-count determinism, differing outputs (1 vs 4 threads)",
        if same { 0.0 } else { 1.0 },
        0.5,
        s,
    ));

    let s = Instant::now();
    let (violations, _) = bohmian_order_violations(&double, 20_000, 1.0 / 800.0, &times, seed)?;
    out.push(OracleCheck::below(
        "Bohmian ordering violations among unclamped trajectories",
        violations as f64,
        0.5,
        s,
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levy_density_integrates_to_its_cdf() {
        let mass = crate::stats::trapezoid(|t| levy_density(1.0, t), 1e-9, 5.0, 200_000);
        assert!((mass - levy_cdf(1.0, 5.0)).abs() < 1e-6);
    }

    #[test]
    fn levy_peak_time() {
        let t_peak = 1.0 / (6.0 * DIFFUSION);
        let f = |t| levy_density(1.0, t);
        assert!(f(t_peak) > f(t_peak * 1.01) && f(t_peak) > f(t_peak * 0.99));
    }
}
