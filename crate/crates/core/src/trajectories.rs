//! Monte Carlo ensembles of Bohmian and stochastic trajectories.
//!
//! Bohmian particles follow x' = x + v dt. Stochastic particles follow the
//! Euler-Maruyama update x' = x + b dt + ξ with ξ ~ N(0, ħ dt / m), which is
//! N(0, dt) in natural units. Every trajectory owns its random stream, so an
//! ensemble is reproducible for a given seed on any number of threads.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bins::TimeGrid;
use crate::detector::{DetectorMode, DetectorSpec};
use crate::error::{Error, Result};
use crate::field::{FieldAt, VelocityField};
use crate::rng::{trajectory_stream, TrajectoryRng};
use crate::wavefunction::{PacketSum, WavefunctionSpec};

/// Diffusion coefficient ħ/2m in natural units.
pub const DIFFUSION: f64 = 0.5;

/// Per-step displacement cap in units of σ.
pub const MAX_STEP_SIGMA: f64 = 10.0;

const TRAJECTORIES_PER_TASK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Bohmian,
    Stochastic,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bohmian" => Ok(Scheme::Bohmian),
            "stochastic" => Ok(Scheme::Stochastic),
            other => Err(Error::InvalidConfig(format!(
                "unknown scheme `{other}` (expected bohmian or stochastic)"
            ))),
        }
    }
}

/// How a detector hit is recognised within one time step.
///
/// Plain sign-change detection misses excursions that cross and return
/// within a step, which delays stochastic first arrivals by roughly
/// 0.58·√(2D dt) in distance. The Brownian-bridge correction recovers those
/// hits with the bridge hitting probability but assigns them the step
/// midpoint, a timing error of at most dt/2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossingCorrection {
    #[default]
    None,
    BrownianBridge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryConfig {
    pub n_traj: usize,
    pub dt: f64,
    pub t_max: f64,
    pub seed: u64,
    pub scheme: Scheme,
    pub crossing_correction: CrossingCorrection,
    /// Times (natural units) at which all positions are recorded.
    pub snapshot_times: Vec<f64>,
    /// Keep every crossing event in all-crossings mode.
    pub record_crossings: bool,
    /// Histogram every crossing on the fly in all-crossings mode.
    pub crossing_bins: Option<TimeGrid>,
    /// Clamp velocities near nodes instead of failing the trajectory.
    pub clamp_velocity: bool,
}

impl TrajectoryConfig {
    pub fn new(n_traj: usize, dt: f64, t_max: f64, seed: u64, scheme: Scheme) -> Self {
        Self {
            n_traj,
            dt,
            t_max,
            seed,
            scheme,
            crossing_correction: CrossingCorrection::None,
            snapshot_times: Vec::new(),
            record_crossings: false,
            crossing_bins: None,
            clamp_velocity: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_traj == 0 {
            return Err(Error::NonPositiveParameter("n_traj".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::NonPositiveParameter("dt".into()));
        }
        if !(self.t_max.is_finite() && self.t_max >= self.dt) {
            return Err(Error::InvalidConfig(format!(
                "t_max ({}) must be at least dt ({})",
                self.t_max, self.dt
            )));
        }
        if let Some(t) = self.snapshot_times.iter().find(|&&t| !(0.0..=self.t_max).contains(&t)) {
            return Err(Error::InvalidConfig(format!("snapshot time {t} outside [0, t_max]")));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_max / self.dt + 1e-9).floor() as usize
    }

    /// Largest speed allowed before clamping: 10σ per step.
    pub fn velocity_cap(&self) -> f64 {
        MAX_STEP_SIGMA / self.dt
    }
}

#[derive(Debug, Clone)]
pub struct ParticleState {
    pub z: f64,
    pub alive: bool,
    pub rng: TrajectoryRng,
    /// Steps where the velocity had to be clamped or a node was hit.
    pub clamped_steps: u32,
}

impl ParticleState {
    pub fn new(z: f64, rng: TrajectoryRng) -> Self {
        Self {
            z,
            alive: true,
            rng,
            clamped_steps: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalRecord {
    pub trajectory_id: u64,
    /// Interpolated time of the first detector hit.
    pub t_arrival: f64,
    /// Total plane crossings; always 1 in first-arrival mode.
    pub crossing_count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingEvent {
    pub trajectory_id: u64,
    pub t: f64,
    /// 1 for the first crossing of a trajectory, 2 for the second, ...
    pub ordinal: u32,
    pub downward: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub t: f64,
    /// The particle approached the plane from the detecting (upper) side.
    pub from_above: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub z: Vec<f64>,
    pub alive: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFailure {
    pub trajectory_id: u64,
    pub error: Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub n_traj: usize,
    pub dt: f64,
    /// Time reached by the last step, n_steps·dt ≤ t_max.
    pub t_end: f64,
    pub scheme: Scheme,
    pub mode: Option<DetectorMode>,
    /// One record per detected trajectory, ordered by trajectory id.
    pub arrivals: Vec<ArrivalRecord>,
    pub crossings: Vec<CrossingEvent>,
    /// Every crossing binned on `crossing_grid`.
    pub crossing_counts: Option<Vec<u64>>,
    pub crossing_grid: Option<TimeGrid>,
    pub snapshots: Vec<Snapshot>,
    pub clamped_steps: Vec<u32>,
    /// Trajectories that started on the shadow side of a first-arrival
    /// detector and can never be detected.
    pub started_below: usize,
    pub failures: Vec<TrajectoryFailure>,
}

impl EnsembleResult {
    pub fn detected_fraction(&self) -> f64 {
        self.arrivals.len() as f64 / self.n_traj as f64
    }

    pub fn arrival_times(&self) -> Vec<f64> {
        self.arrivals.iter().map(|a| a.t_arrival).collect()
    }

    pub fn total_clamped_steps(&self) -> u64 {
        self.clamped_steps.iter().map(|&c| c as u64).sum()
    }
}

/// Distribution of starting positions.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialDistribution {
    /// |ψ(z, 0)|² of a packet sum.
    Packets(PacketSum),
    /// Every trajectory starts at the same point.
    Point(f64),
}

/// Exact sampler for |Σ w_k G_k(z, 0)|².
///
/// Proposals come from the mixture Σ|w_k| G_k² / W with W = Σ|w_k|. Since
/// |Σ w_k G_k|² ≤ W·Σ|w_k| G_k², accepting with the ratio of the two is
/// exact, including interference between packets. The acceptance rate is
/// 1/(N² W²) with N the normalisation of the sum.
#[derive(Debug, Clone)]
pub struct InitialSampler {
    packets: Vec<(f64, f64, f64, f64)>, // (sigma, center, |w|, cumulative |w|/W)
    weights: Vec<num_complex::Complex64>,
    total_weight: f64,
    acceptance: f64,
}

impl InitialSampler {
    pub fn new(sum: &PacketSum) -> Result<Self> {
        let total_weight: f64 = sum.packets().iter().map(|p| p.weight.norm()).sum();
        let mut cumulative = 0.0;
        let packets = sum
            .packets()
            .iter()
            .map(|p| {
                cumulative += p.weight.norm() / total_weight;
                (p.sigma, p.center, p.weight.norm(), cumulative)
            })
            .collect();
        let n = sum.normalization();
        let acceptance = 1.0 / (n * n * total_weight * total_weight);
        if acceptance < 1e-3 {
            return Err(Error::RejectionOverflow { rate: acceptance });
        }
        Ok(Self {
            packets,
            weights: sum.packets().iter().map(|p| p.weight).collect(),
            total_weight,
            acceptance,
        })
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.acceptance
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.packets.len() == 1 {
            let (sigma, center, _, _) = self.packets[0];
            return center + sigma * rng.sample::<f64, _>(StandardNormal);
        }
        loop {
            let pick: f64 = rng.random();
            let k = self
                .packets
                .iter()
                .position(|p| pick < p.3)
                .unwrap_or(self.packets.len() - 1);
            let (sigma, center, _, _) = self.packets[k];
            let z = center + sigma * rng.sample::<f64, _>(StandardNormal);
            let mut amp = num_complex::Complex64::new(0.0, 0.0);
            let mut envelope = 0.0;
            for (&(sigma, center, w_abs, _), w) in self.packets.iter().zip(&self.weights) {
                let dz = z - center;
                let g = (-dz * dz / (4.0 * sigma * sigma)).exp()
                    / (2.0 * std::f64::consts::PI * sigma * sigma).powf(0.25);
                amp += w * g;
                envelope += w_abs * g * g;
            }
            let accept = amp.norm_sqr() / (self.total_weight * envelope);
            if envelope > 0.0 && rng.random::<f64>() < accept {
                return z;
            }
        }
    }
}

/// Draws `n` i.i.d. positions from |ψ(z, 0)|².
pub fn sample_initial<R: Rng + ?Sized>(n: usize, packets: &PacketSum, rng: &mut R) -> Result<Vec<f64>> {
    let sampler = InitialSampler::new(packets)?;
    Ok((0..n).map(|_| sampler.draw(rng)).collect())
}

#[inline]
fn velocity_or_clamp<S: FieldAt>(
    state: &mut ParticleState,
    slice: &S,
    t: f64,
    cap: Option<f64>,
) -> Result<num_complex::Complex64> {
    match (slice.velocity(state.z), cap) {
        (Some(vel), None) => Ok(vel),
        (Some(vel), Some(cap)) => {
            if vel.re.abs() > cap || vel.im.abs() > cap {
                state.clamped_steps += 1;
                Ok(num_complex::Complex64::new(vel.re.clamp(-cap, cap), vel.im.clamp(-cap, cap)))
            } else {
                Ok(vel)
            }
        }
        (None, Some(_)) => {
            state.clamped_steps += 1;
            Ok(num_complex::Complex64::new(0.0, 0.0))
        }
        (None, None) => Err(Error::NodeSingularity { z: state.z, t }),
    }
}

/// One explicit Euler step along the average velocity v.
///
/// `cap` bounds |u| and |v|; with `None` a node is an error.
pub fn step_bohmian<S: FieldAt>(
    state: &mut ParticleState,
    slice: &S,
    t: f64,
    dt: f64,
    cap: Option<f64>,
) -> Result<()> {
    let vel = velocity_or_clamp(state, slice, t, cap)?;
    state.z += vel.im * dt;
    Ok(())
}

/// One Euler-Maruyama step along the forward drift b = v + u.
pub fn step_stochastic<S: FieldAt>(
    state: &mut ParticleState,
    slice: &S,
    t: f64,
    dt: f64,
    cap: Option<f64>,
) -> Result<()> {
    let vel = velocity_or_clamp(state, slice, t, cap)?;
    let xi: f64 = state.rng.sample(StandardNormal);
    state.z += (vel.re + vel.im) * dt + (2.0 * DIFFUSION * dt).sqrt() * xi;
    Ok(())
}

/// Detector hit between two consecutive positions.
///
/// A sign change of z − plane gives a linearly interpolated crossing time.
/// With the bridge correction and no sign change, a hit from the current
/// side is drawn with probability exp(−(z_prev − p)(z_new − p)/(D dt)) and
/// placed at the step midpoint.
pub fn detect_crossing<R: Rng + ?Sized>(
    z_prev: f64,
    z_new: f64,
    t: f64,
    dt: f64,
    plane: f64,
    correction: CrossingCorrection,
    rng: &mut R,
) -> Option<Crossing> {
    let above_prev = z_prev > plane;
    let above_new = z_new > plane;
    if above_prev != above_new {
        let frac = (z_prev - plane) / (z_prev - z_new);
        return Some(Crossing {
            t: t + dt * frac.clamp(0.0, 1.0),
            from_above: above_prev,
        });
    }
    if correction == CrossingCorrection::BrownianBridge {
        let p_hit = (-(z_prev - plane) * (z_new - plane) / (DIFFUSION * dt)).exp();
        if rng.random::<f64>() < p_hit {
            return Some(Crossing {
                t: t + 0.5 * dt,
                from_above: above_prev,
            });
        }
    }
    None
}

struct ChunkResult {
    arrivals: Vec<ArrivalRecord>,
    crossings: Vec<CrossingEvent>,
    crossing_counts: Vec<u64>,
    snapshots: Vec<(Vec<f64>, Vec<bool>)>,
    clamped: Vec<u32>,
    started_below: usize,
    failures: Vec<TrajectoryFailure>,
}

/// Runs `config.n_traj` independent trajectories in parallel on the current
/// rayon pool. Output is identical for any pool size.
pub fn run_ensemble<F: VelocityField>(
    config: &TrajectoryConfig,
    field: &F,
    initial: &InitialDistribution,
    detector: Option<&DetectorSpec>,
) -> Result<EnsembleResult> {
    config.validate()?;
    let sampler = match initial {
        InitialDistribution::Packets(p) => Some(InitialSampler::new(p)?),
        InitialDistribution::Point(_) => None,
    };
    let n_steps = config.n_steps();
    let dt = config.dt;
    let slices: Vec<F::Slice> = (0..n_steps).map(|k| field.at(k as f64 * dt)).collect();
    let snap_steps: Vec<usize> = config
        .snapshot_times
        .iter()
        .map(|&t| ((t / dt).round() as usize).min(n_steps))
        .collect();
    let cap = config.clamp_velocity.then(|| config.velocity_cap());
    let n_bins = config.crossing_bins.map_or(0, |g| g.len());

    let run_chunk = |chunk: usize| -> ChunkResult {
        let first = chunk * TRAJECTORIES_PER_TASK;
        let last = (first + TRAJECTORIES_PER_TASK).min(config.n_traj);
        let mut out = ChunkResult {
            arrivals: Vec::new(),
            crossings: Vec::new(),
            crossing_counts: vec![0; n_bins],
            snapshots: vec![(Vec::with_capacity(last - first), Vec::with_capacity(last - first)); snap_steps.len()],
            clamped: Vec::with_capacity(last - first),
            started_below: 0,
            failures: Vec::new(),
        };
        for id in first as u64..last as u64 {
            let mut rng = trajectory_stream(config.seed, id);
            let z0 = match (initial, &sampler) {
                (_, Some(s)) => s.draw(&mut rng),
                (InitialDistribution::Point(z), None) => *z,
                _ => unreachable!(),
            };
            let mut state = ParticleState::new(z0, rng);
            if let Some(det) = detector {
                if det.mode == DetectorMode::FirstArrival && z0 <= det.plane {
                    state.alive = false;
                    out.started_below += 1;
                }
            }
            for (k, &s) in snap_steps.iter().enumerate() {
                if s == 0 {
                    out.snapshots[k].0.push(state.z);
                    out.snapshots[k].1.push(state.alive);
                }
            }
            let mut crossing_count = 0u32;
            let mut first_crossing = None;
            let mut failed = None;
            for (step, slice) in slices.iter().enumerate() {
                if !state.alive {
                    break;
                }
                let t = step as f64 * dt;
                let z_prev = state.z;
                let res = match config.scheme {
                    Scheme::Bohmian => step_bohmian(&mut state, slice, t, dt, cap),
                    Scheme::Stochastic => step_stochastic(&mut state, slice, t, dt, cap),
                };
                if let Err(e) = res {
                    failed = Some(e);
                    break;
                }
                if !state.z.is_finite() {
                    failed = Some(Error::StabilityViolation {
                        t,
                        reason: "trajectory position is not finite".into(),
                    });
                    break;
                }
                if let Some(det) = detector {
                    match det.mode {
                        DetectorMode::FirstArrival => {
                            if let Some(c) = detect_crossing(
                                z_prev,
                                state.z,
                                t,
                                dt,
                                det.plane,
                                config.crossing_correction,
                                &mut state.rng,
                            ) {
                                if c.from_above {
                                    out.arrivals.push(ArrivalRecord {
                                        trajectory_id: id,
                                        t_arrival: c.t,
                                        crossing_count: 1,
                                    });
                                    state.alive = false;
                                }
                            }
                        }
                        DetectorMode::AllCrossings => {
                            if let Some(c) = detect_crossing(
                                z_prev,
                                state.z,
                                t,
                                dt,
                                det.plane,
                                CrossingCorrection::None,
                                &mut state.rng,
                            ) {
                                crossing_count += 1;
                                first_crossing.get_or_insert(c.t);
                                if let Some(k) = config.crossing_bins.and_then(|g| g.index(c.t)) {
                                    out.crossing_counts[k] += 1;
                                }
                                if config.record_crossings {
                                    out.crossings.push(CrossingEvent {
                                        trajectory_id: id,
                                        t: c.t,
                                        ordinal: crossing_count,
                                        downward: c.from_above,
                                    });
                                }
                            }
                        }
                    }
                }
                for (k, &s) in snap_steps.iter().enumerate() {
                    if s == step + 1 {
                        out.snapshots[k].0.push(state.z);
                        out.snapshots[k].1.push(state.alive);
                    }
                }
            }
            // Frozen trajectories keep their last position in later snapshots.
            for (k, &s) in snap_steps.iter().enumerate() {
                let have = out.snapshots[k].0.len();
                let expected = (id as usize - first) + 1;
                if have < expected && s > 0 {
                    out.snapshots[k].0.push(state.z);
                    out.snapshots[k].1.push(false);
                }
            }
            if let Some(t) = first_crossing {
                out.arrivals.push(ArrivalRecord {
                    trajectory_id: id,
                    t_arrival: t,
                    crossing_count,
                });
            }
            if let Some(error) = failed {
                out.failures.push(TrajectoryFailure {
                    trajectory_id: id,
                    error,
                });
            }
            out.clamped.push(state.clamped_steps);
        }
        out
    };

    let n_chunks = config.n_traj.div_ceil(TRAJECTORIES_PER_TASK);
    let chunks: Vec<ChunkResult> = (0..n_chunks).into_par_iter().map(run_chunk).collect();

    let mut result = EnsembleResult {
        n_traj: config.n_traj,
        dt,
        t_end: n_steps as f64 * dt,
        scheme: config.scheme,
        mode: detector.map(|d| d.mode),
        arrivals: Vec::new(),
        crossings: Vec::new(),
        crossing_counts: config.crossing_bins.map(|g| vec![0; g.len()]),
        crossing_grid: config.crossing_bins,
        snapshots: config
            .snapshot_times
            .iter()
            .zip(&snap_steps)
            .map(|(_, &s)| Snapshot {
                t: s as f64 * dt,
                z: Vec::with_capacity(config.n_traj),
                alive: Vec::with_capacity(config.n_traj),
            })
            .collect(),
        clamped_steps: Vec::with_capacity(config.n_traj),
        started_below: 0,
        failures: Vec::new(),
    };
    for chunk in chunks {
        result.arrivals.extend(chunk.arrivals);
        result.crossings.extend(chunk.crossings);
        if let Some(counts) = result.crossing_counts.as_mut() {
            for (c, add) in counts.iter_mut().zip(chunk.crossing_counts) {
                *c += add;
            }
        }
        for (snap, (z, alive)) in result.snapshots.iter_mut().zip(chunk.snapshots) {
            snap.z.extend(z);
            snap.alive.extend(alive);
        }
        result.clamped_steps.extend(chunk.clamped);
        result.started_below += chunk.started_below;
        result.failures.extend(chunk.failures);
    }
    if result.failures.len() * 1000 > config.n_traj {
        return Err(Error::EnsembleFailure {
            failed: result.failures.len(),
            total: config.n_traj,
            first: result.failures[0].error.to_string(),
        });
    }
    Ok(result)
}

/// Ensemble along z for a separable wave function, starting from |ψ(z, 0)|².
pub fn run_wavefunction_ensemble(
    config: &TrajectoryConfig,
    spec: &WavefunctionSpec,
    detector: Option<&DetectorSpec>,
) -> Result<EnsembleResult> {
    if let Some(det) = detector {
        det.validate_against(&spec.z)?;
    }
    run_ensemble(config, &spec.z, &InitialDistribution::Packets(spec.z.clone()), detector)
}

/// Snapshots of the transverse coordinates, which evolve independently of z
/// by separability. Streams are decorrelated from the z-run by deriving new
/// seeds, so the z results do not depend on whether these are requested.
pub fn run_transverse(config: &TrajectoryConfig, spec: &WavefunctionSpec) -> Result<[EnsembleResult; 2]> {
    let mut cfg = config.clone();
    cfg.crossing_bins = None;
    cfg.record_crossings = false;
    cfg.seed = config.seed ^ 0x9e37_79b9_7f4a_7c15;
    let x = run_ensemble(&cfg, &spec.x, &InitialDistribution::Packets(spec.x.clone()), None)?;
    cfg.seed = config.seed ^ 0xd1b5_4a32_d192_ed03;
    let y = run_ensemble(&cfg, &spec.y, &InitialDistribution::Packets(spec.y.clone()), None)?;
    Ok([x, y])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::UniformField;
    use crate::rng::trajectory_stream;

    #[test]
    fn symmetric_interpolation() {
        let mut rng = trajectory_stream(1, 1);
        let c = detect_crossing(1e-3, -1e-3, 2.0, 0.1, 0.0, CrossingCorrection::None, &mut rng).unwrap();
        assert!((c.t - 2.05).abs() < 1e-15);
        assert!(c.from_above);
        assert!(detect_crossing(0.5, 0.4, 0.0, 0.1, 0.0, CrossingCorrection::None, &mut rng).is_none());
        let up = detect_crossing(-0.5, 0.5, 0.0, 0.1, 0.0, CrossingCorrection::None, &mut rng).unwrap();
        assert!(!up.from_above);
    }

    #[test]
    fn bridge_hit_probability() {
        // exp(-2ab/dt) with a = b = 0.05, dt = 0.01 gives e^{-0.5}.
        let mut rng = trajectory_stream(3, 0);
        let n = 200_000;
        let hits = (0..n)
            .filter(|_| {
                detect_crossing(0.05, 0.05, 0.0, 0.01, 0.0, CrossingCorrection::BrownianBridge, &mut rng)
                    .is_some()
            })
            .count();
        let p = (-0.5f64).exp();
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!(((hits as f64 / n as f64) - p).abs() < 5.0 * se);
    }

    #[test]
    fn single_well_initial_moments() {
        let mut rng = trajectory_stream(11, 0);
        let n = 100_000;
        let xs = sample_initial(n, &PacketSum::single(1.0), &mut rng).unwrap();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 5.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 5.0 * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn double_well_halves() {
        let mut rng = trajectory_stream(12, 0);
        for d in [10.0, 20.0] {
            let n = 100_000;
            let xs = sample_initial(n, &PacketSum::double(1.0, d), &mut rng).unwrap();
            let up = xs.iter().filter(|&&x| x > 0.0).count() as f64 / n as f64;
            assert!((up - 0.5).abs() < 5.0 * 0.5 / (n as f64).sqrt());
        }
        assert!((InitialSampler::new(&PacketSum::double(1.0, 20.0)).unwrap().acceptance_rate() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn destructive_superposition_overflows() {
        use num_complex::Complex64;
        use crate::wavefunction::GaussianPacket;
        let w = Complex64::new(1.0, 0.0);
        let packets = PacketSum::new(vec![
            GaussianPacket::new(1.0, 0.01, w),
            GaussianPacket::new(1.0, -0.01, -w),
        ])
        .unwrap();
        assert!(matches!(
            InitialSampler::new(&packets),
            Err(Error::RejectionOverflow { .. })
        ));
    }

    #[test]
    fn frozen_drift_moments() {
        let b = 0.7;
        let dt = 0.01;
        let field = UniformField::drift(b);
        let slice = field.at(0.0);
        let n = 1_000_000;
        let mut rng_state = ParticleState::new(0.0, trajectory_stream(5, 0));
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..n {
            rng_state.z = 0.0;
            step_stochastic(&mut rng_state, &slice, 0.0, dt, None).unwrap();
            sum += rng_state.z;
            sum2 += rng_state.z * rng_state.z;
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        assert!((mean - b * dt).abs() < 5.0 * (dt / n as f64).sqrt());
        assert!((var - dt).abs() < 5.0 * dt * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn brownian_mean_square_displacement() {
        let dt = 0.01;
        let steps = 50;
        let cfg = TrajectoryConfig {
            snapshot_times: vec![steps as f64 * dt],
            ..TrajectoryConfig::new(20_000, dt, steps as f64 * dt, 9, Scheme::Stochastic)
        };
        let res = run_ensemble(&cfg, &UniformField::zero(), &InitialDistribution::Point(0.0), None).unwrap();
        let z = &res.snapshots[0].z;
        let msd = z.iter().map(|x| x * x).sum::<f64>() / z.len() as f64;
        let expect = steps as f64 * dt;
        assert!((msd - expect).abs() < 5.0 * expect * (2.0 / z.len() as f64).sqrt());
    }

    #[test]
    fn origin_stays_put_for_symmetric_specs() {
        let spec = PacketSum::double(1.0, 20.0);
        let mut state = ParticleState::new(0.0, trajectory_stream(0, 0));
        for k in 0..2000 {
            let t = k as f64 * 0.05;
            step_bohmian(&mut state, &spec.slice(t), t, 0.05, Some(200.0)).unwrap();
        }
        assert_eq!(state.z, 0.0);
    }

    #[test]
    fn node_without_clamp_fails() {
        use num_complex::Complex64;
        use crate::wavefunction::GaussianPacket;
        let w = Complex64::new(1.0, 0.0);
        let odd = PacketSum::new(vec![GaussianPacket::new(1.0, 1.0, w), GaussianPacket::new(1.0, -1.0, -w)]).unwrap();
        let mut state = ParticleState::new(0.0, trajectory_stream(0, 0));
        let slice = odd.slice(0.5);
        assert!(matches!(
            step_bohmian(&mut state, &slice, 0.5, 0.01, None),
            Err(Error::NodeSingularity { .. })
        ));
        step_bohmian(&mut state, &slice, 0.5, 0.01, Some(1000.0)).unwrap();
        assert_eq!(state.clamped_steps, 1);
    }

    #[test]
    fn first_arrival_records_each_trajectory_once() {
        let cfg = TrajectoryConfig::new(2000, 0.01, 5.0, 4, Scheme::Stochastic);
        let det = DetectorSpec::below(0.0, DetectorMode::FirstArrival);
        let res = run_ensemble(&cfg, &UniformField::zero(), &InitialDistribution::Point(1.0), Some(&det)).unwrap();
        let mut ids: Vec<u64> = res.arrivals.iter().map(|a| a.trajectory_id).collect();
        let n = ids.len();
        ids.dedup();
        assert_eq!(ids.len(), n);
        assert!(n <= cfg.n_traj);
        assert!(res.arrivals.iter().all(|a| a.t_arrival >= 0.0 && a.t_arrival <= cfg.t_max));
    }

    #[test]
    fn particles_behind_the_detector_are_never_detected() {
        let cfg = TrajectoryConfig::new(500, 0.01, 1.0, 4, Scheme::Stochastic);
        let det = DetectorSpec::new(0.0, DetectorMode::FirstArrival);
        let res = run_ensemble(&cfg, &UniformField::drift(5.0), &InitialDistribution::Point(-0.5), Some(&det)).unwrap();
        assert_eq!(res.started_below, 500);
        assert!(res.arrivals.is_empty());
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrajectoryConfig::new(0, 0.01, 1.0, 0, Scheme::Bohmian);
        assert!(cfg.validate().is_err());
        cfg.n_traj = 1;
        cfg.t_max = 0.001;
        assert!(cfg.validate().is_err());
        cfg.t_max = 1.0;
        cfg.dt = -1.0;
        assert!(cfg.validate().is_err());
    }
}
