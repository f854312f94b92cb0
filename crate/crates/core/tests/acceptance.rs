//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary so the lines always reach the terminal. A failing
//! criterion is reported, not raised; set `PILOTWAVE_ACCEPTANCE_STRICT=1` to
//! make failures fail the target.

use std::time::Instant;

use pilotwave_core::analysis::{
    analytic_density_flux, arrival_histogram, bohmian_blocked_histogram, current_flux, fp_flux_curve,
    multiple_crossing_flux, negative_current_bins, normalize_and_compare, FluxCurve, FluxKind,
};
use pilotwave_core::config::Experiment;
use pilotwave_core::fokker_planck::{fp_initialize, solve_first_arrival, FluxSeries};
use pilotwave_core::oracle::run_suite;
use pilotwave_core::stats::{chi_square, fraction_within_band};
use pilotwave_core::trajectories::{run_ensemble, run_wavefunction_ensemble, InitialDistribution, Scheme, TrajectoryConfig};
use pilotwave_core::{DetectorMode, DetectorSpec, PacketSum, TimeGrid};

/// 1/(1600 ω) in natural units.
const DT0: f64 = 1.0 / 800.0;

struct Outcome {
    label: String,
    passed: bool,
}

fn report(out: &mut Vec<Outcome>, label: &str, passed: bool, detail: String, started: Instant) {
    println!(
        "{} {label}: {detail} ({:.1} s)",
        if passed { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    out.push(Outcome {
        label: label.to_string(),
        passed,
    });
}

fn solve(exp: &Experiment) -> FluxSeries {
    let mut grid = fp_initialize(&exp.spec.z, &exp.fp, &exp.detector, exp.t_max()).unwrap();
    solve_first_arrival(&mut grid, &exp.spec.z, &exp.fp, exp.t_max(), &[]).unwrap().0
}

fn criterion_1(out: &mut Vec<Outcome>) {
    let exp = Experiment::preset("double-well").unwrap();
    let s = Instant::now();
    let mc = run_wavefunction_ensemble(&exp.trajectories, &exp.spec, Some(&exp.detector)).unwrap();
    let f = mc.detected_fraction();
    report(
        out,
        "1a double-well detected fraction, stochastic MC",
        (f - 0.44).abs() <= 0.02,
        format!("{f:.4} from n = {} (target 0.44 ± 0.02)", mc.n_traj),
        s,
    );
    let s = Instant::now();
    let f = solve(&exp).total();
    let secs = s.elapsed().as_secs_f64();
    report(
        out,
        "1b double-well detected fraction, Fokker-Planck",
        (f - 0.44).abs() <= 0.02 && secs < 60.0,
        format!("{f:.4} (target 0.44 ± 0.02, runtime < 60 s)"),
        s,
    );
}

fn single_well_32k(scheme: Scheme) -> (Experiment, pilotwave_core::analysis::ArrivalHistogram) {
    let mut exp = Experiment::preset("single-well").unwrap();
    exp.trajectories.n_traj = 32_000;
    exp.trajectories.seed = 1;
    exp.trajectories.scheme = scheme;
    exp.trajectories.snapshot_times.clear();
    let r = run_wavefunction_ensemble(&exp.trajectories, &exp.spec, Some(&exp.detector)).unwrap();
    let h = arrival_histogram(&r, exp.grid).unwrap();
    (exp, h)
}

fn criterion_2(out: &mut Vec<Outcome>) {
    let s = Instant::now();
    let (exp, h) = single_well_32k(Scheme::Stochastic);
    assert!((exp.trajectories.dt - DT0).abs() < 1e-15 && (exp.detector.plane + 5.0).abs() < 1e-12);
    let fp = fp_flux_curve(&solve(&exp), exp.grid);
    let expected = fp.expected_counts(h.n_total);
    let within = fraction_within_band(&h.counts, &expected, 3.0);
    let chi = chi_square(&h.counts, &expected, 5.0);
    report(
        out,
        "2 stochastic histogram vs solver flux, L = 5σ, 32000 trajectories",
        within >= 0.99,
        format!(
            "{:.1}% of {} bins within 3σ (need ≥ 99%), chi-square p = {:.3}",
            100.0 * within,
            h.counts.len(),
            chi.p_value
        ),
        s,
    );
}

fn criterion_3(out: &mut Vec<Outcome>) {
    let s = Instant::now();
    let (exp, h) = single_well_32k(Scheme::Bohmian);
    let j = current_flux(&exp.spec.z, &exp.detector, exp.grid, FluxKind::BohmianJ).unwrap();
    let expected = j.expected_counts(h.n_total);
    let within = fraction_within_band(&h.counts, &expected, 3.0);
    let chi = chi_square(&h.counts, &expected, 5.0);
    report(
        out,
        "3a Bohmian histogram vs −n·j, L = 5σ, 32000 trajectories",
        within >= 0.99,
        format!(
            "{:.1}% of {} bins within 3σ (need ≥ 99%), chi-square p = {:.3}",
            100.0 * within,
            h.counts.len(),
            chi.p_value
        ),
        s,
    );

    let s = Instant::now();
    let mut exp = Experiment::preset("double-well").unwrap();
    exp.trajectories.n_traj = 200_000;
    exp.trajectories.scheme = Scheme::Bohmian;
    exp.trajectories.snapshot_times.clear();
    let r = run_wavefunction_ensemble(&exp.trajectories, &exp.spec, Some(&exp.detector)).unwrap();
    let h = bohmian_blocked_histogram(&r, exp.grid).unwrap();
    let negative = negative_current_bins(&exp.spec.z, &exp.detector, exp.grid);
    let hits: u64 = negative.iter().map(|&k| h.counts[k]).sum();
    report(
        out,
        "3b double-well blocked Bohmian histogram where −n·j < 0",
        !negative.is_empty() && hits == 0,
        format!(
            "{hits} arrivals in {} bins with −n·j < 0 throughout ({} detected of {})",
            negative.len(),
            h.in_window(),
            h.n_total
        ),
        s,
    );
}

struct Regime {
    /// max |F − j| over the peak of F, both normalised.
    linf: f64,
    l2_jstar: f64,
    l2_j: f64,
}

fn regime(preset: &str) -> Regime {
    let exp = Experiment::preset(preset).unwrap();
    let fp = fp_flux_curve(&solve(&exp), exp.grid);
    let curve = |kind| current_flux(&exp.spec.z, &exp.detector, exp.grid, kind).unwrap();
    let (j, jstar, jfwd) = (curve(FluxKind::BohmianJ), curve(FluxKind::BackwardJStar), curve(FluxKind::ForwardJ));
    let curves: [(&str, &FluxCurve); 4] = [("stochastic", &fp), ("bohmian", &j), ("Jstar", &jstar), ("J", &jfwd)];
    let report = normalize_and_compare(&curves).unwrap();
    let peak = report.curve("stochastic").unwrap().values.iter().fold(0.0f64, |m, &v| m.max(v));
    Regime {
        linf: report.pair("stochastic", "bohmian").unwrap().linf / peak,
        l2_jstar: report.pair("stochastic", "Jstar").unwrap().l2,
        l2_j: report.pair("stochastic", "J").unwrap().l2,
    }
}

fn criterion_4(out: &mut Vec<Outcome>) {
    let s = Instant::now();
    let far = regime("single-well-L50");
    report(
        out,
        "4a L = 50σ normalised Bohmian vs stochastic curves",
        far.linf < 0.01,
        format!("L∞ = {:.2}% of peak (need < 1%)", 100.0 * far.linf),
        s,
    );
    let s = Instant::now();
    let near = regime("single-well-L2");
    report(
        out,
        "4b L = 2σ normalised Bohmian vs stochastic curves",
        near.linf > 0.10,
        format!("L∞ = {:.1}% of peak (need > 10%)", 100.0 * near.linf),
        s,
    );
    let s = Instant::now();
    let mid = regime("single-well");
    let ok = |r: &Regime| r.l2_jstar < r.l2_j;
    report(
        out,
        "4c stochastic curve L²-closer to 𝒥* than to 𝒥",
        ok(&near) && ok(&far),
        format!(
            "L = 2σ: {:.3e} vs {:.3e}; L = 50σ: {:.3e} vs {:.3e} (L = 5σ: {:.3e} vs {:.3e})",
            near.l2_jstar, near.l2_j, far.l2_jstar, far.l2_j, mid.l2_jstar, mid.l2_j
        ),
        s,
    );
}

fn criterion_5(out: &mut Vec<Outcome>) {
    let s = Instant::now();
    let packets = PacketSum::single(1.0);
    let det = DetectorSpec::new(-2.0, DetectorMode::AllCrossings);
    let grid = TimeGrid::new(0.0, 2.0, 4).unwrap();
    let mut scaled = Vec::new();
    let mut worst_bin: f64 = 0.0;
    for (k, dt) in [DT0, DT0 / 4.0, DT0 / 16.0].into_iter().enumerate() {
        let mut cfg = TrajectoryConfig::new(50_000, dt, 2.0, 30 + k as u64, Scheme::Stochastic);
        cfg.crossing_bins = Some(grid);
        let r = run_ensemble(&cfg, &packets, &InitialDistribution::Packets(packets.clone()), Some(&det)).unwrap();
        let mc = multiple_crossing_flux(&r, grid).unwrap();
        let analytic = analytic_density_flux(&packets, &det, dt, grid).unwrap();
        for (m, a) in mc.values.iter().zip(&analytic.values) {
            worst_bin = worst_bin.max((m / a - 1.0).abs());
        }
        scaled.push(mc.integral() * dt.sqrt());
    }
    let spread = scaled.iter().map(|v| (v / scaled[0] - 1.0).abs()).fold(0.0f64, f64::max);
    report(
        out,
        "5 all-crossings rate × √dt across dt, dt/4, dt/16 and vs √(4D/(π dt))·ρ",
        spread <= 0.05 && worst_bin <= 0.05,
        format!(
            "scaled totals {:.4} {:.4} {:.4} (spread {:.1}%), worst bin vs analytic {:.1}% (need ≤ 5% each)",
            scaled[0],
            scaled[1],
            scaled[2],
            100.0 * spread,
            100.0 * worst_bin
        ),
        s,
    );
}

fn criterion_6(out: &mut Vec<Outcome>) {
    let s = Instant::now();
    let checks = run_suite(1).unwrap();
    for c in &checks {
        println!("    {}", c.line());
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    let secs = s.elapsed().as_secs_f64();
    report(
        out,
        "6 oracle suite",
        failed == 0 && secs < 60.0,
        format!("{} of {} checks passed (need all, in < 60 s)", checks.len() - failed, checks.len()),
        s,
    );
}

fn main() {
    // Test harness flags such as --nocapture are ignored.
    let threads = rayon::current_num_threads();
    println!("acceptance suite ({threads} threads)");
    let mut out = Vec::new();
    criterion_1(&mut out);
    criterion_2(&mut out);
    criterion_3(&mut out);
    criterion_4(&mut out);
    criterion_5(&mut out);
    criterion_6(&mut out);
    println!(
        "NOTE 7 the 5×10⁶-trajectory double-well run is left to the CLI \
         (`pilotwave trajectories --preset double-well --n 5000000`); the Kijowski curve is out of scope"
    );
    let failed: Vec<&str> = out.iter().filter(|o| !o.passed).map(|o| o.label.as_str()).collect();
    println!("{} of {} acceptance checks passed", out.len() - failed.len(), out.len());
    if !failed.is_empty() && std::env::var("PILOTWAVE_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        panic!("failed: {}", failed.join("; "));
    }
}
