use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use pilotwave_core::analysis::{
    analytic_density_flux, arrival_histogram, current_flux, normalize_and_compare, ComparisonReport,
    FluxCurve, FluxKind,
};
use pilotwave_core::config::{Experiment, RawConfig, TimeAxis};
use pilotwave_core::fokker_planck::{fp_initialize, solve_first_arrival};
use pilotwave_core::oracle::run_suite;
use pilotwave_core::trajectories::{run_transverse, run_wavefunction_ensemble, EnsembleResult};
use pilotwave_core::{DetectorMode, TimeGrid};
use serde_json::json;

use crate::output::{csv, num, write_all, Artifact, Manifest};
use crate::{CompareArgs, Failure, FpArgs, Source, TrajectoryArgs, ValidateArgs};

fn load_raw(config: Option<&Path>, preset: Option<&str>) -> Result<RawConfig, Failure> {
    match (config, preset) {
        (Some(path), _) => {
            let src = std::fs::read_to_string(path)
                .map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?;
            Ok(RawConfig::from_toml(&src)?)
        }
        (None, Some(name)) => Ok(RawConfig::preset(name)?),
        (None, None) => Err(Failure::config("give --config or --preset")),
    }
}

fn load(source: &Source) -> Result<RawConfig, Failure> {
    load_raw(source.config.as_deref(), source.preset.as_deref())
}

fn config_artifact(raw: &RawConfig) -> Artifact {
    Artifact {
        name: "config.toml".into(),
        bytes: raw.to_toml().into_bytes(),
    }
}

fn manifest(command: &str, raw: Option<&RawConfig>, threads: usize, started: Instant, summary: serde_json::Value) -> Manifest {
    Manifest {
        command: command.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: raw.map(|r| r.seed),
        config: raw.map(RawConfig::to_toml),
        threads,
        wall_time_s: started.elapsed().as_secs_f64(),
        summary,
        outputs: Vec::new(),
    }
}

fn finish(dir: &Path, artifacts: &[Artifact], manifest: Manifest) -> Result<(), Failure> {
    let written = write_all(dir, artifacts, manifest)?;
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn histogram_counts(exp: &Experiment, result: &EnsembleResult) -> Result<Vec<u64>, Failure> {
    Ok(match exp.detector.mode {
        DetectorMode::FirstArrival => arrival_histogram(result, exp.grid)?.counts,
        DetectorMode::AllCrossings => result.crossing_counts.clone().unwrap_or_default(),
    })
}

pub fn trajectories(args: TrajectoryArgs, threads: usize) -> Result<(), Failure> {
    let started = Instant::now();
    let mut raw = load(&args.source)?;
    if let Some(s) = &args.scheme {
        raw.scheme = s.clone();
    }
    if let Some(n) = args.n {
        raw.n_traj = n;
    }
    if let Some(dt) = args.dt {
        raw.set_dt(dt);
    }
    if let Some(seed) = args.seed {
        raw.seed = seed;
    }
    if let Some(m) = &args.detector_mode {
        raw.detector_mode = m.clone();
    }
    raw.bridge_correction |= args.bridge_correction;
    let mut exp = Experiment::from_raw(raw)?;
    if args.transverse && exp.trajectories.snapshot_times.is_empty() {
        return Err(Failure::config("--transverse needs snapshot_times in the config"));
    }
    if exp.detector.mode == DetectorMode::AllCrossings {
        exp.trajectories.crossing_bins = Some(exp.grid);
    }

    let result = run_wavefunction_ensemble(&exp.trajectories, &exp.spec, Some(&exp.detector))?;
    let transverse = if args.transverse {
        Some(run_transverse(&exp.trajectories, &exp.spec)?)
    } else {
        None
    };

    let ax = exp.time_axis.suffix();
    let mut artifacts = vec![config_artifact(&exp.raw)];
    let t_col = format!("t_arrival_{ax}");
    artifacts.push(csv("arrivals.csv", &["trajectory_id", &t_col, "crossings"], |w| {
        for a in &result.arrivals {
            w.write_record([a.trajectory_id.to_string(), num(exp.time_out(a.t_arrival)), a.crossing_count.to_string()])?;
        }
        Ok(())
    })?);

    let counts = histogram_counts(&exp, &result)?;
    let scheme = exp.raw.scheme.clone();
    let (start_col, end_col, flux_col) = (format!("t_start_{ax}"), format!("t_end_{ax}"), format!("flux_per_{ax}"));
    let n = exp.trajectories.n_traj;
    artifacts.push(csv(
        &format!("histogram_{scheme}.csv"),
        &[&start_col, &end_col, "count", "n_traj", &flux_col],
        |w| {
            let width = exp.time_out(exp.grid.width());
            for (k, &c) in counts.iter().enumerate() {
                w.write_record([
                    num(exp.time_out(exp.grid.edge(k))),
                    num(exp.time_out(exp.grid.edge(k + 1))),
                    c.to_string(),
                    n.to_string(),
                    num(c as f64 / (n as f64 * width)),
                ])?;
            }
            Ok(())
        },
    )?);

    if !result.snapshots.is_empty() {
        let um = |z: f64| num(exp.units.internal_to_um(z));
        artifacts.push(csv("snapshots.csv", &["trajectory_id", "t", "z"], |w| {
            for s in &result.snapshots {
                for (id, &z) in s.z.iter().enumerate() {
                    w.write_record([id.to_string(), num(exp.time_out(s.t)), um(z)])?;
                }
            }
            Ok(())
        })?);
        if let Some([x, y]) = &transverse {
            artifacts.push(csv("snapshots_3d.csv", &["trajectory_id", "t", "x", "y", "z"], |w| {
                for (k, s) in result.snapshots.iter().enumerate() {
                    for (id, &z) in s.z.iter().enumerate() {
                        w.write_record([
                            id.to_string(),
                            num(exp.time_out(s.t)),
                            um(x.snapshots[k].z[id]),
                            um(y.snapshots[k].z[id]),
                            um(z),
                        ])?;
                    }
                }
                Ok(())
            })?);
        }
    }

    let max_crossings = result.arrivals.iter().map(|a| a.crossing_count).max().unwrap_or(0);
    let mut by_count = BTreeMap::new();
    for a in &result.arrivals {
        *by_count.entry(a.crossing_count).or_insert(0usize) += 1;
    }
    let summary = json!({
        "scheme": scheme,
        "detector_mode": exp.raw.detector_mode,
        "n_traj": n,
        "detected": result.arrivals.len(),
        "detected_fraction": result.detected_fraction(),
        "started_below_detector": result.started_below,
        "clamped_steps": result.total_clamped_steps(),
        "failed_trajectories": result.failures.len(),
        "trajectories_by_crossing_count": by_count,
    });
    println!(
        "{scheme} ensemble of {n}: detected fraction {:.4} by t = {:.4} {ax}, clamped steps {}, failures {}",
        result.detected_fraction(),
        exp.time_out(result.t_end),
        result.total_clamped_steps(),
        result.failures.len()
    );
    if exp.detector.mode == DetectorMode::AllCrossings {
        println!("most crossings by one trajectory: {max_crossings}");
    }
    finish(&args.source.out_dir, &artifacts, manifest("trajectories", Some(&exp.raw), threads, started, summary))
}

pub fn fokker_planck(args: FpArgs, threads: usize) -> Result<(), Failure> {
    let started = Instant::now();
    let mut raw = load(&args.source)?;
    if let Some(dz) = args.dz {
        raw.fokker_planck.dz_sigma = Some(dz);
    }
    if let Some(dt) = args.dt_pde {
        let exp = Experiment::from_raw(raw.clone())?;
        let internal = exp.time_axis.to_internal(&exp.units, dt);
        raw.fokker_planck.dt_pde_inv_omega = Some(TimeAxis::InvOmega.from_internal(&exp.units, internal));
    }
    let exp = Experiment::from_raw(raw)?;
    if exp.detector.mode != DetectorMode::FirstArrival {
        return Err(Failure::config("the solver computes first arrivals; set detector_mode = \"first-arrival\""));
    }

    let mut grid = fp_initialize(&exp.spec.z, &exp.fp, &exp.detector, exp.t_max())?;
    let initial = grid.mass();
    let (series, snapshots) = solve_first_arrival(
        &mut grid,
        &exp.spec.z,
        &exp.fp,
        exp.t_max(),
        &[exp.trajectories.snapshot_times.clone(), vec![exp.t_max()]].concat(),
    )?;

    let ax = exp.time_axis.suffix();
    let mut artifacts = vec![config_artifact(&exp.raw)];
    let (t_col, flux_col) = (format!("t_{ax}"), format!("flux_per_{ax}"));
    artifacts.push(csv("flux.csv", &[&t_col, &flux_col, "cumulative"], |w| {
        for k in 0..series.times.len() {
            w.write_record([
                num(exp.time_out(series.times[k])),
                num(exp.rate_out(series.flux[k])),
                num(series.cumulative[k]),
            ])?;
        }
        Ok(())
    })?);
    let binned = series.binned(&exp.grid);
    let (start_col, end_col) = (format!("t_start_{ax}"), format!("t_end_{ax}"));
    artifacts.push(csv("flux_binned.csv", &[&start_col, &end_col, &flux_col], |w| {
        for (k, &f) in binned.iter().enumerate() {
            w.write_record([
                num(exp.time_out(exp.grid.edge(k))),
                num(exp.time_out(exp.grid.edge(k + 1))),
                num(exp.rate_out(f)),
            ])?;
        }
        Ok(())
    })?);
    let mut snapshot_index = Vec::new();
    for (k, s) in snapshots.iter().enumerate() {
        let name = format!("density_{k:03}.csv");
        snapshot_index.push(json!({ "file": name, format!("t_{ax}"): exp.time_out(s.t) }));
        artifacts.push(csv(&name, &["z_um", "rho_L"], |w| {
            for (&z, &rho) in s.z.iter().zip(&s.rho) {
                w.write_record([num(exp.units.internal_to_um(z)), num(rho / exp.raw.sigma_um)])?;
            }
            Ok(())
        })?);
    }

    let balance = initial - series.remaining - series.total() - series.flushed;
    let summary = json!({
        "detected_fraction": series.total(),
        "initial_mass": initial,
        "remaining_mass": series.remaining,
        "mass_balance_residual": balance,
        "steps": series.times.len(),
        "clamped_faces": series.clamped_faces,
        "flushed_mass": series.flushed,
        "density_snapshots": snapshot_index,
    });
    println!(
        "first-arrival fraction {:.4} by t = {:.4} {ax} ({} steps, remaining {:.4}, mass balance residual {:.1e}, clamped faces {})",
        series.total(),
        exp.time_out(exp.t_max()),
        series.times.len(),
        series.remaining,
        balance,
        series.clamped_faces
    );
    finish(&args.source.out_dir, &artifacts, manifest("fokker-planck", Some(&exp.raw), threads, started, summary))
}

/// Column names of the comparison table, in order.
const COLUMNS: [&str; 7] = ["bohmian", "stochastic_fp", "stochastic_mc", "j_flux", "Jstar_flux", "J_flux", "density_prop"];

struct Input {
    name: String,
    axis: TimeAxis,
    curve: FluxCurve,
    digest: String,
}

fn read_input(spec: &str) -> Result<Input, Failure> {
    let (name, path) = match spec.split_once('=') {
        Some((n, p)) => (Some(n.to_string()), p),
        None => (None, spec),
    };
    let bytes = std::fs::read(path).map_err(|e| Failure::config(format!("cannot read {path}: {e}")))?;
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let axis = if header.first().is_some_and(|h| h.ends_with("_ms")) {
        TimeAxis::Ms
    } else if header.first().is_some_and(|h| h.ends_with("_inv_omega")) {
        TimeAxis::InvOmega
    } else {
        return Err(Failure::config(format!("{path}: not a binned curve (header {header:?})")));
    };
    let col = |n: &str| header.iter().position(|h| h == n);
    let flux_col = col(&format!("flux_per_{}", axis.suffix()))
        .ok_or_else(|| Failure::config(format!("{path}: missing flux column")))?;
    let n_col = col("n_traj");
    let mut edges = Vec::new();
    let mut values = Vec::new();
    let mut samples = None;
    for rec in reader.records() {
        let rec = rec?;
        let field = |i: usize| -> Result<f64, Failure> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Failure::config(format!("{path}: bad number in row {:?}", rec)))
        };
        edges.push((field(0)?, field(1)?));
        values.push(field(flux_col)?);
        if let Some(c) = n_col {
            samples = Some(field(c)? as usize);
        }
    }
    let (Some(first), Some(last)) = (edges.first(), edges.last()) else {
        return Err(Failure::config(format!("{path}: no rows")));
    };
    let grid = TimeGrid::new(first.0, last.1, edges.len())?;
    for (k, &(a, b)) in edges.iter().enumerate() {
        let tol = 1e-9 * grid.end().abs().max(1.0);
        if (a - grid.edge(k)).abs() > tol || (b - grid.edge(k + 1)).abs() > tol {
            return Err(Failure::config(format!("{path}: bins are not uniform at row {k}")));
        }
    }
    let inferred = match (n_col, path.contains("bohmian"), path.contains("stochastic")) {
        (None, _, _) => Some("stochastic_fp"),
        (Some(_), true, _) => Some("bohmian"),
        (Some(_), _, true) => Some("stochastic_mc"),
        _ => None,
    };
    let name = name
        .or(inferred.map(str::to_string))
        .ok_or_else(|| Failure::config(format!("{path}: cannot tell which curve this is; use name=path")))?;
    if !COLUMNS[..3].contains(&name.as_str()) {
        return Err(Failure::config(format!("unknown curve name `{name}` (expected bohmian, stochastic_mc or stochastic_fp)")));
    }
    let kind = if n_col.is_some() { FluxKind::McFirstArrival } else { FluxKind::FpFirstArrival };
    let mut curve = FluxCurve::new(grid, values, kind)?;
    curve.samples = samples;
    Ok(Input {
        name,
        axis,
        curve,
        digest: crate::output::sha256_hex(&bytes),
    })
}

/// An analytic curve computed in natural units and re-expressed on the
/// output grid.
fn to_output(exp: &Experiment, internal: FluxCurve, grid: TimeGrid) -> FluxCurve {
    FluxCurve {
        grid,
        values: internal.values.iter().map(|&v| exp.rate_out(v)).collect(),
        kind: internal.kind,
        samples: None,
    }
}

pub fn compare(args: CompareArgs, threads: usize) -> Result<(), Failure> {
    let started = Instant::now();
    let inputs = args.inputs.iter().map(|s| read_input(s)).collect::<Result<Vec<_>, _>>()?;
    let axis = inputs[0].axis;
    let grid = inputs[0].curve.grid;
    for i in &inputs {
        if i.axis != axis {
            return Err(Failure::config(format!("`{}` uses a different time unit", i.name)));
        }
        if !i.curve.grid.matches(&grid, 1e-9) {
            return Err(Failure::config(format!(
                "grid mismatch: `{}` has {} bins over [{}, {}] {}, `{}` has {} bins over [{}, {}]",
                i.name,
                i.curve.grid.len(),
                i.curve.grid.start(),
                i.curve.grid.end(),
                axis.suffix(),
                inputs[0].name,
                grid.len(),
                grid.start(),
                grid.end()
            )));
        }
    }
    let mut names: Vec<String> = inputs.iter().map(|i| i.name.clone()).collect();
    let mut curves: Vec<FluxCurve> = inputs.iter().map(|i| i.curve.clone()).collect();
    if names.iter().collect::<std::collections::BTreeSet<_>>().len() != names.len() {
        return Err(Failure::config("each curve name may appear once"));
    }

    let raw = match (&args.config, &args.preset) {
        (None, None) => None,
        (c, p) => Some(load_raw(c.as_deref(), p.as_deref())?),
    };
    if let Some(raw) = &raw {
        let exp = Experiment::from_raw(raw.clone())?;
        if exp.time_axis != axis {
            return Err(Failure::config("config and inputs use different time units"));
        }
        let internal = TimeGrid::new(
            exp.time_axis.to_internal(&exp.units, grid.start()),
            exp.time_axis.to_internal(&exp.units, grid.end()),
            grid.len(),
        )?;
        if !internal.matches(&exp.grid, 1e-9) {
            return Err(Failure::config(format!(
                "grid mismatch: inputs have {} bins over [{}, {}] {}, the config {} bins over [0, {}]",
                grid.len(),
                grid.start(),
                grid.end(),
                axis.suffix(),
                exp.grid.len(),
                exp.time_out(exp.grid.end())
            )));
        }
        let plane = exp.spec.z.clone();
        for (name, kind) in [("j_flux", FluxKind::BohmianJ), ("Jstar_flux", FluxKind::BackwardJStar), ("J_flux", FluxKind::ForwardJ)] {
            curves.push(to_output(&exp, current_flux(&plane, &exp.detector, internal, kind)?, grid));
            names.push(name.into());
        }
        curves.push(to_output(
            &exp,
            analytic_density_flux(&plane, &exp.detector, exp.trajectories.dt, internal)?,
            grid,
        ));
        names.push("density_prop".into());
    }

    let pairs: Vec<(&str, &FluxCurve)> = names.iter().map(String::as_str).zip(curves.iter()).collect();
    let report = normalize_and_compare(&pairs)?;
    print_report(&report, axis);

    let ax = axis.suffix();
    let t_col = format!("t_{ax}");
    let mut header = vec![t_col.as_str()];
    header.extend(COLUMNS);
    let table = csv("comparison.csv", &header, |w| {
        for k in 0..grid.len() {
            let mut row = vec![num(grid.center(k))];
            for col in COLUMNS {
                row.push(report.curve(col).map_or(String::new(), |c| num(c.values[k])));
            }
            w.write_record(&row)?;
        }
        Ok(())
    })?;
    let report_json = Artifact {
        name: "report.json".into(),
        bytes: serde_json::to_vec_pretty(&json!({ "time_unit": ax, "report": report }))
            .map_err(|e| Failure::runtime(e.to_string()))?,
    };
    let summary = json!({
        "inputs": inputs.iter().map(|i| json!({"name": i.name, "sha256": i.digest})).collect::<Vec<_>>(),
        "detected_fraction": report.curves.iter().map(|c| (c.name.clone(), c.detected_fraction)).collect::<BTreeMap<_, _>>(),
        "vanishing_windows": report.vanishing.len(),
    });
    finish(&args.out_dir, &[table, report_json], manifest("compare", raw.as_ref(), threads, started, summary))
}

fn print_report(report: &ComparisonReport, axis: TimeAxis) {
    let ax = axis.suffix();
    for c in &report.curves {
        println!("{}: integral over the window {:.4}", c.name, c.detected_fraction);
    }
    for p in &report.pairs {
        let z = match (p.max_z, p.within_3sigma) {
            (Some(z), Some(f)) => format!(", max |z| {z:.2}, {:.1}% of bins within 3σ", 100.0 * f),
            _ => String::new(),
        };
        println!("{} vs {}: L∞ {:.4e}, L² {:.4e}{z}", p.a, p.b, p.linf, p.l2);
    }
    for v in &report.vanishing {
        println!(
            "{} vanishes over [{:.4}, {:.4}] {ax} where {} expects counts ({} bins)",
            v.curve, v.t_start, v.t_end, v.reference, v.bins
        );
    }
}

pub fn validate(args: ValidateArgs, threads: usize) -> Result<(), Failure> {
    let started = Instant::now();
    let checks = run_suite(args.seed)?;
    for c in &checks {
        println!("{}", c.line());
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} of {} checks passed", checks.len() - failed, checks.len());
    if let Some(dir) = &args.out_dir {
        let bytes = serde_json::to_vec_pretty(&checks).map_err(|e| Failure::runtime(e.to_string()))?;
        let artifacts = [Artifact {
            name: "validate.json".into(),
            bytes,
        }];
        let summary = json!({ "seed": args.seed, "failed": failed });
        finish(dir, &artifacts, manifest("validate", None, threads, started, summary))?;
    }
    if failed > 0 {
        return Err(Failure::runtime(format!("{failed} oracle checks failed")));
    }
    Ok(())
}
