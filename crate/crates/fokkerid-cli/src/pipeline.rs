//! Command implementations behind the CLI surface.

use fokkerid::error::Error;
use fokkerid::geometry::{assemble_operators, build_icosphere, load_mesh, store_mesh};
use fokkerid::harness::{
    evaluate, generate_measurement, preset_case1, preset_case2, preset_case3, ErrorReport,
    Measurement, Scenario,
};
use fokkerid::inversion::{
    bootstrap_initial_value, landweber_run, ForwardMap, LandweberConfig, ReconstructionRun,
    RunStatus,
};
use fokkerid::io::{
    self, NoisyFileEntry, RunManifest, SimulationManifest, RUN_FORMAT, SIM_FORMAT,
};
use fokkerid::model::{CaseTag, DriftContext};
use fokkerid::observation::ObservationSeries;
use fokkerid::pde::SolverOptions;
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::time::Instant;

type Result<T> = std::result::Result<T, Error>;

/// Versioned numeric defaults checked into the repository.
const DEFAULTS_TOML: &str = include_str!("../../../config/defaults.toml");

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DefaultsFile {
    schema_version: String,
    landweber: LandweberConfig,
}

fn load_defaults() -> Result<LandweberConfig> {
    let parsed: DefaultsFile = toml::from_str(DEFAULTS_TOML)
        .map_err(|e| Error::Config(format!("defaults schema is invalid: {e}")))?;
    if parsed.schema_version != "FOKKERID-DEFAULTS-v1" {
        return Err(Error::Config(format!(
            "unexpected defaults schema version {:?}",
            parsed.schema_version
        )));
    }
    parsed.landweber.validate()?;
    Ok(parsed.landweber)
}

// ---------------------------------------------------------------------------
// overrides: --set landweber.k_max=200 / --set scenario.coarse_level=2
// ---------------------------------------------------------------------------

fn parse_override_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or(toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(root: &mut toml::Value, path: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = path.split('.').collect();
    let mut cur = root;
    for p in &parts[..parts.len() - 1] {
        cur = cur
            .get_mut(p)
            .ok_or_else(|| Error::Config(format!("unknown override table {p:?} in {path:?}")))?;
    }
    let table = cur
        .as_table_mut()
        .ok_or_else(|| Error::Config(format!("override path {path:?} does not name a table entry")))?;
    table.insert(parts.last().unwrap().to_string(), value);
    Ok(())
}

/// Applies `--set` overrides and re-validates both structures against the
/// schema (unknown keys are rejected by the typed deserialization).
pub fn apply_overrides(
    scenario: Scenario,
    landweber: LandweberConfig,
    overrides: &[String],
) -> Result<(Scenario, LandweberConfig)> {
    if overrides.is_empty() {
        return Ok((scenario, landweber));
    }
    let mut scen_val = toml::Value::try_from(&scenario)
        .map_err(|e| Error::Config(format!("scenario serialization failed: {e}")))?;
    let mut lw_val = toml::Value::try_from(&landweber)
        .map_err(|e| Error::Config(format!("config serialization failed: {e}")))?;
    for entry in overrides {
        let (key, raw) = entry
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {entry:?} is not KEY=VALUE")))?;
        let value = parse_override_value(raw.trim());
        match key.trim().split_once('.') {
            Some(("landweber", rest)) => set_path(&mut lw_val, rest, value)?,
            Some(("scenario", rest)) => set_path(&mut scen_val, rest, value)?,
            _ => {
                return Err(Error::Config(format!(
                    "override key {key:?} must start with landweber. or scenario."
                )))
            }
        }
    }
    let scenario: Scenario = scen_val
        .try_into()
        .map_err(|e| Error::Config(format!("override left scenario invalid: {e}")))?;
    scenario.validate()?;
    let landweber: LandweberConfig = lw_val
        .try_into()
        .map_err(|e| Error::Config(format!("override left config invalid: {e}")))?;
    landweber.validate()?;
    Ok((scenario, landweber))
}

// ---------------------------------------------------------------------------
// mesh
// ---------------------------------------------------------------------------

fn default_cache_dir() -> PathBuf {
    std::env::var_os("FOKKERID_CACHE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("mesh-cache"))
}

pub fn cmd_mesh(level: u32, cache_dir: Option<PathBuf>) -> Result<()> {
    let dir = cache_dir.unwrap_or_else(default_cache_dir);
    std::fs::create_dir_all(&dir)?;
    let path = dir.join(format!("mesh-L{level}.txt"));
    if path.exists() {
        let mesh = load_mesh(&path)?;
        if mesh.refinement_level == level {
            println!(
                "cache hit: {} ({} triangles)",
                path.display(),
                mesh.n_cells()
            );
            return Ok(());
        }
        return Err(Error::Format(format!(
            "cache file {} holds level {} instead of {level}",
            path.display(),
            mesh.refinement_level
        )));
    }
    let mesh = build_icosphere(level)?;
    store_mesh(&mesh, &path)?;
    println!("built {} ({} triangles)", path.display(), mesh.n_cells());
    Ok(())
}

// ---------------------------------------------------------------------------
// preset
// ---------------------------------------------------------------------------

pub fn cmd_preset(case: u8, out: &Path) -> Result<()> {
    let scenario = match case {
        1 => preset_case1(),
        2 => preset_case2(),
        3 => preset_case3(),
        _ => return Err(Error::Config(format!("unknown preset case {case} (use 1, 2, or 3)"))),
    };
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    io::write_scenario(&scenario, out)?;
    println!("wrote scenario {:?} to {}", scenario.name, out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

/// File tag for a noise level: the decimal digits after "0." (0.05 -> "05").
fn noise_tag(level: f64) -> String {
    let s = format!("{level}");
    match s.strip_prefix("0.") {
        Some(rest) => rest.to_string(),
        None => s,
    }
}

pub fn cmd_simulate(
    scenario_path: &Path,
    out: &Path,
    dump_state: bool,
    overrides: &[String],
) -> Result<()> {
    let scenario = io::read_scenario(scenario_path)?;
    let (scenario, _) = apply_overrides(scenario, load_defaults()?, overrides)?;
    std::fs::create_dir_all(out)?;
    let m = generate_measurement(&scenario)?;
    write_measurement_files(&scenario, &m, out)?;
    if dump_state {
        std::fs::write(out.join("u_fine.csv"), io::state_dump_to_csv(&m.fine_state))?;
    }
    println!(
        "simulated {:?}: {} noise level(s), model mismatch {:.6e}",
        scenario.name,
        m.noisy.len(),
        m.model_mismatch
    );
    Ok(())
}

fn write_measurement_files(scenario: &Scenario, m: &Measurement, out: &Path) -> Result<()> {
    io::write_observation(&m.clean, &out.join("y.csv"))?;
    let mut noisy_entries = Vec::with_capacity(m.noisy.len());
    for n in &m.noisy {
        let file = format!("y_d{}.csv", noise_tag(n.level));
        io::write_observation(&n.series, &out.join(&file))?;
        noisy_entries.push(NoisyFileEntry { level: n.level, delta: n.delta, file });
    }
    let manifest = SimulationManifest {
        format: SIM_FORMAT.into(),
        scenario_name: scenario.name.clone(),
        case: scenario.case().number(),
        seed: scenario.seed,
        fine_level: scenario.fine_level,
        coarse_level: scenario.coarse_level,
        t_end: scenario.t_end,
        n_steps: scenario.n_steps,
        observation_sup_norm: fokkerid::observation::sup_norm(&m.clean),
        model_mismatch: m.model_mismatch,
        clean_file: "y.csv".into(),
        noisy: noisy_entries,
    };
    io::write_toml(&manifest, &out.join("manifest.toml"))?;
    io::write_scenario(scenario, &out.join("scenario.toml"))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// reconstruct
// ---------------------------------------------------------------------------

struct DeltaInfo {
    delta: f64,
    noise_level: Option<f64>,
}

fn resolve_delta(
    measurement: &Path,
    explicit: Option<f64>,
    mismatch_delta: bool,
) -> Result<DeltaInfo> {
    if let Some(d) = explicit {
        return Ok(DeltaInfo { delta: d, noise_level: None });
    }
    let manifest_path = measurement
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join("manifest.toml");
    if !manifest_path.exists() {
        if mismatch_delta {
            return Err(Error::Config(format!(
                "--mismatch-delta needs the simulation manifest at {}",
                manifest_path.display()
            )));
        }
        eprintln!(
            "warning: no simulation manifest next to {}; using delta = 0",
            measurement.display()
        );
        return Ok(DeltaInfo { delta: 0.0, noise_level: None });
    }
    let manifest: SimulationManifest = io::read_toml(&manifest_path)?;
    manifest.validate()?;
    let file_name = measurement
        .file_name()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_default();
    let (noise_delta, noise_level) = manifest
        .noisy
        .iter()
        .find(|e| e.file == file_name)
        .map(|e| (e.delta, e.level))
        .unwrap_or((0.0, 0.0)); // clean file: no noise was injected
    let delta = if mismatch_delta { manifest.model_mismatch } else { noise_delta };
    Ok(DeltaInfo { delta, noise_level: Some(noise_level) })
}

pub fn cmd_reconstruct(
    measurement: &Path,
    scenario_path: &Path,
    out: &Path,
    delta: Option<f64>,
    mismatch_delta: bool,
    overrides: &[String],
) -> Result<()> {
    let scenario = io::read_scenario(scenario_path)?;
    let config = load_defaults()?;
    let (scenario, config) = apply_overrides(scenario, config, overrides)?;
    let y_delta = io::read_observation(measurement)?;
    let info = resolve_delta(measurement, delta, mismatch_delta)?;
    std::fs::create_dir_all(out)?;
    let manifest = reconstruct_into(
        &scenario,
        &config,
        &y_delta,
        info.delta,
        info.noise_level,
        overrides,
        out,
    )?;
    println!(
        "reconstruction {:?}: status {:?}, {} iterations, final discrepancy {:.6e}",
        scenario.name,
        manifest.status,
        manifest.iterations,
        manifest.final_discrepancy
    );
    Ok(())
}

/// Core reconstruction shared by `reconstruct` and `ladder`: builds the coarse
/// problem, runs the (optional) bootstrap plus the main Landweber iteration,
/// evaluates against the scenario ground truth, and writes all artifacts.
pub fn reconstruct_into(
    scenario: &Scenario,
    config: &LandweberConfig,
    y_delta: &ObservationSeries,
    delta: f64,
    noise_level: Option<f64>,
    overrides: &[String],
    out: &Path,
) -> Result<RunManifest> {
    let started = Instant::now();
    let grid = scenario.time_grid()?;
    if !y_delta.time_grid.matches(&grid) {
        return Err(Error::Shape(format!(
            "measurement grid ({} steps, T={}) does not match scenario grid ({} steps, T={})",
            y_delta.time_grid.n_steps, y_delta.time_grid.t_end, grid.n_steps, grid.t_end
        )));
    }
    let mesh = build_icosphere(scenario.coarse_level)?;
    let ops = assemble_operators(&mesh, scenario.constants.lambda)?;
    let background = scenario.background_samples(&grid);
    let ctx = DriftContext::new(&scenario.constants, &mesh, grid, background.as_deref());
    let u0 = scenario.initial_density(&mesh);
    let problem = ForwardMap {
        ctx,
        ops: &ops,
        u0: &u0,
        mode: scenario.observation,
        solver: SolverOptions::default(),
    };
    let truth = scenario.ground_truth.synthesize(&mesh, &grid, &scenario.constants);
    let mut p1 = scenario.initial_guess.synthesize(&mesh, &grid, &scenario.constants);

    // easy-axis runs search for a workable initial value first
    let mut bootstrap_used = false;
    if scenario.case() == CaseTag::EasyAxis && config.bootstrap_k_max > 0 {
        println!(
            "bootstrap: smoothing-free initial-value run ({} iterations max)",
            config.bootstrap_k_max
        );
        let mut boot = config.clone();
        boot.find_initial_value = true;
        p1 = bootstrap_initial_value(y_delta, &p1, &boot, &problem, delta)?;
        bootstrap_used = true;
    }

    let run = landweber_run(y_delta, &p1, config, &problem, delta, Some(&truth))?;
    let report = evaluate(
        &run,
        &truth,
        &ctx,
        noise_level.unwrap_or(f64::NAN),
        scenario.seed,
    )?;
    write_run_artifacts(scenario, config, &run, &report, overrides, bootstrap_used, started, out)
}

#[allow(clippy::too_many_arguments)]
fn write_run_artifacts(
    scenario: &Scenario,
    config: &LandweberConfig,
    run: &ReconstructionRun,
    report: &ErrorReport,
    overrides: &[String],
    bootstrap_used: bool,
    started: Instant,
    out: &Path,
) -> Result<RunManifest> {
    let grid = scenario.time_grid()?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("trace.csv"), io::trace_to_csv(&run.trace))?;
    io::write_parameter(&run.final_parameter, &grid, &out.join("p_final.csv"))?;
    let (dp_param, _) = run.discrepancy_choice();
    io::write_parameter(dp_param, &grid, &out.join("p_discrepancy.csv"))?;
    if let Some(best) = &run.best_parameter {
        io::write_parameter(best, &grid, &out.join("p_best.csv"))?;
    }
    if config.store_iterates {
        let dir = out.join("iterates");
        std::fs::create_dir_all(&dir)?;
        for (record, p) in run.trace.iter().zip(&run.iterates) {
            io::write_parameter(p, &grid, &dir.join(format!("iter_{:04}.csv", record.k)))?;
        }
    }
    std::fs::write(
        out.join("error_report.csv"),
        io::error_table_to_csv(std::slice::from_ref(report)),
    )?;

    let manifest = RunManifest {
        format: RUN_FORMAT.into(),
        scenario_name: scenario.name.clone(),
        case: scenario.case().number(),
        seed: scenario.seed,
        noise_level: if report.noise_level.is_nan() { None } else { Some(report.noise_level) },
        status: run.status,
        delta: run.delta,
        omega: run.omega_used,
        iterations: run.trace.len(),
        final_discrepancy: run.final_discrepancy(),
        initial_discrepancy: run.trace.first().map_or(f64::NAN, |r| r.discrepancy),
        discrepancy_stop_index: run.discrepancy_stop_index,
        best_index: run.best_index,
        bootstrap_used,
        total_wall_time: started.elapsed().as_secs_f64(),
        overrides: overrides.to_vec(),
        config: config.clone(),
        error_report: Some(report.clone()),
    };
    io::write_toml(&manifest, &out.join("run.toml"))?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

pub fn cmd_evaluate(runs: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let mut reports = Vec::new();
    let mut absent_rows = String::new();
    for dir in runs {
        let manifest_path = dir.join("run.toml");
        let manifest: RunManifest = match io::read_toml(&manifest_path) {
            Ok(m) => m,
            Err(e) => {
                eprintln!("warning: skipping {} ({e})", dir.display());
                continue;
            }
        };
        match manifest.error_report {
            Some(r) => reports.push(r),
            None => {
                // discrepancy-only report: error columns marked absent
                let (idx, level) = (
                    manifest.discrepancy_stop_index.unwrap_or(manifest.iterations),
                    manifest.noise_level.unwrap_or(f64::NAN),
                );
                absent_rows.push_str(&io::error_table_absent_row(level, manifest.seed, idx));
            }
        }
    }
    let mut table = io::error_table_to_csv(&reports);
    table.push_str(&absent_rows);
    match out {
        Some(path) => std::fs::write(path, table)?,
        None => print!("{table}"),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// ladder
// ---------------------------------------------------------------------------

fn parse_seeds(seeds: Option<&str>, fallback: u64) -> Result<Vec<u64>> {
    match seeds {
        None => Ok(vec![fallback]),
        Some(s) => s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<u64>()
                    .map_err(|e| Error::Config(format!("bad seed {p:?}: {e}")))
            })
            .collect(),
    }
}

pub fn cmd_ladder(
    scenario_path: &Path,
    out: &Path,
    seeds: Option<&str>,
    overrides: &[String],
) -> Result<()> {
    let scenario = io::read_scenario(scenario_path)?;
    let config = load_defaults()?;
    let (scenario, config) = apply_overrides(scenario, config, overrides)?;
    if scenario.noise_levels.is_empty() {
        return Err(Error::Config("ladder needs a scenario with noise levels".into()));
    }
    let seeds = parse_seeds(seeds, scenario.seed)?;
    std::fs::create_dir_all(out)?;

    // one measurement per seed, then independent reconstructions in parallel
    struct Job {
        scenario: Scenario,
        y: ObservationSeries,
        delta: f64,
        level: f64,
        dir: PathBuf,
    }
    let mut jobs = Vec::new();
    for &seed in &seeds {
        let mut s = scenario.clone();
        s.seed = seed;
        let m = generate_measurement(&s)?;
        let meas_dir = out.join(format!("measurement_s{seed}"));
        std::fs::create_dir_all(&meas_dir)?;
        write_measurement_files(&s, &m, &meas_dir)?;
        for n in &m.noisy {
            jobs.push(Job {
                scenario: s.clone(),
                y: n.series.clone(),
                delta: n.delta,
                level: n.level,
                dir: out.join(format!("run_n{}_s{seed}", noise_tag(n.level))),
            });
        }
    }

    println!(
        "ladder: {} runs ({} seeds x {} levels)",
        jobs.len(),
        seeds.len(),
        scenario.noise_levels.len()
    );
    let results: Vec<Result<RunManifest>> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|job| {
                let config = &config;
                let overrides = &overrides;
                scope.spawn(move || {
                    reconstruct_into(
                        &job.scenario,
                        config,
                        &job.y,
                        job.delta,
                        Some(job.level),
                        overrides,
                        &job.dir,
                    )
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("reconstruction thread panicked"))
            .collect()
    });

    let mut reports = Vec::new();
    for (job, result) in jobs.iter().zip(results) {
        let manifest = result?;
        println!(
            "  noise {:>6} seed {:>3}: status {:?}, {} iterations",
            job.level, job.scenario.seed, manifest.status, manifest.iterations
        );
        if manifest.status == RunStatus::Stalled {
            eprintln!("  note: run in {} stalled (Armijo exhaustion)", job.dir.display());
        }
        if let Some(r) = manifest.error_report {
            reports.push(r);
        }
    }
    std::fs::write(out.join("table.csv"), io::error_table_to_csv(&reports))?;
    println!("wrote {}", out.join("table.csv").display());
    Ok(())
}
