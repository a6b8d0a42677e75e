use bubblechan::bubble::BubbleEnvironment;
use bubblechan::channel::{sweep, CompositeChannelParams};
use bubblechan::fit::{mse_points, mse_test, model_from_intervals, r2_test, MomentEngine, MomentSummary, ObstructionModel};
use bubblechan::geometry::aperture_power;
use bubblechan::simulator::{EmpiricalDistribution, Simulator, TrialOutcome};
use serde::Deserialize;
use std::path::{Path, PathBuf};

use crate::config::{parse_snr_grid, RunConfig};
use crate::output::*;
use crate::{CliError, RunArgs};

/// Points at which the CDF MSE is evaluated.
const MSE_POINTS: usize = 100;

pub const TABLE1_RATES_HZ: [u32; 4] = [20, 40, 80, 160];
pub const TABLE1_RADII_MM: [&str; 4] = ["1.35", "1.50", "1.95", "2.99"];

fn effective_config(args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.trials {
        cfg.n_trials = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn simulator(env: BubbleEnvironment, exact: bool, bins: usize) -> Result<Simulator, CliError> {
    let sim = if exact { Simulator::exact(env)? } else { Simulator::new(env)? };
    Ok(sim.with_histogram_bins(bins))
}

fn run_simulation(cfg: &RunConfig, exact: bool) -> Result<EmpiricalDistribution, CliError> {
    let env = cfg.environment()?;
    Ok(simulator(env, exact, cfg.histogram_bins)?.run(cfg.n_trials, cfg.seed)?)
}

pub fn simulate(args: &RunArgs) -> Result<(), CliError> {
    let clock = RunClock::start();
    let mut cfg = effective_config(args)?;
    cfg.exact_geometry |= args.exact_geometry;
    let label = cfg.label(Some(&args.config));
    let dir = output_dir(args.out.as_deref(), &cfg, &label, "simulate");
    ensure_dir(&dir)?;

    let dist = run_simulation(&cfg, cfg.exact_geometry)?;
    let samples: Vec<SampleRow> = dist
        .samples
        .iter()
        .zip(&dist.obstruction)
        .map(|(&received_power, &obstruction)| SampleRow {
            received_power,
            obstruction,
        })
        .collect();
    write_csv(&dir.join("samples.csv"), &samples)?;
    let hist: Vec<HistogramRow> = dist
        .histogram
        .edges
        .windows(2)
        .zip(&dist.histogram.counts)
        .map(|(e, &count)| HistogramRow {
            bin_lo: e[0],
            bin_hi: e[1],
            count,
        })
        .collect();
    write_csv(&dir.join("histogram.csv"), &hist)?;
    write_text(&dir.join("config.toml"), &cfg.to_toml())?;
    let summary = EmpiricalSummary::new(&dist);
    eprintln!(
        "{label}: a_hat = {:.5}, c_hat = {:.5} over {} trials",
        summary.a_hat, summary.c_hat, summary.n_trials
    );
    write_json(
        &dir.join("summary.json"),
        &SimulationRecord {
            tool_version: TOOL_VERSION,
            config: &cfg,
            empirical: summary,
        },
    )?;
    clock.write(&dir, "simulate")
}

/// Model plus moment diagnostics; a fit failure reports the moments.
fn fit_model(engine: &MomentEngine, env: &BubbleEnvironment) -> Result<(ObstructionModel, MomentSummary), CliError> {
    let intervals = engine.interval_moments(env)?;
    model_from_intervals(&intervals, aperture_power(&env.beam)).map_err(|e| {
        let s = MomentSummary::from_intervals(&intervals);
        CliError::Numerical(format!("{e}; E[B] = {:e}, E[B^2] = {:e}", s.e_b, s.e_b2))
    })
}

#[derive(Debug, Deserialize)]
struct SimulationHeader {
    config: RunConfig,
}

/// Rebuilds an empirical distribution from a `simulate` output directory.
fn load_simulation(dir: &Path, env: &BubbleEnvironment, bins: usize) -> Result<EmpiricalDistribution, CliError> {
    let header: SimulationHeader = read_json(&dir.join("summary.json"))?;
    if header.config.environment()? != *env {
        return Err(CliError::Config(format!(
            "simulation in {} was run for a different environment",
            dir.display()
        )));
    }
    let path = dir.join("samples.csv");
    let mut reader =
        csv::Reader::from_path(&path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let outcomes = reader
        .deserialize::<SampleRowIn>()
        .map(|row| {
            row.map(|r| TrialOutcome {
                obstruction: r.obstruction,
                received: r.received_power,
            })
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(EmpiricalDistribution::from_outcomes(
        &outcomes,
        aperture_power(&env.beam),
        bins,
        header.config.seed,
    )?)
}

fn scores(dist: &EmpiricalDistribution, model: &ObstructionModel) -> Result<FitScores, CliError> {
    Ok(FitScores {
        mse: mse_test(dist, model, &mse_points(model.m, MSE_POINTS)),
        r2: r2_test(dist, model)?,
        n_trials: dist.n_trials,
    })
}

pub fn fit(args: &RunArgs, simulation: Option<&Path>) -> Result<(), CliError> {
    let clock = RunClock::start();
    let cfg = effective_config(args)?;
    let label = cfg.label(Some(&args.config));
    let dir = output_dir(args.out.as_deref(), &cfg, &label, "fit");
    let env = cfg.environment()?;
    let engine = MomentEngine::new(&env)?;
    let (model, moments) = fit_model(&engine, &env)?;
    let empirical = simulation
        .map(|sim| load_simulation(sim, &env, cfg.histogram_bins))
        .transpose()?;
    let fit_scores = empirical.as_ref().map(|d| scores(d, &model)).transpose()?;

    ensure_dir(&dir)?;
    write_json(
        &dir.join("model.json"),
        &ModelRecord {
            id: label.clone(),
            model,
            env: cfg.env.clone(),
        },
    )?;
    write_text(&dir.join("config.toml"), &cfg.to_toml())?;
    write_json(
        &dir.join("summary.json"),
        &FitRecord {
            tool_version: TOOL_VERSION,
            config: &cfg,
            model,
            moments: &moments,
            scores: fit_scores,
            empirical: empirical.as_ref().map(EmpiricalSummary::new),
        },
    )?;
    eprintln!(
        "{label}: a = {:.5}, c = {:.5}, k = {:.4}, lambda = {:.5}",
        model.a, model.c, model.k, model.lambda
    );
    if let Some(s) = fit_scores {
        eprintln!("{label}: MSE = {:.3e}, R2 = {:.4}", s.mse, s.r2);
    }
    clock.write(&dir, "fit")
}

pub fn analyze(config: Option<&Path>, models: &[PathBuf], snr_db: Option<&str>, out: Option<&Path>) -> Result<(), CliError> {
    let clock = RunClock::start();
    let cfg = config.map(RunConfig::load).transpose()?;
    let params = match &cfg {
        Some(c) => c.channel_params()?,
        None => CompositeChannelParams::default(),
    };
    let grid_spec = snr_db
        .map(str::to_owned)
        .or_else(|| cfg.as_ref().map(|c| c.channel.snr_grid_db.clone()))
        .unwrap_or_else(|| "0:50:1".into());
    let grid = parse_snr_grid(&grid_spec)?;
    if models.is_empty() {
        return Err(CliError::Config("analyze needs at least one --model file".into()));
    }
    let records = models.iter().map(|p| ModelRecord::load(p)).collect::<Result<Vec<_>, _>>()?;
    let named: Vec<(String, ObstructionModel)> = records.into_iter().map(|r| (r.id, r.model)).collect();
    let rows = sweep(&named, &params, &grid)?;

    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("out").join("analyze"));
    ensure_dir(&dir)?;
    write_csv(&dir.join("performance.csv"), &rows)?;
    clock.write(&dir, "analyze")
}

fn table1_file(rate: u32, radius_mm: &str) -> String {
    format!("rate{rate}_mu{radius_mm}mm.toml")
}

pub fn table1(config_dir: &Path, seed: Option<u64>, trials: Option<usize>, out: &Path, exact: bool) -> Result<(), CliError> {
    let clock = RunClock::start();
    let files: Vec<PathBuf> = TABLE1_RATES_HZ
        .iter()
        .flat_map(|&r| TABLE1_RADII_MM.iter().map(move |&mu| config_dir.join(table1_file(r, mu))))
        .collect();
    let missing: Vec<String> = files.iter().filter(|p| !p.is_file()).map(|p| p.display().to_string()).collect();
    if !missing.is_empty() {
        return Err(CliError::Config(format!("missing reference-grid configs: {}", missing.join(", "))));
    }
    let mut configs = Vec::with_capacity(files.len());
    for path in &files {
        let mut cfg = RunConfig::load(path)?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        if let Some(n) = trials {
            cfg.n_trials = n;
        }
        cfg.exact_geometry |= exact;
        cfg.validate()?;
        configs.push(cfg);
    }

    let mut engine: Option<MomentEngine> = None;
    let mut rows = Vec::with_capacity(configs.len());
    for (cfg, path) in configs.iter().zip(&files) {
        let env = cfg.environment()?;
        if !engine.as_ref().is_some_and(|e| e.supports(&env)) {
            engine = Some(MomentEngine::new(&env)?);
        }
        let (model, _) = fit_model(engine.as_ref().expect("engine built above"), &env)?;
        let dist = run_simulation(cfg, cfg.exact_geometry)?;
        let s = scores(&dist, &model)?;
        let id = cfg.label(Some(path));
        eprintln!(
            "{id}: a {:.4} / {:.4}, c {:.5} / {:.5}, k {:.3}, lambda {:.4}, MSE {:.2e}, R2 {:.3}",
            model.a, dist.mass_at_m, model.c, dist.mass_at_zero, model.k, model.lambda, s.mse, s.r2
        );
        rows.push(Table1Row {
            id,
            rate_hz: 1.0 / env.interval,
            mu_r_mm: env.mean_radius * 1e3,
            sim_c: dist.mass_at_zero,
            sim_b: 1.0 - dist.mass_at_m,
            sim_a: dist.mass_at_m,
            model_c: model.c,
            model_b: model.b,
            model_a: model.a,
            k: model.k,
            lambda: model.lambda,
            mse: s.mse,
            r2: s.r2,
        });
    }
    ensure_dir(out)?;
    write_csv(&out.join("table1.csv"), &rows)?;
    clock.write(out, "table1")
}
