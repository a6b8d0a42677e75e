//! Result records and file writers. Everything except `metadata.json` is a
//! pure function of the effective config, so reruns are byte-identical.

use bubblechan::fit::{MomentSummary, ObstructionModel};
use bubblechan::simulator::EmpiricalDistribution;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use crate::config::{EnvConfig, RunConfig};
use crate::CliError;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(io(format!("cannot create {}", dir.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(io(format!("cannot write {}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("records serialise");
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(io(format!("cannot read {}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
    for row in rows {
        w.serialize(row)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
    }
    w.flush().map_err(io(format!("cannot write {}", path.display())))
}

/// Wall-clock bookkeeping, kept apart from the reproducible outputs.
pub struct RunClock {
    started: Instant,
    started_unix: u64,
}

impl RunClock {
    pub fn start() -> Self {
        Self {
            started: Instant::now(),
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        }
    }

    pub fn write(&self, dir: &Path, command: &str) -> Result<(), CliError> {
        let meta = Metadata {
            command: command.into(),
            tool_version: TOOL_VERSION.into(),
            started_unix_s: self.started_unix,
            wall_clock_s: self.started.elapsed().as_secs_f64(),
            threads: rayon::current_num_threads(),
        };
        write_json(&dir.join("metadata.json"), &meta)
    }
}

#[derive(Debug, Serialize)]
struct Metadata {
    command: String,
    tool_version: String,
    started_unix_s: u64,
    wall_clock_s: f64,
    threads: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmpiricalSummary {
    pub n_trials: usize,
    pub seed: u64,
    pub m: f64,
    pub a_hat: f64,
    pub b_hat: f64,
    pub c_hat: f64,
    pub mean_received: f64,
    pub interior_fraction: f64,
}

impl EmpiricalSummary {
    pub fn new(dist: &EmpiricalDistribution) -> Self {
        Self {
            n_trials: dist.n_trials,
            seed: dist.seed,
            m: dist.m,
            a_hat: dist.mass_at_m,
            b_hat: 1.0 - dist.mass_at_m,
            c_hat: dist.mass_at_zero,
            mean_received: dist.mean_received(),
            interior_fraction: dist.interior_mass(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SimulationRecord<'a> {
    pub tool_version: &'a str,
    pub config: &'a RunConfig,
    pub empirical: EmpiricalSummary,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitScores {
    pub mse: f64,
    pub r2: f64,
    pub n_trials: usize,
}

#[derive(Debug, Serialize)]
pub struct FitRecord<'a> {
    pub tool_version: &'a str,
    pub config: &'a RunConfig,
    pub model: ObstructionModel,
    pub moments: &'a MomentSummary,
    pub scores: Option<FitScores>,
    pub empirical: Option<EmpiricalSummary>,
}

/// Model file consumed by `analyze`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelRecord {
    pub id: String,
    #[serde(flatten)]
    pub model: ObstructionModel,
    pub env: EnvConfig,
}

impl ModelRecord {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let rec: ModelRecord = read_json(path)?;
        let check = ObstructionModel::new(rec.model.a, rec.model.k, rec.model.lambda, rec.model.m)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Ok(ModelRecord { model: check, ..rec })
    }
}

#[derive(Debug, Serialize)]
pub struct SampleRow {
    pub received_power: f64,
    pub obstruction: f64,
}

#[derive(Debug, Deserialize)]
pub struct SampleRowIn {
    pub received_power: f64,
    pub obstruction: f64,
}

#[derive(Debug, Serialize)]
pub struct HistogramRow {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: u64,
}

#[derive(Debug, Serialize)]
pub struct Table1Row {
    pub id: String,
    pub rate_hz: f64,
    pub mu_r_mm: f64,
    pub sim_c: f64,
    pub sim_b: f64,
    pub sim_a: f64,
    pub model_c: f64,
    pub model_b: f64,
    pub model_a: f64,
    pub k: f64,
    pub lambda: f64,
    pub mse: f64,
    pub r2: f64,
}

/// `--out`, else the config's `output_dir`, else `out/<label>/<command>`.
pub fn output_dir(flag: Option<&Path>, cfg: &RunConfig, label: &str, command: &str) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(label).join(command))
}
