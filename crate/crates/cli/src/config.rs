//! Run configuration as read from TOML. Physical quantities carry their SI
//! unit in the key name; unknown keys are rejected so a stray `mu_r_mm`
//! cannot silently fall back to a default.

use bubblechan::bubble::{BubbleEnvironment, FluidConstants};
use bubblechan::channel::{db_to_linear, CompositeChannelParams, DEFAULT_GL_ORDER};
use bubblechan::geometry::BeamSpec;
use bubblechan::simulator::DEFAULT_HISTOGRAM_BINS;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Label used as `model_id` and in table rows.
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Exact case formulas for every bubble instead of the cache.
    #[serde(default)]
    pub exact_geometry: bool,
    pub env: EnvConfig,
    #[serde(default)]
    pub channel: ChannelConfig,
}

fn default_seed() -> u64 {
    1
}

fn default_trials() -> usize {
    100_000
}

fn default_bins() -> usize {
    DEFAULT_HISTOGRAM_BINS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    /// Generation interval L; give either this or `rate_hz`.
    #[serde(default)]
    pub l_s: Option<f64>,
    #[serde(default)]
    pub rate_hz: Option<f64>,
    pub mu_r_m: f64,
    #[serde(default = "default_sigma_x")]
    pub sigma_x_m: f64,
    #[serde(default = "default_r_max")]
    pub r_max_m: f64,
    #[serde(default = "default_window")]
    pub window_s: f64,
    #[serde(default)]
    pub fluid: FluidConfig,
    #[serde(default)]
    pub beam: BeamConfig,
}

fn default_sigma_x() -> f64 {
    5e-3
}

fn default_r_max() -> f64 {
    0.01
}

fn default_window() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidConfig {
    pub density_kg_m3: f64,
    pub viscosity_pa_s: f64,
    pub surface_tension_n_m: f64,
    pub gravity_m_s2: f64,
}

impl Default for FluidConfig {
    fn default() -> Self {
        let f = FluidConstants::default();
        Self {
            density_kg_m3: f.density,
            viscosity_pa_s: f.viscosity,
            surface_tension_n_m: f.surface_tension,
            gravity_m_s2: f.gravity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamConfig {
    pub sigma_m: f64,
    pub aperture_radius_m: f64,
    pub center_height_m: f64,
}

impl Default for BeamConfig {
    fn default() -> Self {
        let b = BeamSpec::default();
        Self {
            sigma_m: b.sigma,
            aperture_radius_m: b.aperture_radius,
            center_height_m: b.center_height,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Path loss h_l (dimensionless).
    pub h_l: f64,
    pub avg_snr_db: f64,
    pub p: f64,
    pub q: f64,
    pub gl_order: usize,
    /// Default sweep grid, "LO:HI:STEP" in dB.
    pub snr_grid_db: String,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        let c = CompositeChannelParams::default();
        Self {
            alpha: c.alpha,
            beta: c.beta,
            h_l: c.h_l,
            avg_snr_db: c.avg_snr_db(),
            p: c.p,
            q: c.q,
            gl_order: DEFAULT_GL_ORDER,
            snr_grid_db: "0:50:1".into(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.n_trials == 0 {
            return Err(CliError::Config("n_trials must be at least 1".into()));
        }
        if self.histogram_bins == 0 {
            return Err(CliError::Config("histogram_bins must be at least 1".into()));
        }
        self.environment()?;
        self.channel_params()?;
        parse_snr_grid(&self.channel.snr_grid_db)?;
        Ok(())
    }

    pub fn environment(&self) -> Result<BubbleEnvironment, CliError> {
        let e = &self.env;
        let interval = match (e.l_s, e.rate_hz) {
            (Some(l), None) => l,
            (None, Some(r)) if r > 0.0 => 1.0 / r,
            (None, Some(r)) => return Err(CliError::Config(format!("rate_hz must be positive, got {r}"))),
            _ => return Err(CliError::Config("env needs exactly one of l_s and rate_hz".into())),
        };
        let env = BubbleEnvironment {
            interval,
            mean_radius: e.mu_r_m,
            sigma_x: e.sigma_x_m,
            max_radius: e.r_max_m,
            window: e.window_s,
            fluid: FluidConstants {
                density: e.fluid.density_kg_m3,
                viscosity: e.fluid.viscosity_pa_s,
                surface_tension: e.fluid.surface_tension_n_m,
                gravity: e.fluid.gravity_m_s2,
            },
            beam: BeamSpec {
                sigma: e.beam.sigma_m,
                aperture_radius: e.beam.aperture_radius_m,
                center_height: e.beam.center_height_m,
            },
        };
        env.validate().map_err(|err| CliError::Config(err.to_string()))?;
        Ok(env)
    }

    pub fn channel_params(&self) -> Result<CompositeChannelParams, CliError> {
        let c = &self.channel;
        let params = CompositeChannelParams {
            alpha: c.alpha,
            beta: c.beta,
            h_l: c.h_l,
            avg_snr: db_to_linear(c.avg_snr_db),
            p: c.p,
            q: c.q,
            gl_order: c.gl_order,
        };
        params.validate().map_err(|err| CliError::Config(err.to_string()))?;
        if (c.alpha - c.beta).abs() > 50.0 {
            return Err(CliError::Config("|alpha - beta| must not exceed 50".into()));
        }
        Ok(params)
    }

    /// Label for outputs: `id`, else the config file stem.
    pub fn label(&self, path: Option<&Path>) -> String {
        self.id
            .clone()
            .or_else(|| path.and_then(|p| p.file_stem()).map(|s| s.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "model".into())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

/// Parses "LO:HI:STEP" (dB) into an inclusive grid.
pub fn parse_snr_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Config(format!("SNR grid must look like LO:HI:STEP, got {spec:?}"));
    let parts: Vec<f64> = spec
        .split(':')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    let [lo, hi, step] = parts[..] else { return Err(bad()) };
    if !(lo.is_finite() && hi.is_finite() && step.is_finite()) || hi < lo {
        return Err(bad());
    }
    if lo == hi {
        return Ok(vec![lo]);
    }
    if step <= 0.0 {
        return Err(bad());
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    if n > 1_000_000 {
        return Err(CliError::Config(format!("SNR grid {spec:?} is too large")));
    }
    Ok((0..=n).map(|j| lo + step * j as f64).collect())
}
