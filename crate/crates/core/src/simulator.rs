//! Monte Carlo engine: draws whole bubble populations, sums the per-bubble
//! blocked power and records the distribution of received power.

use crate::bubble::{bubble_from_draws, draw_uniforms, sample_bubble_with, BubbleEnvironment, BubbleSampler};
use crate::error::{Error, Result};
use crate::geometry::{aperture_power, obstructed_power_case, BeamSpec, OccluderGeometry};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Default resolution of the (D, R) obstruction cache along each axis.
pub const DEFAULT_TABLE_SIZE: usize = 200;
/// Default number of interior histogram bins on (0, m).
pub const DEFAULT_HISTOGRAM_BINS: usize = 100;

/// Tabulated blocked power over normalised distance u = D/(r+R) ∈ [0, 1]
/// and radius R ∈ [0, R_max], read back with bicubic (Catmull-Rom)
/// interpolation.
#[derive(Debug, Clone)]
pub struct ObstructionTable {
    aperture_radius: f64,
    max_radius: f64,
    n_u: usize,
    n_r: usize,
    values: Vec<f64>,
    m: f64,
}

impl ObstructionTable {
    pub fn build(beam: &BeamSpec, max_radius: f64, n_u: usize, n_r: usize) -> Result<Self> {
        if n_u < 4 || n_r < 4 {
            return Err(Error::Parameter(format!("obstruction table needs at least 4x4 nodes, got {n_u}x{n_r}")));
        }
        let r = beam.aperture_radius;
        let rows: Result<Vec<Vec<f64>>> = (0..n_r)
            .into_par_iter()
            .map(|j| {
                let radius = max_radius * j as f64 / (n_r - 1) as f64;
                (0..n_u)
                    .map(|i| {
                        let u = i as f64 / (n_u - 1) as f64;
                        if radius == 0.0 || i == n_u - 1 {
                            return Ok(0.0);
                        }
                        obstructed_power_case(&OccluderGeometry::new(radius, u * (r + radius)), beam)
                    })
                    .collect()
            })
            .collect();
        let values = rows?.into_iter().flatten().collect();
        Ok(Self {
            aperture_radius: r,
            max_radius,
            n_u,
            n_r,
            values,
            m: aperture_power(beam),
        })
    }

    #[inline]
    fn at(&self, i: isize, j: isize) -> f64 {
        let i = i.clamp(0, self.n_u as isize - 1) as usize;
        let j = j.clamp(0, self.n_r as isize - 1) as usize;
        self.values[j * self.n_u + i]
    }

    /// Interpolated blocked power for a bubble of `radius` at `distance`.
    pub fn lookup(&self, radius: f64, distance: f64) -> f64 {
        let reach = self.aperture_radius + radius;
        if distance >= reach || radius <= 0.0 {
            return 0.0;
        }
        let fu = distance / reach * (self.n_u - 1) as f64;
        let fr = (radius / self.max_radius).min(1.0) * (self.n_r - 1) as f64;
        let (iu, tu) = split(fu, self.n_u);
        let (ir, tr) = split(fr, self.n_r);
        let wu = catmull_rom(tu);
        let wr = catmull_rom(tr);
        let mut acc = 0.0;
        for (b, wb) in wr.iter().enumerate() {
            let j = ir + b as isize - 1;
            let mut row = 0.0;
            for (a, wa) in wu.iter().enumerate() {
                row += wa * self.at(iu + a as isize - 1, j);
            }
            acc += wb * row;
        }
        acc.clamp(0.0, self.m)
    }
}

#[inline]
fn split(f: f64, n: usize) -> (isize, f64) {
    let i = (f.floor() as isize).clamp(0, n as isize - 2);
    (i, f - i as f64)
}

#[inline]
fn catmull_rom(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

/// How per-bubble blocked power is evaluated during simulation.
#[derive(Debug, Clone)]
pub enum ObstructionEvaluator {
    /// Case formulas evaluated for every bubble.
    Exact(BeamSpec),
    /// Cached table lookups.
    Interpolated(Arc<ObstructionTable>),
}

impl ObstructionEvaluator {
    pub fn exact(env: &BubbleEnvironment) -> Self {
        ObstructionEvaluator::Exact(env.beam)
    }

    pub fn interpolated(env: &BubbleEnvironment) -> Result<Self> {
        let table = ObstructionTable::build(&env.beam, env.max_radius, DEFAULT_TABLE_SIZE, DEFAULT_TABLE_SIZE)?;
        Ok(ObstructionEvaluator::Interpolated(Arc::new(table)))
    }

    #[inline]
    pub fn power(&self, radius: f64, distance: f64) -> Result<f64> {
        match self {
            ObstructionEvaluator::Exact(beam) => obstructed_power_case(&OccluderGeometry::new(radius, distance), beam),
            ObstructionEvaluator::Interpolated(table) => Ok(table.lookup(radius, distance)),
        }
    }
}

/// Outcome of a single Monte Carlo trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    /// Sum of per-bubble blocked power, not clamped.
    pub obstruction: f64,
    /// m − min(obstruction, m).
    pub received: f64,
}

/// Per-environment bookkeeping for a trial: which bubbles can possibly
/// reach the aperture, decided before the radius is drawn.
///
/// Bubble i is born in [(i−1)L, iL]. If even the fastest radius cannot
/// climb to the aperture by iL, or every radius above some R* overshoots
/// it after (i−1)L, the radius quantile is compared with F(R*) instead of
/// being inverted. Skipped bubbles are exactly those the direct path would
/// discard, and the random stream is consumed identically.
#[derive(Debug, Clone)]
pub struct TrialPlan {
    sampler: BubbleSampler,
    /// Radius-CDF level above which bubble i certainly overshoots;
    /// negative when bubble i certainly stays below the aperture.
    thresholds: Vec<f64>,
    x_limit: f64,
    reach: f64,
    m: f64,
}

impl TrialPlan {
    pub fn new(env: &BubbleEnvironment) -> Self {
        let sampler = BubbleSampler::new(env);
        let radii = sampler.radii;
        let law = sampler.velocity;
        let r = env.beam.aperture_radius;
        let h = env.beam.center_height;
        let margin = 1.0 + 1e-9;
        let v_max = law.max_on(env.max_radius) * margin;
        let thresholds = (1..=env.bubble_count())
            .map(|i| {
                let t_lo = (i as f64 - 1.0) * env.interval;
                let t_hi = i as f64 * env.interval;
                if v_max * t_hi < h - r - env.max_radius {
                    return -1.0;
                }
                if t_lo <= 0.0 {
                    return 1.0;
                }
                let speed = (h + r + env.max_radius) / t_lo;
                let r_star = law.sup_slower_than(speed, env.max_radius) * margin;
                if r_star >= env.max_radius {
                    1.0
                } else {
                    radii.cdf(r_star)
                }
            })
            .collect();
        Self {
            sampler,
            thresholds,
            x_limit: r + env.max_radius,
            reach: r,
            m: aperture_power(&env.beam),
        }
    }

    /// Fraction of bubbles that need a full geometric test, for one trial
    /// on average.
    pub fn active_fraction(&self) -> f64 {
        if self.thresholds.is_empty() {
            return 0.0;
        }
        self.thresholds.iter().map(|t| t.max(0.0)).sum::<f64>() / self.thresholds.len() as f64
    }

    /// One trial with this plan.
    pub fn trial<R: Rng + ?Sized>(
        &self,
        env: &BubbleEnvironment,
        evaluator: &ObstructionEvaluator,
        rng: &mut R,
    ) -> Result<TrialOutcome> {
        let mut total = 0.0;
        for (k, &threshold) in self.thresholds.iter().enumerate() {
            let (u_t, z, u_r) = draw_uniforms(rng);
            if threshold < 0.0 || u_r > threshold || (env.sigma_x * z).abs() > self.x_limit {
                continue;
            }
            let b = bubble_from_draws(k + 1, env, &self.sampler, u_t, z, u_r);
            if b.distance > self.reach + b.radius {
                continue;
            }
            total += evaluator.power(b.radius, b.distance)?;
        }
        Ok(TrialOutcome {
            obstruction: total,
            received: self.m - total.min(self.m),
        })
    }
}

/// Draws every bubble of one population and sums their shadows.
///
/// Overlap between bubble shadows is ignored; the sum is clamped to the
/// aperture power m.
pub fn simulate_trial<R: Rng + ?Sized>(
    env: &BubbleEnvironment,
    evaluator: &ObstructionEvaluator,
    rng: &mut R,
) -> Result<TrialOutcome> {
    TrialPlan::new(env).trial(env, evaluator, rng)
}

/// Reference version of [`simulate_trial`] that builds every bubble.
pub fn simulate_trial_direct<R: Rng + ?Sized>(
    env: &BubbleEnvironment,
    evaluator: &ObstructionEvaluator,
    rng: &mut R,
) -> Result<TrialOutcome> {
    let sampler = BubbleSampler::new(env);
    let r = env.beam.aperture_radius;
    let m = aperture_power(&env.beam);
    let mut total = 0.0;
    for i in 1..=env.bubble_count() {
        let b = sample_bubble_with(i, env, &sampler, rng);
        if b.distance > r + b.radius {
            continue;
        }
        total += evaluator.power(b.radius, b.distance)?;
    }
    Ok(TrialOutcome {
        obstruction: total,
        received: m - total.min(m),
    })
}

/// Generator for trial `index` of a run seeded with `seed`: one ChaCha
/// stream per trial, so results do not depend on scheduling.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Equal-width histogram over the open interval (0, m).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }
}

/// Empirical distribution of received power from a Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    /// Received power per trial, in [0, m].
    pub samples: Vec<f64>,
    /// Unclamped blocked power per trial.
    pub obstruction: Vec<f64>,
    pub m: f64,
    /// Fraction of trials with complete blockage.
    pub mass_at_zero: f64,
    /// Fraction of trials with no blockage.
    pub mass_at_m: f64,
    pub histogram: Histogram,
    pub n_trials: usize,
    pub seed: u64,
}

impl EmpiricalDistribution {
    /// Summarises per-trial outcomes.
    pub fn from_outcomes(outcomes: &[TrialOutcome], m: f64, bins: usize, seed: u64) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::Parameter("empirical distribution needs at least one trial".into()));
        }
        if bins == 0 {
            return Err(Error::Parameter("histogram needs at least one bin".into()));
        }
        let n = outcomes.len();
        let samples: Vec<f64> = outcomes.iter().map(|o| o.received).collect();
        let obstruction: Vec<f64> = outcomes.iter().map(|o| o.obstruction).collect();
        let zeros = samples.iter().filter(|&&s| s == 0.0).count();
        let fulls = samples.iter().filter(|&&s| s == m).count();
        let edges: Vec<f64> = (0..=bins).map(|k| m * k as f64 / bins as f64).collect();
        let mut counts = vec![0u64; bins];
        for &s in &samples {
            if s > 0.0 && s < m {
                let k = ((s / m * bins as f64) as usize).min(bins - 1);
                counts[k] += 1;
            }
        }
        Ok(Self {
            samples,
            obstruction,
            m,
            mass_at_zero: zeros as f64 / n as f64,
            mass_at_m: fulls as f64 / n as f64,
            histogram: Histogram { edges, counts },
            n_trials: n,
            seed,
        })
    }

    /// Fraction of trials strictly between the two point masses.
    pub fn interior_mass(&self) -> f64 {
        self.histogram.counts.iter().sum::<u64>() as f64 / self.n_trials as f64
    }

    /// Mean of the unclamped blocked power and its standard error.
    pub fn obstruction_mean(&self) -> (f64, f64) {
        mean_and_standard_error(&self.obstruction)
    }

    /// Mean received power.
    pub fn mean_received(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.n_trials as f64
    }
}

pub(crate) fn mean_and_standard_error(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo driver for one environment.
#[derive(Debug, Clone)]
pub struct Simulator {
    env: BubbleEnvironment,
    evaluator: ObstructionEvaluator,
    plan: TrialPlan,
    histogram_bins: usize,
}

impl Simulator {
    /// Simulator using the interpolation cache.
    pub fn new(env: BubbleEnvironment) -> Result<Self> {
        env.validate()?;
        let evaluator = ObstructionEvaluator::interpolated(&env)?;
        Ok(Self {
            plan: TrialPlan::new(&env),
            env,
            evaluator,
            histogram_bins: DEFAULT_HISTOGRAM_BINS,
        })
    }

    /// Simulator that evaluates the case formulas for every bubble.
    pub fn exact(env: BubbleEnvironment) -> Result<Self> {
        env.validate()?;
        Ok(Self {
            plan: TrialPlan::new(&env),
            env,
            evaluator: ObstructionEvaluator::exact(&env),
            histogram_bins: DEFAULT_HISTOGRAM_BINS,
        })
    }

    pub fn with_histogram_bins(mut self, bins: usize) -> Self {
        self.histogram_bins = bins;
        self
    }

    pub fn with_evaluator(mut self, evaluator: ObstructionEvaluator) -> Self {
        self.evaluator = evaluator;
        self
    }

    pub fn env(&self) -> &BubbleEnvironment {
        &self.env
    }

    pub fn evaluator(&self) -> &ObstructionEvaluator {
        &self.evaluator
    }

    /// Runs trials `first .. first + count` of the stream family `seed`.
    pub fn outcomes(&self, seed: u64, first: u64, count: usize) -> Result<Vec<TrialOutcome>> {
        (0..count as u64)
            .into_par_iter()
            .map(|k| self.plan.trial(&self.env, &self.evaluator, &mut trial_rng(seed, first + k)))
            .collect()
    }

    /// `n_trials` independent trials summarised as an empirical distribution.
    pub fn run(&self, n_trials: usize, seed: u64) -> Result<EmpiricalDistribution> {
        self.run_range(seed, 0, n_trials)
    }

    pub fn run_range(&self, seed: u64, first: u64, n_trials: usize) -> Result<EmpiricalDistribution> {
        if n_trials == 0 {
            return Err(Error::Parameter("n_trials must be at least 1".into()));
        }
        let outcomes = self.outcomes(seed, first, n_trials)?;
        EmpiricalDistribution::from_outcomes(&outcomes, aperture_power(&self.env.beam), self.histogram_bins, seed)
    }
}

/// Runs `n_trials` trials with the interpolation cache.
pub fn run_ensemble(env: &BubbleEnvironment, n_trials: usize, seed: u64) -> Result<EmpiricalDistribution> {
    Simulator::new(*env)?.run(n_trials, seed)
}

/// Right-continuous empirical CDF of the received power at `points`.
pub fn empirical_cdf(dist: &EmpiricalDistribution, points: &[f64]) -> Vec<f64> {
    let mut sorted = dist.samples.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    points
        .iter()
        .map(|&x| sorted.partition_point(|&s| s <= x) as f64 / n)
        .collect()
}
