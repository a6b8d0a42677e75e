//! Single-bubble statistics: generation time, horizontal offset, radius,
//! rising velocity and the resulting distance from the beam axis.

use crate::error::{Error, Result};
use crate::geometry::BeamSpec;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Upper end of the viscous (Stokes) velocity regime, m.
pub const STOKES_LIMIT: f64 = 0.080_15e-3;
/// Upper end of the intermediate velocity regime, m.
pub const INTERMEDIATE_LIMIT: f64 = 0.575e-3;

/// Properties of the liquid the bubbles rise through (SI units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidConstants {
    /// kg/m³
    pub density: f64,
    /// Dynamic viscosity, Pa·s.
    pub viscosity: f64,
    /// N/m
    pub surface_tension: f64,
    /// m/s²
    pub gravity: f64,
}

impl FluidConstants {
    /// Clean water at 20 °C.
    pub fn water_20c() -> Self {
        Self {
            density: 998.0,
            viscosity: 1.002e-3,
            surface_tension: 0.0728,
            gravity: 9.81,
        }
    }

    /// Water at 20 °C with the reduced surface tension that reproduces the
    /// published blockage probabilities for the reference tank (about
    /// 0.054 N/m, typical of tap water with trace surfactants).
    pub fn tank_water() -> Self {
        Self {
            surface_tension: 0.054,
            ..Self::water_20c()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("density", self.density),
            ("viscosity", self.viscosity),
            ("surface tension", self.surface_tension),
            ("gravity", self.gravity),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("fluid {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

impl Default for FluidConstants {
    fn default() -> Self {
        Self::tank_water()
    }
}

/// Physical and statistical description of the tank, beam and bubble stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BubbleEnvironment {
    /// Length of each generation interval L, s (one bubble per interval).
    pub interval: f64,
    /// Mean bubble radius μ_R of the (untruncated) Rayleigh law, m.
    pub mean_radius: f64,
    /// Standard deviation of the horizontal offset, m.
    pub sigma_x: f64,
    /// Largest bubble radius, m.
    pub max_radius: f64,
    /// Look-back duration covered by the bubble population, s.
    pub window: f64,
    pub fluid: FluidConstants,
    pub beam: BeamSpec,
}

impl BubbleEnvironment {
    /// Reference setup: 5 mm beam, aperture and horizontal spread, 10 mm
    /// radius cap and a 10 s window.
    pub fn reference(interval: f64, mean_radius: f64) -> Self {
        Self {
            interval,
            mean_radius,
            sigma_x: 5e-3,
            max_radius: 0.01,
            window: 10.0,
            fluid: FluidConstants::default(),
            beam: BeamSpec::default(),
        }
    }

    /// Reference setup addressed by generation rate (bubbles per second).
    pub fn from_rate(rate_hz: f64, mean_radius: f64) -> Self {
        Self::reference(1.0 / rate_hz, mean_radius)
    }

    /// Number of generation intervals, window / L.
    pub fn bubble_count(&self) -> usize {
        (self.window / self.interval).round().max(0.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.interval > 0.0 && self.interval.is_finite()) {
            return Err(Error::Parameter(format!("interval L must be positive, got {}", self.interval)));
        }
        if !(self.sigma_x > 0.0) {
            return Err(Error::Parameter(format!("sigma_x must be positive, got {}", self.sigma_x)));
        }
        if !(self.mean_radius > 0.0 && self.mean_radius < self.max_radius) {
            return Err(Error::Parameter(format!(
                "mean radius must satisfy 0 < mu_R < R_max (mu_R {}, R_max {})",
                self.mean_radius, self.max_radius
            )));
        }
        let ratio = self.window / self.interval;
        if !(ratio >= 0.5) || (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return Err(Error::Parameter(format!(
                "window / L must be a positive integer, got {ratio}"
            )));
        }
        self.fluid.validate()?;
        self.beam.validate()
    }

    pub fn radius_distribution(&self) -> RadiusDistribution {
        RadiusDistribution::new(self.mean_radius, self.max_radius)
    }
}

/// One realised bubble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BubbleSample {
    /// Horizontal offset from the beam axis, m.
    pub x: f64,
    pub radius: f64,
    /// Time since generation, s.
    pub elapsed: f64,
    /// Height above the tank bottom, v(R)·t.
    pub height: f64,
    /// Centre distance to the beam axis.
    pub distance: f64,
}

/// Uniform density of the generation time of the bubble in interval `i`
/// (1-based, counting back from the observation instant).
pub fn generation_time_pdf(t: f64, i: usize, interval: f64) -> f64 {
    let lo = (i as f64 - 1.0) * interval;
    let hi = i as f64 * interval;
    if i >= 1 && t >= lo && t <= hi {
        1.0 / interval
    } else {
        0.0
    }
}

/// Zero-mean Gaussian density of the horizontal offset.
pub fn horizontal_pdf(x: f64, sigma_x: f64) -> f64 {
    (-(x * x) / (2.0 * sigma_x * sigma_x)).exp() / ((2.0 * PI).sqrt() * sigma_x)
}

/// Rayleigh law with mean μ_R truncated to `[0, R_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusDistribution {
    mean: f64,
    max: f64,
    norm: f64,
}

impl RadiusDistribution {
    pub fn new(mean: f64, max: f64) -> Self {
        let norm = -(-PI * max * max / (4.0 * mean * mean)).exp_m1();
        Self { mean, max, norm }
    }

    /// Normalisation q, the untruncated Rayleigh mass below R_max.
    pub fn normalization(&self) -> f64 {
        self.norm
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn pdf(&self, r: f64) -> f64 {
        if !(0.0..=self.max).contains(&r) {
            return 0.0;
        }
        let m2 = self.mean * self.mean;
        PI * r / (2.0 * m2) * (-PI * r * r / (4.0 * m2)).exp() / self.norm
    }

    pub fn cdf(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        if r >= self.max {
            return 1.0;
        }
        -(-PI * r * r / (4.0 * self.mean * self.mean)).exp_m1() / self.norm
    }

    /// Inverse CDF; `u` in [0, 1].
    pub fn quantile(&self, u: f64) -> f64 {
        let scaled = (u * self.norm).min(self.norm);
        let r = (-4.0 * self.mean * self.mean / PI * (-scaled).ln_1p()).sqrt();
        r.min(self.max)
    }
}

/// Truncated-Rayleigh radius density.
pub fn radius_pdf(r: f64, mean_radius: f64, max_radius: f64) -> f64 {
    RadiusDistribution::new(mean_radius, max_radius).pdf(r)
}

/// Terminal rising velocity of a bubble of radius `radius` (m/s).
///
/// Three regimes: viscous gρR²/(3μ), intermediate
/// 0.408 g^{5/6} (ρ/μ)^{2/3} R^{3/2}, and the capillary-gravity law
/// √(1.07 σ_s/(ρR) + 1.01 gR).
pub fn rising_velocity(radius: f64, fluid: &FluidConstants) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::Domain(format!("bubble radius must be positive, got {radius}")));
    }
    Ok(rising_velocity_unchecked(radius, fluid))
}

#[inline]
pub(crate) fn rising_velocity_unchecked(radius: f64, fluid: &FluidConstants) -> f64 {
    VelocityLaw::new(fluid).eval(radius)
}

/// Rising-velocity law with the fluid-dependent coefficients folded in.
#[derive(Debug, Clone, Copy)]
pub(crate) struct VelocityLaw {
    stokes: f64,
    intermediate: f64,
    capillary: f64,
    gravity: f64,
}

impl VelocityLaw {
    pub(crate) fn new(fluid: &FluidConstants) -> Self {
        let FluidConstants {
            density: rho,
            viscosity: mu,
            surface_tension: sigma_s,
            gravity: g,
        } = *fluid;
        Self {
            stokes: g * rho / (3.0 * mu),
            intermediate: 0.408 * g.powf(5.0 / 6.0) * (rho / mu).powf(2.0 / 3.0),
            capillary: 1.07 * sigma_s / rho,
            gravity: 1.01 * g,
        }
    }

    /// Upper bound of v on (0, r_max].
    pub(crate) fn max_on(&self, r_max: f64) -> f64 {
        let s = STOKES_LIMIT.min(r_max);
        let i = INTERMEDIATE_LIMIT.min(r_max);
        let mut v = self.stokes * s * s;
        if r_max > STOKES_LIMIT {
            v = v.max(self.intermediate * i * i.sqrt());
        }
        if r_max > INTERMEDIATE_LIMIT {
            v = v.max(self.eval(INTERMEDIATE_LIMIT)).max(self.eval(r_max));
        }
        v
    }

    /// Supremum of {R ∈ (0, r_max] : v(R) ≤ speed}; every larger radius
    /// rises faster than `speed`.
    pub(crate) fn sup_slower_than(&self, speed: f64, r_max: f64) -> f64 {
        let mut sup: f64 = (speed / self.stokes).sqrt().min(STOKES_LIMIT);
        if speed >= self.intermediate * STOKES_LIMIT * STOKES_LIMIT.sqrt() {
            sup = sup.max((speed / self.intermediate).powf(2.0 / 3.0).min(INTERMEDIATE_LIMIT));
        }
        // capillary branch: gravity R² − v² R + capillary ≤ 0
        let v2 = speed * speed;
        let disc = v2 * v2 - 4.0 * self.gravity * self.capillary;
        if disc >= 0.0 {
            let upper = (v2 + disc.sqrt()) / (2.0 * self.gravity);
            if upper >= INTERMEDIATE_LIMIT {
                sup = sup.max(upper);
            }
        }
        sup.min(r_max)
    }

    #[inline]
    pub(crate) fn eval(&self, radius: f64) -> f64 {
        if radius < STOKES_LIMIT {
            self.stokes * radius * radius
        } else if radius < INTERMEDIATE_LIMIT {
            self.intermediate * radius * radius.sqrt()
        } else {
            (self.capillary / radius + self.gravity * radius).sqrt()
        }
    }
}

/// Distance between the bubble centre and the beam axis.
pub fn center_distance(sample: &BubbleSample, beam: &BeamSpec) -> f64 {
    let dz = sample.height - beam.center_height;
    (sample.x * sample.x + dz * dz).sqrt()
}

/// Draws the bubble generated in interval `i` (1-based).
pub fn sample_bubble<R: Rng + ?Sized>(i: usize, env: &BubbleEnvironment, rng: &mut R) -> BubbleSample {
    sample_bubble_with(i, env, &BubbleSampler::new(env), rng)
}

/// Per-environment quantities hoisted out of the sampling loop.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BubbleSampler {
    pub(crate) radii: RadiusDistribution,
    pub(crate) velocity: VelocityLaw,
}

impl BubbleSampler {
    pub(crate) fn new(env: &BubbleEnvironment) -> Self {
        Self {
            radii: env.radius_distribution(),
            velocity: VelocityLaw::new(&env.fluid),
        }
    }
}

#[inline]
pub(crate) fn sample_bubble_with<R: Rng + ?Sized>(
    i: usize,
    env: &BubbleEnvironment,
    sampler: &BubbleSampler,
    rng: &mut R,
) -> BubbleSample {
    let (u_t, z, u_r) = draw_uniforms(rng);
    bubble_from_draws(i, env, sampler, u_t, z, u_r)
}

/// The three variates behind one bubble, in stream order: generation-time
/// fraction, standard normal offset, radius quantile.
#[inline]
pub(crate) fn draw_uniforms<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64, f64) {
    let u_t: f64 = rng.gen();
    let z: f64 = rng.sample(StandardNormal);
    let u_r: f64 = rng.gen();
    (u_t, z, u_r)
}

#[inline]
pub(crate) fn bubble_from_draws(
    i: usize,
    env: &BubbleEnvironment,
    sampler: &BubbleSampler,
    u_t: f64,
    z: f64,
    u_r: f64,
) -> BubbleSample {
    let elapsed = (i as f64 - 1.0 + u_t) * env.interval;
    let x = env.sigma_x * z;
    let radius = sampler.radii.quantile(u_r);
    let height = if radius > 0.0 {
        sampler.velocity.eval(radius) * elapsed
    } else {
        0.0
    };
    let dz = height - env.beam.center_height;
    BubbleSample {
        x,
        radius,
        elapsed,
        height,
        distance: (x * x + dz * dz).sqrt(),
    }
}
