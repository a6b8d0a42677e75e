//! First and second moments of the power blocked by each bubble, and the
//! probability that a bubble touches the aperture at all.
//!
//! With t uniform on the generation interval, the bubble height y = v(R)t − h
//! is uniform on an interval of length v(R)L, so for each radius the triple
//! integral over (x, R, t) reduces to differences of the cumulative profiles
//!
//!   C_k(Y; R) = ∫_{-ρ}^{Y} ∫ f_X(x) b^k(√(x² + y²), R) dx dy,   ρ = r + R,
//!
//! which do not depend on μ_R, L or the interval index. Profiles are stored
//! as Legendre expansions on panels of θ = asin(y/ρ), split where the
//! overlap configuration changes.

use crate::bubble::{BubbleEnvironment, FluidConstants, RadiusDistribution, VelocityLaw, INTERMEDIATE_LIMIT, STOKES_LIMIT};
use crate::error::{Error, Result};
use crate::geometry::{obstructed_power_case, BeamSpec, OccluderGeometry};
use crate::specfun::{find_root_bracketed, gauss_legendre, integrate_adaptive_points, normal_cdf, AdaptiveSettings, QuadratureRule};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

const THETA_ORDER: usize = 20;
const X_ORDER: usize = 16;
const RADIUS_ORDER: usize = 12;
const RADIUS_PANELS: f64 = 24.0;

/// Moments of one generation interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalMoments {
    /// E[B_i].
    pub first: f64,
    /// E[B_i²].
    pub second: f64,
    /// P(D_i ≤ r + R_i), the chance that bubble i shadows the aperture.
    pub overlap: f64,
}

/// Moments of the total blocked power B = Σ B_i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub e_b: f64,
    pub e_b2: f64,
    /// (E[B_i], E[B_i²]) per interval.
    pub per_bubble: Vec<(f64, f64)>,
}

impl MomentSummary {
    /// Combines independent per-interval moments; the cross term runs over
    /// distinct pairs only.
    pub fn from_intervals(intervals: &[IntervalMoments]) -> Self {
        let e_b: f64 = intervals.iter().map(|m| m.first).sum();
        let diag: f64 = intervals.iter().map(|m| m.second).sum();
        let squares: f64 = intervals.iter().map(|m| m.first * m.first).sum();
        Self {
            e_b,
            e_b2: diag + (e_b * e_b - squares),
            per_bubble: intervals.iter().map(|m| (m.first, m.second)).collect(),
        }
    }

    pub fn variance(&self) -> f64 {
        self.e_b2 - self.e_b * self.e_b
    }
}

/// Probability that no bubble touches the aperture.
pub fn no_obstruction_probability(intervals: &[IntervalMoments]) -> f64 {
    intervals.iter().map(|m| (-m.overlap).ln_1p()).sum::<f64>().exp()
}

#[derive(Debug, Clone)]
struct ProfilePanel {
    theta_lo: f64,
    theta_hi: f64,
    base: [f64; 3],
    coeffs: [Vec<f64>; 3],
}

/// Cumulative profiles C_1, C_2 and the overlap profile for one radius.
#[derive(Debug, Clone)]
pub struct RadiusProfile {
    radius: f64,
    reach: f64,
    panels: Vec<ProfilePanel>,
    half: [f64; 3],
}

impl RadiusProfile {
    pub fn build(radius: f64, beam: &BeamSpec, sigma_x: f64) -> Result<Self> {
        let theta_rule = gauss_legendre(THETA_ORDER)?;
        let x_rule = gauss_legendre(X_ORDER)?;
        Self::build_with(radius, beam, sigma_x, &theta_rule, &x_rule)
    }

    fn build_with(
        radius: f64,
        beam: &BeamSpec,
        sigma_x: f64,
        theta_rule: &QuadratureRule,
        x_rule: &QuadratureRule,
    ) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Domain(format!("profile radius must be positive, got {radius}")));
        }
        let r = beam.aperture_radius;
        let reach = r + radius;
        let kinks = case_distances(r, radius);
        let mut theta_breaks = vec![0.0];
        theta_breaks.extend(kinks.iter().map(|d| (d / reach).asin()));
        theta_breaks.push(FRAC_PI_2);

        let mut panels = Vec::with_capacity(theta_breaks.len() - 1);
        let mut acc = [0.0; 3];
        for w in theta_breaks.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let half_width = 0.5 * (hi - lo);
            let mut samples = [Vec::new(), Vec::new(), Vec::new()];
            for &s in theta_rule.nodes() {
                let theta = lo + half_width * (s + 1.0);
                let y = reach * theta.sin();
                let jac = reach * theta.cos();
                let g = strip_profile(y, radius, reach, &kinks, beam, sigma_x, x_rule)?;
                for q in 0..3 {
                    samples[q].push(g[q] * jac);
                }
            }
            let coeffs = samples.map(|v| legendre_coefficients(theta_rule, &v));
            let panel = ProfilePanel {
                theta_lo: lo,
                theta_hi: hi,
                base: acc,
                coeffs,
            };
            for (total, c) in acc.iter_mut().zip(&panel.coeffs) {
                // the integral over the whole panel is 2 c_0
                *total += half_width * 2.0 * c[0];
            }
            panels.push(panel);
        }
        Ok(Self {
            radius,
            reach,
            panels,
            half: acc,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn reach(&self) -> f64 {
        self.reach
    }

    /// [C_1(Y), C_2(Y), C_p(Y)], integrated from −ρ; Y is clipped to [−ρ, ρ].
    pub fn cumulative(&self, y: f64) -> [f64; 3] {
        let yc = y.clamp(-self.reach, self.reach);
        let theta = (yc.abs() / self.reach).min(1.0).asin();
        let k = self
            .panels
            .iter()
            .position(|p| theta <= p.theta_hi)
            .unwrap_or(self.panels.len() - 1);
        let p = &self.panels[k];
        let half_width = 0.5 * (p.theta_hi - p.theta_lo);
        let s = ((theta - p.theta_lo) / half_width - 1.0).clamp(-1.0, 1.0);
        let partial = legendre_antiderivative(&p.coeffs, s);
        let mut out = [0.0; 3];
        for q in 0..3 {
            let h = p.base[q] + half_width * partial[q];
            out[q] = self.half[q] + yc.signum() * h;
        }
        out
    }

    /// Integrals over the whole disk |(x, y)| ≤ ρ.
    pub fn totals(&self) -> [f64; 3] {
        self.half.map(|h| 2.0 * h)
    }
}

/// Distances at which the overlap configuration of a radius-R bubble
/// changes, strictly inside (0, r + R), ascending.
fn case_distances(r: f64, radius: f64) -> Vec<f64> {
    let reach = r + radius;
    let mut d = vec![(r - radius).abs(), (r * r - radius * radius).abs().sqrt()];
    d.retain(|&v| v > 1e-12 * reach && v < reach * (1.0 - 1e-12));
    d.sort_by(f64::total_cmp);
    d.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * reach);
    d
}

/// ∫ f_X(x) b^k dx for k = 1, 2 and ∫ f_X(x) 1{D ≤ ρ} dx at height y ≥ 0.
fn strip_profile(
    y: f64,
    radius: f64,
    reach: f64,
    kinks: &[f64],
    beam: &BeamSpec,
    sigma_x: f64,
    rule: &QuadratureRule,
) -> Result<[f64; 3]> {
    let x_max = (reach * reach - y * y).max(0.0).sqrt();
    let overlap = 2.0 * normal_cdf(x_max / sigma_x) - 1.0;
    if x_max == 0.0 {
        return Ok([0.0, 0.0, overlap]);
    }
    let mut breaks = vec![0.0];
    breaks.extend(kinks.iter().filter(|&&d| d > y).map(|&d| (d * d - y * y).sqrt()));
    breaks.push(x_max);
    let (mut g1, mut g2) = (0.0, 0.0);
    let last = breaks.len() - 2;
    for (k, w) in breaks.windows(2).enumerate() {
        let (lo, hi) = (w[0], w[1]);
        if hi <= lo {
            continue;
        }
        for (s, wt) in rule.iter() {
            let u = 0.5 * (s + 1.0);
            // the overlap vanishes like (x_max − x)^{3/2}; a quadratic map
            // flattens that endpoint on the outermost panel
            let (x, jac) = if k == last {
                (lo + (hi - lo) * (1.0 - (1.0 - u) * (1.0 - u)), 2.0 * (hi - lo) * (1.0 - u))
            } else {
                (lo + (hi - lo) * u, hi - lo)
            };
            let d = (x * x + y * y).sqrt();
            let b = obstructed_power_case(&OccluderGeometry::new(radius, d), beam)?;
            let fx = crate::specfun::normal_pdf(x / sigma_x) / sigma_x;
            let weight = wt * 0.5 * jac * fx;
            g1 += weight * b;
            g2 += weight * b * b;
        }
    }
    Ok([2.0 * g1, 2.0 * g2, overlap])
}

fn legendre_all(n: usize, s: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(n + 1);
    p.push(1.0);
    if n > 0 {
        p.push(s);
    }
    for k in 1..n {
        let kf = k as f64;
        p.push(((2.0 * kf + 1.0) * s * p[k] - kf * p[k - 1]) / (kf + 1.0));
    }
    p
}

fn legendre_coefficients(rule: &QuadratureRule, values: &[f64]) -> Vec<f64> {
    let n = rule.order();
    let mut c = vec![0.0; n];
    for ((s, w), v) in rule.iter().zip(values) {
        let p = legendre_all(n - 1, s);
        for k in 0..n {
            c[k] += w * v * p[k];
        }
    }
    for (k, ck) in c.iter_mut().enumerate() {
        *ck *= (2 * k + 1) as f64 / 2.0;
    }
    c
}

/// ∫_{-1}^{s} Σ c_n P_n for each of the three series.
fn legendre_antiderivative(coeffs: &[Vec<f64>; 3], s: f64) -> [f64; 3] {
    let n = coeffs[0].len();
    let p = legendre_all(n, s);
    let mut out = [0.0; 3];
    for k in 0..n {
        let integral = if k == 0 {
            s + 1.0
        } else {
            (p[k + 1] - p[k - 1]) / (2 * k + 1) as f64
        };
        for q in 0..3 {
            out[q] += coeffs[q][k] * integral;
        }
    }
    out
}

#[derive(Debug, Clone)]
struct RadiusNode {
    weight: f64,
    velocity: f64,
    profile: RadiusProfile,
}

/// Precomputed profiles on a fixed radius grid. One engine serves every
/// environment that shares its beam, horizontal spread, radius cap, window
/// and fluid; the mean radius and generation interval are free.
#[derive(Debug, Clone)]
pub struct MomentEngine {
    beam: BeamSpec,
    sigma_x: f64,
    max_radius: f64,
    window: f64,
    fluid: FluidConstants,
    nodes: Vec<RadiusNode>,
}

impl MomentEngine {
    pub fn new(env: &BubbleEnvironment) -> Result<Self> {
        Self::with_resolution(env, RADIUS_PANELS, RADIUS_ORDER)
    }

    /// Engine with roughly `panels_per_range` radius panels over
    /// [0, R_max] (plus the velocity breakpoints) and `order` nodes each.
    pub fn with_resolution(env: &BubbleEnvironment, panels_per_range: f64, order: usize) -> Result<Self> {
        env.validate()?;
        let rule = gauss_legendre(order)?;
        let theta_rule = gauss_legendre(THETA_ORDER)?;
        let x_rule = gauss_legendre(X_ORDER)?;
        let law = VelocityLaw::new(&env.fluid);
        let r_max = env.max_radius;
        let mut breaks = vec![0.0, r_max];
        breaks.extend([STOKES_LIMIT, INTERMEDIATE_LIMIT].iter().filter(|&&b| b < r_max));
        // bubbles still crossing the beam when the window closes
        breaks.extend(window_crossings(&law, env.window, &env.beam, r_max)?);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let mut points = Vec::new();
        for w in breaks.windows(2) {
            let pieces = ((panels_per_range * (w[1] - w[0]) / r_max).ceil() as usize).max(1);
            let h = (w[1] - w[0]) / pieces as f64;
            for p in 0..pieces {
                let lo = w[0] + h * p as f64;
                points.extend(rule.mapped(lo, lo + h));
            }
        }
        let nodes = points
            .into_par_iter()
            .map(|(radius, weight)| {
                Ok(RadiusNode {
                    weight,
                    velocity: law.eval(radius),
                    profile: RadiusProfile::build_with(radius, &env.beam, env.sigma_x, &theta_rule, &x_rule)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            beam: env.beam,
            sigma_x: env.sigma_x,
            max_radius: env.max_radius,
            window: env.window,
            fluid: env.fluid,
            nodes,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Whether `env` can be served by this engine.
    pub fn supports(&self, env: &BubbleEnvironment) -> bool {
        env.beam == self.beam
            && env.sigma_x == self.sigma_x
            && env.max_radius == self.max_radius
            && env.window == self.window
            && env.fluid == self.fluid
    }

    /// Per-interval moments for every generation interval of `env`.
    ///
    /// E[B_i] and E[B_i²] come from the fixed radius grid, which is exact
    /// for the sums over i but only approximate for late intervals whose
    /// mass sits in a narrow radius band; overlap probabilities are
    /// integrated per interval.
    pub fn interval_moments(&self, env: &BubbleEnvironment) -> Result<Vec<IntervalMoments>> {
        env.validate()?;
        if !self.supports(env) {
            return Err(Error::Parameter(
                "environment differs from the one the moment engine was built for".into(),
            ));
        }
        let radii = env.radius_distribution();
        let l = env.interval;
        let h = env.beam.center_height;
        let n = env.bubble_count();
        let factors: Vec<f64> = self
            .nodes
            .iter()
            .map(|node| node.weight * radii.pdf(node.profile.radius) / (l * node.velocity))
            .collect();
        let overlaps = overlap_probabilities(env)?;
        Ok((1..=n)
            .into_par_iter()
            .map(|i| {
                let mut acc = [0.0; 3];
                for (node, &f) in self.nodes.iter().zip(&factors) {
                    if f == 0.0 {
                        continue;
                    }
                    let reach = node.profile.reach;
                    let y_lo = node.velocity * (i as f64 - 1.0) * l - h;
                    let y_hi = node.velocity * i as f64 * l - h;
                    if y_hi <= -reach || y_lo >= reach {
                        continue;
                    }
                    let hi = node.profile.cumulative(y_hi);
                    let lo = node.profile.cumulative(y_lo);
                    for q in 0..3 {
                        acc[q] += f * (hi[q] - lo[q]);
                    }
                }
                IntervalMoments {
                    first: acc[0],
                    second: acc[1],
                    overlap: overlaps[i - 1],
                }
            })
            .collect())
    }

    pub fn summary(&self, env: &BubbleEnvironment) -> Result<MomentSummary> {
        Ok(MomentSummary::from_intervals(&self.interval_moments(env)?))
    }
}

/// E[B_i^order] for one interval by adaptive integration over the radius,
/// with a fresh profile at every radius node.
pub fn moment_single_bubble(i: usize, env: &BubbleEnvironment, order: u32) -> Result<f64> {
    let q = match order {
        1 => 0,
        2 => 1,
        _ => return Err(Error::Parameter(format!("moment order must be 1 or 2, got {order}"))),
    };
    single_interval_integral(i, env, q)
}

/// P(D_i ≤ r + R_i) for one interval. The overlap profile needs no
/// shadow geometry, so this is cheap and accurate to ~1e-9.
pub fn overlap_probability_single(i: usize, env: &BubbleEnvironment) -> Result<f64> {
    env.validate()?;
    overlap_probability_unchecked(i, env, &gauss_legendre(OVERLAP_ORDER)?)
}

/// P(D_i ≤ r + R_i) for every interval of `env`.
pub fn overlap_probabilities(env: &BubbleEnvironment) -> Result<Vec<f64>> {
    env.validate()?;
    let rule = gauss_legendre(OVERLAP_ORDER)?;
    (1..=env.bubble_count())
        .into_par_iter()
        .map(|i| overlap_probability_unchecked(i, env, &rule))
        .collect()
}

const OVERLAP_ORDER: usize = 24;

fn overlap_probability_unchecked(i: usize, env: &BubbleEnvironment, rule: &QuadratureRule) -> Result<f64> {
    let sigma_x = env.sigma_x;
    let settings = AdaptiveSettings::new(1e-16, 1e-10, 400)?;
    let p = interval_integral(i, env, &settings, |radius, y_lo, y_hi| {
        let reach = env.beam.aperture_radius + radius;
        let theta = |y: f64| (y.clamp(-reach, reach) / reach).asin();
        // ∫ (2Φ(√(ρ² − y²)/σ_x) − 1) dy with y = ρ sin θ
        Ok(rule.integrate(theta(y_lo), theta(y_hi), |th| {
            let c = th.cos();
            (2.0 * normal_cdf(reach * c / sigma_x) - 1.0) * reach * c
        }))
    })?;
    Ok(p.clamp(0.0, 1.0))
}

fn single_interval_integral(i: usize, env: &BubbleEnvironment, q: usize) -> Result<f64> {
    env.validate()?;
    let theta_rule = gauss_legendre(THETA_ORDER)?;
    let x_rule = gauss_legendre(X_ORDER)?;
    let settings = AdaptiveSettings::new(1e-20, 1e-7, 400)?;
    interval_integral(i, env, &settings, |radius, y_lo, y_hi| {
        let p = RadiusProfile::build_with(radius, &env.beam, env.sigma_x, &theta_rule, &x_rule)?;
        Ok(p.cumulative(y_hi)[q] - p.cumulative(y_lo)[q])
    })
}

const SCAN_POINTS: usize = 4000;

/// Radii at which a bubble released `t` seconds ago sits exactly at the
/// edge of the overlap region, v(R)t − h = ±(r + R).
fn window_crossings(law: &VelocityLaw, t: f64, beam: &BeamSpec, r_max: f64) -> Result<Vec<f64>> {
    let mut roots = Vec::new();
    if t <= 0.0 {
        return Ok(roots);
    }
    let r = beam.aperture_radius;
    let h = beam.center_height;
    // scan each velocity branch on its own so phi is continuous inside a scan
    let mut edges = vec![0.0];
    edges.extend([STOKES_LIMIT, INTERMEDIATE_LIMIT].iter().filter(|&&b| b < r_max));
    edges.push(r_max);
    for sign in [-1.0, 1.0] {
        let phi = |radius: f64| law.eval(radius) * t - h - sign * (r + radius);
        for w in edges.windows(2) {
            let lo = w[0] + 1e-12 * r_max;
            let hi = w[1] * (1.0 - 1e-12);
            let n = ((SCAN_POINTS as f64 * (hi - lo) / r_max).ceil() as usize).max(400);
            let mut prev = (lo, phi(lo));
            for k in 1..=n {
                let radius = lo + (hi - lo) * k as f64 / n as f64;
                let cur = (radius, phi(radius));
                if prev.1.signum() != cur.1.signum() {
                    roots.push(find_root_bracketed(phi, prev.0, cur.0, 1e-15)?);
                }
                prev = cur;
            }
        }
    }
    Ok(roots)
}

/// ∫ f_R(R)/(L v(R)) · window(R, y_lo, y_hi) dR over the radii whose height
/// window for interval i meets [−ρ, ρ]. `window` integrates the strip
/// profile over heights y_lo..y_hi.
fn interval_integral<F>(i: usize, env: &BubbleEnvironment, settings: &AdaptiveSettings, mut window: F) -> Result<f64>
where
    F: FnMut(f64, f64, f64) -> Result<f64>,
{
    if i == 0 {
        return Err(Error::Parameter("interval index starts at 1".into()));
    }
    let law = VelocityLaw::new(&env.fluid);
    let radii: RadiusDistribution = env.radius_distribution();
    let r = env.beam.aperture_radius;
    let h = env.beam.center_height;
    let t_lo = (i as f64 - 1.0) * env.interval;
    let t_hi = i as f64 * env.interval;
    let active = |radius: f64| {
        let v = law.eval(radius);
        let reach = r + radius;
        v * t_hi - h > -reach && v * t_lo - h < reach
    };

    let any_active = (1..=SCAN_POINTS).any(|k| active(env.max_radius * k as f64 / SCAN_POINTS as f64));
    if !any_active {
        return Ok(0.0);
    }
    let mut points = vec![0.0, env.max_radius];
    points.extend([STOKES_LIMIT, INTERMEDIATE_LIMIT].iter().filter(|&&b| b < env.max_radius));
    for t in [t_lo, t_hi] {
        points.extend(window_crossings(&law, t, &env.beam, env.max_radius)?);
    }
    points.sort_by(f64::total_cmp);
    points.dedup();

    let mut failure = None;
    let value = integrate_adaptive_points(
        |radius| {
            if radius <= 0.0 || failure.is_some() || !active(radius) {
                return 0.0;
            }
            let v = law.eval(radius);
            match window(radius, v * t_lo - h, v * t_hi - h) {
                Ok(w) => radii.pdf(radius) / (env.interval * v) * w,
                Err(e) => {
                    failure = Some(e);
                    0.0
                }
            }
        },
        &points,
        settings,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    value
}

/// Moments of the total blocked power for `env`.
pub fn total_moments(env: &BubbleEnvironment) -> Result<MomentSummary> {
    MomentEngine::new(env)?.summary(env)
}

/// Probability that no bubble shadows the aperture, Π (1 − P_i).
pub fn prob_no_obstruction(env: &BubbleEnvironment) -> Result<f64> {
    Ok(no_obstruction_probability(&MomentEngine::new(env)?.interval_moments(env)?))
}
