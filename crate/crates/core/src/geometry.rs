//! Gaussian-beam power blocked by one circular bubble shadow.
//!
//! Coordinates are centred on the beam: the receiver aperture is the disk of
//! radius `r` at the origin and the bubble shadow is the disk of radius `R`
//! centred at `(0, -D)`. The blocked power is the beam density integrated
//! over the intersection of the two disks, split into the six overlap
//! configurations below. Every inner (z) integral of the Gaussian is a
//! difference of normal CDFs; the outer (w) integral is adaptive.

use crate::error::{Error, Result};
use crate::specfun::{integrate_adaptive, normal_cdf, AdaptiveSettings};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

/// Gaussian beam and receiver aperture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamSpec {
    /// Beam standard deviation, m.
    pub sigma: f64,
    /// Receiver aperture radius, m.
    pub aperture_radius: f64,
    /// Height of the beam axis above the tank bottom, m.
    pub center_height: f64,
}

impl BeamSpec {
    pub fn new(sigma: f64, aperture_radius: f64, center_height: f64) -> Result<Self> {
        let beam = Self {
            sigma,
            aperture_radius,
            center_height,
        };
        beam.validate()?;
        Ok(beam)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("beam sigma", self.sigma),
            ("aperture radius", self.aperture_radius),
            ("beam center height", self.center_height),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

impl Default for BeamSpec {
    /// 5 mm beam sigma, 5 mm aperture radius, axis 0.105 m above the bottom.
    fn default() -> Self {
        Self {
            sigma: 5e-3,
            aperture_radius: 5e-3,
            center_height: 0.105,
        }
    }
}

/// Radius of one bubble shadow and its centre distance from the beam axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccluderGeometry {
    pub radius: f64,
    pub distance: f64,
}

impl OccluderGeometry {
    pub fn new(radius: f64, distance: f64) -> Self {
        Self { radius, distance }
    }
}

/// How the bubble disk sits relative to the aperture disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OverlapCase {
    NoOverlap,
    /// Bubble entirely inside the aperture.
    BubbleInside,
    /// Partial overlap, a bubble diameter lies inside the aperture.
    BubbleMostlyInside,
    /// Partial overlap, smaller bubble, no bubble diameter inside.
    BubbleEdge,
    /// Aperture entirely inside the bubble.
    ApertureInside,
    /// Partial overlap, an aperture diameter lies inside the bubble.
    ApertureMostlyInside,
    /// Partial overlap, larger bubble, no aperture diameter inside.
    ApertureEdge,
}

impl OverlapCase {
    /// Case number 1..=6, or 0 for no overlap.
    pub fn index(self) -> u8 {
        match self {
            OverlapCase::NoOverlap => 0,
            OverlapCase::BubbleInside => 1,
            OverlapCase::BubbleMostlyInside => 2,
            OverlapCase::BubbleEdge => 3,
            OverlapCase::ApertureInside => 4,
            OverlapCase::ApertureMostlyInside => 5,
            OverlapCase::ApertureEdge => 6,
        }
    }
}

/// Beam intensity h(w, z), normalised to unit total power.
pub fn beam_pdf(w: f64, z: f64, beam: &BeamSpec) -> f64 {
    let s2 = beam.sigma * beam.sigma;
    (-(w * w + z * z) / (2.0 * s2)).exp() / (2.0 * PI * s2)
}

/// Power collected by the unobstructed aperture, m = 1 − exp(−r²/2σ²).
pub fn aperture_power(beam: &BeamSpec) -> f64 {
    let r = beam.aperture_radius;
    -(-(r * r) / (2.0 * beam.sigma * beam.sigma)).exp_m1()
}

/// Assigns `(R, D)` to exactly one overlap configuration for aperture radius `r`.
pub fn classify_overlap(geom: &OccluderGeometry, r: f64) -> OverlapCase {
    let (big_r, d) = (geom.radius, geom.distance);
    if d > r + big_r || big_r <= 0.0 {
        return OverlapCase::NoOverlap;
    }
    let d2 = d * d;
    if r >= big_r {
        if d <= r - big_r {
            OverlapCase::BubbleInside
        } else if d2 <= r * r - big_r * big_r {
            OverlapCase::BubbleMostlyInside
        } else {
            OverlapCase::BubbleEdge
        }
    } else if d <= big_r - r {
        OverlapCase::ApertureInside
    } else if d2 <= big_r * big_r - r * r {
        OverlapCase::ApertureMostlyInside
    } else {
        OverlapCase::ApertureEdge
    }
}

fn geometry_settings() -> AdaptiveSettings {
    AdaptiveSettings::new(1e-15, 1e-11, 200).expect("static tolerances")
}

/// Half-width of the common chord of the two circles.
fn chord_half_width(r: f64, big_r: f64, d: f64) -> f64 {
    let offset = (big_r * big_r - r * r - d * d) / (2.0 * d);
    (r * r - offset * offset).max(0.0).sqrt()
}

/// Beam power over the strip `z_lo..z_hi` at abscissa `w`, per unit w.
#[inline]
fn strip(w: f64, z_lo: f64, z_hi: f64, sigma: f64) -> f64 {
    if z_hi <= z_lo {
        return 0.0;
    }
    let gw = (-(w * w) / (2.0 * sigma * sigma)).exp() / ((2.0 * PI).sqrt() * sigma);
    gw * (normal_cdf(z_hi / sigma) - normal_cdf(z_lo / sigma))
}

/// 2 ∫₀^a g(w) dw with w = a·sin θ, which smooths the square-root edges
/// of circular limits.
fn symmetric_outer<F: Fn(f64) -> f64>(half_width: f64, g: F) -> Result<f64> {
    if half_width <= 0.0 {
        return Ok(0.0);
    }
    let v = integrate_adaptive(
        |theta: f64| {
            let w = half_width * theta.sin();
            g(w) * half_width * theta.cos()
        },
        0.0,
        FRAC_PI_2,
        &geometry_settings(),
    )?;
    Ok(2.0 * v)
}

#[inline]
fn sqrt_pos(v: f64) -> f64 {
    v.max(0.0).sqrt()
}

/// Blocked beam power for one bubble, evaluated with the case formula that
/// matches its overlap configuration. Result lies in `[0, m]`.
pub fn obstructed_power_case(geom: &OccluderGeometry, beam: &BeamSpec) -> Result<f64> {
    let r = beam.aperture_radius;
    let sigma = beam.sigma;
    let (big_r, d) = (geom.radius, geom.distance);
    if !(big_r >= 0.0 && d >= 0.0) {
        return Err(Error::Parameter(format!(
            "occluder radius and distance must be non-negative (R {big_r}, D {d})"
        )));
    }
    let m = aperture_power(beam);
    let s_r = |w: f64| sqrt_pos(r * r - w * w);
    let s_big = |w: f64| sqrt_pos(big_r * big_r - w * w);

    let value = match classify_overlap(geom, r) {
        OverlapCase::NoOverlap => 0.0,
        OverlapCase::ApertureInside => m,
        OverlapCase::BubbleInside => {
            if d == 0.0 {
                // concentric: power inside a centred disk of radius R
                -(-(big_r * big_r) / (2.0 * sigma * sigma)).exp_m1()
            } else {
                symmetric_outer(big_r, |w| strip(w, -s_big(w) - d, s_big(w) - d, sigma))?
            }
        }
        OverlapCase::BubbleMostlyInside => {
            let whole = symmetric_outer(big_r, |w| strip(w, -s_big(w) - d, s_big(w) - d, sigma))?;
            let wc = chord_half_width(r, big_r, d);
            let outside = symmetric_outer(wc, |w| strip(w, -s_big(w) - d, -s_r(w), sigma))?;
            whole - outside
        }
        OverlapCase::BubbleEdge | OverlapCase::ApertureEdge => {
            let wc = chord_half_width(r, big_r, d);
            symmetric_outer(wc, |w| strip(w, -s_r(w), s_big(w) - d, sigma))?
        }
        OverlapCase::ApertureMostlyInside => {
            let wc = chord_half_width(r, big_r, d);
            let uncovered = symmetric_outer(wc, |w| strip(w, s_big(w) - d, s_r(w), sigma))?;
            m - uncovered
        }
    };
    Ok(value.clamp(0.0, m))
}

/// Brute-force midpoint sum of the beam density over the intersection of
/// the two disks on a `grid_n × grid_n` grid spanning the intersection's
/// bounding box. Cells straddling a circle are refined 8×8.
pub fn obstructed_power_oracle(geom: &OccluderGeometry, beam: &BeamSpec, grid_n: usize) -> Result<f64> {
    if grid_n < 256 {
        return Err(Error::Parameter(format!("oracle grid must be at least 256, got {grid_n}")));
    }
    let r = beam.aperture_radius;
    let (big_r, d) = (geom.radius, geom.distance);
    if d > r + big_r || big_r <= 0.0 {
        return Ok(0.0);
    }
    // w-extent of the lens: the chord half-width when the chord lies
    // between the two centres, else the smaller disk's radius
    let z_chord = if d > 0.0 { (big_r * big_r - r * r - d * d) / (2.0 * d) } else { f64::NAN };
    let w_half = if (-d..=0.0).contains(&z_chord) {
        sqrt_pos(r * r - z_chord * z_chord).min(r.min(big_r))
    } else {
        r.min(big_r)
    };
    let z_lo = (-r).max(-d - big_r);
    let z_hi = r.min(-d + big_r);
    if z_hi <= z_lo {
        return Ok(0.0);
    }
    let hw = 2.0 * w_half / grid_n as f64;
    let hz = (z_hi - z_lo) / grid_n as f64;
    let half_diag = 0.5 * (hw * hw + hz * hz).sqrt();
    const SUB: usize = 8;

    let inside = |w: f64, z: f64| w * w + z * z <= r * r && w * w + (z + d) * (z + d) <= big_r * big_r;
    let mut total = 0.0;
    for i in 0..grid_n {
        let w = -w_half + (i as f64 + 0.5) * hw;
        let mut column = 0.0;
        for j in 0..grid_n {
            let z = z_lo + (j as f64 + 0.5) * hz;
            let rho_a = (w * w + z * z).sqrt();
            let rho_b = (w * w + (z + d) * (z + d)).sqrt();
            let near_edge = (rho_a - r).abs() < half_diag || (rho_b - big_r).abs() < half_diag;
            if near_edge {
                let mut acc = 0.0;
                for a in 0..SUB {
                    let ws = w - 0.5 * hw + (a as f64 + 0.5) * hw / SUB as f64;
                    for b in 0..SUB {
                        let zs = z - 0.5 * hz + (b as f64 + 0.5) * hz / SUB as f64;
                        if inside(ws, zs) {
                            acc += beam_pdf(ws, zs, beam);
                        }
                    }
                }
                column += acc / (SUB * SUB) as f64;
            } else if inside(w, z) {
                column += beam_pdf(w, z, beam);
            }
        }
        total += column;
    }
    Ok(total * hw * hz)
}
