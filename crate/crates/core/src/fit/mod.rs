//! Mixed Dirac-Weibull model of the received power: point masses at full
//! blockage and at no blockage, and a Weibull-distributed partial
//! obstruction fitted by the method of moments.

mod moments;

pub use moments::{
    moment_single_bubble, no_obstruction_probability, overlap_probability_single, prob_no_obstruction, total_moments,
    IntervalMoments, MomentEngine, MomentSummary, RadiusProfile,
};

use crate::bubble::BubbleEnvironment;
use crate::error::{Error, Result};
use crate::geometry::aperture_power;
use crate::simulator::{empirical_cdf, EmpiricalDistribution};
use crate::specfun::{find_root_bracketed, gamma, ln_gamma};
use serde::{Deserialize, Serialize};

/// Bracket searched for the Weibull shape.
pub const SHAPE_BRACKET: (f64, f64) = (0.05, 50.0);

/// Mixed Dirac-Weibull law of the received power H_b on [0, m].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstructionModel {
    /// Probability that no bubble shadows the aperture.
    pub a: f64,
    /// 1 − a.
    pub b: f64,
    /// Probability of complete blockage, b·P(W > m).
    pub c: f64,
    /// Weibull shape.
    pub k: f64,
    /// Weibull scale, in the same power units as m.
    pub lambda: f64,
    /// Unobstructed aperture power.
    pub m: f64,
}

/// Generalised density of H_b at one point: a point mass plus an ordinary
/// density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralizedDensity {
    pub point_mass: f64,
    pub density: f64,
}

impl ObstructionModel {
    pub fn new(a: f64, k: f64, lambda: f64, m: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::Parameter(format!("a must lie in [0, 1], got {a}")));
        }
        if !(k > 0.0 && lambda > 0.0 && m > 0.0) || !(k.is_finite() && lambda.is_finite() && m.is_finite()) {
            return Err(Error::Parameter(format!(
                "Weibull parameters and m must be positive (k {k}, lambda {lambda}, m {m})"
            )));
        }
        let b = 1.0 - a;
        Ok(Self {
            a,
            b,
            c: b * (-(m / lambda).powf(k)).exp(),
            k,
            lambda,
            m,
        })
    }

    /// Same model on the unit power scale (λ/m, m = 1); masses unchanged.
    pub fn normalized(&self) -> Self {
        Self {
            lambda: self.lambda / self.m,
            m: 1.0,
            ..*self
        }
    }

    /// Weibull density of the partial obstruction.
    pub fn weibull_pdf(&self, x: f64) -> f64 {
        weibull_pdf(x, self.k, self.lambda)
    }

    pub fn weibull_cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            -(-(x / self.lambda).powf(self.k)).exp_m1()
        }
    }

    /// Point masses and continuous density of H_b at `x`.
    pub fn pdf_hb(&self, x: f64) -> GeneralizedDensity {
        if !(0.0..=self.m).contains(&x) {
            return GeneralizedDensity {
                point_mass: 0.0,
                density: 0.0,
            };
        }
        let point_mass = if x == 0.0 {
            self.c
        } else if x == self.m {
            self.a
        } else {
            0.0
        };
        GeneralizedDensity {
            point_mass,
            density: self.b * self.weibull_pdf(self.m - x),
        }
    }

    /// Continuous part of the H_b density, b·f_W(m − x) on (0, m).
    pub fn continuous_pdf_hb(&self, x: f64) -> f64 {
        if x <= 0.0 || x >= self.m {
            0.0
        } else {
            self.b * self.weibull_pdf(self.m - x)
        }
    }

    /// P(H_b ≤ x): b·exp(−((m − x)/λ)^k) on [0, m), 1 from m on.
    pub fn cdf_hb(&self, x: f64) -> f64 {
        if x < 0.0 {
            0.0
        } else if x >= self.m {
            1.0
        } else {
            self.b * (-((self.m - x) / self.lambda).powf(self.k)).exp()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.a)
            && (0.0..=1.0).contains(&self.b)
            && (0.0..=self.b).contains(&self.c)
            && (self.a + self.b - 1.0).abs() < 1e-12
            && self.k > 0.0
            && self.lambda > 0.0
            && self.m > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("inconsistent obstruction model {self:?}")))
        }
    }
}

/// Weibull(k, λ) density; 0 for negative x.
pub fn weibull_pdf(x: f64, k: f64, lambda: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    let z = x / lambda;
    if z == 0.0 {
        return match k.partial_cmp(&1.0) {
            Some(std::cmp::Ordering::Less) => f64::INFINITY,
            Some(std::cmp::Ordering::Equal) => 1.0 / lambda,
            _ => 0.0,
        };
    }
    k / lambda * z.powf(k - 1.0) * (-z.powf(k)).exp()
}

/// Method-of-moments Weibull fit of the partial obstruction given the
/// moments of the total blocked power and the mass b. Returns (k, λ).
///
/// Solves ln Γ(1+2/k) − 2 ln Γ(1+1/k) = ln(b E[B²]/E[B]²) on the shape
/// bracket.
pub fn fit_weibull(moments: &MomentSummary, b: f64) -> Result<(f64, f64)> {
    fit_weibull_raw(moments.e_b, moments.e_b2, b)
}

pub fn fit_weibull_raw(e_b: f64, e_b2: f64, b: f64) -> Result<(f64, f64)> {
    if !(b > 0.0 && b <= 1.0) {
        return Err(Error::Parameter(format!("partial-obstruction mass b must lie in (0, 1], got {b}")));
    }
    let ratio = b * e_b2 / (e_b * e_b);
    if !(e_b > 0.0 && e_b2 > 0.0) || !ratio.is_finite() {
        return Err(Error::Fit {
            reason: "moments must be positive".into(),
            moment_ratio: ratio,
        });
    }
    let target = ratio.ln();
    let shape_gap = |k: f64| {
        crate::specfun::ln_gamma_unchecked(1.0 + 2.0 / k)
            - 2.0 * crate::specfun::ln_gamma_unchecked(1.0 + 1.0 / k)
            - target
    };
    let k = find_root_bracketed(shape_gap, SHAPE_BRACKET.0, SHAPE_BRACKET.1, 1e-13).map_err(|_| Error::Fit {
        reason: format!("no shape in [{}, {}]", SHAPE_BRACKET.0, SHAPE_BRACKET.1),
        moment_ratio: ratio,
    })?;
    let lambda = e_b / (b * gamma(1.0 + 1.0 / k)?);
    Ok((k, lambda))
}

/// Assembles the model from precomputed interval moments.
pub fn model_from_intervals(intervals: &[IntervalMoments], m: f64) -> Result<(ObstructionModel, MomentSummary)> {
    let a = no_obstruction_probability(intervals);
    let summary = MomentSummary::from_intervals(intervals);
    let (k, lambda) = fit_weibull(&summary, 1.0 - a)?;
    Ok((ObstructionModel::new(a, k, lambda, m)?, summary))
}

/// Analytical model for one environment.
pub fn build_obstruction_model(env: &BubbleEnvironment) -> Result<ObstructionModel> {
    let engine = MomentEngine::new(env)?;
    build_obstruction_model_with(&engine, env).map(|(model, _)| model)
}

/// Analytical model reusing a prebuilt moment engine.
pub fn build_obstruction_model_with(
    engine: &MomentEngine,
    env: &BubbleEnvironment,
) -> Result<(ObstructionModel, MomentSummary)> {
    model_from_intervals(&engine.interval_moments(env)?, aperture_power(&env.beam))
}

/// `n` evenly spaced points j·m/(n−1), j = 0..n, covering [0, m].
pub fn mse_points(m: f64, n: usize) -> Vec<f64> {
    let d = (n.max(2) - 1) as f64;
    (0..n.max(2)).map(|j| m * j as f64 / d).collect()
}

/// Mean squared difference between the empirical and model CDFs of H_b at
/// `points`.
pub fn mse_test(dist: &EmpiricalDistribution, model: &ObstructionModel, points: &[f64]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let emp = empirical_cdf(dist, points);
    points
        .iter()
        .zip(emp)
        .map(|(&x, f)| {
            let d = f - model.cdf_hb(x);
            d * d
        })
        .sum::<f64>()
        / points.len() as f64
}

/// Coefficient of determination between the simulated and model
/// probabilities of the interior histogram bins.
pub fn r2_test(dist: &EmpiricalDistribution, model: &ObstructionModel) -> Result<f64> {
    let hist = &dist.histogram;
    if hist.bins() < 2 {
        return Err(Error::Parameter("R² needs at least two histogram bins".into()));
    }
    let n = dist.n_trials as f64;
    let sim: Vec<f64> = hist.counts.iter().map(|&c| c as f64 / n).collect();
    let pred: Vec<f64> = hist
        .edges
        .windows(2)
        .map(|e| continuous_mass(model, e[0], e[1]))
        .collect();
    let mean = sim.iter().sum::<f64>() / sim.len() as f64;
    let s_t: f64 = sim.iter().map(|f| (f - mean) * (f - mean)).sum();
    let s_e: f64 = sim.iter().zip(&pred).map(|(f, p)| (f - p) * (f - p)).sum();
    if s_t == 0.0 {
        return Err(Error::DegenerateData(
            "simulated interior bin probabilities are all equal".into(),
        ));
    }
    Ok(1.0 - s_e / s_t)
}

/// Probability the continuous part of H_b assigns to (lo, hi].
pub fn continuous_mass(model: &ObstructionModel, lo: f64, hi: f64) -> f64 {
    let tail = |x: f64| {
        let x = x.clamp(0.0, model.m);
        model.b * (-((model.m - x) / model.lambda).powf(model.k)).exp()
    };
    tail(hi) - tail(lo)
}

/// Shape-parameter helper used by tests and diagnostics: the moment ratio
/// E[W²]/E[W]² of a Weibull with shape k.
pub fn weibull_moment_ratio(k: f64) -> Result<f64> {
    Ok((ln_gamma(1.0 + 2.0 / k)? - 2.0 * ln_gamma(1.0 + 1.0 / k)?).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{EmpiricalDistribution, TrialOutcome};
    use crate::specfun::{integrate_adaptive, AdaptiveSettings};
    use proptest::prelude::*;

    #[test]
    fn exponential_moments_give_unit_shape() {
        let lambda0 = 0.137;
        let (k, lambda) = fit_weibull_raw(lambda0, 2.0 * lambda0 * lambda0, 1.0).unwrap();
        assert!((k - 1.0).abs() < 1e-12, "{k}");
        assert!((lambda - lambda0).abs() < 1e-13);
    }

    #[test]
    fn fit_inverts_weibull_moments() {
        for &k0 in &[0.3, 0.7, 1.4, 2.5, 8.0] {
            for &b in &[1.0, 0.6] {
                let lambda0 = 0.08;
                // total moments when B = W with probability b, else 0
                let e1 = b * lambda0 * gamma(1.0 + 1.0 / k0).unwrap();
                let e2 = b * lambda0 * lambda0 * gamma(1.0 + 2.0 / k0).unwrap();
                let (k, lambda) = fit_weibull_raw(e1, e2, b).unwrap();
                assert!((k - k0).abs() < 1e-9 * k0, "k0={k0}: {k}");
                assert!((lambda - lambda0).abs() < 1e-9 * lambda0);
            }
        }
    }

    #[test]
    fn fit_errors_carry_ratio() {
        // ratio below 1 has no Weibull solution
        match fit_weibull_raw(1.0, 0.5, 1.0) {
            Err(Error::Fit { moment_ratio, .. }) => assert!((moment_ratio - 0.5).abs() < 1e-15),
            other => panic!("unexpected {other:?}"),
        }
        assert!(fit_weibull_raw(0.0, 1.0, 1.0).is_err());
        assert!(fit_weibull_raw(1.0, 3.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn fit_is_scale_equivariant(k0 in 0.2f64..20.0, s in 0.01f64..100.0, b in 0.05f64..1.0) {
            let e1 = b * gamma(1.0 + 1.0 / k0).unwrap();
            let e2 = b * gamma(1.0 + 2.0 / k0).unwrap();
            let (k1, l1) = fit_weibull_raw(e1, e2, b).unwrap();
            let (k2, l2) = fit_weibull_raw(s * e1, s * s * e2, b).unwrap();
            prop_assert!((k1 - k2).abs() <= 1e-10 * k1);
            prop_assert!((l2 - s * l1).abs() <= 1e-10 * s * l1);
        }
    }

    fn model() -> ObstructionModel {
        ObstructionModel::new(0.3, 1.4, 0.12, 0.3934693402873666).unwrap()
    }

    #[test]
    fn model_masses_sum_to_one() {
        let md = model();
        md.validate().unwrap();
        let settings = AdaptiveSettings::default().with_tolerances(1e-13, 1e-11);
        let cont = integrate_adaptive(|x| md.continuous_pdf_hb(x), 0.0, md.m, &settings).unwrap();
        assert!((cont + md.a + md.c - 1.0).abs() < 1e-8);
        assert_eq!(md.cdf_hb(md.m), 1.0);
        assert!((md.cdf_hb(0.0) - md.c).abs() < 1e-15);
        assert_eq!(md.pdf_hb(0.0).point_mass, md.c);
        assert_eq!(md.pdf_hb(md.m).point_mass, md.a);
        assert_eq!(md.pdf_hb(-0.1).density, 0.0);
        assert_eq!(md.pdf_hb(md.m).density, md.b * md.weibull_pdf(0.0));
    }

    #[test]
    fn normalization_preserves_masses() {
        let md = model();
        let n = md.normalized();
        assert_eq!(n.m, 1.0);
        assert!((n.c - md.c).abs() < 1e-15);
        assert!((n.cdf_hb(0.4) - md.cdf_hb(0.4 * md.m)).abs() < 1e-14);
    }

    fn synthetic(md: &ObstructionModel, n: usize) -> EmpiricalDistribution {
        // deterministic quantile grid of the model itself
        let outcomes: Vec<TrialOutcome> = (0..n)
            .map(|j| {
                let u = (j as f64 + 0.5) / n as f64;
                let x = if u < md.c {
                    0.0
                } else if u >= 1.0 - md.a {
                    md.m
                } else {
                    md.m - md.lambda * (-(u / md.b).ln()).powf(1.0 / md.k)
                };
                TrialOutcome {
                    obstruction: md.m - x,
                    received: x,
                }
            })
            .collect();
        EmpiricalDistribution::from_outcomes(&outcomes, md.m, 100, 0).unwrap()
    }

    #[test]
    fn goodness_of_fit_on_own_samples() {
        let md = model();
        let d = synthetic(&md, 200_000);
        let mse = mse_test(&d, &md, &mse_points(md.m, 100));
        assert!(mse < 1e-9, "{mse}");
        let r2 = r2_test(&d, &md).unwrap();
        assert!(r2 > 0.9999 && r2 <= 1.0, "{r2}");
        let other = ObstructionModel::new(0.3, 3.0, 0.12, md.m).unwrap();
        assert!(r2_test(&d, &other).unwrap() < r2);
        assert!(mse_test(&d, &other, &mse_points(md.m, 100)) > mse);
    }

    #[test]
    fn r2_rejects_flat_histograms() {
        let outcomes = vec![
            TrialOutcome {
                obstruction: 0.0,
                received: 0.39,
            };
            10
        ];
        let mut d = EmpiricalDistribution::from_outcomes(&outcomes, 0.39, 10, 0).unwrap();
        d.histogram.counts.iter_mut().for_each(|c| *c = 0);
        assert!(matches!(r2_test(&d, &model()), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn moment_ratio_helper() {
        assert!((weibull_moment_ratio(1.0).unwrap() - 2.0).abs() < 1e-13);
    }
}
