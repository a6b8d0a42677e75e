//! Composite channel h = h_l · h_a · h_b: Gamma-Gamma turbulence fading
//! h_a times the mixed Dirac-Weibull bubble gain h_b, and the ergodic
//! capacity and average bit error rate of an IM/DD link over it.

use crate::error::{Error, Result};
use crate::fit::ObstructionModel;
use crate::specfun::{ln_bessel_k, gauss_legendre, integrate_adaptive, ln_gamma, q_function, AdaptiveSettings};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Gauss-Legendre order used for the bubble-gain mixture by default.
pub const DEFAULT_GL_ORDER: usize = 32;
pub const MIN_GL_ORDER: usize = 8;

const CHECKPOINT_LO: f64 = 1e-8;
const CHECKPOINT_HI: f64 = 400.0;
const CHECKPOINTS_PER_OCTAVE: usize = 4;
const PANEL_ORDER: usize = 16;

/// Unit-mean Gamma-Gamma law of the turbulence gain.
#[derive(Debug, Clone)]
pub struct GammaGamma {
    alpha: f64,
    beta: f64,
    log_coef: f64,
    nu: f64,
    /// (x_j, F(x_j)) on a geometric grid.
    checkpoints: Vec<(f64, f64)>,
    /// Composite Gauss-Legendre nodes (x, weight · pdf(x)) over the same grid.
    expectation_nodes: Vec<(f64, f64)>,
}

impl GammaGamma {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::Parameter(format!(
                "Gamma-Gamma parameters must be positive (alpha {alpha}, beta {beta})"
            )));
        }
        if (alpha - beta).abs() > 50.0 {
            return Err(Error::Parameter(format!("|alpha - beta| must not exceed 50, got {}", (alpha - beta).abs())));
        }
        let ab = alpha * beta;
        let log_coef = std::f64::consts::LN_2 + 0.5 * (alpha + beta) * ab.ln() - ln_gamma(alpha)? - ln_gamma(beta)?;
        let mut gg = Self {
            alpha,
            beta,
            log_coef,
            nu: alpha - beta,
            checkpoints: Vec::new(),
            expectation_nodes: Vec::new(),
        };
        gg.build_tables()?;
        Ok(gg)
    }

    fn grid() -> Vec<f64> {
        let octaves = (CHECKPOINT_HI / CHECKPOINT_LO).log2();
        let n = (octaves * CHECKPOINTS_PER_OCTAVE as f64).ceil() as usize;
        let ratio = (CHECKPOINT_HI / CHECKPOINT_LO).powf(1.0 / n as f64);
        let mut g = vec![0.0];
        g.extend((0..=n).map(|j| CHECKPOINT_LO * ratio.powi(j as i32)));
        g
    }

    fn build_tables(&mut self) -> Result<()> {
        let grid = Self::grid();
        let settings = AdaptiveSettings::default().with_tolerances(1e-16, 1e-12);
        let rule = gauss_legendre(PANEL_ORDER)?;
        let mut acc = 0.0;
        let mut checkpoints = vec![(0.0, 0.0)];
        let mut nodes = Vec::with_capacity(grid.len() * PANEL_ORDER);
        for w in grid.windows(2) {
            acc += integrate_adaptive(|x| self.pdf(x), w[0], w[1], &settings)?;
            checkpoints.push((w[1], acc.min(1.0)));
            for (x, wt) in rule.mapped(w[0], w[1]) {
                nodes.push((x, wt * self.pdf(x)));
            }
        }
        self.checkpoints = checkpoints;
        self.expectation_nodes = nodes;
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// 2(αβ)^{(α+β)/2} / (Γ(α)Γ(β)) · x^{(α+β)/2−1} · K_{α−β}(2√(αβx)); 0 for x ≤ 0.
    pub fn pdf(&self, x: f64) -> f64 {
        if !(x > 0.0) || !x.is_finite() {
            return 0.0;
        }
        let z = 2.0 * (self.alpha * self.beta * x).sqrt();
        match ln_bessel_k(self.nu, z) {
            Ok(lk) => (self.log_coef + (0.5 * (self.alpha + self.beta) - 1.0) * x.ln() + lk).exp(),
            Err(_) => 0.0,
        }
    }

    /// CDF from the nearest checkpoint plus an adaptive remainder.
    pub fn cdf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return 0.0;
        }
        if x >= CHECKPOINT_HI {
            return 1.0;
        }
        let j = self.checkpoints.partition_point(|&(xj, _)| xj <= x) - 1;
        let (xj, fj) = self.checkpoints[j];
        if x == xj {
            return fj;
        }
        let settings = AdaptiveSettings::default().with_tolerances(1e-16, 1e-12);
        let rest = integrate_adaptive(|t| self.pdf(t), xj, x, &settings).unwrap_or_else(|e| e.best_estimate().unwrap_or(0.0));
        (fj + rest).clamp(0.0, 1.0)
    }

    /// E[g(H_a)] by the precomputed composite rule. Accurate for smooth `g`.
    pub fn expectation<G: FnMut(f64) -> f64>(&self, mut g: G) -> f64 {
        self.expectation_nodes.iter().map(|&(x, w)| w * g(x)).sum()
    }

    /// One draw as the product of two unit-mean Gamma variates.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let x = Gamma::new(self.alpha, 1.0 / self.alpha).map(|d| d.sample(rng)).unwrap_or(1.0);
        let y = Gamma::new(self.beta, 1.0 / self.beta).map(|d| d.sample(rng)).unwrap_or(1.0);
        x * y
    }
}

/// Gamma-Gamma density for a single evaluation; see [`GammaGamma`] for
/// repeated use.
pub fn gamma_gamma_pdf(x: f64, alpha: f64, beta: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Ok(0.0);
    }
    let ab = alpha * beta;
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::Parameter(format!(
            "Gamma-Gamma parameters must be positive (alpha {alpha}, beta {beta})"
        )));
    }
    let log_coef = std::f64::consts::LN_2 + 0.5 * (alpha + beta) * ab.ln() - ln_gamma(alpha)? - ln_gamma(beta)?;
    let lk = ln_bessel_k(alpha - beta, 2.0 * (ab * x).sqrt())?;
    Ok((log_coef + (0.5 * (alpha + beta) - 1.0) * x.ln() + lk).exp())
}

/// Gamma-Gamma CDF for a single evaluation.
pub fn gamma_gamma_cdf(x: f64, alpha: f64, beta: f64) -> Result<f64> {
    Ok(GammaGamma::new(alpha, beta)?.cdf(x))
}

/// Turbulence, path loss, SNR and modulation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeChannelParams {
    pub alpha: f64,
    pub beta: f64,
    /// Path loss h_l.
    pub h_l: f64,
    /// Average SNR γ̄ (linear).
    pub avg_snr: f64,
    /// BER ≈ E[Q(p√(qγ))].
    pub p: f64,
    pub q: f64,
    /// Gauss-Legendre order of the bubble-gain mixture.
    pub gl_order: usize,
}

impl Default for CompositeChannelParams {
    /// α = 2.21, β = 3.31, h_l = 1, γ̄ = 30 dB, p = 1, q = 2, order 32.
    fn default() -> Self {
        Self {
            alpha: 2.21,
            beta: 3.31,
            h_l: 1.0,
            avg_snr: 1000.0,
            p: 1.0,
            q: 2.0,
            gl_order: DEFAULT_GL_ORDER,
        }
    }
}

impl CompositeChannelParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("path loss h_l", self.h_l),
            ("average SNR", self.avg_snr),
            ("p", self.p),
            ("q", self.q),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.gl_order < MIN_GL_ORDER {
            return Err(Error::Parameter(format!(
                "gl_order must be at least {MIN_GL_ORDER}, got {}",
                self.gl_order
            )));
        }
        Ok(())
    }

    pub fn avg_snr_db(&self) -> f64 {
        10.0 * self.avg_snr.log10()
    }

    pub fn with_snr_db(mut self, db: f64) -> Self {
        self.avg_snr = db_to_linear(db);
        self
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Discrete mixture for the bubble gain on the unit power scale: point
/// masses c at 0 and a at 1, and the Weibull part replaced by `nodes`
/// (gain y_i, probability w_i).
///
/// The Gauss-Legendre nodes are placed in u = ((1 − y)/λ)^k rather than in
/// y. The Weibull weight becomes e^{−u}, which is smooth even for k < 1
/// where f_W is unbounded at 0, so the mixture mass is exact to rounding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleGainMixture {
    pub a: f64,
    pub c: f64,
    pub nodes: Vec<(f64, f64)>,
}

impl BubbleGainMixture {
    pub fn new(model: &ObstructionModel, order: usize) -> Result<Self> {
        let model = model.normalized();
        let rule = gauss_legendre(order)?;
        // u = (w/λ)^k turns b·f_W(w) dw into b·e^{−u} du on [0, λ^{−k}]
        let top = model.lambda.powf(-model.k);
        let nodes = rule
            .iter()
            .map(|(s, w)| {
                let u = 0.5 * top * (s + 1.0);
                let obstruction = model.lambda * u.powf(1.0 / model.k);
                ((1.0 - obstruction).clamp(0.0, 1.0), 0.5 * top * w * model.b * (-u).exp())
            })
            .collect();
        Ok(Self {
            a: model.a,
            c: model.c,
            nodes,
        })
    }

    pub fn total_mass(&self) -> f64 {
        self.a + self.c + self.nodes.iter().map(|n| n.1).sum::<f64>()
    }

    /// E[g(H_b)] under the mixture.
    pub fn expectation<G: FnMut(f64) -> f64>(&self, mut g: G) -> f64 {
        self.c * g(0.0) + self.a * g(1.0) + self.nodes.iter().map(|&(y, w)| w * g(y)).sum::<f64>()
    }
}

/// Distribution of the instantaneous SNR γ = γ̄ (h_l h_a h_b)².
#[derive(Debug, Clone)]
pub struct SnrDistribution {
    pub model: ObstructionModel,
    pub params: CompositeChannelParams,
    pub point_mass_at_zero: f64,
    mixture: BubbleGainMixture,
    fading: Arc<GammaGamma>,
}

impl SnrDistribution {
    pub fn new(model: &ObstructionModel, params: CompositeChannelParams) -> Result<Self> {
        params.validate()?;
        let fading = Arc::new(GammaGamma::new(params.alpha, params.beta)?);
        Self::with_fading(model, params, fading)
    }

    /// Reuses a prebuilt Gamma-Gamma law (it must match `params`).
    pub fn with_fading(model: &ObstructionModel, params: CompositeChannelParams, fading: Arc<GammaGamma>) -> Result<Self> {
        params.validate()?;
        model.validate()?;
        if fading.alpha != params.alpha || fading.beta != params.beta {
            return Err(Error::Parameter("fading law does not match the channel parameters".into()));
        }
        let normalized = model.normalized();
        Ok(Self {
            mixture: BubbleGainMixture::new(&normalized, params.gl_order)?,
            point_mass_at_zero: normalized.c,
            model: normalized,
            params,
            fading,
        })
    }

    pub fn mixture(&self) -> &BubbleGainMixture {
        &self.mixture
    }

    pub fn fading(&self) -> &GammaGamma {
        &self.fading
    }

    fn gain_scale(&self) -> f64 {
        self.params.avg_snr * self.params.h_l * self.params.h_l
    }

    /// P(γ ≤ x).
    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let s = self.gain_scale();
        let c = self.point_mass_at_zero;
        let body: f64 = self
            .components()
            .map(|(y, w)| if y > 0.0 { w * self.fading.cdf((x / (s * y * y)).sqrt()) } else { w })
            .sum();
        (c + body).min(1.0)
    }

    /// Point mass at 0 (only at x = 0) and continuous density at `x`.
    pub fn pdf(&self, x: f64) -> (f64, f64) {
        if x < 0.0 {
            return (0.0, 0.0);
        }
        let mass = if x == 0.0 { self.point_mass_at_zero } else { 0.0 };
        if x == 0.0 {
            return (mass, 0.0);
        }
        let s = self.gain_scale();
        let density = self
            .components()
            .filter(|&(y, _)| y > 0.0)
            .map(|(y, w)| {
                let sy = s * y * y;
                w * self.fading.pdf((x / sy).sqrt()) / (2.0 * (x * sy).sqrt())
            })
            .sum();
        (mass, density)
    }

    /// (gain y, probability) over the continuous mixture nodes and the
    /// no-obstruction mass.
    fn components(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.mixture.nodes.iter().copied().chain(std::iter::once((1.0, self.mixture.a)))
    }

    /// E[g(γ)] over the continuous part and the no-obstruction mass; the
    /// point mass at zero is left to the caller.
    fn expectation_without_outage<G: Fn(f64) -> f64>(&self, g: G) -> f64 {
        let s = self.gain_scale();
        self.components()
            .map(|(y, w)| {
                let sy = s * y * y;
                w * self.fading.expectation(|h| g(sy * h * h))
            })
            .sum()
    }

    /// C̄ = E[log₂(1 + γ)], bits per channel use.
    pub fn ergodic_capacity(&self) -> f64 {
        self.expectation_without_outage(|g| (g.ln_1p()) / std::f64::consts::LN_2)
    }

    /// E[Q(p√(qγ))]; the outage mass contributes c·Q(0) = c/2.
    pub fn average_ber(&self) -> f64 {
        let (p, q) = (self.params.p, self.params.q);
        0.5 * self.point_mass_at_zero + self.expectation_without_outage(|g| q_function(p * (q * g).sqrt()))
    }
}

/// P(H_a H_b ≤ x) for a normalised model.
pub fn composite_cdf_hab(x: f64, model: &ObstructionModel, params: &CompositeChannelParams) -> Result<f64> {
    let mut unit = *params;
    unit.avg_snr = 1.0;
    unit.h_l = 1.0;
    // γ = (h_a h_b)² at unit SNR
    Ok(SnrDistribution::new(model, unit)?.cdf(x.max(0.0).powi(2)))
}

pub fn snr_cdf(x: f64, dist: &SnrDistribution) -> f64 {
    dist.cdf(x)
}

pub fn snr_pdf(x: f64, dist: &SnrDistribution) -> (f64, f64) {
    dist.pdf(x)
}

pub fn ergodic_capacity(dist: &SnrDistribution) -> f64 {
    dist.ergodic_capacity()
}

pub fn average_ber(dist: &SnrDistribution) -> f64 {
    dist.average_ber()
}

/// One row of a performance sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub snr_db: f64,
    pub capacity_bpcu: f64,
    pub avg_ber: f64,
    pub model_id: String,
}

/// Capacity and BER of every model at every grid point, model-major.
pub fn sweep(models: &[(String, ObstructionModel)], params: &CompositeChannelParams, snr_grid_db: &[f64]) -> Result<Vec<SweepRow>> {
    if snr_grid_db.is_empty() {
        return Err(Error::Parameter("SNR grid must not be empty".into()));
    }
    params.validate()?;
    let fading = Arc::new(GammaGamma::new(params.alpha, params.beta)?);
    let mut rows = Vec::with_capacity(models.len() * snr_grid_db.len());
    for (id, model) in models {
        for &db in snr_grid_db {
            let dist = SnrDistribution::with_fading(model, params.with_snr_db(db), Arc::clone(&fading))?;
            rows.push(SweepRow {
                snr_db: db,
                capacity_bpcu: dist.ergodic_capacity(),
                avg_ber: dist.average_ber(),
                model_id: id.clone(),
            });
        }
    }
    Ok(rows)
}

/// Draws H_b from the mixed Dirac-Weibull model on the unit power scale.
pub fn sample_model_gain<R: Rng + ?Sized>(model: &ObstructionModel, rng: &mut R) -> f64 {
    let model = model.normalized();
    let u: f64 = rng.gen();
    if u < model.a {
        return 1.0;
    }
    let v: f64 = rng.gen();
    let w = model.lambda * (-(1.0 - v).ln()).powf(1.0 / model.k);
    (1.0 - w).max(0.0)
}

/// Monte Carlo capacity and BER from bubble-gain samples (unit power
/// scale), each paired with a fresh Gamma-Gamma draw.
pub fn monte_carlo_metrics<R: Rng + ?Sized>(
    gains: &[f64],
    params: &CompositeChannelParams,
    draws_per_gain: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    params.validate()?;
    if gains.is_empty() || draws_per_gain == 0 {
        return Err(Error::Parameter("Monte Carlo needs at least one sample".into()));
    }
    let fading = GammaGamma::new_sampler(params.alpha, params.beta)?;
    let s = params.avg_snr * params.h_l * params.h_l;
    let (mut cap, mut ber) = (0.0, 0.0);
    for &g in gains {
        for _ in 0..draws_per_gain {
            let h = g * fading.sample(rng);
            let snr = s * h * h;
            cap += snr.ln_1p() / std::f64::consts::LN_2;
            ber += q_function(params.p * (params.q * snr).sqrt());
        }
    }
    let n = (gains.len() * draws_per_gain) as f64;
    Ok((cap / n, ber / n))
}

impl GammaGamma {
    /// Parameters only, without the CDF and expectation tables; enough for
    /// [`GammaGamma::sample`] and [`GammaGamma::pdf`].
    pub fn new_sampler(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0) || (alpha - beta).abs() > 50.0 {
            return Err(Error::Parameter(format!(
                "invalid Gamma-Gamma parameters (alpha {alpha}, beta {beta})"
            )));
        }
        let ab = alpha * beta;
        Ok(Self {
            alpha,
            beta,
            log_coef: std::f64::consts::LN_2 + 0.5 * (alpha + beta) * ab.ln() - ln_gamma(alpha)? - ln_gamma(beta)?,
            nu: alpha - beta,
            checkpoints: Vec::new(),
            expectation_nodes: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::trial_rng;

    fn gg() -> GammaGamma {
        GammaGamma::new(2.21, 3.31).unwrap()
    }

    #[test]
    fn gamma_gamma_normalisation_and_mean() {
        let g = gg();
        let settings = AdaptiveSettings::default().with_tolerances(1e-14, 1e-12);
        let pts = [0.0, 0.5, 1.0, 2.0, 5.0, 20.0, 100.0, 400.0];
        let mut mass = 0.0;
        let mut mean = 0.0;
        for w in pts.windows(2) {
            mass += integrate_adaptive(|x| g.pdf(x), w[0], w[1], &settings).unwrap();
            mean += integrate_adaptive(|x| x * g.pdf(x), w[0], w[1], &settings).unwrap();
        }
        assert!((mass - 1.0).abs() < 1e-6, "{mass}");
        assert!((mean - 1.0).abs() < 1e-6, "{mean}");
        assert!((g.expectation(|_| 1.0) - 1.0).abs() < 1e-9);
        assert!((g.expectation(|x| x) - 1.0).abs() < 1e-9);
        // E[X²] = (1 + 1/α)(1 + 1/β)
        let second = (1.0 + 1.0 / 2.21) * (1.0 + 1.0 / 3.31);
        assert!((g.expectation(|x| x * x) - second).abs() < 1e-9);
    }

    #[test]
    fn unit_parameters_match_product_of_exponentials() {
        let g = GammaGamma::new(1.0, 1.0).unwrap();
        let settings = AdaptiveSettings::default().with_tolerances(1e-15, 1e-12);
        for &z in &[0.01, 0.3, 1.0, 2.5, 7.0] {
            // density of XY with X, Y ~ Exp(1): ∫ e^{-t} e^{-z/t} / t dt
            let direct = integrate_adaptive(|t: f64| (-t - z / t).exp() / t, 0.0, 80.0, &settings).unwrap();
            assert!((g.pdf(z) - direct).abs() < 1e-9 * direct, "z={z}");
        }
    }

    #[test]
    fn gamma_gamma_cdf_matches_tight_quadrature() {
        let g = gg();
        let settings = AdaptiveSettings::new(1e-17, 1e-13, 2000).unwrap();
        let oracle = integrate_adaptive(|x| g.pdf(x), 0.0, 1.0, &settings).unwrap();
        assert!((g.cdf(1.0) - oracle).abs() < 1e-9);
        assert!((gamma_gamma_cdf(1.0, 2.21, 3.31).unwrap() - oracle).abs() < 1e-9);
        assert_eq!(g.cdf(0.0), 0.0);
        assert_eq!(g.cdf(-1.0), 0.0);
        assert!((g.cdf(1e3) - 1.0).abs() < 1e-6);
        assert!((g.cdf(60.0) - 1.0).abs() < 1e-6);
        let xs = [0.05, 0.3, 0.9, 1.7, 4.0];
        assert!(xs.windows(2).all(|w| g.cdf(w[0]) < g.cdf(w[1])));
        assert_eq!(gamma_gamma_pdf(0.0, 2.21, 3.31).unwrap(), 0.0);
        assert!((gamma_gamma_pdf(0.8, 2.21, 3.31).unwrap() - g.pdf(0.8)).abs() < 1e-15);
    }

    #[test]
    fn parameter_order_is_symmetric() {
        let a = gg();
        let b = GammaGamma::new(3.31, 2.21).unwrap();
        for &x in &[0.1, 1.0, 3.0] {
            assert!((a.pdf(x) - b.pdf(x)).abs() < 1e-13 * a.pdf(x));
        }
    }

    fn model(a: f64, k: f64, lambda: f64) -> ObstructionModel {
        ObstructionModel::new(a, k, lambda, 0.3934693402873666).unwrap()
    }

    #[test]
    fn mixture_mass_is_exact() {
        for &(k, lambda) in &[(0.93, 0.03), (1.43, 0.16), (2.29, 0.7), (0.4, 0.1)] {
            let mix = BubbleGainMixture::new(&model(0.2, k, lambda), 32).unwrap();
            assert!((mix.total_mass() - 1.0).abs() < 1e-13, "k={k}");
            assert!(mix.nodes.iter().all(|&(y, w)| (0.0..=1.0).contains(&y) && w >= 0.0));
        }
    }

    #[test]
    fn snr_distribution_basics() {
        let md = model(0.0115, 1.43, 0.162);
        let params = CompositeChannelParams::default().with_snr_db(20.0);
        let d = SnrDistribution::new(&md, params).unwrap();
        assert!((d.cdf(0.0) - d.point_mass_at_zero).abs() < 1e-15);
        assert!((d.cdf(1e9) - 1.0).abs() < 1e-6);
        let xs: Vec<f64> = (0..40).map(|j| 10f64.powf(-3.0 + 0.2 * j as f64)).collect();
        let cdf: Vec<f64> = xs.iter().map(|&x| d.cdf(x)).collect();
        assert!(cdf.windows(2).all(|w| w[0] <= w[1] + 1e-12));
        // point mass plus integrated density
        let settings = AdaptiveSettings::new(1e-12, 1e-9, 2000).unwrap();
        let s = params.avg_snr;
        let mut pts = vec![0.0];
        pts.extend((0..=30).map(|j| s * 10f64.powf(-8.0 + 0.35 * j as f64)));
        let cont = crate::specfun::integrate_adaptive_points(|x| d.pdf(x).1, &pts, &settings).unwrap();
        let total = d.pdf(0.0).0 + cont;
        assert!((total - 1.0).abs() < 1e-5, "{total}");
    }

    #[test]
    fn capacity_matches_gamma_domain_integral() {
        let md = model(0.0115, 1.43, 0.162);
        let d = SnrDistribution::new(&md, CompositeChannelParams::default()).unwrap();
        let s = d.params.avg_snr;
        let settings = AdaptiveSettings::new(1e-12, 1e-10, 4000).unwrap();
        let mut pts = vec![0.0];
        pts.extend((0..=36).map(|j| s * 10f64.powf(-10.0 + 0.35 * j as f64)));
        let cap = crate::specfun::integrate_adaptive_points(|x| x.ln_1p() / std::f64::consts::LN_2 * d.pdf(x).1, &pts, &settings)
            .unwrap();
        assert!((cap - d.ergodic_capacity()).abs() < 1e-6 * cap, "{cap} vs {}", d.ergodic_capacity());
        let ber = 0.5 * d.point_mass_at_zero
            + crate::specfun::integrate_adaptive_points(|x| q_function((2.0 * x).sqrt()) * d.pdf(x).1, &pts, &settings).unwrap();
        assert!((ber - d.average_ber()).abs() < 1e-6 * ber, "{ber} vs {}", d.average_ber());
    }

    #[test]
    fn deterministic_channel_limits() {
        // a = 1 and nearly constant fading
        let md = ObstructionModel::new(1.0, 1.0, 0.1, 0.39).unwrap();
        let params = CompositeChannelParams {
            alpha: 4000.0,
            beta: 4000.0,
            h_l: 0.8,
            avg_snr: 100.0,
            ..Default::default()
        };
        let d = SnrDistribution::new(&md, params).unwrap();
        let expected = (1.0 + 0.64 * 100.0f64).log2();
        assert!((d.ergodic_capacity() - expected).abs() < 2e-3 * expected);
        assert_eq!(d.point_mass_at_zero, 0.0);
    }

    #[test]
    fn low_and_high_snr_limits() {
        let md = model(0.0037, 1.57, 0.3445);
        let base = CompositeChannelParams::default();
        let low = SnrDistribution::new(&md, base.with_snr_db(-60.0)).unwrap();
        assert!(low.ergodic_capacity() < 1e-5);
        assert!((low.average_ber() - 0.5).abs() < 1e-3);
        let high = SnrDistribution::new(&md, base.with_snr_db(60.0)).unwrap();
        let floor = 0.5 * high.point_mass_at_zero;
        assert!((high.average_ber() - floor).abs() < 1e-2 * floor);
    }

    #[test]
    fn ber_decreases_and_capacity_grows_with_snr() {
        let md = model(0.0115, 1.43, 0.162);
        let grid: Vec<f64> = (0..=25).map(|j| 2.0 * j as f64).collect();
        let rows = sweep(&[("m".to_string(), md)], &CompositeChannelParams::default(), &grid).unwrap();
        assert_eq!(rows.len(), grid.len());
        let floor = 0.5 * md.c;
        for w in rows.windows(2) {
            assert!(w[1].capacity_bpcu >= w[0].capacity_bpcu);
            assert!(w[1].avg_ber - floor <= w[0].avg_ber - floor);
        }
        assert!(sweep(&[("m".to_string(), md)], &CompositeChannelParams::default(), &[]).is_err());
    }

    #[test]
    fn gl_order_convergence() {
        for md in [model(0.427, 0.933, 0.0298), model(0.0115, 1.43, 0.162), model(1.3e-5, 2.29, 0.696)] {
            for db in [10.0, 30.0] {
                let p32 = CompositeChannelParams::default().with_snr_db(db);
                let p64 = CompositeChannelParams { gl_order: 64, ..p32 };
                let a = SnrDistribution::new(&md, p32).unwrap();
                let b = SnrDistribution::new(&md, p64).unwrap();
                let dc = (a.ergodic_capacity() / b.ergodic_capacity() - 1.0).abs();
                let db_ = (a.average_ber() / b.average_ber() - 1.0).abs();
                assert!(dc < 1e-3 && db_ < 1e-3, "k={} snr={db}: {dc} {db_} {} {}", md.k, a.average_ber(), b.average_ber());
            }
        }
    }

    #[test]
    fn composite_cdf_matches_sampling() {
        let md = model(0.11, 1.1, 0.085);
        let params = CompositeChannelParams::default();
        let fading = GammaGamma::new_sampler(2.21, 3.31).unwrap();
        let mut rng = trial_rng(3, 0);
        let n = 200_000;
        let mut samples: Vec<f64> = (0..n)
            .map(|_| sample_model_gain(&md, &mut rng) * fading.sample(&mut rng))
            .collect();
        samples.sort_by(f64::total_cmp);
        let mut sup: f64 = 0.0;
        for &x in &[0.0, 0.05, 0.2, 0.4, 0.6, 0.8, 1.0, 1.5, 2.5] {
            let emp = samples.partition_point(|&s| s <= x) as f64 / n as f64;
            sup = sup.max((emp - composite_cdf_hab(x, &md, &params).unwrap()).abs());
        }
        assert!(sup < 0.005, "{sup}");
        assert!((composite_cdf_hab(0.0, &md, &params).unwrap() - md.c).abs() < 1e-15);
    }

    #[test]
    fn invalid_parameters() {
        assert!(GammaGamma::new(-1.0, 2.0).is_err());
        let bad = CompositeChannelParams {
            gl_order: 4,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(CompositeChannelParams { avg_snr: 0.0, ..Default::default() }.validate().is_err());
    }
}
