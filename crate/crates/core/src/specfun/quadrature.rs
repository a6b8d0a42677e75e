use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Gauss-Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

const MAX_ORDER: usize = 256;

/// Builds the `order`-point Gauss-Legendre rule.
///
/// Roots of P_n are polished by Newton iteration starting from the usual
/// Chebyshev-like guesses; only the non-negative half is computed and the
/// rule is mirrored so nodes and weights are exactly symmetric.
pub fn gauss_legendre(order: usize) -> Result<QuadratureRule> {
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(Error::Parameter(format!(
            "Gauss-Legendre order must lie in 1..={MAX_ORDER}, got {order}"
        )));
    }
    let n = order;
    let nf = n as f64;
    let half = n.div_ceil(2);
    let mut upper = Vec::with_capacity(half);
    for i in 1..=half {
        let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
        // refresh the derivative at the polished root
        let (_, d) = legendre_with_derivative(n, x);
        if d.is_finite() {
            dp = d;
        }
        if n % 2 == 1 && i == half {
            x = 0.0;
            dp = legendre_with_derivative(n, 0.0).1;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        upper.push((x, w));
    }

    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for &(x, w) in &upper {
        if x != 0.0 {
            nodes.push(-x);
            weights.push(w);
        }
    }
    for &(x, w) in upper.iter().rev() {
        nodes.push(x);
        weights.push(w);
    }
    Ok(QuadratureRule { nodes, weights })
}

/// P_n(x) and P_n'(x) by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

impl QuadratureRule {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Iterates over `(node, weight)` pairs on [-1, 1].
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    /// Applies the rule to `f` on `[lo, hi]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, lo: f64, hi: f64, mut f: F) -> f64 {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        half * self.iter().map(|(x, w)| w * f(mid + half * x)).sum::<f64>()
    }

    /// Maps the rule onto `[lo, hi]`, returning absolute nodes and scaled weights.
    pub fn mapped(&self, lo: f64, hi: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        self.iter().map(move |(x, w)| (mid + half * x, w * half))
    }
}

/// Tolerances and subdivision budget for [`integrate_adaptive`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl AdaptiveSettings {
    pub fn new(abs_tol: f64, rel_tol: f64, max_subdivisions: usize) -> Result<Self> {
        if !(abs_tol > 0.0 && rel_tol > 0.0) || max_subdivisions == 0 {
            return Err(Error::Parameter(format!(
                "adaptive tolerances must be positive (abs {abs_tol}, rel {rel_tol}, max {max_subdivisions})"
            )));
        }
        Ok(Self {
            abs_tol,
            rel_tol,
            max_subdivisions,
        })
    }

    pub fn with_tolerances(self, abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            abs_tol,
            rel_tol,
            ..self
        }
    }
}

impl Default for AdaptiveSettings {
    fn default() -> Self {
        Self {
            abs_tol: 1e-13,
            rel_tol: 1e-10,
            max_subdivisions: 500,
        }
    }
}

// 7-point Gauss / 15-point Kronrod abscissae and weights (QUADPACK qk15).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

fn kronrod15<F: FnMut(f64) -> f64>(f: &mut F, lo: f64, hi: f64) -> Segment {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center);
    let mut result_k = fc * WGK[7];
    let mut result_g = fc * WG[3];
    let mut result_abs = result_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        result_k += WGK[j] * (f1 + f2);
        result_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            result_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * result_k;
    let mut result_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        result_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = result_k * half;
    result_abs *= half.abs();
    result_asc *= half.abs();
    let mut error = ((result_k - result_g) * half).abs();
    if result_asc != 0.0 && error != 0.0 {
        error = result_asc * (200.0 * error / result_asc).powf(1.5).min(1.0);
    }
    if result_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * result_abs);
    }
    Segment {
        lo,
        hi,
        value,
        error,
    }
}

/// Globally adaptive Gauss-Kronrod (7/15) integration of `f` over `[lo, hi]`.
///
/// Returns the estimate once the summed error estimate drops below
/// `max(abs_tol, rel_tol * |result|)`. Exhausting the subdivision budget
/// yields [`Error::Convergence`] carrying the best estimate.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    settings: &AdaptiveSettings,
) -> Result<f64> {
    integrate_adaptive_points(f, &[lo, hi], settings)
}

/// Like [`integrate_adaptive`] but starts from the partition given by the
/// sorted `points` (first and last are the integration limits). Useful when
/// the integrand has known kinks.
pub fn integrate_adaptive_points<F: FnMut(f64) -> f64>(
    mut f: F,
    points: &[f64],
    settings: &AdaptiveSettings,
) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::Parameter("need at least two integration limits".into()));
    }
    let (lo, hi) = (points[0], points[points.len() - 1]);
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(Error::Parameter(format!("invalid integration range [{lo}, {hi}]")));
    }
    if lo == hi {
        return Ok(0.0);
    }
    let mut segments: Vec<Segment> = points
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| kronrod15(&mut f, w[0], w[1]))
        .collect();

    loop {
        let total: f64 = segments.iter().map(|s| s.value).sum();
        let err: f64 = segments.iter().map(|s| s.error).sum();
        if !total.is_finite() {
            return Err(Error::Domain(format!(
                "integrand is not finite on [{lo}, {hi}]"
            )));
        }
        if err <= settings.abs_tol.max(settings.rel_tol * total.abs()) {
            return Ok(total);
        }
        if segments.len() >= settings.max_subdivisions {
            return Err(Error::Convergence {
                estimate: total,
                error: err,
            });
        }
        let (idx, worst) = segments
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.error.total_cmp(&b.1.error))
            .map(|(i, s)| (i, *s))
            .expect("non-empty segment list");
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            // interval cannot be split further in floating point
            return Err(Error::Convergence {
                estimate: total,
                error: err,
            });
        }
        segments[idx] = kronrod15(&mut f, worst.lo, mid);
        segments.push(kronrod15(&mut f, mid, worst.hi));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn order_one_is_midpoint() {
        let rule = gauss_legendre(1).unwrap();
        assert_eq!(rule.nodes(), &[0.0]);
        assert!((rule.weights()[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn order_two_classical() {
        let rule = gauss_legendre(2).unwrap();
        let x = 1.0 / 3f64.sqrt();
        assert!((rule.nodes()[0] + x).abs() < 1e-15);
        assert!((rule.nodes()[1] - x).abs() < 1e-15);
        assert!((rule.weights()[0] - 1.0).abs() < 1e-14);
        assert!((rule.weights()[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn odd_polynomial_vanishes() {
        let rule = gauss_legendre(16).unwrap();
        let v = rule.integrate(-1.0, 1.0, |x| x.powi(15));
        assert!(v.abs() < 1e-14, "{v}");
    }

    #[test]
    fn order_out_of_range() {
        assert!(matches!(gauss_legendre(0), Err(Error::Parameter(_))));
        assert!(matches!(gauss_legendre(257), Err(Error::Parameter(_))));
        assert!(gauss_legendre(256).is_ok());
    }

    #[test]
    fn rule_structure() {
        for n in [1usize, 2, 3, 7, 32, 64, 255, 256] {
            let rule = gauss_legendre(n).unwrap();
            assert_eq!(rule.order(), n);
            assert_eq!(rule.weights().len(), n);
            let sum: f64 = rule.weights().iter().sum();
            assert!((sum - 2.0).abs() < 1e-13, "n={n} sum={sum}");
            for w in rule.nodes().windows(2) {
                assert!(w[0] < w[1]);
            }
            for i in 0..n {
                assert_eq!(rule.nodes()[i], -rule.nodes()[n - 1 - i]);
                assert_eq!(rule.weights()[i], rule.weights()[n - 1 - i]);
                assert!(rule.weights()[i] > 0.0);
            }
        }
    }

    #[test]
    fn monomials_up_to_degree_2n_minus_1() {
        for n in [1usize, 2, 5, 10, 20, 40] {
            let rule = gauss_legendre(n).unwrap();
            for deg in 0..(2 * n) {
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                let got = rule.integrate(-1.0, 1.0, |x| x.powi(deg as i32));
                assert!((got - exact).abs() < 1e-12, "n={n} deg={deg}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn adaptive_constant_and_exponential() {
        let s = AdaptiveSettings::default();
        let one = integrate_adaptive(|_| 1.0, 0.0, 1.0, &s).unwrap();
        assert!((one - 1.0).abs() < 1e-14);
        let e = integrate_adaptive(|x| (-x).exp(), 0.0, 50.0, &s).unwrap();
        assert!((e - (1.0 - (-50f64).exp())).abs() < 1e-10);
        assert!((e - 1.0).abs() < 1e-10);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let s = AdaptiveSettings::default();
        let v = integrate_adaptive(|x: f64| 1.0 / x.sqrt(), 0.0, 1.0, &s).unwrap();
        assert!((v - 2.0).abs() < 1e-8, "{v}");
    }

    #[test]
    fn adaptive_reports_nonconvergence_with_estimate() {
        let s = AdaptiveSettings::new(1e-15, 1e-15, 3).unwrap();
        let err = integrate_adaptive(|x: f64| (1.0 / x).sin(), 1e-4, 1.0, &s).unwrap_err();
        assert!(err.best_estimate().is_some());
    }

    #[test]
    fn adaptive_rejects_bad_settings() {
        assert!(AdaptiveSettings::new(0.0, 1e-8, 10).is_err());
        assert!(AdaptiveSettings::new(1e-8, -1.0, 10).is_err());
        assert!(AdaptiveSettings::new(1e-8, 1e-8, 0).is_err());
    }

    #[test]
    fn breakpoints_help_kinks() {
        let s = AdaptiveSettings::default();
        let v = integrate_adaptive_points(|x: f64| (x - 0.3).abs(), &[0.0, 0.3, 1.0], &s).unwrap();
        assert!((v - (0.045 + 0.245)).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn halving_tolerances_is_stable(a in 0.2f64..3.0, b in 0.5f64..4.0) {
            let f = |x: f64| (a * x).sin().powi(2) * (-x / b).exp();
            let coarse = AdaptiveSettings::new(1e-10, 1e-8, 500).unwrap();
            let fine = coarse.with_tolerances(0.5e-10, 0.5e-8);
            let v1 = integrate_adaptive(f, 0.0, 10.0, &coarse).unwrap();
            let v2 = integrate_adaptive(f, 0.0, 10.0, &fine).unwrap();
            prop_assert!((v1 - v2).abs() <= 1e-8 * v2.abs().max(1e-2));
        }
    }
}
