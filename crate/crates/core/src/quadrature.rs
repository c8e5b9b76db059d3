//! Gauss–Legendre rules, composite/adaptive 1-D integration and the few
//! special functions the kernel closed forms need.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

/// Hard cap on the number of nodes an adaptive integration may use.
pub const MAX_NODES: usize = 1 << 14;

/// Nodes per panel of the composite rule.
const PANEL_ORDER: usize = 16;

#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// `n`-point rule on `[-1, 1]` by Newton iteration on `P_n`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs n >= 1");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    /// Cached rule shared between callers.
    pub fn cached(n: usize) -> Arc<GaussLegendre> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(rule) = cache.lock().unwrap().get(&n) {
            return rule.clone();
        }
        let rule = Arc::new(GaussLegendre::new(n));
        cache.lock().unwrap().insert(n, rule.clone());
        rule
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (mid + half * x, half * w))
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.on(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite rule with `panels` equal panels of [`PANEL_ORDER`] nodes each.
pub fn composite(a: f64, b: f64, panels: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    let rule = GaussLegendre::cached(PANEL_ORDER);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let lo = a + k as f64 * h;
        let hi = if k + 1 == panels { b } else { lo + h };
        total += rule.integrate(lo, hi, &mut f);
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    /// Absolute change over the last doubling.
    pub change: f64,
    pub nodes: usize,
}

/// Integrates `f` over `[a, b]`, doubling the panel count until the
/// estimate changes by less than `tol` (absolute) or the node budget runs
/// out. `breaks` are interior points where `f` is known to be non-smooth.
pub fn adaptive(
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: f64,
    mut f: impl FnMut(f64) -> f64,
) -> Result<Estimate> {
    let mut cuts = vec![a];
    cuts.extend(breaks.iter().copied().filter(|x| *x > a && *x < b));
    cuts.push(b);
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let pieces = cuts.len() - 1;

    let eval = |panels: usize, f: &mut dyn FnMut(f64) -> f64| -> f64 {
        cuts.windows(2)
            .map(|w| composite(w[0], w[1], panels, &mut *f))
            .sum()
    };

    let mut panels = 1;
    let mut prev = eval(panels, &mut f);
    loop {
        panels *= 2;
        let nodes = panels * PANEL_ORDER * pieces;
        let next = eval(panels, &mut f);
        let change = (next - prev).abs();
        if change < tol {
            return Ok(Estimate {
                value: next,
                change,
                nodes,
            });
        }
        if nodes * 2 > MAX_NODES.max(PANEL_ORDER * pieces * 2) {
            return Err(Error::AccuracyNotMet {
                target: tol,
                achieved: change,
                estimate: next,
            });
        }
        prev = next;
    }
}

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

/// Modified Bessel function of the second kind `K_ν(x)` for `x > 0`, from
/// `K_ν(x) = ∫₀^∞ exp(-x cosh t) cosh(ν t) dt` with the trapezoidal rule
/// (exponentially convergent for this integrand).
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    assert!(x > 0.0, "bessel_k requires x > 0");
    if x > 745.0 {
        return 0.0;
    }
    let h: f64 = 0.05;
    // Integrand is below exp(-745) once x cosh t exceeds 745 + nu t.
    let mut total = 0.5 * (-x).exp();
    let mut t = h;
    loop {
        let term = (-x * t.cosh() + nu.abs() * t).exp() * 0.5 * (1.0 + (-2.0 * nu.abs() * t).exp());
        total += term;
        if term < 1e-300 || (term < total * 1e-18 && x * t.cosh() > nu.abs() * t + 40.0) {
            break;
        }
        t += h;
    }
    total * h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_integrates_polynomials_exactly() {
        let rule = GaussLegendre::new(8);
        let exact = 2.0 / 15.0;
        let got = rule.integrate(-1.0, 1.0, |x| x.powi(14));
        assert!((got - exact).abs() < 1e-14);
        let s: f64 = rule.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn large_rule_is_accurate() {
        let rule = GaussLegendre::new(1000);
        let got = rule.integrate(0.0, std::f64::consts::PI, f64::sin);
        assert!((got - 2.0).abs() < 1e-13);
    }

    #[test]
    fn adaptive_handles_kinks_with_breaks() {
        let est = adaptive(0.0, 1.0, &[0.3], 1e-12, |x| (x - 0.3).abs()).unwrap();
        let exact = 0.5 * (0.09 + 0.49);
        assert!((est.value - exact).abs() < 1e-13);
    }

    #[test]
    fn adaptive_reports_budget_exhaustion() {
        let res = adaptive(0.0, 1.0, &[], 1e-15, |x| x.sqrt().sin() / (x + 1e-12).powf(0.49));
        assert!(matches!(res, Err(Error::AccuracyNotMet { .. })));
    }

    #[test]
    fn bessel_k_matches_half_integer_closed_forms() {
        // K_{1/2}(x) = sqrt(pi / (2x)) e^{-x}
        for &x in &[1e-3, 0.1, 1.0, 5.0, 30.0] {
            let exact = (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp();
            let got = bessel_k(0.5, x);
            assert!(((got - exact) / exact).abs() < 1e-12, "x={x}");
            // K_{3/2}(x) = K_{1/2}(x) (1 + 1/x)
            let exact = exact * (1.0 + 1.0 / x);
            let got = bessel_k(1.5, x);
            assert!(((got - exact) / exact).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn bessel_k_reference_values() {
        // Abramowitz & Stegun table 9.8
        assert!((bessel_k(0.0, 1.0) - 0.421_024_438_240_708_3).abs() < 1e-14);
        assert!((bessel_k(1.0, 1.0) - 0.601_907_230_197_234_6).abs() < 1e-14);
        assert!((bessel_k(2.0, 2.0) - 0.253_759_754_566_055_8).abs() < 1e-14);
    }
}
