//! Scalar-valued kernels and their integrals against the supported measures.

use serde::{Deserialize, Serialize};

use crate::domain::{Measure, Point};
use crate::error::{Error, Result};
use crate::quadrature::{adaptive, bessel_k, erf, gamma};

/// Absolute tolerance targeted by the quadrature fallback.
pub const FALLBACK_TOL: f64 = 1e-10;

/// Whether integral identities without a closed form may be computed by
/// numerical quadrature.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntegralPolicy {
    #[default]
    ClosedFormOnly,
    AllowQuadrature,
}

impl IntegralPolicy {
    fn allows_quadrature(self) -> bool {
        self == IntegralPolicy::AllowQuadrature
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarKernel {
    /// `λ² 2^{1-ν}/Γ(ν) u^ν K_ν(u)` with `u = √(2ν)‖x-x'‖/σ`. The `alpha`
    /// field is the Matérn order ν; on `ℝ^p` the RKHS is norm-equivalent to
    /// the Sobolev space of order `ν + p/2`.
    Matern {
        alpha: f64,
        amplitude: f64,
        lengthscale: f64,
    },
    /// `λ² exp(-‖x-x'‖² / (2σ²))`.
    #[serde(rename = "se")]
    SquaredExponential { amplitude: f64, lengthscale: f64 },
    /// `8/3 - ‖x-x'‖₂` on the unit sphere: reproducing kernel of a Sobolev
    /// space of smoothness 3/2 on S².
    #[serde(rename = "sphere_sobolev32")]
    SphereSobolev32,
    /// `8/3 - ‖x-x'‖₂²` on the unit sphere. Equal to `2/3 + 2 x·x'`, so the
    /// kernel has rank 4.
    SphereSquaredDistance,
}

fn is_half_integer(nu: f64) -> Option<usize> {
    [0.5, 1.5, 2.5].iter().position(|v| *v == nu)
}

/// Polynomial part `P(u)` of the half-integer Matérn kernels
/// `P(u) e^{-u}`, lowest degree first.
const HALF_INT_POLY: [&[f64]; 3] = [&[1.0], &[1.0, 1.0], &[1.0, 1.0, 1.0 / 3.0]];

impl ScalarKernel {
    pub fn matern(alpha: f64, amplitude: f64, lengthscale: f64) -> Result<Self> {
        let k = ScalarKernel::Matern {
            alpha,
            amplitude,
            lengthscale,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn se(amplitude: f64, lengthscale: f64) -> Result<Self> {
        let k = ScalarKernel::SquaredExponential {
            amplitude,
            lengthscale,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive and finite, got {v}")))
            }
        };
        match *self {
            ScalarKernel::Matern {
                alpha,
                amplitude,
                lengthscale,
            } => {
                positive("matern order", alpha)?;
                positive("amplitude", amplitude)?;
                positive("lengthscale", lengthscale)
            }
            ScalarKernel::SquaredExponential {
                amplitude,
                lengthscale,
            } => {
                positive("amplitude", amplitude)?;
                positive("lengthscale", lengthscale)
            }
            ScalarKernel::SphereSobolev32 | ScalarKernel::SphereSquaredDistance => Ok(()),
        }
    }

    pub fn is_sphere_only(&self) -> bool {
        matches!(
            self,
            ScalarKernel::SphereSobolev32 | ScalarKernel::SphereSquaredDistance
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScalarKernel::Matern { .. } => "matern",
            ScalarKernel::SquaredExponential { .. } => "se",
            ScalarKernel::SphereSobolev32 => "sphere_sobolev32",
            ScalarKernel::SphereSquaredDistance => "sphere_squared_distance",
        }
    }

    pub fn check_point(&self, x: &Point) -> Result<()> {
        if self.is_sphere_only() && !(x.dim() == 3 && x.is_unit()) {
            return Err(Error::Domain(format!(
                "{} needs unit vectors in R^3, got norm {}",
                self.name(),
                x.norm()
            )));
        }
        Ok(())
    }

    pub fn eval(&self, x: &Point, y: &Point) -> Result<f64> {
        if x.dim() != y.dim() {
            return Err(Error::DimensionMismatch {
                expected: x.dim(),
                got: y.dim(),
            });
        }
        self.check_point(x)?;
        self.check_point(y)?;
        Ok(self.eval_unchecked(x, y))
    }

    /// Evaluation without domain checks; callers validate points up front.
    pub fn eval_unchecked(&self, x: &Point, y: &Point) -> f64 {
        self.radial(x.sq_dist(y))
    }

    /// Kernel value as a function of the squared distance.
    pub fn radial(&self, r2: f64) -> f64 {
        match *self {
            ScalarKernel::Matern {
                alpha,
                amplitude,
                lengthscale,
            } => amplitude * amplitude * matern_correlation(alpha, r2.sqrt() / lengthscale),
            ScalarKernel::SquaredExponential {
                amplitude,
                lengthscale,
            } => amplitude * amplitude * (-0.5 * r2 / (lengthscale * lengthscale)).exp(),
            ScalarKernel::SphereSobolev32 => 8.0 / 3.0 - r2.sqrt(),
            ScalarKernel::SphereSquaredDistance => 8.0 / 3.0 - r2,
        }
    }

    pub fn hyper_count(&self) -> usize {
        match self {
            ScalarKernel::Matern { .. } | ScalarKernel::SquaredExponential { .. } => 2,
            _ => 0,
        }
    }

    pub fn hyper_names(&self) -> Vec<String> {
        match self {
            ScalarKernel::Matern { .. } | ScalarKernel::SquaredExponential { .. } => {
                vec!["log_amplitude".into(), "log_lengthscale".into()]
            }
            _ => Vec::new(),
        }
    }

    pub fn pack(&self, out: &mut Vec<f64>) {
        match *self {
            ScalarKernel::Matern {
                amplitude,
                lengthscale,
                ..
            }
            | ScalarKernel::SquaredExponential {
                amplitude,
                lengthscale,
            } => {
                out.push(amplitude.ln());
                out.push(lengthscale.ln());
            }
            _ => {}
        }
    }

    /// Rebuilds from log-parameters, consuming `hyper_count` entries.
    pub fn unpack(&self, theta: &mut impl Iterator<Item = f64>) -> Result<Self> {
        let mut next = || {
            theta
                .next()
                .ok_or_else(|| Error::SchemaMismatch("hyper vector too short".into()))
        };
        Ok(match *self {
            ScalarKernel::Matern { alpha, .. } => ScalarKernel::Matern {
                alpha,
                amplitude: next()?.exp(),
                lengthscale: next()?.exp(),
            },
            ScalarKernel::SquaredExponential { .. } => ScalarKernel::SquaredExponential {
                amplitude: next()?.exp(),
                lengthscale: next()?.exp(),
            },
            ref k => k.clone(),
        })
    }

    /// Value and derivatives with respect to `(log λ, log σ)`, as a function
    /// of the squared distance. Kernels without hyperparameters write nothing.
    pub fn radial_grad(&self, r2: f64, grad: &mut [f64]) -> f64 {
        match *self {
            ScalarKernel::Matern {
                alpha,
                amplitude,
                lengthscale,
            } => {
                let a2 = amplitude * amplitude;
                let t = r2.sqrt() / lengthscale;
                let k = a2 * matern_correlation(alpha, t);
                grad[0] = 2.0 * k;
                grad[1] = a2 * matern_log_lengthscale_derivative(alpha, t);
                k
            }
            ScalarKernel::SquaredExponential {
                amplitude,
                lengthscale,
            } => {
                let q = r2 / (lengthscale * lengthscale);
                let k = amplitude * amplitude * (-0.5 * q).exp();
                grad[0] = 2.0 * k;
                grad[1] = k * q;
                k
            }
            _ => self.radial(r2),
        }
    }

    /// Kernel mean `Π[c(·, x)]`.
    pub fn kernel_mean(&self, measure: &Measure, x: &Point, policy: IntegralPolicy) -> Result<f64> {
        if x.dim() != measure.dim() {
            return Err(Error::DimensionMismatch {
                expected: measure.dim(),
                got: x.dim(),
            });
        }
        match (self, measure) {
            (&ScalarKernel::SquaredExponential { amplitude, lengthscale }, Measure::UniformBox { lower, upper }) => {
                Ok(se_box_mean(amplitude * amplitude, lengthscale, lower, upper, x.coords()))
            }
            (&ScalarKernel::Matern { alpha, amplitude, lengthscale }, Measure::UniformBox { lower, upper })
                if lower.len() == 1 && is_half_integer(alpha).is_some() =>
            {
                let poly = HALF_INT_POLY[is_half_integer(alpha).unwrap()];
                let s = (2.0 * alpha).sqrt() / lengthscale;
                Ok(amplitude * amplitude * half_int_interval_mean(poly, s, lower[0], upper[0], x.coords()[0]))
            }
            (k, Measure::UniformSphere) if k.is_sphere_only() => {
                self.check_point(x)?;
                Ok(self.sphere_constant_mean().unwrap())
            }
            _ if policy.allows_quadrature() => self.kernel_mean_quadrature(measure, x),
            _ => Err(Error::UnsupportedIdentity(format!(
                "kernel mean of {} under {}",
                self.name(),
                measure_name(measure)
            ))),
        }
    }

    /// Initial error `ΠΠ̄[c]`.
    pub fn initial_error(&self, measure: &Measure, policy: IntegralPolicy) -> Result<f64> {
        match (self, measure) {
            (&ScalarKernel::SquaredExponential { amplitude, lengthscale }, Measure::UniformBox { lower, upper }) => {
                Ok(amplitude
                    * amplitude
                    * lower
                        .iter()
                        .zip(upper)
                        .map(|(a, b)| se_interval_double_mean(lengthscale, b - a))
                        .product::<f64>())
            }
            (&ScalarKernel::Matern { alpha, amplitude, lengthscale }, Measure::UniformBox { lower, upper })
                if lower.len() == 1 && is_half_integer(alpha).is_some() =>
            {
                let poly = HALF_INT_POLY[is_half_integer(alpha).unwrap()];
                let s = (2.0 * alpha).sqrt() / lengthscale;
                let l = upper[0] - lower[0];
                let u = s * l;
                Ok(amplitude * amplitude * 2.0 * poly_exp_double_integral(poly, u) / (u * u))
            }
            (k, Measure::UniformSphere) if k.is_sphere_only() => Ok(self.sphere_constant_mean().unwrap()),
            _ if policy.allows_quadrature() => self.initial_error_quadrature(measure),
            _ => Err(Error::UnsupportedIdentity(format!(
                "initial error of {} under {}",
                self.name(),
                measure_name(measure)
            ))),
        }
    }

    fn sphere_constant_mean(&self) -> Option<f64> {
        match self {
            // E‖x - x'‖ = 4/3 for independent uniform points on S².
            ScalarKernel::SphereSobolev32 => Some(8.0 / 3.0 - 4.0 / 3.0),
            // E‖x - x'‖² = 2.
            ScalarKernel::SphereSquaredDistance => Some(8.0 / 3.0 - 2.0),
            _ => None,
        }
    }

    /// Numerical kernel mean; see [`radial_mean_quadrature`].
    pub fn kernel_mean_quadrature(&self, measure: &Measure, x: &Point) -> Result<f64> {
        if measure == &Measure::UniformSphere {
            self.check_point(x)?;
        }
        radial_mean_quadrature(|r2| self.radial(r2), measure, x)
            .map_err(|e| relabel(e, self.name(), measure))
    }

    pub fn initial_error_quadrature(&self, measure: &Measure) -> Result<f64> {
        radial_initial_quadrature(|r2| self.radial(r2), measure)
            .map_err(|e| relabel(e, self.name(), measure))
    }
}

fn relabel(e: Error, name: &str, measure: &Measure) -> Error {
    match e {
        Error::UnsupportedIdentity(_) => Error::UnsupportedIdentity(format!(
            "no quadrature fallback for {name} under {}",
            measure_name(measure)
        )),
        e => e,
    }
}

/// Mean of an isotropic kernel `g(‖x-y‖²)` over `y ~ Π` by adaptive
/// Gauss–Legendre. Supported for intervals and the sphere, where the
/// distance `u = ‖y-x‖` has density `u/2` on `[0, 2]`.
pub fn radial_mean_quadrature(g: impl Fn(f64) -> f64, measure: &Measure, x: &Point) -> Result<f64> {
    match measure {
        Measure::UniformBox { lower, upper } if lower.len() == 1 => {
            let (a, b) = (lower[0], upper[0]);
            let x0 = x.coords()[0];
            let est = adaptive(a, b, &[x0], FALLBACK_TOL * (b - a), |y| g((y - x0) * (y - x0)))?;
            Ok(est.value / (b - a))
        }
        Measure::UniformSphere => {
            let est = adaptive(0.0, 2.0, &[], FALLBACK_TOL, |u| 0.5 * u * g(u * u))?;
            Ok(est.value)
        }
        _ => Err(Error::UnsupportedIdentity(format!(
            "no quadrature fallback under {}",
            measure_name(measure)
        ))),
    }
}

/// Double integral of an isotropic kernel against `Π ⊗ Π`.
pub fn radial_initial_quadrature(g: impl Fn(f64) -> f64, measure: &Measure) -> Result<f64> {
    match measure {
        Measure::UniformBox { lower, upper } if lower.len() == 1 => {
            // ∫∫ g(|x-y|) = 2 ∫₀ᴸ (L - t) g(t) dt
            let l = upper[0] - lower[0];
            let est = adaptive(0.0, l, &[], FALLBACK_TOL * l * l, |t| (l - t) * g(t * t))?;
            Ok(2.0 * est.value / (l * l))
        }
        Measure::UniformSphere => radial_mean_quadrature(g, measure, &Point::on_sphere([0.0, 0.0, 1.0])?),
        _ => Err(Error::UnsupportedIdentity(format!(
            "no quadrature fallback under {}",
            measure_name(measure)
        ))),
    }
}

pub(crate) fn measure_name(m: &Measure) -> String {
    match m {
        Measure::UniformBox { lower, .. } => format!("uniform box in {} dimension(s)", lower.len()),
        Measure::UniformSphere => "uniform sphere".into(),
    }
}

/// Matérn correlation at scaled distance `t = r/σ`.
pub fn matern_correlation(nu: f64, t: f64) -> f64 {
    let u = (2.0 * nu).sqrt() * t;
    match is_half_integer(nu) {
        Some(i) => poly_eval(HALF_INT_POLY[i], u) * (-u).exp(),
        None => {
            if u < 1e-12 {
                return 1.0;
            }
            (2.0f64).powf(1.0 - nu) / gamma(nu) * u.powf(nu) * bessel_k(nu, u)
        }
    }
}

/// `∂/∂ log σ` of the Matérn correlation at `t = r/σ`.
fn matern_log_lengthscale_derivative(nu: f64, t: f64) -> f64 {
    let u = (2.0 * nu).sqrt() * t;
    match is_half_integer(nu) {
        // d/du [P(u) e^{-u}] = (P'(u) - P(u)) e^{-u}; d u / d log σ = -u.
        Some(i) => {
            let p = HALF_INT_POLY[i];
            let dp: f64 = p.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c * u.powi(k as i32 - 1)).sum();
            -(dp - poly_eval(p, u)) * (-u).exp() * u
        }
        None => {
            if u < 1e-12 {
                return 0.0;
            }
            // d/du [u^ν K_ν(u)] = -u^ν K_{ν-1}(u)
            (2.0f64).powf(1.0 - nu) / gamma(nu) * u.powf(nu + 1.0) * bessel_k(nu - 1.0, u)
        }
    }
}

fn poly_eval(p: &[f64], u: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, c| acc * u + c)
}

/// Lower incomplete gamma `γ(k+1, u) = ∫₀ᵘ t^k e^{-t} dt` for integer k.
fn lower_gamma_int(k: usize, u: f64) -> f64 {
    let s = (k + 1) as f64;
    if u < 1.0 {
        // γ(s, u) = u^s e^{-u} Σ u^n / (s (s+1) ... (s+n))
        let mut term = 1.0 / s;
        let mut sum = term;
        for n in 1..60 {
            term *= u / (s + n as f64);
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
        }
        u.powf(s) * (-u).exp() * sum
    } else {
        let mut fact = 1.0;
        let mut partial = 1.0;
        let mut pow = 1.0;
        for j in 1..=k {
            fact *= j as f64;
            pow *= u;
            partial += pow / fact;
        }
        fact * (1.0 - (-u).exp() * partial)
    }
}

/// `F(U) = ∫₀ᵁ P(u) e^{-u} du`.
fn poly_exp_integral(p: &[f64], u: f64) -> f64 {
    p.iter()
        .enumerate()
        .map(|(k, c)| c * lower_gamma_int(k, u))
        .sum()
}

/// `H(U) = ∫₀ᵁ F(u) du`, using `∫₀ᵁ γ(k+1,u) du = U γ(k+1,U) - γ(k+2,U)`.
fn poly_exp_double_integral(p: &[f64], u: f64) -> f64 {
    p.iter()
        .enumerate()
        .map(|(k, c)| c * (u * lower_gamma_int(k, u) - lower_gamma_int(k + 1, u)))
        .sum()
}

/// Mean over `y ~ U[a, b]` of `P(s|x-y|) e^{-s|x-y|}`.
fn half_int_interval_mean(p: &[f64], s: f64, a: f64, b: f64, x: f64) -> f64 {
    let g = |t: f64| poly_exp_integral(p, s * t) / s;
    let total = if x < a {
        g(b - x) - g(a - x)
    } else if x > b {
        g(x - a) - g(x - b)
    } else {
        g(x - a) + g(b - x)
    };
    total / (b - a)
}

/// `erf(hi) - erf(lo)` without cancellation in the tails.
fn erf_diff(lo: f64, hi: f64) -> f64 {
    if lo >= 0.0 {
        libm::erfc(lo) - libm::erfc(hi)
    } else if hi <= 0.0 {
        libm::erfc(-hi) - libm::erfc(-lo)
    } else {
        erf(hi) - erf(lo)
    }
}

/// Mean over the box of `amp2 · exp(-‖x-y‖²/(2σ²))`.
pub(crate) fn se_box_mean(amp2: f64, sigma: f64, lower: &[f64], upper: &[f64], x: &[f64]) -> f64 {
    let c = sigma * std::f64::consts::SQRT_2;
    amp2 * lower
        .iter()
        .zip(upper)
        .zip(x)
        .map(|((a, b), xi)| {
            sigma * (std::f64::consts::PI / 2.0).sqrt() * erf_diff((a - xi) / c, (b - xi) / c) / (b - a)
        })
        .product::<f64>()
}

/// `(1/L²) ∫₀ᴸ∫₀ᴸ exp(-(x-y)²/(2σ²)) dx dy`.
pub(crate) fn se_interval_double_mean(sigma: f64, l: f64) -> f64 {
    let z = l / (std::f64::consts::SQRT_2 * sigma);
    if z < 0.5 {
        // Σ (-1)^n [2/(n!(2n+1)) - 1/(n+1)!] z^{2n}
        let z2 = z * z;
        let mut sum = 0.0;
        let mut fact = 1.0; // n!
        let mut pow = 1.0;
        for n in 0..25 {
            if n > 0 {
                fact *= n as f64;
                pow *= -z2;
            }
            let coef = 2.0 / (fact * (2 * n + 1) as f64) - 1.0 / (fact * (n + 1) as f64);
            sum += coef * pow;
        }
        sum
    } else {
        let sqrt_pi = std::f64::consts::PI.sqrt();
        (sqrt_pi * z * erf(z) + (-z * z).exp_m1()) / (z * z)
    }
}
