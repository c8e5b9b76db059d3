use nalgebra::DMatrix;

use super::scalar::{
    measure_name, radial_initial_quadrature, radial_mean_quadrature, se_box_mean,
    se_interval_double_mean, IntegralPolicy, ScalarKernel,
};
use crate::domain::{Design, Measure, Point};
use crate::error::{Error, Result};

/// Gaussian process-convolution kernel: each output is a Gaussian blur of
/// `R` latent SE processes, plus an optional independent kernel per output.
///
/// Blur `G^i_d(r) = λ²_{i,d} exp(-r²/(2σ²_{i,d}))`, latent
/// `c_i(z,z') = λ²_i exp(-‖z-z'‖²/(2σ²_i))`. The double convolution is again
/// Gaussian:
///
/// `c_{d,d'}(x,x') = Σ_i λ²_{i,d} λ²_{i,d'} λ²_i (2π)^p (σ_{i,d} σ_{i,d'} σ_i)^p
///                   S^{-p/2} exp(-‖x-x'‖²/(2S))`, `S = σ²_{i,d} + σ²_{i,d'} + σ²_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessConvolution {
    /// `R × D`
    pub blur_amplitudes: DMatrix<f64>,
    /// `R × D`
    pub blur_widths: DMatrix<f64>,
    pub latent_amplitudes: Vec<f64>,
    pub latent_widths: Vec<f64>,
    pub independent: Option<Vec<ScalarKernel>>,
}

impl ProcessConvolution {
    pub fn latents(&self) -> usize {
        self.latent_amplitudes.len()
    }

    pub fn outputs(&self) -> usize {
        self.blur_amplitudes.ncols()
    }

    /// Amplitude and variance of latent `i`'s Gaussian in entry `(d, d')`.
    pub(crate) fn gaussian_term(&self, i: usize, d: usize, e: usize, p: usize) -> (f64, f64) {
        let (wd, we, wi) = (
            self.blur_widths[(i, d)],
            self.blur_widths[(i, e)],
            self.latent_widths[i],
        );
        let s = wd * wd + we * we + wi * wi;
        let amp = (self.blur_amplitudes[(i, d)] * self.blur_amplitudes[(i, e)] * self.latent_amplitudes[i]).powi(2);
        let pf = p as i32;
        let a = amp * (2.0 * std::f64::consts::PI * wd * we * wi).powi(pf) / s.powf(0.5 * p as f64);
        (a, s)
    }

    fn validate(&self) -> Result<()> {
        let (r, d) = self.blur_amplitudes.shape();
        if r == 0 || d == 0 {
            return Err(Error::invalid("process convolution needs R >= 1 and D >= 1"));
        }
        if self.blur_widths.shape() != (r, d) || self.latent_amplitudes.len() != r || self.latent_widths.len() != r {
            return Err(Error::invalid("process convolution parameter shapes disagree"));
        }
        let all = self
            .blur_amplitudes
            .iter()
            .chain(self.blur_widths.iter())
            .chain(&self.latent_amplitudes)
            .chain(&self.latent_widths);
        for v in all {
            if !(*v > 0.0 && v.is_finite()) {
                return Err(Error::invalid("process convolution amplitudes and widths must be positive"));
            }
        }
        if let Some(ind) = &self.independent {
            if ind.len() != d {
                return Err(Error::invalid("need one independent kernel per output"));
            }
            for k in ind {
                k.validate()?;
                if k.is_sphere_only() {
                    return Err(Error::invalid("process convolution is defined on R^p only"));
                }
            }
        }
        Ok(())
    }
}

/// Matrix-valued kernel `C(x, x') ∈ ℝ^{D×D}`.
#[derive(Debug, Clone, PartialEq)]
pub enum OutputKernel {
    /// `C = B c(x, x')` with `B` symmetric positive definite.
    Separable { b: DMatrix<f64>, base: ScalarKernel },
    /// Linear model of coregionalization: `B = AᵀA + diag(nugget)` with
    /// `A` the `R × D` factor matrix (`A[(i, d)] = a^i_d`).
    Lmc {
        factors: DMatrix<f64>,
        nugget: Option<Vec<f64>>,
        base: ScalarKernel,
    },
    ProcessConvolution(ProcessConvolution),
    Sum(Vec<OutputKernel>),
}

impl OutputKernel {
    pub fn separable(b: DMatrix<f64>, base: ScalarKernel) -> Result<Self> {
        let k = OutputKernel::Separable { b, base };
        k.validate()?;
        Ok(k)
    }

    pub fn lmc(factors: DMatrix<f64>, nugget: Option<Vec<f64>>, base: ScalarKernel) -> Result<Self> {
        let k = OutputKernel::Lmc { factors, nugget, base };
        k.validate()?;
        Ok(k)
    }

    pub fn process_convolution(pc: ProcessConvolution) -> Result<Self> {
        let k = OutputKernel::ProcessConvolution(pc);
        k.validate()?;
        Ok(k)
    }

    pub fn sum(parts: Vec<OutputKernel>) -> Result<Self> {
        let k = OutputKernel::Sum(parts);
        k.validate()?;
        Ok(k)
    }

    /// Scalar kernel viewed as a one-output separable kernel with `B = [1]`.
    pub fn single(base: ScalarKernel) -> Result<Self> {
        Self::separable(DMatrix::from_element(1, 1, 1.0), base)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            OutputKernel::Separable { b, base } => {
                base.validate()?;
                if !b.is_square() || b.nrows() == 0 {
                    return Err(Error::invalid("B must be a nonempty square matrix"));
                }
                if (b - b.transpose()).amax() > 1e-12 * b.amax().max(1.0) {
                    return Err(Error::invalid("B must be symmetric"));
                }
                if b.clone().cholesky().is_none() {
                    return Err(Error::invalid("B must be positive definite"));
                }
                Ok(())
            }
            OutputKernel::Lmc { factors, nugget, base } => {
                base.validate()?;
                if factors.nrows() == 0 || factors.ncols() == 0 {
                    return Err(Error::invalid("LMC needs at least one factor and one output"));
                }
                if factors.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("LMC factors must be finite"));
                }
                if let Some(n) = nugget {
                    if n.len() != factors.ncols() || n.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                        return Err(Error::invalid("LMC nugget needs one positive value per output"));
                    }
                }
                Ok(())
            }
            OutputKernel::ProcessConvolution(pc) => pc.validate(),
            OutputKernel::Sum(parts) => {
                let first = parts.first().ok_or_else(|| Error::invalid("empty sum kernel"))?;
                for p in parts {
                    p.validate()?;
                    if p.outputs() != first.outputs() {
                        return Err(Error::invalid("sum parts must have the same number of outputs"));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn outputs(&self) -> usize {
        match self {
            OutputKernel::Separable { b, .. } => b.nrows(),
            OutputKernel::Lmc { factors, .. } => factors.ncols(),
            OutputKernel::ProcessConvolution(pc) => pc.outputs(),
            OutputKernel::Sum(parts) => parts[0].outputs(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OutputKernel::Separable { .. } => "separable",
            OutputKernel::Lmc { .. } => "lmc",
            OutputKernel::ProcessConvolution(_) => "pc",
            OutputKernel::Sum(_) => "sum",
        }
    }

    /// `B` and the base kernel when `C(x,x') = B c(x,x')`.
    pub fn coregionalization(&self) -> Option<(DMatrix<f64>, &ScalarKernel)> {
        match self {
            OutputKernel::Separable { b, base } => Some((b.clone(), base)),
            OutputKernel::Lmc { factors, nugget, base } => {
                let mut b = factors.transpose() * factors;
                if let Some(n) = nugget {
                    for (d, v) in n.iter().enumerate() {
                        b[(d, d)] += v;
                    }
                }
                Some((b, base))
            }
            _ => None,
        }
    }

    pub fn check_point(&self, x: &Point) -> Result<()> {
        match self {
            OutputKernel::Separable { base, .. } | OutputKernel::Lmc { base, .. } => base.check_point(x),
            OutputKernel::ProcessConvolution(_) => Ok(()),
            OutputKernel::Sum(parts) => parts.iter().try_for_each(|k| k.check_point(x)),
        }
    }

    pub fn check_design(&self, design: &Design) -> Result<()> {
        if design.outputs() != self.outputs() {
            return Err(Error::DimensionMismatch {
                expected: self.outputs(),
                got: design.outputs(),
            });
        }
        design.iter_flat().try_for_each(|(_, x)| self.check_point(x))
    }

    /// Entry `(d, e)` as a function of squared distance in dimension `p`.
    pub fn entry_radial(&self, d: usize, e: usize, r2: f64, p: usize) -> f64 {
        match self {
            OutputKernel::Separable { b, base } => b[(d, e)] * base.radial(r2),
            OutputKernel::Lmc { factors, nugget, base } => {
                let mut bde = factors.column(d).dot(&factors.column(e));
                if let (Some(n), true) = (nugget, d == e) {
                    bde += n[d];
                }
                bde * base.radial(r2)
            }
            OutputKernel::ProcessConvolution(pc) => {
                let mut v: f64 = (0..pc.latents())
                    .map(|i| {
                        let (a, s) = pc.gaussian_term(i, d, e, p);
                        a * (-0.5 * r2 / s).exp()
                    })
                    .sum();
                if let (Some(ind), true) = (&pc.independent, d == e) {
                    v += ind[d].radial(r2);
                }
                v
            }
            OutputKernel::Sum(parts) => parts.iter().map(|k| k.entry_radial(d, e, r2, p)).sum(),
        }
    }

    pub fn entry(&self, d: usize, e: usize, x: &Point, y: &Point) -> f64 {
        self.entry_radial(d, e, x.sq_dist(y), x.dim())
    }

    pub fn matrix_eval(&self, x: &Point, y: &Point) -> Result<DMatrix<f64>> {
        if x.dim() != y.dim() {
            return Err(Error::DimensionMismatch {
                expected: x.dim(),
                got: y.dim(),
            });
        }
        self.check_point(x)?;
        self.check_point(y)?;
        let dd = self.outputs();
        Ok(DMatrix::from_fn(dd, dd, |d, e| self.entry(d, e, x, y)))
    }

    /// `Π_x[C(x, y)_{d,e}]`.
    pub fn entry_mean(&self, d: usize, e: usize, measure: &Measure, y: &Point, policy: IntegralPolicy) -> Result<f64> {
        match self {
            OutputKernel::Separable { .. } | OutputKernel::Lmc { .. } => {
                let (b, base) = self.coregionalization().unwrap();
                Ok(b[(d, e)] * base.kernel_mean(measure, y, policy)?)
            }
            OutputKernel::ProcessConvolution(pc) => {
                let p = y.dim();
                let mut v = match measure {
                    Measure::UniformBox { lower, upper } => (0..pc.latents())
                        .map(|i| {
                            let (a, s) = pc.gaussian_term(i, d, e, p);
                            se_box_mean(a, s.sqrt(), lower, upper, y.coords())
                        })
                        .sum(),
                    Measure::UniformSphere if policy == IntegralPolicy::AllowQuadrature => {
                        radial_mean_quadrature(|r2| self.pc_latent_part(pc, d, e, r2, p), measure, y)?
                    }
                    _ => return Err(unsupported("kernel mean", self, measure)),
                };
                if let (Some(ind), true) = (&pc.independent, d == e) {
                    v += ind[d].kernel_mean(measure, y, policy)?;
                }
                Ok(v)
            }
            OutputKernel::Sum(parts) => parts.iter().map(|k| k.entry_mean(d, e, measure, y, policy)).sum(),
        }
    }

    fn pc_latent_part(&self, pc: &ProcessConvolution, d: usize, e: usize, r2: f64, p: usize) -> f64 {
        (0..pc.latents())
            .map(|i| {
                let (a, s) = pc.gaussian_term(i, d, e, p);
                a * (-0.5 * r2 / s).exp()
            })
            .sum()
    }

    /// `ΠΠ̄[C_{d,e}]`.
    pub fn entry_initial_error(&self, d: usize, e: usize, measure: &Measure, policy: IntegralPolicy) -> Result<f64> {
        match self {
            OutputKernel::Separable { .. } | OutputKernel::Lmc { .. } => {
                let (b, base) = self.coregionalization().unwrap();
                Ok(b[(d, e)] * base.initial_error(measure, policy)?)
            }
            OutputKernel::ProcessConvolution(pc) => {
                let p = measure.dim();
                let mut v = match measure {
                    Measure::UniformBox { lower, upper } => (0..pc.latents())
                        .map(|i| {
                            let (a, s) = pc.gaussian_term(i, d, e, p);
                            a * lower
                                .iter()
                                .zip(upper)
                                .map(|(lo, hi)| se_interval_double_mean(s.sqrt(), hi - lo))
                                .product::<f64>()
                        })
                        .sum(),
                    Measure::UniformSphere if policy == IntegralPolicy::AllowQuadrature => {
                        radial_initial_quadrature(|r2| self.pc_latent_part(pc, d, e, r2, p), measure)?
                    }
                    _ => return Err(unsupported("initial error", self, measure)),
                };
                if let (Some(ind), true) = (&pc.independent, d == e) {
                    v += ind[d].initial_error(measure, policy)?;
                }
                Ok(v)
            }
            OutputKernel::Sum(parts) => parts
                .iter()
                .map(|k| k.entry_initial_error(d, e, measure, policy))
                .sum(),
        }
    }

    /// `Π[C(·, X)] ∈ ℝ^{D × ND}`; column `(e, j)` holds `Π_x[C(x, x_{e,j})_{·,e}]`.
    pub fn mo_kernel_mean(&self, measure: &Measure, design: &Design, policy: IntegralPolicy) -> Result<DMatrix<f64>> {
        let dd = self.outputs();
        if design.outputs() != dd {
            return Err(Error::DimensionMismatch {
                expected: dd,
                got: design.outputs(),
            });
        }
        if design.dim() != measure.dim() {
            return Err(Error::DimensionMismatch {
                expected: measure.dim(),
                got: design.dim(),
            });
        }
        let mut out = DMatrix::zeros(dd, design.total_len());
        match self {
            OutputKernel::Separable { .. } | OutputKernel::Lmc { .. } => {
                let (b, base) = self.coregionalization().unwrap();
                for (col, (e, y)) in design.iter_flat().enumerate() {
                    let m = base.kernel_mean(measure, y, policy)?;
                    for d in 0..dd {
                        out[(d, col)] = b[(d, e)] * m;
                    }
                }
            }
            OutputKernel::Sum(parts) => {
                for k in parts {
                    out += k.mo_kernel_mean(measure, design, policy)?;
                }
            }
            OutputKernel::ProcessConvolution(_) => {
                for (col, (e, y)) in design.iter_flat().enumerate() {
                    for d in 0..dd {
                        out[(d, col)] = self.entry_mean(d, e, measure, y, policy)?;
                    }
                }
            }
        }
        Ok(out)
    }

    /// `ΠΠ̄[C] ∈ ℝ^{D×D}`.
    pub fn mo_initial_error(&self, measure: &Measure, policy: IntegralPolicy) -> Result<DMatrix<f64>> {
        let dd = self.outputs();
        match self {
            OutputKernel::Separable { .. } | OutputKernel::Lmc { .. } => {
                let (b, base) = self.coregionalization().unwrap();
                Ok(b * base.initial_error(measure, policy)?)
            }
            _ => {
                let mut out = DMatrix::zeros(dd, dd);
                for d in 0..dd {
                    for e in d..dd {
                        let v = self.entry_initial_error(d, e, measure, policy)?;
                        out[(d, e)] = v;
                        out[(e, d)] = v;
                    }
                }
                Ok(out)
            }
        }
    }
}

fn unsupported(what: &str, k: &OutputKernel, m: &Measure) -> Error {
    Error::UnsupportedIdentity(format!("{what} of {} kernel under {}", k.name(), measure_name(m)))
}
