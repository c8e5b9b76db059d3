//! Joint Gaussian posterior over the `D` integrals `Π[f_1], …, Π[f_D]`.

use nalgebra::{DMatrix, DVector};

use crate::domain::{Dataset, Design, Measure, Point};
use crate::error::{Error, Result};
use crate::kernels::{IntegralPolicy, OutputKernel};
use crate::linalg::{cross_gram, factorize_design, GramFactor, JitterPolicy};

/// Negative posterior variances down to `-NEGATIVE_VARIANCE_TOL · max(1, ΠΠ̄[C]_dd)`
/// are treated as rounding residue and clamped to zero.
pub const NEGATIVE_VARIANCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FitOptions {
    pub integrals: IntegralPolicy,
    pub jitter: JitterPolicy,
}

#[derive(Debug, Clone)]
pub struct BQModel {
    kernel: OutputKernel,
    measure: Measure,
    design: Design,
    factor: GramFactor,
    /// `Π[C(·,X)]`, `D × ND`.
    kernel_mean_block: DMatrix<f64>,
    /// `ΠΠ̄[C]`, `D × D`.
    initial_error_block: DMatrix<f64>,
    /// `C(X,X)⁻¹ Π[C(·,X)]ᵀ`, `ND × D`.
    weights: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BQPosterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub weights: DMatrix<f64>,
    pub jitter_used: f64,
}

impl BQPosterior {
    /// `√max(𝕍_dd, 0)`: the worst-case error of the weights in the unit
    /// ball of the vector-valued RKHS.
    pub fn worst_case_error(&self, d: usize) -> Result<f64> {
        if d >= self.mean.len() {
            return Err(Error::invalid(format!("output {d} out of range")));
        }
        Ok(self.cov[(d, d)].max(0.0).sqrt())
    }

    pub fn outputs(&self) -> usize {
        self.mean.len()
    }
}

pub fn worst_case_error(posterior: &BQPosterior, d: usize) -> Result<f64> {
    posterior.worst_case_error(d)
}

impl BQModel {
    pub fn fit(kernel: &OutputKernel, measure: &Measure, dataset: &Dataset, opts: FitOptions) -> Result<Self> {
        Self::fit_design(kernel, measure, dataset.design(), opts)
    }

    /// Everything that does not depend on the function values.
    pub fn fit_design(kernel: &OutputKernel, measure: &Measure, design: &Design, opts: FitOptions) -> Result<Self> {
        measure.validate()?;
        kernel.check_design(design)?;
        let kernel_mean_block = kernel.mo_kernel_mean(measure, design, opts.integrals)?;
        let initial_error_block = kernel.mo_initial_error(measure, opts.integrals)?;
        let factor = factorize_design(kernel, design, opts.jitter)?;
        let weights = factor.solve(&kernel_mean_block.transpose())?;
        Ok(BQModel {
            kernel: kernel.clone(),
            measure: measure.clone(),
            design: design.clone(),
            factor,
            kernel_mean_block,
            initial_error_block,
            weights,
        })
    }

    pub fn kernel(&self) -> &OutputKernel {
        &self.kernel
    }

    pub fn measure(&self) -> &Measure {
        &self.measure
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn factor(&self) -> &GramFactor {
        &self.factor
    }

    pub fn kernel_mean_block(&self) -> &DMatrix<f64> {
        &self.kernel_mean_block
    }

    pub fn initial_error_block(&self) -> &DMatrix<f64> {
        &self.initial_error_block
    }

    /// `W_BQ`, `ND × D`; the estimate of `Π[f_d]` is `W[:, d]ᵀ f(X)`.
    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    fn check_dataset(&self, dataset: &Dataset) -> Result<()> {
        if dataset.design() != &self.design {
            return Err(Error::invalid("dataset design differs from the fitted design"));
        }
        Ok(())
    }

    pub fn integral_posterior(&self, dataset: &Dataset) -> Result<BQPosterior> {
        self.check_dataset(dataset)?;
        let f = DVector::from_column_slice(dataset.values());
        let mean = self.weights.transpose() * f;
        let cov = self.integral_covariance()?;
        Ok(BQPosterior {
            mean,
            cov,
            weights: self.weights.clone(),
            jitter_used: self.factor.jitter(),
        })
    }

    /// `ΠΠ̄[C] − Π[C(·,X)] W`, symmetrized.
    pub fn integral_covariance(&self) -> Result<DMatrix<f64>> {
        let raw = &self.initial_error_block - &self.kernel_mean_block * &self.weights;
        let mut cov = (&raw + raw.transpose()) * 0.5;
        for d in 0..cov.nrows() {
            let floor = -NEGATIVE_VARIANCE_TOL * self.initial_error_block[(d, d)].abs().max(1.0);
            let v = cov[(d, d)];
            if v < floor || !v.is_finite() {
                return Err(Error::InternalConsistency { output: d, variance: v });
            }
            if v < 0.0 {
                cov[(d, d)] = 0.0;
            }
        }
        Ok(cov)
    }

    /// `m_N(x) = C(x,X) C(X,X)⁻¹ f(X)`.
    pub fn predict_mean(&self, dataset: &Dataset, x: &Point) -> Result<DVector<f64>> {
        self.check_dataset(dataset)?;
        self.kernel.check_point(x)?;
        let dd = self.kernel.outputs();
        let ys: Vec<(usize, Point)> = (0..dd).map(|d| (d, x.clone())).collect();
        let cx = cross_gram(&self.kernel, &ys, &self.design);
        let alpha = self.factor.solve(&DMatrix::from_column_slice(dataset.values().len(), 1, dataset.values()))?;
        Ok(DVector::from_column_slice((cx * alpha).as_slice()))
    }

    /// `C_N(x, x') = C(x,x') − C(x,X) C(X,X)⁻¹ C(X,x')`.
    pub fn predict_cov(&self, x: &Point, y: &Point) -> Result<DMatrix<f64>> {
        let prior = self.kernel.matrix_eval(x, y)?;
        let dd = self.kernel.outputs();
        let xs: Vec<(usize, Point)> = (0..dd).map(|d| (d, x.clone())).collect();
        let ys: Vec<(usize, Point)> = (0..dd).map(|d| (d, y.clone())).collect();
        let cx = cross_gram(&self.kernel, &xs, &self.design);
        let cy = cross_gram(&self.kernel, &ys, &self.design);
        Ok(prior - cx * self.factor.solve(&cy.transpose())?)
    }

    /// Squared worst-case errors of an arbitrary weight matrix `W` (`ND × D`):
    /// `e_d² = w_dᵀ G w_d − 2 Π[C(·,X)]_{d,·} w_d + ΠΠ̄[C]_dd`, with `G` the
    /// regularized Gram the model factorized.
    pub fn quadrature_wce_squared(&self, w: &DMatrix<f64>) -> Result<Vec<f64>> {
        let n = self.factor.dim();
        let dd = self.kernel.outputs();
        if w.shape() != (n, dd) {
            return Err(Error::DimensionMismatch {
                expected: n * dd,
                got: w.len(),
            });
        }
        let g = self.factor.reconstruct();
        Ok((0..dd)
            .map(|d| {
                let wd = w.column(d);
                let quad = (wd.transpose() * &g * wd)[(0, 0)];
                let lin = (self.kernel_mean_block.row(d) * wd)[(0, 0)];
                quad - 2.0 * lin + self.initial_error_block[(d, d)]
            })
            .collect())
    }
}
