//! Scalar and matrix-valued kernels with their integral identities.

mod grad;
mod hypers;
mod output;
mod scalar;
mod spec;

pub use grad::GradientEvaluator;
pub use hypers::HyperVector;
pub use output::{OutputKernel, ProcessConvolution};
pub use scalar::{
    matern_correlation, radial_initial_quadrature, radial_mean_quadrature, IntegralPolicy, ScalarKernel,
    FALLBACK_TOL,
};
pub use spec::KernelSpec;
