//! Fast invariant checks for a build on a new machine.

use nalgebra::DMatrix;

use crate::Failure;
use mobq::domain::{equidistant_grid, Design, Measure, Point};
use mobq::error::Result;
use mobq::kernels::{IntegralPolicy, OutputKernel, ScalarKernel};
use mobq::linalg::{assemble_gram, factorize, JitterPolicy};
use mobq::posterior::{BQModel, FitOptions};
use mobq::quadrature::adaptive;

type Check = fn() -> Result<(bool, String)>;

fn b3() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[1.0, 0.6, 0.3, 0.6, 1.0, 0.5, 0.3, 0.5, 1.0])
}

fn kernel_means_match_quadrature() -> Result<(bool, String)> {
    let unit = Measure::interval(0.0, 1.0)?;
    let mut worst = 0.0f64;
    for nu in [0.5, 1.5, 2.5] {
        let k = ScalarKernel::matern(nu, 1.3, 0.25)?;
        for t in [0.0, 0.3, 0.77, 1.0] {
            let y = Point::scalar(t);
            let closed = k.kernel_mean(&unit, &y, IntegralPolicy::ClosedFormOnly)?;
            let quad = adaptive(0.0, 1.0, &[t], 1e-13, |x| k.eval(&Point::scalar(x), &y).unwrap_or(f64::NAN))?.value;
            worst = worst.max((closed - quad).abs());
        }
    }
    Ok((worst < 1e-9, format!("max deviation {worst:.1e}")))
}

fn weights_reproduce_kernel_means() -> Result<(bool, String)> {
    let unit = Measure::interval(0.0, 1.0)?;
    let factors = DMatrix::from_row_slice(2, 3, &[1.0, 0.5, -0.2, 0.1, 0.8, 0.6]);
    let kernel = OutputKernel::lmc(factors, Some(vec![0.1, 0.1, 0.1]), ScalarKernel::matern(1.5, 1.0, 0.3)?)?;
    let design = Design::new(vec![
        equidistant_grid(6, 0.0, 1.0)?,
        equidistant_grid(5, 0.05, 0.95)?,
        equidistant_grid(4, 0.1, 0.8)?,
    ])?;
    let opts = FitOptions {
        integrals: IntegralPolicy::ClosedFormOnly,
        jitter: JitterPolicy::Fixed(0.0),
    };
    let model = BQModel::fit_design(&kernel, &unit, &design, opts)?;
    let gram = assemble_gram(&kernel, &design)?;
    let resid = (gram * model.weights() - model.kernel_mean_block().transpose()).amax();
    Ok((resid < 1e-9, format!("residual {resid:.1e}")))
}

fn kronecker_matches_dense() -> Result<(bool, String)> {
    let unit = Measure::interval(0.0, 1.0)?;
    let kernel = OutputKernel::separable(b3(), ScalarKernel::matern(2.5, 1.0, 0.2)?)?;
    let design = Design::shared(equidistant_grid(12, 0.0, 1.0)?, 3)?;
    let opts = FitOptions {
        integrals: IntegralPolicy::ClosedFormOnly,
        jitter: JitterPolicy::Fixed(0.0),
    };
    let model = BQModel::fit_design(&kernel, &unit, &design, opts)?;
    let dense = factorize(&assemble_gram(&kernel, &design)?, JitterPolicy::Fixed(0.0))?;
    let w = dense.solve(&model.kernel_mean_block().transpose())?;
    let diff = (w - model.weights()).amax() / model.weights().amax();
    let ok = model.factor().is_kronecker() && diff < 1e-8;
    Ok((ok, format!("relative weight difference {diff:.1e}")))
}

fn covariance_is_psd() -> Result<(bool, String)> {
    let sphere = Measure::UniformSphere;
    let kernel = OutputKernel::separable(b3(), ScalarKernel::SphereSobolev32)?;
    let pts: Vec<Point> = (0..40)
        .map(|i| {
            // Spiral points on the sphere.
            let z = 1.0 - (2 * i + 1) as f64 / 40.0;
            let r = (1.0 - z * z).sqrt();
            let phi = i as f64 * 2.399963229728653;
            Point::on_sphere([r * phi.cos(), r * phi.sin(), z])
        })
        .collect::<Result<_>>()?;
    let design = Design::new(vec![pts[..15].to_vec(), pts[15..30].to_vec(), pts[30..].to_vec()])?;
    let model = BQModel::fit_design(&kernel, &sphere, &design, FitOptions::default())?;
    let cov = model.integral_covariance()?;
    let min = cov.symmetric_eigenvalues().min();
    let scale = model.initial_error_block().amax();
    Ok((min >= -1e-10 * scale, format!("smallest eigenvalue {min:.1e}")))
}

const CHECKS: [(&str, Check); 4] = [
    ("kernel means match quadrature", kernel_means_match_quadrature),
    ("weights reproduce kernel means", weights_reproduce_kernel_means),
    ("kronecker solve matches dense", kronecker_matches_dense),
    ("integral covariance is psd", covariance_is_psd),
];

pub fn run() -> std::result::Result<(), Failure> {
    let mut failed = 0;
    for (name, check) in CHECKS {
        match check() {
            Ok((true, detail)) => println!("ok   {name}: {detail}"),
            Ok((false, detail)) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
            Err(e) => {
                failed += 1;
                println!("FAIL {name}: {e}");
            }
        }
    }
    if failed > 0 {
        return Err(Failure::Numerical(format!("{failed} of {} self-checks failed", CHECKS.len())));
    }
    Ok(())
}
