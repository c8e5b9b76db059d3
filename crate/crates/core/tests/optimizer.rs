use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use mobq::domain::{equidistant_grid, Dataset, Design, Measure, SeededRng};
use mobq::hyper::{log_marginal, optimize, OptimizerConfig};
use mobq::kernels::{OutputKernel, ScalarKernel};
use mobq::linalg::{scalar_gram, JitterPolicy};

/// A draw from a zero-mean GP with an SE(1, 0.2) kernel at 40 random points.
fn synthetic() -> (OutputKernel, Dataset) {
    let truth = ScalarKernel::se(1.0, 0.2).unwrap();
    let mut rng = SeededRng::new(2024);
    let pts = Measure::interval(0.0, 1.0).unwrap().sample(40, &mut rng).unwrap();
    let k = scalar_gram(&truth, &pts, &pts) + DMatrix::identity(40, 40) * 1e-8;
    let l = k.cholesky().unwrap().l();
    let z = DVector::from_fn(40, |_, _| rng.sample::<f64, _>(StandardNormal));
    let f = l * z;
    let data = Dataset::new(Design::new(vec![pts]).unwrap(), f.as_slice().to_vec()).unwrap();
    (OutputKernel::single(truth).unwrap(), data)
}

fn config(restarts: usize) -> OptimizerConfig {
    OptimizerConfig {
        restarts,
        jitter: JitterPolicy::Fixed(1e-8),
        ..Default::default()
    }
}

#[test]
fn recovers_lengthscale_of_synthetic_draw() {
    let (truth, data) = synthetic();
    let template = OutputKernel::single(ScalarKernel::se(0.5, 0.05).unwrap()).unwrap();
    let best = optimize(&template, &data, &config(5)).unwrap();
    let ls = match best.kernel.coregionalization().unwrap().1 {
        ScalarKernel::SquaredExponential { lengthscale, .. } => *lengthscale,
        _ => unreachable!(),
    };
    assert!((0.1..=0.4).contains(&ls), "lengthscale {ls}");
    let at_truth = log_marginal(&truth, &truth.pack_hypers().values, &data, JitterPolicy::Fixed(1e-8)).unwrap();
    assert!(best.lml >= at_truth - 1e-6, "{} < {at_truth}", best.lml);
}

#[test]
fn same_seed_is_bit_identical() {
    let (truth, data) = synthetic();
    let a = optimize(&truth, &data, &config(3)).unwrap();
    let b = optimize(&truth, &data, &config(3)).unwrap();
    assert_eq!(a.theta.values, b.theta.values);
    assert_eq!(a.lml.to_bits(), b.lml.to_bits());
}

#[test]
fn more_restarts_never_do_worse() {
    let (truth, data) = synthetic();
    let one = optimize(&truth, &data, &config(1)).unwrap();
    let five = optimize(&truth, &data, &config(5)).unwrap();
    assert!(five.lml >= one.lml);
}

#[test]
fn traces_never_decrease() {
    let (truth, data) = synthetic();
    let best = optimize(&truth, &data, &config(4)).unwrap();
    for r in &best.restarts {
        assert!(r.lml_trace.windows(2).all(|w| w[1] >= w[0]), "{:?}", r.lml_trace);
    }
    assert_eq!(best.lml, best.restarts[best.best_restart].lml);
}

#[test]
fn scaling_data_leaves_lengthscale_unchanged() {
    let pts = equidistant_grid(15, 0.0, 1.0).unwrap();
    let data = Dataset::from_fn(Design::new(vec![pts]).unwrap(), |_, x| (4.0 * x.coords()[0]).sin());
    // B is held at 1 so the amplitude lives in the scalar kernel. The jitter
    // ladder is relative to the Gram diagonal, which keeps the LML exactly
    // equivariant under scaling.
    let template = OutputKernel::single(ScalarKernel::matern(2.5, 1.0, 0.3).unwrap()).unwrap();
    let cfg = OptimizerConfig {
        fixed: vec![0],
        jitter: JitterPolicy::Ladder,
        grad_tol: 1e-8,
        max_iters: 1000,
        ..config(3)
    };
    let fit = |d: &Dataset| {
        let best = optimize(&template, d, &cfg).unwrap();
        match best.kernel.coregionalization().unwrap().1 {
            ScalarKernel::Matern { amplitude, lengthscale, .. } => (*amplitude, *lengthscale),
            _ => unreachable!(),
        }
    };
    let (a1, l1) = fit(&data);
    let (a5, l5) = fit(&data.scaled(5.0));
    assert!((l1 - l5).abs() / l1 < 1e-3, "{l1} vs {l5}");
    assert!((a5 / a1 - 5.0).abs() < 5e-3, "{a1} vs {a5}");
}
