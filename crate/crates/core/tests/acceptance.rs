//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;

use mobq::domain::{Dataset, Design, Measure, Point, SeededRng};
use mobq::hyper::{grad_log_marginal, grad_log_marginal_fd};
use mobq::kernels::{IntegralPolicy, OutputKernel, ProcessConvolution, ScalarKernel};
use mobq::linalg::{assemble_gram, factorize, factorize_kronecker, scalar_gram, JitterPolicy};
use mobq::posterior::{BQModel, FitOptions};
use mobq::studies::{
    convergence_study, illumination_study, multifidelity_study, ConvergenceConfig, DesignRule, IlluminationConfig,
    Integrand, Metric, MultiFidelityConfig, StudyReport, REFERENCE_HIGH_FIDELITY_BQ_ERROR,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn unit() -> Measure {
    Measure::interval(0.0, 1.0).unwrap()
}

fn exact() -> FitOptions {
    FitOptions {
        integrals: IntegralPolicy::ClosedFormOnly,
        jitter: JitterPolicy::Fixed(0.0),
    }
}

/// Stratified points on `[0, 1]`, one per cell of width 1/n, at least `gap`
/// apart.
fn spread_points(rng: &mut SeededRng, n: usize, gap: f64) -> Vec<Point> {
    let h = 1.0 / n as f64;
    assert!(gap < h);
    (0..n)
        .map(|i| Point::scalar(i as f64 * h + gap / 2.0 + rng.random::<f64>() * (h - gap)))
        .collect()
}

/// Agreement to 1e-10 between two solvers is only meaningful when the Gram
/// matrix is reasonably conditioned.
fn well_conditioned(k: &DMatrix<f64>) -> bool {
    let ev = k.clone().symmetric_eigenvalues();
    ev.min() > 0.0 && ev.max() / ev.min() <= 1e6
}

fn random_spd(rng: &mut SeededRng, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(d, d) * 0.2
}

fn random_base(rng: &mut SeededRng) -> ScalarKernel {
    let amp = rng.random_range(0.5..2.0);
    let ls = rng.random_range(0.1..0.5);
    match rng.random_range(0..4) {
        0 => ScalarKernel::matern(0.5, amp, ls).unwrap(),
        1 => ScalarKernel::matern(1.5, amp, ls).unwrap(),
        2 => ScalarKernel::matern(2.5, amp, ls).unwrap(),
        _ => ScalarKernel::se(amp, ls).unwrap(),
    }
}

// ---------------------------------------------------------------------------
// Independent uni-output BQ, written directly from the scalar formulas.

fn oracle_kernel(kind: u8, ls: f64, r: f64) -> f64 {
    match kind {
        0 => (-r.abs() / ls).exp(),
        _ => (-r * r / (2.0 * ls * ls)).exp(),
    }
}

fn oracle_mean(kind: u8, ls: f64, x: f64) -> f64 {
    match kind {
        0 => ls * (2.0 - (-x / ls).exp() - (-(1.0 - x) / ls).exp()),
        _ => {
            let s = std::f64::consts::SQRT_2 * ls;
            0.5 * s * std::f64::consts::PI.sqrt() * (libm::erf((1.0 - x) / s) + libm::erf(x / s))
        }
    }
}

fn oracle_initial(kind: u8, ls: f64) -> f64 {
    match kind {
        0 => 2.0 * ls - 2.0 * ls * ls * (1.0 - (-1.0 / ls).exp()),
        _ => {
            let s = std::f64::consts::SQRT_2 * ls;
            let u = 1.0 / s;
            s * s * (std::f64::consts::PI.sqrt() * u * libm::erf(u) + (-u * u).exp() - 1.0)
        }
    }
}

fn cholesky_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                l[i][i] = (a[i][i] - s).sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        y[i] = (b[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = (y[i] - (i + 1..n).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    x
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let mut rng = SeededRng::new(101);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let kind = (case % 2) as u8;
        let (ls, pts, xs, gram) = loop {
            let ls = rng.random_range(0.05..0.6);
            let n = rng.random_range(2..14);
            let pts = spread_points(&mut rng, n, 0.02);
            let xs: Vec<f64> = pts.iter().map(|p| p.coords()[0]).collect();
            let gram: Vec<Vec<f64>> = xs.iter().map(|a| xs.iter().map(|b| oracle_kernel(kind, ls, a - b)).collect()).collect();
            if well_conditioned(&DMatrix::from_fn(n, n, |i, j| gram[i][j])) {
                break (ls, pts, xs, gram);
            }
        };
        let f: Vec<f64> = xs.iter().map(|_| rng.random_range(-2.0..2.0)).collect();

        let z: Vec<f64> = xs.iter().map(|x| oracle_mean(kind, ls, *x)).collect();
        let w = cholesky_solve(&gram, &z);
        let mean: f64 = w.iter().zip(&f).map(|(a, b)| a * b).sum();
        let var = oracle_initial(kind, ls) - w.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();

        let base = if kind == 0 { ScalarKernel::matern(0.5, 1.0, ls) } else { ScalarKernel::se(1.0, ls) }.unwrap();
        let k = OutputKernel::single(base).unwrap();
        let data = Dataset::new(Design::new(vec![pts]).unwrap(), f).unwrap();
        let post = BQModel::fit(&k, &unit(), &data, exact()).unwrap().integral_posterior(&data).unwrap();
        worst = worst.max((post.mean[0] - mean).abs()).max((post.cov[(0, 0)] - var.max(0.0)).abs());
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(worst < 1e-10 && secs < 5.0, format!("max |Δ| = {worst:.2e} over 50 problems, {secs:.2} s"))
}

fn criterion_2() -> Outcome {
    let mut rng = SeededRng::new(202);
    let (mut worst_w, mut worst_c): (f64, f64) = (0.0, 0.0);
    for _ in 0..40 {
        let d = rng.random_range(1..=4);
        let b = random_spd(&mut rng, d);
        let (base, pts) = loop {
            let n = rng.random_range(2..=30);
            let base = random_base(&mut rng);
            let pts = spread_points(&mut rng, n, 0.02);
            if well_conditioned(&scalar_gram(&base, &pts, &pts)) {
                break (base, pts);
            }
        };
        let opts = exact();
        let multi = BQModel::fit_design(
            &OutputKernel::separable(b.clone(), base.clone()).unwrap(),
            &unit(),
            &Design::shared(pts.clone(), d).unwrap(),
            opts,
        )
        .unwrap();
        let uni = BQModel::fit_design(&OutputKernel::single(base).unwrap(), &unit(), &Design::shared(pts, 1).unwrap(), opts).unwrap();
        let w = uni.weights();
        let expect_w = DMatrix::identity(d, d).kronecker(w);
        worst_w = worst_w.max((multi.weights() - &expect_w).amax() / expect_w.amax().max(1.0));
        let e2 = uni.integral_covariance().unwrap()[(0, 0)];
        let expect_c = &b * e2;
        let cov = multi.integral_covariance().unwrap();
        worst_c = worst_c.max((cov - &expect_c).amax() / expect_c.amax());
    }
    outcome(
        worst_w < 1e-10 && worst_c < 1e-9,
        format!("max rel |W − I⊗w| = {worst_w:.2e}, max rel |cov − B e²| = {worst_c:.2e}"),
    )
}

fn criterion_3() -> Outcome {
    let k = ScalarKernel::SphereSquaredDistance;
    let sphere = Measure::UniformSphere;
    let mut rng = SeededRng::new(303);
    let xs = sphere.sample(20, &mut rng).unwrap();
    let closed_mean = xs
        .iter()
        .map(|x| (k.kernel_mean(&sphere, x, IntegralPolicy::ClosedFormOnly).unwrap() - 2.0 / 3.0).abs())
        .fold(0.0, f64::max);
    let closed_ie = (k.initial_error(&sphere, IntegralPolicy::ClosedFormOnly).unwrap() - 2.0 / 3.0).abs();

    // Monte Carlo: the kernel has standard deviation about 1.15, so 2·10⁷
    // draws put the 1e-3 tolerance near four standard errors.
    let m = 20_000_000;
    let x0 = &xs[0];
    let mut rng = SeededRng::new(304);
    let (mut s_mean, mut s_ie) = (0.0, 0.0);
    for _ in 0..m {
        let y = sphere.sample(1, &mut rng).unwrap().pop().unwrap();
        let z = sphere.sample(1, &mut rng).unwrap().pop().unwrap();
        s_mean += k.eval(x0, &y).unwrap();
        s_ie += k.eval(&y, &z).unwrap();
    }
    let mc_mean = (s_mean / m as f64 - 2.0 / 3.0).abs();
    let mc_ie = (s_ie / m as f64 - 2.0 / 3.0).abs();
    outcome(
        closed_mean < 1e-12 && closed_ie < 1e-12 && mc_mean < 1e-3 && mc_ie < 1e-3,
        format!("closed form |Δ| mean {closed_mean:.1e}, initial error {closed_ie:.1e}; Monte Carlo |Δ| {mc_mean:.1e}, {mc_ie:.1e}"),
    )
}

fn criterion_4(report: &StudyReport, secs: f64) -> Outcome {
    let slopes: Vec<f64> = report
        .slopes
        .iter()
        .filter(|s| s.method == "bq" && s.metric == Metric::Wce)
        .map(|s| s.fit.slope)
        .collect();
    let expected = 3 * (1 + 2 + 5);
    let ok = slopes.len() == expected && slopes.iter().all(|s| (-0.9..=-0.6).contains(s));
    let lo = slopes.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    outcome(
        ok && secs < 120.0,
        format!("{} WCE slopes in [{lo:.3}, {hi:.3}], D ∈ {{1,2,5}}, N 16..512, 5 seeds, {secs:.1} s on one thread", slopes.len()),
    )
}

fn grid_config(kernel: OutputKernel, integrand: Integrand) -> ConvergenceConfig {
    ConvergenceConfig {
        label: "bq".into(),
        kernel,
        measure: unit(),
        integrand,
        design: DesignRule::Grid,
        schedule: vec![8, 16, 32, 64, 128, 256],
        seeds: vec![0],
        integrals: IntegralPolicy::AllowQuadrature,
        jitter: JitterPolicy::Ladder,
        reference_tol: 1e-14,
    }
}

fn slope_of(cfg: &ConvergenceConfig, metric: Metric) -> f64 {
    convergence_study(cfg).unwrap().slope("bq", 1, 0, metric).unwrap().fit.slope
}

fn matern(nu: f64, ls: f64) -> OutputKernel {
    OutputKernel::single(ScalarKernel::matern(nu, 1.0, ls).unwrap()).unwrap()
}

/// The rate theorem is stated for kernels whose RKHS is the Sobolev space of
/// order α. In one dimension that is the Matérn kernel of order ν = α − 1/2.
fn criterion_5() -> Outcome {
    let t = Instant::now();
    let smooth = Integrand::Cosine { frequency: 3.0 };
    let rough = slope_of(&grid_config(matern(1.0, 0.3), smooth.clone()), Metric::Wce);
    let sum = OutputKernel::sum(vec![matern(1.0, 0.3), matern(2.0, 0.3)]).unwrap();
    let summed = slope_of(&grid_config(sum, smooth.clone()), Metric::Wce);
    let order_three_halves = slope_of(&grid_config(matern(1.5, 0.3), smooth), Metric::Wce);
    let secs = t.elapsed().as_secs_f64();
    outcome(
        (rough + 1.5).abs() <= 0.3 && (summed - rough).abs() <= 0.3 && secs < 60.0,
        format!(
            "Sobolev-3/2 (ν=1) slope {rough:.3}, sum with Sobolev-5/2 {summed:.3}; {secs:.1} s \
             [info: Matérn order ν=3/2, whose RKHS has order 2, gives {order_three_halves:.3}]"
        ),
    )
}

fn criterion_6() -> Outcome {
    let kink = Integrand::Kink { center: 0.47 };
    let sobolev = slope_of(&grid_config(matern(2.0, 0.3), kink.clone()), Metric::AbsError);
    let order = slope_of(&grid_config(matern(2.5, 0.3), kink), Metric::AbsError);
    outcome(
        sobolev <= -1.2 && order <= -1.2,
        format!("|x − 0.47| error slope {sobolev:.3} (Sobolev 5/2, ν=2) and {order:.3} (order ν=5/2)"),
    )
}

fn criterion_7() -> Outcome {
    let t = Instant::now();
    let mut lines = Vec::new();
    let mut ok = true;
    for (kind, reference) in REFERENCE_HIGH_FIDELITY_BQ_ERROR {
        let report = multifidelity_study(&MultiFidelityConfig::new(kind)).unwrap();
        let err = |method: &str, seed: u64| {
            report
                .records
                .iter()
                .find(|r| r.method == method && r.output == 0 && r.seed == seed)
                .unwrap()
                .abs_error
        };
        let seeds = [0u64, 1, 2];
        let passing = seeds
            .iter()
            .filter(|&&s| {
                let bq = err("bq", s);
                err("lmc", s) < bq && err("pc", s) < bq && bq >= 0.1 * reference && bq <= 10.0 * reference
            })
            .count();
        ok &= passing >= 2;
        lines.push(format!(
            "{} {passing}/3 (bq {:.3} vs {reference}, lmc {:.3}, pc {:.3})",
            kind.name(),
            err("bq", 0),
            err("lmc", 0),
            err("pc", 0)
        ));
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(ok && secs < 180.0, format!("{}; {secs:.1} s", lines.join("; ")))
}

fn random_output_kernel(rng: &mut SeededRng, d: usize) -> OutputKernel {
    match rng.random_range(0..3) {
        0 => OutputKernel::separable(random_spd(rng, d), random_base(rng)).unwrap(),
        1 => {
            let r = rng.random_range(1..=2);
            let a = DMatrix::from_fn(r, d, |_, _| rng.random_range(-1.0..1.0));
            let nugget = (0..d).map(|_| rng.random_range(0.05..0.5)).collect();
            OutputKernel::lmc(a, Some(nugget), random_base(rng)).unwrap()
        }
        _ => {
            let r = rng.random_range(1..=2);
            OutputKernel::process_convolution(ProcessConvolution {
                blur_amplitudes: DMatrix::from_fn(r, d, |_, _| rng.random_range(0.5..1.5)),
                blur_widths: DMatrix::from_fn(r, d, |_, _| rng.random_range(0.05..0.3)),
                latent_amplitudes: (0..r).map(|_| rng.random_range(0.5..1.5)).collect(),
                latent_widths: (0..r).map(|_| rng.random_range(0.1..0.4)).collect(),
                independent: None,
            })
            .unwrap()
        }
    }
}

fn criterion_8() -> Outcome {
    let mut rng = SeededRng::new(808);
    let mut worst_gap = f64::INFINITY;
    let problems = 10;
    for _ in 0..problems {
        let d = rng.random_range(1..=3);
        let kernel = random_output_kernel(&mut rng, d);
        let sets = (0..d)
            .map(|_| {
                let n = rng.random_range(1..=6);
                spread_points(&mut rng, n, 0.05)
            })
            .collect();
        let model = BQModel::fit_design(&kernel, &unit(), &Design::new(sets).unwrap(), exact()).unwrap();
        let best = model.quadrature_wce_squared(model.weights()).unwrap();
        for _ in 0..200 {
            let scale = 10f64.powf(rng.random_range(-4.0..0.0));
            let w = model.weights() + DMatrix::from_fn(model.weights().nrows(), d, |_, _| scale * rng.random_range(-1.0..1.0));
            let other = model.quadrature_wce_squared(&w).unwrap();
            for (o, b) in other.iter().zip(&best) {
                worst_gap = worst_gap.min(o - b);
            }
        }
    }
    outcome(
        worst_gap >= -1e-10,
        format!("{problems} problems × 200 perturbations, min (e²(W) − e²(W_BQ)) = {worst_gap:.2e}"),
    )
}

/// Every scalar base the LML supports: half-integer and general Matérn
/// orders plus the squared exponential.
fn random_lml_base(rng: &mut SeededRng) -> ScalarKernel {
    let amp = rng.random_range(0.5..2.0);
    let ls = rng.random_range(0.1..0.5);
    let nu = [0.5, 1.0, 1.5, 2.0, 2.5, 3.2];
    match rng.random_range(0..=nu.len()) {
        i if i < nu.len() => ScalarKernel::matern(nu[i], amp, ls).unwrap(),
        _ => ScalarKernel::se(amp, ls).unwrap(),
    }
}

fn random_lml_kernel(rng: &mut SeededRng, d: usize, case: usize) -> OutputKernel {
    let mut k = random_output_kernel(rng, d);
    match &mut k {
        OutputKernel::Separable { base, .. } | OutputKernel::Lmc { base, .. } => *base = random_lml_base(rng),
        OutputKernel::ProcessConvolution(pc) if case % 2 == 0 => {
            let mut pc = pc.clone();
            pc.independent = Some((0..d).map(|_| random_lml_base(rng)).collect());
            k = OutputKernel::process_convolution(pc).unwrap();
        }
        _ => {}
    }
    k
}

fn criterion_9() -> Outcome {
    let mut rng = SeededRng::new(909);
    let mut worst: f64 = 0.0;
    let mut kinds = [0usize; 5];
    let jitter = JitterPolicy::Fixed(1e-8);
    for case in 0..50 {
        // Finite differences lose about cond(K)·ε/h, so problems are redrawn
        // until the Gram matrix has cond(K) ≤ 1e6.
        let (kernel, data) = loop {
            let d = rng.random_range(1..=3);
            let (kernel, measure) = match case % 10 {
                9 => (
                    OutputKernel::separable(random_spd(&mut rng, d), ScalarKernel::SphereSobolev32).unwrap(),
                    Measure::UniformSphere,
                ),
                c if c % 4 == 3 => {
                    let parts = vec![random_lml_kernel(&mut rng, d, case), random_lml_kernel(&mut rng, d, case + 1)];
                    let p = rng.random_range(1..=2);
                    (OutputKernel::sum(parts).unwrap(), Measure::uniform_box(vec![0.0; p], vec![1.0; p]).unwrap())
                }
                _ => {
                    let p = rng.random_range(1..=2);
                    (random_lml_kernel(&mut rng, d, case), Measure::uniform_box(vec![0.0; p], vec![1.0; p]).unwrap())
                }
            };
            let sets = (0..d)
                .map(|_| {
                    let n = rng.random_range(3..=8);
                    measure.sample(n, &mut rng).unwrap()
                })
                .collect();
            let data = Dataset::from_fn(Design::new(sets).unwrap(), |o, x| (3.0 * x.coords()[0] + o as f64).sin() + 0.1 * o as f64);
            if well_conditioned(&assemble_gram(&kernel, data.design()).unwrap()) {
                break (kernel, data);
            }
        };
        kinds[match &kernel {
            OutputKernel::Separable { base: ScalarKernel::SphereSobolev32, .. } => 4,
            OutputKernel::Separable { .. } => 0,
            OutputKernel::Lmc { .. } => 1,
            OutputKernel::ProcessConvolution(_) => 2,
            OutputKernel::Sum(_) => 3,
        }] += 1;
        let theta = kernel.pack_hypers().values;
        let a = grad_log_marginal(&kernel, &theta, &data, jitter).unwrap().unwrap();
        let f = grad_log_marginal_fd(&kernel, &theta, &data, jitter).unwrap().unwrap();
        let diff = a.gradient.iter().zip(&f.gradient).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let scale = f.gradient.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
        worst = worst.max(diff / scale);
    }
    outcome(
        worst < 1e-5,
        format!(
            "max relative gradient error {worst:.2e} over 50 configurations with cond(K) ≤ 1e6 \
             (separable {}, LMC {}, PC {}, sum {}, sphere {})",
            kinds[0], kinds[1], kinds[2], kinds[3], kinds[4]
        ),
    )
}

fn criterion_10() -> Outcome {
    let mut rng = SeededRng::new(1010);
    let mut worst: f64 = 0.0;
    let eta = 1e-8;
    for _ in 0..20 {
        let d = rng.random_range(1..=4);
        let b = random_spd(&mut rng, d);
        let (base, pts, c) = loop {
            let n = rng.random_range(2..=40);
            let base = random_base(&mut rng);
            let pts = spread_points(&mut rng, n, 0.02);
            let c = scalar_gram(&base, &pts, &pts);
            if well_conditioned(&c) {
                break (base, pts, c);
            }
        };
        let n = pts.len();
        let kernel = OutputKernel::separable(b.clone(), base).unwrap();
        let design = Design::shared(pts, d).unwrap();
        let z = kernel.mo_kernel_mean(&unit(), &design, IntegralPolicy::ClosedFormOnly).unwrap().transpose();
        let f = DMatrix::from_fn(n * d, 1, |_, _| rng.random_range(-1.0..1.0));
        // Both paths factor B ⊗ (c + ηI); the dense one gets it assembled.
        let kron = factorize_kronecker(&b, &c, JitterPolicy::Fixed(eta)).unwrap();
        let nugget = b.kronecker(&DMatrix::<f64>::identity(n, n)) * eta;
        let dense = factorize(&(assemble_gram(&kernel, &design).unwrap() + nugget), JitterPolicy::Fixed(0.0)).unwrap();
        let rel = |a: DMatrix<f64>, b: DMatrix<f64>| (&a - &b).amax() / b.amax().max(1.0);
        worst = worst
            .max(rel(kron.solve(&z).unwrap(), dense.solve(&z).unwrap()))
            .max(rel(kron.solve(&f).unwrap(), dense.solve(&f).unwrap()))
            .max((kron.log_det() - dense.log_det()).abs() / dense.log_det().abs().max(1.0));
    }

    // Timing at N = 200, D = 5 (informational).
    let (n, d) = (200, 5);
    let b = random_spd(&mut rng, d);
    let base = ScalarKernel::matern(2.5, 1.0, 0.2).unwrap();
    let kernel = OutputKernel::separable(b.clone(), base.clone()).unwrap();
    let pts = spread_points(&mut rng, n, 0.0);
    let design = Design::shared(pts.clone(), d).unwrap();
    let z = kernel.mo_kernel_mean(&unit(), &design, IntegralPolicy::ClosedFormOnly).unwrap().transpose();
    let t = Instant::now();
    let wk = factorize_kronecker(&b, &scalar_gram(&base, &pts, &pts), JitterPolicy::Ladder).unwrap().solve(&z).unwrap();
    let tk = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let wd = factorize(&assemble_gram(&kernel, &design).unwrap(), JitterPolicy::Ladder).unwrap().solve(&z).unwrap();
    let td = t.elapsed().as_secs_f64();
    let speedup = td / tk;
    let agree = (wk - wd).amax() / 1.0;
    outcome(
        worst < 1e-8,
        format!("max relative |Kronecker − dense| = {worst:.2e} on 20 cases with cond(c) ≤ 1e6; N=200, D=5: {speedup:.1}× faster (informational, |ΔW| {agree:.1e})"),
    )
}

fn criterion_11(report: &StudyReport) -> Outcome {
    let bq = report.median_curves(Metric::AbsError);
    let mut checked = 0;
    let mut worst_ratio: f64 = 0.0;
    let mut failures = Vec::new();
    for (key, curve) in bq.iter().filter(|(k, _)| k.method == "bq") {
        let (_, mc) = bq
            .iter()
            .find(|(k, _)| k.method == "mc" && k.output == key.output && k.channel == key.channel)
            .expect("monte carlo curve");
        for (n, e) in curve.iter().filter(|(n, _)| *n >= 64) {
            let m = mc.iter().find(|(nn, _)| nn == n).unwrap().1;
            checked += 1;
            worst_ratio = worst_ratio.max(e / m);
            if e >= &m {
                failures.push(format!("D={} d={} ch={:?} N={n}", key.outputs, key.output, key.channel));
            }
        }
    }
    outcome(
        failures.is_empty() && checked > 0,
        format!(
            "{checked} (D, d, channel, N ≥ 64) medians, worst BQ/MC ratio {worst_ratio:.3}{}",
            if failures.is_empty() { String::new() } else { format!("; failing: {}", failures.join(", ")) }
        ),
    )
}

fn main() {
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let t = Instant::now();
    let illumination = single.install(|| illumination_study(&IlluminationConfig::default()).unwrap());
    let illumination_secs = t.elapsed().as_secs_f64();
    eprintln!("  illumination study ({illumination_secs:.1} s)");

    let run = |id: u32, f: fn() -> Outcome| {
        let t = Instant::now();
        let o = f();
        eprintln!("  criterion {id} ({:.1} s)", t.elapsed().as_secs_f64());
        o
    };
    let results: Vec<(u32, &str, Outcome)> = vec![
        (1, "one-output reduction", run(1, criterion_1)),
        (2, "separable decoupling", run(2, criterion_2)),
        (3, "sphere kernel identities", run(3, criterion_3)),
        (4, "sphere WCE rate", criterion_4(&illumination, illumination_secs)),
        (5, "Matérn grid rate and sum kernel", run(5, criterion_5)),
        (6, "misspecified rate", run(6, criterion_6)),
        (7, "multi-fidelity orderings", run(7, criterion_7)),
        (8, "optimality of BQ weights", run(8, criterion_8)),
        (9, "LML gradient", run(9, criterion_9)),
        (10, "Kronecker path", run(10, criterion_10)),
        (11, "BQ beats Monte Carlo", criterion_11(&illumination)),
    ];
    let mut failed = 0;
    for (id, name, o) in &results {
        println!("{} criterion {id:>2} ({name}): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{}/{} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
