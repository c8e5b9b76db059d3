use nalgebra::DMatrix;

use mobq::domain::Measure;
use mobq::kernels::{IntegralPolicy, OutputKernel, ScalarKernel};
use mobq::linalg::JitterPolicy;
use mobq::studies::{
    convergence_study, illumination_study, multifidelity_study, ConvergenceConfig, DesignRule, IlluminationConfig,
    Integrand, MultiFidelityConfig,
};
use mobq::testbeds::ProblemKind;

fn converge(kernel: OutputKernel, design: DesignRule) -> ConvergenceConfig {
    ConvergenceConfig {
        label: "bq".into(),
        kernel,
        measure: Measure::interval(0.0, 1.0).unwrap(),
        integrand: Integrand::Kink { center: 0.47 },
        design,
        schedule: vec![8, 16, 32, 64],
        seeds: vec![3, 4, 5],
        integrals: IntegralPolicy::ClosedFormOnly,
        jitter: JitterPolicy::Ladder,
        reference_tol: 1e-13,
    }
}

fn b3() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.2, 0.5, 1.0, 0.4, 0.2, 0.4, 1.0])
}

fn matern() -> ScalarKernel {
    ScalarKernel::matern(2.5, 1.0, 0.2).unwrap()
}

#[test]
fn reports_are_reproducible() {
    let cfg = converge(OutputKernel::separable(b3(), matern()).unwrap(), DesignRule::Iid);
    let a = convergence_study(&cfg).unwrap();
    let b = convergence_study(&cfg).unwrap();
    assert_eq!(a.to_csv(false), b.to_csv(false));
    assert_eq!(a.summary_json().to_string(), b.summary_json().to_string());

    let mut mf = MultiFidelityConfig::new(ProblemKind::Step);
    mf.seeds = vec![0, 1];
    mf.optimizer.restarts = 2;
    let a = multifidelity_study(&mf).unwrap();
    let b = multifidelity_study(&mf).unwrap();
    assert_eq!(a.to_csv(false), b.to_csv(false));
}

#[test]
fn thread_count_does_not_change_results() {
    let cfg = IlluminationConfig {
        schedule: vec![16, 32],
        seeds: vec![0, 1, 2],
        channels: Some(vec![1]),
        reference_nodes: 32,
        ..Default::default()
    };
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| illumination_study(&cfg).unwrap().to_csv(false))
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn shared_separable_reports_match_single_output() {
    let multi = convergence_study(&converge(OutputKernel::separable(b3(), matern()).unwrap(), DesignRule::SharedIid)).unwrap();
    let single = convergence_study(&converge(OutputKernel::single(matern()).unwrap(), DesignRule::SharedIid)).unwrap();
    let first: Vec<_> = multi.records.iter().filter(|r| r.output == 0).collect();
    assert_eq!(first.len(), single.records.len());
    for (m, s) in first.iter().zip(&single.records) {
        assert_eq!((m.n, m.seed), (s.n, s.seed));
        assert!((m.abs_error - s.abs_error).abs() <= 1e-10, "{} vs {}", m.abs_error, s.abs_error);
    }
}

#[test]
fn references_are_much_tighter_than_errors() {
    let cfg = converge(OutputKernel::separable(b3(), matern()).unwrap(), DesignRule::Grid);
    let r = convergence_study(&cfg).unwrap();
    let smallest = r.records.iter().map(|x| x.abs_error).fold(f64::INFINITY, f64::min);
    assert!(r.references.iter().all(|(_, x)| 100.0 * x.accuracy <= smallest));

    let cfg = IlluminationConfig {
        schedule: vec![16, 64],
        seeds: vec![0],
        channels: Some(vec![0]),
        ..Default::default()
    };
    let r = illumination_study(&cfg).unwrap();
    let smallest = r.records.iter().map(|x| x.abs_error).fold(f64::INFINITY, f64::min);
    assert!(r.references.iter().all(|(_, x)| 100.0 * x.accuracy <= smallest));
}

#[test]
fn csv_has_header_and_one_line_per_record() {
    let r = convergence_study(&converge(OutputKernel::single(matern()).unwrap(), DesignRule::Grid)).unwrap();
    let csv = r.to_csv(false);
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), mobq::studies::CSV_HEADER);
    assert_eq!(lines.count(), r.records.len());
}
