//! Browser bindings for the demo page in `www/`.
//!
//! Every export takes plain numbers and returns a JSON string, so the page
//! needs no generated type glue beyond `JSON.parse`.

use nalgebra::DMatrix;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use mobq::domain::{Dataset, Design, Measure, Point, SeededRng};
use mobq::error::Result;
use mobq::hyper::{optimize, OptimizerConfig};
use mobq::kernels::{OutputKernel, ProcessConvolution, ScalarKernel};
use mobq::posterior::{BQModel, FitOptions};
use mobq::testbeds::{Fidelity, MultiFidelityProblem, ProblemKind};

fn respond(r: Result<Value>) -> String {
    match r {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    }
}

fn problem_kind(name: &str) -> Result<ProblemKind> {
    serde_json::from_value(Value::String(name.to_string()))
        .map_err(|_| mobq::error::Error::InvalidArgument(format!("unknown problem {name:?}")))
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1).max(1) as f64).collect()
}

fn multifidelity_inner(problem: &str, coupling: f64, lengthscale: f64, fit: bool, grid: usize) -> Result<Value> {
    let p = MultiFidelityProblem::new(problem_kind(problem)?)?;
    let (a, b) = p.domain;
    let design = p.design()?;
    let fid = [Fidelity::High, Fidelity::Low];
    let mut blocks = Vec::new();
    for (d, f) in fid.iter().enumerate() {
        blocks.push(design.points(d).iter().map(|x| p.eval(x.coords()[0], *f)).collect::<Result<Vec<_>>>()?);
    }
    let data = Dataset::from_blocks(design, blocks)?;

    let b_mat = DMatrix::from_row_slice(2, 2, &[1.0, coupling, coupling, 1.0]);
    let template = OutputKernel::separable(b_mat, ScalarKernel::matern(2.5, 1.0, lengthscale)?)?;
    let (kernel, lml) = if fit {
        let cfg = OptimizerConfig {
            restarts: 3,
            ..Default::default()
        };
        let best = optimize(&template, &data, &cfg)?;
        (best.kernel, Some(best.lml))
    } else {
        (template, None)
    };

    let measure = Measure::interval(a, b)?;
    let model = BQModel::fit(&kernel, &measure, &data, FitOptions::default())?;
    let post = model.integral_posterior(&data)?;

    let xs = linspace(a, b, grid.max(2));
    let mut mean = vec![Vec::new(), Vec::new()];
    let mut sd = vec![Vec::new(), Vec::new()];
    for x in &xs {
        let pt = Point::scalar(*x);
        let m = model.predict_mean(&data, &pt)?;
        let c = model.predict_cov(&pt, &pt)?;
        for d in 0..2 {
            mean[d].push(m[d]);
            sd[d].push(c[(d, d)].max(0.0).sqrt());
        }
    }
    let truth: Vec<Vec<f64>> = fid
        .iter()
        .map(|f| xs.iter().map(|x| p.eval(*x, *f)).collect::<Result<_>>())
        .collect::<Result<_>>()?;

    Ok(json!({
        "x": xs,
        "mean": mean,
        "sd": sd,
        "truth": truth,
        "data": (0..2).map(|d| json!({
            "x": data.design().points(d).iter().map(|p| p.coords()[0]).collect::<Vec<_>>(),
            "y": data.output_values(d),
        })).collect::<Vec<_>>(),
        "integral": {
            "mean": post.mean.as_slice(),
            "sd": (0..2).map(|d| post.cov[(d, d)].max(0.0).sqrt()).collect::<Vec<_>>(),
            "exact": [p.exact_mean(Fidelity::High), p.exact_mean(Fidelity::Low)],
        },
        "kernel": kernel,
        "lml": lml,
    }))
}

/// Posterior over both fidelities of a multi-fidelity testbed under a
/// separable Matérn-5/2 kernel with output correlation `coupling`.
/// With `fit`, hyperparameters are fitted by marginal likelihood first.
#[wasm_bindgen]
pub fn multifidelity_posterior(problem: &str, coupling: f64, lengthscale: f64, fit: bool, grid: usize) -> String {
    respond(multifidelity_inner(problem, coupling, lengthscale, fit, grid))
}

fn sphere_inner(coupling: f64, n_max: usize, seed: u32) -> Result<Value> {
    let sphere = Measure::UniformSphere;
    let b_mat = DMatrix::from_row_slice(2, 2, &[1.0, coupling, coupling, 1.0]);
    let joint = OutputKernel::separable(b_mat, ScalarKernel::SphereSobolev32)?;
    let single = OutputKernel::single(ScalarKernel::SphereSobolev32)?;
    let root = SeededRng::new(seed as u64);
    let mut ns = Vec::new();
    let mut n = 8;
    while n <= n_max.max(8) {
        ns.push(n);
        n *= 2;
    }
    let (mut wce_single, mut wce_joint) = (Vec::new(), Vec::new());
    for &n in &ns {
        // Output 1 is observed at the same points as output 0 plus as many
        // again; output 0 borrows strength through `coupling`.
        let own = sphere.sample(n, &mut root.stream(2 * n as u64))?;
        let mut other = own.clone();
        other.extend(sphere.sample(n, &mut root.stream(2 * n as u64 + 1))?);
        let opts = FitOptions::default();
        let m1 = BQModel::fit_design(&single, &sphere, &Design::new(vec![own.clone()])?, opts)?;
        let m2 = BQModel::fit_design(&joint, &sphere, &Design::new(vec![own, other])?, opts)?;
        wce_single.push(m1.integral_covariance()?[(0, 0)].max(0.0).sqrt());
        wce_joint.push(m2.integral_covariance()?[(0, 0)].max(0.0).sqrt());
    }
    Ok(json!({ "n": ns, "single": wce_single, "joint": wce_joint }))
}

/// Worst-case error for output 0 on the sphere as the design grows, with and
/// without a correlated second output observed at twice as many points.
#[wasm_bindgen]
pub fn sphere_wce(coupling: f64, n_max: usize, seed: u32) -> String {
    respond(sphere_inner(coupling, n_max, seed))
}

fn pc_inner(width_a: f64, width_b: f64, latent_width: f64, grid: usize) -> Result<Value> {
    let pc = ProcessConvolution {
        blur_amplitudes: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
        blur_widths: DMatrix::from_row_slice(1, 2, &[width_a, width_b]),
        latent_amplitudes: vec![1.0],
        latent_widths: vec![latent_width],
        independent: None,
    };
    let kernel = OutputKernel::process_convolution(pc)?;
    let r = linspace(-2.0, 2.0, grid.max(2));
    let origin = Point::scalar(0.0);
    let entry = |d, e| r.iter().map(|x| kernel.entry(d, e, &Point::scalar(*x), &origin)).collect::<Vec<_>>();
    Ok(json!({ "r": r, "aa": entry(0, 0), "ab": entry(0, 1), "bb": entry(1, 1) }))
}

/// Entries of a one-latent process-convolution kernel against the origin:
/// both auto-covariances and the cross-covariance.
#[wasm_bindgen]
pub fn pc_profile(width_a: f64, width_b: f64, latent_width: f64, grid: usize) -> String {
    respond(pc_inner(width_a, width_b, latent_width, grid))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: String) -> Value {
        serde_json::from_str(&s).unwrap()
    }

    #[test]
    fn fitted_multifidelity_integral_is_calibrated() {
        let v = parse(multifidelity_posterior("step", 0.9, 0.4, true, 50));
        assert!(v.get("error").is_none(), "{v}");
        let mean = v["integral"]["mean"][0].as_f64().unwrap();
        let sd = v["integral"]["sd"][0].as_f64().unwrap();
        let exact = v["integral"]["exact"][0].as_f64().unwrap();
        assert!((mean - exact).abs() < 3.0 * sd, "{mean} vs {exact} ± {sd}");
        assert_eq!(v["x"].as_array().unwrap().len(), 50);
    }

    #[test]
    fn unknown_problem_reports_error() {
        let v = parse(multifidelity_posterior("nope", 0.5, 0.3, false, 10));
        assert!(v["error"].as_str().unwrap().contains("nope"));
    }

    #[test]
    fn coupling_never_hurts_sphere_wce() {
        let v = parse(sphere_wce(0.9, 64, 1));
        let single = v["single"].as_array().unwrap();
        let joint = v["joint"].as_array().unwrap();
        assert_eq!(single.len(), 4);
        for (s, j) in single.iter().zip(joint) {
            assert!(j.as_f64().unwrap() <= s.as_f64().unwrap() + 1e-12);
        }
    }

    #[test]
    fn pc_profile_is_symmetric_and_peaks_at_zero() {
        let v = parse(pc_profile(0.2, 0.5, 0.3, 41));
        let ab: Vec<f64> = v["ab"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        for i in 0..ab.len() {
            assert!((ab[i] - ab[ab.len() - 1 - i]).abs() < 1e-12);
        }
        assert!(ab.iter().all(|x| *x <= ab[20] + 1e-15));
    }
}
