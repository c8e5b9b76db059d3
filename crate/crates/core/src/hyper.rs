//! Empirical Bayes: log marginal likelihood, its gradient in the packed
//! log-coordinates, and a multi-start projected gradient ascent.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, Point, SeededRng};
use crate::error::{Error, Result};
use crate::kernels::{GradientEvaluator, HyperVector, OutputKernel};
use crate::linalg::{assemble_gram, factorize, GramFactor, JitterPolicy};
use rand::Rng;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMethod {
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmlGradient {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub method: GradientMethod,
    pub jitter: f64,
}

fn dense_factor(kernel: &OutputKernel, dataset: &Dataset, jitter: JitterPolicy) -> Result<GramFactor> {
    factorize(&assemble_gram(kernel, dataset.design())?, jitter)
}

fn lml_from_factor(factor: &GramFactor, f: &[f64]) -> Result<(f64, Vec<f64>)> {
    let alpha = factor.solve_vec(f)?;
    let quad: f64 = f.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    let n = f.len() as f64;
    Ok((-0.5 * quad - 0.5 * factor.log_det() - 0.5 * n * LN_2PI, alpha))
}

/// `log p(f(X) | X, θ)`, or `-∞` when `θ` does not describe a valid kernel
/// or the Gram matrix cannot be factorized at any jitter level.
pub fn log_marginal(template: &OutputKernel, theta: &[f64], dataset: &Dataset, jitter: JitterPolicy) -> Result<f64> {
    if theta.len() != template.hyper_count() {
        return Err(Error::SchemaMismatch(format!(
            "expected {} hyperparameters, got {}",
            template.hyper_count(),
            theta.len()
        )));
    }
    let Ok(kernel) = template.unpack_hypers(theta) else {
        return Ok(f64::NEG_INFINITY);
    };
    kernel.check_design(dataset.design())?;
    match dense_factor(&kernel, dataset, jitter) {
        Ok(factor) => Ok(lml_from_factor(&factor, dataset.values())?.0),
        Err(Error::NotPositiveDefinite { .. }) => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e),
    }
}

/// Value and analytic gradient
/// `∂/∂θ_k = ½ tr((ααᵀ − C⁻¹) ∂C/∂θ_k)`, `α = C⁻¹ f`, at the jitter level
/// chosen for `θ` (the jitter itself is held fixed when differentiating).
pub fn grad_log_marginal(
    template: &OutputKernel,
    theta: &[f64],
    dataset: &Dataset,
    jitter: JitterPolicy,
) -> Result<Option<LmlGradient>> {
    let value = log_marginal(template, theta, dataset, jitter)?;
    if !value.is_finite() {
        return Ok(None);
    }
    let kernel = template.unpack_hypers(theta)?;
    let factor = dense_factor(&kernel, dataset, jitter)?;
    let (value, alpha) = lml_from_factor(&factor, dataset.values())?;
    let inv = factor.inverse();
    let design = dataset.design();
    let flat: Vec<(usize, &Point)> = design.iter_flat().collect();
    let p = design.dim();
    let ev = GradientEvaluator::new(&kernel);
    let mut grad = vec![0.0; ev.len()];
    let mut g = vec![0.0; ev.len()];
    for i in 0..flat.len() {
        for j in 0..=i {
            let w = alpha[i] * alpha[j] - inv[(i, j)];
            let w = if i == j { 0.5 * w } else { w };
            ev.entry_grad(flat[i].0, flat[j].0, flat[i].1.sq_dist(flat[j].1), p, &mut g);
            for (acc, gk) in grad.iter_mut().zip(&g) {
                *acc += w * gk;
            }
        }
    }
    Ok(Some(LmlGradient {
        value,
        gradient: grad,
        method: GradientMethod::Analytic,
        jitter: factor.jitter(),
    }))
}

/// Central differences with step `1e-6 (1 + |θ_k|)`.
pub fn grad_log_marginal_fd(
    template: &OutputKernel,
    theta: &[f64],
    dataset: &Dataset,
    jitter: JitterPolicy,
) -> Result<Option<LmlGradient>> {
    let value = log_marginal(template, theta, dataset, jitter)?;
    if !value.is_finite() {
        return Ok(None);
    }
    let mut gradient = Vec::with_capacity(theta.len());
    for k in 0..theta.len() {
        let h = 1e-6 * (1.0 + theta[k].abs());
        let mut tp = theta.to_vec();
        tp[k] += h;
        let mut tm = theta.to_vec();
        tm[k] -= h;
        let fp = log_marginal(template, &tp, dataset, jitter)?;
        let fm = log_marginal(template, &tm, dataset, jitter)?;
        gradient.push((fp - fm) / (2.0 * h));
    }
    Ok(Some(LmlGradient {
        value,
        gradient,
        method: GradientMethod::FiniteDifference,
        jitter: f64::NAN,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub restarts: usize,
    pub max_iters: usize,
    pub initial_step: f64,
    pub shrink: f64,
    /// Armijo constant for the sufficient-increase test.
    pub sufficient_increase: f64,
    /// Stop when the projected gradient's max-norm falls below this.
    pub grad_tol: f64,
    /// Box in log-space that positive hyperparameters are projected onto.
    pub log_bounds: (f64, f64),
    /// Bound on unconstrained coordinates (LMC factors, Cholesky off-diagonals).
    pub free_bound: f64,
    /// Per-coordinate init ranges; when absent they come from data heuristics.
    pub init_ranges: Option<Vec<(f64, f64)>>,
    /// Coordinates held at their template value.
    pub fixed: Vec<usize>,
    /// Whether restart 0 starts from the template itself.
    pub start_from_template: bool,
    pub seed: u64,
    pub jitter: JitterPolicy,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            restarts: 10,
            max_iters: 200,
            initial_step: 0.5,
            shrink: 0.5,
            sufficient_increase: 1e-4,
            grad_tol: 1e-5,
            log_bounds: (-12.0, 12.0),
            free_bound: 1e3,
            init_ranges: None,
            fixed: Vec::new(),
            start_from_template: true,
            seed: 0,
            jitter: JitterPolicy::Ladder,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if self.restarts == 0 || self.max_iters == 0 {
            return Err(Error::invalid("restarts and max_iters must be at least 1"));
        }
        if !pos(self.initial_step) || !pos(self.grad_tol) || !pos(self.free_bound) {
            return Err(Error::invalid("optimizer step, tolerance and bounds must be positive"));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) || !(self.sufficient_increase > 0.0 && self.sufficient_increase < 1.0) {
            return Err(Error::invalid("shrink and sufficient_increase must lie in (0, 1)"));
        }
        if !(self.log_bounds.0 < self.log_bounds.1) {
            return Err(Error::invalid("log_bounds must be increasing"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartTrace {
    pub start: Vec<f64>,
    pub theta: Vec<f64>,
    pub lml: f64,
    /// Accepted objective values, one per iteration.
    pub lml_trace: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub kernel: OutputKernel,
    pub theta: HyperVector,
    pub lml: f64,
    pub best_restart: usize,
    pub restarts: Vec<RestartTrace>,
}

fn is_log_coordinate(name: &str) -> bool {
    name.rsplit('.').next().unwrap_or(name).starts_with("log_")
}

fn pairwise_distance_range(dataset: &Dataset) -> (f64, f64) {
    let pts: Vec<&Point> = dataset.design().iter_flat().map(|(_, x)| x).collect();
    let mut dists: Vec<f64> = Vec::new();
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            let d = a.dist(b);
            if d > 0.0 {
                dists.push(d);
            }
        }
    }
    if dists.is_empty() {
        return (0.1, 1.0);
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |t: f64| dists[((dists.len() - 1) as f64 * t).round() as usize];
    (q(0.05), q(0.95))
}

/// Log-space initialization ranges: lengthscales and widths from pairwise
/// distance quantiles, amplitudes around the data scale, everything else
/// within a unit neighborhood of the template.
pub fn default_init_ranges(template: &OutputKernel, dataset: &Dataset) -> Vec<(f64, f64)> {
    let (dlo, dhi) = pairwise_distance_range(dataset);
    let vals = dataset.values();
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let sd = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64)
        .sqrt()
        .max(1e-8);
    let theta = template.pack_hypers();
    theta
        .names
        .iter()
        .zip(&theta.values)
        .map(|(name, v)| {
            let leaf = name.rsplit('.').next().unwrap_or(name);
            if leaf.contains("lengthscale") || leaf.contains("width") {
                (dlo.ln(), dhi.ln())
            } else if leaf.starts_with("log_amplitude") {
                (sd.ln() - 1.0, sd.ln() + 1.0)
            } else if leaf.starts_with("log_latent_amplitude") || leaf.starts_with("log_blur_amplitude") {
                // Three amplitudes multiply, so spread the data scale over them.
                (sd.ln() / 3.0 - 1.0, sd.ln() / 3.0 + 1.0)
            } else if leaf.starts_with("factor") {
                (-sd, sd)
            } else {
                (v - 1.0, v + 1.0)
            }
        })
        .collect()
}

struct Objective<'a> {
    template: &'a OutputKernel,
    dataset: &'a Dataset,
    config: &'a OptimizerConfig,
    lower: Vec<f64>,
    upper: Vec<f64>,
    free: Vec<bool>,
}

impl Objective<'_> {
    fn project(&self, theta: &mut [f64]) {
        for (k, t) in theta.iter_mut().enumerate() {
            *t = t.clamp(self.lower[k], self.upper[k]);
        }
    }

    fn eval(&self, theta: &[f64]) -> Result<Option<(f64, Vec<f64>)>> {
        Ok(grad_log_marginal(self.template, theta, self.dataset, self.config.jitter)?.map(|g| {
            let grad = g
                .gradient
                .iter()
                .zip(&self.free)
                .map(|(v, f)| if *f { *v } else { 0.0 })
                .collect();
            (g.value, grad)
        }))
    }

    /// Gradient with components pushing against active bounds removed.
    fn projected_norm(&self, theta: &[f64], grad: &[f64]) -> f64 {
        theta
            .iter()
            .zip(grad)
            .enumerate()
            .map(|(k, (t, g))| {
                let blocked = (*t >= self.upper[k] && *g > 0.0) || (*t <= self.lower[k] && *g < 0.0);
                if blocked {
                    0.0
                } else {
                    g.abs()
                }
            })
            .fold(0.0, f64::max)
    }

    fn ascend(&self, start: Vec<f64>) -> Result<RestartTrace> {
        let cfg = self.config;
        let mut theta = start.clone();
        self.project(&mut theta);
        let Some((mut value, mut grad)) = self.eval(&theta)? else {
            return Ok(RestartTrace {
                start,
                theta,
                lml: f64::NEG_INFINITY,
                lml_trace: Vec::new(),
                converged: false,
            });
        };
        let mut trace = vec![value];
        let mut step = cfg.initial_step;
        let mut converged = false;
        for _ in 0..cfg.max_iters {
            if self.projected_norm(&theta, &grad) < cfg.grad_tol {
                converged = true;
                break;
            }
            let gnorm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            let mut accepted = None;
            let mut t = step;
            while t > 1e-14 {
                let mut cand: Vec<f64> = theta.iter().zip(&grad).map(|(x, g)| x + t * g / gnorm).collect();
                self.project(&mut cand);
                let moved: f64 = cand.iter().zip(&theta).zip(&grad).map(|((c, x), g)| g * (c - x)).sum();
                if moved <= 0.0 {
                    break;
                }
                if let Some((v, g)) = self.eval(&cand)? {
                    if v >= value + cfg.sufficient_increase * moved {
                        accepted = Some((cand, v, g));
                        break;
                    }
                }
                t *= cfg.shrink;
            }
            match accepted {
                Some((cand, v, g)) => {
                    let gain = v - value;
                    theta = cand;
                    value = v;
                    grad = g;
                    trace.push(value);
                    step = (t / cfg.shrink).min(4.0);
                    if gain.abs() < 1e-12 * (1.0 + value.abs()) {
                        converged = true;
                        break;
                    }
                }
                None => {
                    converged = self.projected_norm(&theta, &grad) < cfg.grad_tol;
                    break;
                }
            }
        }
        Ok(RestartTrace {
            start,
            theta,
            lml: value,
            lml_trace: trace,
            converged,
        })
    }
}

/// Multi-start projected gradient ascent on the log marginal likelihood.
///
/// Restart `r` draws its start from stream `r` of the seed, so runs with
/// more restarts explore a superset of starts. The best restart wins, ties
/// going to the lowest index.
pub fn optimize(template: &OutputKernel, dataset: &Dataset, config: &OptimizerConfig) -> Result<OptimizeResult> {
    config.validate()?;
    template.check_design(dataset.design())?;
    let theta0 = template.pack_hypers();
    let l = theta0.len();
    let ranges = match &config.init_ranges {
        Some(r) if r.len() == l => r.clone(),
        Some(r) => {
            return Err(Error::SchemaMismatch(format!("{} init ranges for {l} hyperparameters", r.len())));
        }
        None => default_init_ranges(template, dataset),
    };
    let mut lower = Vec::with_capacity(l);
    let mut upper = Vec::with_capacity(l);
    for (k, name) in theta0.names.iter().enumerate() {
        if config.fixed.contains(&k) {
            lower.push(theta0.values[k]);
            upper.push(theta0.values[k]);
        } else if is_log_coordinate(name) {
            lower.push(config.log_bounds.0);
            upper.push(config.log_bounds.1);
        } else {
            lower.push(-config.free_bound);
            upper.push(config.free_bound);
        }
    }
    if config.fixed.iter().any(|k| *k >= l) {
        return Err(Error::SchemaMismatch("fixed index out of range".into()));
    }
    let obj = Objective {
        template,
        dataset,
        config,
        lower,
        upper,
        free: (0..l).map(|k| !config.fixed.contains(&k)).collect(),
    };
    let root = SeededRng::new(config.seed);
    let starts: Vec<Vec<f64>> = (0..config.restarts)
        .map(|r| {
            if r == 0 && config.start_from_template {
                return theta0.values.clone();
            }
            let mut rng = root.stream(r as u64);
            (0..l)
                .map(|k| {
                    if !obj.free[k] {
                        theta0.values[k]
                    } else {
                        let (a, b) = ranges[k];
                        a + (b - a) * rng.random::<f64>()
                    }
                })
                .collect()
        })
        .collect();

    #[cfg(feature = "parallel")]
    let traces: Vec<RestartTrace> = {
        use rayon::prelude::*;
        starts
            .into_par_iter()
            .map(|s| obj.ascend(s))
            .collect::<Result<Vec<_>>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let traces: Vec<RestartTrace> = starts.into_iter().map(|s| obj.ascend(s)).collect::<Result<Vec<_>>>()?;

    let mut best: Option<usize> = None;
    for (r, t) in traces.iter().enumerate() {
        if t.lml.is_finite() && best.is_none_or(|b| t.lml > traces[b].lml) {
            best = Some(r);
        }
    }
    let best = best.ok_or(Error::OptimizationFailed)?;
    let theta = HyperVector {
        names: theta0.names,
        values: traces[best].theta.clone(),
    };
    Ok(OptimizeResult {
        kernel: template.unpack_hypers(&theta.values)?,
        lml: traces[best].lml,
        theta,
        best_restart: best,
        restarts: traces,
    })
}

/// Dense reference value of the log marginal likelihood via an explicit
/// inverse and determinant. Only for tests and diagnostics.
pub fn log_marginal_naive(kernel: &OutputKernel, dataset: &Dataset) -> Result<f64> {
    let g = assemble_gram(kernel, dataset.design())?;
    let f = DMatrix::from_column_slice(dataset.values().len(), 1, dataset.values());
    let inv = g.clone().try_inverse().ok_or(Error::NotPositiveDefinite { min_eigenvalue: 0.0 })?;
    let quad = (f.transpose() * inv * &f)[(0, 0)];
    let n = f.nrows() as f64;
    Ok(-0.5 * quad - 0.5 * g.determinant().ln() - 0.5 * n * LN_2PI)
}
