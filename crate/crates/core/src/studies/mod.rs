//! Experiment harness: reference integrals, log-log rate fits and the
//! convergence, multi-fidelity and illumination studies.

mod convergence;
mod illumination;
mod multifidelity;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::domain::{Measure, Point};
use crate::error::{Error, Result};
use crate::kernels::HyperVector;
use crate::quadrature::{adaptive, GaussLegendre};

pub use convergence::{convergence_study, ConvergenceConfig, DesignRule, Integrand};
pub use illumination::{illumination_study, IlluminationConfig};
pub use multifidelity::{multifidelity_study, MultiFidelityConfig, MultiFidelityMethod, REFERENCE_HIGH_FIDELITY_BQ_ERROR};

/// One `(method, D, d, channel, N, seed)` cell of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub study: String,
    pub method: String,
    /// Number of outputs `D` of the model that produced the record.
    pub outputs: usize,
    pub output: usize,
    pub channel: Option<usize>,
    pub n: usize,
    pub seed: u64,
    pub abs_error: f64,
    pub variance: f64,
    /// `None` for estimators without a worst-case error, such as Monte Carlo.
    pub wce: Option<f64>,
    pub eta: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Twice the standard error of the slope.
    pub half_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    AbsError,
    Wce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSlope {
    pub method: String,
    pub outputs: usize,
    pub output: usize,
    pub channel: Option<usize>,
    pub metric: Metric,
    #[serde(flatten)]
    pub fit: SlopeFit,
}

/// Hyperparameters that produced a group of records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperRecord {
    pub method: String,
    pub seed: u64,
    pub lml: Option<f64>,
    pub hypers: HyperVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub study: String,
    pub seed: u64,
    pub config: Value,
    pub records: Vec<Record>,
    pub slopes: Vec<CurveSlope>,
    pub hypers: Vec<HyperRecord>,
    pub references: Vec<(String, ReferenceIntegral)>,
}

pub const CSV_HEADER: &str = "study,method,D,d,channel,N,seed,abs_error,variance,wce,eta,wall_ms";

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

impl StudyReport {
    pub fn new(study: &str, seed: u64, config: Value) -> Self {
        StudyReport {
            study: study.to_string(),
            seed,
            config,
            records: Vec::new(),
            slopes: Vec::new(),
            hypers: Vec::new(),
            references: Vec::new(),
        }
    }

    /// CSV with 17 significant digits. With `timings == false` the wall
    /// clock column is written as 0 so that reruns are byte-identical.
    pub fn to_csv(&self, timings: bool) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.study,
                r.method,
                r.outputs,
                r.output,
                r.channel.map(|c| c.to_string()).unwrap_or_default(),
                r.n,
                r.seed,
                num(r.abs_error),
                num(r.variance),
                r.wce.map(num).unwrap_or_default(),
                num(r.eta),
                if timings { num(r.wall_ms) } else { num(0.0) },
            );
        }
        out
    }

    pub fn summary_json(&self) -> Value {
        json!({
            "study": self.study,
            "seed": self.seed,
            "config": self.config,
            "records": self.records.len(),
            "slopes": self.slopes,
            "hypers": self.hypers,
            "references": self.references.iter().map(|(k, r)| json!({"label": k, "reference": r})).collect::<Vec<_>>(),
        })
    }

    pub fn slope(&self, method: &str, outputs: usize, output: usize, metric: Metric) -> Option<&CurveSlope> {
        self.slopes
            .iter()
            .find(|s| s.method == method && s.outputs == outputs && s.output == output && s.metric == metric)
    }

    /// Median over seeds of `metric` for every `(method, D, d, channel)`
    /// curve, as `(N, median)` pairs sorted by `N`.
    pub fn median_curves(&self, metric: Metric) -> Vec<(CurveKey, Vec<(usize, f64)>)> {
        let mut keys: Vec<CurveKey> = Vec::new();
        for r in &self.records {
            let k = CurveKey::of(r);
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        keys.into_iter()
            .filter_map(|k| {
                let mut ns: Vec<usize> = self.records.iter().filter(|r| k.matches(r)).map(|r| r.n).collect();
                ns.sort_unstable();
                ns.dedup();
                let curve: Vec<(usize, f64)> = ns
                    .into_iter()
                    .filter_map(|n| {
                        let vals: Vec<f64> = self
                            .records
                            .iter()
                            .filter(|r| k.matches(r) && r.n == n)
                            .filter_map(|r| match metric {
                                Metric::AbsError => Some(r.abs_error),
                                Metric::Wce => r.wce,
                            })
                            .collect();
                        median(&vals).map(|m| (n, m))
                    })
                    .collect();
                (!curve.is_empty()).then_some((k, curve))
            })
            .collect()
    }

    /// Fits a slope to every median curve with at least four positive
    /// points. Zeros occur once a variance drops below the rounding floor
    /// and are left out of the fit.
    pub fn fit_slopes(&mut self, metrics: &[Metric]) -> Result<()> {
        for &metric in metrics {
            for (k, curve) in self.median_curves(metric) {
                let pairs: Vec<(f64, f64)> = curve.iter().filter(|(_, v)| *v > 0.0).map(|(n, v)| (*n as f64, *v)).collect();
                if pairs.len() < 4 {
                    continue;
                }
                let fit = fit_loglog_slope(&pairs)?;
                self.slopes.push(CurveSlope {
                    method: k.method,
                    outputs: k.outputs,
                    output: k.output,
                    channel: k.channel,
                    metric,
                    fit,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CurveKey {
    pub method: String,
    pub outputs: usize,
    pub output: usize,
    pub channel: Option<usize>,
}

impl CurveKey {
    fn of(r: &Record) -> Self {
        CurveKey {
            method: r.method.clone(),
            outputs: r.outputs,
            output: r.output,
            channel: r.channel,
        }
    }

    fn matches(&self, r: &Record) -> bool {
        self.method == r.method && self.outputs == r.outputs && self.output == r.output && self.channel == r.channel
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Least squares on `(ln N, ln v)`.
pub fn fit_loglog_slope(pairs: &[(f64, f64)]) -> Result<SlopeFit> {
    if pairs.len() < 4 {
        return Err(Error::InvalidData(format!("slope fit needs at least 4 pairs, got {}", pairs.len())));
    }
    if pairs.iter().any(|(n, v)| !(*n > 0.0 && *v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidData("slope fit needs positive finite values".into()));
    }
    let xs: Vec<f64> = pairs.iter().map(|(n, _)| n.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|(_, v)| v.ln()).collect();
    let m = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / m;
    let ybar = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidData("slope fit needs distinct N".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let se = (rss / (m - 2.0) / sxx).sqrt();
    Ok(SlopeFit {
        slope,
        intercept,
        half_width: 2.0 * se,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMethod {
    ClosedForm,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceIntegral {
    pub value: f64,
    pub method: ReferenceMethod,
    /// Change over the last refinement, or 0 for closed forms.
    pub accuracy: f64,
}

impl ReferenceIntegral {
    pub fn exact(value: f64) -> Self {
        ReferenceIntegral {
            value,
            method: ReferenceMethod::ClosedForm,
            accuracy: 0.0,
        }
    }
}

const SPHERE_MAX_NODES: usize = 4096;
const BOX_MAX_EVALS: usize = 1 << 22;

/// `Π[f]` by deterministic quadrature, refined by doubling until two
/// successive estimates agree to `tol`.
///
/// Intervals use adaptive composite Gauss–Legendre split at `breaks`;
/// higher-dimensional boxes a tensor Gauss–Legendre rule; the sphere a
/// Gauss–Legendre rule in `z` times a trapezoid rule in azimuth.
pub fn reference_integral(f: impl Fn(&Point) -> f64, measure: &Measure, tol: f64, breaks: &[f64]) -> Result<ReferenceIntegral> {
    measure.validate()?;
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    match measure {
        Measure::UniformBox { lower, upper } if lower.len() == 1 => {
            let (a, b) = (lower[0], upper[0]);
            let est = adaptive(a, b, breaks, tol * (b - a), |x| f(&Point::scalar(x))).map_err(|e| match e {
                Error::AccuracyNotMet { target, achieved, estimate } => Error::AccuracyNotMet {
                    target: target / (b - a),
                    achieved: achieved / (b - a),
                    estimate: estimate / (b - a),
                },
                e => e,
            })?;
            Ok(ReferenceIntegral {
                value: est.value / (b - a),
                method: ReferenceMethod::Quadrature,
                accuracy: est.change / (b - a),
            })
        }
        Measure::UniformBox { lower, upper } => {
            let p = lower.len();
            let tensor = |n: usize| -> f64 {
                let rule = GaussLegendre::cached(n);
                let axes: Vec<Vec<(f64, f64)>> = lower
                    .iter()
                    .zip(upper)
                    .map(|(a, b)| rule.on(*a, *b).map(|(x, w)| (x, w / (b - a))).collect())
                    .collect();
                let mut idx = vec![0usize; p];
                let mut total = 0.0;
                loop {
                    let w: f64 = (0..p).map(|k| axes[k][idx[k]].1).product();
                    let x = Point::new((0..p).map(|k| axes[k][idx[k]].0).collect()).unwrap();
                    total += w * f(&x);
                    let mut k = 0;
                    loop {
                        if k == p {
                            return total;
                        }
                        idx[k] += 1;
                        if idx[k] < n {
                            break;
                        }
                        idx[k] = 0;
                        k += 1;
                    }
                }
            };
            refine(8, tol, |n| n.pow(p as u32) <= BOX_MAX_EVALS, tensor)
        }
        Measure::UniformSphere => {
            let rule = |n: usize| -> f64 {
                let gl = GaussLegendre::cached(n);
                let m = 2 * n;
                let mut total = 0.0;
                for (z, w) in gl.on(-1.0, 1.0) {
                    let s = (1.0 - z * z).max(0.0).sqrt();
                    let ring: f64 = (0..m)
                        .map(|k| {
                            let (sp, cp) = (2.0 * std::f64::consts::PI * k as f64 / m as f64).sin_cos();
                            f(&Point::new(vec![s * cp, s * sp, z]).unwrap())
                        })
                        .sum();
                    total += w * ring / m as f64;
                }
                total / 2.0
            };
            refine(16, tol, |n| n <= SPHERE_MAX_NODES, rule)
        }
    }
}

/// Doubles `n` from `start` until successive values of `rule(n)` agree to `tol`.
fn refine(start: usize, tol: f64, affordable: impl Fn(usize) -> bool, rule: impl Fn(usize) -> f64) -> Result<ReferenceIntegral> {
    let mut n = start;
    let mut prev = rule(n);
    loop {
        n *= 2;
        let next = rule(n);
        let change = (next - prev).abs();
        if change < tol {
            return Ok(ReferenceIntegral {
                value: next,
                method: ReferenceMethod::Quadrature,
                accuracy: change,
            });
        }
        if !affordable(2 * n) {
            return Err(Error::AccuracyNotMet {
                target: tol,
                achieved: change,
                estimate: next,
            });
        }
        prev = next;
    }
}

#[cfg(not(target_arch = "wasm32"))]
pub(crate) fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = std::time::Instant::now();
    let out = f();
    (out, t.elapsed().as_secs_f64() * 1e3)
}

#[cfg(target_arch = "wasm32")]
pub(crate) fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    (f(), 0.0)
}

/// Ordered parallel map over independent study cells.
pub(crate) fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}
