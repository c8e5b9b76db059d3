use serde::{Deserialize, Serialize};

use super::{par_map, reference_integral, timed, Metric, Record, ReferenceIntegral, StudyReport};
use crate::domain::{equidistant_grid, Dataset, Design, Measure, Point, SeededRng};
use crate::error::{Error, Result};
use crate::kernels::{IntegralPolicy, OutputKernel};
use crate::linalg::JitterPolicy;
use crate::posterior::{BQModel, FitOptions};

/// Integrand families for rate studies. Output `d` gets a documented
/// perturbation of a common shape so that outputs differ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Integrand {
    /// `f_d(x) = |x₁ − center| + d·x₁`. Its derivative jumps once, so it
    /// lies in the Sobolev spaces of order below 3/2 and no higher.
    Kink { center: f64 },
    /// `f_d(x) = cos((1 + d/10) · frequency · Σ_k x_k)`.
    Cosine { frequency: f64 },
    /// `f_d(x) = [x·μ]₊ + d·x₁` on the sphere.
    Clamped { direction: [f64; 3] },
}

impl Integrand {
    pub fn validate(&self, measure: &Measure) -> Result<()> {
        match self {
            Integrand::Kink { center } if !center.is_finite() => Err(Error::invalid("kink center must be finite")),
            Integrand::Cosine { frequency } if !frequency.is_finite() => Err(Error::invalid("frequency must be finite")),
            Integrand::Clamped { direction } => {
                if measure.dim() != 3 {
                    return Err(Error::invalid("clamped integrand needs a 3-dimensional domain"));
                }
                if direction.iter().map(|c| c * c).sum::<f64>() == 0.0 {
                    return Err(Error::invalid("clamp direction must be nonzero"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, d: usize, x: &Point) -> f64 {
        let c = x.coords();
        let d = d as f64;
        match self {
            Integrand::Kink { center } => (c[0] - center).abs() + d * c[0],
            Integrand::Cosine { frequency } => ((1.0 + d / 10.0) * frequency * c.iter().sum::<f64>()).cos(),
            Integrand::Clamped { direction } => {
                let n = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
                let dot: f64 = c.iter().zip(direction).map(|(a, b)| a * b).sum::<f64>() / n;
                dot.max(0.0) + d * c[0]
            }
        }
    }

    /// Closed-form `Π[f_d]` where one is available.
    pub fn exact(&self, measure: &Measure, d: usize) -> Option<f64> {
        let dd = d as f64;
        // E|t − c| for t uniform on [a, b].
        let abs_mean = |a: f64, b: f64, c: f64| {
            let v = if c <= a {
                ((b - c).powi(2) - (a - c).powi(2)) / 2.0
            } else if c >= b {
                ((c - a).powi(2) - (c - b).powi(2)) / 2.0
            } else {
                ((c - a).powi(2) + (b - c).powi(2)) / 2.0
            };
            v / (b - a)
        };
        match (self, measure) {
            (Integrand::Kink { center }, Measure::UniformBox { lower, upper }) => {
                Some(abs_mean(lower[0], upper[0], *center) + dd * 0.5 * (lower[0] + upper[0]))
            }
            // x₁ is uniform on [−1, 1] under the sphere measure.
            (Integrand::Kink { center }, Measure::UniformSphere) => Some(abs_mean(-1.0, 1.0, *center)),
            (Integrand::Cosine { frequency }, Measure::UniformBox { lower, upper }) => {
                let k = (1.0 + dd / 10.0) * frequency;
                if k == 0.0 {
                    return Some(1.0);
                }
                // Real part of Π_j (e^{ikb_j} − e^{ika_j}) / (ik(b_j − a_j)).
                let (mut re, mut im) = (1.0, 0.0);
                for (a, b) in lower.iter().zip(upper) {
                    let (sb, cb) = (k * b).sin_cos();
                    let (sa, ca) = (k * a).sin_cos();
                    let scale = k * (b - a);
                    // (cb − ca + i(sb − sa)) / (i scale)
                    let (fr, fi) = ((sb - sa) / scale, -(cb - ca) / scale);
                    (re, im) = (re * fr - im * fi, re * fi + im * fr);
                }
                Some(re)
            }
            (Integrand::Cosine { frequency }, Measure::UniformSphere) => {
                // Σx = √3 (x·u) with x·u uniform on [−1, 1].
                let k = (1.0 + dd / 10.0) * frequency * 3f64.sqrt();
                Some(if k == 0.0 { 1.0 } else { k.sin() / k })
            }
            (Integrand::Clamped { .. }, Measure::UniformSphere) => Some(0.25),
            _ => None,
        }
    }

    fn breaks(&self) -> Vec<f64> {
        match self {
            Integrand::Kink { center } => vec![*center],
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignRule {
    /// Equidistant points on an interval, shared by all outputs.
    Grid,
    /// One IID sample shared by all outputs.
    SharedIid,
    /// Independent IID samples per output.
    Iid,
}

fn default_label() -> String {
    "bq".into()
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_reference_tol() -> f64 {
    1e-13
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    #[serde(default = "default_label")]
    pub label: String,
    pub kernel: OutputKernel,
    pub measure: Measure,
    pub integrand: Integrand,
    pub design: DesignRule,
    pub schedule: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub integrals: IntegralPolicy,
    #[serde(default)]
    pub jitter: JitterPolicy,
    #[serde(default = "default_reference_tol")]
    pub reference_tol: f64,
}

impl ConvergenceConfig {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        self.measure.validate()?;
        self.integrand.validate(&self.measure)?;
        if self.schedule.is_empty() || self.schedule.iter().any(|n| *n < 2) {
            return Err(Error::invalid("schedule needs sizes of at least 2"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("at least one seed is required"));
        }
        if self.design == DesignRule::Grid && self.measure.dim() != 1 {
            return Err(Error::invalid("grid designs are only defined on intervals"));
        }
        Ok(())
    }

    fn design(&self, n: usize, seed: u64) -> Result<Design> {
        let outputs = self.kernel.outputs();
        match self.design {
            DesignRule::Grid => {
                let (a, b) = match &self.measure {
                    Measure::UniformBox { lower, upper } => (lower[0], upper[0]),
                    Measure::UniformSphere => unreachable!("validated"),
                };
                Design::shared(equidistant_grid(n, a, b)?, outputs)
            }
            DesignRule::SharedIid => {
                let pts = self.measure.sample(n, &mut SeededRng::new(seed).stream(0))?;
                Design::shared(pts, outputs)
            }
            DesignRule::Iid => {
                let root = SeededRng::new(seed);
                let sets = (0..outputs)
                    .map(|d| self.measure.sample(n, &mut root.stream(d as u64)))
                    .collect::<Result<Vec<_>>>()?;
                Design::new(sets)
            }
        }
    }
}

/// WCE and absolute error of the BQ rule per output over an `N` schedule.
/// Slopes are fitted to the median over seeds.
pub fn convergence_study(config: &ConvergenceConfig) -> Result<StudyReport> {
    config.validate()?;
    let outputs = config.kernel.outputs();
    let mut report = StudyReport::new(
        "converge",
        config.seeds[0],
        serde_json::to_value(config).map_err(|e| Error::invalid(e.to_string()))?,
    );

    let references = (0..outputs)
        .map(|d| match config.integrand.exact(&config.measure, d) {
            Some(v) => Ok(ReferenceIntegral::exact(v)),
            None => reference_integral(|x| config.integrand.eval(d, x), &config.measure, config.reference_tol, &config.integrand.breaks()),
        })
        .collect::<Result<Vec<_>>>()?;
    for (d, r) in references.iter().enumerate() {
        report.references.push((format!("output {d}"), *r));
    }

    // Grids do not depend on the seed.
    let seeds: &[u64] = if config.design == DesignRule::Grid { &config.seeds[..1] } else { &config.seeds };
    let cells: Vec<(usize, u64)> = config.schedule.iter().flat_map(|n| seeds.iter().map(move |s| (*n, *s))).collect();
    let opts = FitOptions {
        integrals: config.integrals,
        jitter: config.jitter,
    };
    let results = par_map(&cells, |&(n, seed)| -> Result<Vec<Record>> {
        let design = config.design(n, seed)?;
        let (model, wall_ms) = timed(|| BQModel::fit_design(&config.kernel, &config.measure, &design, opts));
        let model = model?;
        let data = Dataset::from_fn(design, |d, x| config.integrand.eval(d, x));
        let post = model.integral_posterior(&data)?;
        Ok((0..outputs)
            .map(|d| Record {
                study: "converge".into(),
                method: config.label.clone(),
                outputs,
                output: d,
                channel: None,
                n,
                seed,
                abs_error: (post.mean[d] - references[d].value).abs(),
                variance: post.cov[(d, d)],
                wce: Some(post.cov[(d, d)].max(0.0).sqrt()),
                eta: post.jitter_used,
                wall_ms,
            })
            .collect())
    });
    for r in results {
        report.records.extend(r?);
    }
    report.hypers.push(super::HyperRecord {
        method: config.label.clone(),
        seed: config.seeds[0],
        lml: None,
        hypers: config.kernel.pack_hypers(),
    });
    report.fit_slopes(&[Metric::Wce, Metric::AbsError])?;
    Ok(report)
}
