use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{par_map, reference_integral, timed, HyperRecord, Record, ReferenceIntegral, StudyReport};
use crate::domain::{Dataset, Design, Measure, Point};
use crate::error::{Error, Result};
use crate::hyper::{optimize, OptimizerConfig};
use crate::kernels::{OutputKernel, ProcessConvolution, ScalarKernel};
use crate::posterior::{BQModel, FitOptions};
use crate::testbeds::{Fidelity, MultiFidelityProblem, ProblemKind};

/// Reference absolute errors of uni-output BQ on the high-fidelity targets.
pub const REFERENCE_HIGH_FIDELITY_BQ_ERROR: [(ProblemKind, f64); 3] =
    [(ProblemKind::Step, 0.41), (ProblemKind::Forrester, 3.96), (ProblemKind::AllenCahn, 0.211)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiFidelityMethod {
    /// One uni-output model per fidelity, on that fidelity's points only.
    Bq,
    Lmc,
    Pc,
}

impl MultiFidelityMethod {
    pub fn name(self) -> &'static str {
        match self {
            MultiFidelityMethod::Bq => "bq",
            MultiFidelityMethod::Lmc => "lmc",
            MultiFidelityMethod::Pc => "pc",
        }
    }
}

fn all_methods() -> Vec<MultiFidelityMethod> {
    vec![MultiFidelityMethod::Bq, MultiFidelityMethod::Lmc, MultiFidelityMethod::Pc]
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

fn two() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiFidelityConfig {
    pub problem: ProblemKind,
    #[serde(default = "all_methods")]
    pub methods: Vec<MultiFidelityMethod>,
    /// Optimizer seeds; each one is a full independent run.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default = "two")]
    pub lmc_rank: usize,
    #[serde(default = "two")]
    pub pc_latents: usize,
}

impl MultiFidelityConfig {
    pub fn new(problem: ProblemKind) -> Self {
        MultiFidelityConfig {
            problem,
            methods: all_methods(),
            seeds: default_seeds(),
            optimizer: OptimizerConfig::default(),
            lmc_rank: 2,
            pc_latents: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.methods.is_empty() || self.seeds.is_empty() {
            return Err(Error::invalid("multi-fidelity study needs methods and seeds"));
        }
        if self.lmc_rank == 0 || self.pc_latents == 0 {
            return Err(Error::invalid("ranks must be positive"));
        }
        Ok(())
    }
}

const FIDELITIES: [Fidelity; 2] = [Fidelity::High, Fidelity::Low];

fn templates(cfg: &MultiFidelityConfig, method: MultiFidelityMethod, length: f64) -> Result<OutputKernel> {
    let base = ScalarKernel::se(1.0, 0.2 * length)?;
    match method {
        MultiFidelityMethod::Bq => OutputKernel::single(base),
        MultiFidelityMethod::Lmc => {
            let r = cfg.lmc_rank;
            let factors = DMatrix::from_fn(r, 2, |i, d| if i == d { 1.0 } else { 0.5 });
            OutputKernel::lmc(factors, Some(vec![0.1, 0.1]), base)
        }
        MultiFidelityMethod::Pc => {
            let r = cfg.pc_latents;
            OutputKernel::process_convolution(ProcessConvolution {
                blur_amplitudes: DMatrix::from_element(r, 2, 1.0),
                blur_widths: DMatrix::from_fn(r, 2, |i, _| 0.05 * length * (i + 1) as f64),
                latent_amplitudes: vec![1.0; r],
                latent_widths: (0..r).map(|i| 0.1 * length * (i + 1) as f64).collect(),
                independent: None,
            })
        }
    }
}

struct Cell {
    method: MultiFidelityMethod,
    seed: u64,
}

/// Absolute error and posterior variance per fidelity for uni-output BQ and
/// the two multi-output kernels, all with hyperparameters chosen by
/// maximizing the marginal likelihood.
pub fn multifidelity_study(cfg: &MultiFidelityConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let problem = MultiFidelityProblem::new(cfg.problem)?;
    let (a, b) = problem.domain;
    let measure = Measure::interval(a, b)?;
    let mut report = StudyReport::new(
        &format!("multifidelity_{}", cfg.problem.name()),
        cfg.seeds[0],
        serde_json::to_value(cfg).map_err(|e| Error::invalid(e.to_string()))?,
    );

    let refs = FIDELITIES
        .iter()
        .map(|&fid| match problem.exact_mean(fid) {
            Some(v) => Ok(ReferenceIntegral::exact(v)),
            None => reference_integral(|x| problem.eval(x.coords()[0], fid).unwrap(), &measure, 1e-13, &problem.breaks()),
        })
        .collect::<Result<Vec<_>>>()?;
    for (fid, r) in FIDELITIES.iter().zip(&refs) {
        report.references.push((format!("{fid:?}").to_lowercase(), *r));
    }

    let eval = |d: usize, x: &Point| problem.eval(x.coords()[0], FIDELITIES[d]).expect("design inside domain");
    let full = problem.design()?;
    let cells: Vec<Cell> = cfg
        .methods
        .iter()
        .flat_map(|m| cfg.seeds.iter().map(move |s| Cell { method: *m, seed: *s }))
        .collect();

    let results = par_map(&cells, |cell| -> Result<(Vec<Record>, Vec<HyperRecord>)> {
        let mut opt = cfg.optimizer.clone();
        opt.seed = cell.seed;
        let template = templates(cfg, cell.method, b - a)?;
        // Uni-output BQ fits one model per fidelity on its own points.
        let problems: Vec<(Vec<usize>, Dataset)> = match cell.method {
            MultiFidelityMethod::Bq => (0..2)
                .map(|d| {
                    let design = Design::new(vec![full.points(d).to_vec()])?;
                    Ok((vec![d], Dataset::from_fn(design, |_, x| eval(d, x))))
                })
                .collect::<Result<_>>()?,
            _ => vec![(vec![0, 1], Dataset::from_fn(full.clone(), eval))],
        };
        let mut records = Vec::new();
        let mut hypers = Vec::new();
        for (outputs, data) in problems {
            let (fit, wall_ms) = timed(|| -> Result<_> {
                let best = optimize(&template, &data, &opt)?;
                let model = BQModel::fit(&best.kernel, &measure, &data, FitOptions { jitter: opt.jitter, ..Default::default() })?;
                let post = model.integral_posterior(&data)?;
                Ok((best, post))
            });
            let (best, post) = fit?;
            let label = if outputs.len() == 1 {
                format!("{}[{}]", cell.method.name(), format!("{:?}", FIDELITIES[outputs[0]]).to_lowercase())
            } else {
                cell.method.name().to_string()
            };
            hypers.push(HyperRecord {
                method: label,
                seed: cell.seed,
                lml: Some(best.lml),
                hypers: best.theta.clone(),
            });
            for (k, &d) in outputs.iter().enumerate() {
                records.push(Record {
                    study: report_name(cfg.problem),
                    method: cell.method.name().into(),
                    outputs: outputs.len(),
                    output: d,
                    channel: None,
                    n: data.design().points(k).len(),
                    seed: cell.seed,
                    abs_error: (post.mean[k] - refs[d].value).abs(),
                    variance: post.cov[(k, k)],
                    wce: Some(post.cov[(k, k)].max(0.0).sqrt()),
                    eta: post.jitter_used,
                    wall_ms,
                });
            }
        }
        Ok((records, hypers))
    });
    for r in results {
        let (records, hypers) = r?;
        report.records.extend(records);
        report.hypers.extend(hypers);
    }
    Ok(report)
}

fn report_name(kind: ProblemKind) -> String {
    format!("multifidelity_{}", kind.name())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_study_shapes() {
        let mut cfg = MultiFidelityConfig::new(ProblemKind::Step);
        cfg.seeds = vec![0];
        cfg.optimizer.restarts = 2;
        cfg.optimizer.max_iters = 30;
        let r = multifidelity_study(&cfg).unwrap();
        // bq: one record per fidelity; lmc and pc: two each.
        assert_eq!(r.records.len(), 6);
        assert_eq!(r.hypers.len(), 4);
        let bq_high = r.records.iter().find(|x| x.method == "bq" && x.output == 0).unwrap();
        assert_eq!(bq_high.n, 5);
        assert!(r.records.iter().all(|x| x.abs_error.is_finite() && x.variance >= 0.0));
        assert_eq!(r.references[0].1.value, 0.5);
    }
}
