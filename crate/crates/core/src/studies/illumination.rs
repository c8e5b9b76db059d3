use serde::{Deserialize, Serialize};

use super::{par_map, timed, Metric, Record, ReferenceIntegral, ReferenceMethod, StudyReport};
use crate::domain::{Dataset, Design, Measure, SeededRng};
use crate::error::{Error, Result};
use crate::kernels::{OutputKernel, ScalarKernel};
use crate::linalg::JitterPolicy;
use crate::posterior::{BQModel, FitOptions};
use crate::testbeds::{camera_covariance, IlluminationScene};

fn default_scene() -> IlluminationScene {
    IlluminationScene::standard(5).expect("standard scene is valid")
}

fn default_counts() -> Vec<usize> {
    vec![1, 2, 5]
}

fn default_schedule() -> Vec<usize> {
    vec![16, 32, 64, 128, 256, 512]
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn yes() -> bool {
    true
}

fn default_reference_nodes() -> usize {
    96
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IlluminationConfig {
    #[serde(default = "default_scene")]
    pub scene: IlluminationScene,
    /// Numbers of outputs `D`; model `D` uses the first `D` cameras.
    #[serde(default = "default_counts")]
    pub output_counts: Vec<usize>,
    #[serde(default = "default_schedule")]
    pub schedule: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Channels to integrate; all of them when absent.
    #[serde(default)]
    pub channels: Option<Vec<usize>>,
    #[serde(default = "yes")]
    pub monte_carlo: bool,
    #[serde(default)]
    pub jitter: JitterPolicy,
    /// Gauss–Legendre nodes in the polar direction for reference integrals.
    #[serde(default = "default_reference_nodes")]
    pub reference_nodes: usize,
}

impl Default for IlluminationConfig {
    fn default() -> Self {
        IlluminationConfig {
            scene: default_scene(),
            output_counts: default_counts(),
            schedule: default_schedule(),
            seeds: default_seeds(),
            channels: None,
            monte_carlo: true,
            jitter: JitterPolicy::default(),
            reference_nodes: default_reference_nodes(),
        }
    }
}

impl IlluminationConfig {
    pub fn channels(&self) -> Vec<usize> {
        self.channels.clone().unwrap_or_else(|| (0..self.scene.environment.channels()).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.scene;
        s.environment.validate()?;
        if s.cameras.is_empty() || s.cameras.iter().any(|c| c.dim() != 3 || !c.is_unit()) || !s.normal.is_unit() {
            return Err(Error::Domain("cameras and normal must be unit 3-vectors".into()));
        }
        if self.output_counts.is_empty() || self.output_counts.iter().any(|d| *d == 0 || *d > s.cameras.len()) {
            return Err(Error::invalid(format!("output counts must lie in 1..={}", s.cameras.len())));
        }
        if self.schedule.is_empty() || self.schedule.iter().any(|n| *n < 2) || self.seeds.is_empty() {
            return Err(Error::invalid("schedule needs sizes of at least 2 and at least one seed"));
        }
        if self.channels().iter().any(|c| *c >= s.environment.channels()) {
            return Err(Error::invalid("channel out of range"));
        }
        if self.reference_nodes < 8 {
            return Err(Error::invalid("reference_nodes must be at least 8"));
        }
        Ok(())
    }
}

/// Points for output `d`, seed `seed`: the same whatever `D` is, so the
/// designs of smaller models are nested in those of larger ones.
fn output_points(d: usize, n: usize, seed: u64) -> Result<Vec<crate::domain::Point>> {
    Measure::UniformSphere.sample(n, &mut SeededRng::new(seed).stream(d as u64))
}

/// Separable BQ with `B_ij = exp(ω_i·ω_j − 1)` and the Sobolev kernel on the
/// sphere, for each `D`, plus the Monte Carlo mean of each output's points.
pub fn illumination_study(cfg: &IlluminationConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let scene = &cfg.scene;
    let channels = cfg.channels();
    let max_d = *cfg.output_counts.iter().max().unwrap();
    let mut report = StudyReport::new(
        "illumination",
        cfg.seeds[0],
        serde_json::to_value(cfg).map_err(|e| Error::invalid(e.to_string()))?,
    );

    // refs[channel][camera]
    let n_ref = cfg.reference_nodes;
    let mut refs = vec![vec![0.0; max_d]; scene.environment.channels()];
    for &ch in &channels {
        for cam in 0..max_d {
            let coarse = scene.reference_integral(ch, cam, n_ref, 4 * n_ref);
            let fine = scene.reference_integral(ch, cam, 2 * n_ref, 8 * n_ref);
            refs[ch][cam] = fine;
            report.references.push((
                format!("channel {ch} camera {cam}"),
                ReferenceIntegral {
                    value: fine,
                    method: ReferenceMethod::Quadrature,
                    accuracy: (fine - coarse).abs(),
                },
            ));
        }
    }

    let kernels = cfg
        .output_counts
        .iter()
        .map(|&d| OutputKernel::separable(camera_covariance(&scene.cameras[..d]), ScalarKernel::SphereSobolev32))
        .collect::<Result<Vec<_>>>()?;
    for (k, d) in kernels.iter().zip(&cfg.output_counts) {
        report.hypers.push(super::HyperRecord {
            method: format!("bq[D={d}]"),
            seed: cfg.seeds[0],
            lml: None,
            hypers: k.pack_hypers(),
        });
    }

    let cells: Vec<(usize, usize, u64)> = (0..cfg.output_counts.len())
        .flat_map(|k| cfg.schedule.iter().flat_map(move |n| cfg.seeds.iter().map(move |s| (k, *n, *s))))
        .collect();
    let opts = FitOptions {
        jitter: cfg.jitter,
        ..Default::default()
    };
    let results = par_map(&cells, |&(k, n, seed)| -> Result<Vec<Record>> {
        let outputs = cfg.output_counts[k];
        let design = Design::new((0..outputs).map(|d| output_points(d, n, seed)).collect::<Result<_>>()?)?;
        let (model, wall_ms) = timed(|| BQModel::fit_design(&kernels[k], &Measure::UniformSphere, &design, opts));
        let model = model?;
        let mut out = Vec::new();
        for &ch in &channels {
            let data = Dataset::from_fn(design.clone(), |d, x| scene.integrand_unchecked(ch, d, x));
            let post = model.integral_posterior(&data)?;
            for d in 0..outputs {
                out.push(Record {
                    study: "illumination".into(),
                    method: "bq".into(),
                    outputs,
                    output: d,
                    channel: Some(ch),
                    n,
                    seed,
                    abs_error: (post.mean[d] - refs[ch][d]).abs(),
                    variance: post.cov[(d, d)],
                    wce: Some(post.cov[(d, d)].max(0.0).sqrt()),
                    eta: post.jitter_used,
                    wall_ms,
                });
            }
        }
        Ok(out)
    });
    for r in results {
        report.records.extend(r?);
    }

    if cfg.monte_carlo {
        for &n in &cfg.schedule {
            for &seed in &cfg.seeds {
                for d in 0..max_d {
                    let pts = output_points(d, n, seed)?;
                    for &ch in &channels {
                        let vals: Vec<f64> = pts.iter().map(|x| scene.integrand_unchecked(ch, d, x)).collect();
                        let mean = vals.iter().sum::<f64>() / n as f64;
                        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
                        report.records.push(Record {
                            study: "illumination".into(),
                            method: "mc".into(),
                            outputs: 1,
                            output: d,
                            channel: Some(ch),
                            n,
                            seed,
                            abs_error: (mean - refs[ch][d]).abs(),
                            variance: var / n as f64,
                            wce: None,
                            eta: 0.0,
                            wall_ms: 0.0,
                        });
                    }
                }
            }
        }
    }
    report.fit_slopes(&[Metric::Wce, Metric::AbsError])?;
    Ok(report)
}
