//! Run configuration files.
//!
//! A config is one JSON document with a `schema_version` and a `study` tag;
//! the remaining fields belong to that study. Every field is checked before
//! any computation starts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use mobq::domain::{equidistant_grid, Dataset, Design, Measure, Point, SeededRng};
use mobq::hyper::OptimizerConfig;
use mobq::kernels::{IntegralPolicy, OutputKernel};
use mobq::linalg::JitterPolicy;
use mobq::studies::{ConvergenceConfig, IlluminationConfig, Integrand, MultiFidelityConfig};
use mobq::testbeds::{Fidelity, MultiFidelityProblem, ProblemKind};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug)]
pub enum ConfigError {
    Io(PathBuf, std::io::Error),
    Parse(String),
    Invalid(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Io(p, e) => write!(f, "cannot read {}: {e}", p.display()),
            ConfigError::Parse(m) => write!(f, "bad config: {m}"),
            ConfigError::Invalid(m) => write!(f, "invalid config: {m}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    Integrate,
    MultiFidelity,
    Illumination,
    Converge,
}

impl StudyKind {
    pub fn tag(self) -> &'static str {
        match self {
            StudyKind::Integrate => "integrate",
            StudyKind::MultiFidelity => "multifidelity",
            StudyKind::Illumination => "illumination",
            StudyKind::Converge => "converge",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "study", rename_all = "snake_case")]
pub enum RunConfig {
    Integrate(IntegrateConfig),
    #[serde(rename = "multifidelity")]
    MultiFidelity(MultiFidelityConfig),
    Illumination(IlluminationConfig),
    Converge(ConvergenceConfig),
}

impl RunConfig {
    pub fn kind(&self) -> StudyKind {
        match self {
            RunConfig::Integrate(_) => StudyKind::Integrate,
            RunConfig::MultiFidelity(_) => StudyKind::MultiFidelity,
            RunConfig::Illumination(_) => StudyKind::Illumination,
            RunConfig::Converge(_) => StudyKind::Converge,
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.to_path_buf(), e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut doc: Value = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let obj = doc
            .as_object_mut()
            .ok_or_else(|| ConfigError::Parse("top level must be an object".into()))?;
        match obj.remove("schema_version") {
            Some(Value::Number(n)) if n.as_u64() == Some(SCHEMA_VERSION) => {}
            Some(v) => return Err(ConfigError::Invalid(format!("unsupported schema_version {v}, expected {SCHEMA_VERSION}"))),
            None => return Err(ConfigError::Invalid("missing schema_version".into())),
        }
        let cfg: RunConfig = serde_json::from_value(doc).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let r = match self {
            RunConfig::Integrate(c) => return c.validate(),
            RunConfig::MultiFidelity(c) => c.validate(),
            RunConfig::Illumination(c) => c.validate(),
            RunConfig::Converge(c) => c.validate(),
        };
        r.map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Moves the config's seed list so it starts at `seed`, keeping its
    /// length.
    pub fn reseed(&mut self, seed: u64) {
        let shift = |seeds: &mut Vec<u64>| {
            let n = seeds.len().max(1) as u64;
            *seeds = (seed..seed + n).collect();
        };
        match self {
            RunConfig::Integrate(c) => c.seed = seed,
            RunConfig::MultiFidelity(c) => shift(&mut c.seeds),
            RunConfig::Illumination(c) => shift(&mut c.seeds),
            RunConfig::Converge(c) => shift(&mut c.seeds),
        }
    }
}

/// Where the evaluation points come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignSpec {
    /// One list of points per output.
    Points { points: Vec<Vec<Point>> },
    /// The same equidistant grid for every output (intervals only).
    Grid { n: usize },
    /// The same i.i.d. points for every output.
    SharedIid { n: usize },
    /// Independent i.i.d. points per output.
    Iid { n: usize },
    /// The fixed design that ships with a multi-fidelity testbed.
    Problem,
}

/// Where the function values come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ValuesSpec {
    /// One list of values per output, in design order.
    Values { values: Vec<Vec<f64>> },
    Integrand { integrand: Integrand },
    /// A multi-fidelity testbed; output 0 is the high fidelity.
    Problem { problem: ProblemKind },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrateConfig {
    pub kernel: OutputKernel,
    pub measure: Measure,
    pub design: DesignSpec,
    pub values: ValuesSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub integrals: IntegralPolicy,
    #[serde(default)]
    pub jitter: JitterPolicy,
    /// When present, hyperparameters are fitted by maximizing the marginal
    /// likelihood, starting from `kernel`.
    #[serde(default)]
    pub optimize: Option<OptimizerConfig>,
}

impl IntegrateConfig {
    pub fn problem(&self) -> Option<ProblemKind> {
        match self.values {
            ValuesSpec::Problem { problem } => Some(problem),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.measure.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let Some(o) = &self.optimize {
            o.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        let d = self.kernel.outputs();
        match &self.design {
            DesignSpec::Points { points } if points.len() != d => {
                return bad(format!("design has {} point sets but the kernel has {d} outputs", points.len()))
            }
            DesignSpec::Grid { n } | DesignSpec::SharedIid { n } | DesignSpec::Iid { n } if *n == 0 => {
                return bad("design size must be positive".into())
            }
            DesignSpec::Grid { .. } if self.measure.dim() != 1 || self.measure == Measure::UniformSphere => {
                return bad("grid designs need an interval measure".into())
            }
            DesignSpec::Problem if self.problem().is_none() => {
                return bad("a problem design needs problem values".into())
            }
            _ => {}
        }
        match &self.values {
            ValuesSpec::Values { values } if values.len() != d => {
                return bad(format!("values has {} blocks but the kernel has {d} outputs", values.len()))
            }
            ValuesSpec::Integrand { integrand } => {
                integrand.validate(&self.measure).map_err(|e| ConfigError::Invalid(e.to_string()))?
            }
            ValuesSpec::Problem { problem } => {
                let p = MultiFidelityProblem::new(*problem).map_err(|e| ConfigError::Invalid(e.to_string()))?;
                if d != 2 {
                    return bad(format!("multi-fidelity problems have 2 outputs, the kernel has {d}"));
                }
                if self.measure != Measure::interval(p.domain.0, p.domain.1).unwrap() {
                    return bad(format!("{} lives on [{}, {}]", problem.name(), p.domain.0, p.domain.1));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn build_design(&self) -> mobq::error::Result<Design> {
        let d = self.kernel.outputs();
        let root = SeededRng::new(self.seed);
        match &self.design {
            DesignSpec::Points { points } => Design::new(points.clone()),
            DesignSpec::Grid { n } => {
                let Measure::UniformBox { lower, upper } = &self.measure else {
                    unreachable!("validated")
                };
                Design::shared(equidistant_grid(*n, lower[0], upper[0])?, d)
            }
            DesignSpec::SharedIid { n } => Design::shared(self.measure.sample(*n, &mut root.stream(0))?, d),
            DesignSpec::Iid { n } => Design::new(
                (0..d)
                    .map(|o| self.measure.sample(*n, &mut root.stream(o as u64)))
                    .collect::<mobq::error::Result<_>>()?,
            ),
            DesignSpec::Problem => MultiFidelityProblem::new(self.problem().unwrap())?.design(),
        }
    }

    pub fn build_dataset(&self, design: Design) -> mobq::error::Result<Dataset> {
        match &self.values {
            ValuesSpec::Values { values } => Dataset::from_blocks(design, values.clone()),
            ValuesSpec::Integrand { integrand } => Ok(Dataset::from_fn(design, |d, x| integrand.eval(d, x))),
            ValuesSpec::Problem { problem } => {
                let p = MultiFidelityProblem::new(*problem)?;
                let fid = [Fidelity::High, Fidelity::Low];
                let mut err = None;
                let data = Dataset::from_fn(design, |d, x| {
                    p.eval(x.coords()[0], fid[d]).unwrap_or_else(|e| {
                        err.get_or_insert(e);
                        f64::NAN
                    })
                });
                match err {
                    Some(e) => Err(e),
                    None => Ok(data),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const STEP: &str = r#"{
        "schema_version": 1,
        "study": "integrate",
        "kernel": {"kind": "separable", "B": [1.0, 0.5, 0.5, 1.0],
                   "base": {"kind": "matern", "alpha": 2.5, "amplitude": 1.0, "lengthscale": 0.4}},
        "measure": {"kind": "uniform_box", "lower": [0.0], "upper": [2.0]},
        "design": {"kind": "problem"},
        "values": {"kind": "problem", "problem": "step"}
    }"#;

    #[test]
    fn parses_integrate_config() {
        let cfg = RunConfig::parse(STEP).unwrap();
        assert_eq!(cfg.kind(), StudyKind::Integrate);
    }

    #[test]
    fn rejects_wrong_schema_and_unknown_fields() {
        let v2 = STEP.replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(matches!(RunConfig::parse(&v2), Err(ConfigError::Invalid(_))));
        let extra = STEP.replace("\"study\": \"integrate\",", "\"study\": \"integrate\", \"colour\": 3,");
        assert!(matches!(RunConfig::parse(&extra), Err(ConfigError::Parse(_))));
        let none = STEP.replace("\"schema_version\": 1,", "");
        assert!(RunConfig::parse(&none).is_err());
    }

    #[test]
    fn rejects_output_count_mismatch() {
        let three = STEP.replace("[1.0, 0.5, 0.5, 1.0]", "[1.0, 0, 0, 0, 1.0, 0, 0, 0, 1.0]");
        assert!(matches!(RunConfig::parse(&three), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn reseed_keeps_seed_count() {
        let mut cfg = RunConfig::Converge(serde_json::from_str(
            r#"{"kernel": {"kind": "separable", "B": [1.0], "base": {"kind": "sphere_sobolev32"}},
                "measure": {"kind": "uniform_sphere"},
                "integrand": {"kind": "clamped", "direction": [0.0, 0.0, 1.0]},
                "design": "iid", "schedule": [8, 16], "seeds": [0, 1, 2]}"#,
        )
        .unwrap());
        cfg.reseed(10);
        match cfg {
            RunConfig::Converge(c) => assert_eq!(c.seeds, vec![10, 11, 12]),
            _ => unreachable!(),
        }
    }
}
