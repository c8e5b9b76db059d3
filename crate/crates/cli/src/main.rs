mod config;
mod integrate;
mod selftest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use config::{ConfigError, RunConfig, StudyKind};
use mobq::studies::{
    convergence_study, illumination_study, multifidelity_study, IlluminationConfig, Metric, MultiFidelityConfig,
    StudyReport,
};
use mobq::testbeds::ProblemKind;

#[derive(Parser)]
#[command(name = "mobq", version, about = "Multi-output Bayesian quadrature")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Joint posterior over the integrals of one dataset.
    Integrate(Common),
    /// Multi-fidelity comparison of single- and multi-output models.
    Multifidelity {
        #[command(flatten)]
        common: Common,
        /// Testbed to use when no config is given.
        #[arg(long, value_parser = parse_problem)]
        problem: Option<ProblemKind>,
    },
    /// Convergence study on the global illumination testbed.
    Illumination(Common),
    /// Convergence study for a given kernel, measure and integrand.
    Converge(Common),
    /// Quick numerical sanity checks.
    Selftest,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for the CSV and JSON outputs.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// First seed; the config's seed list keeps its length.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Record wall-clock times in the CSV (makes it nondeterministic).
    #[arg(long)]
    timings: bool,
}

fn parse_problem(s: &str) -> Result<ProblemKind, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown problem {s:?} (step, forrester, allen_cahn)"))
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<mobq::error::Error> for Failure {
    fn from(e: mobq::error::Error) -> Self {
        if e.is_usage() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Usage(format!("cannot write {}: {e}", path.display()))
}

fn load(common: &Common, expected: StudyKind, fallback: impl FnOnce() -> Option<RunConfig>) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => fallback().ok_or_else(|| Failure::Usage(format!("{} needs --config", expected.tag())))?,
    };
    if cfg.kind() != expected {
        return Err(Failure::Usage(format!(
            "config is for `{}`, not `{}`",
            cfg.kind().tag(),
            expected.tag()
        )));
    }
    if let Some(seed) = common.seed {
        cfg.reseed(seed);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Failure::Usage(format!("cannot start {threads} threads: {e}")))?;
    Ok(pool.install(f))
}

pub(crate) fn write_outputs(out: &Path, stem: &str, csv: &str, json: &serde_json::Value) -> Result<(), Failure> {
    std::fs::create_dir_all(out).map_err(|e| io_failure(out, e))?;
    let csv_path = out.join(format!("{stem}.csv"));
    std::fs::write(&csv_path, csv).map_err(|e| io_failure(&csv_path, e))?;
    let json_path = out.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(json).expect("report serializes");
    std::fs::write(&json_path, text + "\n").map_err(|e| io_failure(&json_path, e))?;
    info!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn summarize(report: &StudyReport) -> String {
    let metric = if report.study == "multifidelity" { Metric::AbsError } else { Metric::Wce };
    let mut worst: Option<(String, f64)> = None;
    for s in report.slopes.iter().filter(|s| s.metric == metric) {
        let label = format!("{} D={} d={}", s.method, s.outputs, s.output);
        if worst.as_ref().is_none_or(|(_, w)| s.fit.slope > *w) {
            worst = Some((label, s.fit.slope));
        }
    }
    match worst {
        Some((label, slope)) => format!(
            "{}: {} records, {} curves, shallowest {:?} slope {slope:.3} ({label})",
            report.study,
            report.records.len(),
            report.slopes.len(),
            metric
        ),
        None => format!("{}: {} records", report.study, report.records.len()),
    }
}

fn run_study(common: &Common, cfg: RunConfig) -> Result<(), Failure> {
    let report = with_threads(common.threads, || match &cfg {
        RunConfig::Converge(c) => convergence_study(c),
        RunConfig::Illumination(c) => illumination_study(c),
        RunConfig::MultiFidelity(c) => multifidelity_study(c),
        RunConfig::Integrate(_) => unreachable!("handled separately"),
    })??;
    write_outputs(&common.out, cfg.kind().tag(), &report.to_csv(common.timings), &report.summary_json())?;
    println!("{}", summarize(&report));
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Integrate(common) => {
            let cfg = load(&common, StudyKind::Integrate, || None)?;
            let RunConfig::Integrate(cfg) = cfg else { unreachable!() };
            with_threads(common.threads, || integrate::run(&cfg, &common.out, common.timings))?
        }
        Command::Multifidelity { common, problem } => {
            let cfg = load(&common, StudyKind::MultiFidelity, || {
                problem.map(|p| RunConfig::MultiFidelity(MultiFidelityConfig::new(p)))
            })?;
            if let (Some(p), RunConfig::MultiFidelity(c)) = (problem, &cfg) {
                if c.problem != p {
                    return Err(Failure::Usage(format!("--problem {} conflicts with the config", p.name())));
                }
            }
            run_study(&common, cfg)
        }
        Command::Illumination(common) => {
            let cfg = load(&common, StudyKind::Illumination, || {
                Some(RunConfig::Illumination(IlluminationConfig::default()))
            })?;
            run_study(&common, cfg)
        }
        Command::Converge(common) => {
            let cfg = load(&common, StudyKind::Converge, || None)?;
            run_study(&common, cfg)
        }
        Command::Selftest => selftest::run(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MOBQ_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(2)
        }
    }
}
