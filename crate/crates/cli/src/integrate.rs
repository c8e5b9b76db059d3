use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde_json::json;

use crate::config::IntegrateConfig;
use crate::{write_outputs, Failure};
use mobq::hyper::optimize;
use mobq::posterior::{BQModel, FitOptions};

pub fn run(cfg: &IntegrateConfig, out: &Path, timings: bool) -> Result<(), Failure> {
    let start = Instant::now();
    let design = cfg.build_design()?;
    let data = cfg.build_dataset(design)?;

    let (kernel, fit) = match &cfg.optimize {
        Some(opt) => {
            let best = optimize(&cfg.kernel, &data, opt)?;
            log::info!("optimizer: lml {:.6} from restart {}", best.lml, best.best_restart);
            let fit = json!({ "lml": best.lml, "hypers": best.theta, "best_restart": best.best_restart });
            (best.kernel, Some(fit))
        }
        None => (cfg.kernel.clone(), None),
    };

    let opts = FitOptions {
        integrals: cfg.integrals,
        jitter: cfg.jitter,
    };
    let model = BQModel::fit(&kernel, &cfg.measure, &data, opts)?;
    let post = model.integral_posterior(&data)?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;

    let mut csv = String::from("output,N,mean,variance,wce");
    csv.push_str(if timings { ",wall_ms\n" } else { "\n" });
    for d in 0..post.outputs() {
        let n = data.design().points(d).len();
        let var = post.cov[(d, d)];
        let wce = post.worst_case_error(d)?;
        write!(csv, "{d},{n},{:.16e},{var:.16e},{wce:.16e}", post.mean[d]).unwrap();
        if timings {
            write!(csv, ",{wall_ms:.3}").unwrap();
        }
        csv.push('\n');
        println!("output {d}: {:.10} ± {:.3e}", post.mean[d], 2.0 * var.max(0.0).sqrt());
    }

    let cov: Vec<Vec<f64>> = (0..post.outputs()).map(|i| post.cov.row(i).iter().copied().collect()).collect();
    let summary = json!({
        "study": "integrate",
        "config": cfg,
        "kernel": kernel,
        "mean": post.mean.as_slice(),
        "cov": cov,
        "jitter": post.jitter_used,
        "kronecker": model.factor().is_kronecker(),
        "fit": fit,
    });
    write_outputs(out, "integrate", &csv, &summary)
}
