//! Flat, unconstrained hyperparameter vectors for [`OutputKernel`].
//!
//! Positive quantities are stored as logs. `B` of a separable kernel is
//! stored through its Cholesky factor `L` (row-major lower triangle, log on
//! the diagonal). LMC factors are unconstrained. The kernel value itself
//! acts as the schema: structural fields such as the Matérn order, `D` and
//! `R` are taken from it and only the numeric fields are replaced.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::output::{OutputKernel, ProcessConvolution};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl HyperVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl OutputKernel {
    pub fn hyper_count(&self) -> usize {
        match self {
            OutputKernel::Separable { b, base } => {
                let d = b.nrows();
                d * (d + 1) / 2 + base.hyper_count()
            }
            OutputKernel::Lmc { factors, nugget, base } => {
                factors.len() + nugget.as_ref().map_or(0, Vec::len) + base.hyper_count()
            }
            OutputKernel::ProcessConvolution(pc) => {
                let r = pc.latents();
                let d = pc.outputs();
                r * (2 + 2 * d)
                    + pc.independent.as_ref().map_or(0, |ks| ks.iter().map(|k| k.hyper_count()).sum())
            }
            OutputKernel::Sum(parts) => parts.iter().map(|k| k.hyper_count()).sum(),
        }
    }

    pub fn hyper_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_names("", &mut out);
        out
    }

    fn collect_names(&self, prefix: &str, out: &mut Vec<String>) {
        let base_names = |out: &mut Vec<String>, pre: String, k: &super::ScalarKernel| {
            out.extend(k.hyper_names().into_iter().map(|n| format!("{pre}{n}")));
        };
        match self {
            OutputKernel::Separable { b, base } => {
                for r in 0..b.nrows() {
                    for c in 0..=r {
                        if r == c {
                            out.push(format!("{prefix}log_chol_b[{r},{c}]"));
                        } else {
                            out.push(format!("{prefix}chol_b[{r},{c}]"));
                        }
                    }
                }
                base_names(out, format!("{prefix}base."), base);
            }
            OutputKernel::Lmc { factors, nugget, base } => {
                for i in 0..factors.nrows() {
                    for d in 0..factors.ncols() {
                        out.push(format!("{prefix}factor[{i},{d}]"));
                    }
                }
                if let Some(n) = nugget {
                    out.extend((0..n.len()).map(|d| format!("{prefix}log_nugget[{d}]")));
                }
                base_names(out, format!("{prefix}base."), base);
            }
            OutputKernel::ProcessConvolution(pc) => {
                for i in 0..pc.latents() {
                    out.push(format!("{prefix}log_latent_amplitude[{i}]"));
                    out.push(format!("{prefix}log_latent_width[{i}]"));
                    for d in 0..pc.outputs() {
                        out.push(format!("{prefix}log_blur_amplitude[{i},{d}]"));
                        out.push(format!("{prefix}log_blur_width[{i},{d}]"));
                    }
                }
                if let Some(ind) = &pc.independent {
                    for (d, k) in ind.iter().enumerate() {
                        base_names(out, format!("{prefix}independent[{d}]."), k);
                    }
                }
            }
            OutputKernel::Sum(parts) => {
                for (q, k) in parts.iter().enumerate() {
                    k.collect_names(&format!("{prefix}part[{q}]."), out);
                }
            }
        }
    }

    pub fn pack_hypers(&self) -> HyperVector {
        let mut values = Vec::with_capacity(self.hyper_count());
        self.pack_into(&mut values);
        HyperVector {
            names: self.hyper_names(),
            values,
        }
    }

    fn pack_into(&self, out: &mut Vec<f64>) {
        match self {
            OutputKernel::Separable { b, base } => {
                let l = b.clone().cholesky().expect("validated SPD").l();
                for r in 0..l.nrows() {
                    for c in 0..=r {
                        out.push(if r == c { l[(r, c)].ln() } else { l[(r, c)] });
                    }
                }
                base.pack(out);
            }
            OutputKernel::Lmc { factors, nugget, base } => {
                for i in 0..factors.nrows() {
                    for d in 0..factors.ncols() {
                        out.push(factors[(i, d)]);
                    }
                }
                if let Some(n) = nugget {
                    out.extend(n.iter().map(|v| v.ln()));
                }
                base.pack(out);
            }
            OutputKernel::ProcessConvolution(pc) => {
                for i in 0..pc.latents() {
                    out.push(pc.latent_amplitudes[i].ln());
                    out.push(pc.latent_widths[i].ln());
                    for d in 0..pc.outputs() {
                        out.push(pc.blur_amplitudes[(i, d)].ln());
                        out.push(pc.blur_widths[(i, d)].ln());
                    }
                }
                if let Some(ind) = &pc.independent {
                    for k in ind {
                        k.pack(out);
                    }
                }
            }
            OutputKernel::Sum(parts) => parts.iter().for_each(|k| k.pack_into(out)),
        }
    }

    /// Kernel with the same structure as `self` and numeric fields from `theta`.
    pub fn unpack_hypers(&self, theta: &[f64]) -> Result<Self> {
        if theta.len() != self.hyper_count() {
            return Err(Error::SchemaMismatch(format!(
                "{} kernel expects {} hyperparameters, got {}",
                self.name(),
                self.hyper_count(),
                theta.len()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::SchemaMismatch("non-finite hyperparameter".into()));
        }
        let mut it = theta.iter().copied();
        let k = self.unpack_from(&mut it)?;
        k.validate()?;
        Ok(k)
    }

    fn unpack_from(&self, it: &mut impl Iterator<Item = f64>) -> Result<Self> {
        Ok(match self {
            OutputKernel::Separable { b, base } => {
                let n = b.nrows();
                let mut l = DMatrix::zeros(n, n);
                for r in 0..n {
                    for c in 0..=r {
                        let v = take(it)?;
                        l[(r, c)] = if r == c { v.exp() } else { v };
                    }
                }
                let b = &l * l.transpose();
                let base = base.unpack(it)?;
                OutputKernel::Separable { b, base }
            }
            OutputKernel::Lmc { factors, nugget, base } => {
                let mut a = factors.clone();
                for i in 0..a.nrows() {
                    for d in 0..a.ncols() {
                        a[(i, d)] = take(it)?;
                    }
                }
                let nugget = match nugget {
                    Some(n) => Some((0..n.len()).map(|_| take(it).map(f64::exp)).collect::<Result<Vec<_>>>()?),
                    None => None,
                };
                let base = base.unpack(it)?;
                OutputKernel::Lmc { factors: a, nugget, base }
            }
            OutputKernel::ProcessConvolution(pc) => {
                let mut out: ProcessConvolution = pc.clone();
                for i in 0..pc.latents() {
                    out.latent_amplitudes[i] = take(it)?.exp();
                    out.latent_widths[i] = take(it)?.exp();
                    for d in 0..pc.outputs() {
                        out.blur_amplitudes[(i, d)] = take(it)?.exp();
                        out.blur_widths[(i, d)] = take(it)?.exp();
                    }
                }
                if let Some(ind) = &pc.independent {
                    out.independent = Some(ind.iter().map(|k| k.unpack(it)).collect::<Result<Vec<_>>>()?);
                }
                OutputKernel::ProcessConvolution(out)
            }
            OutputKernel::Sum(parts) => {
                OutputKernel::Sum(parts.iter().map(|k| k.unpack_from(it)).collect::<Result<Vec<_>>>()?)
            }
        })
    }
}

fn take(it: &mut impl Iterator<Item = f64>) -> Result<f64> {
    it.next().ok_or_else(|| Error::SchemaMismatch("hyper vector too short".into()))
}
