//! Serialized form of [`OutputKernel`] used by config files.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::output::{OutputKernel, ProcessConvolution};
use super::scalar::ScalarKernel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Separable {
        /// Row-major `D × D`.
        #[serde(rename = "B")]
        b: Vec<f64>,
        base: ScalarKernel,
    },
    Lmc {
        /// One row of length `D` per latent factor.
        factors: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nugget: Option<Vec<f64>>,
        base: ScalarKernel,
    },
    #[serde(rename = "pc", alias = "process_convolution")]
    Pc {
        /// `R` rows of length `D`.
        blur_amplitudes: Vec<Vec<f64>>,
        blur_widths: Vec<Vec<f64>>,
        latent_amplitude: Vec<f64>,
        latent_width: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        independent: Option<Vec<ScalarKernel>>,
    },
    Sum {
        parts: Vec<KernelSpec>,
    },
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::invalid(format!("{what} must be a nonempty rectangular array")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl TryFrom<KernelSpec> for OutputKernel {
    type Error = Error;

    fn try_from(spec: KernelSpec) -> Result<Self> {
        match spec {
            KernelSpec::Separable { b, base } => {
                let n = (b.len() as f64).sqrt().round() as usize;
                if n == 0 || n * n != b.len() {
                    return Err(Error::invalid(format!("B has {} entries, not a square count", b.len())));
                }
                OutputKernel::separable(DMatrix::from_row_slice(n, n, &b), base)
            }
            KernelSpec::Lmc { factors, nugget, base } => {
                OutputKernel::lmc(rows_to_matrix(&factors, "factors")?, nugget, base)
            }
            KernelSpec::Pc {
                blur_amplitudes,
                blur_widths,
                latent_amplitude,
                latent_width,
                independent,
            } => OutputKernel::process_convolution(ProcessConvolution {
                blur_amplitudes: rows_to_matrix(&blur_amplitudes, "blur_amplitudes")?,
                blur_widths: rows_to_matrix(&blur_widths, "blur_widths")?,
                latent_amplitudes: latent_amplitude,
                latent_widths: latent_width,
                independent,
            }),
            KernelSpec::Sum { parts } => OutputKernel::sum(
                parts
                    .into_iter()
                    .map(OutputKernel::try_from)
                    .collect::<Result<Vec<_>>>()?,
            ),
        }
    }
}

impl From<&OutputKernel> for KernelSpec {
    fn from(k: &OutputKernel) -> Self {
        match k {
            OutputKernel::Separable { b, base } => KernelSpec::Separable {
                b: matrix_to_rows(b).concat(),
                base: base.clone(),
            },
            OutputKernel::Lmc { factors, nugget, base } => KernelSpec::Lmc {
                factors: matrix_to_rows(factors),
                nugget: nugget.clone(),
                base: base.clone(),
            },
            OutputKernel::ProcessConvolution(pc) => KernelSpec::Pc {
                blur_amplitudes: matrix_to_rows(&pc.blur_amplitudes),
                blur_widths: matrix_to_rows(&pc.blur_widths),
                latent_amplitude: pc.latent_amplitudes.clone(),
                latent_width: pc.latent_widths.clone(),
                independent: pc.independent.clone(),
            },
            OutputKernel::Sum(parts) => KernelSpec::Sum {
                parts: parts.iter().map(KernelSpec::from).collect(),
            },
        }
    }
}

impl From<OutputKernel> for KernelSpec {
    fn from(k: OutputKernel) -> Self {
        KernelSpec::from(&k)
    }
}

impl Serialize for OutputKernel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        KernelSpec::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for OutputKernel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let spec = KernelSpec::deserialize(d)?;
        OutputKernel::try_from(spec).map_err(serde::de::Error::custom)
    }
}
