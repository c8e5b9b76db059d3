//! Derivatives of kernel entries with respect to the packed hyperparameters.

use nalgebra::DMatrix;

use super::output::{OutputKernel, ProcessConvolution};
use super::scalar::ScalarKernel;

enum Part<'a> {
    /// `C = B c`; `db[k] = ∂B/∂θ_k` for the `B` coordinates.
    Coreg {
        b: DMatrix<f64>,
        db: Vec<DMatrix<f64>>,
        base: &'a ScalarKernel,
        offset: usize,
    },
    Pc {
        pc: &'a ProcessConvolution,
        offset: usize,
    },
}

/// Evaluates `∂C_{d,e}(r²)/∂θ` for every coordinate of the hyper vector
/// produced by [`OutputKernel::pack_hypers`].
pub struct GradientEvaluator<'a> {
    parts: Vec<Part<'a>>,
    len: usize,
}

impl<'a> GradientEvaluator<'a> {
    pub fn new(kernel: &'a OutputKernel) -> Self {
        let mut parts = Vec::new();
        let len = collect(kernel, 0, &mut parts);
        GradientEvaluator { parts, len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Writes the gradient of entry `(d, e)` at squared distance `r2` in
    /// dimension `p` into `out` (length [`Self::len`]); returns the entry.
    pub fn entry_grad(&self, d: usize, e: usize, r2: f64, p: usize, out: &mut [f64]) -> f64 {
        out.iter_mut().for_each(|g| *g = 0.0);
        let mut value = 0.0;
        for part in &self.parts {
            match part {
                Part::Coreg { b, db, base, offset } => {
                    let nb = db.len();
                    let mut g = [0.0; 2];
                    let c = base.radial_grad(r2, &mut g);
                    for (k, dbk) in db.iter().enumerate() {
                        out[offset + k] = dbk[(d, e)] * c;
                    }
                    for (k, gk) in g.iter().take(base.hyper_count()).enumerate() {
                        out[offset + nb + k] = b[(d, e)] * gk;
                    }
                    value += b[(d, e)] * c;
                }
                Part::Pc { pc, offset } => {
                    value += pc_grad(pc, d, e, r2, p, &mut out[*offset..]);
                }
            }
        }
        value
    }
}

fn collect<'a>(k: &'a OutputKernel, offset: usize, parts: &mut Vec<Part<'a>>) -> usize {
    match k {
        OutputKernel::Separable { base, .. } | OutputKernel::Lmc { base, .. } => {
            let (b, _) = k.coregionalization().unwrap();
            let db = b_derivatives(k);
            let n = db.len() + base.hyper_count();
            parts.push(Part::Coreg { b, db, base, offset });
            offset + n
        }
        OutputKernel::ProcessConvolution(pc) => {
            parts.push(Part::Pc { pc, offset });
            offset + k.hyper_count()
        }
        OutputKernel::Sum(ks) => ks.iter().fold(offset, |off, k| collect(k, off, parts)),
    }
}

fn b_derivatives(k: &OutputKernel) -> Vec<DMatrix<f64>> {
    match k {
        OutputKernel::Separable { b, .. } => {
            let n = b.nrows();
            let l = b.clone().cholesky().expect("validated SPD").l();
            let mut out = Vec::new();
            for r in 0..n {
                for c in 0..=r {
                    // ∂(LLᵀ)_{ab}/∂L_{rc} = δ_{ar} L_{bc} + δ_{br} L_{ac}
                    let chain = if r == c { l[(r, c)] } else { 1.0 };
                    let m = DMatrix::from_fn(n, n, |a, bb| {
                        let mut v = 0.0;
                        if a == r {
                            v += l[(bb, c)];
                        }
                        if bb == r {
                            v += l[(a, c)];
                        }
                        v * chain
                    });
                    out.push(m);
                }
            }
            out
        }
        OutputKernel::Lmc { factors, nugget, .. } => {
            let n = factors.ncols();
            let mut out = Vec::new();
            for i in 0..factors.nrows() {
                for d in 0..n {
                    // ∂B_{pq}/∂a^i_d = δ_{pd} a^i_q + δ_{qd} a^i_p
                    out.push(DMatrix::from_fn(n, n, |p, q| {
                        let mut v = 0.0;
                        if p == d {
                            v += factors[(i, q)];
                        }
                        if q == d {
                            v += factors[(i, p)];
                        }
                        v
                    }));
                }
            }
            if let Some(nug) = nugget {
                for (d, v) in nug.iter().enumerate() {
                    let mut m = DMatrix::zeros(n, n);
                    m[(d, d)] = *v;
                    out.push(m);
                }
            }
            out
        }
        _ => Vec::new(),
    }
}

fn pc_grad(pc: &ProcessConvolution, d: usize, e: usize, r2: f64, p: usize, out: &mut [f64]) -> f64 {
    let dd = pc.outputs();
    let pf = p as f64;
    let stride = 2 + 2 * dd;
    let mut value = 0.0;
    for i in 0..pc.latents() {
        let (a, s) = pc.gaussian_term(i, d, e, p);
        let t = a * (-0.5 * r2 / s).exp();
        value += t;
        let base = i * stride;
        // Width w entering S with multiplicity m:
        // ∂ln T/∂ln w = p m - p m w²/S + r² m w²/S².
        let width_term = |w: f64, m: f64| t * m * (pf - pf * w * w / s + r2 * w * w / (s * s));
        out[base] += 2.0 * t;
        out[base + 1] += width_term(pc.latent_widths[i], 1.0);
        for k in [d, e] {
            out[base + 2 + 2 * k] += 2.0 * t;
            out[base + 3 + 2 * k] += width_term(pc.blur_widths[(i, k)], 1.0);
        }
    }
    if let Some(ind) = &pc.independent {
        let mut off = pc.latents() * stride;
        for (k, kern) in ind.iter().enumerate() {
            let n = kern.hyper_count();
            if k == d && d == e {
                let mut g = [0.0; 2];
                value += kern.radial_grad(r2, &mut g);
                out[off..off + n].copy_from_slice(&g[..n]);
            }
            off += n;
        }
    }
    value
}
