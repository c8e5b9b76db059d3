//! Gram assembly, jittered Cholesky factorizations and solves.
//!
//! The Gram matrix uses output-major ordering: row `offset(d) + j` belongs
//! to point `j` of output `d`, matching [`Dataset`](crate::domain::Dataset).
//! For a separable kernel on a shared design `C(X,X) = B ⊗ c(X,X)` and the
//! solve `(B ⊗ K)⁻¹ vec(V) = vec(K⁻¹ V B⁻¹)` never forms the `ND × ND`
//! matrix.

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use crate::domain::{Design, Point};
use crate::error::{Error, Result};
use crate::kernels::{OutputKernel, ScalarKernel};

/// Relative jitter steps, multiplied by the mean diagonal entry.
pub const JITTER_LADDER: [f64; 5] = [0.0, 1e-12, 1e-10, 1e-8, 1e-6];

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum JitterPolicy {
    /// Try [`JITTER_LADDER`] in order.
    #[default]
    Ladder,
    /// Exactly this absolute diagonal shift, no escalation.
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub enum GramFactor {
    Dense {
        chol: Cholesky<f64, Dyn>,
        jitter: f64,
    },
    /// Factors of `B` and `c(X,X) + ηI`, so the regularized matrix is
    /// `B ⊗ (c(X,X) + ηI)`.
    Kronecker {
        b: Cholesky<f64, Dyn>,
        c: Cholesky<f64, Dyn>,
        jitter: f64,
    },
}

pub fn scalar_gram(k: &ScalarKernel, xs: &[Point], ys: &[Point]) -> DMatrix<f64> {
    DMatrix::from_fn(xs.len(), ys.len(), |i, j| k.eval_unchecked(&xs[i], &ys[j]))
}

/// `C(X, X)` with block `(d, e)` holding `C(x, x')_{d,e}` over `X_d × X_e`.
pub fn assemble_gram(kernel: &OutputKernel, design: &Design) -> Result<DMatrix<f64>> {
    kernel.check_design(design)?;
    let flat: Vec<(usize, &Point)> = design.iter_flat().collect();
    let n = flat.len();
    let p = design.dim();
    let mut g = DMatrix::zeros(n, n);
    if let Some((b, base)) = kernel.coregionalization() {
        for i in 0..n {
            for j in 0..=i {
                let v = b[(flat[i].0, flat[j].0)] * base.radial(flat[i].1.sq_dist(flat[j].1));
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
    } else {
        for i in 0..n {
            for j in 0..=i {
                let v = kernel.entry_radial(flat[i].0, flat[j].0, flat[i].1.sq_dist(flat[j].1), p);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
    }
    Ok(g)
}

/// Cross-covariance `C(Y, X)` between query points of output(s) `ys` and the design.
pub fn cross_gram(kernel: &OutputKernel, ys: &[(usize, Point)], design: &Design) -> DMatrix<f64> {
    let p = design.dim();
    let flat: Vec<(usize, &Point)> = design.iter_flat().collect();
    DMatrix::from_fn(ys.len(), flat.len(), |i, j| {
        kernel.entry_radial(ys[i].0, flat[j].0, ys[i].1.sq_dist(flat[j].1), p)
    })
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

fn ladder_cholesky(m: &DMatrix<f64>, policy: JitterPolicy) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::invalid("factorize needs a nonempty square matrix"));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("non-finite Gram entry".into()));
    }
    let n = m.nrows();
    let scale = m.trace() / n as f64;
    let etas: Vec<f64> = match policy {
        JitterPolicy::Ladder => JITTER_LADDER.iter().map(|r| r * scale.abs()).collect(),
        JitterPolicy::Fixed(eta) => vec![eta],
    };
    for eta in etas {
        let mut a = m.clone();
        for i in 0..n {
            a[(i, i)] += eta;
        }
        if let Some(chol) = a.cholesky() {
            // nalgebra only rejects non-positive pivots; also insist on a
            // factor that is usable for solves.
            if chol.l_dirty().diagonal().iter().all(|d| *d > 0.0 && d.is_finite()) {
                return Ok((chol, eta));
            }
        }
    }
    Err(Error::NotPositiveDefinite {
        min_eigenvalue: min_eigenvalue(m),
    })
}

/// Dense factorization of a symmetric matrix with jitter escalation.
pub fn factorize(gram: &DMatrix<f64>, policy: JitterPolicy) -> Result<GramFactor> {
    let (chol, jitter) = ladder_cholesky(gram, policy)?;
    Ok(GramFactor::Dense { chol, jitter })
}

/// Factorizes `B ⊗ c_gram` through its two factors. Jitter is applied to
/// `c_gram` only.
pub fn factorize_kronecker(b: &DMatrix<f64>, c_gram: &DMatrix<f64>, policy: JitterPolicy) -> Result<GramFactor> {
    let (bf, _) = ladder_cholesky(b, JitterPolicy::Fixed(0.0))?;
    let (cf, jitter) = ladder_cholesky(c_gram, policy)?;
    Ok(GramFactor::Kronecker { b: bf, c: cf, jitter })
}

/// Assembles and factorizes `C(X,X)`, taking the Kronecker path when the
/// kernel is separable and the design shared.
pub fn factorize_design(kernel: &OutputKernel, design: &Design, policy: JitterPolicy) -> Result<GramFactor> {
    kernel.check_design(design)?;
    if design.is_shared() {
        if let Some((b, base)) = kernel.coregionalization() {
            let xs = design.points(0);
            let c = scalar_gram(base, xs, xs);
            match factorize_kronecker(&b, &c, policy) {
                Ok(f) => return Ok(f),
                // A rank-deficient LMC `B` cannot be factored alone; the
                // dense path regularizes the full matrix instead.
                Err(Error::NotPositiveDefinite { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    factorize(&assemble_gram(kernel, design)?, policy)
}

impl GramFactor {
    pub fn dim(&self) -> usize {
        match self {
            GramFactor::Dense { chol, .. } => chol.l_dirty().nrows(),
            GramFactor::Kronecker { b, c, .. } => b.l_dirty().nrows() * c.l_dirty().nrows(),
        }
    }

    pub fn jitter(&self) -> f64 {
        match self {
            GramFactor::Dense { jitter, .. } | GramFactor::Kronecker { jitter, .. } => *jitter,
        }
    }

    pub fn is_kronecker(&self) -> bool {
        matches!(self, GramFactor::Kronecker { .. })
    }

    /// `(C(X,X) + regularizer)⁻¹ rhs`.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if rhs.nrows() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: rhs.nrows(),
            });
        }
        match self {
            GramFactor::Dense { chol, .. } => Ok(chol.solve(rhs)),
            GramFactor::Kronecker { b, c, .. } => {
                let n = c.l_dirty().nrows();
                let d = b.l_dirty().nrows();
                let mut out = DMatrix::zeros(rhs.nrows(), rhs.ncols());
                for col in 0..rhs.ncols() {
                    // Column-major reshape: V[j, e] = rhs[e N + j].
                    let v = DMatrix::from_column_slice(n, d, rhs.column(col).as_slice());
                    let kv = c.solve(&v);
                    // (K⁻¹ V) B⁻¹ = (B⁻¹ (K⁻¹ V)ᵀ)ᵀ since B is symmetric.
                    let w = b.solve(&kv.transpose()).transpose();
                    out.column_mut(col).copy_from_slice(w.as_slice());
                }
                Ok(out)
            }
        }
    }

    pub fn solve_vec(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let m = DMatrix::from_column_slice(rhs.len(), 1, rhs);
        Ok(self.solve(&m)?.as_slice().to_vec())
    }

    pub fn log_det(&self) -> f64 {
        let ld = |ch: &Cholesky<f64, Dyn>| 2.0 * ch.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        match self {
            GramFactor::Dense { chol, .. } => ld(chol),
            GramFactor::Kronecker { b, c, .. } => {
                let n = c.l_dirty().nrows() as f64;
                let d = b.l_dirty().nrows() as f64;
                n * ld(b) + d * ld(c)
            }
        }
    }

    /// The regularized matrix the factor represents.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        match self {
            GramFactor::Dense { chol, .. } => {
                let l = chol.l();
                &l * l.transpose()
            }
            GramFactor::Kronecker { b, c, .. } => {
                let (lb, lc) = (b.l(), c.l());
                (&lb * lb.transpose()).kronecker(&(&lc * lc.transpose()))
            }
        }
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        match self {
            GramFactor::Dense { chol, .. } => chol.inverse(),
            GramFactor::Kronecker { b, c, .. } => b.inverse().kronecker(&c.inverse()),
        }
    }
}
