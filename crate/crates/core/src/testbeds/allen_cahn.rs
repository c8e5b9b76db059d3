//! Steady Allen-Cahn problem `ε u'' + u − u³ = sin x` on `[0, 10]`,
//! `u(0) = 1`, `u(10) = −1`, by central differences and damped Newton.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DOMAIN: (f64, f64) = (0.0, 10.0);
const BOUNDARY: (f64, f64) = (1.0, -1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonConfig {
    pub max_iters: usize,
    /// Target for the max-norm of the discrete residual.
    pub tol: f64,
    /// Maximum number of step halvings per iteration.
    pub max_halvings: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            max_iters: 200,
            tol: 1e-8,
            max_halvings: 40,
        }
    }
}

/// Grid solution with a natural cubic spline through the nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct BvpSolution {
    pub epsilon: f64,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    /// Spline second derivatives at the nodes.
    second: Vec<f64>,
}

fn residual(eps: f64, x: &[f64], u: &[f64], h: f64, out: &mut [f64]) -> f64 {
    let m = u.len();
    out[0] = 0.0;
    out[m - 1] = 0.0;
    let mut worst = 0.0f64;
    for j in 1..m - 1 {
        let r = eps * (u[j - 1] - 2.0 * u[j] + u[j + 1]) / (h * h) + u[j] - u[j].powi(3) - x[j].sin();
        out[j] = r;
        worst = worst.max(r.abs());
    }
    worst
}

/// Solves `a_i y_{i-1} + b_i y_i + c_i y_{i+1} = d_i` (Thomas algorithm).
fn tridiagonal(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    let mut denom = b[0];
    if denom == 0.0 {
        return None;
    }
    cp[0] = c[0] / denom;
    dp[0] = d[0] / denom;
    for i in 1..n {
        denom = b[i] - a[i] * cp[i - 1];
        if denom == 0.0 || !denom.is_finite() {
            return None;
        }
        cp[i] = c[i] / denom;
        dp[i] = (d[i] - a[i] * dp[i - 1]) / denom;
    }
    let mut y = vec![0.0; n];
    y[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        y[i] = dp[i] - cp[i] * y[i + 1];
    }
    Some(y)
}

pub fn allen_cahn_solve(epsilon: f64, m: usize) -> Result<BvpSolution> {
    allen_cahn_solve_with(epsilon, m, NewtonConfig::default())
}

/// Tries the linear interpolant of the boundary values first. If Newton
/// stagnates from there, it restarts from the reduced solution of
/// `u − u³ = sin x` (the `ε → 0` limit), followed continuously from `u = 1`.
pub fn allen_cahn_solve_with(epsilon: f64, m: usize, cfg: NewtonConfig) -> Result<BvpSolution> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    if m < 50 {
        return Err(Error::invalid(format!("grid needs at least 50 nodes, got {m}")));
    }
    let (a, b) = DOMAIN;
    let h = (b - a) / (m - 1) as f64;
    let x: Vec<f64> = (0..m).map(|j| if j == m - 1 { b } else { a + j as f64 * h }).collect();
    let linear: Vec<f64> = x.iter().map(|xi| BOUNDARY.0 + (BOUNDARY.1 - BOUNDARY.0) * (xi - a) / (b - a)).collect();
    match newton(epsilon, &x, h, linear, cfg) {
        Ok(s) => Ok(s),
        Err(first) => newton(epsilon, &x, h, reduced_guess(&x), cfg).map_err(|_| first),
    }
}

fn reduced_guess(x: &[f64]) -> Vec<f64> {
    let mut prev = BOUNDARY.0;
    let mut u: Vec<f64> = x
        .iter()
        .map(|xi| {
            prev = nearest_cubic_root(xi.sin(), prev);
            prev
        })
        .collect();
    u[0] = BOUNDARY.0;
    *u.last_mut().unwrap() = BOUNDARY.1;
    u
}

/// Real root of `u³ − u + s = 0` closest to `near`.
fn nearest_cubic_root(s: f64, near: f64) -> f64 {
    // Depressed cubic t³ + pt + q with p = −1, q = s.
    let disc = s * s / 4.0 - 1.0 / 27.0;
    let roots: Vec<f64> = if disc > 0.0 {
        let r = disc.sqrt();
        vec![(-s / 2.0 + r).cbrt() + (-s / 2.0 - r).cbrt()]
    } else {
        let rho = (1.0f64 / 3.0).sqrt();
        let phi = (-s / 2.0 / rho.powi(3)).clamp(-1.0, 1.0).acos();
        (0..3)
            .map(|k| 2.0 * rho * ((phi + 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos())
            .collect()
    };
    roots.into_iter().min_by(|p, q| (p - near).abs().total_cmp(&(q - near).abs())).unwrap()
}

fn l2(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn newton(epsilon: f64, x: &[f64], h: f64, mut u: Vec<f64>, cfg: NewtonConfig) -> Result<BvpSolution> {
    let m = x.len();
    let mut r = vec![0.0; m];
    let mut trial_r = vec![0.0; m];
    let mut norm = residual(epsilon, x, &u, h, &mut r);
    let mut merit = l2(&r);
    let mut history = vec![norm];
    let k = epsilon / (h * h);
    for it in 0..cfg.max_iters {
        if norm < cfg.tol {
            return Ok(BvpSolution::new(epsilon, x.to_vec(), u, norm, it));
        }
        let n = m - 2;
        let lower = vec![k; n];
        let upper = vec![k; n];
        let diag: Vec<f64> = (1..m - 1).map(|j| -2.0 * k + 1.0 - 3.0 * u[j] * u[j]).collect();
        let rhs: Vec<f64> = (1..m - 1).map(|j| -r[j]).collect();
        let delta = tridiagonal(&lower, &diag, &upper, &rhs).ok_or_else(|| Error::SolverFailed {
            iterations: it,
            residual: norm,
            history: history.clone(),
        })?;
        // Backtracking on the Euclidean merit, for which the Newton step is a
        // descent direction.
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..=cfg.max_halvings {
            let trial: Vec<f64> = u
                .iter()
                .enumerate()
                .map(|(j, uj)| if j == 0 || j == m - 1 { *uj } else { uj + step * delta[j - 1] })
                .collect();
            let tn = residual(epsilon, x, &trial, h, &mut trial_r);
            let tm = l2(&trial_r);
            if tm < (1.0 - 1e-4 * step) * merit || tn < cfg.tol {
                u = trial;
                std::mem::swap(&mut r, &mut trial_r);
                norm = tn;
                merit = tm;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        history.push(norm);
        if !accepted {
            return Err(Error::SolverFailed {
                iterations: it + 1,
                residual: norm,
                history,
            });
        }
    }
    if norm < cfg.tol {
        return Ok(BvpSolution::new(epsilon, x.to_vec(), u, norm, cfg.max_iters));
    }
    Err(Error::SolverFailed {
        iterations: cfg.max_iters,
        residual: norm,
        history,
    })
}

impl BvpSolution {
    fn new(epsilon: f64, grid: Vec<f64>, values: Vec<f64>, residual: f64, iterations: usize) -> Self {
        let second = natural_spline_second_derivatives(&grid, &values);
        BvpSolution {
            epsilon,
            grid,
            values,
            residual,
            iterations,
            second,
        }
    }

    /// Spline value; `x` is clamped to the domain.
    pub fn eval(&self, x: f64) -> f64 {
        let g = &self.grid;
        let n = g.len();
        let x = x.clamp(g[0], g[n - 1]);
        let i = match g.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => return self.values[i],
            Err(i) => i.clamp(1, n - 1) - 1,
        };
        let h = g[i + 1] - g[i];
        let a = (g[i + 1] - x) / h;
        let b = (x - g[i]) / h;
        a * self.values[i]
            + b * self.values[i + 1]
            + ((a * a * a - a) * self.second[i] + (b * b * b - b) * self.second[i + 1]) * h * h / 6.0
    }

    /// Exact integral of the spline over the domain, divided by its length.
    pub fn mean(&self) -> f64 {
        let g = &self.grid;
        let mut total = 0.0;
        for i in 0..g.len() - 1 {
            let h = g[i + 1] - g[i];
            total += 0.5 * h * (self.values[i] + self.values[i + 1]) - h.powi(3) / 24.0 * (self.second[i] + self.second[i + 1]);
        }
        total / (g[g.len() - 1] - g[0])
    }
}

fn natural_spline_second_derivatives(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    let k = n - 2;
    let mut a = vec![0.0; k];
    let mut b = vec![0.0; k];
    let mut c = vec![0.0; k];
    let mut d = vec![0.0; k];
    for i in 1..n - 1 {
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        a[i - 1] = h0 / 6.0;
        b[i - 1] = (h0 + h1) / 3.0;
        c[i - 1] = h1 / 6.0;
        d[i - 1] = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
    }
    let inner = tridiagonal(&a, &b, &c, &d).expect("diagonally dominant");
    m[1..n - 1].copy_from_slice(&inner);
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_values_and_residual() {
        for eps in [2.0, 0.1] {
            let s = allen_cahn_solve(eps, 401).unwrap();
            assert_eq!(s.values[0], 1.0);
            assert_eq!(*s.values.last().unwrap(), -1.0);
            assert!(s.residual < 1e-8);
            assert_eq!(s.eval(0.0), 1.0);
            assert_eq!(s.eval(10.0), -1.0);
        }
    }

    #[test]
    fn grid_convergence() {
        for eps in [2.0, 0.1] {
            let a = allen_cahn_solve(eps, 401).unwrap();
            let b = allen_cahn_solve(eps, 801).unwrap();
            let diff = (0..=1000)
                .map(|i| {
                    let x = i as f64 * 0.01;
                    (a.eval(x) - b.eval(x)).abs()
                })
                .fold(0.0, f64::max);
            assert!(diff < 1e-3, "eps={eps} diff={diff}");
        }
    }

    #[test]
    fn spline_reproduces_cubics() {
        // Natural splines are exact for linear data.
        let x: Vec<f64> = (0..60).map(|i| i as f64 / 59.0 * 10.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let s = BvpSolution::new(1.0, x, y, 0.0, 0);
        assert!((s.eval(3.3) - 5.6).abs() < 1e-12);
        assert!((s.mean() - 9.0).abs() < 1e-12);
    }

    #[test]
    fn mean_matches_independent_collocation_solve() {
        // Collocation solves (scipy solve_bvp, tol 1e-8) of the same problem.
        let hi = allen_cahn_solve(0.1, 401).unwrap().mean();
        let lo = allen_cahn_solve(2.0, 401).unwrap().mean();
        assert!((hi + 0.37096).abs() < 1e-3, "{hi}");
        assert!((lo - 0.167779).abs() < 1e-4, "{lo}");
    }

    #[test]
    fn cubic_roots() {
        for s in [-1.0, -0.2, 0.0, 0.3, 1.0] {
            for near in [-1.5, 0.0, 1.5] {
                let u = nearest_cubic_root(s, near);
                assert!((u * u * u - u + s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_small_grids() {
        assert!(allen_cahn_solve(0.1, 10).is_err());
        assert!(allen_cahn_solve(-1.0, 100).is_err());
    }
}
