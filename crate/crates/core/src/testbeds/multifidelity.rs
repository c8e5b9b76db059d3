use serde::{Deserialize, Serialize};

use super::allen_cahn::{allen_cahn_solve, BvpSolution};
use crate::domain::{equidistant_grid, Design, Point};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fidelity {
    Low,
    High,
}

fn check_domain(x: f64, a: f64, b: f64) -> Result<()> {
    if x >= a && x <= b {
        Ok(())
    } else {
        Err(Error::Domain(format!("{x} outside [{a}, {b}]")))
    }
}

/// Step function on `[0, 2]`.
pub fn step_function(x: f64, fidelity: Fidelity) -> Result<f64> {
    check_domain(x, 0.0, 2.0)?;
    Ok(match (fidelity, x <= 1.0) {
        (Fidelity::Low, true) => 0.0,
        (Fidelity::Low, false) => 1.0,
        (Fidelity::High, true) => -1.0,
        (Fidelity::High, false) => 2.0,
    })
}

/// Forrester function with a jump at `x = 1/2`, on `[0, 1]`.
pub fn forrester_jump(x: f64, fidelity: Fidelity) -> Result<f64> {
    check_domain(x, 0.0, 1.0)?;
    let smooth = (3.0 * x - 1.0).powi(2) * (12.0 * x - 4.0).sin() / 4.0 + 10.0 * (x - 1.0);
    let low = if x <= 0.5 { smooth } else { 3.0 + smooth };
    Ok(match fidelity {
        Fidelity::Low => low,
        Fidelity::High if x <= 0.5 => 2.0 * low - 20.0 * (x - 1.0),
        Fidelity::High => 4.0 + 2.0 * low - 20.0 * (x - 1.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Step,
    Forrester,
    AllenCahn,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Step => "step",
            ProblemKind::Forrester => "forrester",
            ProblemKind::AllenCahn => "allen_cahn",
        }
    }
}

/// A two-level multi-fidelity integration problem. Output 0 is the high
/// fidelity model and output 1 the low fidelity model.
#[derive(Debug, Clone)]
pub struct MultiFidelityProblem {
    pub kind: ProblemKind,
    pub domain: (f64, f64),
    /// Sorted grid the design is drawn from.
    pub grid: Vec<Point>,
    /// 1-based positions in `grid` evaluated at high fidelity.
    pub high_positions: Vec<usize>,
    solutions: Option<(BvpSolution, BvpSolution)>,
}

/// Grid size for the finite-difference Allen-Cahn solves.
pub const ALLEN_CAHN_GRID: usize = 401;
pub const ALLEN_CAHN_EPS_HIGH: f64 = 0.1;
pub const ALLEN_CAHN_EPS_LOW: f64 = 2.0;

impl MultiFidelityProblem {
    pub fn new(kind: ProblemKind) -> Result<Self> {
        Ok(match kind {
            ProblemKind::Step => MultiFidelityProblem {
                kind,
                domain: (0.0, 2.0),
                grid: equidistant_grid(20, 0.0, 2.0)?,
                high_positions: vec![4, 10, 11, 14, 17],
                solutions: None,
            },
            ProblemKind::Forrester => MultiFidelityProblem {
                kind,
                domain: (0.0, 1.0),
                grid: equidistant_grid(20, 0.0, 1.0)?,
                high_positions: vec![4, 10, 11, 14, 17],
                solutions: None,
            },
            ProblemKind::AllenCahn => MultiFidelityProblem {
                kind,
                domain: (0.0, 10.0),
                grid: equidistant_grid(11, 0.0, 10.0)?,
                // Integer points 2, 5 and 8 are positions 3, 6 and 9.
                high_positions: vec![3, 6, 9],
                solutions: Some((
                    allen_cahn_solve(ALLEN_CAHN_EPS_HIGH, ALLEN_CAHN_GRID)?,
                    allen_cahn_solve(ALLEN_CAHN_EPS_LOW, ALLEN_CAHN_GRID)?,
                )),
            },
        })
    }

    pub fn eval(&self, x: f64, fidelity: Fidelity) -> Result<f64> {
        match self.kind {
            ProblemKind::Step => step_function(x, fidelity),
            ProblemKind::Forrester => forrester_jump(x, fidelity),
            ProblemKind::AllenCahn => {
                check_domain(x, self.domain.0, self.domain.1)?;
                let (hi, lo) = self.solutions.as_ref().unwrap();
                Ok(match fidelity {
                    Fidelity::High => hi.eval(x),
                    Fidelity::Low => lo.eval(x),
                })
            }
        }
    }

    pub fn high_points(&self) -> Vec<Point> {
        self.high_positions.iter().map(|i| self.grid[i - 1].clone()).collect()
    }

    pub fn low_points(&self) -> Vec<Point> {
        self.grid
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.high_positions.contains(&(i + 1)))
            .map(|(_, p)| p.clone())
            .collect()
    }

    /// `[X_high, X_low]`.
    pub fn design(&self) -> Result<Design> {
        Design::new(vec![self.high_points(), self.low_points()])
    }

    /// Exact integrals against the uniform measure where they are known in
    /// closed form: the step function, and the spline interpolant of the
    /// Allen-Cahn solutions.
    pub fn exact_mean(&self, fidelity: Fidelity) -> Option<f64> {
        match (self.kind, fidelity) {
            (ProblemKind::Step, Fidelity::Low) => Some(0.5),
            (ProblemKind::Step, Fidelity::High) => Some(0.5),
            (ProblemKind::AllenCahn, f) => {
                let (hi, lo) = self.solutions.as_ref().unwrap();
                Some(if f == Fidelity::High { hi.mean() } else { lo.mean() })
            }
            _ => None,
        }
    }

    /// Non-smooth points to split quadrature panels at.
    pub fn breaks(&self) -> Vec<f64> {
        match self.kind {
            ProblemKind::Step => vec![1.0],
            ProblemKind::Forrester => vec![0.5],
            ProblemKind::AllenCahn => self.solutions.as_ref().unwrap().0.grid.clone(),
        }
    }
}
