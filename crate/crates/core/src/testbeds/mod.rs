//! Integrands used by the experiments: multi-fidelity toy functions, the
//! Allen-Cahn boundary value problem and spherical illumination integrands.

mod allen_cahn;
mod illumination;
mod multifidelity;

pub use allen_cahn::{allen_cahn_solve, BvpSolution, NewtonConfig};
pub use illumination::{camera_covariance, camera_ring, EnvironmentMap, IlluminationScene, Reflectance, VmfLobe};
pub use multifidelity::{forrester_jump, step_function, Fidelity, MultiFidelityProblem, ProblemKind};
