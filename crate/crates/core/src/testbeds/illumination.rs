//! Outgoing-radiance integrands `h^{ω₀}(ω) = L(ω) ρ(ω, ω₀) [ω·ω₀]₊` on
//! the unit sphere, with a synthetic environment map.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::domain::Point;
use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

/// `amplitude · exp(concentration (ω·μ − 1))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmfLobe {
    pub amplitude: f64,
    pub concentration: f64,
    pub direction: [f64; 3],
}

impl VmfLobe {
    fn eval(&self, w: &[f64]) -> f64 {
        let dot: f64 = w.iter().zip(&self.direction).map(|(a, b)| a * b).sum();
        self.amplitude * (self.concentration * (dot - 1.0)).exp()
    }
}

/// Radiance per color channel: a constant ambient term plus vMF lobes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentMap {
    pub ambient: Vec<f64>,
    pub lobes: Vec<Vec<VmfLobe>>,
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

impl Default for EnvironmentMap {
    /// Three channels with three lobes each: a broad sky lobe, a sun-like
    /// sharp lobe and a dim bounce from below the horizon.
    fn default() -> Self {
        let sky = unit([0.1, 0.2, 1.0]);
        let sun = unit([0.6, 0.3, 0.75]);
        let ground = unit([-0.3, -0.2, -1.0]);
        let lobe = |amplitude, concentration, direction| VmfLobe {
            amplitude,
            concentration,
            direction,
        };
        EnvironmentMap {
            ambient: vec![0.05, 0.05, 0.08],
            lobes: vec![
                vec![lobe(0.6, 2.0, sky), lobe(4.0, 12.0, sun), lobe(0.3, 3.0, ground)],
                vec![lobe(0.8, 2.0, sky), lobe(3.5, 12.0, sun), lobe(0.4, 3.0, ground)],
                vec![lobe(1.2, 2.0, sky), lobe(2.5, 12.0, sun), lobe(0.2, 3.0, ground)],
            ],
        }
    }
}

impl EnvironmentMap {
    pub fn channels(&self) -> usize {
        self.lobes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lobes.is_empty() || self.ambient.len() != self.lobes.len() {
            return Err(Error::invalid("environment map needs one ambient value per channel"));
        }
        let ok = self.ambient.iter().all(|a| *a >= 0.0 && a.is_finite())
            && self.lobes.iter().flatten().all(|l| {
                l.amplitude >= 0.0 && l.concentration >= 0.0 && l.direction.iter().map(|c| c * c).sum::<f64>() > 0.0
            });
        if !ok {
            return Err(Error::invalid("environment map must be nonnegative"));
        }
        Ok(())
    }

    pub fn radiance(&self, channel: usize, w: &Point) -> f64 {
        self.ambient[channel] + self.lobes[channel].iter().map(|l| l.eval(w.coords())).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reflectance {
    Constant { albedo: f64 },
    /// `albedo + specular · [r(ω)·ω₀]₊^exponent`, `r` the mirror of `ω` about the normal.
    Phong { albedo: f64, specular: f64, exponent: f64 },
}

impl Default for Reflectance {
    fn default() -> Self {
        Reflectance::Constant { albedo: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlluminationScene {
    pub environment: EnvironmentMap,
    /// Surface normal; only enters through a Phong reflectance.
    pub normal: Point,
    pub reflectance: Reflectance,
    pub cameras: Vec<Point>,
}

impl IlluminationScene {
    pub fn new(environment: EnvironmentMap, normal: Point, reflectance: Reflectance, cameras: Vec<Point>) -> Result<Self> {
        environment.validate()?;
        if !normal.is_unit() || normal.dim() != 3 || cameras.iter().any(|c| c.dim() != 3 || !c.is_unit()) {
            return Err(Error::Domain("normal and camera directions must be unit 3-vectors".into()));
        }
        if cameras.is_empty() {
            return Err(Error::invalid("scene needs at least one camera"));
        }
        Ok(IlluminationScene {
            environment,
            normal,
            reflectance,
            cameras,
        })
    }

    /// Default map, normal `e_z` and `d` cameras 0.005π apart.
    pub fn standard(d: usize) -> Result<Self> {
        let base = Point::on_sphere([0.2, 0.1, 1.0])?;
        let cams = camera_ring(&base, d, 0.005 * std::f64::consts::PI)?;
        Self::new(EnvironmentMap::default(), Point::on_sphere([0.0, 0.0, 1.0])?, Reflectance::default(), cams)
    }

    fn reflectance(&self, w: &Point, w0: &Point) -> f64 {
        match self.reflectance {
            Reflectance::Constant { albedo } => albedo,
            Reflectance::Phong { albedo, specular, exponent } => {
                let n = self.normal.coords();
                let dn = w.dot(&self.normal);
                let r: f64 = (0..3).map(|k| (2.0 * dn * n[k] - w.coords()[k]) * w0.coords()[k]).sum();
                albedo + specular * r.max(0.0).powf(exponent)
            }
        }
    }

    pub fn integrand(&self, channel: usize, camera: usize, w: &Point) -> Result<f64> {
        if channel >= self.environment.channels() || camera >= self.cameras.len() {
            return Err(Error::invalid(format!("no channel {channel} / camera {camera}")));
        }
        if w.dim() != 3 || !w.is_unit() {
            return Err(Error::Domain("integrand needs a unit 3-vector".into()));
        }
        Ok(self.integrand_unchecked(channel, camera, w))
    }

    pub fn integrand_unchecked(&self, channel: usize, camera: usize, w: &Point) -> f64 {
        let w0 = &self.cameras[camera];
        let cos = w.dot(w0);
        if cos <= 0.0 {
            return 0.0;
        }
        self.environment.radiance(channel, w) * self.reflectance(w, w0) * cos
    }

    /// `(1/4π) ∫ h dω` by Gauss–Legendre in `μ = ω·ω₀ ∈ [0, 1]` and a
    /// periodic trapezoid rule in azimuth about `ω₀`.
    pub fn reference_integral(&self, channel: usize, camera: usize, n_mu: usize, n_phi: usize) -> f64 {
        let w0 = self.cameras[camera].coords();
        let (t1, t2) = orthonormal_pair(w0);
        let rule = GaussLegendre::cached(n_mu);
        let mut total = 0.0;
        for (mu, wmu) in rule.on(0.0, 1.0) {
            let s = (1.0 - mu * mu).max(0.0).sqrt();
            let mut ring = 0.0;
            for k in 0..n_phi {
                let phi = 2.0 * std::f64::consts::PI * k as f64 / n_phi as f64;
                let (sp, cp) = phi.sin_cos();
                let v: Vec<f64> = (0..3).map(|i| mu * w0[i] + s * (cp * t1[i] + sp * t2[i])).collect();
                ring += self.integrand_unchecked(channel, camera, &Point::new(v).unwrap());
            }
            total += wmu * ring * 2.0 * std::f64::consts::PI / n_phi as f64;
        }
        total / (4.0 * std::f64::consts::PI)
    }
}

/// Two unit vectors completing `w` to an orthonormal basis.
fn orthonormal_pair(w: &[f64]) -> ([f64; 3], [f64; 3]) {
    let axis = if w[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let d: f64 = (0..3).map(|i| axis[i] * w[i]).sum();
    let t1 = unit([axis[0] - d * w[0], axis[1] - d * w[1], axis[2] - d * w[2]]);
    let t2 = [
        w[1] * t1[2] - w[2] * t1[1],
        w[2] * t1[0] - w[0] * t1[2],
        w[0] * t1[1] - w[1] * t1[0],
    ];
    (t1, t2)
}

/// `d` unit vectors on a great circle through `base`, `step` radians apart.
pub fn camera_ring(base: &Point, d: usize, step: f64) -> Result<Vec<Point>> {
    if base.dim() != 3 || !base.is_unit() {
        return Err(Error::Domain("camera ring needs a unit 3-vector".into()));
    }
    if d == 0 {
        return Err(Error::invalid("camera ring needs at least one camera"));
    }
    let w = base.coords();
    let (t, _) = orthonormal_pair(w);
    (0..d)
        .map(|k| {
            let (s, c) = (k as f64 * step).sin_cos();
            if k == 0 {
                Ok(base.clone())
            } else {
                Point::on_sphere([c * w[0] + s * t[0], c * w[1] + s * t[1], c * w[2] + s * t[2]])
            }
        })
        .collect()
}

/// `B_ij = exp(ω_i·ω_j − 1)`.
pub fn camera_covariance(cams: &[Point]) -> DMatrix<f64> {
    DMatrix::from_fn(cams.len(), cams.len(), |i, j| {
        if i == j {
            1.0
        } else {
            (cams[i].dot(&cams[j]) - 1.0).exp()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_spacing() {
        let base = Point::on_sphere([0.2, 0.1, 1.0]).unwrap();
        let step = 0.005 * std::f64::consts::PI;
        let cams = camera_ring(&base, 5, step).unwrap();
        assert!(cams.iter().all(|c| c.is_unit()));
        for w in cams.windows(2) {
            assert!((w[0].dot(&w[1]).clamp(-1.0, 1.0).acos() - step).abs() < 1e-12);
        }
        assert_eq!(camera_ring(&base, 1, step).unwrap(), vec![base]);
    }

    #[test]
    fn covariance_properties() {
        let n = Point::on_sphere([0.0, 0.0, 1.0]).unwrap();
        let s = Point::on_sphere([0.0, 0.0, -1.0]).unwrap();
        let b = camera_covariance(&[n, s]);
        assert_eq!(b[(0, 0)], 1.0);
        assert!((b[(0, 1)] - (-2.0f64).exp()).abs() < 1e-15);
        let cams = IlluminationScene::standard(5).unwrap().cameras;
        let b = camera_covariance(&cams);
        assert!(b.symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn integrand_clamp_and_unit_case() {
        let w0 = Point::on_sphere([0.0, 0.0, 1.0]).unwrap();
        let env = EnvironmentMap {
            ambient: vec![1.0],
            lobes: vec![vec![]],
        };
        let scene = IlluminationScene::new(env, w0.clone(), Reflectance::default(), vec![w0.clone()]).unwrap();
        assert_eq!(scene.integrand(0, 0, &Point::on_sphere([1.0, 0.0, 0.0]).unwrap()).unwrap(), 0.0);
        assert_eq!(scene.integrand(0, 0, &w0).unwrap(), 1.0);
        // ∫ [ω·ω₀]₊ dΠ = 1/4.
        assert!((scene.reference_integral(0, 0, 40, 64) - 0.25).abs() < 1e-13);
        assert!(scene.integrand(1, 0, &w0).is_err());
    }

    #[test]
    fn single_lobe_peaks_near_its_direction() {
        let star = unit([0.3, 0.0, 1.0]);
        let w0 = Point::on_sphere([0.0, 0.0, 1.0]).unwrap();
        let env = EnvironmentMap {
            ambient: vec![0.0],
            lobes: vec![vec![VmfLobe {
                amplitude: 1.0,
                concentration: 50.0,
                direction: star,
            }]],
        };
        let scene = IlluminationScene::new(env, w0.clone(), Reflectance::default(), vec![w0]).unwrap();
        let mut best = (f64::MIN, [0.0; 3]);
        let n = 200;
        for i in 0..n {
            for j in 0..2 * n {
                let th = std::f64::consts::PI * (i as f64 + 0.5) / n as f64;
                let ph = std::f64::consts::PI * j as f64 / n as f64;
                let v = [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()];
                let val = scene.integrand(0, 0, &Point::on_sphere(v).unwrap()).unwrap();
                if val > best.0 {
                    best = (val, v);
                }
            }
        }
        let d: f64 = (0..3).map(|k| best.1[k] * star[k]).sum();
        assert!(d > 0.995, "peak alignment {d}");
    }
}
