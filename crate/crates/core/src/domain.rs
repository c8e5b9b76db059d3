//! Points, probability measures, per-output designs and datasets.
//!
//! Everything that touches randomness takes a [`SeededRng`], so every
//! sampled design is a pure function of its seed and stream id.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `‖x‖₂ = 1` for points on the unit sphere.
pub const SPHERE_NORM_TOL: f64 = 1e-12;

/// Default size of the dense domain proxy used for fill distances.
pub const DEFAULT_PROXY_SIZE: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::invalid("point must have at least one coordinate"));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("point coordinates must be finite"));
        }
        Ok(Point(coords))
    }

    pub fn scalar(x: f64) -> Self {
        Point(vec![x])
    }

    /// Builds a unit vector by normalising `coords`.
    pub fn on_sphere(coords: [f64; 3]) -> Result<Self> {
        let norm = coords.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::invalid("cannot normalise a zero vector"));
        }
        Ok(Point(coords.iter().map(|c| c / norm).collect()))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Point) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn sq_dist(&self, other: &Point) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn dist(&self, other: &Point) -> f64 {
        self.sq_dist(other).sqrt()
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= SPHERE_NORM_TOL
    }
}

impl From<f64> for Point {
    fn from(x: f64) -> Self {
        Point::scalar(x)
    }
}

/// Probability measure the integrals are taken against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Measure {
    UniformBox { lower: Vec<f64>, upper: Vec<f64> },
    UniformSphere,
}

impl Measure {
    pub fn uniform_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let m = Measure::UniformBox { lower, upper };
        m.validate()?;
        Ok(m)
    }

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::uniform_box(vec![a], vec![b])
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Measure::UniformBox { lower, upper } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return Err(Error::invalid("box bounds must be nonempty and equal length"));
                }
                if lower.iter().zip(upper).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
                    return Err(Error::invalid("box requires finite lower < upper componentwise"));
                }
                Ok(())
            }
            Measure::UniformSphere => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Measure::UniformBox { lower, .. } => lower.len(),
            Measure::UniformSphere => 3,
        }
    }

    /// Density of the measure with respect to Lebesgue measure on the box.
    pub fn box_density(&self) -> Option<f64> {
        match self {
            Measure::UniformBox { lower, upper } => {
                Some(1.0 / lower.iter().zip(upper).map(|(a, b)| b - a).product::<f64>())
            }
            Measure::UniformSphere => None,
        }
    }

    pub fn contains(&self, x: &Point) -> bool {
        match self {
            Measure::UniformBox { lower, upper } => {
                x.dim() == lower.len()
                    && x.coords()
                        .iter()
                        .zip(lower.iter().zip(upper))
                        .all(|(c, (a, b))| *c >= *a && *c <= *b)
            }
            Measure::UniformSphere => x.dim() == 3 && x.is_unit(),
        }
    }

    /// Dense stand-in for the whole domain, used by [`geometry_stats`].
    ///
    /// Boxes get a tensor grid with roughly `n` nodes; the sphere gets `n`
    /// IID points from a fixed stream.
    pub fn proxy_points(&self, n: usize) -> Vec<Point> {
        match self {
            Measure::UniformBox { lower, upper } => {
                let p = lower.len();
                let per_dim = ((n as f64).powf(1.0 / p as f64).round() as usize).max(2);
                let axes: Vec<Vec<f64>> = lower
                    .iter()
                    .zip(upper)
                    .map(|(a, b)| {
                        (0..per_dim)
                            .map(|i| a + (b - a) * i as f64 / (per_dim - 1) as f64)
                            .collect()
                    })
                    .collect();
                tensor_grid(&axes)
            }
            Measure::UniformSphere => {
                let mut rng = SeededRng::new(0x5eed_f111).stream(0);
                self.sample(n, &mut rng).expect("n > 0")
            }
        }
    }

    /// `n` IID draws from the measure.
    pub fn sample(&self, n: usize, rng: &mut SeededRng) -> Result<Vec<Point>> {
        if n == 0 {
            return Err(Error::invalid("sample size must be at least 1"));
        }
        let pts = match self {
            Measure::UniformBox { lower, upper } => (0..n)
                .map(|_| {
                    Point(
                        lower
                            .iter()
                            .zip(upper)
                            .map(|(a, b)| a + (b - a) * rng.random::<f64>())
                            .collect(),
                    )
                })
                .collect(),
            Measure::UniformSphere => (0..n).map(|_| sample_sphere_point(rng)).collect(),
        };
        Ok(pts)
    }
}

fn sample_sphere_point(rng: &mut SeededRng) -> Point {
    loop {
        let v: [f64; 3] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if norm >= 1e-8 {
            return Point(v.iter().map(|c| c / norm).collect());
        }
    }
}

fn tensor_grid(axes: &[Vec<f64>]) -> Vec<Point> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&c| {
                    let mut next = prefix.clone();
                    next.push(c);
                    next
                })
            })
            .collect();
    }
    out.into_iter().map(Point).collect()
}

pub fn sample_measure(measure: &Measure, n: usize, rng: &mut SeededRng) -> Result<Vec<Point>> {
    measure.sample(n, rng)
}

/// `n` equally spaced points on `[a, b]`, endpoints included.
pub fn equidistant_grid(n: usize, a: f64, b: f64) -> Result<Vec<Point>> {
    if n < 2 {
        return Err(Error::invalid(format!("grid needs at least 2 points, got {n}")));
    }
    if !(a < b) {
        return Err(Error::invalid("grid requires a < b"));
    }
    let step = (b - a) / (n - 1) as f64;
    Ok((0..n)
        .map(|i| {
            if i == n - 1 {
                Point::scalar(b)
            } else {
                Point::scalar(a + i as f64 * step)
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryStats {
    pub fill_distance: f64,
    pub separation_radius: f64,
    pub mesh_ratio: f64,
}

/// Fill distance, separation radius and mesh ratio of `points`, with the
/// supremum over the domain replaced by a maximum over `proxy`.
pub fn geometry_stats(points: &[Point], proxy: &[Point]) -> Result<GeometryStats> {
    if points.len() < 2 {
        return Err(Error::invalid("geometry stats need at least two points"));
    }
    if proxy.is_empty() {
        return Err(Error::invalid("empty domain proxy"));
    }
    let mut min_sq = f64::INFINITY;
    for (j, a) in points.iter().enumerate() {
        for b in &points[j + 1..] {
            min_sq = min_sq.min(a.sq_dist(b));
        }
    }
    if min_sq == 0.0 {
        return Err(Error::DegenerateDesign("duplicate points (separation radius 0)".into()));
    }
    let separation_radius = 0.5 * min_sq.sqrt();
    let fill_distance = proxy
        .iter()
        .map(|y| {
            points
                .iter()
                .map(|x| y.sq_dist(x))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
        .sqrt();
    Ok(GeometryStats {
        fill_distance,
        separation_radius,
        mesh_ratio: fill_distance / separation_radius,
    })
}

/// Point sets `X_d`, one per output.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    per_output: Vec<Vec<Point>>,
    shared: bool,
}

impl Design {
    pub fn new(per_output: Vec<Vec<Point>>) -> Result<Self> {
        if per_output.is_empty() {
            return Err(Error::invalid("design needs at least one output"));
        }
        if per_output.iter().any(|x| x.is_empty()) {
            return Err(Error::invalid("every output needs at least one point"));
        }
        let p = per_output[0][0].dim();
        for pt in per_output.iter().flatten() {
            if pt.dim() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: pt.dim(),
                });
            }
        }
        let shared = per_output.iter().all(|x| x == &per_output[0]);
        Ok(Design { per_output, shared })
    }

    /// The same point list for all `outputs`.
    pub fn shared(points: Vec<Point>, outputs: usize) -> Result<Self> {
        if outputs == 0 {
            return Err(Error::invalid("design needs at least one output"));
        }
        Self::new(vec![points; outputs])
    }

    pub fn outputs(&self) -> usize {
        self.per_output.len()
    }

    pub fn is_shared(&self) -> bool {
        self.shared
    }

    pub fn dim(&self) -> usize {
        self.per_output[0][0].dim()
    }

    pub fn points(&self, d: usize) -> &[Point] {
        &self.per_output[d]
    }

    pub fn per_output(&self) -> &[Vec<Point>] {
        &self.per_output
    }

    pub fn total_len(&self) -> usize {
        self.per_output.iter().map(Vec::len).sum()
    }

    /// Offset of output `d`'s block in the flattened ordering.
    pub fn offset(&self, d: usize) -> usize {
        self.per_output[..d].iter().map(Vec::len).sum()
    }

    /// `(output, point)` pairs in flattened order.
    pub fn iter_flat(&self) -> impl Iterator<Item = (usize, &Point)> + '_ {
        self.per_output
            .iter()
            .enumerate()
            .flat_map(|(d, xs)| xs.iter().map(move |x| (d, x)))
    }

    /// Appends a point to output `d`.
    pub fn with_point(&self, d: usize, x: Point) -> Result<Self> {
        let mut per_output = self.per_output.clone();
        per_output
            .get_mut(d)
            .ok_or_else(|| Error::invalid("output index out of range"))?
            .push(x);
        Self::new(per_output)
    }
}

/// Design plus observations `f(X)`, output-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    design: Design,
    values: Vec<f64>,
}

impl Dataset {
    pub fn new(design: Design, values: Vec<f64>) -> Result<Self> {
        if values.len() != design.total_len() {
            return Err(Error::DimensionMismatch {
                expected: design.total_len(),
                got: values.len(),
            });
        }
        Ok(Dataset { design, values })
    }

    pub fn from_fn(design: Design, mut f: impl FnMut(usize, &Point) -> f64) -> Self {
        let values = design.iter_flat().map(|(d, x)| f(d, x)).collect();
        Dataset { design, values }
    }

    /// Builds the flat vector from per-output value lists.
    pub fn from_blocks(design: Design, blocks: Vec<Vec<f64>>) -> Result<Self> {
        if blocks.len() != design.outputs() {
            return Err(Error::DimensionMismatch {
                expected: design.outputs(),
                got: blocks.len(),
            });
        }
        for (d, b) in blocks.iter().enumerate() {
            if b.len() != design.points(d).len() {
                return Err(Error::DimensionMismatch {
                    expected: design.points(d).len(),
                    got: b.len(),
                });
            }
        }
        Self::new(design, blocks.into_iter().flatten().collect())
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn output_values(&self, d: usize) -> &[f64] {
        let start = self.design.offset(d);
        &self.values[start..start + self.design.points(d).len()]
    }

    pub fn blocks(&self) -> Vec<Vec<f64>> {
        (0..self.design.outputs())
            .map(|d| self.output_values(d).to_vec())
            .collect()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Dataset {
            design: self.design.clone(),
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }
}

/// Counter-based seeded generator: a ChaCha8 keystream selected by
/// `(seed, stream)`.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub const ALGORITHM: &'static str = "chacha8";

    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        SeededRng {
            seed,
            stream,
            inner,
        }
    }

    /// Independent generator for sub-task `id`, reproducible from the seed
    /// alone regardless of how much of `self` has been consumed.
    pub fn stream(&self, id: u64) -> Self {
        let mixed = self
            .stream
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(id.wrapping_add(1));
        Self::with_stream(self.seed, mixed)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints_and_interior() {
        let g = equidistant_grid(2, 0.0, 1.0).unwrap();
        assert_eq!(g, vec![Point::scalar(0.0), Point::scalar(1.0)]);

        let g = equidistant_grid(20, 0.0, 2.0).unwrap();
        assert!((g[3].coords()[0] - 3.0 / 19.0 * 2.0).abs() < 1e-15);
        assert!((g[3].coords()[0] - 0.3158).abs() < 1e-4);

        let g = equidistant_grid(3, -5.0, 5.0).unwrap();
        let xs: Vec<f64> = g.iter().map(|p| p.coords()[0]).collect();
        assert_eq!(xs, vec![-5.0, 0.0, 5.0]);

        assert!(matches!(
            equidistant_grid(1, 0.0, 1.0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn box_samples_have_sane_mean() {
        let m = Measure::interval(0.0, 1.0).unwrap();
        let mut rng = SeededRng::new(7);
        let xs = m.sample(1000, &mut rng).unwrap();
        let mean = xs.iter().map(|p| p.coords()[0]).sum::<f64>() / 1000.0;
        assert!((0.45..=0.55).contains(&mean), "mean {mean}");
    }

    #[test]
    fn sphere_samples_are_unit_and_centred() {
        let mut rng = SeededRng::new(11);
        let xs = Measure::UniformSphere.sample(10_000, &mut rng).unwrap();
        assert!(xs.iter().all(|p| (p.norm() - 1.0).abs() <= 1e-12));
        let mut mean = [0.0; 3];
        for p in &xs {
            for (m, c) in mean.iter_mut().zip(p.coords()) {
                *m += c / xs.len() as f64;
            }
        }
        let norm = mean.iter().map(|m| m * m).sum::<f64>().sqrt();
        assert!(norm < 0.05, "mean norm {norm}");
    }

    #[test]
    fn same_seed_same_samples() {
        let m = Measure::UniformSphere;
        let a = m.sample(50, &mut SeededRng::new(3).stream(4)).unwrap();
        let b = m.sample(50, &mut SeededRng::new(3).stream(4)).unwrap();
        let c = m.sample(50, &mut SeededRng::new(3).stream(5)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn two_point_geometry() {
        let x = vec![Point::scalar(0.0), Point::scalar(1.0)];
        let proxy = equidistant_grid(1001, 0.0, 1.0).unwrap();
        let g = geometry_stats(&x, &proxy).unwrap();
        assert!((g.fill_distance - 0.5).abs() < 1e-12);
        assert!((g.separation_radius - 0.5).abs() < 1e-12);
        assert!((g.mesh_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_geometry() {
        let x = equidistant_grid(11, 0.0, 1.0).unwrap();
        let proxy = Measure::interval(0.0, 1.0).unwrap().proxy_points(DEFAULT_PROXY_SIZE);
        let g = geometry_stats(&x, &proxy).unwrap();
        assert!((g.fill_distance - 0.05).abs() < 1e-3);
        assert!((g.separation_radius - 0.05).abs() < 1e-12);
    }

    #[test]
    fn duplicate_points_are_degenerate() {
        let x = vec![Point::scalar(0.2), Point::scalar(0.2), Point::scalar(0.5)];
        let proxy = equidistant_grid(10, 0.0, 1.0).unwrap();
        assert!(matches!(
            geometry_stats(&x, &proxy),
            Err(Error::DegenerateDesign(_))
        ));
    }

    #[test]
    fn grids_are_quasi_uniform() {
        for n in 3..40 {
            let x = equidistant_grid(n, 0.0, 1.0).unwrap();
            let proxy = equidistant_grid(10 * n, 0.0, 1.0).unwrap();
            let g = geometry_stats(&x, &proxy).unwrap();
            assert!(g.mesh_ratio <= 2.1, "n={n} rho={}", g.mesh_ratio);
        }
    }

    #[test]
    fn design_shared_flag_and_offsets() {
        let x = equidistant_grid(4, 0.0, 1.0).unwrap();
        let d = Design::shared(x.clone(), 3).unwrap();
        assert!(d.is_shared());
        assert_eq!(d.offset(2), 8);
        let d2 = Design::new(vec![x.clone(), x[..2].to_vec()]).unwrap();
        assert!(!d2.is_shared());
        assert!(Design::new(vec![x, vec![]]).is_err());
        assert!(Design::new(vec![vec![Point::scalar(0.0)], vec![Point::new(vec![0.0, 1.0]).unwrap()]]).is_err());
    }

    #[test]
    fn dataset_blocks_round_trip() {
        let x = equidistant_grid(3, 0.0, 1.0).unwrap();
        let d = Design::new(vec![x.clone(), x[..1].to_vec()]).unwrap();
        let ds = Dataset::from_blocks(d.clone(), vec![vec![1.0, 2.0, 3.0], vec![4.0]]).unwrap();
        assert_eq!(ds.values(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(ds.output_values(1), &[4.0]);
        let again = Dataset::from_blocks(d, ds.blocks()).unwrap();
        assert_eq!(again, ds);
    }
}
