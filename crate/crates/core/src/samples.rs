use mendkit_geometry::{surface_sample, OccupancyOracle, Point, TriangleMesh};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{MendError, Result};
use crate::fracture::BreakSet;

/// Labeled occupancy samples of one instance. Uniform points come first,
/// followed by the near-surface points. Fractured and restoration labels are
/// derived from `o_c` and `o_b`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OccupancySampleSet {
    pub points: Vec<[f32; 3]>,
    pub o_c: Vec<u8>,
    pub o_b: Vec<u8>,
    pub n_uniform: usize,
}

impl OccupancySampleSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> Point {
        let [x, y, z] = self.points[i];
        Point::new(x as f64, y as f64, z as f64)
    }

    pub fn o_f(&self, i: usize) -> u8 {
        self.o_c[i] & self.o_b[i]
    }

    pub fn o_r(&self, i: usize) -> u8 {
        self.o_c[i] & (1 - self.o_b[i])
    }

    pub fn count_fractured(&self) -> usize {
        (0..self.len()).filter(|&i| self.o_f(i) == 1).count()
    }

    pub fn count_restoration(&self) -> usize {
        (0..self.len()).filter(|&i| self.o_r(i) == 1).count()
    }

    /// Checks binary labels, matching lengths and the presence of both the
    /// fractured and the restoration part.
    pub fn validate(&self) -> Result<()> {
        if self.o_c.len() != self.len() || self.o_b.len() != self.len() || self.n_uniform > self.len() {
            return Err(MendError::Data("sample arrays disagree in length".into()));
        }
        if self.o_c.iter().chain(&self.o_b).any(|&v| v > 1) {
            return Err(MendError::Data("non-binary occupancy label".into()));
        }
        if self.count_fractured() == 0 || self.count_restoration() == 0 {
            return Err(MendError::Data(
                "samples must contain fractured and restoration points".into(),
            ));
        }
        Ok(())
    }
}

/// Labels `n_uniform` points uniform in the unit cube and `n_surface`
/// surface points of `mesh` displaced by isotropic Gaussian noise of
/// standard deviation `sigma` (clamped to the cube).
pub fn sample_points<R: Rng + ?Sized>(
    mesh: &TriangleMesh,
    occupancy: &dyn OccupancyOracle,
    break_set: &BreakSet,
    n_uniform: usize,
    n_surface: usize,
    sigma: f64,
    rng: &mut R,
) -> Result<OccupancySampleSet> {
    if n_uniform + n_surface == 0 {
        return Err(MendError::Parameter("at least one sample point is required".into()));
    }
    if !(sigma >= 0.0) {
        return Err(MendError::Parameter(format!("surface noise {} is negative", sigma)));
    }
    let mut points: Vec<[f32; 3]> = (0..n_uniform)
        .map(|_| [rng.random::<f32>(), rng.random::<f32>(), rng.random::<f32>()])
        .collect();
    if n_surface > 0 {
        let surface = surface_sample(mesh, n_surface, rng)?;
        let noise = Normal::new(0.0, sigma).map_err(|e| MendError::Parameter(e.to_string()))?;
        for p in surface.points {
            let q = [0, 1, 2].map(|k| (p[k] + noise.sample(rng)).clamp(0.0, 1.0) as f32);
            points.push(q);
        }
    }
    // labels are taken at the stored single-precision coordinates
    let exact: Vec<Point> = points
        .iter()
        .map(|&[x, y, z]| Point::new(x as f64, y as f64, z as f64))
        .collect();
    let o_c = occupancy.contains_many(&exact).into_iter().map(u8::from).collect();
    let o_b = exact.iter().map(|p| break_set.label(p)).collect();
    Ok(OccupancySampleSet {
        points,
        o_c,
        o_b,
        n_uniform,
    })
}
