use rand::Rng;

use crate::error::{GeometryError, Result};
use crate::mesh::{Aabb, Point, TriangleMesh, Vector};

/// Binary membership test of a solid.
pub trait OccupancyOracle: Sync {
    fn contains(&self, p: &Point) -> bool;

    fn contains_many(&self, points: &[Point]) -> Vec<bool> {
        points.iter().map(|p| self.contains(p)).collect()
    }
}

impl<F: Fn(&Point) -> bool + Sync> OccupancyOracle for F {
    fn contains(&self, p: &Point) -> bool {
        self(p)
    }
}

/// The solid `[0, 1]^3`.
#[derive(Clone, Copy, Debug, Default)]
pub struct UnitCube;

impl OccupancyOracle for UnitCube {
    fn contains(&self, p: &Point) -> bool {
        Aabb::unit_cube().contains(p)
    }
}

/// Distance below which a ray is considered to graze an edge or vertex.
const GRAZE_TOL: f64 = 1e-12;

fn cross2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn sub2(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

enum Crossing {
    Miss,
    Hit(f64),
    Degenerate,
}

/// Ray-triangle test in the plane orthogonal to the ray. `tri` holds the
/// projected coordinates `(u, v)` and the depth along the ray of each vertex.
fn cross_projected(tri: [[f64; 3]; 3], q: [f64; 2]) -> Crossing {
    let a = [tri[0][0], tri[0][1]];
    let b = [tri[1][0], tri[1][1]];
    let c = [tri[2][0], tri[2][1]];
    let area2 = cross2(sub2(b, a), sub2(c, a));
    let wa = cross2(sub2(b, q), sub2(c, q));
    let wb = cross2(sub2(c, q), sub2(a, q));
    let wc = cross2(sub2(a, q), sub2(b, q));
    let lens = [
        (sub2(c, b)[0].hypot(sub2(c, b)[1])),
        (sub2(a, c)[0].hypot(sub2(a, c)[1])),
        (sub2(b, a)[0].hypot(sub2(b, a)[1])),
    ];
    if area2.abs() < 1e-18 {
        // Triangle seen edge-on: only a problem when the ray touches it.
        let near = [wa, wb, wc]
            .iter()
            .zip(lens)
            .any(|(w, l)| l > 0.0 && (w / l).abs() < GRAZE_TOL && within_segment_box(tri, q));
        return if near { Crossing::Degenerate } else { Crossing::Miss };
    }
    let s = area2.signum();
    let mut inside = true;
    let mut outside = false;
    for (w, l) in [wa, wb, wc].iter().zip(lens) {
        let d = s * w / l.max(f64::MIN_POSITIVE);
        if d <= GRAZE_TOL {
            inside = false;
        }
        if d < -GRAZE_TOL {
            outside = true;
        }
    }
    if outside {
        Crossing::Miss
    } else if !inside {
        Crossing::Degenerate
    } else {
        Crossing::Hit((wa * tri[0][2] + wb * tri[1][2] + wc * tri[2][2]) / area2)
    }
}

fn within_segment_box(tri: [[f64; 3]; 3], q: [f64; 2]) -> bool {
    (0..2).all(|k| {
        let lo = tri.iter().map(|t| t[k]).fold(f64::INFINITY, f64::min);
        let hi = tri.iter().map(|t| t[k]).fold(f64::NEG_INFINITY, f64::max);
        q[k] >= lo - GRAZE_TOL && q[k] <= hi + GRAZE_TOL
    })
}

#[derive(Clone, Debug)]
struct Frame {
    u: Vector,
    v: Vector,
    dir: Vector,
}

impl Frame {
    fn new(dir: Vector) -> Self {
        let dir = dir.normalize();
        let helper = if dir.x.abs() < 0.9 { Vector::x() } else { Vector::y() };
        let u = dir.cross(&helper).normalize();
        let v = dir.cross(&u);
        Self { u, v, dir }
    }

    fn project(&self, p: &Point) -> [f64; 3] {
        [p.coords.dot(&self.u), p.coords.dot(&self.v), p.coords.dot(&self.dir)]
    }
}

/// Inside test for a watertight mesh by counting crossings of a ray cast
/// from the query point. Triangles are binned on a 2-D grid in the plane
/// orthogonal to the ray; queries whose ray grazes an edge or vertex are
/// re-cast along alternative directions.
#[derive(Clone, Debug)]
pub struct MeshOccupancy {
    mesh: TriangleMesh,
    bbox: Aabb,
    frame: Frame,
    projected: Vec<[f64; 3]>,
    grid_min: [f64; 2],
    cell_size: [f64; 2],
    dims: [usize; 2],
    cell_start: Vec<u32>,
    cell_items: Vec<u32>,
}

impl MeshOccupancy {
    /// Builds the query structure with a ray direction drawn from `rng`.
    pub fn new<R: Rng + ?Sized>(mesh: &TriangleMesh, rng: &mut R) -> Result<Self> {
        mesh.check_watertight()?;
        let dir = loop {
            let d = Vector::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let n = d.norm();
            if n > 0.1 && n <= 1.0 {
                break d / n;
            }
        };
        Ok(Self::with_direction(mesh, dir))
    }

    pub fn with_direction(mesh: &TriangleMesh, dir: Vector) -> Self {
        let frame = Frame::new(dir);
        let projected: Vec<[f64; 3]> = mesh.vertices.iter().map(|p| frame.project(p)).collect();
        let bbox = mesh
            .bounding_box()
            .unwrap_or(Aabb {
                min: Point::origin(),
                max: Point::origin(),
            })
            .inflate(1e-9);

        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &projected {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let side = ((mesh.triangles.len() as f64 / 2.0).sqrt().ceil() as usize).clamp(1, 1024);
        let dims = [side, side];
        let cell_size = [
            ((hi[0] - lo[0]) / side as f64).max(1e-12),
            ((hi[1] - lo[1]) / side as f64).max(1e-12),
        ];
        let cell_of = |x: f64, k: usize| -> usize {
            (((x - lo[k]) / cell_size[k]).floor().max(0.0) as usize).min(dims[k] - 1)
        };

        let mut ranges = Vec::with_capacity(mesh.triangles.len());
        let mut counts = vec![0u32; side * side + 1];
        for t in &mesh.triangles {
            let pts = t.map(|i| projected[i as usize]);
            let (mut r0, mut r1) = ([usize::MAX; 2], [0usize; 2]);
            for k in 0..2 {
                let mn = pts.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min) - GRAZE_TOL;
                let mx = pts.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max) + GRAZE_TOL;
                r0[k] = cell_of(mn, k);
                r1[k] = cell_of(mx, k);
            }
            for cy in r0[1]..=r1[1] {
                for cx in r0[0]..=r1[0] {
                    counts[cy * side + cx + 1] += 1;
                }
            }
            ranges.push((r0, r1));
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let mut cursor = counts.clone();
        let mut items = vec![0u32; *counts.last().unwrap() as usize];
        for (ti, (r0, r1)) in ranges.into_iter().enumerate() {
            for cy in r0[1]..=r1[1] {
                for cx in r0[0]..=r1[0] {
                    let c = cy * side + cx;
                    items[cursor[c] as usize] = ti as u32;
                    cursor[c] += 1;
                }
            }
        }

        Self {
            mesh: mesh.clone(),
            bbox,
            frame,
            projected,
            grid_min: lo,
            cell_size,
            dims,
            cell_start: counts,
            cell_items: items,
        }
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn direction(&self) -> Vector {
        self.frame.dir
    }

    fn fast_parity(&self, p: &Point) -> Option<bool> {
        let [qu, qv, depth] = self.frame.project(p);
        let q = [qu, qv];
        let mut cell = [0usize; 2];
        for k in 0..2 {
            let f = (q[k] - self.grid_min[k]) / self.cell_size[k];
            if f < 0.0 || f >= self.dims[k] as f64 + 1e-9 {
                return Some(false);
            }
            cell[k] = (f as usize).min(self.dims[k] - 1);
        }
        let c = cell[1] * self.dims[0] + cell[0];
        let (s, e) = (self.cell_start[c] as usize, self.cell_start[c + 1] as usize);
        let mut crossings = 0u32;
        for &ti in &self.cell_items[s..e] {
            let t = self.mesh.triangles[ti as usize];
            let tri = t.map(|i| self.projected[i as usize]);
            match cross_projected(tri, q) {
                Crossing::Miss => {}
                Crossing::Hit(d) => {
                    if d > depth {
                        crossings += 1;
                    }
                }
                Crossing::Degenerate => return None,
            }
        }
        Some(crossings % 2 == 1)
    }

    fn brute_force_parity(&self, p: &Point, dir: Vector) -> Option<bool> {
        let frame = Frame::new(dir);
        let [qu, qv, depth] = frame.project(p);
        let mut crossings = 0u32;
        for t in &self.mesh.triangles {
            let tri = t.map(|i| frame.project(&self.mesh.vertices[i as usize]));
            match cross_projected(tri, [qu, qv]) {
                Crossing::Miss => {}
                Crossing::Hit(d) => {
                    if d > depth {
                        crossings += 1;
                    }
                }
                Crossing::Degenerate => return None,
            }
        }
        Some(crossings % 2 == 1)
    }
}

impl OccupancyOracle for MeshOccupancy {
    fn contains(&self, p: &Point) -> bool {
        if !self.bbox.contains(p) {
            return false;
        }
        if let Some(inside) = self.fast_parity(p) {
            return inside;
        }
        let d = self.frame.dir;
        let alternates = [
            Vector::new(d.y, d.z, d.x),
            Vector::new(-d.z, d.x, d.y),
            Vector::new(0.5377, -0.3219, 0.7796),
            Vector::new(-0.2718, 0.8281, 0.4905),
            Vector::new(0.7071, 0.0123, -0.7071),
        ];
        for alt in alternates {
            if let Some(inside) = self.brute_force_parity(p, alt) {
                return inside;
            }
        }
        // Every ray grazes a feature: the point lies on the surface itself.
        true
    }
}

/// Binary labels (1 = inside) for `points` against a watertight mesh.
pub fn occupancy_query<R: Rng + ?Sized>(mesh: &TriangleMesh, points: &[Point], rng: &mut R) -> Result<Vec<u8>> {
    let occ = MeshOccupancy::new(mesh, rng)?;
    Ok(points.iter().map(|p| occ.contains(p) as u8).collect())
}

/// Monte Carlo ratio `volume(inner ∩ outer) / volume(outer)` over the unit
/// cube.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VolumeEstimate {
    pub fraction: f64,
    pub standard_error: f64,
    pub outer_hits: usize,
    pub samples: usize,
}

pub fn volume_fraction<R: Rng + ?Sized>(
    inner: &dyn OccupancyOracle,
    outer: &dyn OccupancyOracle,
    n: usize,
    rng: &mut R,
) -> Result<VolumeEstimate> {
    if n < 10_000 {
        return Err(GeometryError::Parameter(format!(
            "volume estimate needs at least 10^4 samples, got {}",
            n
        )));
    }
    let mut outer_hits = 0usize;
    let mut inner_hits = 0usize;
    for _ in 0..n {
        let p = Point::new(rng.random(), rng.random(), rng.random());
        if outer.contains(&p) {
            outer_hits += 1;
            if inner.contains(&p) {
                inner_hits += 1;
            }
        }
    }
    if outer_hits == 0 {
        return Err(GeometryError::Degenerate(
            "outer solid has zero estimated volume".into(),
        ));
    }
    let f = inner_hits as f64 / outer_hits as f64;
    Ok(VolumeEstimate {
        fraction: f,
        standard_error: (f * (1.0 - f) / outer_hits as f64).sqrt(),
        outer_hits,
        samples: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marching_cubes::{marching_cubes, VoxelGrid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sphere_mesh(r: f64, n: usize) -> TriangleMesh {
        let c = Point::new(0.5, 0.5, 0.5);
        let grid = VoxelGrid::sample_unit_cube(n, |p| (0.5 - ((p - c).norm() - r) * 20.0).clamp(0.0, 1.0));
        marching_cubes(&grid, 0.5)
    }

    #[test]
    fn sphere_examples() {
        let mesh = sphere_mesh(0.3, 48);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let labels = occupancy_query(
            &mesh,
            &[Point::new(0.5, 0.5, 0.5), Point::new(0.95, 0.5, 0.5), Point::new(2.0, 0.5, 0.5)],
            &mut rng,
        )
        .unwrap();
        assert_eq!(labels, vec![1, 0, 0]);
    }

    #[test]
    fn cube_mesh_agrees_with_box_membership() {
        let mesh = crate::mesh::tests::cube(0.2, 0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let occ = MeshOccupancy::new(&mesh, &mut rng).unwrap();
        for _ in 0..10_000 {
            let p = Point::new(rng.random(), rng.random(), rng.random());
            let dist_to_surface = (0..3)
                .map(|i| (p[i] - 0.2).abs().min((p[i] - 0.7).abs()))
                .fold(f64::INFINITY, f64::min);
            if dist_to_surface < 1e-6 {
                continue;
            }
            let truth = (0..3).all(|i| p[i] > 0.2 && p[i] < 0.7);
            assert_eq!(occ.contains(&p), truth, "{:?}", p);
        }
    }

    #[test]
    fn axis_aligned_rays_through_vertices_recast() {
        // the cube's edges and vertices sit exactly on axis-aligned rays
        let mesh = crate::mesh::tests::cube(0.0, 1.0);
        let occ = MeshOccupancy::with_direction(&mesh, Vector::x());
        assert!(occ.contains(&Point::new(0.5, 0.5, 0.5)));
        assert!(occ.contains(&Point::new(0.5, 0.0 + 1e-3, 0.5)));
        assert!(!occ.contains(&Point::new(-0.5, 0.5, 0.5)));
        // ray runs exactly along an edge plane
        assert!(occ.contains(&Point::new(0.25, 0.5, 0.999)));
    }

    #[test]
    fn non_watertight_mesh_is_rejected() {
        let mut mesh = crate::mesh::tests::cube(0.0, 1.0);
        mesh.triangles.pop();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            occupancy_query(&mesh, &[Point::origin()], &mut rng),
            Err(GeometryError::NotWatertight { .. })
        ));
    }

    #[test]
    fn volume_fraction_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let same = volume_fraction(&UnitCube, &UnitCube, 10_000, &mut rng).unwrap();
        assert_eq!(same.fraction, 1.0);

        let half = |p: &Point| p.x < 0.5;
        let est = volume_fraction(&half, &UnitCube, 1_000_000, &mut rng).unwrap();
        assert!((est.fraction - 0.5).abs() < 3.0 * est.standard_error, "{:?}", est);

        let ball = |p: &Point| (p - Point::new(0.5, 0.5, 0.5)).norm() < 0.3;
        let est = volume_fraction(&ball, &UnitCube, 1_000_000, &mut rng).unwrap();
        let exact = 4.0 / 3.0 * std::f64::consts::PI * 0.027;
        assert!((est.fraction - exact).abs() < 3.0 * est.standard_error, "{:?}", est);

        let nothing = |_: &Point| false;
        assert!(volume_fraction(&UnitCube, &nothing, 10_000, &mut rng).is_err());
        assert!(volume_fraction(&UnitCube, &UnitCube, 10, &mut rng).is_err());
    }

    #[test]
    fn volume_error_shrinks_with_sqrt_n() {
        let ball = |p: &Point| (p - Point::new(0.5, 0.5, 0.5)).norm() < 0.3;
        let spread = |n: usize| {
            let runs: Vec<f64> = (0..20)
                .map(|s| {
                    let mut rng = ChaCha8Rng::seed_from_u64(100 + s);
                    volume_fraction(&ball, &UnitCube, n, &mut rng).unwrap().fraction
                })
                .collect();
            let mean = runs.iter().sum::<f64>() / runs.len() as f64;
            (runs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (runs.len() - 1) as f64).sqrt()
        };
        let ratio = spread(10_000) / spread(40_000);
        assert!(ratio > 1.3 && ratio < 3.0, "ratio {}", ratio);
    }
}
