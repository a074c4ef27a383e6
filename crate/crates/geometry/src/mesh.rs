use std::collections::HashMap;

use nalgebra::{Point3, Vector3};
use rand::Rng;

use crate::error::{GeometryError, Result};

pub type Point = Point3<f64>;
pub type Vector = Vector3<f64>;

/// Axis-aligned bounding box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn unit_cube() -> Self {
        Self {
            min: Point::origin(),
            max: Point::new(1.0, 1.0, 1.0),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let mut bb = Aabb {
            min: first,
            max: first,
        };
        for p in it {
            bb.min = bb.min.inf(p);
            bb.max = bb.max.sup(p);
        }
        Some(bb)
    }

    pub fn extent(&self) -> Vector {
        self.max - self.min
    }

    pub fn center(&self) -> Point {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn inflate(&self, by: f64) -> Self {
        let d = Vector::repeat(by);
        Self {
            min: self.min - d,
            max: self.max + d,
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Euclidean distance from `p` to the box; 0 inside.
    pub fn distance(&self, p: &Point) -> f64 {
        let mut sq = 0.0;
        for i in 0..3 {
            let d = (self.min[i] - p[i]).max(0.0).max(p[i] - self.max[i]);
            sq += d * d;
        }
        sq.sqrt()
    }
}

/// Non-empty list of points.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl From<Vec<Point>> for PointCloud {
    fn from(points: Vec<Point>) -> Self {
        Self { points }
    }
}

/// Indexed triangle surface.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    /// Validates indices and coordinates.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let mesh = Self {
            vertices,
            triangles,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(v) = self
            .vertices
            .iter()
            .position(|p| !p.coords.iter().all(|c| c.is_finite()))
        {
            return Err(GeometryError::InvalidMesh(format!("vertex {} is not finite", v)));
        }
        let n = self.vertices.len() as u32;
        if let Some(t) = self.triangles.iter().position(|t| t.iter().any(|&i| i >= n)) {
            return Err(GeometryError::InvalidMesh(format!(
                "triangle {} references a vertex beyond {}",
                t, n
            )));
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, i: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[i];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn bounding_box(&self) -> Option<Aabb> {
        Aabb::from_points(&self.vertices)
    }

    /// Number of undirected edges not shared by exactly two triangles.
    pub fn boundary_edge_count(&self) -> usize {
        let mut counts: HashMap<(u32, u32), u32> = HashMap::with_capacity(self.triangles.len() * 2);
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *counts.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        counts.values().filter(|&&c| c != 2).count()
    }

    pub fn is_watertight(&self) -> bool {
        !self.triangles.is_empty() && self.boundary_edge_count() == 0
    }

    pub fn check_watertight(&self) -> Result<()> {
        let bad = self.boundary_edge_count();
        if bad > 0 || self.triangles.is_empty() {
            return Err(GeometryError::NotWatertight { bad_edges: bad });
        }
        Ok(())
    }

    pub fn triangle_area(&self, i: usize) -> f64 {
        let [a, b, c] = self.triangle(i);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|i| self.triangle_area(i)).sum()
    }

    /// Signed enclosed volume; positive for outward-facing triangles.
    pub fn signed_volume(&self) -> f64 {
        (0..self.triangles.len())
            .map(|i| {
                let [a, b, c] = self.triangle(i);
                a.coords.dot(&b.coords.cross(&c.coords)) / 6.0
            })
            .sum()
    }

    pub fn max_edge_length(&self) -> f64 {
        (0..self.triangles.len())
            .map(|i| {
                let [a, b, c] = self.triangle(i);
                (b - a).norm().max((c - b).norm()).max((a - c).norm())
            })
            .fold(0.0, f64::max)
    }

    /// Applies `p -> scale * p + offset` to every vertex.
    pub fn transformed(&self, scale: f64, offset: Vector) -> Self {
        Self {
            vertices: self
                .vertices
                .iter()
                .map(|p| Point::from(p.coords * scale + offset))
                .collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Uniform scale and translation so the longest bounding-box axis spans
    /// exactly `[margin, 1 - margin]`, with the other axes centered.
    pub fn normalize_unit_cube(&self, margin: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&margin) {
            return Err(GeometryError::Parameter(format!(
                "margin {} outside [0, 0.5)",
                margin
            )));
        }
        let bb = self
            .bounding_box()
            .ok_or_else(|| GeometryError::Degenerate("mesh has no vertices".into()))?;
        let longest = bb.extent().max();
        if !(longest > 0.0) || !longest.is_finite() {
            return Err(GeometryError::Degenerate(format!(
                "bounding box extent {}",
                longest
            )));
        }
        let scale = (1.0 - 2.0 * margin) / longest;
        let offset = Vector::repeat(0.5) - bb.center().coords * scale;
        Ok(self.transformed(scale, offset))
    }

    /// Disjoint union of two meshes.
    pub fn merged(&self, other: &TriangleMesh) -> Self {
        let base = self.vertices.len() as u32;
        let mut out = self.clone();
        out.vertices.extend_from_slice(&other.vertices);
        out.triangles
            .extend(other.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
        out
    }
}

/// Area-uniform surface samples: a triangle is picked with probability
/// proportional to its area, then a point uniformly inside it.
pub fn surface_sample<R: Rng + ?Sized>(mesh: &TriangleMesh, n: usize, rng: &mut R) -> Result<PointCloud> {
    if n == 0 {
        return Err(GeometryError::Parameter("sample count must be at least 1".into()));
    }
    let mut cumulative = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for i in 0..mesh.triangles.len() {
        total += mesh.triangle_area(i);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(GeometryError::Degenerate("mesh has zero surface area".into()));
    }
    let points = (0..n)
        .map(|_| {
            let u = rng.random::<f64>() * total;
            let i = cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1);
            let [a, b, c] = mesh.triangle(i);
            let r1 = rng.random::<f64>().sqrt();
            let r2 = rng.random::<f64>();
            Point::from(a.coords * (1.0 - r1) + b.coords * (r1 * (1.0 - r2)) + c.coords * (r1 * r2))
        })
        .collect();
    Ok(PointCloud::new(points))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn cube(lo: f64, hi: f64) -> TriangleMesh {
        let v = |x: usize, y: usize, z: usize| {
            Point::new(
                if x == 1 { hi } else { lo },
                if y == 1 { hi } else { lo },
                if z == 1 { hi } else { lo },
            )
        };
        let vertices = (0..8).map(|i| v(i & 1, (i >> 1) & 1, (i >> 2) & 1)).collect();
        let quads = [
            [0, 2, 3, 1],
            [4, 5, 7, 6],
            [0, 1, 5, 4],
            [2, 6, 7, 3],
            [0, 4, 6, 2],
            [1, 3, 7, 5],
        ];
        let triangles = quads
            .iter()
            .flat_map(|q: &[u32; 4]| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
            .collect();
        TriangleMesh::new(vertices, triangles).unwrap()
    }

    #[test]
    fn cube_is_watertight_and_outward() {
        let m = cube(0.0, 1.0);
        assert!(m.is_watertight());
        assert!((m.signed_volume() - 1.0).abs() < 1e-12);
        assert!((m.area() - 6.0).abs() < 1e-12);
        let mut open = m.clone();
        open.triangles.pop();
        assert!(matches!(
            open.check_watertight(),
            Err(GeometryError::NotWatertight { bad_edges: 3 })
        ));
    }

    #[test]
    fn rejects_bad_indices() {
        assert!(TriangleMesh::new(vec![Point::origin()], vec![[0, 0, 1]]).is_err());
        assert!(TriangleMesh::new(vec![Point::new(f64::NAN, 0.0, 0.0)], vec![]).is_err());
    }

    #[test]
    fn normalize_examples() {
        let m = cube(-2.0, 2.0).normalize_unit_cube(0.05).unwrap();
        let bb = m.bounding_box().unwrap();
        for i in 0..3 {
            assert!((bb.min[i] - 0.05).abs() < 1e-12);
            assert!((bb.max[i] - 0.95).abs() < 1e-12);
        }
        let again = m.normalize_unit_cube(0.05).unwrap();
        for (a, b) in m.vertices.iter().zip(&again.vertices) {
            assert!((a - b).norm() < 1e-9);
        }
        let flat = TriangleMesh::new(vec![Point::origin(); 3], vec![[0, 1, 2]]).unwrap();
        assert!(matches!(
            flat.normalize_unit_cube(0.1),
            Err(GeometryError::Degenerate(_))
        ));
    }

    #[test]
    fn normalize_preserves_aspect_ratio() {
        let m = cube(0.0, 1.0).transformed(1.0, Vector::zeros());
        let stretched = TriangleMesh {
            vertices: m
                .vertices
                .iter()
                .map(|p| Point::new(p.x * 3.0 - 1.0, p.y * 0.5, p.z * 2.0))
                .collect(),
            triangles: m.triangles.clone(),
        };
        let n = stretched.normalize_unit_cube(0.1).unwrap();
        let before = stretched.bounding_box().unwrap().extent();
        let after = n.bounding_box().unwrap().extent();
        assert!((before.x / before.y - after.x / after.y).abs() < 1e-9);
        assert!((before.z / before.y - after.z / after.y).abs() < 1e-9);
        assert!((after.x - 0.8).abs() < 1e-12);
    }

    #[test]
    fn samples_stay_on_single_triangle() {
        let tri = TriangleMesh::new(
            vec![Point::new(0.0, 0.0, 0.0), Point::new(1.0, 0.0, 0.0), Point::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pc = surface_sample(&tri, 2000, &mut rng).unwrap();
        for p in &pc.points {
            // barycentric coordinates of the right triangle are (1-x-y, x, y)
            let (u, v) = (p.x, p.y);
            assert!(u >= 0.0 && v >= 0.0 && u + v <= 1.0 + 1e-12 && p.z == 0.0);
        }
    }

    #[test]
    fn sampling_follows_area_ratio() {
        // two triangles with area ratio 9:1
        let mesh = TriangleMesh::new(
            vec![
                Point::new(0.0, 0.0, 0.0),
                Point::new(3.0, 0.0, 0.0),
                Point::new(0.0, 3.0, 0.0),
                Point::new(10.0, 0.0, 0.0),
                Point::new(11.0, 0.0, 0.0),
                Point::new(10.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [3, 4, 5]],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let pc = surface_sample(&mesh, n, &mut rng).unwrap();
        let big = pc.points.iter().filter(|p| p.x < 5.0).count() as f64;
        let p = 0.9;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((big - p * n as f64).abs() < 3.0 * sigma, "{}", big);
    }

    #[test]
    fn zero_area_mesh_is_rejected() {
        let flat = TriangleMesh::new(vec![Point::origin(); 3], vec![[0, 1, 2]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(surface_sample(&flat, 10, &mut rng).is_err());
        assert!(surface_sample(&cube(0.0, 1.0), 0, &mut rng).is_err());
    }
}
