//! Procedural shape classes: boxes, mugs and bottles.

use std::f64::consts::PI;

use mendkit_geometry::{marching_cubes, Point, TriangleMesh, Vector, VoxelGrid};
use rand::Rng;

use crate::config::ShapeClass;
use crate::error::{MendError, Result};

/// Resolution of the grid used to mesh the mug's distance field.
const MUG_GRID: usize = 48;
/// Segments around the axis of a lathed bottle.
const LATHE_SEGMENTS: usize = 32;

/// Draws `count` watertight meshes of `class`, each normalized into
/// `[margin, 1 - margin]^3`. With `jitter = 0` every mesh is the class
/// prototype.
pub fn gen_class<R: Rng + ?Sized>(
    class: ShapeClass,
    count: usize,
    jitter: f64,
    margin: f64,
    rng: &mut R,
) -> Result<Vec<TriangleMesh>> {
    gen_class_with_knobs(class, count, jitter, margin, 0, rng)
}

/// Like [`gen_class`], with `knobs` spheres of random size and placement
/// fused onto the outer wall of each mug. The knobs are per-instance detail
/// that no class prior can predict. Only mugs support knobs.
pub fn gen_class_with_knobs<R: Rng + ?Sized>(
    class: ShapeClass,
    count: usize,
    jitter: f64,
    margin: f64,
    knobs: usize,
    rng: &mut R,
) -> Result<Vec<TriangleMesh>> {
    if knobs > 0 && class != ShapeClass::Mugs {
        return Err(MendError::Parameter(format!("knobs are only supported for mugs, not {:?}", class)));
    }
    if count == 0 {
        return Err(MendError::Parameter("shape count must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&jitter) {
        return Err(MendError::Parameter(format!("jitter {} outside [0, 1)", jitter)));
    }
    (0..count)
        .map(|_| {
            let mut j = |base: f64| base * (1.0 + jitter * rng.random_range(-1.0..=1.0));
            let raw = match class {
                ShapeClass::Boxes => cuboid(j(1.0), j(0.7), j(0.45)),
                ShapeClass::Mugs => {
                    let mut p = MugParams {
                        radius: j(0.30),
                        height: j(0.75),
                        wall: j(0.06),
                        handle_major: j(0.17),
                        handle_minor: j(0.045),
                        knobs: Vec::new(),
                    };
                    for _ in 0..knobs {
                        let theta = rng.random_range(0.35 * PI..1.65 * PI);
                        let z = p.height * rng.random_range(0.15..0.85);
                        let r = rng.random_range(0.04..0.08);
                        let rho = p.radius + 0.3 * r;
                        p.knobs.push((Point::new(rho * theta.cos(), rho * theta.sin(), z), r));
                    }
                    mug(&p)?
                }
                ShapeClass::Bottles => bottle(&BottleParams {
                    radius: j(0.25),
                    body_height: j(0.55),
                    shoulder_height: j(0.2),
                    neck_radius: j(0.09),
                    neck_height: j(0.25),
                }),
            };
            let mesh = raw.normalize_unit_cube(margin)?;
            mesh.check_watertight()?;
            Ok(mesh)
        })
        .collect()
}

/// Axis-aligned box `[0, a] x [0, b] x [0, c]` with outward triangles.
pub fn cuboid(a: f64, b: f64, c: f64) -> TriangleMesh {
    let vertices = (0..8)
        .map(|i| {
            Point::new(
                if i & 1 != 0 { a } else { 0.0 },
                if i & 2 != 0 { b } else { 0.0 },
                if i & 4 != 0 { c } else { 0.0 },
            )
        })
        .collect();
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
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    TriangleMesh {
        vertices,
        triangles,
    }
}

#[derive(Clone, Debug)]
struct MugParams {
    radius: f64,
    height: f64,
    wall: f64,
    handle_major: f64,
    handle_minor: f64,
    /// Sphere centers and radii fused onto the body.
    knobs: Vec<(Point, f64)>,
}

fn capped_cylinder_sdf(p: &Point, radius: f64, z0: f64, z1: f64) -> f64 {
    let dr = (p.x * p.x + p.y * p.y).sqrt() - radius;
    let half = 0.5 * (z1 - z0);
    let dz = (p.z - 0.5 * (z0 + z1)).abs() - half;
    let outside = Vector::new(dr.max(0.0), dz.max(0.0), 0.0).norm();
    outside + dr.max(dz).min(0.0)
}

/// Cup with a flat bottom and an open top, plus a torus handle on the +x
/// side, meshed from the zero level of a distance field.
fn mug(p: &MugParams) -> Result<TriangleMesh> {
    let handle_center = Point::new(p.radius + 0.5 * p.handle_major, 0.0, 0.5 * p.height);
    let sdf = |q: &Point| {
        let body = capped_cylinder_sdf(q, p.radius, 0.0, p.height);
        let d = q - handle_center;
        let ring = ((d.x * d.x + d.z * d.z).sqrt() - p.handle_major).hypot(d.y) - p.handle_minor;
        let cavity = capped_cylinder_sdf(q, p.radius - p.wall, p.wall, p.height + 1.0);
        let solid = p.knobs.iter().fold(body.min(ring), |acc, (c, r)| acc.min((q - c).norm() - r));
        solid.max(-cavity)
    };
    let lo = Point::new(-p.radius, -p.radius, 0.0) - Vector::repeat(0.15);
    let hi_x = handle_center.x + p.handle_major + p.handle_minor;
    let hi = Point::new(hi_x, p.radius, p.height) + Vector::repeat(0.15);
    let extent = (hi - lo).max();
    let spacing = extent / (MUG_GRID - 1) as f64;
    let mut values = Vec::with_capacity(MUG_GRID.pow(3));
    for k in 0..MUG_GRID {
        for j in 0..MUG_GRID {
            for i in 0..MUG_GRID {
                let q = lo + Vector::new(i as f64, j as f64, k as f64) * spacing;
                values.push(-sdf(&q));
            }
        }
    }
    let grid = VoxelGrid::new(MUG_GRID, lo, spacing, values)?;
    Ok(marching_cubes(&grid, 0.0))
}

#[derive(Clone, Debug)]
struct BottleParams {
    radius: f64,
    body_height: f64,
    shoulder_height: f64,
    neck_radius: f64,
    neck_height: f64,
}

/// Revolves a `(radius, z)` profile whose first and last points lie on the
/// axis.
pub fn lathe(profile: &[(f64, f64)], segments: usize) -> TriangleMesh {
    assert!(profile.len() >= 3 && segments >= 3);
    let rings = profile.len() - 2;
    let mut vertices = vec![Point::new(0.0, 0.0, profile[0].1)];
    for &(r, z) in &profile[1..profile.len() - 1] {
        for s in 0..segments {
            let a = 2.0 * PI * s as f64 / segments as f64;
            vertices.push(Point::new(r * a.cos(), r * a.sin(), z));
        }
    }
    let top = vertices.len() as u32;
    vertices.push(Point::new(0.0, 0.0, profile[profile.len() - 1].1));
    let ring = |k: usize, s: usize| (1 + k * segments + s % segments) as u32;
    let mut triangles = Vec::new();
    for s in 0..segments {
        triangles.push([0, ring(0, s + 1), ring(0, s)]);
        for k in 0..rings - 1 {
            let (a, b) = (ring(k, s), ring(k, s + 1));
            let (c, d) = (ring(k + 1, s), ring(k + 1, s + 1));
            triangles.push([a, b, d]);
            triangles.push([a, d, c]);
        }
        triangles.push([top, ring(rings - 1, s), ring(rings - 1, s + 1)]);
    }
    let mut mesh = TriangleMesh {
        vertices,
        triangles,
    };
    if mesh.signed_volume() < 0.0 {
        for t in &mut mesh.triangles {
            t.swap(1, 2);
        }
    }
    mesh
}

fn bottle(p: &BottleParams) -> TriangleMesh {
    let mut profile = vec![(0.0, 0.0), (p.radius, 0.0), (p.radius, p.body_height)];
    let steps = 6;
    for i in 1..=steps {
        let t = i as f64 / steps as f64;
        let blend = 0.5 - 0.5 * (PI * t).cos();
        let r = p.radius + (p.neck_radius - p.radius) * blend;
        profile.push((r, p.body_height + t * p.shoulder_height));
    }
    let top = p.body_height + p.shoulder_height + p.neck_height;
    profile.push((p.neck_radius, top));
    profile.push((0.0, top));
    lathe(&profile, LATHE_SEGMENTS)
}
