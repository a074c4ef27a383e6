//! Analytic break sets and band-controlled fracturing.

use log::debug;
use mendkit_geometry::{surface_sample, Aabb, OccupancyOracle, Point, TriangleMesh, Vector};
use nalgebra::{Quaternion, UnitQuaternion};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::config::CutKind;
use crate::error::{MendError, Result};

pub const MAX_BISECTION_STEPS: usize = 64;
pub const MAX_RETRIES: usize = 20;
/// Fewest inside Monte Carlo points accepted for placing a cut.
const MIN_INSIDE_POINTS: usize = 500;

/// Region of space whose intersection with the complete shape is the
/// fractured part. `o_B(x) = 1` on the kept side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BreakSet {
    /// Kept side `normal · x <= offset`.
    Plane { normal: [f64; 3], offset: f64 },
    /// Kept side is the outside of the ellipsoid with these principal axes
    /// (unit rows) and radii.
    Ellipsoid {
        center: [f64; 3],
        axes: [[f64; 3]; 3],
        radii: [f64; 3],
    },
}

impl BreakSet {
    pub fn contains(&self, p: &Point) -> bool {
        match self {
            BreakSet::Plane { normal, offset } => Vector::from(*normal).dot(&p.coords) <= *offset,
            BreakSet::Ellipsoid { center, axes, radii } => {
                let d = p - Point::from(*center);
                let q: f64 = (0..3)
                    .map(|i| {
                        let t = Vector::from(axes[i]).dot(&d) / radii[i];
                        t * t
                    })
                    .sum();
                q > 1.0
            }
        }
    }

    pub fn label(&self, p: &Point) -> u8 {
        self.contains(p) as u8
    }
}

impl OccupancyOracle for BreakSet {
    fn contains(&self, p: &Point) -> bool {
        BreakSet::contains(self, p)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fracture {
    pub break_set: BreakSet,
    /// Removed share of the complete volume measured on the placement
    /// points.
    pub fraction: f64,
    pub attempts: usize,
}

/// Monte Carlo points inside a shape, drawn uniformly from its bounding box.
pub fn inside_points<R: Rng + ?Sized>(
    occupancy: &dyn OccupancyOracle,
    bounds: &Aabb,
    n: usize,
    rng: &mut R,
) -> Vec<Point> {
    let extent = bounds.extent();
    let candidates: Vec<Point> = (0..n)
        .map(|_| {
            bounds.min
                + Vector::new(
                    rng.random::<f64>() * extent.x,
                    rng.random::<f64>() * extent.y,
                    rng.random::<f64>() * extent.z,
                )
        })
        .collect();
    let labels = occupancy.contains_many(&candidates);
    candidates
        .into_iter()
        .zip(labels)
        .filter_map(|(p, inside)| inside.then_some(p))
        .collect()
}

fn removed_fraction(break_set: &BreakSet, inside: &[Point]) -> f64 {
    let removed = inside.iter().filter(|p| !break_set.contains(p)).count();
    removed as f64 / inside.len() as f64
}

/// Bisects `make(s)` over `s in [lo_s, hi_s]`, where the removed fraction
/// grows with `s`, until it is close to `target` inside `band`.
fn bisect(
    inside: &[Point],
    band: (f64, f64),
    target: f64,
    (mut lo_s, mut hi_s): (f64, f64),
    make: impl Fn(f64) -> BreakSet,
) -> Option<(BreakSet, f64)> {
    let tol = (0.25 * (band.1 - band.0)).min(0.005);
    let mut best: Option<(BreakSet, f64)> = None;
    for _ in 0..MAX_BISECTION_STEPS {
        let s = 0.5 * (lo_s + hi_s);
        let b = make(s);
        let f = removed_fraction(&b, inside);
        if (band.0..=band.1).contains(&f) {
            let closer = best.as_ref().is_none_or(|(_, bf)| (f - target).abs() < (bf - target).abs());
            if closer {
                best = Some((b, f));
            }
            if (f - target).abs() <= tol {
                break;
            }
        }
        if f < target {
            lo_s = s;
        } else {
            hi_s = s;
        }
    }
    best
}

/// Plane cut with the given normal whose removed fraction is near `target`.
pub fn place_plane(inside: &[Point], normal: Vector, band: (f64, f64), target: f64) -> Option<(BreakSet, f64)> {
    let n = normal.normalize();
    let (lo, hi) = inside.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let s = n.dot(&p.coords);
        (lo.min(s), hi.max(s))
    });
    // larger s removes more, so the offset runs from hi down to lo
    bisect(inside, band, target, (0.0, 1.0), |s| BreakSet::Plane {
        normal: [n.x, n.y, n.z],
        offset: hi - s * (hi - lo),
    })
}

fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> UnitQuaternion<f64> {
    let mut g = || -> f64 { StandardNormal.sample(rng) };
    UnitQuaternion::from_quaternion(Quaternion::new(g(), g(), g(), g()))
}

fn place_ellipsoid<R: Rng + ?Sized>(
    mesh: &TriangleMesh,
    inside: &[Point],
    band: (f64, f64),
    target: f64,
    rng: &mut R,
) -> Result<Option<(BreakSet, f64)>> {
    let center = surface_sample(mesh, 1, rng)?.points[0];
    let rot = random_rotation(rng).to_rotation_matrix();
    let axes = [0, 1, 2].map(|i| {
        let c = rot.matrix().column(i);
        [c[0], c[1], c[2]]
    });
    let shape: [f64; 3] = [1.0, rng.random_range(0.5..1.0), rng.random_range(0.5..1.0)];
    let reach = 2.0 * 3f64.sqrt() / shape[1].min(shape[2]);
    Ok(bisect(inside, band, target, (0.0, reach), |s| BreakSet::Ellipsoid {
        center: [center.x, center.y, center.z],
        axes,
        radii: shape.map(|r| r * s.max(1e-12)),
    }))
}

/// Cuts `mesh` so that the removed share of its volume falls in `band`.
/// Every attempt draws a fresh orientation and a target uniformly in the
/// band.
pub fn fracture<R: Rng + ?Sized>(
    mesh: &TriangleMesh,
    occupancy: &dyn OccupancyOracle,
    band: (f64, f64),
    cut: CutKind,
    samples: usize,
    rng: &mut R,
) -> Result<Fracture> {
    let (lo, hi) = band;
    if !(0.0 < lo && lo < hi && hi < 1.0) {
        return Err(MendError::Parameter(format!("band [{}, {}] not inside (0, 1)", lo, hi)));
    }
    let bounds = mesh
        .bounding_box()
        .ok_or_else(|| MendError::Fracture("empty mesh".into()))?;
    let inside = inside_points(occupancy, &bounds, samples, rng);
    if inside.len() < MIN_INSIDE_POINTS {
        return Err(MendError::Fracture(format!(
            "only {} of {} placement points fell inside the shape",
            inside.len(),
            samples
        )));
    }
    for attempt in 1..=MAX_RETRIES {
        let target = rng.random_range(lo..=hi);
        let use_plane = match cut {
            CutKind::Plane => true,
            CutKind::Ellipsoid => false,
            CutKind::Mixed => rng.random_bool(0.5),
        };
        let placed = if use_plane {
            let n: [f64; 3] = UnitSphere.sample(rng);
            place_plane(&inside, Vector::from(n), band, target)
        } else {
            place_ellipsoid(mesh, &inside, band, target, rng)?
        };
        match placed {
            Some((break_set, fraction)) => {
                return Ok(Fracture {
                    break_set,
                    fraction,
                    attempts: attempt,
                })
            }
            None => debug!("fracture attempt {} missed band [{}, {}]", attempt, lo, hi),
        }
    }
    Err(MendError::Fracture(format!(
        "no cut reached band [{}, {}] after {} attempts",
        lo, hi, MAX_RETRIES
    )))
}
