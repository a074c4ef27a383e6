//! Marching cubes over a regular grid.
//!
//! The 256-case triangulation table is derived at first use from the
//! corner configuration instead of being typed in. On every cube face the
//! contour segments separate inside corners (a diagonal pair of inside
//! corners is never joined), and the same rule applies from both cells
//! sharing a face, so neighbouring cells always agree on their common
//! segments. Segments are chained into loops around each cell and fanned
//! into triangles whose normals point from the inside (values >= iso)
//! towards the outside.

use std::sync::OnceLock;

use crate::error::{GeometryError, Result};
use crate::mesh::{Point, TriangleMesh, Vector};

/// Regular `n x n x n` grid of values; index `(i, j, k)` maps to
/// `origin + spacing * (i, j, k)` and is stored at `i + n * (j + n * k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    pub resolution: usize,
    pub origin: Point,
    pub spacing: f64,
    pub values: Vec<f64>,
}

impl VoxelGrid {
    pub fn new(resolution: usize, origin: Point, spacing: f64, values: Vec<f64>) -> Result<Self> {
        if resolution < 2 {
            return Err(GeometryError::Parameter(format!(
                "grid resolution {} below 2",
                resolution
            )));
        }
        if values.len() != resolution.pow(3) {
            return Err(GeometryError::Parameter(format!(
                "grid of resolution {} needs {} values, got {}",
                resolution,
                resolution.pow(3),
                values.len()
            )));
        }
        if !(spacing > 0.0) {
            return Err(GeometryError::Parameter(format!("grid spacing {}", spacing)));
        }
        Ok(Self {
            resolution,
            origin,
            spacing,
            values,
        })
    }

    /// Grid points spanning `[0, 1]^3` exactly.
    pub fn unit_cube_points(resolution: usize) -> Vec<Point> {
        let s = 1.0 / (resolution - 1) as f64;
        let mut out = Vec::with_capacity(resolution.pow(3));
        for k in 0..resolution {
            for j in 0..resolution {
                for i in 0..resolution {
                    out.push(Point::new(i as f64 * s, j as f64 * s, k as f64 * s));
                }
            }
        }
        out
    }

    /// Evaluates `f` at every grid point of the unit cube.
    pub fn sample_unit_cube(resolution: usize, f: impl Fn(&Point) -> f64) -> Self {
        let resolution = resolution.max(2);
        let values = Self::unit_cube_points(resolution).iter().map(f).collect();
        Self {
            resolution,
            origin: Point::origin(),
            spacing: 1.0 / (resolution - 1) as f64,
            values,
        }
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.resolution * (j + self.resolution * k)
    }

    pub fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> Point {
        self.origin + Vector::new(i as f64, j as f64, k as f64) * self.spacing
    }
}

/// Cube corner `c` sits at offset `(c & 1, (c >> 1) & 1, (c >> 2) & 1)`.
const fn corner_offset(c: usize) -> [usize; 3] {
    [c & 1, (c >> 1) & 1, (c >> 2) & 1]
}

/// Edge `e` joins corners `EDGES[e].0` (lower) and `EDGES[e].1` along axis
/// `EDGES[e].2`.
const EDGES: [(usize, usize, usize); 12] = {
    let mut out = [(0, 0, 0); 12];
    let mut e = 0;
    let mut axis = 0;
    while axis < 3 {
        let mut c = 0;
        while c < 8 {
            if c & (1 << axis) == 0 {
                out[e] = (c, c | (1 << axis), axis);
                e += 1;
            }
            c += 1;
        }
        axis += 1;
    }
    out
};

fn edge_between(a: usize, b: usize) -> usize {
    EDGES
        .iter()
        .position(|&(c0, c1, _)| (c0 == a && c1 == b) || (c0 == b && c1 == a))
        .expect("corners share an edge")
}

/// Corners of each face, counter-clockwise when seen from outside the cube.
fn faces() -> [[usize; 4]; 6] {
    let mut out = [[0; 4]; 6];
    for axis in 0..3 {
        let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in 0..2 {
            let corner = |ub: usize, uc: usize| (side << axis) | (ub << b) | (uc << c);
            let mut quad = [corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)];
            if side == 0 {
                quad.reverse();
            }
            out[axis * 2 + side] = quad;
        }
    }
    out
}

/// Contour loops of one corner configuration, as cycles of edge indices.
fn case_loops(case: usize, faces: &[[usize; 4]; 6]) -> Vec<Vec<u8>> {
    let inside = |c: usize| case & (1 << c) != 0;
    let mut next = [usize::MAX; 12];
    for quad in faces {
        let mut entering = Vec::new();
        let mut order = Vec::new();
        for i in 0..4 {
            let (a, b) = (quad[i], quad[(i + 1) % 4]);
            if inside(a) != inside(b) {
                order.push((edge_between(a, b), inside(b)));
                if inside(b) {
                    entering.push(order.len() - 1);
                }
            }
        }
        // pair every outside->inside crossing with the next inside->outside one
        for &s in &entering {
            let n = order.len();
            let exit = (1..n)
                .map(|d| (s + d) % n)
                .find(|&j| !order[j].1)
                .expect("crossings alternate");
            next[order[s].0] = order[exit].0;
        }
    }
    let mut visited = [false; 12];
    let mut loops = Vec::new();
    for start in 0..12 {
        if next[start] == usize::MAX || visited[start] {
            continue;
        }
        let mut cycle = Vec::new();
        let mut e = start;
        while !visited[e] {
            visited[e] = true;
            cycle.push(e as u8);
            e = next[e];
        }
        loops.push(cycle);
    }
    loops
}

fn shares_face(faces: &[[usize; 4]; 6], a: u8, b: u8) -> bool {
    let (ea, eb) = (EDGES[a as usize], EDGES[b as usize]);
    faces.iter().any(|q| [ea.0, ea.1, eb.0, eb.1].iter().all(|c| q.contains(c)))
}

fn build_case(case: usize, faces: &[[usize; 4]; 6]) -> Vec<[u8; 3]> {
    let mut tris = Vec::new();
    for cycle in case_loops(case, faces) {
        match triangulate(&cycle, &|a, b| shares_face(faces, a, b)) {
            Some(t) => tris.extend(t),
            None => {
                for i in 1..cycle.len() - 1 {
                    tris.push([cycle[0], cycle[i], cycle[i + 1]]);
                }
            }
        }
    }
    tris
}

/// Triangulates a loop without any diagonal lying inside a cube face, where
/// a neighbouring cell could pick the same segment.
fn triangulate(poly: &[u8], shares_face: &impl Fn(u8, u8) -> bool) -> Option<Vec<[u8; 3]>> {
    let m = poly.len();
    if m < 3 {
        return Some(Vec::new());
    }
    if m == 3 {
        return Some(vec![[poly[0], poly[1], poly[2]]]);
    }
    let (first, last) = (poly[0], poly[m - 1]);
    for k in 1..m - 1 {
        let apex = poly[k];
        if (k > 1 && shares_face(first, apex)) || (k < m - 2 && shares_face(apex, last)) {
            continue;
        }
        let (Some(left), Some(right)) = (triangulate(&poly[..=k], shares_face), triangulate(&poly[k..], shares_face)) else {
            continue;
        };
        let mut out = vec![[first, apex, last]];
        out.extend(left);
        out.extend(right);
        return Some(out);
    }
    None
}

fn case_table() -> &'static Vec<Vec<[u8; 3]>> {
    static TABLE: OnceLock<Vec<Vec<[u8; 3]>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let faces = faces();
        (0..256).map(|c| build_case(c, &faces)).collect()
    })
}

/// Iso-surface of `grid` at `iso`, with linear interpolation along cell
/// edges. Values `>= iso` count as inside. Vertices are shared between
/// neighbouring cells, so the surface is closed wherever it stays clear of
/// the grid boundary. A level outside the value range yields an empty mesh.
pub fn marching_cubes(grid: &VoxelGrid, iso: f64) -> TriangleMesh {
    let n = grid.resolution;
    let table = case_table();
    let mut vertex_ids = vec![u32::MAX; n * n * n * 3];
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();

    for k in 0..n - 1 {
        for j in 0..n - 1 {
            for i in 0..n - 1 {
                let mut case = 0usize;
                let mut vals = [0.0; 8];
                for (c, v) in vals.iter_mut().enumerate() {
                    let [dx, dy, dz] = corner_offset(c);
                    *v = grid.value(i + dx, j + dy, k + dz);
                    if *v >= iso {
                        case |= 1 << c;
                    }
                }
                let tris = &table[case];
                if tris.is_empty() {
                    continue;
                }
                let mut local = [u32::MAX; 12];
                for tri in tris {
                    let mut ids = [0u32; 3];
                    for (slot, &e) in ids.iter_mut().zip(tri) {
                        let e = e as usize;
                        if local[e] == u32::MAX {
                            let (c0, c1, axis) = EDGES[e];
                            let [ox, oy, oz] = corner_offset(c0);
                            let key = grid.index(i + ox, j + oy, k + oz) * 3 + axis;
                            if vertex_ids[key] == u32::MAX {
                                let (v0, v1) = (vals[c0], vals[c1]);
                                let t = if v1 != v0 { ((iso - v0) / (v1 - v0)).clamp(0.0, 1.0) } else { 0.5 };
                                let p0 = grid.point(i + ox, j + oy, k + oz);
                                let mut p = p0;
                                p[axis] += t * grid.spacing;
                                vertex_ids[key] = vertices.len() as u32;
                                vertices.push(p);
                            }
                            local[e] = vertex_ids[key];
                        }
                        *slot = local[e];
                    }
                    triangles.push(ids);
                }
            }
        }
    }
    TriangleMesh {
        vertices,
        triangles,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn table_shape() {
        let table = case_table();
        assert!(table[0].is_empty() && table[255].is_empty());
        assert_eq!(table[1].len(), 1);
        // complementary single-corner cases
        assert_eq!(table[254].len(), 1);
        assert!(table.iter().all(|t| t.len() <= 10));
        let unique: std::collections::HashSet<_> = EDGES.iter().map(|e| (e.0, e.1)).collect();
        assert_eq!(unique.len(), 12);
    }

    #[test]
    fn every_loop_avoids_in_face_diagonals() {
        let faces = faces();
        for case in 0..256 {
            for cycle in case_loops(case, &faces) {
                assert!(
                    triangulate(&cycle, &|a, b| shares_face(&faces, a, b)).is_some(),
                    "case {} loop {:?}",
                    case,
                    cycle
                );
            }
        }
    }

    #[test]
    fn constant_grid_is_empty() {
        let g = VoxelGrid::sample_unit_cube(8, |_| 0.0);
        assert!(marching_cubes(&g, 0.5).is_empty());
        let g = VoxelGrid::sample_unit_cube(8, |_| 1.0);
        assert!(marching_cubes(&g, 0.5).is_empty());
    }

    #[test]
    fn sphere_is_watertight_and_accurate() {
        let c = Point::new(0.5, 0.5, 0.5);
        let r = 0.3;
        let n = 64;
        let g = VoxelGrid::sample_unit_cube(n, |p| 1.0 / (1.0 + (((p - c).norm() - r) * 40.0).exp()));
        let m = marching_cubes(&g, 0.5);
        assert!(m.is_watertight());
        let spacing = 1.0 / (n - 1) as f64;
        for v in &m.vertices {
            assert!(((v - c).norm() - r).abs() < 2.0 * spacing);
        }
        let exact = 4.0 / 3.0 * std::f64::consts::PI * r.powi(3);
        assert!((m.signed_volume() - exact).abs() / exact < 0.02, "{}", m.signed_volume());
    }

    #[test]
    fn half_space_on_grid_plane_is_planar() {
        let n = 9;
        let g = VoxelGrid::sample_unit_cube(n, |p| {
            let plane = 4.0 / (n - 1) as f64;
            if (p.x - plane).abs() < 1e-12 {
                0.5
            } else if p.x < plane {
                1.0
            } else {
                0.0
            }
        });
        let m = marching_cubes(&g, 0.5);
        assert!(!m.is_empty());
        for v in &m.vertices {
            assert!((v.x - 0.5).abs() < 1e-6, "{:?}", v);
        }
    }

    #[test]
    fn iso_outside_range_is_empty() {
        let g = VoxelGrid::sample_unit_cube(6, |p| p.x * 0.2);
        assert!(marching_cubes(&g, 0.9).is_empty());
        assert!(marching_cubes(&g, -1.0).is_empty());
    }

    #[test]
    fn resolution_two_does_not_crash() {
        let g = VoxelGrid::sample_unit_cube(2, |p| p.x);
        let m = marching_cubes(&g, 0.5);
        assert_eq!(m.triangles.len(), 2);
        assert!(VoxelGrid::new(1, Point::origin(), 1.0, vec![0.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        // Random fields whose boundary layer is forced outside always give
        // closed surfaces, including the ambiguous face configurations.
        #[test]
        fn random_interior_fields_are_watertight(values in proptest::collection::vec(0.0f64..1.0, 6 * 6 * 6)) {
            let n = 8;
            let mut grid_vals = vec![0.0; n * n * n];
            for k in 1..n - 1 {
                for j in 1..n - 1 {
                    for i in 1..n - 1 {
                        grid_vals[i + n * (j + n * k)] = values[(i - 1) + 6 * ((j - 1) + 6 * (k - 1))];
                    }
                }
            }
            let g = VoxelGrid::new(n, Point::origin(), 1.0 / (n - 1) as f64, grid_vals).unwrap();
            let m = marching_cubes(&g, 0.5);
            if !m.is_empty() {
                prop_assert_eq!(m.boundary_edge_count(), 0);
                prop_assert!(m.signed_volume() > 0.0);
            }
        }
    }
}
