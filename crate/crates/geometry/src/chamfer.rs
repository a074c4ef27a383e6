use crate::error::{GeometryError, Result};
use crate::mesh::{Point, PointCloud};

const LEAF_SIZE: usize = 8;

#[derive(Clone, Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Static 3-D tree with exact nearest-neighbour search.
#[derive(Clone, Debug)]
pub struct KdTree {
    points: Vec<Point>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn build(points: &[Point]) -> Self {
        let mut tree = Self {
            points: points.to_vec(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build_node(0, points.len());
        }
        tree
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return self.nodes.len() - 1;
        }
        let slice = &self.points[start..end];
        let axis = (0..3)
            .max_by(|&a, &b| {
                let spread = |k: usize| {
                    let (lo, hi) = slice
                        .iter()
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[k]), hi.max(p[k])));
                    hi - lo
                };
                spread(a).total_cmp(&spread(b))
            })
            .unwrap();
        let mid = start + (end - start) / 2;
        self.points[start..end].select_nth_unstable_by(mid - start, |a, b| a[axis].total_cmp(&b[axis]));
        let value = self.points[mid][axis];
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Squared distance from `q` to its nearest stored point.
    pub fn nearest_squared(&self, q: &Point) -> Option<f64> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = f64::INFINITY;
        self.search(0, q, &mut best);
        Some(best)
    }

    fn search(&self, node: usize, q: &Point, best: &mut f64) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for p in &self.points[start..end] {
                    let d = (p - q).norm_squared();
                    if d < *best {
                        *best = d;
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                if diff * diff <= *best {
                    self.search(far, q, best);
                }
            }
        }
    }
}

/// Symmetric mean of squared nearest-neighbour distances:
/// `mean_x min_y |x-y|^2 + mean_y min_x |x-y|^2`.
pub fn chamfer_distance(x: &PointCloud, y: &PointCloud) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(GeometryError::Parameter(
            "chamfer distance needs two non-empty point sets".into(),
        ));
    }
    let one_way = |from: &PointCloud, to: &PointCloud| {
        let tree = KdTree::build(&to.points);
        let sum: f64 = from
            .points
            .iter()
            .map(|p| tree.nearest_squared(p).expect("non-empty tree"))
            .sum();
        sum / from.len() as f64
    };
    Ok(one_way(x, y) + one_way(y, x))
}
