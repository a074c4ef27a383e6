//! Geometry for occupancy-based shape restoration: indexed triangle meshes,
//! ray-parity inside tests, area-uniform surface sampling, marching cubes
//! and the squared-distance Chamfer metric.

mod chamfer;
mod error;
mod marching_cubes;
mod mesh;
mod obj;
mod occupancy;

pub use chamfer::{chamfer_distance, KdTree};
pub use error::{GeometryError, Result};
pub use marching_cubes::{marching_cubes, VoxelGrid};
pub use mesh::{surface_sample, Aabb, Point, PointCloud, TriangleMesh, Vector};
pub use obj::{read_obj, write_obj};
pub use occupancy::{
    occupancy_query, volume_fraction, MeshOccupancy, OccupancyOracle, UnitCube, VolumeEstimate,
};
