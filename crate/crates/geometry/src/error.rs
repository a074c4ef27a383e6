use thiserror::Error;

pub type Result<T, E = GeometryError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("mesh is not watertight: {bad_edges} edges are not shared by exactly two triangles")]
    NotWatertight { bad_edges: usize },

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("OBJ line {line}: {message}")]
    Obj { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
