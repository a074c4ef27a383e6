use std::io::{BufRead, Write};

use crate::error::{GeometryError, Result};
use crate::mesh::{Point, TriangleMesh};

/// Reads `v x y z` and triangular `f i j k` records (1-based, `i/t/n`
/// forms and negative indices accepted). Other record types are ignored.
pub fn read_obj<R: BufRead>(reader: R) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = lineno + 1;
        let err = |message: String| GeometryError::Obj {
            line: line_no,
            message,
        };
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let coords: Vec<f64> = parts
                    .take(3)
                    .map(|s| s.parse::<f64>().map_err(|e| err(format!("bad coordinate `{}`: {}", s, e))))
                    .collect::<Result<_>>()?;
                if coords.len() != 3 {
                    return Err(err("vertex needs three coordinates".into()));
                }
                vertices.push(Point::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let refs: Vec<&str> = parts.collect();
                if refs.len() != 3 {
                    return Err(err(format!(
                        "face has {} vertices; only triangles are supported",
                        refs.len()
                    )));
                }
                let mut tri = [0u32; 3];
                for (slot, r) in tri.iter_mut().zip(&refs) {
                    let head = r.split('/').next().unwrap_or("");
                    let idx: i64 = head
                        .parse()
                        .map_err(|e| err(format!("bad vertex index `{}`: {}", head, e)))?;
                    let resolved = if idx > 0 {
                        idx - 1
                    } else if idx < 0 {
                        vertices.len() as i64 + idx
                    } else {
                        return Err(err("vertex index 0 is invalid".into()));
                    };
                    if resolved < 0 || resolved >= vertices.len() as i64 {
                        return Err(err(format!("vertex index {} out of range", idx)));
                    }
                    *slot = resolved as u32;
                }
                triangles.push(tri);
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, triangles)
}

pub fn write_obj<W: Write>(mut writer: W, mesh: &TriangleMesh) -> Result<()> {
    for v in &mesh.vertices {
        writeln!(writer, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for t in &mesh.triangles {
        writeln!(writer, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let mesh = crate::mesh::tests::cube(0.1, 0.9 + 1e-13);
        let mut buf = Vec::new();
        write_obj(&mut buf, &mesh).unwrap();
        let back = read_obj(buf.as_slice()).unwrap();
        assert_eq!(back, mesh);
    }

    #[test]
    fn quads_are_rejected() {
        let src = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        match read_obj(src.as_bytes()) {
            Err(GeometryError::Obj { line, message }) => {
                assert_eq!(line, 5);
                assert!(message.contains("only triangles"));
            }
            other => panic!("{:?}", other),
        }
    }

    #[test]
    fn slash_and_negative_indices() {
        let src = "# comment\nv 0 0 0\nv 1 0 0\nvn 0 0 1\nv 0 1 0\nf 1/1/1 2//1 -1\n";
        let m = read_obj(src.as_bytes()).unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2]]);
        assert!(read_obj("v 0 0 0\nf 1 2 3\n".as_bytes()).is_err());
    }
}
