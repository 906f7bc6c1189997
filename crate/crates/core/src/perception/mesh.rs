use std::fmt::Write as _;
use std::path::Path;

use super::shape::ContainerShape;
use super::PerceptionError;
use crate::geom::Point3;

/// Indexed triangle mesh, counter-clockwise faces seen from outside.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[usize; 3]>,
}

impl TriMesh {
    /// Wavefront OBJ text with 1-based face indices.
    pub fn to_obj(&self) -> String {
        let mut out = String::from("# container mesh\n");
        for v in &self.vertices {
            let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
        }
        for t in &self.triangles {
            let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        out
    }
}

/// Rings of `segments` vertices per slice joined by quad strips, closed with
/// triangle fans over the first and last rings. Coordinates are in the
/// container frame: axis through the origin, heights as in the shape.
pub fn shape_mesh(shape: &ContainerShape, segments: usize) -> Result<TriMesh, PerceptionError> {
    let slices = shape.slices();
    if slices.iter().filter(|s| s.radius > 0.0).count() < 2 || segments < 3 {
        return Err(PerceptionError::DegenerateShape);
    }
    let n = segments;
    let mut vertices = Vec::with_capacity(slices.len() * n);
    for s in slices {
        for j in 0..n {
            let a = std::f64::consts::TAU * j as f64 / n as f64;
            vertices.push(Point3::new(s.radius * a.cos(), s.radius * a.sin(), s.z));
        }
    }
    let idx = |ring: usize, j: usize| ring * n + j % n;
    let mut triangles = Vec::with_capacity(2 * n * (slices.len() - 1) + 2 * (n - 2));
    for ring in 0..slices.len() - 1 {
        for j in 0..n {
            let (a, b, c, d) = (
                idx(ring, j),
                idx(ring, j + 1),
                idx(ring + 1, j + 1),
                idx(ring + 1, j),
            );
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    let top = slices.len() - 1;
    for j in 1..n - 1 {
        triangles.push([idx(0, 0), idx(0, j + 1), idx(0, j)]);
        triangles.push([idx(top, 0), idx(top, j), idx(top, j + 1)]);
    }
    Ok(TriMesh {
        vertices,
        triangles,
    })
}

/// Writes the shape as an OBJ file.
pub fn mesh_export(
    shape: &ContainerShape,
    segments: usize,
    path: &Path,
) -> Result<TriMesh, PerceptionError> {
    let mesh = shape_mesh(shape, segments)?;
    std::fs::write(path, mesh.to_obj())
        .map_err(|e| PerceptionError::InvalidShape(format!("{}: {e}", path.display())))?;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::shape_metrics;
    use std::collections::HashMap;

    /// Signed volume by the divergence theorem over the faces.
    fn signed_volume(mesh: &TriMesh) -> f64 {
        mesh.triangles
            .iter()
            .map(|t| {
                let (a, b, c) = (
                    mesh.vertices[t[0]],
                    mesh.vertices[t[1]],
                    mesh.vertices[t[2]],
                );
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    #[test]
    fn two_square_rings() {
        let shape = ContainerShape::from_radii(0.0, 10.0, &[5.0, 5.0]).unwrap();
        let mesh = shape_mesh(&shape, 4).unwrap();
        assert_eq!(mesh.vertices.len(), 8);
        // 8 side triangles plus 2 per cap.
        assert_eq!(mesh.triangles.len(), 8 + 2 * 2);
        let obj = mesh.to_obj();
        assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 8);
        assert_eq!(obj.lines().filter(|l| l.starts_with("f ")).count(), 12);
    }

    #[test]
    fn cylinder_mesh_is_closed_and_matches_volume() {
        let shape = ContainerShape::from_radii(0.0, 2.0, &[30.0; 51]).unwrap();
        let mesh = shape_mesh(&shape, 36).unwrap();
        let mut edges: HashMap<(usize, usize), i32> = HashMap::new();
        for t in &mesh.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_default() += if a < b { 1 } else { -1 };
            }
        }
        // Every edge is shared by two oppositely oriented faces.
        assert!(edges.values().all(|&v| v == 0));
        let v_mesh = signed_volume(&mesh) / 1000.0;
        let v_slices = shape_metrics(&shape).volume_ml;
        assert!(v_mesh > 0.0);
        assert!(
            ((v_mesh - v_slices) / v_slices).abs() < 0.05,
            "{v_mesh} vs {v_slices}"
        );
    }

    #[test]
    fn degenerate_shapes_rejected() {
        let shape = ContainerShape::from_radii(0.0, 2.0, &[0.0, 3.0, 0.0]).unwrap();
        assert_eq!(shape_mesh(&shape, 8), Err(PerceptionError::DegenerateShape));
    }
}
