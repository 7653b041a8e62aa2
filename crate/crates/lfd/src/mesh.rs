//! Triangle meshes in the canonical object frame: OBJ loading, unit-cube
//! normalization and area-uniform surface sampling.

use std::fs;
use std::path::Path;

use nalgebra::{Point3, Vector3};
use rand::Rng;
use thiserror::Error;

use crate::util::rng_for;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("vertex index {index} out of range at {path}:{line} (mesh has {count} vertices)")]
    IndexOutOfRange {
        path: String,
        line: usize,
        index: i64,
        count: usize,
    },
    #[error("degenerate mesh: {0}")]
    Degenerate(String),
}

/// Triangle mesh. After [`normalize_mesh`] all vertices lie inside the unit
/// cube `[-0.5, 0.5]^3` with the bounding-box center at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Point3<f64>>,
    pub triangles: Vec<[u32; 3]>,
    pub model_id: String,
}

/// Points sampled from a mesh surface together with the seed that produced
/// them.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    pub points: Vec<Point3<f64>>,
    pub seed: u64,
}

impl Mesh {
    pub fn new(vertices: Vec<Point3<f64>>, triangles: Vec<[u32; 3]>, model_id: String) -> Self {
        Self {
            vertices,
            triangles,
            model_id,
        }
    }

    /// Axis-aligned bounding box as (min, max), or None for an empty mesh.
    pub fn bounds(&self) -> Option<(Point3<f64>, Point3<f64>)> {
        let first = self.vertices.first()?;
        let mut lo = *first;
        let mut hi = *first;
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        Some((lo, hi))
    }

    pub fn triangle_area(&self, t: &[u32; 3]) -> f64 {
        let a = self.vertices[t[0] as usize];
        let b = self.vertices[t[1] as usize];
        let c = self.vertices[t[2] as usize];
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn surface_area(&self) -> f64 {
        self.triangles.iter().map(|t| self.triangle_area(t)).sum()
    }
}

/// Load a Wavefront OBJ subset: `v` and `f` records, polygonal faces
/// triangulated as a fan around the first vertex. Texture/normal indices
/// (`f 1/2/3`), materials, groups and all other records are ignored.
/// Negative (relative) indices follow the OBJ convention.
pub fn load_obj(path: &Path) -> Result<Mesh, MeshError> {
    let text = fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "mesh".to_string());
    parse_obj(&text, &path.display().to_string(), name)
}

fn parse_obj(text: &str, path: &str, model_id: String) -> Result<Mesh, MeshError> {
    let mut vertices: Vec<Point3<f64>> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some("v") => {
                let mut coords = [0.0f64; 3];
                for c in coords.iter_mut() {
                    let tok = fields.next().ok_or_else(|| MeshError::Parse {
                        path: path.to_string(),
                        line: line_no,
                        message: "vertex record needs 3 coordinates".to_string(),
                    })?;
                    *c = tok.parse::<f64>().map_err(|_| MeshError::Parse {
                        path: path.to_string(),
                        line: line_no,
                        message: format!("invalid coordinate '{tok}'"),
                    })?;
                }
                vertices.push(Point3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let mut poly: Vec<u32> = Vec::new();
                for tok in fields {
                    // Accept v, v/vt, v//vn, v/vt/vn; only the vertex index is used.
                    let vtok = tok.split('/').next().unwrap_or("");
                    let raw_idx = vtok.parse::<i64>().map_err(|_| MeshError::Parse {
                        path: path.to_string(),
                        line: line_no,
                        message: format!("invalid face index '{tok}'"),
                    })?;
                    let resolved = if raw_idx > 0 {
                        raw_idx - 1
                    } else if raw_idx < 0 {
                        vertices.len() as i64 + raw_idx
                    } else {
                        -1
                    };
                    if resolved < 0 || resolved >= vertices.len() as i64 {
                        return Err(MeshError::IndexOutOfRange {
                            path: path.to_string(),
                            line: line_no,
                            index: raw_idx,
                            count: vertices.len(),
                        });
                    }
                    poly.push(resolved as u32);
                }
                if poly.len() < 3 {
                    return Err(MeshError::Parse {
                        path: path.to_string(),
                        line: line_no,
                        message: format!("face needs at least 3 vertices, got {}", poly.len()),
                    });
                }
                for i in 1..poly.len() - 1 {
                    triangles.push([poly[0], poly[i], poly[i + 1]]);
                }
            }
            _ => {} // vn, vt, usemtl, o, g, s, mtllib, ...
        }
    }

    Ok(Mesh::new(vertices, triangles, model_id))
}

/// Serialize as ASCII OBJ (v/f records, 1-based indices).
pub fn obj_string(m: &Mesh) -> String {
    let mut out = String::new();
    for v in &m.vertices {
        out.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
    }
    for t in &m.triangles {
        out.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
    }
    out
}

pub fn save_obj(path: &Path, m: &Mesh) -> Result<(), MeshError> {
    fs::write(path, obj_string(m)).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Uniformly scale and translate so the bounding box is centered at the
/// origin and its largest extent equals one; the aspect ratio is preserved.
/// `center_on_centroid` moves the vertex centroid (instead of the bbox
/// center) to the origin, still scaling by the largest bbox extent.
pub fn normalize_mesh_with(m: &Mesh, center_on_centroid: bool) -> Result<Mesh, MeshError> {
    let (lo, hi) = m
        .bounds()
        .ok_or_else(|| MeshError::Degenerate("empty mesh".to_string()))?;
    let extent = hi - lo;
    let max_extent = extent.x.max(extent.y).max(extent.z);
    if max_extent <= 0.0 {
        return Err(MeshError::Degenerate(format!(
            "zero-extent bounding box ({extent:?})"
        )));
    }
    let scale = 1.0 / max_extent;
    let center = if center_on_centroid {
        let mut c = Vector3::zeros();
        for v in &m.vertices {
            c += v.coords;
        }
        Point3::from(c / m.vertices.len() as f64)
    } else {
        Point3::from((lo.coords + hi.coords) * 0.5)
    };
    let vertices = m
        .vertices
        .iter()
        .map(|v| Point3::from((v - center) * scale))
        .collect();
    Ok(Mesh::new(vertices, m.triangles.clone(), m.model_id.clone()))
}

/// Unit-cube normalization with the bounding-box center at the origin.
pub fn normalize_mesh(m: &Mesh) -> Result<Mesh, MeshError> {
    normalize_mesh_with(m, false)
}

/// Sample `n` points area-uniformly from the surface: triangles are chosen
/// proportionally to area and points are barycentric-uniform within each
/// triangle. Deterministic for a given seed.
pub fn sample_surface(m: &Mesh, n: usize, seed: u64) -> Result<PointSet, MeshError> {
    let areas: Vec<f64> = m.triangles.iter().map(|t| m.triangle_area(t)).collect();
    let total: f64 = areas.iter().sum();
    if total <= 0.0 || m.triangles.is_empty() {
        return Err(MeshError::Degenerate(
            "no triangle with positive area".to_string(),
        ));
    }
    let mut cumulative = Vec::with_capacity(areas.len());
    let mut acc = 0.0;
    for a in &areas {
        acc += a;
        cumulative.push(acc);
    }

    let mut rng = rng_for(seed, 0x5a);
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let r = rng.random::<f64>() * total;
        let ti = cumulative.partition_point(|&c| c < r).min(areas.len() - 1);
        let t = m.triangles[ti];
        let a = m.vertices[t[0] as usize];
        let b = m.vertices[t[1] as usize];
        let c = m.vertices[t[2] as usize];
        // Square-root trick for uniform barycentric coordinates.
        let r1: f64 = rng.random();
        let r2: f64 = rng.random();
        let s = r1.sqrt();
        let (wa, wb, wc) = (1.0 - s, s * (1.0 - r2), s * r2);
        points.push(Point3::from(
            a.coords * wa + b.coords * wb + c.coords * wc,
        ));
    }
    Ok(PointSet { points, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obj(text: &str) -> Result<Mesh, MeshError> {
        parse_obj(text, "test.obj", "test".to_string())
    }

    #[test]
    fn minimal_triangle_file_parses() {
        let m = obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        assert_eq!(m.vertices.len(), 3);
        assert_eq!(m.triangles, vec![[0, 1, 2]]);
    }

    #[test]
    fn quad_face_becomes_fan_of_two_triangles() {
        let m = obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n").unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn out_of_range_index_reports_line() {
        let err = obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n").unwrap_err();
        match err {
            MeshError::IndexOutOfRange { line, index, .. } => {
                assert_eq!(line, 4);
                assert_eq!(index, 9);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn malformed_vertex_reports_line() {
        let err = obj("v 0 zero 0\n").unwrap_err();
        match err {
            MeshError::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn slash_indices_and_negative_indices_parse() {
        let m = obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1/1 2//2 -1\n").unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2]]);
    }

    #[test]
    fn normalize_scales_and_centers_bbox() {
        // bbox [0,2]x[0,1]x[0,1] -> [-0.5,0.5]x[-0.25,0.25]x[-0.25,0.25]
        let m = Mesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(2.0, 1.0, 1.0),
                Point3::new(2.0, 0.0, 1.0),
            ],
            vec![[0, 1, 2]],
            "box".to_string(),
        );
        let n = normalize_mesh(&m).unwrap();
        let (lo, hi) = n.bounds().unwrap();
        assert!((lo - Point3::new(-0.5, -0.25, -0.25)).norm() < 1e-12);
        assert!((hi - Point3::new(0.5, 0.25, 0.25)).norm() < 1e-12);
    }

    #[test]
    fn normalize_is_idempotent() {
        let m = Mesh::new(
            vec![
                Point3::new(0.0, 0.3, 0.0),
                Point3::new(5.0, 1.0, 2.0),
                Point3::new(2.0, 0.0, 1.0),
                Point3::new(1.0, 4.0, -3.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
            "m".to_string(),
        );
        let once = normalize_mesh(&m).unwrap();
        let twice = normalize_mesh(&once).unwrap();
        for (a, b) in once.vertices.iter().zip(&twice.vertices) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn normalize_invariants_hold() {
        let m = Mesh::new(
            vec![
                Point3::new(-3.0, 0.3, 9.0),
                Point3::new(5.0, 1.0, 2.0),
                Point3::new(2.0, -4.0, 1.0),
            ],
            vec![[0, 1, 2]],
            "m".to_string(),
        );
        let n = normalize_mesh(&m).unwrap();
        let (lo, hi) = n.bounds().unwrap();
        let ext = hi - lo;
        let max_extent = ext.x.max(ext.y).max(ext.z);
        assert!((max_extent - 1.0).abs() < 1e-9);
        assert!(((lo.coords + hi.coords) * 0.5).norm() < 1e-9);
        for v in &n.vertices {
            for k in 0..3 {
                assert!(v[k] >= -0.5 - 1e-9 && v[k] <= 0.5 + 1e-9);
            }
        }
    }

    #[test]
    fn degenerate_mesh_is_rejected() {
        let empty = Mesh::new(vec![], vec![], "e".to_string());
        assert!(matches!(
            normalize_mesh(&empty),
            Err(MeshError::Degenerate(_))
        ));
        let point = Mesh::new(
            vec![Point3::new(1.0, 1.0, 1.0); 3],
            vec![[0, 1, 2]],
            "p".to_string(),
        );
        assert!(matches!(
            normalize_mesh(&point),
            Err(MeshError::Degenerate(_))
        ));
    }

    #[test]
    fn sampled_points_lie_on_the_triangle_plane() {
        let m = Mesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2]],
            "tri".to_string(),
        );
        let ps = sample_surface(&m, 1000, 11).unwrap();
        assert_eq!(ps.points.len(), 1000);
        for p in &ps.points {
            assert!(p.z.abs() < 1e-9);
            assert!(p.x >= -1e-9 && p.y >= -1e-9 && p.x + p.y <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn area_proportional_allocation_matches_binomial_expectation() {
        // Areas 1 and 3: the larger triangle gets 30000 of 40000 +- 3 sigma.
        let m = Mesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(2.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
                Point3::new(0.0, 0.0, 5.0),
                Point3::new(2.0, 0.0, 5.0),
                Point3::new(0.0, 3.0, 5.0),
            ],
            vec![[0, 1, 2], [3, 4, 5]],
            "two".to_string(),
        );
        let ps = sample_surface(&m, 40_000, 99).unwrap();
        let second = ps.points.iter().filter(|p| p.z > 2.5).count();
        assert!(
            (second as i64 - 30_000).unsigned_abs() < 600,
            "second triangle got {second}"
        );
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = Mesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2]],
            "tri".to_string(),
        );
        let a = sample_surface(&m, 128, 7).unwrap();
        let b = sample_surface(&m, 128, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_area_mesh_cannot_be_sampled() {
        let m = Mesh::new(
            vec![Point3::new(0.0, 0.0, 0.0); 3],
            vec![[0, 1, 2]],
            "flat".to_string(),
        );
        assert!(matches!(
            sample_surface(&m, 10, 1),
            Err(MeshError::Degenerate(_))
        ));
    }
}
