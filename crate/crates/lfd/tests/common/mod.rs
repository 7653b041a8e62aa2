//! Shared test oracles, independent of the library's rendering path.

use lfd::geom::{Camera, Pose};
use lfd::mesh::Mesh;
use nalgebra::Vector3;

/// Reference location field computed by per-pixel ray casting
/// (Moller-Trumbore against every triangle, nearest hit wins). Shares no
/// code with the rasterizer beyond the camera model definition.
pub struct RaycastField {
    pub width: u32,
    pub height: u32,
    pub mask: Vec<bool>,
    pub coords: Vec<[f64; 3]>,
}

pub fn raycast_field(mesh: &Mesh, pose: &Pose, cam: &Camera, width: u32, height: u32) -> RaycastField {
    let n = (width * height) as usize;
    let mut mask = vec![false; n];
    let mut coords = vec![[0.0f64; 3]; n];

    // Camera-space triangle vertices plus their canonical attributes.
    let tris: Vec<[(Vector3<f64>, Vector3<f64>); 3]> = mesh
        .triangles
        .iter()
        .map(|t| {
            let mut out = [(Vector3::zeros(), Vector3::zeros()); 3];
            for k in 0..3 {
                let p = mesh.vertices[t[k] as usize].coords;
                out[k] = (pose.rotation * p + pose.translation, p);
            }
            out
        })
        .collect();

    for y in 0..height {
        for x in 0..width {
            let dir = Vector3::new(
                (x as f64 + 0.5 - cam.px) / cam.focal,
                (y as f64 + 0.5 - cam.py) / cam.focal,
                1.0,
            );
            let mut best_t = f64::INFINITY;
            let mut best: Option<[f64; 3]> = None;
            for tri in &tris {
                if let Some((t, u, v)) = moller_trumbore(&dir, tri) {
                    if t < best_t {
                        best_t = t;
                        let attr = tri[0].1 * (1.0 - u - v) + tri[1].1 * u + tri[2].1 * v;
                        best = Some([attr.x, attr.y, attr.z]);
                    }
                }
            }
            if let Some(c) = best {
                let i = (y * width + x) as usize;
                mask[i] = true;
                coords[i] = c;
            }
        }
    }
    RaycastField {
        width,
        height,
        mask,
        coords,
    }
}

/// Ray-triangle intersection for a ray from the origin along `dir`.
/// Returns (t, u, v) with barycentric weights (1-u-v, u, v).
fn moller_trumbore(
    dir: &Vector3<f64>,
    tri: &[(Vector3<f64>, Vector3<f64>); 3],
) -> Option<(f64, f64, f64)> {
    let e1 = tri[1].0 - tri[0].0;
    let e2 = tri[2].0 - tri[0].0;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv_det = 1.0 / det;
    let s = -tri[0].0;
    let u = s.dot(&p) * inv_det;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv_det;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv_det;
    (t > 1e-9).then_some((t, u, v))
}

/// Pixels within one pixel of a mask boundary (8-neighborhood differs),
/// which both renderers may legitimately assign differently.
pub fn silhouette_band(mask: &[bool], width: u32, height: u32) -> Vec<bool> {
    let (w, h) = (width as i64, height as i64);
    let mut band = vec![false; mask.len()];
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            'scan: for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    if mask[(ny * w + nx) as usize] != mask[i] {
                        band[i] = true;
                        break 'scan;
                    }
                }
            }
        }
    }
    band
}

/// Fraction of pixels (outside the oracle's silhouette band) where the
/// rasterized field and the ray-cast oracle agree on mask and, when both
/// are masked, on coordinates within `tol`.
pub fn agreement_fraction(lf: &lfd::LocationField, oracle: &RaycastField, tol: f64) -> f64 {
    assert_eq!((lf.width, lf.height), (oracle.width, oracle.height));
    let band = silhouette_band(&oracle.mask, oracle.width, oracle.height);
    let mut considered = 0usize;
    let mut agree = 0usize;
    for i in 0..lf.mask.len() {
        if band[i] {
            continue;
        }
        considered += 1;
        if lf.mask[i] != oracle.mask[i] {
            continue;
        }
        if lf.mask[i] {
            let ok = (0..3).all(|k| (lf.coords[i][k] as f64 - oracle.coords[i][k]).abs() < tol);
            if !ok {
                continue;
            }
        }
        agree += 1;
    }
    if considered == 0 {
        return 1.0;
    }
    agree as f64 / considered as f64
}
