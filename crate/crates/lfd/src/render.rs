//! Pose sampling and a CPU rasterizer producing location fields.
//!
//! The rasterizer depth-buffers triangles and interpolates the vertices'
//! canonical coordinates perspective-correctly (attribute/z and 1/z are the
//! linear quantities in screen space). Pixel ownership on shared edges
//! follows a top-left fill rule, so adjacent triangles never double-cover
//! or drop a pixel. No near-plane clipping: triangles with a vertex at or
//! behind the camera are skipped entirely, which cannot happen for poses
//! from [`sample_pose`] (the whole unit cube stays in front).

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{Domain, LocationField};
use crate::geom::{Camera, Pose, PoseParams};
use crate::mesh::Mesh;
use crate::util::rng_for;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("zero-area image: {0}x{1}")]
    ZeroArea(u32, u32),
    #[error("invalid pose distribution: {0}")]
    InvalidPoseConfig(String),
    #[error(transparent)]
    Camera(#[from] crate::geom::GeomError),
}

/// Viewpoint distribution. Angles in degrees; `fill` is the fraction of
/// min(width, height) the projected unit-cube extent should cover.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PoseConfig {
    pub azimuth_deg: [f64; 2],
    pub elevation_deg: [f64; 2],
    pub inplane_deg: [f64; 2],
    pub fill: [f64; 2],
}

impl Default for PoseConfig {
    fn default() -> Self {
        Self {
            azimuth_deg: [0.0, 360.0],
            elevation_deg: [-10.0, 40.0],
            inplane_deg: [-10.0, 10.0],
            fill: [0.70, 0.95],
        }
    }
}

impl PoseConfig {
    pub fn validate(&self) -> Result<(), RenderError> {
        for (name, r) in [
            ("azimuth_deg", self.azimuth_deg),
            ("elevation_deg", self.elevation_deg),
            ("inplane_deg", self.inplane_deg),
            ("fill", self.fill),
        ] {
            if !(r[0] <= r[1]) {
                return Err(RenderError::InvalidPoseConfig(format!(
                    "{name} range [{}, {}] has min > max",
                    r[0], r[1]
                )));
            }
        }
        if self.fill[0] <= 0.0 || self.fill[1] > 1.0 {
            return Err(RenderError::InvalidPoseConfig(format!(
                "fill range [{}, {}] must lie in (0, 1]",
                self.fill[0], self.fill[1]
            )));
        }
        Ok(())
    }
}

// The unit cube is the universal bound for normalized meshes, so distances
// solved against its corners keep any model fully inside the frame.
const CUBE_CORNERS: [[f64; 3]; 8] = [
    [-0.5, -0.5, -0.5],
    [0.5, -0.5, -0.5],
    [-0.5, 0.5, -0.5],
    [0.5, 0.5, -0.5],
    [-0.5, -0.5, 0.5],
    [0.5, -0.5, 0.5],
    [-0.5, 0.5, 0.5],
    [0.5, 0.5, 0.5],
];

// Extent of the projected cube measured symmetrically about the optical
// axis. Perspective shifts the bbox off-center, so bounding the symmetric
// extent (rather than the raw bbox width) keeps the object fully inside a
// frame whose principal point is centered.
fn projected_extent(cam: &Camera, pose: &Pose) -> f64 {
    let mut m = 0.0f64;
    for c in CUBE_CORNERS {
        let q = pose.rotation * Vector3::new(c[0], c[1], c[2]) + pose.translation;
        m = m
            .max((cam.focal * q.x / q.z).abs())
            .max((cam.focal * q.y / q.z).abs());
    }
    2.0 * m
}

/// Draw a viewpoint: uniform azimuth/elevation/in-plane angles, distance
/// solved by bisection so the projected unit-cube extent covers the drawn
/// fill fraction of the image. Deterministic for a given seed.
pub fn sample_pose(cfg: &PoseConfig, cam: &Camera, seed: u64) -> Pose {
    let mut rng = rng_for(seed, 0x90);
    let draw = |rng: &mut rand_chacha::ChaCha8Rng, r: [f64; 2]| -> f64 {
        r[0] + rng.random::<f64>() * (r[1] - r[0])
    };
    let azimuth_deg = draw(&mut rng, cfg.azimuth_deg);
    let elevation_deg = draw(&mut rng, cfg.elevation_deg);
    let inplane_deg = draw(&mut rng, cfg.inplane_deg);
    let target = draw(&mut rng, cfg.fill) * cam.width.min(cam.height) as f64;

    let pose_at = |d: f64| {
        Pose::from_params(PoseParams {
            azimuth_deg,
            elevation_deg,
            inplane_deg,
            distance: d,
        })
    };
    // The projected extent decreases monotonically with distance.
    let mut lo = 0.5 * 3.0f64.sqrt() + 1e-3;
    let mut hi = 4.0;
    while projected_extent(cam, &pose_at(hi)) > target && hi < 1e6 {
        hi *= 2.0;
    }
    if projected_extent(cam, &pose_at(lo)) < target {
        return pose_at(lo);
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if projected_extent(cam, &pose_at(mid)) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    pose_at(0.5 * (lo + hi))
}

/// Pose metadata as a location field stores it: only the rigid transform,
/// rounded to f32 precision (the on-disk resolution). The orthonormality
/// invariants hold to about 1e-7 instead of machine epsilon.
pub fn quantize_pose(pose: &Pose) -> Pose {
    let mut p = Pose::new(pose.rotation, pose.translation);
    for v in p.rotation.iter_mut() {
        *v = *v as f32 as f64;
    }
    for v in p.translation.iter_mut() {
        *v = *v as f32 as f64;
    }
    p
}

#[inline]
fn orient2d(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

// Boundary pixels belong to top edges (horizontal, interior below) and
// left edges, for triangles oriented to positive signed area in y-down
// screen coordinates.
#[inline]
fn is_top_left(a: (f64, f64), b: (f64, f64)) -> bool {
    let dx = b.0 - a.0;
    let dy = b.1 - a.1;
    (dy == 0.0 && dx > 0.0) || dy < 0.0
}

/// Rasterize a mesh into a location field: each covered pixel stores the
/// perspective-correct interpolation of the triangle vertices' canonical
/// coordinates for the nearest surface, the mask records coverage.
pub fn render_location_field(
    mesh: &Mesh,
    pose: &Pose,
    cam: &Camera,
    width: u32,
    height: u32,
) -> Result<LocationField, RenderError> {
    if width == 0 || height == 0 {
        return Err(RenderError::ZeroArea(width, height));
    }
    // Metadata is stored at f32 precision (the on-disk resolution) so a
    // field written to a file reads back bit-identical.
    let camera = Camera {
        focal: cam.focal as f32 as f64,
        px: cam.px as f32 as f64,
        py: cam.py as f32 as f64,
        width,
        height,
    };
    // Rasterize with the exact pose the metadata will claim.
    let pose = quantize_pose(pose);
    let pose = &pose;
    let cam = &camera;
    let mut lf = LocationField::empty(width, height, camera);
    lf.pose = Some(pose.clone());
    lf.model_id = Some(mesh.model_id.clone());
    lf.domain = Domain::Rendered;
    let mut zbuf = vec![f64::INFINITY; (width * height) as usize];

    for tri in &mesh.triangles {
        // Canonical positions double as the interpolated attribute.
        let mut attr = [Vector3::zeros(); 3];
        let mut cam_pt = [Vector3::zeros(); 3];
        let mut behind = false;
        for k in 0..3 {
            let p = mesh.vertices[tri[k] as usize];
            attr[k] = p.coords;
            cam_pt[k] = pose.rotation * p.coords + pose.translation;
            if cam_pt[k].z <= 1e-9 {
                behind = true;
            }
        }
        if behind {
            continue;
        }
        let mut scr = [(0.0f64, 0.0f64); 3];
        for k in 0..3 {
            scr[k] = (
                cam.focal * cam_pt[k].x / cam_pt[k].z + cam.px,
                cam.focal * cam_pt[k].y / cam_pt[k].z + cam.py,
            );
        }
        let mut area = orient2d(scr[0], scr[1], scr[2]);
        if area == 0.0 {
            continue;
        }
        if area < 0.0 {
            scr.swap(1, 2);
            attr.swap(1, 2);
            cam_pt.swap(1, 2);
            area = -area;
        }
        let accept_zero = [
            is_top_left(scr[1], scr[2]),
            is_top_left(scr[2], scr[0]),
            is_top_left(scr[0], scr[1]),
        ];
        let invz = [
            1.0 / cam_pt[0].z,
            1.0 / cam_pt[1].z,
            1.0 / cam_pt[2].z,
        ];

        let u_lo = scr[0].0.min(scr[1].0).min(scr[2].0);
        let u_hi = scr[0].0.max(scr[1].0).max(scr[2].0);
        let v_lo = scr[0].1.min(scr[1].1).min(scr[2].1);
        let v_hi = scr[0].1.max(scr[1].1).max(scr[2].1);
        let x0 = (u_lo - 0.5).ceil().max(0.0) as i64;
        let x1 = ((u_hi - 0.5).floor() as i64).min(width as i64 - 1);
        let y0 = (v_lo - 0.5).ceil().max(0.0) as i64;
        let y1 = ((v_hi - 0.5).floor() as i64).min(height as i64 - 1);

        for y in y0..=y1 {
            for x in x0..=x1 {
                let p = (x as f64 + 0.5, y as f64 + 0.5);
                let w = [
                    orient2d(scr[1], scr[2], p),
                    orient2d(scr[2], scr[0], p),
                    orient2d(scr[0], scr[1], p),
                ];
                let inside = (0..3).all(|k| w[k] > 0.0 || (w[k] == 0.0 && accept_zero[k]));
                if !inside {
                    continue;
                }
                let l = [w[0] / area, w[1] / area, w[2] / area];
                let inv_depth = l[0] * invz[0] + l[1] * invz[1] + l[2] * invz[2];
                let depth = 1.0 / inv_depth;
                let idx = (y as u32 * width + x as u32) as usize;
                if depth < zbuf[idx] {
                    zbuf[idx] = depth;
                    let mut c = [0.0f32; 3];
                    for k in 0..3 {
                        let over_z = l[0] * attr[0][k] * invz[0]
                            + l[1] * attr[1][k] * invz[1]
                            + l[2] * attr[2][k] * invz[2];
                        c[k] = (over_z * depth) as f32;
                    }
                    lf.coords[idx] = c;
                    lf.mask[idx] = true;
                }
            }
        }
    }
    Ok(lf)
}
