//! Pinhole camera model and rigid object poses.
//!
//! All 3D models live in a canonical frame (unit cube centered at the
//! origin). A [`Pose`] maps canonical coordinates into the camera frame,
//! `p_cam = R * p + t`, and a [`Camera`] projects camera-frame points onto
//! the image plane with `u = focal * x / z + px`.

use nalgebra::{Matrix3, Point3, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("point at depth {0} is behind the camera")]
    BehindCamera(f64),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
}

/// Pinhole intrinsics. Focal length and principal point are in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub focal: f64,
    pub px: f64,
    pub py: f64,
    pub width: u32,
    pub height: u32,
}

impl Camera {
    /// Camera with the principal point at the image center.
    pub fn centered(focal: f64, width: u32, height: u32) -> Self {
        Self {
            focal,
            px: width as f64 / 2.0,
            py: height as f64 / 2.0,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        if !(self.focal > 0.0) {
            return Err(GeomError::InvalidCamera(format!(
                "focal must be positive, got {}",
                self.focal
            )));
        }
        if self.px < 0.0
            || self.py < 0.0
            || self.px > self.width as f64
            || self.py > self.height as f64
        {
            return Err(GeomError::InvalidCamera(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.px, self.py, self.width, self.height
            )));
        }
        Ok(())
    }
}

/// Pose parameters of a camera orbiting the canonical frame origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseParams {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub inplane_deg: f64,
    pub distance: f64,
}

/// Rigid transform from the canonical object frame into the camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    /// Object-to-camera rotation, orthonormal with determinant +1.
    pub rotation: Matrix3<f64>,
    /// Translation in the camera frame, canonical units.
    pub translation: Vector3<f64>,
    /// Parametric form when the pose was produced by the sampler.
    pub params: Option<PoseParams>,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
            params: None,
        }
    }

    /// Build the rotation from viewpoint angles: azimuth about the object's
    /// vertical axis, then elevation, then in-plane roll about the optical
    /// axis. The object center ends up at distance `d` on the optical axis.
    pub fn from_params(params: PoseParams) -> Self {
        let az = params.azimuth_deg.to_radians();
        let el = params.elevation_deg.to_radians();
        let ip = params.inplane_deg.to_radians();
        let r_az = Matrix3::new(
            az.cos(),
            0.0,
            az.sin(),
            0.0,
            1.0,
            0.0,
            -az.sin(),
            0.0,
            az.cos(),
        );
        let r_el = Matrix3::new(
            1.0,
            0.0,
            0.0,
            0.0,
            el.cos(),
            -el.sin(),
            0.0,
            el.sin(),
            el.cos(),
        );
        let r_ip = Matrix3::new(
            ip.cos(),
            -ip.sin(),
            0.0,
            ip.sin(),
            ip.cos(),
            0.0,
            0.0,
            0.0,
            1.0,
        );
        Self {
            rotation: r_ip * r_el * r_az,
            translation: Vector3::new(0.0, 0.0, params.distance),
            params: Some(params),
        }
    }

    pub fn transform(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    /// Largest deviation of `R^T R` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let e = self.rotation.transpose() * self.rotation - Matrix3::identity();
        e.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Geodesic angle between two rotations, in degrees.
pub fn rotation_angle_deg(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let r = a.transpose() * b;
    let c = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    c.acos().to_degrees()
}

/// Project a canonical-frame point to pixel coordinates and camera depth.
pub fn project(
    cam: &Camera,
    pose: &Pose,
    p: &Point3<f64>,
) -> Result<(f64, f64, f64), GeomError> {
    let q = pose.transform(p);
    if q.z <= 0.0 {
        return Err(GeomError::BehindCamera(q.z));
    }
    let u = cam.focal * q.x / q.z + cam.px;
    let v = cam.focal * q.y / q.z + cam.py;
    Ok((u, v, q.z))
}
