//! Location fields: image-aligned maps storing, per object pixel, the 3D
//! coordinate of the visible surface point in the canonical object frame.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Camera, Pose};

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("roi {roi:?} does not fit a {width}x{height} target")]
    RoiOutOfBounds {
        roi: Roi,
        width: u32,
        height: u32,
    },
    #[error("roi scale must be uniform and integral: {0}x{1} from {2}x{3}")]
    NonUniformScale(u32, u32, u32, u32),
    #[error("coordinate buffer length {got} does not match {width}x{height}")]
    ShapeMismatch { got: usize, width: u32, height: u32 },
}

/// Whether the field came straight from the rasterizer or through the
/// degradation model that simulates network predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Rendered,
    PredictedSim,
}

/// Placement rectangle for [`upscale_pad`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Roi {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

/// Per-pixel canonical XYZ plus coverage mask with camera and pose
/// metadata. Unmasked pixels hold the sentinel `(0, 0, 0)` and are ignored
/// by every consumer; masked coordinates lie inside the unit cube.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationField {
    pub width: u32,
    pub height: u32,
    pub coords: Vec<[f32; 3]>,
    pub mask: Vec<bool>,
    pub camera: Camera,
    pub pose: Option<Pose>,
    pub model_id: Option<String>,
    pub domain: Domain,
}

impl LocationField {
    pub fn empty(width: u32, height: u32, camera: Camera) -> Self {
        let n = (width * height) as usize;
        Self {
            width,
            height,
            coords: vec![[0.0; 3]; n],
            mask: vec![false; n],
            camera,
            pose: None,
            model_id: None,
            domain: Domain::Rendered,
        }
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        (y * self.width + x) as usize
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Indices of masked pixels in row-major order.
    pub fn masked_indices(&self) -> Vec<usize> {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }
}

/// Nearest-neighbor upscale of a field into `roi` on a `target_w` x
/// `target_h` canvas; everything outside the roi is unmasked. The scale
/// must be uniform and integral so the camera metadata stays a pinhole:
/// focal and principal point are rescaled into full-image coordinates.
pub fn upscale_pad(
    lf: &LocationField,
    target_w: u32,
    target_h: u32,
    roi: Roi,
) -> Result<LocationField, FieldError> {
    if roi.x + roi.width > target_w || roi.y + roi.height > target_h {
        return Err(FieldError::RoiOutOfBounds {
            roi,
            width: target_w,
            height: target_h,
        });
    }
    if roi.width % lf.width != 0
        || roi.height % lf.height != 0
        || roi.width / lf.width != roi.height / lf.height
        || roi.width == 0
    {
        return Err(FieldError::NonUniformScale(
            roi.width, roi.height, lf.width, lf.height,
        ));
    }
    let scale = roi.width / lf.width;
    let s = scale as f64;
    // Rescaled metadata is kept at f32 precision like every stored camera.
    let camera = Camera {
        focal: (lf.camera.focal * s) as f32 as f64,
        px: (roi.x as f64 + lf.camera.px * s) as f32 as f64,
        py: (roi.y as f64 + lf.camera.py * s) as f32 as f64,
        width: target_w,
        height: target_h,
    };
    let mut out = LocationField::empty(target_w, target_h, camera);
    out.pose = lf.pose.clone();
    out.model_id = lf.model_id.clone();
    out.domain = lf.domain;
    for y in 0..roi.height {
        let sy = y / scale;
        for x in 0..roi.width {
            let sx = x / scale;
            let src = lf.index(sx, sy);
            let dst = out.index(roi.x + x, roi.y + y);
            out.coords[dst] = lf.coords[src];
            out.mask[dst] = lf.mask[src];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_field() -> LocationField {
        let mut lf = LocationField::empty(4, 4, Camera::centered(10.0, 4, 4));
        for y in 0..4u32 {
            for x in 0..4u32 {
                if x >= 1 && x <= 2 && y >= 1 && y <= 2 {
                    let i = lf.index(x, y);
                    lf.mask[i] = true;
                    lf.coords[i] = [x as f32 * 0.1, y as f32 * 0.1, 0.25];
                }
            }
        }
        lf
    }

    #[test]
    fn identity_roi_is_bit_identical() {
        let lf = small_field();
        let out = upscale_pad(
            &lf,
            4,
            4,
            Roi {
                x: 0,
                y: 0,
                width: 4,
                height: 4,
            },
        )
        .unwrap();
        assert_eq!(out, lf);
    }

    #[test]
    fn doubling_maps_each_pixel_to_equal_blocks() {
        let lf = small_field();
        let out = upscale_pad(
            &lf,
            10,
            10,
            Roi {
                x: 1,
                y: 2,
                width: 8,
                height: 8,
            },
        )
        .unwrap();
        assert_eq!(out.masked_count(), 4 * lf.masked_count());
        for y in 0..4u32 {
            for x in 0..4u32 {
                let src = lf.index(x, y);
                for dy in 0..2u32 {
                    for dx in 0..2u32 {
                        let dst = out.index(1 + 2 * x + dx, 2 + 2 * y + dy);
                        assert_eq!(out.coords[dst], lf.coords[src]);
                        assert_eq!(out.mask[dst], lf.mask[src]);
                    }
                }
            }
        }
        assert_eq!(out.camera.focal, 20.0);
        assert_eq!(out.camera.px, 1.0 + 2.0 * 2.0);
        assert_eq!(out.camera.py, 2.0 + 2.0 * 2.0);
    }

    #[test]
    fn oversized_roi_is_rejected() {
        let lf = small_field();
        let err = upscale_pad(
            &lf,
            6,
            6,
            Roi {
                x: 0,
                y: 0,
                width: 8,
                height: 8,
            },
        );
        assert!(matches!(err, Err(FieldError::RoiOutOfBounds { .. })));
    }
}
