//! 6-DoF pose recovery from the 2D-3D correspondences a location field
//! encodes: a normalized Direct Linear Transform, orthogonal-Procrustes
//! projection onto the rotations, Levenberg-Marquardt refinement of the
//! reprojection error, and a RANSAC wrapper for contaminated fields.

use nalgebra::{DMatrix, Matrix3, Matrix4, Point3, Vector3, Vector6};
use rand::Rng;
use thiserror::Error;

use crate::field::LocationField;
use crate::geom::{Camera, Pose};
use crate::util::rng_for;

#[derive(Debug, Error)]
pub enum PnpError {
    #[error("need at least {need} correspondences, got {got}")]
    InsufficientData { got: usize, need: usize },
    #[error("field has {got} masked pixels, need {need}")]
    TooFewMaskedPixels { got: usize, need: usize },
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("no RANSAC hypothesis reached {need} inliers (best {best})")]
    NoConsensus { best: usize, need: usize },
    #[error("point behind the camera at depth {0}")]
    BehindCamera(f64),
}

/// A 2D pixel observation (full-image coordinates) of a canonical 3D
/// surface point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub pixel: (f64, f64),
    pub point: Point3<f64>,
}

const MIN_CORRESPONDENCES: usize = 6;

/// Draw `n` distinct masked pixels uniformly (seeded, without replacement).
/// Each correspondence pairs the pixel center with the stored canonical
/// coordinates.
pub fn sample_correspondences(
    lf: &LocationField,
    n: usize,
    seed: u64,
) -> Result<Vec<Correspondence>, PnpError> {
    let mut indices = lf.masked_indices();
    if n < 4 {
        return Err(PnpError::InsufficientData { got: n, need: 4 });
    }
    if indices.len() < n {
        return Err(PnpError::TooFewMaskedPixels {
            got: indices.len(),
            need: n,
        });
    }
    let mut rng = rng_for(seed, 0xc0);
    for i in 0..n {
        let j = i + (rng.random::<u64>() as usize) % (indices.len() - i);
        indices.swap(i, j);
    }
    indices.truncate(n);
    Ok(indices
        .into_iter()
        .map(|i| {
            let x = (i as u32 % lf.width) as f64 + 0.5;
            let y = (i as u32 / lf.width) as f64 + 0.5;
            let c = lf.coords[i];
            Correspondence {
                pixel: (x, y),
                point: Point3::new(c[0] as f64, c[1] as f64, c[2] as f64),
            }
        })
        .collect())
}

fn project_pose(cam: &Camera, pose: &Pose, p: &Point3<f64>) -> Result<(f64, f64), PnpError> {
    let q = pose.rotation * p.coords + pose.translation;
    if q.z <= 0.0 {
        return Err(PnpError::BehindCamera(q.z));
    }
    Ok((
        cam.focal * q.x / q.z + cam.px,
        cam.focal * q.y / q.z + cam.py,
    ))
}

/// Root-mean-square reprojection error in pixels.
pub fn reprojection_error(
    pose: &Pose,
    cam: &Camera,
    corrs: &[Correspondence],
) -> Result<f64, PnpError> {
    if corrs.is_empty() {
        return Err(PnpError::InsufficientData { got: 0, need: 1 });
    }
    let mut sum = 0.0;
    for c in corrs {
        let (u, v) = project_pose(cam, pose, &c.point)?;
        let (du, dv) = (u - c.pixel.0, v - c.pixel.1);
        sum += du * du + dv * dv;
    }
    Ok((sum / corrs.len() as f64).sqrt())
}

/// Nearest rotation (Frobenius) with determinant +1.
fn procrustes_rotation(m: &Matrix3<f64>) -> Result<Matrix3<f64>, PnpError> {
    let svd = m.svd(true, true);
    let u = svd
        .u
        .ok_or_else(|| PnpError::Degenerate("svd failed".to_string()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| PnpError::Degenerate("svd failed".to_string()))?;
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u_fix = u;
        u_fix.column_mut(2).neg_mut();
        r = u_fix * v_t;
    }
    Ok(r)
}

/// Direct Linear Transform estimate with Hartley-style normalization of
/// both point sets, decomposed into a rotation and translation.
pub fn solve_pnp_dlt(corrs: &[Correspondence], cam: &Camera) -> Result<Pose, PnpError> {
    let n = corrs.len();
    if n < MIN_CORRESPONDENCES {
        return Err(PnpError::InsufficientData {
            got: n,
            need: MIN_CORRESPONDENCES,
        });
    }

    // Normalized camera coordinates.
    let obs: Vec<(f64, f64)> = corrs
        .iter()
        .map(|c| {
            (
                (c.pixel.0 - cam.px) / cam.focal,
                (c.pixel.1 - cam.py) / cam.focal,
            )
        })
        .collect();

    // Hartley conditioning of the 2D observations.
    let n_f = n as f64;
    let (mx, my) = obs
        .iter()
        .fold((0.0, 0.0), |acc, o| (acc.0 + o.0, acc.1 + o.1));
    let (mx, my) = (mx / n_f, my / n_f);
    let mean_d2: f64 = obs
        .iter()
        .map(|o| ((o.0 - mx).powi(2) + (o.1 - my).powi(2)).sqrt())
        .sum::<f64>()
        / n_f;
    if mean_d2 <= 1e-12 {
        return Err(PnpError::Degenerate(
            "2d observations are coincident".to_string(),
        ));
    }
    let s2 = std::f64::consts::SQRT_2 / mean_d2;

    // Conditioning and rank check of the 3D points.
    let mut c3 = Vector3::zeros();
    for c in corrs {
        c3 += c.point.coords;
    }
    c3 /= n_f;
    let mean_d3: f64 = corrs
        .iter()
        .map(|c| (c.point.coords - c3).norm())
        .sum::<f64>()
        / n_f;
    if mean_d3 <= 1e-12 {
        return Err(PnpError::Degenerate("3d points are coincident".to_string()));
    }
    let s3 = 3.0f64.sqrt() / mean_d3;
    let mut cov = Matrix3::zeros();
    for c in corrs {
        let d = c.point.coords - c3;
        cov += d * d.transpose();
    }
    cov /= n_f;
    let eig = cov.symmetric_eigenvalues();
    let (e_min, e_max) = (
        eig.iter().cloned().fold(f64::INFINITY, f64::min),
        eig.iter().cloned().fold(0.0f64, f64::max),
    );
    if e_max <= 0.0 || e_min / e_max < 1e-10 {
        return Err(PnpError::Degenerate(format!(
            "3d points are (near-)coplanar: eigenvalue ratio {:e}",
            e_min / e_max.max(1e-300)
        )));
    }

    // DLT on the conditioned correspondences.
    let mut a = DMatrix::<f64>::zeros(2 * n, 12);
    for (i, (c, o)) in corrs.iter().zip(&obs).enumerate() {
        let p = (c.point.coords - c3) * s3;
        let u = (o.0 - mx) * s2;
        let v = (o.1 - my) * s2;
        let (r0, r1) = (2 * i, 2 * i + 1);
        a[(r0, 0)] = p.x;
        a[(r0, 1)] = p.y;
        a[(r0, 2)] = p.z;
        a[(r0, 3)] = 1.0;
        a[(r0, 8)] = -u * p.x;
        a[(r0, 9)] = -u * p.y;
        a[(r0, 10)] = -u * p.z;
        a[(r0, 11)] = -u;
        a[(r1, 4)] = p.x;
        a[(r1, 5)] = p.y;
        a[(r1, 6)] = p.z;
        a[(r1, 7)] = 1.0;
        a[(r1, 8)] = -v * p.x;
        a[(r1, 9)] = -v * p.y;
        a[(r1, 10)] = -v * p.z;
        a[(r1, 11)] = -v;
    }
    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| PnpError::Degenerate("dlt svd failed".to_string()))?;
    let h = v_t.row(v_t.nrows() - 1);
    let mut p_cond = nalgebra::Matrix3x4::<f64>::zeros();
    for r in 0..3 {
        for c in 0..4 {
            p_cond[(r, c)] = h[4 * r + c];
        }
    }

    // Undo both conditionings: x_n ~ T2^-1 P' T3 X.
    let t2_inv = Matrix3::new(1.0 / s2, 0.0, mx, 0.0, 1.0 / s2, my, 0.0, 0.0, 1.0);
    let t3 = Matrix4::new(
        s3,
        0.0,
        0.0,
        -s3 * c3.x,
        0.0,
        s3,
        0.0,
        -s3 * c3.y,
        0.0,
        0.0,
        s3,
        -s3 * c3.z,
        0.0,
        0.0,
        0.0,
        1.0,
    );
    let m = t2_inv * p_cond * t3;

    let m3 = m.fixed_view::<3, 3>(0, 0).into_owned();
    let mut scale = (m3.row(0).norm() + m3.row(1).norm() + m3.row(2).norm()) / 3.0;
    if m3.determinant() < 0.0 {
        scale = -scale;
    }
    if scale == 0.0 {
        return Err(PnpError::Degenerate("zero-scale projection".to_string()));
    }
    let rotation = procrustes_rotation(&(m3 / scale))?;
    let translation = m.column(3) / scale;
    Ok(Pose::new(rotation, translation.into()))
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn rodrigues(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta = w.norm();
    if theta < 1e-12 {
        return Matrix3::identity() + skew(w);
    }
    let k = skew(&(w / theta));
    Matrix3::identity() + k * theta.sin() + k * k * (1.0 - theta.cos())
}

fn mean_sq_error(pose: &Pose, cam: &Camera, corrs: &[Correspondence]) -> f64 {
    let mut sum = 0.0;
    for c in corrs {
        let q = pose.rotation * c.point.coords + pose.translation;
        if q.z <= 1e-12 {
            return f64::INFINITY;
        }
        let du = cam.focal * q.x / q.z + cam.px - c.pixel.0;
        let dv = cam.focal * q.y / q.z + cam.py - c.pixel.1;
        sum += du * du + dv * dv;
    }
    sum / corrs.len() as f64
}

const LM_MAX_ITERS: usize = 50;
const LM_INIT_DAMPING: f64 = 1e-3;
const LM_REL_TOL: f64 = 1e-10;

/// Levenberg-Marquardt refinement of the mean squared reprojection error
/// over an axis-angle rotation update and the translation.
fn refine_lm(mut pose: Pose, cam: &Camera, corrs: &[Correspondence]) -> Pose {
    let n = corrs.len() as f64;
    let mut cost = mean_sq_error(&pose, cam, corrs);
    let mut damping = LM_INIT_DAMPING;
    for _ in 0..LM_MAX_ITERS {
        let mut h = nalgebra::Matrix6::<f64>::zeros();
        let mut g = Vector6::<f64>::zeros();
        for c in corrs {
            let y = pose.rotation * c.point.coords;
            let q = y + pose.translation;
            if q.z <= 1e-12 {
                return pose;
            }
            let inv_z = 1.0 / q.z;
            // d(u,v)/dq for the pinhole projection.
            let duv_dq = nalgebra::Matrix2x3::new(
                cam.focal * inv_z,
                0.0,
                -cam.focal * q.x * inv_z * inv_z,
                0.0,
                cam.focal * inv_z,
                -cam.focal * q.y * inv_z * inv_z,
            );
            // Left perturbation R <- exp(w^) R gives dq/dw = -[y]_x.
            let j_w = duv_dq * (-skew(&y));
            let r_u = cam.focal * q.x * inv_z + cam.px - c.pixel.0;
            let r_v = cam.focal * q.y * inv_z + cam.py - c.pixel.1;
            let mut j = nalgebra::Matrix2x6::<f64>::zeros();
            j.fixed_view_mut::<2, 3>(0, 0).copy_from(&j_w);
            j.fixed_view_mut::<2, 3>(0, 3).copy_from(&duv_dq);
            h += j.transpose() * j;
            g += j.transpose() * nalgebra::Vector2::new(r_u, r_v);
        }
        h /= n;
        g /= n;

        let mut accepted = false;
        for _ in 0..10 {
            let lhs = h + nalgebra::Matrix6::identity() * damping;
            let Some(step) = lhs.lu().solve(&(-g)) else {
                damping *= 10.0;
                continue;
            };
            let w = Vector3::new(step[0], step[1], step[2]);
            let dt = Vector3::new(step[3], step[4], step[5]);
            let candidate = Pose::new(rodrigues(&w) * pose.rotation, pose.translation + dt);
            let c_cost = mean_sq_error(&candidate, cam, corrs);
            if c_cost < cost {
                let rel = (cost - c_cost) / cost.max(1e-300);
                pose = candidate;
                cost = c_cost;
                damping = (damping / 10.0).max(1e-12);
                accepted = true;
                if rel < LM_REL_TOL {
                    return pose;
                }
                break;
            }
            damping *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    pose
}

/// Full pose estimate: normalized DLT, Procrustes rotation, LM refinement.
pub fn solve_pnp(corrs: &[Correspondence], cam: &Camera) -> Result<Pose, PnpError> {
    let pose = solve_pnp_dlt(corrs, cam)?;
    Ok(refine_lm(pose, cam, corrs))
}

/// Robust pose estimate: repeated 6-point DLT hypotheses, inliers by
/// pointwise reprojection error, final refinement on the best consensus
/// set. Returns the pose and per-correspondence inlier flags.
pub fn solve_pnp_ransac(
    corrs: &[Correspondence],
    cam: &Camera,
    iters: usize,
    inlier_threshold_px: f64,
    seed: u64,
) -> Result<(Pose, Vec<bool>), PnpError> {
    let n = corrs.len();
    if n < MIN_CORRESPONDENCES {
        return Err(PnpError::InsufficientData {
            got: n,
            need: MIN_CORRESPONDENCES,
        });
    }
    let mut rng = rng_for(seed, 0x4a5c);
    let mut indices: Vec<usize> = (0..n).collect();
    let mut best: Option<(Pose, usize)> = None;

    let point_error = |pose: &Pose, c: &Correspondence| -> f64 {
        let q = pose.rotation * c.point.coords + pose.translation;
        if q.z <= 1e-12 {
            return f64::INFINITY;
        }
        let du = cam.focal * q.x / q.z + cam.px - c.pixel.0;
        let dv = cam.focal * q.y / q.z + cam.py - c.pixel.1;
        (du * du + dv * dv).sqrt()
    };

    for _ in 0..iters {
        for i in 0..MIN_CORRESPONDENCES {
            let j = i + (rng.random::<u64>() as usize) % (n - i);
            indices.swap(i, j);
        }
        let subset: Vec<Correspondence> = indices[..MIN_CORRESPONDENCES]
            .iter()
            .map(|&i| corrs[i])
            .collect();
        let Ok(hypothesis) = solve_pnp_dlt(&subset, cam) else {
            continue;
        };
        let count = corrs
            .iter()
            .filter(|c| point_error(&hypothesis, c) < inlier_threshold_px)
            .count();
        if best.as_ref().is_none_or(|(_, b)| count > *b) {
            best = Some((hypothesis, count));
        }
    }

    let (hypothesis, count) = best.ok_or(PnpError::NoConsensus {
        best: 0,
        need: MIN_CORRESPONDENCES,
    })?;
    if count < MIN_CORRESPONDENCES {
        return Err(PnpError::NoConsensus {
            best: count,
            need: MIN_CORRESPONDENCES,
        });
    }
    let consensus: Vec<Correspondence> = corrs
        .iter()
        .filter(|c| point_error(&hypothesis, c) < inlier_threshold_px)
        .copied()
        .collect();
    let refined = solve_pnp(&consensus, cam)?;
    let flags = corrs
        .iter()
        .map(|c| point_error(&refined, c) < inlier_threshold_px)
        .collect();
    Ok((refined, flags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{rotation_angle_deg, PoseParams};
    use crate::util::normal;

    fn random_pose(seed: u64) -> Pose {
        let mut rng = rng_for(seed, 0x9e);
        Pose::from_params(PoseParams {
            azimuth_deg: rng.random::<f64>() * 360.0,
            elevation_deg: -10.0 + rng.random::<f64>() * 50.0,
            inplane_deg: -10.0 + rng.random::<f64>() * 20.0,
            distance: 1.5 + rng.random::<f64>() * 2.0,
        })
    }

    fn cube_points(count: usize, seed: u64) -> Vec<Point3<f64>> {
        let mut rng = rng_for(seed, 0x3d);
        (0..count)
            .map(|_| {
                Point3::new(
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() - 0.5,
                )
            })
            .collect()
    }

    fn exact_corrs(pose: &Pose, cam: &Camera, points: &[Point3<f64>]) -> Vec<Correspondence> {
        points
            .iter()
            .map(|p| {
                let q = pose.rotation * p.coords + pose.translation;
                Correspondence {
                    pixel: (
                        cam.focal * q.x / q.z + cam.px,
                        cam.focal * q.y / q.z + cam.py,
                    ),
                    point: *p,
                }
            })
            .collect()
    }

    #[test]
    fn exact_correspondences_recover_the_pose() {
        let cam = Camera::centered(64.0, 56, 56);
        for seed in 0..20 {
            let pose = random_pose(seed);
            let corrs = exact_corrs(&pose, &cam, &cube_points(60, seed));
            let est = solve_pnp(&corrs, &cam).unwrap();
            let rot_err = rotation_angle_deg(&est.rotation, &pose.rotation);
            let t_err = (est.translation - pose.translation).norm() / pose.translation.norm();
            assert!(rot_err < 1e-5, "seed {seed}: rotation error {rot_err}");
            assert!(t_err < 1e-7, "seed {seed}: translation error {t_err}");
            assert!(est.orthonormality_error() < 1e-9);
            assert!((est.rotation.determinant() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn five_points_are_insufficient() {
        let cam = Camera::centered(64.0, 56, 56);
        let pose = random_pose(1);
        let corrs = exact_corrs(&pose, &cam, &cube_points(5, 1));
        assert!(matches!(
            solve_pnp(&corrs, &cam),
            Err(PnpError::InsufficientData { got: 5, need: 6 })
        ));
    }

    #[test]
    fn coplanar_points_are_degenerate() {
        let cam = Camera::centered(64.0, 56, 56);
        let pose = random_pose(2);
        let mut pts = cube_points(30, 2);
        for p in &mut pts {
            p.z = 0.1;
        }
        let corrs = exact_corrs(&pose, &cam, &pts);
        assert!(matches!(
            solve_pnp(&corrs, &cam),
            Err(PnpError::Degenerate(_))
        ));
    }

    #[test]
    fn pixel_noise_keeps_rotation_error_small() {
        let cam = Camera::centered(64.0, 56, 56);
        let mut failures = 0;
        for seed in 0..20 {
            let pose = random_pose(100 + seed);
            let mut corrs = exact_corrs(&pose, &cam, &cube_points(200, 100 + seed));
            let mut rng = rng_for(500 + seed, 0);
            for c in &mut corrs {
                c.pixel.0 += 0.5 * normal(&mut rng);
                c.pixel.1 += 0.5 * normal(&mut rng);
            }
            let est = solve_pnp(&corrs, &cam).unwrap();
            if rotation_angle_deg(&est.rotation, &pose.rotation) >= 1.0 {
                failures += 1;
            }
        }
        assert!(failures <= 1, "{failures}/20 noisy solves exceeded 1 degree");
    }

    #[test]
    fn reprojection_error_matches_hand_rms() {
        let cam = Camera::centered(10.0, 20, 20);
        let pose = Pose::new(Matrix3::identity(), Vector3::new(0.0, 0.0, 2.0));
        // Three points projected exactly, then pixels offset by (1,0),
        // (0,2), (2,2): RMS = sqrt((1 + 4 + 8) / 3).
        let pts = [
            Point3::new(0.1, 0.0, 0.0),
            Point3::new(-0.2, 0.1, 0.1),
            Point3::new(0.0, -0.1, -0.1),
        ];
        let mut corrs = exact_corrs(&pose, &cam, &pts);
        corrs[0].pixel.0 += 1.0;
        corrs[1].pixel.1 += 2.0;
        corrs[2].pixel.0 += 2.0;
        corrs[2].pixel.1 += 2.0;
        let rms = reprojection_error(&pose, &cam, &corrs).unwrap();
        assert!((rms - (13.0f64 / 3.0).sqrt()).abs() < 1e-12);
        // Ground truth on exact correspondences is essentially zero.
        let exact = exact_corrs(&pose, &cam, &pts);
        assert!(reprojection_error(&pose, &cam, &exact).unwrap() < 1e-9);
        // A perturbed pose has strictly positive error.
        let moved = Pose::new(pose.rotation, pose.translation + Vector3::new(0.0, 0.0, 0.5));
        assert!(reprojection_error(&moved, &cam, &exact).unwrap() > 0.0);
    }

    #[test]
    fn behind_camera_point_is_an_error() {
        let cam = Camera::centered(10.0, 20, 20);
        let pose = Pose::new(Matrix3::identity(), Vector3::new(0.0, 0.0, 0.2));
        let corrs = vec![Correspondence {
            pixel: (10.0, 10.0),
            point: Point3::new(0.0, 0.0, -0.5),
        }];
        assert!(matches!(
            reprojection_error(&pose, &cam, &corrs),
            Err(PnpError::BehindCamera(_))
        ));
    }

    #[test]
    fn outlier_free_ransac_keeps_every_point() {
        let cam = Camera::centered(64.0, 56, 56);
        let pose = random_pose(7);
        let corrs = exact_corrs(&pose, &cam, &cube_points(80, 7));
        let direct = solve_pnp(&corrs, &cam).unwrap();
        let (est, inliers) = solve_pnp_ransac(&corrs, &cam, 100, 2.0, 3).unwrap();
        assert!(inliers.iter().all(|&b| b));
        assert!(rotation_angle_deg(&est.rotation, &direct.rotation) < 1e-6);
        assert!((est.translation - direct.translation).norm() < 1e-6);
    }

    #[test]
    fn ransac_survives_twenty_percent_outliers() {
        let cam = Camera::centered(64.0, 56, 56);
        for seed in 0..5 {
            let pose = random_pose(200 + seed);
            let mut corrs = exact_corrs(&pose, &cam, &cube_points(100, 200 + seed));
            let mut rng = rng_for(42 + seed, 1);
            for i in 0..20 {
                corrs[i * 5].pixel = (rng.random::<f64>() * 56.0, rng.random::<f64>() * 56.0);
            }
            let (est, inliers) = solve_pnp_ransac(&corrs, &cam, 500, 2.0, seed).unwrap();
            let rot_err = rotation_angle_deg(&est.rotation, &pose.rotation);
            assert!(rot_err < 1.0, "seed {seed}: rotation error {rot_err}");
            assert!(inliers.iter().filter(|&&b| b).count() >= 80);
        }
    }

    #[test]
    fn all_outliers_yield_no_consensus() {
        let cam = Camera::centered(64.0, 56, 56);
        let mut rng = rng_for(9, 2);
        let corrs: Vec<Correspondence> = (0..40)
            .map(|_| Correspondence {
                pixel: (rng.random::<f64>() * 56.0, rng.random::<f64>() * 56.0),
                point: Point3::new(
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() - 0.5,
                ),
            })
            .collect();
        assert!(matches!(
            solve_pnp_ransac(&corrs, &cam, 50, 0.25, 1),
            Err(PnpError::NoConsensus { .. })
        ));
    }

    #[test]
    fn correspondence_sampling_is_exhaustive_and_deterministic() {
        let mut lf = LocationField::empty(8, 8, Camera::centered(10.0, 8, 8));
        for i in [3usize, 9, 10, 17, 33, 40] {
            lf.mask[i] = true;
            lf.coords[i] = [0.1, -0.2, 0.3];
        }
        let all = sample_correspondences(&lf, 6, 5).unwrap();
        assert_eq!(all.len(), 6);
        let mut pixels: Vec<(u32, u32)> = all
            .iter()
            .map(|c| (c.pixel.0 as u32, c.pixel.1 as u32))
            .collect();
        pixels.sort();
        pixels.dedup();
        assert_eq!(pixels.len(), 6);
        let again = sample_correspondences(&lf, 6, 5).unwrap();
        assert_eq!(all, again);
        assert!(matches!(
            sample_correspondences(&lf, 7, 5),
            Err(PnpError::TooFewMaskedPixels { got: 6, need: 7 })
        ));
    }
}
