//! Property tests for the numeric primitives and file formats.

use lfd::field::{Domain, LocationField, Roi};
use lfd::geom::Camera;
use lfd::loss::huber;
use lfd::mesh::{normalize_mesh, sample_surface, Mesh};
use nalgebra::Point3;
use proptest::prelude::*;

fn arb_field() -> impl Strategy<Value = LocationField> {
    (2u32..12, 2u32..12, any::<u64>()).prop_map(|(w, h, seed)| {
        let mut lf = LocationField::empty(w, h, Camera::centered(w as f64, w, h));
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            state
        };
        for i in 0..lf.mask.len() {
            if next() % 3 != 0 {
                lf.mask[i] = true;
                lf.coords[i] = [
                    (next() % 1000) as f32 / 1000.0 - 0.5,
                    (next() % 1000) as f32 / 1000.0 - 0.5,
                    (next() % 1000) as f32 / 1000.0 - 0.5,
                ];
            }
        }
        if next() % 2 == 0 {
            lf.domain = Domain::PredictedSim;
        }
        if next() % 2 == 0 {
            lf.model_id = Some(format!("model_{}", next() % 100));
        }
        lf
    })
}

proptest! {
    #[test]
    fn huber_is_nonnegative_symmetric_and_monotone(
        r in -50.0f64..50.0,
        s in -50.0f64..50.0,
        t in 0.01f64..10.0,
    ) {
        prop_assert!(huber(r, t) >= 0.0);
        prop_assert!((huber(r, t) - huber(-r, t)).abs() < 1e-12);
        if r.abs() <= s.abs() {
            prop_assert!(huber(r, t) <= huber(s, t) + 1e-12);
        }
        // Quadratic inside, linear growth outside.
        if r.abs() <= t {
            prop_assert!((huber(r, t) - 0.5 * r * r).abs() < 1e-12);
        }
    }

    #[test]
    fn location_field_format_roundtrips(lf in arb_field()) {
        let bytes = lfd::io::write_lf(&lf);
        let back = lfd::io::read_lf(&bytes).unwrap();
        prop_assert_eq!(&back, &lf);
        prop_assert_eq!(lfd::io::write_lf(&back), bytes);
    }

    #[test]
    fn upscaling_scales_mask_area_by_the_square(lf in arb_field(), scale in 1u32..4) {
        let roi = Roi { x: 1, y: 2, width: lf.width * scale, height: lf.height * scale };
        let out = lfd::field::upscale_pad(&lf, roi.width + 3, roi.height + 4, roi).unwrap();
        prop_assert_eq!(out.masked_count(), lf.masked_count() * (scale * scale) as usize);
    }

    #[test]
    fn normalization_is_idempotent_and_permutation_equivariant(
        seed in any::<u64>(),
        n in 4usize..40,
    ) {
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((state >> 16) % 2000) as f64 / 100.0 - 10.0
        };
        let vertices: Vec<Point3<f64>> =
            (0..n).map(|_| Point3::new(next(), next(), next())).collect();
        let triangles: Vec<[u32; 3]> = (0..n - 2).map(|i| [i as u32, i as u32 + 1, i as u32 + 2]).collect();
        let mesh = Mesh::new(vertices.clone(), triangles.clone(), "m".to_string());
        prop_assume!(normalize_mesh(&mesh).is_ok());
        let once = normalize_mesh(&mesh).unwrap();
        let twice = normalize_mesh(&once).unwrap();
        for (a, b) in once.vertices.iter().zip(&twice.vertices) {
            prop_assert!((a - b).norm() < 1e-9);
        }
        // Reversing vertex order (and remapping indices) commutes with
        // normalization up to the reindexing.
        let rev_vertices: Vec<Point3<f64>> = vertices.iter().rev().cloned().collect();
        let remap = |i: u32| (n as u32 - 1) - i;
        let rev_triangles: Vec<[u32; 3]> = triangles
            .iter()
            .map(|t| [remap(t[0]), remap(t[1]), remap(t[2])])
            .collect();
        let rev = normalize_mesh(&Mesh::new(rev_vertices, rev_triangles, "m".to_string())).unwrap();
        for (i, a) in once.vertices.iter().enumerate() {
            let b = rev.vertices[n - 1 - i];
            prop_assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn voxel_iou_is_symmetric_bounded_and_reflexive(sa in 0.1f64..0.45, sb in 0.1f64..0.45, off in -0.2f64..0.2) {
        let a = lfd::metrics::voxelize(
            &lfd::dataset::box_mesh([-sa, -sa, -sa], [sa, sa, sa], "a".into()),
            24,
        );
        let b = lfd::metrics::voxelize(
            &lfd::dataset::box_mesh([off - sb, -sb, -sb], [(off + sb).min(0.5), sb, sb], "b".into()),
            24,
        );
        let ab = lfd::metrics::iou3d(&a, &b).unwrap();
        let ba = lfd::metrics::iou3d(&b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(lfd::metrics::iou3d(&a, &a).unwrap(), 1.0);
    }
}

#[test]
fn surface_sampling_matches_area_fractions_chi_squared() {
    // Ten parallel quads with distinct z levels and varying areas; a
    // chi-squared test with 9 degrees of freedom at p = 0.001 has
    // critical value 27.88.
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut areas = Vec::new();
    for k in 0..10u32 {
        let half = 0.1 + 0.05 * k as f64;
        let z = k as f64 * 0.1;
        let base = vertices.len() as u32;
        vertices.extend([
            Point3::new(-half, -half, z),
            Point3::new(half, -half, z),
            Point3::new(half, half, z),
        ]);
        triangles.push([base, base + 1, base + 2]);
        areas.push(2.0 * half * half);
    }
    let mesh = Mesh::new(vertices, triangles, "layers".to_string());
    let n = 100_000usize;
    let ps = sample_surface(&mesh, n, 424242).unwrap();
    let total: f64 = areas.iter().sum();
    let mut counts = [0usize; 10];
    for p in &ps.points {
        let k = (p.z / 0.1).round() as usize;
        counts[k.min(9)] += 1;
    }
    let chi2: f64 = counts
        .iter()
        .zip(&areas)
        .map(|(&obs, &a)| {
            let expect = n as f64 * a / total;
            (obs as f64 - expect).powi(2) / expect
        })
        .sum();
    assert!(chi2 < 27.88, "chi-squared {chi2}");
}
