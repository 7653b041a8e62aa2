//! Procedural desk-scale model database: axis-aligned compositions of
//! boxes and wedges (chairs, tables, beds, cars), watertight by
//! construction, with a guaranteed pairwise shape separation.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::Point3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{normalize_mesh, sample_surface, Mesh, PointSet};
use crate::metrics::hausdorff_at_least;
use crate::util::rng_for;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(
        "could not place model {model_id} with separation {separation} after {attempts} attempts"
    )]
    Separation {
        model_id: String,
        separation: f64,
        attempts: usize,
    },
    #[error(transparent)]
    Mesh(#[from] crate::mesh::MeshError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Chair,
    Table,
    Bed,
    Car,
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            FamilyKind::Chair => "chair",
            FamilyKind::Table => "table",
            FamilyKind::Bed => "bed",
            FamilyKind::Car => "car",
        };
        f.write_str(name)
    }
}

/// One family block of the dataset spec. `params` overrides the named
/// default sampling ranges of the family (e.g. `"seat_height": [0.3, 0.4]`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilySpec {
    pub kind: FamilyKind,
    pub count: usize,
    #[serde(default)]
    pub params: BTreeMap<String, [f64; 2]>,
}

/// Dataset spec: family counts plus the minimum pairwise modified
/// Hausdorff distance between any two generated models.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub families: Vec<FamilySpec>,
    pub separation: f64,
}

impl DatasetSpec {
    /// A mixed four-family spec with `count` models in total.
    pub fn mixed(count: usize, separation: f64) -> Self {
        let kinds = [
            FamilyKind::Chair,
            FamilyKind::Table,
            FamilyKind::Bed,
            FamilyKind::Car,
        ];
        let base = count / kinds.len();
        let extra = count % kinds.len();
        let families = kinds
            .iter()
            .enumerate()
            .map(|(i, &kind)| FamilySpec {
                kind,
                count: base + usize::from(i < extra),
                params: BTreeMap::new(),
            })
            .filter(|f| f.count > 0)
            .collect();
        Self {
            families,
            separation,
        }
    }
}

// ---------------------------------------------------------------------------
// Watertight primitives
// ---------------------------------------------------------------------------

/// Closed axis-aligned box as 12 triangles.
pub fn box_mesh(min: [f64; 3], max: [f64; 3], model_id: String) -> Mesh {
    let v = vec![
        Point3::new(min[0], min[1], min[2]),
        Point3::new(max[0], min[1], min[2]),
        Point3::new(max[0], max[1], min[2]),
        Point3::new(min[0], max[1], min[2]),
        Point3::new(min[0], min[1], max[2]),
        Point3::new(max[0], min[1], max[2]),
        Point3::new(max[0], max[1], max[2]),
        Point3::new(min[0], max[1], max[2]),
    ];
    let quads = [
        [0u32, 3, 2, 1], // z = min
        [4, 5, 6, 7],    // z = max
        [0, 1, 5, 4],    // y = min
        [2, 3, 7, 6],    // y = max
        [0, 4, 7, 3],    // x = min
        [1, 2, 6, 5],    // x = max
    ];
    let mut triangles = Vec::with_capacity(12);
    for q in quads {
        triangles.push([q[0], q[1], q[2]]);
        triangles.push([q[0], q[2], q[3]]);
    }
    Mesh::new(v, triangles, model_id)
}

/// Closed wedge: rectangular base in the XZ plane at `y0`, ridge parallel
/// to the X axis at height `y1` and depth `z_ridge`.
pub fn wedge_mesh(
    x: [f64; 2],
    z: [f64; 2],
    y0: f64,
    y1: f64,
    z_ridge: f64,
    model_id: String,
) -> Mesh {
    let v = vec![
        Point3::new(x[0], y0, z[0]),
        Point3::new(x[1], y0, z[0]),
        Point3::new(x[1], y0, z[1]),
        Point3::new(x[0], y0, z[1]),
        Point3::new(x[0], y1, z_ridge),
        Point3::new(x[1], y1, z_ridge),
    ];
    let triangles = vec![
        // base
        [0u32, 2, 1],
        [0, 3, 2],
        // slopes
        [0, 1, 5],
        [0, 5, 4],
        [3, 4, 5],
        [3, 5, 2],
        // triangular ends
        [0, 4, 3],
        [1, 2, 5],
    ];
    Mesh::new(v, triangles, model_id)
}

/// Concatenate closed parts into one mesh. Parts keep their own vertices,
/// so every edge stays shared by exactly two triangles.
pub fn merge_parts(parts: Vec<Mesh>, model_id: String) -> Mesh {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for part in parts {
        let offset = vertices.len() as u32;
        vertices.extend(part.vertices);
        triangles.extend(
            part.triangles
                .into_iter()
                .map(|t| [t[0] + offset, t[1] + offset, t[2] + offset]),
        );
    }
    Mesh::new(vertices, triangles, model_id)
}

// ---------------------------------------------------------------------------
// Families
// ---------------------------------------------------------------------------

struct ParamSampler<'a> {
    overrides: &'a BTreeMap<String, [f64; 2]>,
    rng: &'a mut ChaCha8Rng,
}

impl ParamSampler<'_> {
    fn get(&mut self, name: &str, default: [f64; 2]) -> f64 {
        let range = self.overrides.get(name).copied().unwrap_or(default);
        let u: f64 = self.rng.random();
        range[0] + u * (range[1] - range[0])
    }
}

// Parts overlap their supports by this margin so no two faces coincide.
const JOIN: f64 = 0.02;

fn build_chair(p: &mut ParamSampler) -> Vec<Mesh> {
    let w = p.get("width", [0.45, 0.85]);
    let d = p.get("depth", [0.45, 0.80]);
    let seat_h = p.get("seat_height", [0.30, 0.55]);
    let seat_t = p.get("seat_thickness", [0.05, 0.14]);
    let back_h = p.get("back_height", [0.25, 0.70]);
    let back_t = p.get("back_thickness", [0.04, 0.12]);
    let leg = p.get("leg_thickness", [0.04, 0.12]);
    let armrests = p.get("armrests", [0.0, 1.0]) < 0.45;
    let arm_h = p.get("armrest_height", [0.15, 0.30]);
    let arm_t = p.get("armrest_thickness", [0.04, 0.09]);
    let id = String::new;
    let mut parts = vec![
        box_mesh(
            [-w / 2.0, seat_h - seat_t, -d / 2.0],
            [w / 2.0, seat_h, d / 2.0],
            id(),
        ),
        box_mesh(
            [-w / 2.0, seat_h - JOIN, d / 2.0 - back_t],
            [w / 2.0, seat_h + back_h, d / 2.0],
            id(),
        ),
    ];
    for (sx, sz) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
        let cx = sx * (w / 2.0 - leg / 2.0);
        let cz = sz * (d / 2.0 - leg / 2.0);
        parts.push(box_mesh(
            [cx - leg / 2.0, 0.0, cz - leg / 2.0],
            [cx + leg / 2.0, seat_h - seat_t + JOIN, cz + leg / 2.0],
            id(),
        ));
    }
    if armrests {
        for sx in [-1.0, 1.0f64] {
            let x0 = sx * (w / 2.0) - if sx > 0.0 { arm_t } else { 0.0 };
            parts.push(box_mesh(
                [x0, seat_h - JOIN, -d / 2.0],
                [x0 + arm_t, seat_h + arm_h, d / 2.0 - back_t],
                id(),
            ));
        }
    }
    parts
}

fn build_table(p: &mut ParamSampler) -> Vec<Mesh> {
    let w = p.get("width", [0.60, 1.10]);
    let d = p.get("depth", [0.40, 1.00]);
    let h = p.get("height", [0.35, 0.70]);
    let top_t = p.get("top_thickness", [0.04, 0.14]);
    let leg = p.get("leg_thickness", [0.04, 0.13]);
    let inset = p.get("leg_inset", [0.00, 0.10]);
    let shelf = p.get("shelf", [0.0, 1.0]) < 0.45;
    let shelf_frac = p.get("shelf_height", [0.30, 0.60]);
    let shelf_t = p.get("shelf_thickness", [0.03, 0.08]);
    let id = String::new;
    let mut parts = vec![box_mesh(
        [-w / 2.0, h - top_t, -d / 2.0],
        [w / 2.0, h, d / 2.0],
        id(),
    )];
    for (sx, sz) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
        let cx = sx * (w / 2.0 - leg / 2.0 - inset);
        let cz = sz * (d / 2.0 - leg / 2.0 - inset);
        parts.push(box_mesh(
            [cx - leg / 2.0, 0.0, cz - leg / 2.0],
            [cx + leg / 2.0, h - top_t + JOIN, cz + leg / 2.0],
            id(),
        ));
    }
    if shelf {
        let y = h * shelf_frac;
        parts.push(box_mesh(
            [
                -w / 2.0 + inset - JOIN,
                y - shelf_t,
                -d / 2.0 + inset - JOIN,
            ],
            [w / 2.0 - inset + JOIN, y, d / 2.0 - inset + JOIN],
            id(),
        ));
    }
    parts
}

fn build_bed(p: &mut ParamSampler) -> Vec<Mesh> {
    let w = p.get("width", [0.65, 1.05]);
    let d = p.get("length", [1.20, 2.00]);
    let base_h = p.get("base_height", [0.12, 0.35]);
    let head_h = p.get("head_height", [0.30, 0.70]);
    let head_t = p.get("head_thickness", [0.04, 0.14]);
    let mat_t = p.get("mattress_thickness", [0.06, 0.20]);
    let mat_inset = p.get("mattress_inset", [0.01, 0.08]);
    let footboard = p.get("footboard", [0.0, 1.0]) < 0.5;
    let foot_h = p.get("foot_height", [0.12, 0.35]);
    let id = String::new;
    let mut parts = vec![
        box_mesh([-w / 2.0, 0.0, -d / 2.0], [w / 2.0, base_h, d / 2.0], id()),
        box_mesh(
            [-w / 2.0, 0.0, -d / 2.0],
            [w / 2.0, base_h + head_h, -d / 2.0 + head_t],
            id(),
        ),
        box_mesh(
            [
                -w / 2.0 + mat_inset,
                base_h - JOIN,
                -d / 2.0 + head_t + mat_inset,
            ],
            [w / 2.0 - mat_inset, base_h + mat_t, d / 2.0 - mat_inset],
            id(),
        ),
    ];
    if footboard {
        parts.push(box_mesh(
            [-w / 2.0, 0.0, d / 2.0 - head_t],
            [w / 2.0, base_h + foot_h, d / 2.0],
            id(),
        ));
    }
    parts
}

fn build_car(p: &mut ParamSampler) -> Vec<Mesh> {
    let len = p.get("length", [1.40, 2.20]);
    let w = p.get("width", [0.55, 1.00]);
    let wheel_h = p.get("wheel_height", [0.08, 0.20]);
    let body_h = p.get("body_height", [0.22, 0.50]);
    let cab_h = p.get("cabin_height", [0.12, 0.42]);
    let cab_front = p.get("cabin_front", [0.00, 0.32]);
    let cab_back = p.get("cabin_back", [0.18, 0.46]);
    let wheel_len = p.get("wheel_length", [0.15, 0.35]);
    let roof_box = p.get("roof_box", [0.0, 1.0]) < 0.35;
    let roof_h = p.get("roof_box_height", [0.08, 0.18]);
    let id = String::new;
    let body_top = wheel_h + body_h;
    let ridge_z = -0.5 * (cab_back - cab_front) * len;
    let mut parts = vec![
        box_mesh(
            [-w / 2.0, wheel_h, -len / 2.0],
            [w / 2.0, body_top, len / 2.0],
            id(),
        ),
        wedge_mesh(
            [-w / 2.0 + 0.03, w / 2.0 - 0.03],
            [-cab_back * len, cab_front * len],
            body_top - JOIN,
            body_top + cab_h,
            ridge_z,
            id(),
        ),
    ];
    for (sx, sz) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
        let cz = sz * (len / 2.0 - wheel_len / 2.0 - 0.05);
        let x0 = if sx < 0.0 { -w / 2.0 } else { w / 2.0 - 0.08 };
        parts.push(box_mesh(
            [x0, 0.0, cz - wheel_len / 2.0],
            [x0 + 0.08, wheel_h + JOIN, cz + wheel_len / 2.0],
            id(),
        ));
    }
    if roof_box {
        // Sunk into the cabin so the parts genuinely overlap.
        parts.push(box_mesh(
            [-w / 4.0, body_top + cab_h * 0.5, ridge_z - 0.12 * len],
            [w / 4.0, body_top + cab_h + roof_h, ridge_z + 0.12 * len],
            id(),
        ));
    }
    parts
}

/// Build one normalized model of a family from seeded parameters.
pub fn build_model(
    kind: FamilyKind,
    params: &BTreeMap<String, [f64; 2]>,
    model_id: String,
    rng: &mut ChaCha8Rng,
) -> Result<Mesh, DatasetError> {
    let mut sampler = ParamSampler {
        overrides: params,
        rng,
    };
    let parts = match kind {
        FamilyKind::Chair => build_chair(&mut sampler),
        FamilyKind::Table => build_table(&mut sampler),
        FamilyKind::Bed => build_bed(&mut sampler),
        FamilyKind::Car => build_car(&mut sampler),
    };
    Ok(normalize_mesh(&merge_parts(parts, model_id))?)
}

// Separation is checked on fixed-seed surface samples with a safety factor:
// sparse-sample estimates of the modified Hausdorff distance run a few
// thousandths above dense-sample ones, so the generator demands half again
// the requested separation and independent re-checks still clear it.
const SEPARATION_SAMPLES: usize = 2048;
const SEPARATION_SEED: u64 = 0x5e9a_11;
const SEPARATION_FACTOR: f64 = 1.5;
const MAX_ATTEMPTS: usize = 64;

/// Generate the model database: `count` models per family, all normalized,
/// deterministic for a given seed, any two models at modified Hausdorff
/// distance at least `spec.separation`. Too-close candidates are rejected
/// and resampled.
pub fn gen_procedural_dataset(spec: &DatasetSpec, seed: u64) -> Result<Vec<Mesh>, DatasetError> {
    let mut meshes: Vec<Mesh> = Vec::new();
    let mut samples: Vec<PointSet> = Vec::new();
    for (fi, family) in spec.families.iter().enumerate() {
        for i in 0..family.count {
            let model_id = format!("{}_{:03}", family.kind, i);
            let mut accepted = false;
            for attempt in 0..MAX_ATTEMPTS {
                let stream = ((fi as u64) << 40) | ((i as u64) << 16) | attempt as u64;
                let mut rng = rng_for(seed, stream);
                let mesh = build_model(family.kind, &family.params, model_id.clone(), &mut rng)?;
                let points = sample_surface(&mesh, SEPARATION_SAMPLES, SEPARATION_SEED)?;
                let min_sep = spec.separation * SEPARATION_FACTOR;
                let ok = samples
                    .iter()
                    .map(|other| hausdorff_at_least(&points, other, min_sep))
                    .try_fold(true, |acc, far| far.map(|far| acc && far))?;
                if ok {
                    meshes.push(mesh);
                    samples.push(points);
                    accepted = true;
                    break;
                }
            }
            if !accepted {
                return Err(DatasetError::Separation {
                    model_id,
                    separation: spec.separation,
                    attempts: MAX_ATTEMPTS,
                });
            }
        }
    }
    Ok(meshes)
}
