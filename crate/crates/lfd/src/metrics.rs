//! Retrieval evaluation: modified Hausdorff distance between surface point
//! sets, solid voxelization with 3D intersection-over-union, top-k
//! accuracy, and the random-pick baseline.

use std::collections::HashMap;

use nalgebra::Point3;
use thiserror::Error;

use crate::mesh::{sample_surface, Mesh, PointSet};
use crate::retrieval::RetrievalResult;
use crate::util::KahanSum;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("point set is empty")]
    EmptyPointSet,
    #[error("voxel grid resolutions differ: {0} vs {1}")]
    ResolutionMismatch(u32, u32),
    #[error("ground truth model '{0}' is not in the ranked universe")]
    GroundTruthMissing(String),
    #[error("need at least 2 meshes, got {0}")]
    TooFewMeshes(usize),
    #[error("sampling failed: {0}")]
    Sampling(#[from] crate::mesh::MeshError),
}

// ---------------------------------------------------------------------------
// Modified Hausdorff distance
// ---------------------------------------------------------------------------

/// Uniform spatial hash over a point set for exact nearest-neighbor queries.
///
/// Ring-by-ring search: after scanning all cells within Chebyshev cell
/// distance `r`, any unseen point is at least `r * cell` away, so the scan
/// stops as soon as the current best distance drops below that bound. The
/// minimum found is exactly the brute-force minimum.
struct PointGrid<'a> {
    points: &'a [Point3<f64>],
    lo: Point3<f64>,
    cell: f64,
    dims: [i64; 3],
    buckets: HashMap<[i64; 3], Vec<u32>>,
}

impl<'a> PointGrid<'a> {
    fn build(points: &'a [Point3<f64>]) -> Self {
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let extent = (hi - lo).amax().max(1e-12);
        let per_axis = (points.len() as f64).cbrt().ceil().max(1.0);
        let cell = extent / per_axis;
        let dims = [
            ((hi.x - lo.x) / cell).floor() as i64 + 1,
            ((hi.y - lo.y) / cell).floor() as i64 + 1,
            ((hi.z - lo.z) / cell).floor() as i64 + 1,
        ];
        let mut buckets: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets
                .entry(Self::key_of(p, &lo, cell))
                .or_default()
                .push(i as u32);
        }
        Self {
            points,
            lo,
            cell,
            dims,
            buckets,
        }
    }

    fn key_of(p: &Point3<f64>, lo: &Point3<f64>, cell: f64) -> [i64; 3] {
        [
            ((p.x - lo.x) / cell).floor() as i64,
            ((p.y - lo.y) / cell).floor() as i64,
            ((p.z - lo.z) / cell).floor() as i64,
        ]
    }

    /// Squared distance to the nearest stored point.
    fn nearest_sq(&self, q: &Point3<f64>) -> f64 {
        let base = [
            ((q.x - self.lo.x) / self.cell).floor() as i64,
            ((q.y - self.lo.y) / self.cell).floor() as i64,
            ((q.z - self.lo.z) / self.cell).floor() as i64,
        ];
        // First and last shells that intersect the populated cell range.
        let mut ring_start = 0i64;
        let mut ring_end = 0i64;
        for k in 0..3 {
            let below = -base[k];
            let above = base[k] - (self.dims[k] - 1);
            ring_start = ring_start.max(below.max(above).max(0));
            ring_end = ring_end.max(base[k].abs().max((self.dims[k] - 1 - base[k]).abs()));
        }
        let mut best = f64::INFINITY;
        let mut ring = ring_start;
        while ring <= ring_end {
            self.scan_shell(&base, ring, q, &mut best);
            // Cells not yet visited are at Chebyshev distance > ring, so
            // their points are at least ring * cell away from q.
            let bound = ring as f64 * self.cell;
            if best <= bound * bound {
                break;
            }
            ring += 1;
        }
        best
    }

    fn visit(&self, key: [i64; 3], q: &Point3<f64>, best: &mut f64) {
        if let Some(ids) = self.buckets.get(&key) {
            for &i in ids {
                let d = (self.points[i as usize] - q).norm_squared();
                if d < *best {
                    *best = d;
                }
            }
        }
    }

    /// Visit all populated cells on the Chebyshev shell of radius `r`
    /// around `base`, clamped to the grid bounds.
    fn scan_shell(&self, base: &[i64; 3], r: i64, q: &Point3<f64>, best: &mut f64) {
        let clamp = |k: usize, lo: i64, hi: i64| -> (i64, i64) {
            ((base[k] + lo).max(0), (base[k] + hi).min(self.dims[k] - 1))
        };
        if r == 0 {
            self.visit(*base, q, best);
            return;
        }
        let (y0, y1) = clamp(1, -r, r);
        let (z0, z1) = clamp(2, -r, r);
        for x in [base[0] - r, base[0] + r] {
            if x < 0 || x >= self.dims[0] {
                continue;
            }
            for y in y0..=y1 {
                for z in z0..=z1 {
                    self.visit([x, y, z], q, best);
                }
            }
        }
        let (x0, x1) = clamp(0, -r + 1, r - 1);
        for y in [base[1] - r, base[1] + r] {
            if y < 0 || y >= self.dims[1] {
                continue;
            }
            for x in x0..=x1 {
                for z in z0..=z1 {
                    self.visit([x, y, z], q, best);
                }
            }
        }
        let (y0, y1) = clamp(1, -r + 1, r - 1);
        for z in [base[2] - r, base[2] + r] {
            if z < 0 || z >= self.dims[2] {
                continue;
            }
            for x in x0..=x1 {
                for y in y0..=y1 {
                    self.visit([x, y, z], q, best);
                }
            }
        }
    }
}

fn directed_sum(from: &[Point3<f64>], to_grid: &PointGrid) -> f64 {
    let mut sum = 0.0;
    for p in from {
        sum += to_grid.nearest_sq(p).sqrt();
    }
    sum
}

/// Modified Hausdorff distance between two point sets:
/// the sum of nearest-neighbor distances in both directions divided by the
/// total number of points. Symmetric, zero iff the sets coincide.
pub fn hausdorff_mod(x: &PointSet, y: &PointSet) -> Result<f64, MetricsError> {
    hausdorff_mod_points(&x.points, &y.points)
}

pub fn hausdorff_mod_points(
    x: &[Point3<f64>],
    y: &[Point3<f64>],
) -> Result<f64, MetricsError> {
    if x.is_empty() || y.is_empty() {
        return Err(MetricsError::EmptyPointSet);
    }
    let gx = PointGrid::build(x);
    let gy = PointGrid::build(y);
    let sum_xy = directed_sum(x, &gy);
    let sum_yx = directed_sum(y, &gx);
    Ok((sum_xy + sum_yx) / ((x.len() + y.len()) as f64))
}

/// True iff `hausdorff_mod(x, y) >= bound`. Exact, but short-circuits as
/// soon as the accumulated nearest-neighbor sum alone guarantees the
/// bound, which makes accept-style checks on well-separated sets cheap.
pub fn hausdorff_at_least(x: &PointSet, y: &PointSet, bound: f64) -> Result<bool, MetricsError> {
    if x.points.is_empty() || y.points.is_empty() {
        return Err(MetricsError::EmptyPointSet);
    }
    let target = bound * (x.points.len() + y.points.len()) as f64;
    let gy = PointGrid::build(&y.points);
    let mut sum = 0.0;
    for p in &x.points {
        sum += gy.nearest_sq(p).sqrt();
        if sum >= target {
            return Ok(true);
        }
    }
    let gx = PointGrid::build(&x.points);
    for q in &y.points {
        sum += gx.nearest_sq(q).sqrt();
        if sum >= target {
            return Ok(true);
        }
    }
    Ok(false)
}

// ---------------------------------------------------------------------------
// Voxelization and 3D IOU
// ---------------------------------------------------------------------------

/// Solid occupancy over the unit cube `[-0.5, 0.5]^3` at resolution R per
/// axis. `surface_only` flags meshes that failed the watertightness check
/// and therefore carry no interior fill.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub resolution: u32,
    bits: Vec<u64>,
    pub surface_only: bool,
}

impl VoxelGrid {
    pub fn empty(resolution: u32) -> Self {
        let n = (resolution as usize).pow(3);
        Self {
            resolution,
            bits: vec![0u64; n.div_ceil(64)],
            surface_only: false,
        }
    }

    #[inline]
    fn index(&self, x: u32, y: u32, z: u32) -> usize {
        let r = self.resolution as usize;
        (z as usize * r + y as usize) * r + x as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32, z: u32) -> bool {
        let i = self.index(x, y, z);
        self.bits[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, z: u32, v: bool) {
        let i = self.index(x, y, z);
        if v {
            self.bits[i / 64] |= 1 << (i % 64);
        } else {
            self.bits[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&b| b == 0)
    }

    /// Occupied fraction of the unit cube.
    pub fn volume_fraction(&self) -> f64 {
        self.count() as f64 / (self.resolution as f64).powi(3)
    }
}

/// Conservative triangle/axis-aligned-box overlap (separating axis test).
/// Touching counts as overlap.
fn tri_box_overlap(center: [f64; 3], half: f64, tri: &[[f64; 3]; 3]) -> bool {
    let v: Vec<[f64; 3]> = tri
        .iter()
        .map(|p| {
            [
                p[0] - center[0],
                p[1] - center[1],
                p[2] - center[2],
            ]
        })
        .collect();
    let e = [
        [v[1][0] - v[0][0], v[1][1] - v[0][1], v[1][2] - v[0][2]],
        [v[2][0] - v[1][0], v[2][1] - v[1][1], v[2][2] - v[1][2]],
        [v[0][0] - v[2][0], v[0][1] - v[2][1], v[0][2] - v[2][2]],
    ];

    // Box face normals: bounding-box test.
    for k in 0..3 {
        let lo = v[0][k].min(v[1][k]).min(v[2][k]);
        let hi = v[0][k].max(v[1][k]).max(v[2][k]);
        if lo > half || hi < -half {
            return false;
        }
    }

    // Nine edge cross-product axes.
    let axes = |a: usize, b: usize, edge: &[f64; 3]| -> [f64; 3] {
        // Cross product of the unit axis a with the edge, nonzero rows only.
        let mut axis = [0.0; 3];
        axis[a] = 0.0;
        axis[(a + 1) % 3] = -edge[(a + 2) % 3];
        axis[(a + 2) % 3] = edge[(a + 1) % 3];
        let _ = b;
        axis
    };
    for (a, edge) in (0..3).flat_map(|a| e.iter().map(move |edge| (a, edge))) {
        let axis = axes(a, 0, edge);
        let r = half
            * (axis[0].abs() + axis[1].abs() + axis[2].abs());
        let p: Vec<f64> = v
            .iter()
            .map(|q| q[0] * axis[0] + q[1] * axis[1] + q[2] * axis[2])
            .collect();
        let lo = p[0].min(p[1]).min(p[2]);
        let hi = p[0].max(p[1]).max(p[2]);
        if lo > r || hi < -r {
            return false;
        }
    }

    // Triangle plane.
    let n = [
        e[0][1] * e[1][2] - e[0][2] * e[1][1],
        e[0][2] * e[1][0] - e[0][0] * e[1][2],
        e[0][0] * e[1][1] - e[0][1] * e[1][0],
    ];
    let r = half * (n[0].abs() + n[1].abs() + n[2].abs());
    let d = n[0] * v[0][0] + n[1] * v[0][1] + n[2] * v[0][2];
    d.abs() <= r
}

fn has_boundary_edges(m: &Mesh) -> bool {
    let mut counts: HashMap<(u32, u32), u32> = HashMap::new();
    for t in &m.triangles {
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            let key = (a.min(b), a.max(b));
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    counts.values().any(|&c| c == 1)
}

/// Voxelize a normalized mesh over the unit cube: surface cells are those
/// intersected by any triangle, interior cells are those a 6-connected
/// flood fill from the grid boundary cannot reach. Meshes with boundary
/// edges are not closed surfaces, so the fill is skipped and the result is
/// flagged `surface_only`.
pub fn voxelize(m: &Mesh, resolution: u32) -> VoxelGrid {
    let r = resolution;
    let cell = 1.0 / r as f64;
    let half = cell / 2.0;
    let mut surface = VoxelGrid::empty(r);

    let cell_range = |lo: f64, hi: f64| -> (u32, u32) {
        let a = (((lo + 0.5) / cell).floor() as i64).clamp(0, r as i64 - 1) as u32;
        let b = (((hi + 0.5) / cell).floor() as i64).clamp(0, r as i64 - 1) as u32;
        (a, b)
    };

    for t in &m.triangles {
        let tri = [
            [
                m.vertices[t[0] as usize].x,
                m.vertices[t[0] as usize].y,
                m.vertices[t[0] as usize].z,
            ],
            [
                m.vertices[t[1] as usize].x,
                m.vertices[t[1] as usize].y,
                m.vertices[t[1] as usize].z,
            ],
            [
                m.vertices[t[2] as usize].x,
                m.vertices[t[2] as usize].y,
                m.vertices[t[2] as usize].z,
            ],
        ];
        let (x0, x1) = cell_range(
            tri[0][0].min(tri[1][0]).min(tri[2][0]),
            tri[0][0].max(tri[1][0]).max(tri[2][0]),
        );
        let (y0, y1) = cell_range(
            tri[0][1].min(tri[1][1]).min(tri[2][1]),
            tri[0][1].max(tri[1][1]).max(tri[2][1]),
        );
        let (z0, z1) = cell_range(
            tri[0][2].min(tri[1][2]).min(tri[2][2]),
            tri[0][2].max(tri[1][2]).max(tri[2][2]),
        );
        for z in z0..=z1 {
            for y in y0..=y1 {
                for x in x0..=x1 {
                    if surface.get(x, y, z) {
                        continue;
                    }
                    let center = [
                        -0.5 + (x as f64 + 0.5) * cell,
                        -0.5 + (y as f64 + 0.5) * cell,
                        -0.5 + (z as f64 + 0.5) * cell,
                    ];
                    if tri_box_overlap(center, half, &tri) {
                        surface.set(x, y, z, true);
                    }
                }
            }
        }
    }

    if m.triangles.is_empty() {
        return surface;
    }
    if has_boundary_edges(m) {
        surface.surface_only = true;
        return surface;
    }

    // Flood fill the exterior from the grid boundary through free cells;
    // whatever remains unreached is occupied (surface or enclosed).
    let mut exterior = VoxelGrid::empty(r);
    let mut queue: Vec<(u32, u32, u32)> = Vec::new();
    let push = |g: &mut VoxelGrid, q: &mut Vec<(u32, u32, u32)>, x: u32, y: u32, z: u32, s: &VoxelGrid| {
        if !s.get(x, y, z) && !g.get(x, y, z) {
            g.set(x, y, z, true);
            q.push((x, y, z));
        }
    };
    for a in 0..r {
        for b in 0..r {
            for (x, y, z) in [
                (0, a, b),
                (r - 1, a, b),
                (a, 0, b),
                (a, r - 1, b),
                (a, b, 0),
                (a, b, r - 1),
            ] {
                push(&mut exterior, &mut queue, x, y, z, &surface);
            }
        }
    }
    while let Some((x, y, z)) = queue.pop() {
        let mut neighbors = Vec::with_capacity(6);
        if x > 0 {
            neighbors.push((x - 1, y, z));
        }
        if x + 1 < r {
            neighbors.push((x + 1, y, z));
        }
        if y > 0 {
            neighbors.push((x, y - 1, z));
        }
        if y + 1 < r {
            neighbors.push((x, y + 1, z));
        }
        if z > 0 {
            neighbors.push((x, y, z - 1));
        }
        if z + 1 < r {
            neighbors.push((x, y, z + 1));
        }
        for (nx, ny, nz) in neighbors {
            push(&mut exterior, &mut queue, nx, ny, nz, &surface);
        }
    }

    let mut occupied = VoxelGrid::empty(r);
    for (i, block) in occupied.bits.iter_mut().enumerate() {
        *block = !exterior.bits[i];
    }
    // Clear the padding bits beyond R^3.
    let n = (r as usize).pow(3);
    let last = n / 64;
    if n % 64 != 0 {
        occupied.bits[last] &= (1u64 << (n % 64)) - 1;
    }
    occupied
}

/// Intersection over union of two occupancy grids. Both-empty pairs return
/// 1 by convention.
pub fn iou3d(a: &VoxelGrid, b: &VoxelGrid) -> Result<f64, MetricsError> {
    if a.resolution != b.resolution {
        return Err(MetricsError::ResolutionMismatch(a.resolution, b.resolution));
    }
    let mut inter = 0usize;
    let mut union = 0usize;
    for (x, y) in a.bits.iter().zip(&b.bits) {
        inter += (x & y).count_ones() as usize;
        union += (x | y).count_ones() as usize;
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

// ---------------------------------------------------------------------------
// Retrieval accuracy and the random baseline
// ---------------------------------------------------------------------------

/// Fraction of queries whose ground-truth model appears in the first `k`
/// ranks. The ground truth must be somewhere in each ranked list.
pub fn top_k_accuracy(
    results: &[(RetrievalResult, String)],
    k: usize,
) -> Result<f64, MetricsError> {
    let mut hits = 0usize;
    for (res, gt) in results {
        let pos = res
            .ranked
            .iter()
            .position(|r| &r.model_id == gt)
            .ok_or_else(|| MetricsError::GroundTruthMissing(gt.clone()))?;
        if pos < k {
            hits += 1;
        }
    }
    Ok(hits as f64 / results.len().max(1) as f64)
}

/// Expected metric values when picking a random model: the mean modified
/// Hausdorff distance and mean 3D IOU over all unordered distinct pairs.
pub fn random_baseline(
    meshes: &[Mesh],
    samples_per_mesh: usize,
    resolution: u32,
    seed: u64,
) -> Result<(f64, f64), MetricsError> {
    if meshes.len() < 2 {
        return Err(MetricsError::TooFewMeshes(meshes.len()));
    }
    // One shared sampling seed: identical meshes then yield identical point
    // sets, so a pair of equal models scores exactly (0, 1).
    let points: Vec<PointSet> = meshes
        .iter()
        .map(|m| sample_surface(m, samples_per_mesh, seed))
        .collect::<Result<_, _>>()?;
    let grids: Vec<VoxelGrid> = meshes.iter().map(|m| voxelize(m, resolution)).collect();

    let mut dh = KahanSum::default();
    let mut di = KahanSum::default();
    let mut pairs = 0usize;
    for i in 0..meshes.len() {
        for j in i + 1..meshes.len() {
            dh.add(hausdorff_mod(&points[i], &points[j])?);
            di.add(iou3d(&grids[i], &grids[j])?);
            pairs += 1;
        }
    }
    Ok((dh.value() / pairs as f64, di.value() / pairs as f64))
}
