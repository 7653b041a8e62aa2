//! Training losses: robust Huber distance, center loss pulling descriptors
//! toward their model's center, triplet-center loss pushing the closest
//! other center away by a margin, stabilized softmax cross-entropy, and
//! the feature-mapping loss between mapped predicted and rendered
//! descriptors.

use ndarray::{Array1, Array2, ArrayView1};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("triplet-center loss needs at least 2 centers, got {0}")]
    SingleCenter(usize),
    #[error("label {label} out of range for {num_models} models")]
    LabelOutOfRange { label: usize, num_models: usize },
}

/// Huber penalty: quadratic inside `|r| <= t`, linear outside.
#[inline]
pub fn huber(r: f64, t: f64) -> f64 {
    let a = r.abs();
    if a <= t {
        0.5 * r * r
    } else {
        t * (a - 0.5 * t)
    }
}

/// Derivative of [`huber`]; continuous, with value `t * sign(r)` at the
/// branch point.
#[inline]
pub fn huber_prime(r: f64, t: f64) -> f64 {
    let a = r.abs();
    if a <= t {
        r
    } else {
        t * r.signum()
    }
}

/// Huber distance between vectors: the sum of per-component penalties of
/// the difference.
pub fn huber_dist(a: ArrayView1<f64>, b: ArrayView1<f64>, t: f64) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| huber(x - y, t)).sum()
}

/// Index and distance of the closest center other than `own`, ties broken
/// by the lowest index.
pub fn closest_negative(
    f: ArrayView1<f64>,
    centers: &Array2<f64>,
    own: usize,
    t: f64,
) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (j, c) in centers.rows().into_iter().enumerate() {
        if j == own {
            continue;
        }
        let d = huber_dist(f, c, t);
        if best.map_or(true, |(_, bd)| d < bd) {
            best = Some((j, d));
        }
    }
    best
}

/// Sum over the batch of Huber distances between each descriptor and its
/// own center.
pub fn center_loss(
    batch: &[(Array1<f64>, usize)],
    centers: &Array2<f64>,
    t: f64,
) -> Result<f64, LossError> {
    let mut total = 0.0;
    for (f, y) in batch {
        if *y >= centers.nrows() {
            return Err(LossError::LabelOutOfRange {
                label: *y,
                num_models: centers.nrows(),
            });
        }
        total += huber_dist(f.view(), centers.row(*y), t);
    }
    Ok(total)
}

/// Sum over the batch of hinge terms requiring each descriptor to sit
/// closer to its own center than to the nearest other center by `margin`.
pub fn triplet_center_loss(
    batch: &[(Array1<f64>, usize)],
    centers: &Array2<f64>,
    margin: f64,
    t: f64,
) -> Result<f64, LossError> {
    if centers.nrows() < 2 {
        return Err(LossError::SingleCenter(centers.nrows()));
    }
    let mut total = 0.0;
    for (f, y) in batch {
        if *y >= centers.nrows() {
            return Err(LossError::LabelOutOfRange {
                label: *y,
                num_models: centers.nrows(),
            });
        }
        let d_pos = huber_dist(f.view(), centers.row(*y), t);
        let (_, d_neg) = closest_negative(f.view(), centers, *y, t)
            .expect("at least two centers");
        total += (d_pos + margin - d_neg).max(0.0);
    }
    Ok(total)
}

/// Cross-entropy of the softmax over `logits` against class `y`, computed
/// with log-sum-exp stabilization.
pub fn softmax_loss(logits: ArrayView1<f64>, y: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[y]
}

/// Softmax probabilities, stabilized the same way as [`softmax_loss`].
pub fn softmax_probs(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p = logits.mapv(|z| (z - max).exp());
    let sum = p.sum();
    p.mapv_inplace(|v| v / sum);
    p
}

/// Sum of Huber distances between corresponding feature-mapped predicted
/// and rendered descriptors.
pub fn feature_mapping_loss(pairs: &[(Array1<f64>, Array1<f64>)], t: f64) -> f64 {
    pairs
        .iter()
        .map(|(mapped, rendered)| huber_dist(mapped.view(), rendered.view(), t))
        .sum()
}
