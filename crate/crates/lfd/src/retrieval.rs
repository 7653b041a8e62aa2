//! Center-descriptor banks and ranked matching. Queries are embedded
//! (simulated predictions pass through the domain mapper first) and ranked
//! against all centers by Euclidean distance; the multi-view variant
//! scores each model by its best view instead of a single center.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{Domain, LocationField};
use crate::geom::Camera;
use crate::mesh::Mesh;
use crate::net::DescriptorNet;
use crate::render::{render_location_field, sample_pose, PoseConfig};
use crate::util::KahanSum;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("expected {expected} model ids, got {got}")]
    IdCountMismatch { expected: usize, got: usize },
    #[error("duplicate model id '{0}'")]
    DuplicateId(String),
    #[error("model list is empty")]
    Empty,
    #[error("model '{0}' has no view descriptors")]
    NoViews(String),
    #[error("requested top-{k} from a bank of {size}")]
    KTooLarge { k: usize, size: usize },
    #[error(transparent)]
    Net(#[from] crate::net::NetError),
    #[error(transparent)]
    Render(#[from] crate::render::RenderError),
}

/// How a bank's rows were produced: copied from trained center weights or
/// averaged over rendered views of unseen models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Trained,
    AveragedViews(u32),
}

/// Model-id to center-descriptor table used at matching time. Center
/// entries are kept at f32 precision so the binary format round-trips
/// exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterBank {
    pub model_ids: Vec<String>,
    pub centers: Array2<f64>,
    pub provenance: Provenance,
}

impl CenterBank {
    pub fn new(
        model_ids: Vec<String>,
        mut centers: Array2<f64>,
        provenance: Provenance,
    ) -> Result<Self, RetrievalError> {
        if model_ids.is_empty() {
            return Err(RetrievalError::Empty);
        }
        if model_ids.len() != centers.nrows() {
            return Err(RetrievalError::IdCountMismatch {
                expected: model_ids.len(),
                got: centers.nrows(),
            });
        }
        let mut sorted = model_ids.clone();
        sorted.sort();
        for w in sorted.windows(2) {
            if w[0] == w[1] {
                return Err(RetrievalError::DuplicateId(w[0].clone()));
            }
        }
        centers.mapv_inplace(|v| v as f32 as f64);
        Ok(Self {
            model_ids,
            centers,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.model_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.model_ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedMatch {
    pub model_id: String,
    pub distance: f64,
}

/// Ranked list of candidate models, distances ascending;
/// `comparison_count` is the number of descriptor comparisons performed.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub ranked: Vec<RankedMatch>,
    pub comparison_count: usize,
}

/// View descriptors per model for the multi-view matching ablation.
#[derive(Debug, Clone)]
pub struct ViewBank {
    pub model_ids: Vec<String>,
    pub views: Vec<Vec<Array1<f64>>>,
}

/// Aggregation of per-view distances into one model score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewAggregation {
    Min,
    Mean,
}

/// Copy the trained center rows into a bank.
pub fn build_center_bank(
    net: &DescriptorNet,
    model_ids: Vec<String>,
) -> Result<CenterBank, RetrievalError> {
    if model_ids.len() != net.cfg.num_models {
        return Err(RetrievalError::IdCountMismatch {
            expected: net.cfg.num_models,
            got: model_ids.len(),
        });
    }
    CenterBank::new(model_ids, net.centers.clone(), Provenance::Trained)
}

fn kahan_mean(rows: &[Array1<f64>]) -> Array1<f64> {
    let dim = rows[0].len();
    let mut out = Array1::zeros(dim);
    for d in 0..dim {
        let mut acc = KahanSum::default();
        for r in rows {
            acc.add(r[d]);
        }
        out[d] = acc.value() / rows.len() as f64;
    }
    out
}

/// Centers for models outside the training set: render `views` location
/// fields per mesh under sampled poses, embed them (rendered domain, no
/// mapper) and average.
pub fn centers_for_unseen(
    net: &DescriptorNet,
    meshes: &[Mesh],
    views: u32,
    pose_cfg: &PoseConfig,
    cam: &Camera,
    seed: u64,
) -> Result<CenterBank, RetrievalError> {
    if meshes.is_empty() {
        return Err(RetrievalError::Empty);
    }
    let mut centers = Array2::zeros((meshes.len(), net.cfg.dim));
    let mut ids = Vec::with_capacity(meshes.len());
    for (mi, mesh) in meshes.iter().enumerate() {
        let mut descs = Vec::with_capacity(views as usize);
        for v in 0..views {
            let view_seed = seed
                .wrapping_add((mi as u64) << 32)
                .wrapping_add(v as u64);
            let pose = sample_pose(pose_cfg, cam, view_seed);
            let lf = render_location_field(
                mesh,
                &pose,
                cam,
                net.cfg.input_width,
                net.cfg.input_height,
            )?;
            let (f, _) = net.forward(&lf)?;
            descs.push(f);
        }
        centers.row_mut(mi).assign(&kahan_mean(&descs));
        ids.push(mesh.model_id.clone());
    }
    CenterBank::new(ids, centers, Provenance::AveragedViews(views))
}

fn euclidean(a: &Array1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Embed the query field and map it into the rendered domain when it is a
/// simulated prediction.
pub fn embed_query(
    net: &DescriptorNet,
    lf: &LocationField,
) -> Result<Array1<f64>, crate::net::NetError> {
    let (f, _) = net.forward(lf)?;
    Ok(match lf.domain {
        Domain::PredictedSim => net.map_domain(f.view()),
        Domain::Rendered => f,
    })
}

fn rank(mut scored: Vec<RankedMatch>, k: usize) -> Vec<RankedMatch> {
    scored.sort_by(|a, b| {
        a.distance
            .partial_cmp(&b.distance)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.model_id.cmp(&b.model_id))
    });
    scored.truncate(k);
    scored
}

/// Rank the `k` nearest centers for a query field.
pub fn retrieve(
    net: &DescriptorNet,
    lf: &LocationField,
    bank: &CenterBank,
    k: usize,
) -> Result<RetrievalResult, RetrievalError> {
    if k > bank.len() {
        return Err(RetrievalError::KTooLarge { k, size: bank.len() });
    }
    let q = embed_query(net, lf)?;
    let scored = bank
        .model_ids
        .iter()
        .zip(bank.centers.rows())
        .map(|(id, c)| RankedMatch {
            model_id: id.clone(),
            distance: euclidean(&q, c),
        })
        .collect();
    Ok(RetrievalResult {
        ranked: rank(scored, k),
        comparison_count: bank.len(),
    })
}

/// Rank models by aggregating distances to each model's view descriptors.
/// Every view is compared, so the comparison count is the total number of
/// views rather than the number of models.
pub fn retrieve_multiview(
    net: &DescriptorNet,
    lf: &LocationField,
    view_bank: &ViewBank,
    aggregation: ViewAggregation,
    k: usize,
) -> Result<RetrievalResult, RetrievalError> {
    if k > view_bank.model_ids.len() {
        return Err(RetrievalError::KTooLarge {
            k,
            size: view_bank.model_ids.len(),
        });
    }
    let q = embed_query(net, lf)?;
    let mut comparisons = 0usize;
    let mut scored = Vec::with_capacity(view_bank.model_ids.len());
    for (id, views) in view_bank.model_ids.iter().zip(&view_bank.views) {
        if views.is_empty() {
            return Err(RetrievalError::NoViews(id.clone()));
        }
        comparisons += views.len();
        let dists = views.iter().map(|v| euclidean(&q, v.view()));
        let score = match aggregation {
            ViewAggregation::Min => dists.fold(f64::INFINITY, f64::min),
            ViewAggregation::Mean => {
                let mut acc = KahanSum::default();
                let mut n = 0usize;
                for d in dists {
                    acc.add(d);
                    n += 1;
                }
                acc.value() / n as f64
            }
        };
        scored.push(RankedMatch {
            model_id: id.clone(),
            distance: score,
        });
    }
    Ok(RetrievalResult {
        ranked: rank(scored, k),
        comparison_count: comparisons,
    })
}
