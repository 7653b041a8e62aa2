//! Analytic gradients of the full training objective
//! `L = L_softmax + alpha L_C + beta L_TC + delta L_FM` with respect to
//! every trainable tensor: embedding layers, classifier, center rows and
//! the domain mapper. Centers receive gradients through both the center
//! loss and the triplet-center hinge (own and selected negative rows);
//! the feature-mapping loss propagates into both the mapped predicted
//! branch and the rendered branch.

use ndarray::{Array1, Array2, Axis};
use thiserror::Error;

use crate::field::{Domain, LocationField};
use crate::loss::{closest_negative, huber, huber_prime, softmax_loss, softmax_probs};
use crate::net::{DescriptorNet, EmbedCache, MapCache};

#[derive(Debug, Error)]
pub enum GradError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("label {label} out of range for {num_models} models")]
    LabelOutOfRange { label: usize, num_models: usize },
    #[error("sample {index}: predicted fields need a paired rendered field and vice versa")]
    PairingInvariant { index: usize },
    #[error(transparent)]
    Net(#[from] crate::net::NetError),
    #[error(transparent)]
    Loss(#[from] crate::loss::LossError),
}

/// One training item: a location field, its model index, and — for
/// simulated predictions — the rendered field of the same model and pose
/// used by the feature-mapping loss.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub lf: LocationField,
    pub label: usize,
    pub paired: Option<LocationField>,
}

impl TrainSample {
    pub fn rendered(lf: LocationField, label: usize) -> Self {
        Self {
            lf,
            label,
            paired: None,
        }
    }

    pub fn predicted(lf: LocationField, label: usize, paired: LocationField) -> Self {
        Self {
            lf,
            label,
            paired: Some(paired),
        }
    }

    fn check(&self, index: usize) -> Result<(), GradError> {
        let ok = match self.lf.domain {
            Domain::PredictedSim => self.paired.is_some(),
            Domain::Rendered => self.paired.is_none(),
        };
        if ok {
            Ok(())
        } else {
            Err(GradError::PairingInvariant { index })
        }
    }
}

/// Loss values of one batch. `total` is the full training objective;
/// `descriptor_total` omits the feature-mapping term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub softmax: f64,
    pub center: f64,
    pub tcl: f64,
    pub fm: f64,
    pub total: f64,
}

impl LossParts {
    pub fn descriptor_total(&self, alpha: f64, beta: f64) -> f64 {
        self.softmax + alpha * self.center + beta * self.tcl
    }
}

/// Gradient (or momentum) buffers shaped like the net parameters.
#[derive(Debug, Clone)]
pub struct Grads {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
    pub classifier: Array2<f64>,
    pub centers: Array2<f64>,
    pub mapper1: Array2<f64>,
    pub mapper2: Array2<f64>,
}

impl Grads {
    pub fn zeros_like(net: &DescriptorNet) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| {
                    (
                        Array2::zeros(l.weight.raw_dim()),
                        Array1::zeros(l.bias.raw_dim()),
                    )
                })
                .collect(),
            classifier: Array2::zeros(net.classifier.raw_dim()),
            centers: Array2::zeros(net.centers.raw_dim()),
            mapper1: Array2::zeros(net.mapper1.raw_dim()),
            mapper2: Array2::zeros(net.mapper2.raw_dim()),
        }
    }

    /// Same parameter order as [`DescriptorNet::flatten_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out.extend(self.classifier.iter());
        out.extend(self.centers.iter());
        out.extend(self.mapper1.iter());
        out.extend(self.mapper2.iter());
        out
    }
}

struct BatchForward {
    embed: EmbedCache,
    /// Row in the embed input for each batch sample.
    sample_rows: Vec<usize>,
    /// (sample index, embed row of its paired rendered field) per pair.
    pairs: Vec<(usize, usize)>,
    /// Mapper cache over the predicted samples (in batch order).
    mapped: Option<MapCache>,
    /// Index into the mapper rows per sample (None for rendered samples).
    mapped_row: Vec<Option<usize>>,
}

fn forward_batch(net: &DescriptorNet, batch: &[TrainSample]) -> Result<BatchForward, GradError> {
    if batch.is_empty() {
        return Err(GradError::EmptyBatch);
    }
    let k = net.cfg.num_models;
    let mut rows: Vec<Array1<f64>> = Vec::new();
    let mut sample_rows = Vec::with_capacity(batch.len());
    let mut pairs = Vec::new();
    let mut mapped_row = vec![None; batch.len()];
    let mut predicted = 0usize;
    for (i, s) in batch.iter().enumerate() {
        s.check(i)?;
        if s.label >= k {
            return Err(GradError::LabelOutOfRange {
                label: s.label,
                num_models: k,
            });
        }
        sample_rows.push(rows.len());
        rows.push(net.encode(&s.lf)?);
        if s.lf.domain == Domain::PredictedSim {
            mapped_row[i] = Some(predicted);
            predicted += 1;
        }
    }
    for (i, s) in batch.iter().enumerate() {
        if let Some(paired) = &s.paired {
            pairs.push((i, rows.len()));
            rows.push(net.encode(paired)?);
        }
    }
    let input_dim = net.cfg.input_dim();
    let mut x = Array2::zeros((rows.len(), input_dim));
    for (r, row) in rows.iter().enumerate() {
        x.row_mut(r).assign(row);
    }
    let embed = net.embed_batch(&x);

    let mapped = if predicted > 0 {
        let f = embed.descriptors();
        let mut pred = Array2::zeros((predicted, net.cfg.dim));
        for (i, m) in mapped_row.iter().enumerate() {
            if let Some(p) = m {
                pred.row_mut(*p).assign(&f.row(sample_rows[i]));
            }
        }
        Some(net.map_batch(&pred))
    } else {
        None
    };
    Ok(BatchForward {
        embed,
        sample_rows,
        pairs,
        mapped,
        mapped_row,
    })
}

fn eval(
    net: &DescriptorNet,
    batch: &[TrainSample],
    with_grads: bool,
) -> Result<(LossParts, Option<Grads>), GradError> {
    let fwd = forward_batch(net, batch)?;
    let cfg = &net.cfg;
    let t = cfg.huber_t;
    let f_all = fwd.embed.descriptors();
    let dim = cfg.dim;
    let n = batch.len() as f64;
    let norm_s = if cfg.mean_normalize { 1.0 / n } else { 1.0 };
    let norm_f = if cfg.mean_normalize && !fwd.pairs.is_empty() {
        1.0 / fwd.pairs.len() as f64
    } else {
        1.0
    };

    // The loss input of sample i: the raw descriptor for rendered fields,
    // the domain-mapped descriptor for simulated predictions.
    let phi = |i: usize| -> Array1<f64> {
        match fwd.mapped_row[i] {
            Some(p) => fwd.mapped.as_ref().expect("mapper ran").g.row(p).to_owned(),
            None => f_all.row(fwd.sample_rows[i]).to_owned(),
        }
    };

    let mut grads = with_grads.then(|| Grads::zeros_like(net));
    // Gradient w.r.t. phi_i per sample, and w.r.t. embed rows directly.
    let mut d_phi = Array2::<f64>::zeros((batch.len(), dim));
    let mut d_f = Array2::<f64>::zeros(f_all.raw_dim());

    let mut sum_softmax = 0.0;
    let mut sum_center = 0.0;
    let mut sum_tcl = 0.0;
    let mut sum_fm = 0.0;

    for (i, s) in batch.iter().enumerate() {
        let f = phi(i);
        let y = s.label;

        // Softmax cross-entropy on classifier logits.
        let logits = net.logits(f.view());
        sum_softmax += softmax_loss(logits.view(), y);
        if let Some(g) = grads.as_mut() {
            let mut dz = softmax_probs(logits.view());
            dz[y] -= 1.0;
            for (k, &dzk) in dz.iter().enumerate() {
                let w = norm_s * dzk;
                for d in 0..dim {
                    g.classifier[(d, k)] += w * f[d];
                }
            }
            let dphi_sm = net.classifier.dot(&dz);
            d_phi.row_mut(i).scaled_add(norm_s, &dphi_sm);
        }

        // Center loss.
        let own = net.centers.row(y);
        let mut center_i = 0.0;
        for d in 0..dim {
            center_i += huber(f[d] - own[d], t);
        }
        sum_center += center_i;
        if let Some(g) = grads.as_mut() {
            let w = cfg.alpha * norm_s;
            for d in 0..dim {
                let hp = huber_prime(f[d] - own[d], t);
                d_phi[(i, d)] += w * hp;
                g.centers[(y, d)] -= w * hp;
            }
        }

        // Triplet-center hinge against the closest other center.
        if net.centers.nrows() < 2 {
            return Err(GradError::Loss(crate::loss::LossError::SingleCenter(
                net.centers.nrows(),
            )));
        }
        let d_pos: f64 = (0..dim).map(|d| huber(f[d] - own[d], t)).sum();
        let (j_neg, d_neg) = closest_negative(f.view(), &net.centers, y, t)
            .expect("at least two centers");
        let hinge = d_pos + cfg.margin - d_neg;
        if hinge > 0.0 {
            sum_tcl += hinge;
            if let Some(g) = grads.as_mut() {
                let w = cfg.beta * norm_s;
                let neg = net.centers.row(j_neg);
                for d in 0..dim {
                    let hp_pos = huber_prime(f[d] - own[d], t);
                    let hp_neg = huber_prime(f[d] - neg[d], t);
                    d_phi[(i, d)] += w * (hp_pos - hp_neg);
                    g.centers[(y, d)] -= w * hp_pos;
                    g.centers[(j_neg, d)] += w * hp_neg;
                }
            }
        }
    }

    // Feature mapping between mapped predicted and rendered descriptors.
    for &(i, paired_row) in &fwd.pairs {
        let g_i = phi(i);
        let r_i = f_all.row(paired_row);
        let mut fm_i = 0.0;
        for d in 0..dim {
            fm_i += huber(g_i[d] - r_i[d], t);
        }
        sum_fm += fm_i;
        if grads.is_some() {
            let w = cfg.delta * norm_f;
            for d in 0..dim {
                let hp = huber_prime(g_i[d] - r_i[d], t);
                d_phi[(i, d)] += w * hp;
                d_f[(paired_row, d)] -= w * hp;
            }
        }
    }

    let parts = LossParts {
        softmax: norm_s * sum_softmax,
        center: norm_s * sum_center,
        tcl: norm_s * sum_tcl,
        fm: norm_f * sum_fm,
        total: norm_s * (sum_softmax + cfg.alpha * sum_center + cfg.beta * sum_tcl)
            + cfg.delta * norm_f * sum_fm,
    };

    let Some(mut g) = grads else {
        return Ok((parts, None));
    };

    // Push phi gradients back: through the mapper for predicted samples,
    // straight into the embed rows for rendered ones.
    if let Some(mapped) = &fwd.mapped {
        let rows = mapped.g.nrows();
        let mut d_g = Array2::<f64>::zeros((rows, dim));
        let mut pred_in = Array2::<f64>::zeros((rows, dim));
        for (i, m) in fwd.mapped_row.iter().enumerate() {
            if let Some(p) = m {
                d_g.row_mut(*p).assign(&d_phi.row(i));
                pred_in
                    .row_mut(*p)
                    .assign(&f_all.row(fwd.sample_rows[i]));
            }
        }
        // g = f + relu(f M1) M2
        g.mapper2 += &mapped.a.t().dot(&d_g);
        let mut d_u = d_g.dot(&net.mapper2.t());
        d_u.zip_mut_with(&mapped.u, |v, &u| {
            if u <= 0.0 {
                *v = 0.0;
            }
        });
        g.mapper1 += &pred_in.t().dot(&d_u);
        let d_pred = &d_g + &d_u.dot(&net.mapper1.t());
        for (i, m) in fwd.mapped_row.iter().enumerate() {
            if let Some(p) = m {
                let mut row = d_f.row_mut(fwd.sample_rows[i]);
                row += &d_pred.row(*p);
            }
        }
    }
    for (i, _) in batch.iter().enumerate() {
        if fwd.mapped_row[i].is_none() {
            let mut row = d_f.row_mut(fwd.sample_rows[i]);
            row += &d_phi.row(i);
        }
    }

    // Backward through the embedding MLP (last layer is linear, hidden
    // layers are relu).
    let layers = net.layers.len();
    let mut delta = d_f;
    for idx in (0..layers).rev() {
        if idx + 1 < layers {
            delta.zip_mut_with(&fwd.embed.activations[idx], |v, &a| {
                if a <= 0.0 {
                    *v = 0.0;
                }
            });
        }
        let input = if idx == 0 {
            &fwd.embed.input
        } else {
            &fwd.embed.activations[idx - 1]
        };
        g.layers[idx].0 += &input.t().dot(&delta);
        g.layers[idx].1 += &delta.sum_axis(Axis(0));
        if idx > 0 {
            delta = delta.dot(&net.layers[idx].weight.t());
        }
    }

    Ok((parts, Some(g)))
}

/// Loss of the full training objective on a batch, without gradients.
pub fn training_loss(net: &DescriptorNet, batch: &[TrainSample]) -> Result<LossParts, GradError> {
    eval(net, batch, false).map(|(parts, _)| parts)
}

/// The descriptor loss `L_softmax + alpha L_C + beta L_TC` and its parts.
pub fn descriptor_loss(
    net: &DescriptorNet,
    batch: &[TrainSample],
) -> Result<(f64, LossParts), GradError> {
    let parts = training_loss(net, batch)?;
    Ok((parts.descriptor_total(net.cfg.alpha, net.cfg.beta), parts))
}

/// Loss and analytic gradients for every trainable parameter.
pub fn grad(net: &DescriptorNet, batch: &[TrainSample]) -> Result<(LossParts, Grads), GradError> {
    let (parts, grads) = eval(net, batch, true)?;
    Ok((parts, grads.expect("gradients requested")))
}
