//! Mini-batch SGD with momentum over mixed rendered/predicted batches.
//! Batches hold the two domains at a fixed ratio, the learning rate is cut
//! by a constant factor at scheduled epochs, and all shuffling comes from
//! the seed, so a (dataset, config) pair always trains to the same weights.

use ndarray::Zip;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::Domain;
use crate::grad::{grad, Grads, TrainSample};
use crate::net::{DescriptorNet, NetConfig};
use crate::util::rng_for;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("dataset has no rendered samples")]
    NoRenderedSamples,
    #[error("dataset is missing model index {0}")]
    MissingModelIndex(usize),
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Grad(#[from] crate::grad::GradError),
    #[error(transparent)]
    Net(#[from] crate::net::NetError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Epochs at which the learning rate divides by `decay_factor`.
    pub decay_epochs: Vec<usize>,
    pub decay_factor: f64,
    pub momentum: f64,
    /// predicted : rendered samples per batch.
    pub ratio: (u32, u32),
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 32,
            lr: 1e-3,
            decay_epochs: vec![150, 250],
            decay_factor: 5.0,
            momentum: 0.9,
            ratio: (1, 3),
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(TrainError::InvalidConfig(
                "epochs and batch_size must be positive".to_string(),
            ));
        }
        if self.lr < 0.0 || self.decay_factor <= 0.0 {
            return Err(TrainError::InvalidConfig(
                "lr must be non-negative and decay_factor positive".to_string(),
            ));
        }
        if self.ratio.1 == 0 {
            return Err(TrainError::InvalidConfig(
                "rendered ratio denominator must be positive".to_string(),
            ));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let cuts = self.decay_epochs.iter().filter(|&&d| epoch >= d).count();
        self.lr / self.decay_factor.powi(cuts as i32)
    }
}

/// Per-epoch mean loss values, one row of the training-curve CSV.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub total: f64,
    pub softmax: f64,
    pub center: f64,
    pub tcl: f64,
    pub fm: f64,
}

fn sgd_step(net: &mut DescriptorNet, grads: &Grads, velocity: &mut Grads, lr: f64, momentum: f64) {
    let update2 = |param: &mut ndarray::Array2<f64>,
                       g: &ndarray::Array2<f64>,
                       v: &mut ndarray::Array2<f64>| {
        Zip::from(&mut *v).and(g).for_each(|v, &g| *v = momentum * *v + g);
        Zip::from(param).and(&*v).for_each(|p, &v| *p -= lr * v);
    };
    for i in 0..net.layers.len() {
        update2(
            &mut net.layers[i].weight,
            &grads.layers[i].0,
            &mut velocity.layers[i].0,
        );
        let (gb, vb) = (&grads.layers[i].1, &mut velocity.layers[i].1);
        Zip::from(&mut *vb).and(gb).for_each(|v, &g| *v = momentum * *v + g);
        Zip::from(&mut net.layers[i].bias)
            .and(&*vb)
            .for_each(|p, &v| *p -= lr * v);
    }
    update2(&mut net.classifier, &grads.classifier, &mut velocity.classifier);
    update2(&mut net.centers, &grads.centers, &mut velocity.centers);
    update2(&mut net.mapper1, &grads.mapper1, &mut velocity.mapper1);
    update2(&mut net.mapper2, &grads.mapper2, &mut velocity.mapper2);
}

fn shuffled(len: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(rng);
    idx
}

/// Train a fresh net on the dataset. Epochs iterate the rendered samples;
/// each batch mixes in predicted samples at the configured ratio, cycling
/// through the predicted pool. Returns the trained net (with parameters
/// rounded to f32 precision so checkpoints round-trip exactly) and the
/// per-epoch loss curve.
pub fn train(
    dataset: &[TrainSample],
    net_cfg: NetConfig,
    cfg: &TrainConfig,
) -> Result<(DescriptorNet, Vec<EpochStats>), TrainError> {
    cfg.validate()?;
    let k = net_cfg.num_models;
    let mut covered = vec![false; k];
    for s in dataset {
        if s.label < k {
            covered[s.label] = true;
        }
    }
    if let Some(missing) = covered.iter().position(|&c| !c) {
        return Err(TrainError::MissingModelIndex(missing));
    }

    let rendered: Vec<usize> = (0..dataset.len())
        .filter(|&i| dataset[i].lf.domain == Domain::Rendered)
        .collect();
    let predicted: Vec<usize> = (0..dataset.len())
        .filter(|&i| dataset[i].lf.domain == Domain::PredictedSim)
        .collect();
    if rendered.is_empty() {
        return Err(TrainError::NoRenderedSamples);
    }

    let (rp, rr) = cfg.ratio;
    let per_batch_pred = if predicted.is_empty() {
        0
    } else {
        (cfg.batch_size * rp as usize) / (rp as usize + rr as usize)
    };
    let per_batch_rend = cfg.batch_size - per_batch_pred;
    let steps = (rendered.len() / per_batch_rend).max(1);

    let mut net = DescriptorNet::init(net_cfg)?;
    let mut velocity = Grads::zeros_like(&net);
    let mut rng = rng_for(cfg.seed, 0x7a11);
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut pred_queue: Vec<usize> = Vec::new();

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let order = shuffled(rendered.len(), &mut rng);
        let mut sums = [0.0f64; 5];
        for step in 0..steps {
            let mut batch: Vec<TrainSample> = Vec::with_capacity(cfg.batch_size);
            for s in 0..per_batch_rend {
                let idx = rendered[order[(step * per_batch_rend + s) % rendered.len()]];
                batch.push(dataset[idx].clone());
            }
            for _ in 0..per_batch_pred {
                if pred_queue.is_empty() {
                    pred_queue = shuffled(predicted.len(), &mut rng);
                }
                let idx = predicted[pred_queue.pop().expect("refilled")];
                batch.push(dataset[idx].clone());
            }
            let (parts, grads) = grad(&net, &batch)?;
            sgd_step(&mut net, &grads, &mut velocity, lr, cfg.momentum);
            sums[0] += parts.total;
            sums[1] += parts.softmax;
            sums[2] += parts.center;
            sums[3] += parts.tcl;
            sums[4] += parts.fm;
        }
        let n = steps as f64;
        curve.push(EpochStats {
            epoch,
            lr,
            total: sums[0] / n,
            softmax: sums[1] / n,
            center: sums[2] / n,
            tcl: sums[3] / n,
            fm: sums[4] / n,
        });
    }

    net.quantize_to_f32();
    Ok((net, curve))
}

/// Serialize the loss curve as CSV (epoch, lr, total, softmax, center,
/// tcl, fm).
pub fn curve_to_csv(curve: &[EpochStats]) -> String {
    let mut out = String::from("epoch,lr,total,softmax,center,tcl,fm\n");
    for row in curve {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.epoch, row.lr, row.total, row.softmax, row.center, row.tcl, row.fm
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{box_mesh, gen_procedural_dataset, DatasetSpec};
    use crate::degrade::{degrade, DegradeConfig};
    use crate::geom::Camera;
    use crate::mesh::normalize_mesh;
    use crate::render::{render_location_field, sample_pose, PoseConfig};

    fn tiny_net_cfg(k: usize) -> NetConfig {
        NetConfig {
            input_width: 28,
            input_height: 28,
            pool: 4,
            hidden: vec![64, 48],
            dim: 16,
            num_models: k,
            alpha: 0.01,
            beta: 0.1,
            delta: 0.01,
            margin: 1.0,
            huber_t: 1.0,
            mean_normalize: false,
            seed: 5,
        }
    }

    fn toy_dataset(k: usize, views: usize) -> Vec<TrainSample> {
        let spec = DatasetSpec::mixed(k, 0.02);
        let meshes = gen_procedural_dataset(&spec, 11).unwrap();
        let cam = Camera::centered(32.0, 28, 28);
        let pose_cfg = PoseConfig::default();
        let mut out = Vec::new();
        for (label, mesh) in meshes.iter().enumerate() {
            for v in 0..views {
                let seed = (label * 1000 + v) as u64;
                let pose = sample_pose(&pose_cfg, &cam, seed);
                let lf = render_location_field(mesh, &pose, &cam, 28, 28).unwrap();
                if v % 4 == 0 {
                    let deg = degrade(&lf, &DegradeConfig::default(), seed).unwrap();
                    out.push(TrainSample::predicted(deg, label, lf.clone()));
                }
                out.push(TrainSample::rendered(lf, label));
            }
        }
        out
    }

    #[test]
    fn zero_learning_rate_leaves_weights_unchanged() {
        let k = 3;
        let data = toy_dataset(k, 4);
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 8,
            lr: 0.0,
            decay_epochs: vec![],
            seed: 1,
            ..TrainConfig::default()
        };
        let (net, curve) = train(&data, tiny_net_cfg(k), &cfg).unwrap();
        let mut fresh = DescriptorNet::init(tiny_net_cfg(k)).unwrap();
        fresh.quantize_to_f32();
        assert_eq!(net.flatten_params(), fresh.flatten_params());
        assert_eq!(curve.len(), 1);
    }

    #[test]
    fn training_separates_a_toy_problem() {
        let k = 3;
        let data = toy_dataset(k, 20);
        let cfg = TrainConfig {
            epochs: 50,
            batch_size: 16,
            lr: 1e-3,
            decay_epochs: vec![30, 45],
            seed: 2,
            ..TrainConfig::default()
        };
        let (net, curve) = train(&data, tiny_net_cfg(k), &cfg).unwrap();
        assert!(curve.last().unwrap().total < curve.first().unwrap().total);
        assert!(curve.iter().all(|r| r.total.is_finite()));
        // Training top-1 by nearest center over the rendered samples.
        let mut hits = 0;
        let mut count = 0;
        for s in &data {
            if s.lf.domain != Domain::Rendered {
                continue;
            }
            let (f, _) = net.forward(&s.lf).unwrap();
            let mut best = (f64::INFINITY, usize::MAX);
            for j in 0..k {
                let d = (&f - &net.centers.row(j))
                    .mapv(|v| v * v)
                    .sum()
                    .sqrt();
                if d < best.0 {
                    best = (d, j);
                }
            }
            hits += usize::from(best.1 == s.label);
            count += 1;
        }
        assert_eq!(hits, count, "training top-1 {hits}/{count}");
    }

    #[test]
    fn training_is_deterministic() {
        let k = 2;
        let data = toy_dataset(k, 6);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 8,
            seed: 9,
            ..TrainConfig::default()
        };
        let (a, _) = train(&data, tiny_net_cfg(k), &cfg).unwrap();
        let (b, _) = train(&data, tiny_net_cfg(k), &cfg).unwrap();
        assert_eq!(a.flatten_params(), b.flatten_params());
    }

    #[test]
    fn missing_model_index_is_a_dataset_error() {
        let mesh = normalize_mesh(&box_mesh([-0.5, -0.3, -0.2], [0.5, 0.3, 0.2], "b".into()))
            .unwrap();
        let cam = Camera::centered(32.0, 28, 28);
        let pose = sample_pose(&PoseConfig::default(), &cam, 3);
        let lf = render_location_field(&mesh, &pose, &cam, 28, 28).unwrap();
        let data = vec![TrainSample::rendered(lf, 0)];
        let err = train(&data, tiny_net_cfg(2), &TrainConfig::default());
        assert!(matches!(err, Err(TrainError::MissingModelIndex(1))));
    }

    #[test]
    fn lr_schedule_divides_at_decay_epochs() {
        let cfg = TrainConfig {
            lr: 1e-3,
            decay_epochs: vec![150, 250],
            decay_factor: 5.0,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.lr_at(0), 1e-3);
        assert_eq!(cfg.lr_at(149), 1e-3);
        assert_eq!(cfg.lr_at(150), 2e-4);
        assert_eq!(cfg.lr_at(250), 4e-5);
    }
}
