//! Descriptor network: a multilayer perceptron on the pooled masked
//! coordinate grid, a linear classifier head, trainable per-model center
//! descriptors and a residual domain mapper that moves descriptors of
//! simulated predictions into the rendered-descriptor distribution.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::LocationField;
use crate::util::{normal, rng_for};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("field is {got_w}x{got_h} but the net expects {want_w}x{want_h}")]
    ShapeMismatch {
        got_w: u32,
        got_h: u32,
        want_w: u32,
        want_h: u32,
    },
    #[error("invalid net config: {0}")]
    InvalidConfig(String),
}

/// Embedding dimensionality used throughout unless configured otherwise.
pub const DEFAULT_DIM: usize = 270;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub input_width: u32,
    pub input_height: u32,
    /// Average-pooling factor applied to the coordinate grid before the MLP.
    pub pool: u32,
    pub hidden: Vec<usize>,
    /// Embedding dimension D.
    pub dim: usize,
    /// Number of models K (classifier columns and center rows).
    pub num_models: usize,
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub margin: f64,
    pub huber_t: f64,
    /// Normalize loss sums by batch size instead of using raw sums.
    pub mean_normalize: bool,
    pub seed: u64,
}

impl NetConfig {
    /// Paper-default hyperparameters for a square field of side
    /// `resolution`, pooled to a 14x14 grid when divisible.
    pub fn with_defaults(resolution: u32, num_models: usize, seed: u64) -> Self {
        let pool = if resolution % 14 == 0 {
            resolution / 14
        } else {
            1
        };
        Self {
            input_width: resolution,
            input_height: resolution,
            pool,
            hidden: vec![512, 256],
            dim: DEFAULT_DIM,
            num_models,
            alpha: 0.01,
            beta: 0.1,
            delta: 0.01,
            margin: 1.0,
            huber_t: 1.0,
            mean_normalize: false,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.pool == 0
            || self.input_width % self.pool != 0
            || self.input_height % self.pool != 0
        {
            return Err(NetError::InvalidConfig(format!(
                "pool {} must evenly divide {}x{}",
                self.pool, self.input_width, self.input_height
            )));
        }
        if self.dim == 0 || self.num_models == 0 {
            return Err(NetError::InvalidConfig(
                "dim and num_models must be positive".to_string(),
            ));
        }
        if self.huber_t <= 0.0 {
            return Err(NetError::InvalidConfig(format!(
                "huber threshold must be positive, got {}",
                self.huber_t
            )));
        }
        Ok(())
    }

    /// Flattened input size: three coordinate channels on the pooled grid.
    pub fn input_dim(&self) -> usize {
        let pw = (self.input_width / self.pool) as usize;
        let ph = (self.input_height / self.pool) as usize;
        3 * pw * ph
    }
}

/// One fully-connected layer (input x output weights, output bias).
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorNet {
    pub cfg: NetConfig,
    /// Hidden layers followed by the linear embedding output.
    pub layers: Vec<Linear>,
    /// D x K classifier producing the softmax logits.
    pub classifier: Array2<f64>,
    /// K x D trainable center descriptors.
    pub centers: Array2<f64>,
    /// Residual domain mapper: f + relu(f M1) M2.
    pub mapper1: Array2<f64>,
    pub mapper2: Array2<f64>,
}

fn init_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| std * normal(rng))
}

impl DescriptorNet {
    pub fn init(cfg: NetConfig) -> Result<Self, NetError> {
        cfg.validate()?;
        let mut rng = rng_for(cfg.seed, 0x11e7);
        let mut dims = vec![cfg.input_dim()];
        dims.extend(&cfg.hidden);
        dims.push(cfg.dim);
        let layers = dims
            .windows(2)
            .map(|w| Linear {
                weight: init_matrix(&mut rng, w[0], w[1], (2.0 / w[0] as f64).sqrt()),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        let classifier = init_matrix(&mut rng, cfg.dim, cfg.num_models, (1.0 / cfg.dim as f64).sqrt());
        let centers = init_matrix(&mut rng, cfg.num_models, cfg.dim, 0.1);
        let mapper1 = init_matrix(&mut rng, cfg.dim, cfg.dim, 0.01);
        let mapper2 = init_matrix(&mut rng, cfg.dim, cfg.dim, 0.01);
        Ok(Self {
            cfg,
            layers,
            classifier,
            centers,
            mapper1,
            mapper2,
        })
    }

    /// Assemble a net from stored tensors, validating every shape against
    /// the config.
    pub fn from_parts(
        cfg: NetConfig,
        layers: Vec<Linear>,
        classifier: Array2<f64>,
        centers: Array2<f64>,
        mapper1: Array2<f64>,
        mapper2: Array2<f64>,
    ) -> Result<Self, NetError> {
        cfg.validate()?;
        let mut dims = vec![cfg.input_dim()];
        dims.extend(&cfg.hidden);
        dims.push(cfg.dim);
        if layers.len() + 1 != dims.len() {
            return Err(NetError::InvalidConfig(format!(
                "expected {} layers, got {}",
                dims.len() - 1,
                layers.len()
            )));
        }
        for (i, (layer, w)) in layers.iter().zip(dims.windows(2)).enumerate() {
            if layer.weight.nrows() != w[0]
                || layer.weight.ncols() != w[1]
                || layer.bias.len() != w[1]
            {
                return Err(NetError::InvalidConfig(format!(
                    "layer {i} shape {}x{} (bias {}) does not match {}x{}",
                    layer.weight.nrows(),
                    layer.weight.ncols(),
                    layer.bias.len(),
                    w[0],
                    w[1]
                )));
            }
        }
        let d = cfg.dim;
        let k = cfg.num_models;
        for (name, m, rows, cols) in [
            ("classifier", &classifier, d, k),
            ("centers", &centers, k, d),
            ("mapper1", &mapper1, d, d),
            ("mapper2", &mapper2, d, d),
        ] {
            if m.nrows() != rows || m.ncols() != cols {
                return Err(NetError::InvalidConfig(format!(
                    "{name} shape {}x{} does not match {rows}x{cols}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        Ok(Self {
            cfg,
            layers,
            classifier,
            centers,
            mapper1,
            mapper2,
        })
    }

    /// Masked coordinates (zeros where unmasked) average-pooled per channel
    /// and flattened channel-major.
    pub fn encode(&self, lf: &LocationField) -> Result<Array1<f64>, NetError> {
        if lf.width != self.cfg.input_width || lf.height != self.cfg.input_height {
            return Err(NetError::ShapeMismatch {
                got_w: lf.width,
                got_h: lf.height,
                want_w: self.cfg.input_width,
                want_h: self.cfg.input_height,
            });
        }
        let p = self.cfg.pool;
        let pw = (lf.width / p) as usize;
        let ph = (lf.height / p) as usize;
        let norm = 1.0 / (p * p) as f64;
        let mut x = Array1::zeros(3 * pw * ph);
        for c in 0..3usize {
            for by in 0..ph {
                for bx in 0..pw {
                    let mut acc = 0.0;
                    for dy in 0..p {
                        for dx in 0..p {
                            let xx = bx as u32 * p + dx;
                            let yy = by as u32 * p + dy;
                            let i = lf.index(xx, yy);
                            if lf.mask[i] {
                                acc += lf.coords[i][c] as f64;
                            }
                        }
                    }
                    x[c * pw * ph + by * pw + bx] = acc * norm;
                }
            }
        }
        Ok(x)
    }

    /// Embed a batch of encoded inputs, keeping post-activation caches for
    /// backpropagation. The final row block is the linear descriptor output.
    pub fn embed_batch(&self, x: &Array2<f64>) -> EmbedCache {
        let mut activations = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weight) + &layer.bias;
            if i + 1 < self.layers.len() {
                z.mapv_inplace(|v| v.max(0.0));
            }
            activations.push(z.clone());
            h = z;
        }
        EmbedCache {
            input: x.clone(),
            activations,
        }
    }

    /// Descriptor and classifier logits for one location field.
    pub fn forward(&self, lf: &LocationField) -> Result<(Array1<f64>, Array1<f64>), NetError> {
        let x = self.encode(lf)?;
        let batch = x.insert_axis(Axis(0));
        let cache = self.embed_batch(&batch);
        let f = cache.descriptors().row(0).to_owned();
        let logits = f.dot(&self.classifier);
        Ok((f, logits))
    }

    pub fn logits(&self, descriptor: ArrayView1<f64>) -> Array1<f64> {
        descriptor.dot(&self.classifier)
    }

    /// Residual domain mapping `f + relu(f M1) M2`.
    pub fn map_domain(&self, f: ArrayView1<f64>) -> Array1<f64> {
        let u = f.dot(&self.mapper1);
        let a = u.mapv(|v| v.max(0.0));
        &f + &a.dot(&self.mapper2)
    }

    pub fn map_batch(&self, f: &Array2<f64>) -> MapCache {
        let u = f.dot(&self.mapper1);
        let a = u.mapv(|v| v.max(0.0));
        let g = f + &a.dot(&self.mapper2);
        MapCache { u, a, g }
    }

    /// Round every parameter to f32 precision. Training finishes with this
    /// so checkpoints (f32 payloads) reload to bit-identical nets.
    pub fn quantize_to_f32(&mut self) {
        let q = |m: &mut Array2<f64>| m.mapv_inplace(|v| v as f32 as f64);
        for layer in &mut self.layers {
            layer.weight.mapv_inplace(|v| v as f32 as f64);
            layer.bias.mapv_inplace(|v| v as f32 as f64);
        }
        q(&mut self.classifier);
        q(&mut self.centers);
        q(&mut self.mapper1);
        q(&mut self.mapper2);
    }

    /// All parameters flattened in a fixed order (layer weights and biases,
    /// classifier, centers, mappers).
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend(layer.weight.iter());
            out.extend(layer.bias.iter());
        }
        out.extend(self.classifier.iter());
        out.extend(self.centers.iter());
        out.extend(self.mapper1.iter());
        out.extend(self.mapper2.iter());
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        let mut it = flat.iter().copied();
        let fill2 = |m: &mut Array2<f64>, it: &mut dyn Iterator<Item = f64>| {
            for v in m.iter_mut() {
                *v = it.next().expect("parameter vector too short");
            }
        };
        for layer in &mut self.layers {
            fill2(&mut layer.weight, &mut it);
            for v in layer.bias.iter_mut() {
                *v = it.next().expect("parameter vector too short");
            }
        }
        fill2(&mut self.classifier, &mut it);
        fill2(&mut self.centers, &mut it);
        fill2(&mut self.mapper1, &mut it);
        fill2(&mut self.mapper2, &mut it);
        assert!(it.next().is_none(), "parameter vector too long");
    }
}

/// Post-activation caches of [`DescriptorNet::embed_batch`].
pub struct EmbedCache {
    pub input: Array2<f64>,
    pub activations: Vec<Array2<f64>>,
}

impl EmbedCache {
    pub fn descriptors(&self) -> &Array2<f64> {
        self.activations.last().expect("net has at least one layer")
    }
}

/// Caches of the residual mapper forward pass.
pub struct MapCache {
    pub u: Array2<f64>,
    pub a: Array2<f64>,
    pub g: Array2<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Domain, LocationField};
    use crate::geom::Camera;

    fn tiny_cfg() -> NetConfig {
        NetConfig {
            input_width: 12,
            input_height: 12,
            pool: 3,
            hidden: vec![16, 12],
            dim: 8,
            num_models: 3,
            alpha: 0.01,
            beta: 0.1,
            delta: 0.01,
            margin: 1.0,
            huber_t: 1.0,
            mean_normalize: false,
            seed: 7,
        }
    }

    fn field_with(value: [f32; 3], cfg: &NetConfig) -> LocationField {
        let mut lf = LocationField::empty(
            cfg.input_width,
            cfg.input_height,
            Camera::centered(20.0, cfg.input_width, cfg.input_height),
        );
        for y in 2..8u32 {
            for x in 3..9u32 {
                let i = lf.index(x, y);
                lf.mask[i] = true;
                lf.coords[i] = value;
            }
        }
        lf.domain = Domain::Rendered;
        lf
    }

    #[test]
    fn all_unmasked_field_maps_to_bias_propagated_vector() {
        let cfg = tiny_cfg();
        let net = DescriptorNet::init(cfg.clone()).unwrap();
        let lf = LocationField::empty(
            cfg.input_width,
            cfg.input_height,
            Camera::centered(20.0, cfg.input_width, cfg.input_height),
        );
        let (f, _) = net.forward(&lf).unwrap();
        // Propagate the biases by hand through relu hidden layers.
        let mut h = Array1::<f64>::zeros(cfg.input_dim());
        for (i, layer) in net.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weight) + &layer.bias;
            if i + 1 < net.layers.len() {
                z.mapv_inplace(|v| v.max(0.0));
            }
            h = z;
        }
        assert!(f.iter().zip(h.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn forward_is_deterministic_and_ignores_centers() {
        let cfg = tiny_cfg();
        let mut net = DescriptorNet::init(cfg.clone()).unwrap();
        let lf = field_with([0.2, -0.1, 0.3], &cfg);
        let (f1, l1) = net.forward(&lf).unwrap();
        let (f2, l2) = net.forward(&lf).unwrap();
        assert_eq!(f1, f2);
        assert_eq!(l1, l2);
        // Swapping center rows must not change the forward pass.
        let r0 = net.centers.row(0).to_owned();
        let r1 = net.centers.row(1).to_owned();
        net.centers.row_mut(0).assign(&r1);
        net.centers.row_mut(1).assign(&r0);
        let (f3, l3) = net.forward(&lf).unwrap();
        assert_eq!(f1, f3);
        assert_eq!(l1, l3);
    }

    #[test]
    fn resolution_mismatch_is_a_shape_error() {
        let net = DescriptorNet::init(tiny_cfg()).unwrap();
        let lf = LocationField::empty(10, 10, Camera::centered(20.0, 10, 10));
        assert!(matches!(
            net.forward(&lf),
            Err(NetError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn zero_mapper_weights_make_mapping_identity() {
        let mut net = DescriptorNet::init(tiny_cfg()).unwrap();
        net.mapper1.fill(0.0);
        net.mapper2.fill(0.0);
        let f = Array1::from_vec(vec![0.3, -0.2, 0.5, 0.0, 1.0, -1.0, 0.1, 0.2]);
        let g = net.map_domain(f.view());
        assert_eq!(g, f);
    }

    #[test]
    fn mapper_is_nonlinear_for_generic_weights() {
        // Additivity fails wherever the relu sign patterns of the two
        // inputs differ.
        let net = DescriptorNet::init(tiny_cfg()).unwrap();
        let f1 = Array1::from_vec(vec![0.3, -0.2, 0.5, 0.4, 1.0, -1.0, 0.1, 0.2]);
        let f2 = Array1::from_vec(vec![-0.4, 0.7, -0.6, 0.1, -1.2, 0.9, -0.3, 0.5]);
        let sum: Array1<f64> = &f1 + &f2;
        let g_sum = net.map_domain(sum.view());
        let sum_g = net.map_domain(f1.view()) + net.map_domain(f2.view());
        assert!((&g_sum - &sum_g).iter().any(|v| v.abs() > 1e-9));
    }

    #[test]
    fn encode_pools_masked_coordinates() {
        let cfg = tiny_cfg();
        let net = DescriptorNet::init(cfg.clone()).unwrap();
        let mut lf = LocationField::empty(
            cfg.input_width,
            cfg.input_height,
            Camera::centered(20.0, 12, 12),
        );
        // One masked pixel inside the first 3x3 block.
        let i = lf.index(1, 1);
        lf.mask[i] = true;
        lf.coords[i] = [0.9, -0.9, 0.45];
        let x = net.encode(&lf).unwrap();
        let block = 16; // 4x4 pooled grid per channel
        assert!((x[0] - 0.9 / 9.0).abs() < 1e-7);
        assert!((x[block] - -0.9 / 9.0).abs() < 1e-7);
        assert!((x[2 * block] - 0.45 / 9.0).abs() < 1e-7);
        assert_eq!(x.iter().filter(|v| **v != 0.0).count(), 3);
    }

    #[test]
    fn flatten_set_roundtrip() {
        let net = DescriptorNet::init(tiny_cfg()).unwrap();
        let flat = net.flatten_params();
        let mut other = DescriptorNet::init(NetConfig {
            seed: 99,
            ..tiny_cfg()
        })
        .unwrap();
        assert_ne!(other.flatten_params(), flat);
        other.set_params(&flat);
        assert_eq!(other.flatten_params(), flat);
    }
}
