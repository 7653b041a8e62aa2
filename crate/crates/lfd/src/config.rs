//! JSON run configuration shared by the CLI subcommands. Every block has
//! defaults, so a partial (or empty) config document is valid.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DatasetSpec;
use crate::degrade::DegradeConfig;
use crate::geom::Camera;
use crate::net::{NetConfig, DEFAULT_DIM};
use crate::render::PoseConfig;
use crate::retrieval::ViewAggregation;
use crate::train::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct NetParams {
    /// Side length of the pooled coordinate grid fed to the MLP.
    pub pool_to: u32,
    pub hidden: Vec<usize>,
    pub dim: usize,
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub margin: f64,
    pub huber_t: f64,
    pub mean_normalize: bool,
}

impl Default for NetParams {
    fn default() -> Self {
        Self {
            pool_to: 14,
            hidden: vec![512, 256],
            dim: DEFAULT_DIM,
            alpha: 0.01,
            beta: 0.1,
            delta: 0.01,
            margin: 1.0,
            huber_t: 1.0,
            mean_normalize: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub decay_epochs: Vec<usize>,
    pub decay_factor: f64,
    pub momentum: f64,
    /// predicted : rendered samples per batch.
    pub ratio: (u32, u32),
}

impl Default for TrainParams {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            epochs: d.epochs,
            batch_size: d.batch_size,
            lr: d.lr,
            decay_epochs: d.decay_epochs,
            decay_factor: d.decay_factor,
            momentum: d.momentum,
            ratio: d.ratio,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalParams {
    /// Views rendered per model for unseen-database centers and for the
    /// multi-view matching ablation.
    pub views: u32,
    pub aggregation: ViewAggregation,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        Self {
            views: 100,
            aggregation: ViewAggregation::Min,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct PnpParams {
    pub correspondences: usize,
    pub ransac_iters: usize,
    pub ransac_threshold_px: f64,
}

impl Default for PnpParams {
    fn default() -> Self {
        Self {
            correspondences: 200,
            ransac_iters: 500,
            ransac_threshold_px: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalParams {
    pub samples_per_mesh: usize,
    pub voxel_resolution: u32,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            samples_per_mesh: 10_000,
            voxel_resolution: 128,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Square location-field side in pixels.
    pub resolution: u32,
    /// Focal length in pixels; the field side when omitted.
    pub focal: Option<f64>,
    /// Rendered views per model for the `render` subcommand.
    pub views_per_model: u32,
    pub pose: PoseConfig,
    pub degrade: DegradeConfig,
    pub net: NetParams,
    pub train: TrainParams,
    pub retrieval: RetrievalParams,
    pub pnp: PnpParams,
    pub eval: EvalParams,
    pub dataset: Option<DatasetSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            resolution: 56,
            focal: None,
            views_per_model: 60,
            pose: PoseConfig::default(),
            degrade: DegradeConfig::default(),
            net: NetParams::default(),
            train: TrainParams::default(),
            retrieval: RetrievalParams::default(),
            pnp: PnpParams::default(),
            eval: EvalParams::default(),
            dataset: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.resolution == 0 {
            return Err(ConfigError::Invalid("resolution must be positive".into()));
        }
        if self.net.pool_to == 0 || self.resolution % self.net.pool_to != 0 {
            return Err(ConfigError::Invalid(format!(
                "pool_to {} must divide the resolution {}",
                self.net.pool_to, self.resolution
            )));
        }
        self.pose
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn camera(&self) -> Camera {
        Camera::centered(
            self.focal.unwrap_or(self.resolution as f64),
            self.resolution,
            self.resolution,
        )
    }

    pub fn net_config(&self, num_models: usize, seed: u64) -> NetConfig {
        NetConfig {
            input_width: self.resolution,
            input_height: self.resolution,
            pool: self.resolution / self.net.pool_to,
            hidden: self.net.hidden.clone(),
            dim: self.net.dim,
            num_models,
            alpha: self.net.alpha,
            beta: self.net.beta,
            delta: self.net.delta,
            margin: self.net.margin,
            huber_t: self.net.huber_t,
            mean_normalize: self.net.mean_normalize,
            seed,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            lr: self.train.lr,
            decay_epochs: self.train.decay_epochs.clone(),
            decay_factor: self.train.decay_factor,
            momentum: self.train.momentum,
            ratio: self.train.ratio,
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_yields_defaults() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg.resolution, 56);
        assert_eq!(cfg.net.dim, 270);
        assert_eq!(cfg.train.lr, 1e-3);
        assert_eq!(cfg.train.decay_epochs, vec![150, 250]);
        assert_eq!(cfg.train.ratio, (1, 3));
        assert_eq!(cfg.retrieval.views, 100);
        cfg.validate().unwrap();
        assert_eq!(cfg.net_config(5, 0).pool, 4);
    }

    #[test]
    fn partial_overrides_parse() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{
                "resolution": 28,
                "net": {"hidden": [128, 64]},
                "dataset": {"families": [{"kind": "chair", "count": 3}], "separation": 0.02}
            }"#,
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.resolution, 28);
        assert_eq!(cfg.net.hidden, vec![128, 64]);
        assert_eq!(cfg.net_config(3, 1).pool, 2);
        let ds = cfg.dataset.unwrap();
        assert_eq!(ds.families.len(), 1);
        assert_eq!(ds.separation, 0.02);
    }

    #[test]
    fn bad_pooling_is_rejected() {
        let cfg: RunConfig = serde_json::from_str(r#"{"resolution": 30}"#).unwrap();
        assert!(cfg.validate().is_err());
    }
}
