use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::{FrameConfig, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::metrics::Aggregation;
use crate::model::ModelConfig;
use crate::tensor::AdamState;

pub const SEED_ENV: &str = "MOTAS_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub model: ModelConfig,
    pub augmentation_factor: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub threshold: f64,
    pub aggregation: Aggregation,
    /// Fraction of training subjects held out to pick the best epoch; 0
    /// trains on everything for the full horizon.
    pub val_fraction: f64,
    pub sample_rate: u32,
    pub segment_s: f64,
    pub frames: FrameConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelConfig::default(),
            augmentation_factor: 1.0,
            lr: AdamState::DEFAULT_LR,
            batch_size: 32,
            epochs: 60,
            seeds: vec![1, 2, 3, 4, 5],
            threshold: 0.5,
            aggregation: Aggregation::MeanProb,
            val_fraction: 0.0,
            sample_rate: DEFAULT_SAMPLE_RATE,
            segment_s: 5.0,
            frames: FrameConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let bad = |m: String| Err(Error::Validation(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be finite and >= 0, got {}", self.lr));
        }
        if !(self.augmentation_factor >= 1.0 && self.augmentation_factor.is_finite()) {
            return bad(format!("augmentation_factor must be >= 1, got {}", self.augmentation_factor));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("threshold must be in [0, 1], got {}", self.threshold));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!("val_fraction must be in [0, 1), got {}", self.val_fraction));
        }
        if self.sample_rate == 0 || !(self.segment_s > 0.0) {
            return bad("sample_rate and segment_s must be positive".into());
        }
        self.frames.resolve(self.sample_rate)?;
        Ok(())
    }

    /// Read a JSON config. Missing keys take their defaults.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        Ok(cfg)
    }

    /// Replace the seed list with `MOTAS_SEED` when it is set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            let seed = v
                .trim()
                .parse::<u64>()
                .map_err(|_| Error::InvalidArgument(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
            self.seeds = vec![seed];
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_partial_json() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"epochs": 3, "moe_enabled": false, "dims": {"d_t": 768}}"#).unwrap();
        assert_eq!(c.epochs, 3);
        assert!(!c.model.moe_enabled);
        assert_eq!(c.model.dims.d_t, 768);
        assert_eq!(c.model.dims.d_w, 768);
        assert_eq!(c.batch_size, 32);
        assert_eq!(c.seeds, vec![1, 2, 3, 4, 5]);
        assert_eq!(c.lr, 0.0067);
        c.validate().unwrap();
    }

    #[test]
    fn round_trip_json() {
        let c = ExperimentConfig::default();
        let j = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&j).unwrap(), c);
    }

    #[test]
    fn validation() {
        let check = |f: fn(&mut ExperimentConfig)| {
            let mut c = ExperimentConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(check(|c| c.batch_size = 0));
        assert!(check(|c| c.seeds.clear()));
        assert!(check(|c| c.model.dims.d_s = 0));
        assert!(check(|c| c.val_fraction = 1.0));
        assert!(check(|c| c.augmentation_factor = 0.5));
        assert!(check(|c| c.model.dropout_p = 1.0));
    }
}
