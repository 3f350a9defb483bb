use serde::{Deserialize, Serialize};

use super::GanError;

/// Hyperparameters of the adversarial model and its training loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanConfig {
    /// Square image side in pixels; a power of two, at least 8.
    pub image_size: usize,
    pub channels: usize,
    /// Width of the latent `z` and style vector `w`.
    pub style_dim: usize,
    pub mapping_layers: usize,
    /// Width of the critic's penultimate layer, i.e. the embedding size.
    pub feature_dim: usize,
    /// Feature maps at the 4x4 and 8x8 levels; halved per doubling above that.
    pub base_channels: usize,
    pub learning_rate: f64,
    pub adam_betas: [f64; 2],
    pub batch_size: usize,
    pub r1_gamma: f64,
    pub ppl_weight: f64,
    pub ppl_decay: f64,
    pub lipschitz_l1_weight: f64,
    pub ema_beta: f64,
    pub lazy_reg_interval: usize,
    pub leaky_slope: f64,
    /// Number of training steps `train` runs.
    pub steps: u64,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            image_size: 16,
            channels: 5,
            style_dim: 64,
            mapping_layers: 3,
            feature_dim: 64,
            base_channels: 32,
            learning_rate: 1e-4,
            adam_betas: [0.0, 0.99],
            batch_size: 8,
            r1_gamma: 1.0,
            ppl_weight: 2.0,
            ppl_decay: 0.01,
            lipschitz_l1_weight: 0.1,
            ema_beta: 0.999,
            lazy_reg_interval: 4,
            leaky_slope: 0.2,
            steps: 2000,
            seed: 0,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<(), GanError> {
        let bad = |msg: String| Err(GanError::Config(msg));
        if self.image_size < 8 || !self.image_size.is_power_of_two() {
            return bad(format!("image_size must be a power of two >= 8, got {}", self.image_size));
        }
        if self.feature_dim < 2 {
            return bad(format!("feature_dim must be >= 2, got {}", self.feature_dim));
        }
        for (name, v) in [
            ("channels", self.channels),
            ("style_dim", self.style_dim),
            ("mapping_layers", self.mapping_layers),
            ("base_channels", self.base_channels),
            ("batch_size", self.batch_size),
            ("lazy_reg_interval", self.lazy_reg_interval),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if self.adam_betas.iter().any(|b| !(0.0..1.0).contains(b)) {
            return bad(format!("adam_betas must lie in [0, 1), got {:?}", self.adam_betas));
        }
        for (name, v) in [
            ("r1_gamma", self.r1_gamma),
            ("ppl_weight", self.ppl_weight),
            ("lipschitz_l1_weight", self.lipschitz_l1_weight),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if !(self.ppl_decay > 0.0 && self.ppl_decay < 1.0) {
            return bad(format!("ppl_decay must lie in (0, 1), got {}", self.ppl_decay));
        }
        if !(0.0..1.0).contains(&self.ema_beta) {
            return bad(format!("ema_beta must lie in [0, 1), got {}", self.ema_beta));
        }
        if !(0.0..1.0).contains(&self.leaky_slope) {
            return bad(format!("leaky_slope must lie in [0, 1), got {}", self.leaky_slope));
        }
        Ok(())
    }

    /// Feature maps used at spatial resolution `res`.
    pub fn channels_at(&self, res: usize) -> usize {
        let mut c = self.base_channels;
        let mut r = 8;
        while r < res {
            c = (c / 2).max(8.min(self.base_channels));
            r *= 2;
        }
        c
    }

    /// Resolutions of the synthesis network, from 4 up to `image_size`.
    pub fn resolutions(&self) -> Vec<usize> {
        let mut out = vec![4];
        while *out.last().unwrap() < self.image_size {
            out.push(out.last().unwrap() * 2);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        GanConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_sizes() {
        let mut c = GanConfig { image_size: 12, ..GanConfig::default() };
        assert!(c.validate().is_err());
        c.image_size = 4;
        assert!(c.validate().is_err());
        let c = GanConfig { feature_dim: 1, ..GanConfig::default() };
        assert!(c.validate().is_err());
        let c = GanConfig { adam_betas: [0.0, 1.0], ..GanConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn channel_schedule() {
        let c = GanConfig::default();
        assert_eq!(c.resolutions(), vec![4, 8, 16]);
        assert_eq!(c.channels_at(4), 32);
        assert_eq!(c.channels_at(8), 32);
        assert_eq!(c.channels_at(16), 16);
        assert_eq!(c.channels_at(32), 8);
    }

    #[test]
    fn json_rejects_unknown_keys() {
        let err = serde_json::from_str::<GanConfig>(r#"{"seed": 1, "bogus": 2}"#);
        assert!(err.is_err());
        let ok: GanConfig = serde_json::from_str(r#"{"seed": 7}"#).unwrap();
        assert_eq!(ok.seed, 7);
        assert_eq!(ok.image_size, 16);
    }
}
