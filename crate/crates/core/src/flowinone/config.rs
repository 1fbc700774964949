use serde::{Deserialize, Serialize};

use super::FlowError;

/// Architecture and loss hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub image_side: u32,
    /// Patch side of the frozen latent codec; fixes the token count.
    pub patch: u32,
    /// Patch side of the learned visual encoder.
    pub enc_patch: u32,
    pub enc_dim: usize,
    pub width: usize,
    pub layers: usize,
    pub heads: usize,
    pub time_dim: usize,
    pub sigma_min: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub p_drop: f64,
    pub cfg_scale: f64,
    pub sample_steps: usize,
    pub tau_init: f64,
    pub learn_tau: bool,
    pub codec_seed: u64,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            image_side: 64,
            patch: 8,
            enc_patch: 8,
            enc_dim: 96,
            width: 64,
            layers: 2,
            heads: 4,
            time_dim: 128,
            sigma_min: 1e-3,
            beta1: 1e-2,
            beta2: 1.0,
            p_drop: 0.1,
            cfg_scale: 7.0,
            sample_steps: 50,
            tau_init: 0.07,
            learn_tau: true,
            codec_seed: 0,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    /// Gradient-check scale: four latent tokens of width eight, one layer.
    pub fn miniature() -> Self {
        Self { image_side: 16, patch: 8, enc_patch: 8, enc_dim: 6, width: 8, layers: 1, heads: 2, time_dim: 8, ..Self::default() }
    }

    /// Laptop-scale setting for the colour-word task.
    pub fn toy() -> Self {
        Self { enc_patch: 16, enc_dim: 32, width: 32, layers: 1, heads: 2, time_dim: 32, ..Self::default() }
    }

    /// Token count of the latent grid.
    pub fn tokens(&self) -> usize {
        let g = (self.image_side / self.patch) as usize;
        g * g
    }

    pub fn enc_tokens(&self) -> usize {
        let g = (self.image_side / self.enc_patch) as usize;
        g * g
    }

    /// Values per codec patch (RGB).
    pub fn patch_dim(&self) -> usize {
        3 * (self.patch * self.patch) as usize
    }

    pub fn enc_patch_dim(&self) -> usize {
        3 * (self.enc_patch * self.enc_patch) as usize
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        let bad = |m: String| Err(FlowError::Config(m));
        if self.patch == 0 || self.image_side == 0 || self.image_side % self.patch != 0 {
            return bad(format!("patch {} must divide image side {}", self.patch, self.image_side));
        }
        if self.enc_patch == 0 || self.image_side % self.enc_patch != 0 {
            return bad(format!("encoder patch {} must divide image side {}", self.enc_patch, self.image_side));
        }
        if self.width == 0 || self.heads == 0 || self.width % self.heads != 0 {
            return bad(format!("width {} must be a positive multiple of heads {}", self.width, self.heads));
        }
        if self.enc_dim == 0 || self.layers == 0 || self.time_dim == 0 || self.time_dim % 2 != 0 {
            return bad("enc_dim and layers must be positive, time_dim positive and even".into());
        }
        if !(0.0..1.0).contains(&self.sigma_min) {
            return bad(format!("sigma_min {} outside [0, 1)", self.sigma_min));
        }
        if self.beta1 < 0.0 || self.beta2 < 0.0 || !(0.0..=1.0).contains(&self.p_drop) {
            return bad("loss weights must be non-negative and p_drop in [0, 1]".into());
        }
        if self.tau_init <= 0.0 || self.sample_steps == 0 {
            return bad("tau_init and sample_steps must be positive".into());
        }
        Ok(())
    }
}

/// Optimisation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub warmup: usize,
    pub min_lr: f64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Write a checkpoint every this many steps; 0 disables periodic saves.
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 64,
            lr: 1e-4,
            warmup: 100,
            min_lr: 0.0,
            weight_decay: 0.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            checkpoint_every: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Companion of [`ModelConfig::toy`].
    pub fn toy() -> Self {
        Self { batch_size: 8, lr: 2e-3, warmup: 50, min_lr: 1e-4, ..Self::default() }
    }

    /// Linear warmup from 0 to `lr` over `warmup` steps, then cosine decay to
    /// `min_lr` at `steps`.
    pub fn lr_at(&self, step: usize) -> f64 {
        if step < self.warmup {
            return self.lr * step as f64 / self.warmup as f64;
        }
        let span = self.steps.saturating_sub(self.warmup).max(1) as f64;
        let p = ((step - self.warmup) as f64 / span).min(1.0);
        self.min_lr + (self.lr - self.min_lr) * 0.5 * (1.0 + (std::f64::consts::PI * p).cos())
    }
}
