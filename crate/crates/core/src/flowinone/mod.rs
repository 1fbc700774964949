//! The toy instruction-canvas-to-image flow model.
//!
//! A canvas is encoded, compressed to the latent grid and mapped to a
//! Gaussian posterior whose sample `z0` starts a straight probability path
//! towards the frozen codec latent `z1` of the target. A stack of dual-path
//! blocks predicts the velocity along that path; editing examples also see
//! the codec latent of the source canvas through gated cross-attention.

mod codec;
mod config;
mod flow;
mod model;
mod pipeline;
mod sampler;
mod train;

use thiserror::Error;

use crate::dataset::DatasetError;
use crate::numcore::NumError;
use crate::render::RenderError;

pub use codec::{patchify, unpatchify, Codec};
pub use config::{ModelConfig, TrainConfig};
pub use flow::{
    clip_contrastive_loss, clip_contrastive_value, fm_loss, fm_loss_value, interpolate, kld_loss, kld_loss_value,
    reparameterize, sample_z0, standard_normal, target_velocity, LatentState, PosteriorParams,
};
pub use model::{init_params, is_edit_branch, time_features, velocity_excised, Net};
pub use pipeline::{truncate_tokens, Example, ExampleNoise, FlowInOne, LossComponents};
pub use sampler::{euler_integrate, guided_velocity, SampleOptions};
pub use train::{
    example_rng, read_loss_csv, train, BatchObjective, LossRow, StepOutcome, TrainOutcome, Trainer, LOSS_CSV_HEADER,
};

#[derive(Debug, Error)]
pub enum FlowError {
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("non-finite loss at step {step}: fm={fm} kld={kld} clip={clip}")]
    NonFinite { step: usize, fm: f64, kld: f64, clip: f64 },
    #[error("latent {0} has zero norm")]
    DegenerateLatent(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
