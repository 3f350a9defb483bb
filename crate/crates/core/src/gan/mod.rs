//! Slimmed style-based adversarial model: generator, critic, regularizers,
//! training loop and critic feature extraction.

mod adam;
pub mod checkpoint;
mod config;
mod ema;
mod losses;
mod network;
mod params;
pub mod regcheck;
mod train;

use std::path::PathBuf;

pub use adam::{adam_step, ADAM_EPS};
pub use config::GanConfig;
pub use ema::ema_update;
pub use losses::{
    lipschitz_l1_penalty, loss_critic, loss_generator, ppl_noise, ppl_penalty, r1_penalty, PplTerm,
};
pub use network::{critic_features, critic_forward, critic_head, generate, mapping_forward};
pub use params::{init_critic, init_generator, Bound, ParamSet};
pub use train::{extract_features, train_until, Dataset, ModelState, StepMetrics};

use crate::autograd::AutogradError;

#[derive(Debug, thiserror::Error)]
pub enum GanError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("missing parameter {0}")]
    MissingParam(String),
    #[error(transparent)]
    Autograd(#[from] AutogradError),
    #[error("non-finite {term} at step {step}")]
    NonFinite { step: u64, term: &'static str },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("dataset: {0}")]
    Data(String),
}

/// Trains from `state.step` up to `state.config.steps` and writes the final
/// checkpoint to `out`.
pub fn train(
    state: &mut ModelState,
    data: &Dataset,
    out: &std::path::Path,
    on_step: impl FnMut(&StepMetrics),
) -> Result<(), GanError> {
    train_until(state, data, state.config.steps, on_step)?;
    checkpoint::save(out, state)
}
