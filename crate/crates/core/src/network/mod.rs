//! Dual-stream central-difference regressor: autodiff tape, model
//! construction, losses, optimizer, and checkpoint storage.

mod checkpoint;
mod model;
mod optim;
mod tape;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointConfig};
pub use model::{
    contrastive_depth_loss, loss_and_grads, mse_loss, total_loss, ForwardPass, LossConfig, Model,
    ModelConfig,
};
pub use optim::{scheduled_lr, Adam};
pub use tape::{cd_forward, cdc_forward, NodeId, Tape, CD_DIRECTIONS};
