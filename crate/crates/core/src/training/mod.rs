//! Loss, optimiser, training loop and evaluation metrics.

pub mod adam;
pub mod checkpoint;
pub mod loss;
pub mod metrics;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{read_history, write_history, Checkpoint};
pub use loss::{mse_loss, sse_on_tape};
pub use metrics::{relative_l2_error, RelativeErrors};
pub use train::{evaluate, predict_all, train, train_on, train_with, EvalReport, LrSchedule, TrainConfig};
