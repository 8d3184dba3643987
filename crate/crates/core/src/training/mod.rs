//! Adversarial training: the discriminator and the reconstruction models
//! take alternating Adam steps on every batch.

mod config;
mod losses;
mod step;
mod trainer;

pub use config::{Beta, SyntheticData, TrainConfig};
pub use losses::{
    estimate_beta, gan_losses, generator_adv_loss, total_loss, COLLAPSE_THRESHOLD, LOG_EPS,
};
pub use step::{train_step, LossReport, Optimizers};
pub use trainer::{
    periodic_checkpoint_name, BetaSchedule, LossLog, Trainer, CHECKPOINT_DIR, FINAL_CHECKPOINT,
    LOSS_CSV,
};
