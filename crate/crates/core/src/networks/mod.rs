//! Encoder, generator, discriminator and pose regressor.

mod arch;
mod checkpoint;
mod layers;
mod models;

pub use arch::ArchConfig;
pub use checkpoint::{file_sha256, from_bytes, load_checkpoint, save_checkpoint, to_bytes};
pub use layers::{BnUpdates, Mode, Net, RunningStats};
pub use models::{Discriminator, Encoder, GanVo, Generator, PoseRegressor};
