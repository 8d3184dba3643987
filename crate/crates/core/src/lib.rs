//! Unsupervised monocular visual odometry with an adversarially trained
//! depth generator.
//!
//! An encoder maps the target frame to a latent code, a generator turns the
//! code into a depth map, and a recurrent pose regressor predicts the motion
//! between the target and its neighbours. The neighbours are warped into the
//! target view through depth and pose, and a discriminator judges the
//! reconstructions against the real frame.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod gradcheck;
pub mod networks;
pub mod tensor;
pub mod training;
pub mod view_synthesis;

pub use error::{Error, ErrorKind, Result};
pub use tensor::{Graph, Tensor, Var};

/// Sizes the global worker pool used by the convolution kernels. Results do
/// not depend on the thread count. Must run before the first parallel op.
pub fn init_thread_pool(threads: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}
