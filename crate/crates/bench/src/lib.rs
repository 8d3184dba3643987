//! Deterministic inputs shared by the benchmarks.

use ganvo_core::data::{generate_synthetic_dataset, make_batches, Batch, SceneConfig};
use ganvo_core::geometry::{CameraIntrinsics, PoseVec6};
use ganvo_core::Tensor;

/// Smooth pseudo-random values in `[-1, 1]`.
pub fn wave(shape: &[usize], phase: f64) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |i| (i as f64 * 0.618 + phase).sin())
}

/// Input and weight of a 3x3 convolution with `c_in -> c_out` channels.
pub fn conv_inputs(
    batch: usize,
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
) -> (Tensor, Tensor) {
    (
        wave(&[batch, c_in, h, w], 0.1),
        wave(&[c_out, c_in, 3, 3], 0.7).map(|v| 0.1 * v),
    )
}

pub struct WarpInputs {
    pub source: Tensor,
    pub depth: Tensor,
    pub pose: Tensor,
    pub k: CameraIntrinsics,
}

/// A source view, a slanted depth map and a small motion at `h x w`.
pub fn warp_inputs(batch: usize, h: usize, w: usize) -> WarpInputs {
    let k = CameraIntrinsics::new(
        w as f64 / 2.0,
        w as f64 / 2.0,
        w as f64 / 2.0,
        h as f64 / 2.0,
        w,
        h,
    )
    .expect("valid intrinsics");
    let depth = Tensor::from_fn(vec![batch, 1, h, w], |i| 2.0 + (i % w) as f64 / w as f64);
    let pose: Vec<f64> = (0..batch)
        .flat_map(|_| PoseVec6::new(0.02, -0.01, 0.05, 0.005, 0.01, -0.003).to_array())
        .collect();
    WarpInputs {
        source: wave(&[batch, 3, h, w], 0.3).map(|v| 0.5 * v + 0.5),
        depth,
        pose: Tensor::new(vec![batch, 6], pose).expect("pose shape"),
        k,
    }
}

/// First toy training batch of a synthetic dataset.
pub fn toy_batch(seq_len: usize, batch: usize) -> Batch {
    let ds = generate_synthetic_dataset(0, &SceneConfig::toy(), 1).expect("toy scene");
    make_batches(&ds, seq_len, batch, None)
        .expect("enough windows")
        .next()
        .expect("one batch")
        .expect("batch builds")
}
