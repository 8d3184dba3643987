use std::sync::mpsc::{sync_channel, Receiver};
use std::sync::Arc;
use std::thread::JoinHandle;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, SampleSequence};
use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;
use crate::tensor::Tensor;

/// `(sequence index, first frame)` of every `n`-frame window that stays
/// inside one sequence.
pub fn window_starts(dataset: &Dataset, n: usize) -> Vec<(usize, usize)> {
    dataset
        .sequences
        .iter()
        .enumerate()
        .flat_map(|(s, seq)| (0..(seq.len() + 1).saturating_sub(n)).map(move |i| (s, i)))
        .collect()
}

/// Samples stacked into batch tensors.
#[derive(Clone, Debug)]
pub struct Batch {
    pub samples: Vec<SampleSequence>,
}

impl Batch {
    pub fn new(samples: Vec<SampleSequence>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Data("empty batch".into()))?;
        let (n, k) = (first.len(), first.intrinsics);
        if samples.iter().any(|s| s.len() != n || s.intrinsics != k) {
            return Err(Error::Data(
                "batch mixes window lengths or camera intrinsics".into(),
            ));
        }
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn seq_len(&self) -> usize {
        self.samples[0].len()
    }

    pub fn intrinsics(&self) -> CameraIntrinsics {
        self.samples[0].intrinsics
    }

    fn stack(&self, pick: impl Fn(&SampleSequence) -> Vec<&Tensor>) -> Tensor {
        let parts: Vec<&Tensor> = self.samples.iter().flat_map(pick).collect();
        let per_sample: usize = parts.iter().map(|t| t.shape()[0]).sum::<usize>() / self.len();
        let (h, w) = (parts[0].shape()[1], parts[0].shape()[2]);
        let data = parts
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect();
        Tensor::new([self.len(), per_sample, h, w], data).expect("frames share a size")
    }

    /// Target frames `[B, 3, H, W]`.
    pub fn target(&self) -> Tensor {
        self.stack(|s| vec![s.target()])
    }

    /// The `j`-th non-target frame of every sample, `[B, 3, H, W]`.
    pub fn source(&self, j: usize) -> Tensor {
        self.stack(|s| vec![&s.frames[s.source_frame_index(j)]])
    }

    /// All frames stacked along channels in time order, `[B, 3N, H, W]`.
    pub fn stacked(&self) -> Tensor {
        self.stack(|s| s.frames.iter().collect())
    }
}

/// One epoch of batches; windows shuffled by `shuffle_seed` when given, the
/// trailing partial batch dropped.
pub struct BatchIter<'a> {
    dataset: &'a Dataset,
    order: std::vec::IntoIter<(usize, usize)>,
    n: usize,
    batch_size: usize,
}

pub fn make_batches(
    dataset: &Dataset,
    n: usize,
    batch_size: usize,
    shuffle_seed: Option<u64>,
) -> Result<BatchIter<'_>> {
    let order = epoch_order(dataset, n, batch_size, shuffle_seed)?;
    Ok(BatchIter {
        dataset,
        order: order.into_iter(),
        n,
        batch_size,
    })
}

fn epoch_order(
    dataset: &Dataset,
    n: usize,
    batch_size: usize,
    shuffle_seed: Option<u64>,
) -> Result<Vec<(usize, usize)>> {
    if batch_size == 0 || n < 2 {
        return Err(Error::Config(format!(
            "batch size must be positive and window length at least 2, got {batch_size} and {n}"
        )));
    }
    let mut order = window_starts(dataset, n);
    if order.len() < batch_size {
        return Err(Error::Data(format!(
            "dataset yields {} windows of {n} frames, fewer than one batch of {batch_size}",
            order.len()
        )));
    }
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    order.truncate(order.len() / batch_size * batch_size);
    Ok(order)
}

fn build_batch(dataset: &Dataset, windows: &[(usize, usize)], n: usize) -> Result<Batch> {
    Batch::new(
        windows
            .iter()
            .map(|&(s, i)| dataset.sequences[s].window(i, n))
            .collect::<Result<_>>()?,
    )
}

impl Iterator for BatchIter<'_> {
    type Item = Result<Batch>;

    fn next(&mut self) -> Option<Self::Item> {
        let windows: Vec<_> = self.order.by_ref().take(self.batch_size).collect();
        (!windows.is_empty()).then(|| build_batch(self.dataset, &windows, self.n))
    }
}

/// Background worker producing batches for consecutive epochs into a bounded
/// queue. Epoch `e` is shuffled with `seed + e`, so the stream equals the
/// one built synchronously from [`make_batches`].
pub struct Prefetcher {
    rx: Option<Receiver<Result<Batch>>>,
    worker: Option<JoinHandle<()>>,
}

impl Prefetcher {
    pub fn spawn(dataset: Arc<Dataset>, n: usize, batch_size: usize, seed: u64) -> Result<Self> {
        epoch_order(&dataset, n, batch_size, Some(seed))?;
        // two batches worth of samples in flight
        let (tx, rx) = sync_channel(2);
        let worker = std::thread::spawn(move || {
            for epoch in 0u64.. {
                let order =
                    match epoch_order(&dataset, n, batch_size, Some(seed.wrapping_add(epoch))) {
                        Ok(o) => o,
                        Err(e) => {
                            let _ = tx.send(Err(e));
                            return;
                        }
                    };
                for windows in order.chunks(batch_size) {
                    if tx.send(build_batch(&dataset, windows, n)).is_err() {
                        return;
                    }
                }
            }
        });
        Ok(Self {
            rx: Some(rx),
            worker: Some(worker),
        })
    }

    pub fn next_batch(&mut self) -> Result<Batch> {
        self.rx
            .as_ref()
            .and_then(|rx| rx.recv().ok())
            .unwrap_or_else(|| Err(Error::Data("batch loader stopped".into())))
    }
}

impl Drop for Prefetcher {
    fn drop(&mut self) {
        // closing the queue makes the worker's next send fail
        self.rx.take();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}
