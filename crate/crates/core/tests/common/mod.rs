#![allow(dead_code)]

use ganvo_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(lo..hi))
}

/// Central difference of `f` at `x` along coordinate `i`.
pub fn central_diff(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[i] += h;
    xm[i] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}

/// Max abs deviation over the max magnitude of the numeric gradient.
pub fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max);
    let scale = numeric.iter().map(|n| n.abs()).fold(1e-8, f64::max);
    diff / scale
}

use ganvo_core::data::FrameSequence;
use ganvo_core::geometry::PoseVec6;
use ganvo_core::tensor::{Adam, AdamConfig, ParamStore};
use ganvo_core::view_synthesis::photometric_loss;
use ganvo_core::Graph;

/// Target, source, GT target depth and GT pose for frame pair `(t, s)`.
pub struct PosePair {
    pub target: Tensor,
    pub source: Tensor,
    pub depth: Tensor,
    pub pose: PoseVec6,
    pub k: ganvo_core::geometry::CameraIntrinsics,
}

pub fn pose_pair(seq: &FrameSequence, t: usize, s: usize) -> PosePair {
    let (h, w) = (seq.intrinsics.height, seq.intrinsics.width);
    PosePair {
        target: seq.frame(t).unwrap().reshape([1, 3, h, w]).unwrap(),
        source: seq.frame(s).unwrap().reshape([1, 3, h, w]).unwrap(),
        depth: seq
            .depth(t)
            .unwrap()
            .unwrap()
            .to_tensor()
            .reshape([1, 1, h, w])
            .unwrap(),
        pose: PoseVec6::from_matrix(&seq.relative_transform(t, s).unwrap()),
        k: seq.intrinsics,
    }
}

impl PosePair {
    /// Photometric loss at `pose` and its gradient with respect to the pose.
    pub fn loss_and_grad(&self, pose: [f64; 6]) -> (f64, [f64; 6]) {
        let mut g = Graph::new();
        let t = g.constant(self.target.clone());
        let s = g.constant(self.source.clone());
        let d = g.constant(self.depth.clone());
        let p = g.leaf(Tensor::new([1, 6], pose.to_vec()).unwrap());
        let warp = g.inverse_warp(s, d, p, &self.k).unwrap();
        let loss = photometric_loss(&mut g, t, &[warp], true).unwrap();
        g.backward(loss).unwrap();
        let grad: [f64; 6] = g.grad(p).unwrap().data().try_into().unwrap();
        (g.value(loss).item().unwrap(), grad)
    }

    pub fn loss(&self, pose: [f64; 6]) -> f64 {
        self.loss_and_grad(pose).0
    }

    /// Adam on the six pose parameters alone, stopping after `iters`.
    pub fn descend(&self, start: [f64; 6], iters: usize, lr: f64) -> [f64; 6] {
        let mut store = ParamStore::new();
        let id = store.add("pose", Tensor::new([1, 6], start.to_vec()).unwrap());
        let mut adam = Adam::new(
            AdamConfig {
                learning_rate: lr,
                ..AdamConfig::default()
            },
            &store,
        );
        for _ in 0..iters {
            let mut g = Graph::new();
            let bound = store.bind(&mut g);
            let t = g.constant(self.target.clone());
            let s = g.constant(self.source.clone());
            let d = g.constant(self.depth.clone());
            let warp = g.inverse_warp(s, d, bound[id], &self.k).unwrap();
            let loss = photometric_loss(&mut g, t, &[warp], true).unwrap();
            g.backward(loss).unwrap();
            store.collect_grads(&g, &bound);
            adam.step(&mut store).unwrap();
        }
        store.get(id).data().try_into().unwrap()
    }
}

use ganvo_core::evaluation::Trajectory;
use ganvo_core::geometry::{DepthMap, Se3};

pub fn random_pose_vec(rng: &mut impl Rng, t: f64, r: f64) -> PoseVec6 {
    PoseVec6::new(
        rng.random_range(-t..t),
        rng.random_range(-t..t),
        rng.random_range(-t..t),
        rng.random_range(-r..r),
        rng.random_range(-r..r),
        rng.random_range(-r..r),
    )
}

/// A random walk of `len` absolute poses, not anchored at identity.
pub fn random_trajectory(rng: &mut impl Rng, len: usize) -> Trajectory {
    let mut cur = random_pose_vec(rng, 5.0, 1.0).to_matrix();
    let mut poses = vec![cur];
    for _ in 1..len {
        cur = cur.compose(&random_pose_vec(rng, 1.0, 0.2).to_matrix());
        poses.push(cur);
    }
    Trajectory::from_poses(poses).unwrap()
}

/// Translations of `traj` in the frame of its first pose, from raw matrices.
fn anchored_translations(traj: &Trajectory) -> Vec<[f64; 3]> {
    let m0 = traj.poses[0].matrix();
    traj.poses
        .iter()
        .map(|p| {
            let m = p.matrix();
            let d: Vec<f64> = (0..3).map(|i| m[i][3] - m0[i][3]).collect();
            // R0^T * d
            [0, 1, 2].map(|j| (0..3).map(|i| m0[i][j] * d[i]).sum())
        })
        .collect()
}

/// ATE by scanning the scale on successively finer grids.
pub fn ate_scan_oracle(pred: &Trajectory, gt: &Trajectory) -> f64 {
    let (tp, tg) = (anchored_translations(pred), anchored_translations(gt));
    let rms = |s: f64| {
        let sum: f64 = tp
            .iter()
            .zip(&tg)
            .map(|(p, g)| (0..3).map(|i| (s * p[i] - g[i]).powi(2)).sum::<f64>())
            .sum();
        (sum / tp.len() as f64).sqrt()
    };
    let (mut lo, mut hi) = (-100.0, 100.0);
    let mut best = 0.0;
    for _ in 0..16 {
        let step = (hi - lo) / 200.0;
        best = (0..=200)
            .map(|i| lo + step * i as f64)
            .min_by(|a, b| rms(*a).total_cmp(&rms(*b)))
            .unwrap();
        lo = best - 2.0 * step;
        hi = best + 2.0 * step;
    }
    rms(best)
}

/// Depth metrics written out directly: `[abs_rel, sq_rel, rmse, rmse_log, d1, d2, d3]`.
pub fn depth_metrics_oracle(pred: &DepthMap, gt: &DepthMap, cap: f64) -> [f64; 7] {
    let idx: Vec<usize> = (0..gt.values().len())
        .filter(|&i| {
            gt.valid()[i] && pred.valid()[i] && gt.values()[i] > 1e-3 && gt.values()[i] < cap
        })
        .collect();
    let med = |mut v: Vec<f64>| {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            (v[n / 2 - 1] + v[n / 2]) / 2.0
        }
    };
    let s = med(idx.iter().map(|&i| gt.values()[i]).collect())
        / med(idx.iter().map(|&i| pred.values()[i]).collect());
    let n = idx.len() as f64;
    let p: Vec<f64> = idx
        .iter()
        .map(|&i| (pred.values()[i] * s).clamp(1e-3, cap))
        .collect();
    let g: Vec<f64> = idx.iter().map(|&i| gt.values()[i]).collect();
    let mean =
        |f: &dyn Fn(f64, f64) -> f64| p.iter().zip(&g).map(|(a, b)| f(*a, *b)).sum::<f64>() / n;
    let delta = |k: i32| mean(&|a, b| f64::from(u8::from((a / b).max(b / a) < 1.25f64.powi(k))));
    [
        mean(&|a, b| (a - b).abs() / b),
        mean(&|a, b| (a - b) * (a - b) / b),
        mean(&|a, b| (a - b) * (a - b)).sqrt(),
        mean(&|a, b| (a.ln() - b.ln()).powi(2)).sqrt(),
        delta(1),
        delta(2),
        delta(3),
    ]
}

pub fn random_depth(rng: &mut impl Rng, h: usize, w: usize, lo: f64, hi: f64) -> DepthMap {
    DepthMap::new(h, w, (0..h * w).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

pub fn se3_close(a: &Se3, b: &Se3, tol: f64) -> bool {
    a.max_abs_diff(b) < tol
}
