use crate::data::FrameSequence;
use crate::error::{Error, Result};
use crate::geometry::{PoseVec6, Se3};
use crate::networks::GanVo;

/// Absolute camera poses (world from camera) with their frame indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub frames: Vec<usize>,
    pub poses: Vec<Se3>,
}

impl Trajectory {
    pub fn new(frames: Vec<usize>, poses: Vec<Se3>) -> Result<Self> {
        if frames.len() != poses.len() {
            return Err(Error::Data(format!(
                "{} frame indices for {} poses",
                frames.len(),
                poses.len()
            )));
        }
        if frames.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Data(
                "trajectory frame indices must increase strictly".into(),
            ));
        }
        for p in &poses {
            p.validate(1e-6)?;
        }
        Ok(Self { frames, poses })
    }

    /// Poses numbered `0..n`.
    pub fn from_poses(poses: Vec<Se3>) -> Result<Self> {
        Self::new((0..poses.len()).collect(), poses)
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// The same motion expressed relative to the first pose.
    pub fn anchored(&self) -> Self {
        let Some(first) = self.poses.first() else {
            return self.clone();
        };
        let inv = first.invert();
        Self {
            frames: self.frames.clone(),
            poses: self.poses.iter().map(|p| inv.compose(p)).collect(),
        }
    }

    pub fn translations(&self) -> Vec<[f64; 3]> {
        self.poses.iter().map(Se3::translation).collect()
    }

    /// Poses `start..start + len` as their own trajectory.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.len() {
            return Err(Error::Data(format!(
                "slice [{start}, {}) of a {}-pose trajectory",
                start + len,
                self.len()
            )));
        }
        Ok(Self {
            frames: self.frames[start..start + len].to_vec(),
            poses: self.poses[start..start + len].to_vec(),
        })
    }
}

/// How a relative pose `rel_k` links absolute poses `k - 1` and `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Accumulation {
    /// `T_k = T_{k-1} * M(rel_k)`: `rel_k` maps frame `k` into frame `k - 1`.
    Compose,
    /// `T_k = T_{k-1} * M(rel_k)^-1`: `rel_k` maps frame `k - 1` into frame
    /// `k`, as the pose network does with `k - 1` as target.
    ComposeInverse,
}

/// Chains relative poses into an absolute trajectory starting at identity.
pub fn accumulate_trajectory(
    relative: &[PoseVec6],
    convention: Accumulation,
) -> Result<Trajectory> {
    let mut poses = Vec::with_capacity(relative.len() + 1);
    let mut current = Se3::identity();
    poses.push(current);
    for (k, rel) in relative.iter().enumerate() {
        if !rel.is_finite() {
            return Err(Error::Numeric(format!("relative pose {k} is not finite")));
        }
        let m = rel.to_matrix();
        let step = match convention {
            Accumulation::Compose => m,
            Accumulation::ComposeInverse => m.invert(),
        };
        current = current.compose(&step);
        poses.push(current);
    }
    Trajectory::from_poses(poses)
}

/// Ground-truth trajectory of a sequence.
pub fn gt_trajectory(seq: &FrameSequence) -> Result<Trajectory> {
    let poses = seq
        .poses
        .clone()
        .ok_or_else(|| Error::Data(format!("sequence {} has no ground-truth poses", seq.id)))?;
    Trajectory::from_poses(poses)
}

/// Frame length of the windows scored by ATE.
pub const ATE_WINDOW: usize = 5;

/// Camera poses of `ATE_WINDOW` consecutive frames starting at `start`,
/// predicted by `model` and expressed relative to the first frame.
///
/// A model whose window length equals `ATE_WINDOW` predicts the window
/// directly from its target. Otherwise each consecutive pair is taken from
/// the model window whose target is one of the two frames.
pub fn predicted_windows(model: &GanVo, seq: &FrameSequence) -> Result<Vec<Trajectory>> {
    let n = model.arch.seq_len;
    if seq.len() < ATE_WINDOW.max(n) {
        return Err(Error::Data(format!(
            "sequence {} has {} frames, fewer than a {}-frame window",
            seq.id,
            seq.len(),
            ATE_WINDOW.max(n)
        )));
    }
    if n == ATE_WINDOW {
        return (0..=seq.len() - ATE_WINDOW)
            .map(|start| {
                let sample = seq.window(start, n)?;
                let stacked = crate::data::Batch::new(vec![sample])?.stacked();
                let rel = model.predict_poses(&stacked)?.remove(0);
                window_from_target_poses(start, n, &rel)
            })
            .collect();
    }
    let chained = predicted_trajectory(model, seq)?;
    (0..=seq.len() - ATE_WINDOW)
        .map(|start| Ok(chained.slice(start, ATE_WINDOW)?.anchored()))
        .collect()
}

/// Whole-sequence trajectory chained from the predicted motion between
/// consecutive frames.
pub fn predicted_trajectory(model: &GanVo, seq: &FrameSequence) -> Result<Trajectory> {
    if seq.len() < model.arch.seq_len {
        return Err(Error::Data(format!(
            "sequence {} has {} frames, fewer than a {}-frame window",
            seq.id,
            seq.len(),
            model.arch.seq_len
        )));
    }
    accumulate_trajectory(
        &consecutive_steps(model, seq)?,
        Accumulation::ComposeInverse,
    )
}

/// Window trajectory from target-to-source poses of one `n`-frame sample.
pub fn window_from_target_poses(start: usize, n: usize, rel: &[PoseVec6]) -> Result<Trajectory> {
    if rel.len() != n - 1 {
        return Err(Error::Shape(format!(
            "{} poses for a {n}-frame window",
            rel.len()
        )));
    }
    let c = (n - 1) / 2;
    let mut poses = Vec::with_capacity(n);
    let mut src = rel.iter();
    for i in 0..n {
        poses.push(if i == c {
            Se3::identity()
        } else {
            src.next().expect("n - 1 poses").to_matrix().invert()
        });
    }
    Ok(Trajectory::new((start..start + n).collect(), poses)?.anchored())
}

/// `T_{k -> k+1}` for every consecutive frame pair of `seq`, each taken
/// from the model window centred as close to the pair as possible.
fn consecutive_steps(model: &GanVo, seq: &FrameSequence) -> Result<Vec<PoseVec6>> {
    let n = model.arch.seq_len;
    let c = (n - 1) / 2;
    let last_start = seq.len() - n;
    let mut cache: Vec<Option<Vec<PoseVec6>>> = vec![None; last_start + 1];
    let mut steps = Vec::with_capacity(seq.len() - 1);
    for k in 0..seq.len() - 1 {
        let start = k.saturating_sub(c).min(last_start);
        if cache[start].is_none() {
            let stacked = crate::data::Batch::new(vec![seq.window(start, n)?])?.stacked();
            cache[start] = Some(model.predict_poses(&stacked)?.remove(0));
        }
        let rel = cache[start].as_ref().expect("filled");
        // T_{t -> f} for a frame f of this window
        let to_frame = |f: usize| {
            let pos = f - start;
            match pos.cmp(&c) {
                std::cmp::Ordering::Equal => Se3::identity(),
                std::cmp::Ordering::Less => rel[pos].to_matrix(),
                std::cmp::Ordering::Greater => rel[pos - 1].to_matrix(),
            }
        };
        let step = to_frame(k + 1).compose(&to_frame(k).invert());
        steps.push(PoseVec6::from_matrix(&step));
    }
    Ok(steps)
}
