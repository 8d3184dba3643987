//! Frame sequences from KITTI-layout directories or the synthetic renderer,
//! and the sliding-window batches the trainer consumes.

mod batch;
pub mod image_io;
mod kitti;
mod synthetic;

use std::path::PathBuf;

pub use batch::{make_batches, window_starts, Batch, BatchIter, Prefetcher};
pub use kitti::{
    load_kitti_sequence, materialize, parse_pose_file, read_pose_file, write_pose_file,
    DatasetManifest,
};
pub use synthetic::{
    generate_synthetic_dataset, generate_synthetic_scene, Layout, SceneConfig, Texture,
};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, DepthMap, PoseVec6, Se3};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
enum Frames {
    Memory(Vec<Tensor>),
    Files {
        paths: Vec<PathBuf>,
        width: usize,
        height: usize,
    },
}

#[derive(Clone, Debug)]
enum Depths {
    Memory(Vec<DepthMap>),
    Files(Vec<PathBuf>),
}

/// Consecutive frames of one camera with optional ground truth. Frames
/// stored as files are decoded on access.
#[derive(Clone, Debug)]
pub struct FrameSequence {
    pub id: String,
    pub intrinsics: CameraIntrinsics,
    frames: Frames,
    /// Absolute world-from-camera poses, one per frame.
    pub poses: Option<Vec<Se3>>,
    depths: Option<Depths>,
}

impl FrameSequence {
    pub fn in_memory(
        id: impl Into<String>,
        intrinsics: CameraIntrinsics,
        frames: Vec<Tensor>,
        poses: Option<Vec<Se3>>,
        depths: Option<Vec<DepthMap>>,
    ) -> Result<Self> {
        let (h, w) = (intrinsics.height, intrinsics.width);
        if let Some(bad) = frames.iter().position(|f| f.shape() != [3, h, w]) {
            return Err(Error::Shape(format!(
                "frame {bad} has shape {:?}, intrinsics say [3, {h}, {w}]",
                frames[bad].shape()
            )));
        }
        if depths.as_ref().is_some_and(|d| {
            d.len() != frames.len() || d.iter().any(|m| (m.height(), m.width()) != (h, w))
        }) {
            return Err(Error::Shape(
                "depth maps must match frames in count and size".into(),
            ));
        }
        let seq = Self {
            id: id.into(),
            intrinsics,
            frames: Frames::Memory(frames),
            poses,
            depths: depths.map(Depths::Memory),
        };
        seq.check_pose_count()?;
        Ok(seq)
    }

    pub(crate) fn from_files(
        id: String,
        intrinsics: CameraIntrinsics,
        paths: Vec<PathBuf>,
        poses: Option<Vec<Se3>>,
        depth_paths: Option<Vec<PathBuf>>,
    ) -> Result<Self> {
        let seq = Self {
            id,
            frames: Frames::Files {
                paths,
                width: intrinsics.width,
                height: intrinsics.height,
            },
            intrinsics,
            poses,
            depths: depth_paths.map(Depths::Files),
        };
        seq.check_pose_count()?;
        Ok(seq)
    }

    fn check_pose_count(&self) -> Result<()> {
        match &self.poses {
            Some(p) if p.len() != self.len() => Err(Error::Data(format!(
                "sequence {}: {} frames but {} poses",
                self.id,
                self.len(),
                p.len()
            ))),
            _ => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        match &self.frames {
            Frames::Memory(f) => f.len(),
            Frames::Files { paths, .. } => paths.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Frame `i` as `[3, H, W]` in `[0, 1]`.
    pub fn frame(&self, i: usize) -> Result<Tensor> {
        self.check_index(i)?;
        match &self.frames {
            Frames::Memory(f) => Ok(f[i].clone()),
            Frames::Files {
                paths,
                width,
                height,
            } => image_io::read_rgb(&paths[i], Some((*width, *height))),
        }
    }

    pub fn frames(&self) -> impl Iterator<Item = Result<Tensor>> + '_ {
        (0..self.len()).map(|i| self.frame(i))
    }

    pub fn has_depth(&self) -> bool {
        self.depths.is_some()
    }

    pub fn depth(&self, i: usize) -> Result<Option<DepthMap>> {
        self.check_index(i)?;
        match &self.depths {
            None => Ok(None),
            Some(Depths::Memory(d)) => Ok(Some(d[i].clone())),
            Some(Depths::Files(paths)) => {
                let d = image_io::read_depth_mm(&paths[i])?;
                let (h, w) = (self.intrinsics.height, self.intrinsics.width);
                if (d.height(), d.width()) != (h, w) {
                    return Err(Error::Data(format!(
                        "{}: depth is {}x{}, frames are {h}x{w}",
                        paths[i].display(),
                        d.height(),
                        d.width()
                    )));
                }
                Ok(Some(d))
            }
        }
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.len() {
            return Err(Error::Data(format!(
                "sequence {} has {} frames, asked for {i}",
                self.id,
                self.len()
            )));
        }
        Ok(())
    }

    /// `T_{target -> source}`, mapping target-camera points into the source
    /// camera.
    pub fn relative_transform(&self, target: usize, source: usize) -> Option<Se3> {
        let p = self.poses.as_ref()?;
        Some(p.get(source)?.invert().compose(p.get(target)?))
    }

    /// The `n` frames starting at `start` with the middle one as target.
    pub fn window(&self, start: usize, n: usize) -> Result<SampleSequence> {
        if n < 2 || start + n > self.len() {
            return Err(Error::Data(format!(
                "window [{start}, {}) does not fit sequence {} of {} frames",
                start + n,
                self.id,
                self.len()
            )));
        }
        let target_index = (n - 1) / 2;
        let t = start + target_index;
        let frames = (start..start + n)
            .map(|i| self.frame(i))
            .collect::<Result<Vec<_>>>()?;
        let gt_transforms = self.poses.as_ref().map(|_| {
            (start..start + n)
                .filter(|&i| i != t)
                .map(|s| self.relative_transform(t, s).expect("poses present"))
                .collect::<Vec<_>>()
        });
        Ok(SampleSequence {
            sequence_id: self.id.clone(),
            start,
            frames,
            target_index,
            intrinsics: self.intrinsics,
            gt_poses: gt_transforms
                .as_ref()
                .map(|ts| ts.iter().map(PoseVec6::from_matrix).collect()),
            gt_transforms,
            gt_depth: self.depth(t)?,
        })
    }
}

/// Window of `N` consecutive frames around a target frame.
#[derive(Clone, Debug)]
pub struct SampleSequence {
    pub sequence_id: String,
    /// Index of the first frame within its sequence.
    pub start: usize,
    /// `N` frames `[3, H, W]` in time order.
    pub frames: Vec<Tensor>,
    pub target_index: usize,
    pub intrinsics: CameraIntrinsics,
    /// Target-to-source poses for the non-target frames in time order.
    pub gt_poses: Option<Vec<PoseVec6>>,
    pub gt_transforms: Option<Vec<Se3>>,
    pub gt_depth: Option<DepthMap>,
}

impl SampleSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn target(&self) -> &Tensor {
        &self.frames[self.target_index]
    }

    /// Non-target frames in time order.
    pub fn sources(&self) -> impl Iterator<Item = &Tensor> {
        let t = self.target_index;
        self.frames
            .iter()
            .enumerate()
            .filter(move |(i, _)| *i != t)
            .map(|(_, f)| f)
    }

    /// Index of the `n`-th frame after target-skipping, as a frame index.
    pub fn source_frame_index(&self, n: usize) -> usize {
        if n < self.target_index {
            n
        } else {
            n + 1
        }
    }
}

/// Several frame sequences, never mixed inside a window.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub sequences: Vec<FrameSequence>,
}

impl Dataset {
    pub fn new(sequences: Vec<FrameSequence>) -> Self {
        Self { sequences }
    }

    pub fn num_frames(&self) -> usize {
        self.sequences.iter().map(FrameSequence::len).sum()
    }

    /// Frame size `(height, width)` shared by every sequence.
    pub fn frame_size(&self) -> Result<(usize, usize)> {
        let mut sizes = self
            .sequences
            .iter()
            .map(|s| (s.intrinsics.height, s.intrinsics.width));
        let first = sizes
            .next()
            .ok_or_else(|| Error::Data("empty dataset".into()))?;
        if sizes.any(|s| s != first) {
            return Err(Error::Data("sequences have different frame sizes".into()));
        }
        Ok(first)
    }
}
