//! KITTI odometry directory layout:
//!
//! ```text
//! root/
//!   manifest.toml                 (optional)
//!   poses/<id>.txt                12 floats per line, world-from-camera
//!   sequences/<id>/image_2/*.png
//!   sequences/<id>/calib.txt      "P2: fx 0 cx tx 0 fy cy ty 0 0 1 tz"
//!   sequences/<id>/intrinsics.txt "fx fy cx cy width height" (preferred)
//!   sequences/<id>/depth/*.png    16-bit millimeters (optional)
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::image_io::{image_size, write_depth_mm, write_rgb};
use super::{Dataset, FrameSequence};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Se3};

/// Tolerance on the rotation block of text pose files, which carry only a
/// handful of significant digits.
const POSE_FILE_TOLERANCE: f64 = 1e-4;

fn default_camera() -> String {
    "image_2".into()
}

/// Where a dataset lives and how it is split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub root: PathBuf,
    #[serde(default)]
    pub train: Vec<String>,
    #[serde(default)]
    pub val: Vec<String>,
    #[serde(default)]
    pub test: Vec<String>,
    /// Frame size after resizing.
    pub width: usize,
    pub height: usize,
    #[serde(default = "default_camera")]
    pub camera: String,
}

impl DatasetManifest {
    pub const FILE_NAME: &'static str = "manifest.toml";

    /// Reads `root/manifest.toml`, or the given file. A relative `root`
    /// inside the file is resolved against the file's directory.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let mut path = path.as_ref().to_path_buf();
        if path.is_dir() {
            path = path.join(Self::FILE_NAME);
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut m: Self =
            toml::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        if m.root.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            m.root = base.join(&m.root);
        }
        m.validate()?;
        Ok(m)
    }

    /// Manifest for a root without one: every sequence directory goes to
    /// `train`, frames keep the size of the first image found.
    pub fn discover(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let seq_dir = root.join("sequences");
        let mut ids: Vec<String> = fs::read_dir(&seq_dir)
            .map_err(|e| Error::io(&seq_dir, e))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        ids.sort();
        let first = ids
            .first()
            .ok_or_else(|| Error::Data(format!("{}: no sequences", seq_dir.display())))?;
        let images = list_pngs(&seq_dir.join(first).join(default_camera()))?;
        let (width, height) = image_size(&images[0])?;
        let m = Self {
            root,
            train: ids,
            val: Vec::new(),
            test: Vec::new(),
            width,
            height,
            camera: default_camera(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let splits = [
            ("train", &self.train),
            ("val", &self.val),
            ("test", &self.test),
        ];
        for (i, (a, xs)) in splits.iter().enumerate() {
            for (b, ys) in &splits[i + 1..] {
                if let Some(dup) = xs.iter().find(|x| ys.contains(x)) {
                    return Err(Error::Data(format!(
                        "sequence {dup} is in both {a} and {b} splits"
                    )));
                }
            }
        }
        if self.width < 2 || self.height < 2 {
            return Err(Error::Data(format!(
                "frame size {}x{} is too small",
                self.width, self.height
            )));
        }
        for id in self.all_ids() {
            let dir = self.image_dir(id);
            if !dir.is_dir() {
                return Err(Error::Data(format!(
                    "missing image directory {}",
                    dir.display()
                )));
            }
        }
        Ok(())
    }

    pub fn all_ids(&self) -> impl Iterator<Item = &String> {
        self.train.iter().chain(&self.val).chain(&self.test)
    }

    pub fn sequence_dir(&self, id: &str) -> PathBuf {
        self.root.join("sequences").join(id)
    }

    pub fn image_dir(&self, id: &str) -> PathBuf {
        self.sequence_dir(id).join(&self.camera)
    }

    pub fn pose_path(&self, id: &str) -> PathBuf {
        self.root.join("poses").join(format!("{id}.txt"))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = toml::to_string(self).map_err(|e| Error::Data(format!("manifest: {e}")))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Loads every sequence of a split.
    pub fn load_split(&self, ids: &[String]) -> Result<Dataset> {
        Ok(Dataset::new(
            ids.iter()
                .map(|id| load_kitti_sequence(self, id))
                .collect::<Result<_>>()?,
        ))
    }
}

fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    if files.is_empty() {
        return Err(Error::Data(format!("{}: no PNG frames", dir.display())));
    }
    files.sort();
    Ok(files)
}

/// Parses `P<n>:` from a KITTI `calib.txt`.
fn read_calib(path: &Path, camera: &str, width: usize, height: usize) -> Result<CameraIntrinsics> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let index = camera.trim_start_matches("image_");
    let key = format!("P{index}:");
    let line = text
        .lines()
        .find(|l| l.trim_start().starts_with(&key))
        .ok_or_else(|| Error::Data(format!("{}: no {key} line", path.display())))?;
    let v: Vec<f64> = line
        .trim_start()
        .trim_start_matches(&key)
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Data(format!("{}: {key} {e}", path.display())))?;
    if v.len() != 12 {
        return Err(Error::Data(format!(
            "{}: {key} needs 12 values, got {}",
            path.display(),
            v.len()
        )));
    }
    CameraIntrinsics::new(v[0], v[5], v[2], v[6], width, height)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Parses pose text; `source` names the origin in error messages.
pub fn parse_pose_file(text: &str, source: &str) -> Result<Vec<Se3>> {
    let mut poses = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 12 {
            return Err(Error::Data(format!(
                "{source}:{}: expected 12 floats, got {}",
                n + 1,
                fields.len()
            )));
        }
        let mut v = [0.0; 12];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f
                .parse()
                .map_err(|_| Error::Data(format!("{source}:{}: bad number {f:?}", n + 1)))?;
        }
        let pose = Se3::from_row_major_3x4(&v, POSE_FILE_TOLERANCE)
            .map_err(|e| Error::Data(format!("{source}:{}: {e}", n + 1)))?;
        poses.push(pose);
    }
    Ok(poses)
}

pub fn read_pose_file(path: impl AsRef<Path>) -> Result<Vec<Se3>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pose_file(&text, &path.display().to_string())
}

pub fn write_pose_file(path: impl AsRef<Path>, poses: &[Se3]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for p in poses {
        let row: Vec<String> = p
            .to_row_major_3x4()
            .iter()
            .map(|v| format!("{v:e}"))
            .collect();
        text.push_str(&row.join(" "));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Opens one sequence: frames are decoded lazily and resized to the
/// manifest size, intrinsics rescaled to match.
pub fn load_kitti_sequence(manifest: &DatasetManifest, id: &str) -> Result<FrameSequence> {
    let dir = manifest.sequence_dir(id);
    let images = list_pngs(&manifest.image_dir(id))?;
    let (w0, h0) = image_size(&images[0])?;
    let own = dir.join("intrinsics.txt");
    let native = if own.is_file() {
        CameraIntrinsics::read(&own)?
    } else {
        read_calib(&dir.join("calib.txt"), &manifest.camera, w0, h0)?
    };
    if (native.width, native.height) != (w0, h0) {
        return Err(Error::Data(format!(
            "{}: calibration is for {}x{}, images are {w0}x{h0}",
            dir.display(),
            native.width,
            native.height
        )));
    }
    let intrinsics = native.resized(manifest.width, manifest.height)?;
    let pose_path = manifest.pose_path(id);
    let poses = if pose_path.is_file() {
        let p = read_pose_file(&pose_path)?;
        if p.len() != images.len() {
            return Err(Error::Data(format!(
                "{}: {} poses for {} frames",
                pose_path.display(),
                p.len(),
                images.len()
            )));
        }
        Some(p)
    } else {
        None
    };
    let depth_dir = dir.join("depth");
    let depths = if depth_dir.is_dir() {
        let d = list_pngs(&depth_dir)?;
        if d.len() != images.len() {
            return Err(Error::Data(format!(
                "{}: {} depth maps for {} frames",
                depth_dir.display(),
                d.len(),
                images.len()
            )));
        }
        Some(d)
    } else {
        None
    };
    FrameSequence::from_files(id.to_string(), intrinsics, images, poses, depths)
}

/// Writes a dataset in the layout above plus `manifest.toml` with the given
/// splits (all sequences in `train` when every split is empty).
pub fn materialize(
    dataset: &Dataset,
    root: impl AsRef<Path>,
    train: Vec<String>,
    val: Vec<String>,
    test: Vec<String>,
) -> Result<DatasetManifest> {
    let root = root.as_ref();
    let (height, width) = dataset.frame_size()?;
    let mkdir = |p: &Path| fs::create_dir_all(p).map_err(|e| Error::io(p, e));
    mkdir(&root.join("poses"))?;
    for seq in &dataset.sequences {
        let dir = root.join("sequences").join(&seq.id);
        let img_dir = dir.join("image_2");
        mkdir(&img_dir)?;
        seq.intrinsics.write(dir.join("intrinsics.txt"))?;
        let k = &seq.intrinsics;
        let calib = format!(
            "P2: {:e} 0 {:e} 0 0 {:e} {:e} 0 0 0 1 0\n",
            k.fx, k.cx, k.fy, k.cy
        );
        let calib_path = dir.join("calib.txt");
        fs::write(&calib_path, calib).map_err(|e| Error::io(&calib_path, e))?;
        for i in 0..seq.len() {
            write_rgb(img_dir.join(format!("{i:06}.png")), &seq.frame(i)?)?;
        }
        if seq.has_depth() {
            let depth_dir = dir.join("depth");
            mkdir(&depth_dir)?;
            for i in 0..seq.len() {
                let d = seq.depth(i)?.expect("has depth");
                write_depth_mm(depth_dir.join(format!("{i:06}.png")), &d)?;
            }
        }
        if let Some(p) = &seq.poses {
            write_pose_file(root.join("poses").join(format!("{}.txt", seq.id)), p)?;
        }
    }
    let all_empty = train.is_empty() && val.is_empty() && test.is_empty();
    let manifest = DatasetManifest {
        root: PathBuf::from("."),
        train: if all_empty {
            dataset.sequences.iter().map(|s| s.id.clone()).collect()
        } else {
            train
        },
        val,
        test,
        width,
        height,
        camera: default_camera(),
    };
    manifest.write(root.join(DatasetManifest::FILE_NAME))?;
    DatasetManifest::open(root)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_pose_line() {
        let p = parse_pose_file("1 0 0 0 0 1 0 0 0 0 1 0\n", "x").unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].max_abs_diff(&Se3::identity()), 0.0);
    }

    #[test]
    fn short_line_names_line_number() {
        let err = parse_pose_file("1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0\n", "poses/00.txt").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("poses/00.txt:2"), "{msg}");
        assert!(matches!(err, Error::Data(_)));
    }
}
