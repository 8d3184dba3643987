//! Ray-cast planar scenes with a solid value-noise texture.
//!
//! Every pixel center is traced through the pinhole model to the nearest
//! plane, so depth and camera poses are exact and the images are consistent
//! with the projection used for warping. The planes bound a convex room
//! around the camera path, which rules out occlusion.

use serde::{Deserialize, Serialize};

use super::{Dataset, FrameSequence};
use crate::error::{Error, Result};
use crate::geometry::{euler_rotation, mat3_vec, CameraIntrinsics, DepthMap, PoseVec6, Se3, Z_MIN};
use crate::tensor::Tensor;

/// Surface arrangement, in the coordinates of the first camera.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Layout {
    /// Plane `z = depth`.
    FrontoParallel { depth: f64 },
    /// Plane through `(0, 0, depth)` whose normal is the optical axis turned
    /// by `pitch` about x, then `yaw` about y (radians).
    Slanted { depth: f64, yaw: f64, pitch: f64 },
    /// Two walls meeting in a vertical crease at `(0, 0, depth)`, each turned
    /// `half_angle` toward the camera.
    TwoPlane { depth: f64, half_angle: f64 },
}

impl Layout {
    /// Planes as `(n, c)` with surface `n . X = c` and the camera side
    /// `n . X < c`.
    fn planes(&self) -> Vec<([f64; 3], f64)> {
        match *self {
            Layout::FrontoParallel { depth } => vec![([0.0, 0.0, 1.0], depth)],
            Layout::Slanted { depth, yaw, pitch } => {
                let n = mat3_vec(&euler_rotation(pitch, yaw, 0.0), [0.0, 0.0, 1.0]);
                vec![(n, depth * n[2])]
            }
            Layout::TwoPlane { depth, half_angle } => {
                let (s, c) = half_angle.sin_cos();
                vec![([s, 0.0, c], depth * c), ([-s, 0.0, c], depth * c)]
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Texture {
    /// Lattice spacing of the coarsest noise octave, in scene units.
    pub cell_size: f64,
    pub octaves: u32,
    /// Peak-to-peak intensity range around 0.5.
    pub contrast: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub layout: Layout,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    /// `fx = fy`, principal point at the image center.
    pub focal: f64,
    /// Camera motion per frame in the moving camera's frame:
    /// `W_{k+1} = W_k * M(velocity)`.
    pub velocity: [f64; 6],
    pub texture: Texture,
}

impl SceneConfig {
    /// 16x48 frames of a wall slanted 30 degrees, camera sliding along it.
    pub fn toy() -> Self {
        let yaw = 30f64.to_radians();
        let speed = 0.25;
        Self {
            layout: Layout::Slanted {
                depth: 3.0,
                yaw,
                pitch: 0.0,
            },
            frames: 24,
            width: 48,
            height: 16,
            focal: 24.0,
            velocity: [-speed * yaw.cos(), 0.0, speed * yaw.sin(), 0.0, 0.0, 0.0],
            texture: Texture {
                cell_size: 1.0,
                octaves: 2,
                contrast: 0.8,
            },
        }
    }

    /// Named presets: `toy`, `plane`, `slanted`, `two-plane`.
    pub fn preset(name: &str) -> Result<Self> {
        let base = Self {
            frames: 20,
            width: 96,
            height: 64,
            focal: 60.0,
            velocity: [0.05, 0.0, 0.05, 0.0, 0.005, 0.0],
            texture: Texture {
                cell_size: 1.0,
                octaves: 2,
                contrast: 0.6,
            },
            ..Self::toy()
        };
        match name {
            "toy" => Ok(Self::toy()),
            "plane" => Ok(Self {
                layout: Layout::FrontoParallel { depth: 4.0 },
                ..base
            }),
            "slanted" => Ok(Self {
                layout: Layout::Slanted {
                    depth: 4.0,
                    yaw: 0.4,
                    pitch: -0.3,
                },
                ..base
            }),
            "two-plane" => Ok(Self {
                layout: Layout::TwoPlane {
                    depth: 5.0,
                    half_angle: 0.5,
                },
                ..base
            }),
            other => Err(Error::Config(format!(
                "unknown scene preset {other:?} (expected toy, plane, slanted or two-plane)"
            ))),
        }
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::new(
            self.focal,
            self.focal,
            (self.width as f64 - 1.0) / 2.0,
            (self.height as f64 - 1.0) / 2.0,
            self.width,
            self.height,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.frames == 0 {
            return cfg("scene needs at least one frame".into());
        }
        self.intrinsics()?;
        let t = &self.texture;
        if !(t.cell_size > 0.0 && t.cell_size.is_finite()) || t.octaves == 0 {
            return cfg(format!(
                "texture needs a positive cell size and octaves, got {t:?}"
            ));
        }
        if !(t.contrast > 0.0 && t.contrast <= 1.0) {
            return cfg(format!(
                "texture contrast must be in (0, 1], got {}",
                t.contrast
            ));
        }
        if self.velocity.iter().any(|v| !v.is_finite()) {
            return cfg("velocity must be finite".into());
        }
        for (n, c) in self.layout.planes() {
            if !(c > 0.0 && n.iter().all(|v| v.is_finite())) {
                return cfg(format!(
                    "layout {:?} puts the first camera behind a surface",
                    self.layout
                ));
            }
        }
        Ok(())
    }

    /// Absolute world-from-camera poses of every frame.
    pub fn camera_path(&self) -> Vec<Se3> {
        let step = PoseVec6::from_array(self.velocity).to_matrix();
        let mut poses = Vec::with_capacity(self.frames);
        let mut w = Se3::identity();
        for _ in 0..self.frames {
            poses.push(w);
            w = w.compose(&step);
        }
        poses
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn lattice(seed: u64, i: [i64; 3]) -> f64 {
    let mut h = seed;
    for v in i {
        h = splitmix(h ^ v as u64);
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

/// Smooth noise in `[0, 1]` interpolating random lattice values.
fn value_noise(seed: u64, p: [f64; 3]) -> f64 {
    let base = p.map(|v| v.floor());
    let f = [
        fade(p[0] - base[0]),
        fade(p[1] - base[1]),
        fade(p[2] - base[2]),
    ];
    let b = base.map(|v| v as i64);
    let mut acc = 0.0;
    for corner in 0..8 {
        let o = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
        let mut w = 1.0;
        for a in 0..3 {
            w *= if o[a] == 1 { f[a] } else { 1.0 - f[a] };
        }
        acc += w * lattice(
            seed,
            [b[0] + o[0] as i64, b[1] + o[1] as i64, b[2] + o[2] as i64],
        );
    }
    acc
}

fn shade(seed: u64, tex: &Texture, x: [f64; 3], channel: u64) -> f64 {
    let (mut sum, mut norm, mut amp) = (0.0, 0.0, 1.0);
    let mut freq = 1.0 / tex.cell_size;
    for octave in 0..tex.octaves as u64 {
        let s = splitmix(seed ^ (channel << 32) ^ octave);
        sum += amp * value_noise(s, x.map(|v| v * freq));
        norm += amp;
        amp *= 0.5;
        freq *= 2.0;
    }
    0.5 + tex.contrast * (sum / norm - 0.5)
}

/// Renders one sequence. The texture is drawn from `seed`; the geometry and
/// camera path come from `config`.
pub fn generate_synthetic_scene(seed: u64, config: &SceneConfig) -> Result<FrameSequence> {
    config.validate()?;
    let k = config.intrinsics()?;
    let planes = config.layout.planes();
    let path = config.camera_path();
    let (h, w) = (config.height, config.width);
    let mut frames = Vec::with_capacity(config.frames);
    let mut depths = Vec::with_capacity(config.frames);
    for (f, pose) in path.iter().enumerate() {
        let origin = pose.translation();
        let r = pose.rotation();
        for (n, c) in &planes {
            let side = n[0] * origin[0] + n[1] * origin[1] + n[2] * origin[2];
            if side >= c - Z_MIN {
                return Err(Error::Config(format!(
                    "camera {f} at {origin:?} is on or behind a scene surface"
                )));
            }
        }
        let mut image = vec![0.0; 3 * h * w];
        let mut depth = vec![0.0; h * w];
        for v in 0..h {
            for u in 0..w {
                let ray = mat3_vec(&r, k.backproject(u as f64, v as f64));
                let t = planes
                    .iter()
                    .filter_map(|(n, c)| {
                        let denom = n[0] * ray[0] + n[1] * ray[1] + n[2] * ray[2];
                        let num = c - (n[0] * origin[0] + n[1] * origin[1] + n[2] * origin[2]);
                        (denom > 1e-12).then(|| num / denom)
                    })
                    .filter(|t| *t > Z_MIN)
                    .fold(f64::INFINITY, f64::min);
                if !t.is_finite() {
                    return Err(Error::Config(format!(
                        "pixel ({u}, {v}) of frame {f} sees no surface"
                    )));
                }
                let x = [
                    origin[0] + t * ray[0],
                    origin[1] + t * ray[1],
                    origin[2] + t * ray[2],
                ];
                depth[v * w + u] = t;
                for ch in 0..3 {
                    image[(ch * h + v) * w + u] = shade(seed, &config.texture, x, ch as u64);
                }
            }
        }
        frames.push(Tensor::new([3, h, w], image)?);
        depths.push(DepthMap::new(h, w, depth)?);
    }
    FrameSequence::in_memory(format!("{seed:02}"), k, frames, Some(path), Some(depths))
}

/// `count` sequences with texture seeds derived from `seed`, ids `00`, `01`...
pub fn generate_synthetic_dataset(
    seed: u64,
    config: &SceneConfig,
    count: usize,
) -> Result<Dataset> {
    let sequences = (0..count)
        .map(|i| {
            let mut s = generate_synthetic_scene(splitmix(seed.wrapping_add(i as u64)), config)?;
            s.id = format!("{i:02}");
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(sequences))
}
