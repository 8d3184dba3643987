//! Differentiable inverse warping and the photometric reconstruction loss.
//!
//! A source view is re-rendered in the target frame by projecting every
//! target pixel through the predicted depth and relative pose, then sampling
//! the source image bilinearly at the resulting sub-pixel location.

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, DepthMap, PoseVec6};
use crate::tensor::{Graph, Tensor, Var};

/// Sample positions closer than this to an integer are snapped to it, so
/// that an identity warp reproduces the source exactly.
pub const SNAP_EPS: f64 = 1e-9;

/// Synthesized view plus the pixels where it is defined.
#[derive(Clone, Debug)]
pub struct WarpResult {
    /// `[B, C, H, W]`; zero where `mask` is false.
    pub image: Var,
    /// `B*H*W`, true where all four neighbours are inside the source and the
    /// projected depth is positive.
    pub mask: Vec<bool>,
}

impl WarpResult {
    pub fn fill_ratio(&self) -> f64 {
        if self.mask.is_empty() {
            return 0.0;
        }
        self.mask.iter().filter(|m| **m).count() as f64 / self.mask.len() as f64
    }
}

#[inline]
fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < SNAP_EPS {
        r
    } else {
        x
    }
}

/// Top-left neighbour and fractional offsets for a position inside an
/// `h x w` grid, or `None` when outside.
#[inline]
fn cell(u: f64, v: f64, h: usize, w: usize) -> Option<(usize, usize, f64, f64)> {
    let (u, v) = (snap(u), snap(v));
    if !(u >= 0.0 && v >= 0.0 && u <= (w - 1) as f64 && v <= (h - 1) as f64) {
        return None;
    }
    let x0 = (u.floor() as usize).min(w - 2);
    let y0 = (v.floor() as usize).min(h - 2);
    Some((x0, y0, u - x0 as f64, v - y0 as f64))
}

/// Interpolates every channel of `src [C, H, W]` at `(u, v)`.
pub fn sample_bilinear(src: &Tensor, u: f64, v: f64) -> Result<Option<Vec<f64>>> {
    src.expect_ndim(3, "sample_bilinear")?;
    let (c, h, w) = (src.shape()[0], src.shape()[1], src.shape()[2]);
    if h < 2 || w < 2 {
        return Err(Error::Shape(format!(
            "source must be at least 2x2, got {h}x{w}"
        )));
    }
    Ok(cell(u, v, h, w).map(|(x0, y0, wx, wy)| {
        (0..c)
            .map(|ch| {
                let p = &src.data()[ch * h * w..][..h * w];
                let (a, b) = (p[y0 * w + x0], p[y0 * w + x0 + 1]);
                let (cc, d) = (p[(y0 + 1) * w + x0], p[(y0 + 1) * w + x0 + 1]);
                (1.0 - wx) * (1.0 - wy) * a
                    + wx * (1.0 - wy) * b
                    + (1.0 - wx) * wy * cc
                    + wx * wy * d
            })
            .collect()
    }))
}

impl Graph {
    /// Bilinear sampling of `src [B, C, Hs, Ws]` at `coords [B, H, W, 2]`
    /// (`u` = column, `v` = row). `coord_mask` marks coordinates that are
    /// meaningful at all; the returned mask additionally requires the sample
    /// to be inside the source grid.
    pub fn bilinear_sample(
        &mut self,
        src: Var,
        coords: Var,
        coord_mask: Option<&[bool]>,
    ) -> Result<WarpResult> {
        let [b, c, hs, ws] = self.value(src).dims4("bilinear_sample source")?;
        let cs = self.shape(coords).to_vec();
        if cs.len() != 4 || cs[0] != b || cs[3] != 2 {
            return Err(Error::Shape(format!(
                "coords must be [{b}, H, W, 2], got {cs:?}"
            )));
        }
        if hs < 2 || ws < 2 {
            return Err(Error::Shape(format!(
                "source must be at least 2x2, got {hs}x{ws}"
            )));
        }
        let (h, w) = (cs[1], cs[2]);
        let hw = h * w;
        if coord_mask.is_some_and(|m| m.len() != b * hw) {
            return Err(Error::Shape("coordinate mask length mismatch".into()));
        }
        let mut cells: Vec<Option<(usize, usize, f64, f64)>> = Vec::with_capacity(b * hw);
        {
            let cd = self.value(coords).data();
            for i in 0..b * hw {
                let ok = coord_mask.is_none_or(|m| m[i]);
                cells.push(if ok {
                    cell(cd[2 * i], cd[2 * i + 1], hs, ws)
                } else {
                    None
                });
            }
        }
        let mask: Vec<bool> = cells.iter().map(Option::is_some).collect();
        let mut out = vec![0.0; b * c * hw];
        {
            let sd = self.value(src).data();
            for n in 0..b {
                for ch in 0..c {
                    let plane = &sd[(n * c + ch) * hs * ws..][..hs * ws];
                    let dst = &mut out[(n * c + ch) * hw..][..hw];
                    for (p, slot) in dst.iter_mut().enumerate() {
                        if let Some((x0, y0, wx, wy)) = cells[n * hw + p] {
                            let i = y0 * ws + x0;
                            *slot = (1.0 - wx) * (1.0 - wy) * plane[i]
                                + wx * (1.0 - wy) * plane[i + 1]
                                + (1.0 - wx) * wy * plane[i + ws]
                                + wx * wy * plane[i + ws + 1];
                        }
                    }
                }
            }
        }
        let out = Tensor::new([b, c, h, w], out)?;
        let image = self.record_fn("bilinear_sample", out, &[src, coords], move |ctx| {
            let sd = ctx.inputs[0].data();
            let g = ctx.grad.data();
            let mut gs = vec![0.0; sd.len()];
            let mut gc = vec![0.0; b * hw * 2];
            for n in 0..b {
                for ch in 0..c {
                    let base = (n * c + ch) * hs * ws;
                    let plane = &sd[base..base + hs * ws];
                    for p in 0..hw {
                        let Some((x0, y0, wx, wy)) = cells[n * hw + p] else {
                            continue;
                        };
                        let go = g[(n * c + ch) * hw + p];
                        let i = y0 * ws + x0;
                        let (a, bb, cc, d) =
                            (plane[i], plane[i + 1], plane[i + ws], plane[i + ws + 1]);
                        gs[base + i] += go * (1.0 - wx) * (1.0 - wy);
                        gs[base + i + 1] += go * wx * (1.0 - wy);
                        gs[base + i + ws] += go * (1.0 - wx) * wy;
                        gs[base + i + ws + 1] += go * wx * wy;
                        let q = n * hw + p;
                        gc[2 * q] += go * ((1.0 - wy) * (bb - a) + wy * (d - cc));
                        gc[2 * q + 1] += go * ((1.0 - wx) * (cc - a) + wx * (d - bb));
                    }
                }
            }
            Ok(vec![
                Some(Tensor::new(ctx.inputs[0].shape().to_vec(), gs)?),
                Some(Tensor::new([b, h, w, 2], gc)?),
            ])
        })?;
        Ok(WarpResult { image, mask })
    }

    /// Re-renders `src [B, C, H, W]` in the target frame from target depth
    /// `[B, 1, H, W]` and target-to-source poses `[B, 6]`.
    pub fn inverse_warp(
        &mut self,
        src: Var,
        depth: Var,
        pose: Var,
        k: &CameraIntrinsics,
    ) -> Result<WarpResult> {
        let transform = self.pose_to_matrix(pose)?;
        let (coords, valid) = self.project_pixels(depth, transform, k, None)?;
        self.bilinear_sample(src, coords, Some(&valid))
    }

    /// `sum |a - b|` over masked pixels (all channels), divided by the
    /// number of masked pixels. `mask` has one entry per `[B, H, W]` pixel.
    pub fn masked_l1_mean(&mut self, a: Var, b: Var, mask: &[bool]) -> Result<Var> {
        let [n, c, h, w] = self.value(a).dims4("masked_l1_mean")?;
        self.value(a).expect_same_shape(self.value(b))?;
        let hw = h * w;
        if mask.len() != n * hw {
            return Err(Error::Shape(format!(
                "mask has {} entries for {} pixels",
                mask.len(),
                n * hw
            )));
        }
        let count = mask.iter().filter(|m| **m).count();
        if count == 0 {
            return Err(Error::NoValidOverlap);
        }
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut total = 0.0;
        for bi in 0..n {
            for ch in 0..c {
                for p in 0..hw {
                    if mask[bi * hw + p] {
                        let i = (bi * c + ch) * hw + p;
                        total += (ad[i] - bd[i]).abs();
                    }
                }
            }
        }
        let norm = 1.0 / count as f64;
        let mask = mask.to_vec();
        self.record_fn(
            "masked_l1_mean",
            Tensor::scalar(total * norm),
            &[a, b],
            move |ctx| {
                let (ad, bd) = (ctx.inputs[0].data(), ctx.inputs[1].data());
                let go = ctx.grad.data()[0] * norm;
                let mut ga = vec![0.0; ad.len()];
                for bi in 0..n {
                    for ch in 0..c {
                        for p in 0..hw {
                            if mask[bi * hw + p] {
                                let i = (bi * c + ch) * hw + p;
                                let diff = ad[i] - bd[i];
                                // subgradient 0 at diff == 0
                                ga[i] = if diff > 0.0 {
                                    go
                                } else if diff < 0.0 {
                                    -go
                                } else {
                                    0.0
                                };
                            }
                        }
                    }
                }
                let gb = ga.iter().map(|v| -v).collect();
                let shape = ctx.inputs[0].shape().to_vec();
                Ok(vec![
                    Some(Tensor::new(shape.clone(), ga)?),
                    Some(Tensor::new(shape, gb)?),
                ])
            },
        )
    }

    /// `mask ? a : b` per pixel, broadcast over channels.
    pub fn masked_composite(&mut self, a: Var, b: Var, mask: &[bool]) -> Result<Var> {
        let [n, c, h, w] = self.value(a).dims4("masked_composite")?;
        self.value(a).expect_same_shape(self.value(b))?;
        let hw = h * w;
        if mask.len() != n * hw {
            return Err(Error::Shape("composite mask length mismatch".into()));
        }
        let pick = move |i: usize| mask[(i / (c * hw)) * hw + i % hw];
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let out: Vec<f64> = (0..ad.len())
            .map(|i| if pick(i) { ad[i] } else { bd[i] })
            .collect();
        let shape = [n, c, h, w];
        let mask_a: Vec<bool> = (0..out.len()).map(pick).collect();
        self.record_fn(
            "masked_composite",
            Tensor::new(shape, out)?,
            &[a, b],
            move |ctx| {
                let g = ctx.grad.data();
                let ga = g
                    .iter()
                    .zip(&mask_a)
                    .map(|(g, m)| if *m { *g } else { 0.0 })
                    .collect();
                let gb = g
                    .iter()
                    .zip(&mask_a)
                    .map(|(g, m)| if *m { 0.0 } else { *g })
                    .collect();
                Ok(vec![
                    Some(Tensor::new(shape, ga)?),
                    Some(Tensor::new(shape, gb)?),
                ])
            },
        )
    }
}

/// Sum over source views of the per-view masked mean L1 error between the
/// target and each reconstruction. With `use_mask == false` every pixel
/// counts, invalid ones comparing against the zero fill.
pub fn photometric_loss(
    g: &mut Graph,
    target: Var,
    warps: &[WarpResult],
    use_mask: bool,
) -> Result<Var> {
    let mut total: Option<Var> = None;
    for warp in warps {
        let all;
        let mask = if use_mask {
            warp.mask.as_slice()
        } else {
            all = vec![true; warp.mask.len()];
            all.as_slice()
        };
        let term = g.masked_l1_mean(target, warp.image, mask)?;
        total = Some(match total {
            Some(t) => g.add(t, term)?,
            None => term,
        });
    }
    total.ok_or_else(|| Error::Shape("photometric loss over zero source views".into()))
}

/// A warped image outside of any training graph.
#[derive(Clone, Debug)]
pub struct WarpedImage {
    /// `[C, H, W]`.
    pub image: Tensor,
    pub mask: Vec<bool>,
}

/// Non-differentiable convenience wrapper around [`Graph::inverse_warp`] for
/// a single `[C, H, W]` image. Invalid depth pixels are excluded.
pub fn warp_image(
    src: &Tensor,
    depth: &DepthMap,
    pose: &PoseVec6,
    k: &CameraIntrinsics,
) -> Result<WarpedImage> {
    src.expect_ndim(3, "warp_image")?;
    let (c, h, w) = (src.shape()[0], src.shape()[1], src.shape()[2]);
    if depth.height() != h || depth.width() != w {
        return Err(Error::Shape(format!(
            "source {h}x{w} and depth {}x{} differ",
            depth.height(),
            depth.width()
        )));
    }
    let mut g = Graph::new();
    let s = g.constant(src.clone().reshape([1, c, h, w])?);
    // invalid pixels get a harmless placeholder and are masked below
    let values: Vec<f64> = depth
        .values()
        .iter()
        .zip(depth.valid())
        .map(|(d, v)| if *v { *d } else { 1.0 })
        .collect();
    let d = g.constant(Tensor::new([1, 1, h, w], values)?);
    let p = g.constant(Tensor::new([1, 6], pose.to_array().to_vec())?);
    let t = g.pose_to_matrix(p)?;
    let (coords, valid) = g.project_pixels(d, t, k, Some(depth.valid()))?;
    let warp = g.bilinear_sample(s, coords, Some(&valid))?;
    Ok(WarpedImage {
        image: g.value(warp.image).clone().reshape([c, h, w])?,
        mask: warp.mask,
    })
}
