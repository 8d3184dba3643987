use super::camera::CameraIntrinsics;
use super::depth::DepthMap;
use super::pose::{euler_rotation, euler_rotation_jacobian, Se3};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Transformed points at or below this depth are flagged invalid.
pub const Z_MIN: f64 = 1e-3;

/// Source-view pixel coordinates for every target pixel, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedPixels {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub valid: Vec<bool>,
}

struct Projection<'a> {
    k: &'a CameraIntrinsics,
    /// `[R | t]`, 12 row-major values.
    rt: &'a [f64],
}

impl Projection<'_> {
    /// Returns `(ray, X', (u, v))` for target pixel `(col, row)` at `depth`.
    #[inline]
    fn pixel(
        &self,
        col: usize,
        row: usize,
        depth: f64,
    ) -> ([f64; 3], [f64; 3], Option<(f64, f64)>) {
        let ray = self.k.backproject(col as f64, row as f64);
        let x = [ray[0] * depth, ray[1] * depth, depth];
        let rt = self.rt;
        let mut xp = [0.0; 3];
        for i in 0..3 {
            xp[i] = rt[i * 4] * x[0] + rt[i * 4 + 1] * x[1] + rt[i * 4 + 2] * x[2] + rt[i * 4 + 3];
        }
        (ray, xp, self.k.project(xp, Z_MIN))
    }
}

fn check_size(k: &CameraIntrinsics, h: usize, w: usize) -> Result<()> {
    if k.width != w || k.height != h {
        return Err(Error::Shape(format!(
            "depth is {h}x{w} but intrinsics describe {}x{}",
            k.height, k.width
        )));
    }
    Ok(())
}

/// For each target pixel `p_t`, lifts it to `D(p_t) K^-1 p_t`, moves it by
/// `t_to_s`, and projects with `K`, dividing by the third coordinate.
pub fn project_pixels(
    k: &CameraIntrinsics,
    t_to_s: &Se3,
    depth: &DepthMap,
) -> Result<ProjectedPixels> {
    let (h, w) = (depth.height(), depth.width());
    check_size(k, h, w)?;
    let rt = t_to_s.to_row_major_3x4();
    let proj = Projection { k, rt: &rt };
    let mut out = ProjectedPixels {
        u: vec![-1.0; h * w],
        v: vec![-1.0; h * w],
        valid: vec![false; h * w],
    };
    for row in 0..h {
        for col in 0..w {
            let i = row * w + col;
            if !depth.valid()[i] {
                continue;
            }
            if let (_, _, Some((u, v))) = proj.pixel(col, row, depth.values()[i]) {
                out.u[i] = u;
                out.v[i] = v;
                out.valid[i] = true;
            }
        }
    }
    Ok(out)
}

/// Projects one (possibly fractional) pixel; `None` behind the camera.
pub fn project_point(
    k: &CameraIntrinsics,
    t_to_s: &Se3,
    u: f64,
    v: f64,
    depth: f64,
) -> Option<(f64, f64, f64)> {
    let ray = k.backproject(u, v);
    let p = t_to_s.transform_point([ray[0] * depth, ray[1] * depth, depth]);
    k.project(p, Z_MIN).map(|(u, v)| (u, v, p[2]))
}

impl Graph {
    /// `[B, 6]` pose vectors to `[B, 3, 4]` top rows of their SE(3) matrices.
    pub fn pose_to_matrix(&mut self, poses: Var) -> Result<Var> {
        let pv = self.value(poses);
        if pv.ndim() != 2 || pv.shape()[1] != 6 {
            return Err(Error::Shape(format!(
                "pose_to_matrix expects [B, 6], got {:?}",
                pv.shape()
            )));
        }
        let b = pv.shape()[0];
        let mut out = Vec::with_capacity(b * 12);
        for p in pv.data().chunks(6) {
            let r = euler_rotation(p[3], p[4], p[5]);
            for i in 0..3 {
                out.extend_from_slice(&r[i]);
                out.push(p[i]);
            }
        }
        let out = Tensor::new([b, 3, 4], out)?;
        self.record_fn("pose_to_matrix", out, &[poses], move |ctx| {
            let mut gp = Vec::with_capacity(b * 6);
            for (p, g) in ctx.inputs[0]
                .data()
                .chunks(6)
                .zip(ctx.grad.data().chunks(12))
            {
                gp.extend([g[3], g[7], g[11]]);
                for d in euler_rotation_jacobian(p[3], p[4], p[5]) {
                    let mut acc = 0.0;
                    for i in 0..3 {
                        for j in 0..3 {
                            acc += g[i * 4 + j] * d[i][j];
                        }
                    }
                    gp.push(acc);
                }
            }
            Ok(vec![Some(Tensor::new([b, 6], gp)?)])
        })
    }

    /// Differentiable pixel projection. `depth [B, 1, H, W]`, `transform
    /// [B, 3, 4]`; returns source coordinates `[B, H, W, 2]` as `(u, v)` and a
    /// `B*H*W` mask of pixels whose transformed depth exceeds [`Z_MIN`] (and,
    /// if given, whose input depth is valid). Invalid pixels get
    /// coordinates `(-1, -1)` and no gradient.
    pub fn project_pixels(
        &mut self,
        depth: Var,
        transform: Var,
        k: &CameraIntrinsics,
        depth_valid: Option<&[bool]>,
    ) -> Result<(Var, Vec<bool>)> {
        let [b, c, h, w] = self.value(depth).dims4("project_pixels depth")?;
        if c != 1 {
            return Err(Error::Shape(format!(
                "depth must have one channel, got {c}"
            )));
        }
        if self.shape(transform) != [b, 3, 4] {
            return Err(Error::Shape(format!(
                "transform must be [{b}, 3, 4], got {:?}",
                self.shape(transform)
            )));
        }
        check_size(k, h, w)?;
        if let Some(m) = depth_valid {
            if m.len() != b * h * w {
                return Err(Error::Shape(format!(
                    "depth mask has {} entries for {} pixels",
                    m.len(),
                    b * h * w
                )));
            }
        }
        let k = *k;
        let hw = h * w;
        let mut coords = vec![-1.0; b * hw * 2];
        let mut mask = vec![false; b * hw];
        {
            let dv = self.value(depth).data();
            let tv = self.value(transform).data();
            for n in 0..b {
                let proj = Projection {
                    k: &k,
                    rt: &tv[n * 12..(n + 1) * 12],
                };
                for row in 0..h {
                    for col in 0..w {
                        let i = n * hw + row * w + col;
                        if depth_valid.is_some_and(|m| !m[i]) {
                            continue;
                        }
                        if let (_, _, Some((u, v))) = proj.pixel(col, row, dv[i]) {
                            coords[2 * i] = u;
                            coords[2 * i + 1] = v;
                            mask[i] = true;
                        }
                    }
                }
            }
        }
        let out = Tensor::new([b, h, w, 2], coords)?;
        let saved_mask = mask.clone();
        let var = self.record_fn("project_pixels", out, &[depth, transform], move |ctx| {
            let dv = ctx.inputs[0].data();
            let tv = ctx.inputs[1].data();
            let g = ctx.grad.data();
            let mut gd = vec![0.0; b * hw];
            let mut gt = vec![0.0; b * 12];
            for n in 0..b {
                let rt: &[f64] = &tv[n * 12..(n + 1) * 12];
                let proj = Projection { k: &k, rt };
                let grt: &mut [f64] = &mut gt[n * 12..(n + 1) * 12];
                for row in 0..h {
                    for col in 0..w {
                        let i = n * hw + row * w + col;
                        if !saved_mask[i] {
                            continue;
                        }
                        let d = dv[i];
                        let (ray, xp, _) = proj.pixel(col, row, d);
                        let (gu, gv) = (g[2 * i], g[2 * i + 1]);
                        let iz = 1.0 / xp[2];
                        let gx = [
                            gu * k.fx * iz,
                            gv * k.fy * iz,
                            -(gu * k.fx * xp[0] + gv * k.fy * xp[1]) * iz * iz,
                        ];
                        let x = [ray[0] * d, ray[1] * d, d];
                        let mut g_depth = 0.0;
                        for r in 0..3 {
                            for cidx in 0..3 {
                                grt[r * 4 + cidx] += gx[r] * x[cidx];
                                g_depth += gx[r] * rt[r * 4 + cidx] * ray[cidx];
                            }
                            grt[r * 4 + 3] += gx[r];
                        }
                        gd[i] = g_depth;
                    }
                }
            }
            Ok(vec![
                Some(Tensor::new([b, 1, h, w], gd)?),
                Some(Tensor::new([b, 3, 4], gt)?),
            ])
        })?;
        Ok((var, mask))
    }
}

/// Stacks `[R | t]` rows of several transforms into a `[B, 3, 4]` tensor.
pub fn transforms_to_tensor(ts: &[Se3]) -> Tensor {
    let data: Vec<f64> = ts.iter().flat_map(|t| t.to_row_major_3x4()).collect();
    Tensor::new([ts.len(), 3, 4], data).expect("12 values per transform")
}
