//! Central finite-difference checks of every differentiable op and of the
//! composed reconstruction pipeline.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, DisparityRange};
use crate::tensor::{BackwardCtx, BatchNormMode, Function, Graph, LstmWeights, Tensor, Var};
use crate::training::{gan_losses, total_loss};
use crate::view_synthesis::photometric_loss;

pub const OP_TOLERANCE: f64 = 1e-4;
pub const PIPELINE_TOLERANCE: f64 = 1e-3;
pub const FD_STEP: f64 = 1e-5;

/// Every op name a [`Graph`] can record; each gets its own row.
pub const REGISTERED_OPS: [&str; 25] = [
    "add",
    "sub",
    "mul",
    "affine",
    "sum",
    "relu",
    "leaky_relu",
    "tanh",
    "sigmoid",
    "ln_clamped",
    "reshape",
    "matmul",
    "linear",
    "narrow",
    "concat",
    "global_avg_pool",
    "conv2d",
    "conv_transpose2d",
    "batch_norm",
    "disparity_to_depth",
    "pose_to_matrix",
    "project_pixels",
    "bilinear_sample",
    "masked_l1_mean",
    "masked_composite",
];

/// Deliberate backward bugs used to confirm that the checker catches them.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Fault {
    #[default]
    None,
    /// Negates the gradient flowing out of bilinear sampling.
    BilinearSign,
}

impl std::str::FromStr for Fault {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Fault::None),
            "bilinear-sign" => Ok(Fault::BilinearSign),
            other => Err(Error::Config(format!("unknown fault {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub max_rel_err: f64,
    pub tolerance: f64,
    /// Ops recorded by the checked computation.
    pub ops: Vec<&'static str>,
}

impl CheckRow {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradcheckReport {
    pub rows: Vec<CheckRow>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(CheckRow::passed)
    }

    pub fn row(&self, name: &str) -> Option<&CheckRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<20} {:>12} {:>9}  status", "op", "max rel err", "tol")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<20} {:>12.3e} {:>9.0e}  {}",
                r.name,
                r.max_rel_err,
                r.tolerance,
                if r.passed() { "ok" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

struct Negate;

impl Function for Negate {
    fn name(&self) -> &'static str {
        "injected_fault"
    }

    fn backward(&self, ctx: &BackwardCtx<'_>) -> Result<Vec<Option<Tensor>>> {
        Ok(vec![Some(ctx.grad.map(|v| -v))])
    }
}

fn inject(g: &mut Graph, fault: Fault, x: Var) -> Result<Var> {
    match fault {
        Fault::None => Ok(x),
        Fault::BilinearSign => {
            let value = g.value(x).clone();
            g.record(value, &[x], Box::new(Negate))
        }
    }
}

/// One input of a check: its value and whether it is differentiated.
struct Input {
    value: Tensor,
    diff: bool,
}

fn diff(value: Tensor) -> Input {
    Input { value, diff: true }
}

fn fixed(value: Tensor) -> Input {
    Input { value, diff: false }
}

type Build<'a> = dyn Fn(&mut Graph, &[Var]) -> Result<Var> + 'a;

/// Compares the backward pass of `sum(w * build(inputs))` for random `w`
/// against central differences, input by input. The error of one input is
/// `|analytic - numeric|_2 / max(|analytic|_2, |numeric|_2)`.
fn check(
    name: &str,
    tolerance: f64,
    inputs: &[Input],
    build: &Build<'_>,
    rng: &mut ChaCha8Rng,
) -> Result<CheckRow> {
    let forward = |g: &mut Graph, values: &[Tensor], leaves: bool| -> Result<(Vec<Var>, Var)> {
        let vars: Vec<Var> = values
            .iter()
            .zip(inputs)
            .map(|(v, inp)| {
                if leaves && inp.diff {
                    g.leaf(v.clone())
                } else {
                    g.constant(v.clone())
                }
            })
            .collect();
        let out = build(g, &vars)?;
        Ok((vars, out))
    };
    let base: Vec<Tensor> = inputs.iter().map(|i| i.value.clone()).collect();

    let mut g = Graph::new();
    let (vars, out) = forward(&mut g, &base, true)?;
    let weights = Tensor::from_fn(g.shape(out).to_vec(), |_| rng.random_range(-1.0..1.0));
    let projected = |t: &Tensor| t.dot(&weights);
    let w = g.constant(weights.clone());
    let prod = g.mul(out, w)?;
    let loss = g.sum(prod)?;
    g.backward(loss)?;
    let ops: Vec<&'static str> = g.op_names().collect();

    let mut worst: f64 = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        if !input.diff {
            continue;
        }
        let analytic = g
            .grad(vars[k])
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(input.value.shape().to_vec()));
        let mut numeric = Vec::with_capacity(input.value.len());
        let mut values = base.clone();
        for i in 0..input.value.len() {
            let x = base[k].data()[i];
            let mut eval = |v: f64| -> Result<f64> {
                values[k].data_mut()[i] = v;
                let mut fg = Graph::new();
                let (_, out) = forward(&mut fg, &values, false)?;
                projected(fg.value(out))
            };
            let (plus, minus) = (eval(x + FD_STEP)?, eval(x - FD_STEP)?);
            values[k].data_mut()[i] = x;
            numeric.push((plus - minus) / (2.0 * FD_STEP));
        }
        let diff_norm = analytic
            .data()
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a - n).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = norm(analytic.data()).max(norm(&numeric)).max(1e-10);
        worst = worst.max(diff_norm / scale);
    }
    Ok(CheckRow {
        name: name.to_string(),
        max_rel_err: worst,
        tolerance,
        ops,
    })
}

fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(lo..hi))
}

/// Values with magnitude in `[0.1, 1)` and random sign, away from kinks at 0.
fn signed(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| {
        let m = rng.random_range(0.1..1.0);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

fn scalar_pair(g: &mut Graph, a: Var, b: Var) -> Result<Var> {
    let a = g.reshape(a, &[1])?;
    let b = g.reshape(b, &[1])?;
    g.concat(&[a, b], 0)
}

/// Runs every check. `fault` deliberately breaks one backward pass.
pub fn run(seed: u64, fault: Fault) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;
    let tol = OP_TOLERANCE;
    let mut rows = Vec::new();

    let (a, b) = (
        uniform(&[2, 3], -1.0, 1.0, r),
        uniform(&[2, 3], -1.0, 1.0, r),
    );
    rows.push(check(
        "add",
        tol,
        &[diff(a.clone()), diff(b.clone())],
        &|g, v| g.add(v[0], v[1]),
        r,
    )?);
    rows.push(check(
        "sub",
        tol,
        &[diff(a.clone()), diff(b.clone())],
        &|g, v| g.sub(v[0], v[1]),
        r,
    )?);
    rows.push(check(
        "mul",
        tol,
        &[diff(a.clone()), diff(b)],
        &|g, v| g.mul(v[0], v[1]),
        r,
    )?);
    rows.push(check(
        "affine",
        tol,
        &[diff(a.clone())],
        &|g, v| g.affine(v[0], -1.7, 0.3),
        r,
    )?);
    rows.push(check(
        "sum",
        tol,
        &[diff(a.clone())],
        &|g, v| g.sum(v[0]),
        r,
    )?);
    let s = signed(&[3, 4], r);
    rows.push(check(
        "relu",
        tol,
        &[diff(s.clone())],
        &|g, v| g.relu(v[0]),
        r,
    )?);
    rows.push(check(
        "leaky_relu",
        tol,
        &[diff(s.clone())],
        &|g, v| g.leaky_relu(v[0]),
        r,
    )?);
    rows.push(check(
        "tanh",
        tol,
        &[diff(s.clone())],
        &|g, v| g.tanh(v[0]),
        r,
    )?);
    rows.push(check(
        "sigmoid",
        tol,
        &[diff(s)],
        &|g, v| g.sigmoid(v[0]),
        r,
    )?);
    let p = uniform(&[2, 4], 0.2, 0.9, r);
    rows.push(check(
        "ln_clamped",
        tol,
        &[diff(p)],
        &|g, v| g.ln_clamped(v[0], 1e-7, 1.0),
        r,
    )?);
    rows.push(check(
        "reshape",
        tol,
        &[diff(a)],
        &|g, v| g.reshape(v[0], &[3, 2]),
        r,
    )?);

    let (m1, m2) = (
        uniform(&[3, 4], -1.0, 1.0, r),
        uniform(&[4, 2], -1.0, 1.0, r),
    );
    rows.push(check(
        "matmul",
        tol,
        &[diff(m1), diff(m2)],
        &|g, v| g.matmul(v[0], v[1]),
        r,
    )?);
    let (x, w, bias) = (
        uniform(&[2, 4], -1.0, 1.0, r),
        uniform(&[3, 4], -1.0, 1.0, r),
        uniform(&[3], -1.0, 1.0, r),
    );
    rows.push(check(
        "linear",
        tol,
        &[diff(x), diff(w), diff(bias)],
        &|g, v| g.linear(v[0], v[1], v[2]),
        r,
    )?);
    let t = uniform(&[2, 5, 3], -1.0, 1.0, r);
    rows.push(check(
        "narrow",
        tol,
        &[diff(t.clone())],
        &|g, v| g.narrow(v[0], 1, 1, 3),
        r,
    )?);
    let t2 = uniform(&[2, 2, 3], -1.0, 1.0, r);
    rows.push(check(
        "concat",
        tol,
        &[diff(t), diff(t2)],
        &|g, v| g.concat(&[v[0], v[1]], 1),
        r,
    )?);
    let img = uniform(&[2, 3, 3, 4], -1.0, 1.0, r);
    rows.push(check(
        "global_avg_pool",
        tol,
        &[diff(img)],
        &|g, v| g.global_avg_pool(v[0]),
        r,
    )?);

    let (x, w, bias) = (
        uniform(&[2, 2, 5, 5], -1.0, 1.0, r),
        uniform(&[3, 2, 3, 3], -1.0, 1.0, r),
        uniform(&[3], -1.0, 1.0, r),
    );
    rows.push(check(
        "conv2d",
        tol,
        &[diff(x), diff(w), diff(bias)],
        &|g, v| g.conv2d(v[0], v[1], Some(v[2]), 2, 1),
        r,
    )?);
    let (x, w, bias) = (
        uniform(&[1, 2, 3, 3], -1.0, 1.0, r),
        uniform(&[2, 3, 4, 4], -1.0, 1.0, r),
        uniform(&[3], -1.0, 1.0, r),
    );
    rows.push(check(
        "conv_transpose2d",
        tol,
        &[diff(x), diff(w), diff(bias)],
        &|g, v| g.conv_transpose2d(v[0], v[1], Some(v[2]), 2, 1, [1, 0]),
        r,
    )?);

    let (x, gamma, shift) = (
        uniform(&[3, 2, 2, 2], -1.0, 1.0, r),
        uniform(&[2], 0.5, 1.5, r),
        uniform(&[2], -0.5, 0.5, r),
    );
    rows.push(check(
        "batch_norm",
        tol,
        &[diff(x.clone()), diff(gamma.clone()), diff(shift.clone())],
        &|g, v| {
            Ok(g.batch_norm(v[0], v[1], v[2], BatchNormMode::Train, 1e-5)?
                .0)
        },
        r,
    )?);
    let (mean, var) = ([0.1, -0.2], [0.8, 1.3]);
    rows.push(check(
        "batch_norm_eval",
        tol,
        &[diff(x), diff(gamma), diff(shift)],
        &|g, v| {
            let mode = BatchNormMode::Eval {
                mean: &mean,
                var: &var,
            };
            Ok(g.batch_norm(v[0], v[1], v[2], mode, 1e-5)?.0)
        },
        r,
    )?);

    let (batch, inp, hid) = (2, 3, 2);
    let lstm_inputs = [
        diff(uniform(&[3, batch, inp], -1.0, 1.0, r)),
        diff(uniform(&[4 * hid, inp], -0.8, 0.8, r)),
        diff(uniform(&[4 * hid, hid], -0.8, 0.8, r)),
        diff(uniform(&[4 * hid], -0.5, 0.5, r)),
    ];
    rows.push(check(
        "lstm_cell_x3",
        tol,
        &lstm_inputs,
        &|g, v| {
            let weights = LstmWeights {
                w_ih: v[1],
                w_hh: v[2],
                bias: v[3],
            };
            let mut h = g.constant(Tensor::zeros([batch, hid]));
            let mut c = g.constant(Tensor::zeros([batch, hid]));
            for step in 0..3 {
                let xs = g.narrow(v[0], 0, step, 1)?;
                let xs = g.reshape(xs, &[batch, inp])?;
                (h, c) = g.lstm_cell(xs, h, c, &weights)?;
            }
            g.concat(&[h, c], 1)
        },
        r,
    )?);

    let raw = uniform(&[2, 1, 3, 3], -0.9, 0.9, r);
    rows.push(check(
        "disparity_to_depth",
        tol,
        &[diff(raw)],
        &|g, v| g.disparity_to_depth(v[0], DisparityRange::default()),
        r,
    )?);
    let poses = uniform(&[2, 6], -0.4, 0.4, r);
    rows.push(check(
        "pose_to_matrix",
        tol,
        &[diff(poses)],
        &|g, v| g.pose_to_matrix(v[0]),
        r,
    )?);

    let k = CameraIntrinsics::new(4.0, 4.5, 2.0, 1.5, 5, 4)?;
    let depth = uniform(&[1, 1, 4, 5], 1.5, 3.0, r);
    let pose = Tensor::new([1, 6], vec![0.05, -0.03, 0.1, 0.02, -0.04, 0.03])?;
    let transform = {
        let mut g = Graph::new();
        let p = g.constant(pose);
        let t = g.pose_to_matrix(p)?;
        g.value(t).clone()
    };
    rows.push(check(
        "project_pixels",
        tol,
        &[diff(depth), diff(transform)],
        &|g, v| Ok(g.project_pixels(v[0], v[1], &k, None)?.0),
        r,
    )?);

    let src = uniform(&[1, 2, 5, 6], 0.0, 1.0, r);
    let coords = Tensor::from_fn([1, 3, 3, 2], |i| {
        let limit = if i % 2 == 0 { 5 } else { 4 };
        r.random_range(0..limit) as f64 + r.random_range(0.1..0.9)
    });
    rows.push(check(
        "bilinear_sample",
        tol,
        &[diff(src), diff(coords)],
        &|g, v| {
            let out = g.bilinear_sample(v[0], v[1], None)?.image;
            inject(g, fault, out)
        },
        r,
    )?);

    let a = uniform(&[2, 2, 3, 3], 0.0, 1.0, r);
    let offset = signed(&[2, 2, 3, 3], r);
    let b = a.zip_map(&offset, |x, o| x + 0.5 * o)?;
    let mut mask: Vec<bool> = (0..18).map(|_| r.random_bool(0.7)).collect();
    mask[0] = true;
    rows.push(check(
        "masked_l1_mean",
        tol,
        &[diff(a.clone()), diff(b.clone())],
        &|g, v| g.masked_l1_mean(v[0], v[1], &mask),
        r,
    )?);
    rows.push(check(
        "masked_composite",
        tol,
        &[diff(a), diff(b)],
        &|g, v| g.masked_composite(v[0], v[1], &mask),
        r,
    )?);

    let (d_real, d_fake) = (uniform(&[4], 0.1, 0.9, r), uniform(&[4], 0.1, 0.9, r));
    rows.push(check(
        "gan_losses",
        tol,
        &[diff(d_real), diff(d_fake)],
        &|g, v| {
            let (d, a) = gan_losses(g, v[0], v[1])?;
            scalar_pair(g, d, a)
        },
        r,
    )?);
    let (lg, ld) = (uniform(&[1], 0.0, 1.0, r), uniform(&[1], 0.0, 1.0, r));
    rows.push(check(
        "total_loss",
        tol,
        &[diff(lg), diff(ld)],
        &|g, v| {
            let lg = g.sum(v[0])?;
            let ld = g.sum(v[1])?;
            total_loss(g, lg, ld, 0.37)
        },
        r,
    )?);

    rows.push(pipeline(fault, r)?);
    Ok(GradcheckReport { rows })
}

/// Pose to matrix, projection, bilinear sampling, photometric loss, a small
/// convolutional discriminator and the balanced total, on 8x8 images.
fn pipeline(fault: Fault, r: &mut ChaCha8Rng) -> Result<CheckRow> {
    let k = CameraIntrinsics::new(6.0, 6.0, 3.5, 3.5, 8, 8)?;
    let inputs = [
        diff(Tensor::new(
            [1, 6],
            vec![0.04, -0.02, 0.05, 0.01, -0.02, 0.015],
        )?),
        diff(uniform(&[1, 1, 8, 8], 2.0, 3.0, r)),
        diff(uniform(&[1, 3, 8, 8], 0.0, 1.0, r)),
        diff(uniform(&[1, 3, 3, 3], -0.5, 0.5, r)),
        fixed(uniform(&[1, 3, 8, 8], 0.0, 1.0, r)),
    ];
    check(
        "pipeline",
        PIPELINE_TOLERANCE,
        &inputs,
        &|g, v| {
            let (pose, depth, src, w_d, target) = (v[0], v[1], v[2], v[3], v[4]);
            let t = g.pose_to_matrix(pose)?;
            let (coords, valid) = g.project_pixels(depth, t, &k, None)?;
            let mut warp = g.bilinear_sample(src, coords, Some(&valid))?;
            warp.image = inject(g, fault, warp.image)?;
            let l_g = photometric_loss(g, target, std::slice::from_ref(&warp), true)?;
            let fake = g.masked_composite(warp.image, target, &warp.mask)?;
            let discriminate = |g: &mut Graph, x: Var| -> Result<Var> {
                let y = g.conv2d(x, w_d, None, 2, 1)?;
                let y = g.global_avg_pool(y)?;
                let y = g.reshape(y, &[1])?;
                g.sigmoid(y)
            };
            let d_real = discriminate(g, target)?;
            let d_fake = discriminate(g, fake)?;
            let (_, g_adv) = gan_losses(g, d_real, d_fake)?;
            total_loss(g, l_g, g_adv, 0.5)
        },
        r,
    )
}
