use serde::{Deserialize, Serialize};

use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Negative-side slope of the leaky ReLU used throughout the discriminator.
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu,
    Tanh,
    Sigmoid,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    fn unary<F, D>(&mut self, name: &'static str, x: Var, f: F, df: D) -> Result<Var>
    where
        F: Fn(f64) -> f64,
        D: Fn(f64, f64) -> f64 + Send + 'static,
    {
        let out = self.value(x).map(f);
        self.record_fn(name, out, &[x], move |ctx| {
            let input = ctx.inputs[0];
            let data = input
                .data()
                .iter()
                .zip(ctx.output.data())
                .zip(ctx.grad.data())
                .map(|((&x, &y), &g)| g * df(x, y))
                .collect();
            Ok(vec![Some(Tensor::new(input.shape().to_vec(), data)?)])
        })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        self.record_fn("add", out, &[a, b], |ctx| {
            Ok(vec![Some(ctx.grad.clone()), Some(ctx.grad.clone())])
        })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        self.record_fn("sub", out, &[a, b], |ctx| {
            Ok(vec![Some(ctx.grad.clone()), Some(ctx.grad.map(|g| -g))])
        })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        self.record_fn("mul", out, &[a, b], |ctx| {
            let ga = ctx.needs[0]
                .then(|| ctx.grad.zip_map(ctx.inputs[1], |g, y| g * y))
                .transpose()?;
            let gb = ctx.needs[1]
                .then(|| ctx.grad.zip_map(ctx.inputs[0], |g, x| g * x))
                .transpose()?;
            Ok(vec![ga, gb])
        })
    }

    /// `scale * x + shift`, elementwise.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Result<Var> {
        self.unary("affine", x, move |v| scale * v + shift, move |_, _| scale)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        self.affine(x, s, 0.0)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(x).sum());
        self.record_fn("sum", out, &[x], |ctx| {
            let g = ctx.grad.data()[0];
            Ok(vec![Some(Tensor::full(ctx.inputs[0].shape().to_vec(), g))])
        })
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len();
        if n == 0 {
            return Err(Error::Shape("mean of an empty tensor".into()));
        }
        let s = self.sum(x)?;
        self.scale(s, 1.0 / n as f64)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary(
            "relu",
            x,
            |v| v.max(0.0),
            |x, _| if x > 0.0 { 1.0 } else { 0.0 },
        )
    }

    pub fn leaky_relu(&mut self, x: Var) -> Result<Var> {
        self.unary(
            "leaky_relu",
            x,
            |v| if v > 0.0 { v } else { LEAKY_SLOPE * v },
            |x, _| if x > 0.0 { 1.0 } else { LEAKY_SLOPE },
        )
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary("tanh", x, f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary("sigmoid", x, sigmoid, |_, y| y * (1.0 - y))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Result<Var> {
        match kind {
            Activation::Relu => self.relu(x),
            Activation::LeakyRelu => self.leaky_relu(x),
            Activation::Tanh => self.tanh(x),
            Activation::Sigmoid => self.sigmoid(x),
        }
    }

    /// `ln(clamp(x, lo, hi))`; zero gradient where the clamp is active.
    pub fn ln_clamped(&mut self, x: Var, lo: f64, hi: f64) -> Result<Var> {
        self.unary(
            "ln_clamped",
            x,
            move |v| v.clamp(lo, hi).ln(),
            move |x, _| if x > lo && x < hi { 1.0 / x } else { 0.0 },
        )
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape.to_vec())?;
        self.record_fn("reshape", out, &[x], |ctx| {
            Ok(vec![Some(
                ctx.grad.clone().reshape(ctx.inputs[0].shape().to_vec())?,
            )])
        })
    }

    /// `a [m, k] @ b [k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        av.expect_ndim(2, "matmul")?;
        bv.expect_ndim(2, "matmul")?;
        let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
        if bv.shape()[0] != k {
            return Err(Error::Shape(format!(
                "matmul inner dims differ: {:?} @ {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let out = Tensor::new([m, n], matmul_raw(av.data(), bv.data(), m, k, n))?;
        self.record_fn("matmul", out, &[a, b], move |ctx| {
            let (a, b, g) = (ctx.inputs[0].data(), ctx.inputs[1].data(), ctx.grad.data());
            let ga = ctx.needs[0]
                .then(|| {
                    let mut ga = vec![0.0; m * k];
                    for i in 0..m {
                        for j in 0..n {
                            let gij = g[i * n + j];
                            for p in 0..k {
                                ga[i * k + p] += gij * b[p * n + j];
                            }
                        }
                    }
                    Tensor::new([m, k], ga)
                })
                .transpose()?;
            let gb = ctx.needs[1]
                .then(|| {
                    let mut gb = vec![0.0; k * n];
                    for i in 0..m {
                        for p in 0..k {
                            let aip = a[i * k + p];
                            for j in 0..n {
                                gb[p * n + j] += aip * g[i * n + j];
                            }
                        }
                    }
                    Tensor::new([k, n], gb)
                })
                .transpose()?;
            Ok(vec![ga, gb])
        })
    }

    /// Affine map `x [B, I] @ weight[O, I]^T + bias[O]`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(weight), self.value(bias));
        xv.expect_ndim(2, "linear input")?;
        wv.expect_ndim(2, "linear weight")?;
        let (batch, fan_in) = (xv.shape()[0], xv.shape()[1]);
        let fan_out = wv.shape()[0];
        if wv.shape()[1] != fan_in || bv.shape() != [fan_out] {
            return Err(Error::Shape(format!(
                "linear: input {:?}, weight {:?}, bias {:?}",
                xv.shape(),
                wv.shape(),
                bv.shape()
            )));
        }
        let (xd, wd, bd) = (xv.data(), wv.data(), bv.data());
        let mut out = vec![0.0; batch * fan_out];
        for r in 0..batch {
            for o in 0..fan_out {
                let row = &wd[o * fan_in..(o + 1) * fan_in];
                let xr = &xd[r * fan_in..(r + 1) * fan_in];
                out[r * fan_out + o] = bd[o] + row.iter().zip(xr).map(|(w, x)| w * x).sum::<f64>();
            }
        }
        let out = Tensor::new([batch, fan_out], out)?;
        self.record_fn("linear", out, &[x, weight, bias], move |ctx| {
            let (xd, wd, g) = (ctx.inputs[0].data(), ctx.inputs[1].data(), ctx.grad.data());
            let mut gx = vec![0.0; batch * fan_in];
            let mut gw = vec![0.0; fan_out * fan_in];
            let mut gb = vec![0.0; fan_out];
            for r in 0..batch {
                for o in 0..fan_out {
                    let go = g[r * fan_out + o];
                    gb[o] += go;
                    for i in 0..fan_in {
                        gx[r * fan_in + i] += go * wd[o * fan_in + i];
                        gw[o * fan_in + i] += go * xd[r * fan_in + i];
                    }
                }
            }
            Ok(vec![
                Some(Tensor::new([batch, fan_in], gx)?),
                Some(Tensor::new([fan_out, fan_in], gw)?),
                Some(Tensor::new([fan_out], gb)?),
            ])
        })
    }

    /// Slice `len` entries starting at `start` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        let shape = xv.shape().to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(Error::Shape(format!(
                "narrow axis {axis} [{start}, {}) out of range for {:?}",
                start + len,
                shape
            )));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let dim = shape[axis];
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * dim + start) * inner;
            out.extend_from_slice(&xv.data()[base..base + len * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let out = Tensor::new(out_shape, out)?;
        self.record_fn("narrow", out, &[x], move |ctx| {
            let mut gx = Tensor::zeros(shape.clone());
            let g = ctx.grad.data();
            for o in 0..outer {
                let base = (o * dim + start) * inner;
                gx.data_mut()[base..base + len * inner]
                    .copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            Ok(vec![Some(gx)])
        })
    }

    /// Concatenate along `axis`; all other dims must agree.
    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = xs
            .first()
            .ok_or_else(|| Error::Shape("concat of zero tensors".into()))?;
        let base_shape = self.shape(*first).to_vec();
        if axis >= base_shape.len() {
            return Err(Error::Shape(format!(
                "concat axis {axis} for {base_shape:?}"
            )));
        }
        let mut dims = Vec::with_capacity(xs.len());
        for &v in xs {
            let s = self.shape(v);
            let compatible = s.len() == base_shape.len()
                && s.iter()
                    .zip(&base_shape)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::Shape(format!(
                    "concat: {:?} incompatible with {:?} on axis {axis}",
                    s, base_shape
                )));
            }
            dims.push(s[axis]);
        }
        let outer: usize = base_shape[..axis].iter().product();
        let inner: usize = base_shape[axis + 1..].iter().product();
        let total: usize = dims.iter().sum();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (&v, &d) in xs.iter().zip(&dims) {
                let data = self.value(v).data();
                out.extend_from_slice(&data[o * d * inner..(o + 1) * d * inner]);
            }
        }
        let mut out_shape = base_shape;
        out_shape[axis] = total;
        let out = Tensor::new(out_shape, out)?;
        self.record_fn("concat", out, xs, move |ctx| {
            let g = ctx.grad.data();
            let mut grads = Vec::with_capacity(dims.len());
            let mut offset = 0;
            for (input, &d) in ctx.inputs.iter().zip(&dims) {
                let mut gi = Vec::with_capacity(input.len());
                for o in 0..outer {
                    let base = (o * total + offset) * inner;
                    gi.extend_from_slice(&g[base..base + d * inner]);
                }
                grads.push(Some(Tensor::new(input.shape().to_vec(), gi)?));
                offset += d;
            }
            Ok(grads)
        })
    }

    /// Mean over the spatial axes: `[N, C, H, W] -> [N, C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let [n, c, h, w] = self.value(x).dims4("global_avg_pool")?;
        let hw = h * w;
        let out: Vec<f64> = self
            .value(x)
            .data()
            .chunks(hw)
            .map(|plane| plane.iter().sum::<f64>() / hw as f64)
            .collect();
        let out = Tensor::new([n, c], out)?;
        self.record_fn("global_avg_pool", out, &[x], move |ctx| {
            let mut gx = Vec::with_capacity(n * c * hw);
            for &g in ctx.grad.data() {
                gx.extend(std::iter::repeat_n(g / hw as f64, hw));
            }
            Ok(vec![Some(Tensor::new([n, c, h, w], gx)?)])
        })
    }
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let aip = a[i * k + p];
            for j in 0..n {
                out[i * n + j] += aip * b[p * n + j];
            }
        }
    }
    out
}
