//! Strided 2-D convolution and its transpose.
//!
//! Both ops connect a "big" spatial grid to a "small" (strided) one through
//! the same index map `big = small * stride - padding + k`. Convolution reads
//! big and writes small; the transpose does the reverse. Weights are laid out
//! `[small_channels, big_channels, kh, kw]` in both cases, which is
//! `[out, in, kh, kw]` for convolution and `[in, out, kh, kw]` for the
//! transpose.

use rayon::prelude::*;

use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
struct Layout {
    batch: usize,
    small_c: usize,
    small_h: usize,
    small_w: usize,
    big_c: usize,
    big_h: usize,
    big_w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
}

impl Layout {
    fn small_len(&self) -> usize {
        self.batch * self.small_c * self.small_h * self.small_w
    }

    fn big_len(&self) -> usize {
        self.batch * self.big_c * self.big_h * self.big_w
    }

    /// Big-grid index for small coordinate `s` and kernel tap `k`, if inside.
    #[inline]
    fn big_coord(&self, s: usize, k: usize, extent: usize) -> Option<usize> {
        let pos = (s * self.stride + k) as isize - self.pad as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }

    /// `small[n, s, y, x] = sum big[n, b, ...] * w[s, b, ky, kx]`.
    fn gather(&self, big: &[f64], weight: &[f64]) -> Vec<f64> {
        let mut small = vec![0.0; self.small_len()];
        let (bh, bw) = (self.big_h, self.big_w);
        let plane_len = self.small_h * self.small_w;
        // one output plane per task; each plane sums in a fixed order
        small
            .par_chunks_mut(plane_len)
            .enumerate()
            .for_each(|(idx, out)| {
                let (n, s) = (idx / self.small_c, idx % self.small_c);
                for b in 0..self.big_c {
                    let plane = &big[(n * self.big_c + b) * bh * bw..][..bh * bw];
                    let w =
                        &weight[(s * self.big_c + b) * self.kh * self.kw..][..self.kh * self.kw];
                    for sy in 0..self.small_h {
                        for ky in 0..self.kh {
                            let Some(by) = self.big_coord(sy, ky, bh) else {
                                continue;
                            };
                            let row = &plane[by * bw..(by + 1) * bw];
                            for sx in 0..self.small_w {
                                let mut acc = 0.0;
                                for kx in 0..self.kw {
                                    if let Some(bx) = self.big_coord(sx, kx, bw) {
                                        acc += row[bx] * w[ky * self.kw + kx];
                                    }
                                }
                                out[sy * self.small_w + sx] += acc;
                            }
                        }
                    }
                }
            });
        small
    }

    /// `big[n, b, ...] += small[n, s, y, x] * w[s, b, ky, kx]`.
    fn scatter(&self, small: &[f64], weight: &[f64]) -> Vec<f64> {
        let mut big = vec![0.0; self.big_len()];
        let (bh, bw) = (self.big_h, self.big_w);
        let small_len = self.small_h * self.small_w;
        big.par_chunks_mut(bh * bw)
            .enumerate()
            .for_each(|(idx, plane)| {
                let (n, b) = (idx / self.big_c, idx % self.big_c);
                for s in 0..self.small_c {
                    let src = &small[(n * self.small_c + s) * small_len..][..small_len];
                    let w =
                        &weight[(s * self.big_c + b) * self.kh * self.kw..][..self.kh * self.kw];
                    for sy in 0..self.small_h {
                        for ky in 0..self.kh {
                            let Some(by) = self.big_coord(sy, ky, bh) else {
                                continue;
                            };
                            for sx in 0..self.small_w {
                                let v = src[sy * self.small_w + sx];
                                for kx in 0..self.kw {
                                    if let Some(bx) = self.big_coord(sx, kx, bw) {
                                        plane[by * bw + bx] += v * w[ky * self.kw + kx];
                                    }
                                }
                            }
                        }
                    }
                }
            });
        big
    }

    /// `dw[s, b, ky, kx] = sum small[n, s, y, x] * big[n, b, ...]`.
    fn weight_grad(&self, small: &[f64], big: &[f64]) -> Vec<f64> {
        let taps = self.kh * self.kw;
        let mut gw = vec![0.0; self.small_c * self.big_c * taps];
        let (bh, bw) = (self.big_h, self.big_w);
        let small_len = self.small_h * self.small_w;
        gw.par_chunks_mut(taps).enumerate().for_each(|(idx, w)| {
            let (s, b) = (idx / self.big_c, idx % self.big_c);
            for n in 0..self.batch {
                let src = &small[(n * self.small_c + s) * small_len..][..small_len];
                let plane = &big[(n * self.big_c + b) * bh * bw..][..bh * bw];
                for ky in 0..self.kh {
                    for sy in 0..self.small_h {
                        let Some(by) = self.big_coord(sy, ky, bh) else {
                            continue;
                        };
                        for kx in 0..self.kw {
                            let mut acc = 0.0;
                            for sx in 0..self.small_w {
                                if let Some(bx) = self.big_coord(sx, kx, bw) {
                                    acc += src[sy * self.small_w + sx] * plane[by * bw + bx];
                                }
                            }
                            w[ky * self.kw + kx] += acc;
                        }
                    }
                }
            }
        });
        gw
    }
}

fn add_channel_bias(data: &mut [f64], bias: &[f64], batch: usize, plane: usize) {
    let c = bias.len();
    for n in 0..batch {
        for (ch, &b) in bias.iter().enumerate() {
            for v in &mut data[(n * c + ch) * plane..][..plane] {
                *v += b;
            }
        }
    }
}

fn channel_bias_grad(grad: &[f64], channels: usize, batch: usize, plane: usize) -> Vec<f64> {
    let mut gb = vec![0.0; channels];
    for n in 0..batch {
        for (ch, acc) in gb.iter_mut().enumerate() {
            *acc += grad[(n * channels + ch) * plane..][..plane]
                .iter()
                .sum::<f64>();
        }
    }
    gb
}

fn check_bias(bias: Option<&Tensor>, channels: usize) -> Result<()> {
    match bias {
        Some(b) if b.shape() != [channels] => Err(Error::Shape(format!(
            "bias shape {:?}, expected [{channels}]",
            b.shape()
        ))),
        _ => Ok(()),
    }
}

/// Spatial output size of a convolution.
pub fn conv_output_size(
    input: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Option<usize> {
    let padded = input + 2 * padding;
    (stride >= 1 && padded >= kernel).then(|| (padded - kernel) / stride + 1)
}

/// Spatial output size of a transposed convolution.
pub fn conv_transpose_output_size(
    input: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> Option<usize> {
    let full = (input.checked_sub(1)?) * stride + kernel + output_padding;
    (stride >= 1 && input >= 1).then_some(full.checked_sub(2 * padding)?)
}

impl Graph {
    /// `input [N, C, H, W]`, `weight [O, C, KH, KW]`, optional `bias [O]`.
    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let [n, c, h, w] = self.value(input).dims4("conv2d input")?;
        let [o, wc, kh, kw] = self.value(weight).dims4("conv2d weight")?;
        if wc != c {
            return Err(Error::Shape(format!(
                "conv2d: input has {c} channels, weight expects {wc}"
            )));
        }
        if stride == 0 {
            return Err(Error::Shape("conv2d: stride must be >= 1".into()));
        }
        check_bias(bias.map(|b| self.value(b)), o)?;
        let (Some(oh), Some(ow)) = (
            conv_output_size(h, kh, stride, padding),
            conv_output_size(w, kw, stride, padding),
        ) else {
            return Err(Error::Shape(format!(
                "conv2d: kernel {kh}x{kw} larger than padded input {h}x{w} (pad {padding})"
            )));
        };
        let layout = Layout {
            batch: n,
            small_c: o,
            small_h: oh,
            small_w: ow,
            big_c: c,
            big_h: h,
            big_w: w,
            kh,
            kw,
            stride,
            pad: padding,
        };
        let mut out = layout.gather(self.value(input).data(), self.value(weight).data());
        if let Some(b) = bias {
            add_channel_bias(&mut out, self.value(b).data(), n, oh * ow);
        }
        let out = Tensor::new([n, o, oh, ow], out)?;
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        self.record_fn("conv2d", out, &inputs, move |ctx| {
            let g = ctx.grad.data();
            let gx = ctx.needs[0]
                .then(|| Tensor::new([n, c, h, w], layout.scatter(g, ctx.inputs[1].data())))
                .transpose()?;
            let gw = ctx.needs[1]
                .then(|| Tensor::new([o, c, kh, kw], layout.weight_grad(g, ctx.inputs[0].data())))
                .transpose()?;
            let mut grads = vec![gx, gw];
            if ctx.inputs.len() == 3 {
                grads.push(Some(Tensor::new([o], channel_bias_grad(g, o, n, oh * ow))?));
            }
            Ok(grads)
        })
    }

    /// `input [N, Ci, H, W]`, `weight [Ci, Co, KH, KW]`, optional `bias [Co]`.
    ///
    /// Output size is `(H - 1) * stride - 2 * padding + KH + output_padding[0]`
    /// rows and likewise for columns with `output_padding[1]`.
    pub fn conv_transpose2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
        output_padding: [usize; 2],
    ) -> Result<Var> {
        let [n, ci, h, w] = self.value(input).dims4("conv_transpose2d input")?;
        let [wci, co, kh, kw] = self.value(weight).dims4("conv_transpose2d weight")?;
        if wci != ci {
            return Err(Error::Shape(format!(
                "conv_transpose2d: input has {ci} channels, weight expects {wci}"
            )));
        }
        if stride == 0 || output_padding.iter().any(|&p| p >= stride) {
            return Err(Error::Shape(format!(
                "conv_transpose2d: stride {stride}, output padding {output_padding:?}"
            )));
        }
        check_bias(bias.map(|b| self.value(b)), co)?;
        let (Some(oh), Some(ow)) = (
            conv_transpose_output_size(h, kh, stride, padding, output_padding[0]),
            conv_transpose_output_size(w, kw, stride, padding, output_padding[1]),
        ) else {
            return Err(Error::Shape(format!(
                "conv_transpose2d: padding {padding} too large for kernel {kh}x{kw}"
            )));
        };
        let layout = Layout {
            batch: n,
            small_c: ci,
            small_h: h,
            small_w: w,
            big_c: co,
            big_h: oh,
            big_w: ow,
            kh,
            kw,
            stride,
            pad: padding,
        };
        let mut out = layout.scatter(self.value(input).data(), self.value(weight).data());
        if let Some(b) = bias {
            add_channel_bias(&mut out, self.value(b).data(), n, oh * ow);
        }
        let out = Tensor::new([n, co, oh, ow], out)?;
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        self.record_fn("conv_transpose2d", out, &inputs, move |ctx| {
            let g = ctx.grad.data();
            let gx = ctx.needs[0]
                .then(|| Tensor::new([n, ci, h, w], layout.gather(g, ctx.inputs[1].data())))
                .transpose()?;
            let gw = ctx.needs[1]
                .then(|| {
                    Tensor::new(
                        [ci, co, kh, kw],
                        layout.weight_grad(ctx.inputs[0].data(), g),
                    )
                })
                .transpose()?;
            let mut grads = vec![gx, gw];
            if ctx.inputs.len() == 3 {
                grads.push(Some(Tensor::new(
                    [co],
                    channel_bias_grad(g, co, n, oh * ow),
                )?));
            }
            Ok(grads)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_fn([1, 1, 4, 4], |i| i as f64 * 0.5 - 3.0));
        let k = g.constant(Tensor::ones([1, 1, 1, 1]));
        let y = g.conv2d(x, k, None, 1, 0).unwrap();
        assert_eq!(g.value(y), g.value(x));
    }

    #[test]
    fn all_ones_sum() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::ones([1, 1, 3, 3]));
        let k = g.constant(Tensor::ones([1, 1, 3, 3]));
        let y = g.conv2d(x, k, None, 1, 0).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 1, 1, 1]);
        assert_eq!(g.value(y).data(), &[9.0]);
    }

    #[test]
    fn delta_input_reproduces_kernel() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::ones([1, 1, 1, 1]));
        let k = g.constant(Tensor::new([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let y = g.conv_transpose2d(x, k, None, 1, 0, [0, 0]).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 1, 2, 2]);
        assert_eq!(g.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn channel_mismatch() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::ones([1, 2, 4, 4]));
        let k = g.constant(Tensor::ones([1, 3, 3, 3]));
        assert!(matches!(g.conv2d(x, k, None, 1, 0), Err(Error::Shape(_))));
        assert!(matches!(g.conv2d(x, x, None, 0, 0), Err(Error::Shape(_))));
    }

    #[test]
    fn output_sizes() {
        assert_eq!(conv_output_size(16, 4, 2, 1), Some(8));
        assert_eq!(conv_output_size(13, 4, 2, 1), Some(6));
        assert_eq!(conv_output_size(2, 5, 1, 0), None);
        assert_eq!(conv_transpose_output_size(6, 4, 2, 1, 1), Some(13));
        assert_eq!(conv_transpose_output_size(2, 2, 2, 0, 0), Some(4));
    }
}
