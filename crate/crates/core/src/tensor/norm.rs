use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Statistics source for [`Graph::batch_norm`].
#[derive(Clone, Copy, Debug)]
pub enum BatchNormMode<'a> {
    /// Normalize with the statistics of the current batch.
    Train,
    /// Normalize with externally tracked running statistics.
    Eval { mean: &'a [f64], var: &'a [f64] },
}

/// Per-channel statistics of a training-mode batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased (population) variance, the one used for normalization.
    pub var: Vec<f64>,
    /// Elements per channel that contributed.
    pub count: usize,
}

impl BatchStats {
    pub fn unbiased_var(&self) -> Vec<f64> {
        let n = self.count as f64;
        let factor = if self.count > 1 { n / (n - 1.0) } else { 1.0 };
        self.var.iter().map(|v| v * factor).collect()
    }
}

impl Graph {
    /// Per-channel normalization of `x [N, C, ...]` followed by
    /// `gamma * x_hat + shift`.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        shift: Var,
        mode: BatchNormMode<'_>,
        eps: f64,
    ) -> Result<(Var, Option<BatchStats>)> {
        let xv = self.value(x);
        let shape = xv.shape().to_vec();
        if shape.len() < 2 {
            return Err(Error::Shape(format!(
                "batch_norm needs [N, C, ...], got {shape:?}"
            )));
        }
        let (n, c) = (shape[0], shape[1]);
        let inner: usize = shape[2..].iter().product();
        let count = n * inner;
        if count == 0 {
            return Err(Error::Shape("batch_norm on an empty batch".into()));
        }
        if self.value(gamma).shape() != [c] || self.value(shift).shape() != [c] {
            return Err(Error::Shape(format!(
                "batch_norm: {c} channels but gamma {:?}, shift {:?}",
                self.value(gamma).shape(),
                self.value(shift).shape()
            )));
        }
        let data = xv.data();
        let at = |b: usize, ch: usize| &data[(b * c + ch) * inner..][..inner];

        let (mean, var, train) = match mode {
            BatchNormMode::Train => {
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for ch in 0..c {
                    let m =
                        (0..n).map(|b| at(b, ch).iter().sum::<f64>()).sum::<f64>() / count as f64;
                    let v = (0..n)
                        .map(|b| at(b, ch).iter().map(|x| (x - m) * (x - m)).sum::<f64>())
                        .sum::<f64>()
                        / count as f64;
                    mean[ch] = m;
                    var[ch] = v;
                }
                (mean, var, true)
            }
            BatchNormMode::Eval { mean, var } => {
                if mean.len() != c || var.len() != c {
                    return Err(Error::Shape(format!(
                        "batch_norm running stats have {} / {} entries for {c} channels",
                        mean.len(),
                        var.len()
                    )));
                }
                (mean.to_vec(), var.to_vec(), false)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let (gd, sd) = (self.value(gamma).data(), self.value(shift).data());
        let mut x_hat = vec![0.0; data.len()];
        let mut out = vec![0.0; data.len()];
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * inner;
                for i in 0..inner {
                    let xh = (data[base + i] - mean[ch]) * inv_std[ch];
                    x_hat[base + i] = xh;
                    out[base + i] = gd[ch] * xh + sd[ch];
                }
            }
        }
        let out = Tensor::new(shape.clone(), out)?;
        let stats = train.then(|| BatchStats {
            mean: mean.clone(),
            var: var.clone(),
            count,
        });
        let var_out = self.record_fn("batch_norm", out, &[x, gamma, shift], move |ctx| {
            let g = ctx.grad.data();
            let gamma = ctx.inputs[1].data();
            let mut g_gamma = vec![0.0; c];
            let mut g_shift = vec![0.0; c];
            for b in 0..n {
                for ch in 0..c {
                    let base = (b * c + ch) * inner;
                    for i in 0..inner {
                        g_shift[ch] += g[base + i];
                        g_gamma[ch] += g[base + i] * x_hat[base + i];
                    }
                }
            }
            let gx = ctx.needs[0].then(|| {
                let mut gx = vec![0.0; g.len()];
                let m = count as f64;
                for b in 0..n {
                    for ch in 0..c {
                        let base = (b * c + ch) * inner;
                        let scale = gamma[ch] * inv_std[ch];
                        for i in 0..inner {
                            gx[base + i] = if train {
                                scale / m
                                    * (m * g[base + i]
                                        - g_shift[ch]
                                        - x_hat[base + i] * g_gamma[ch])
                            } else {
                                scale * g[base + i]
                            };
                        }
                    }
                }
                gx
            });
            Ok(vec![
                gx.map(|gx| Tensor::new(shape.clone(), gx)).transpose()?,
                Some(Tensor::new([c], g_gamma)?),
                Some(Tensor::new([c], g_shift)?),
            ])
        })?;
        Ok((var_out, stats))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn channel_stats(t: &Tensor, ch: usize) -> (f64, f64) {
        let [n, c, h, w] = t.dims4("test").unwrap();
        let vals: Vec<f64> = (0..n)
            .flat_map(|b| t.data()[(b * c + ch) * h * w..][..h * w].to_vec())
            .collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
        (m, v.sqrt())
    }

    #[test]
    fn normalizes_each_channel() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_fn([4, 3, 5, 5], |_| {
            rng.random_range(-3.0..7.0)
        }));
        let gamma = g.constant(Tensor::ones([3]));
        let shift = g.constant(Tensor::zeros([3]));
        let (y, stats) = g
            .batch_norm(x, gamma, shift, BatchNormMode::Train, 1e-8)
            .unwrap();
        assert_eq!(stats.unwrap().count, 100);
        for ch in 0..3 {
            let (m, s) = channel_stats(g.value(y), ch);
            assert!(m.abs() < 1e-10, "mean {m}");
            assert!((s - 1.0).abs() < 1e-6, "std {s}");
        }
    }

    #[test]
    fn constant_channel_maps_to_shift() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::full([2, 1, 3, 3], 4.25));
        let gamma = g.constant(Tensor::full([1], 2.0));
        let shift = g.constant(Tensor::full([1], -0.5));
        let (y, _) = g
            .batch_norm(x, gamma, shift, BatchNormMode::Train, 1e-8)
            .unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == -0.5));
    }

    #[test]
    fn empty_batch_is_an_error() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros([0, 2, 3, 3]));
        let gamma = g.constant(Tensor::ones([2]));
        let shift = g.constant(Tensor::zeros([2]));
        assert!(g
            .batch_norm(x, gamma, shift, BatchNormMode::Train, 1e-8)
            .is_err());
    }

    #[test]
    fn eval_mode_uses_given_stats() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new([1, 1, 1, 2], vec![3.0, 5.0]).unwrap());
        let gamma = g.constant(Tensor::ones([1]));
        let shift = g.constant(Tensor::zeros([1]));
        let mode = BatchNormMode::Eval {
            mean: &[1.0],
            var: &[4.0],
        };
        let (y, stats) = g.batch_norm(x, gamma, shift, mode, 0.0).unwrap();
        assert!(stats.is_none());
        assert_eq!(g.value(y).data(), &[1.0, 2.0]);
    }
}
