use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{
    init, Activation, BatchNormMode, BatchStats, Bound, Graph, ParamId, ParamStore, Tensor, Var,
};

/// Whether batch norm uses batch statistics or the running estimates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Running per-channel estimates kept by one batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }

    fn absorb(&mut self, batch: &BatchStats, momentum: f64) {
        let unbiased = batch.unbiased_var();
        for (r, b) in self.mean.iter_mut().zip(&batch.mean) {
            *r = (1.0 - momentum) * *r + momentum * b;
        }
        for (r, b) in self.var.iter_mut().zip(&unbiased) {
            *r = (1.0 - momentum) * *r + momentum * b;
        }
    }
}

/// Batch statistics gathered by a training-mode forward pass, keyed by the
/// batch-norm slot that produced them.
#[derive(Clone, Debug, Default)]
pub struct BnUpdates(Vec<(usize, BatchStats)>);

impl BnUpdates {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub(crate) fn push(&mut self, slot: usize, stats: BatchStats) {
        self.0.push((slot, stats));
    }
}

/// Trainable parameters plus batch-norm buffers of one model.
#[derive(Clone, Debug)]
pub struct Net {
    pub params: ParamStore,
    pub running: Vec<RunningStats>,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Net {
    pub(crate) fn new(bn_momentum: f64, bn_eps: f64) -> Self {
        Self {
            params: ParamStore::new(),
            running: Vec::new(),
            bn_momentum,
            bn_eps,
        }
    }

    /// Folds the statistics of a training pass into the running estimates.
    pub fn absorb(&mut self, updates: &BnUpdates) {
        for (slot, stats) in &updates.0 {
            self.running[*slot].absorb(stats, self.bn_momentum);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|(_, t)| t.is_finite())
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Layer {
    Conv {
        weight: ParamId,
        bias: Option<ParamId>,
        stride: usize,
        padding: usize,
    },
    ConvT {
        weight: ParamId,
        bias: Option<ParamId>,
        stride: usize,
        padding: usize,
        output_padding: [usize; 2],
    },
    Norm {
        gamma: ParamId,
        beta: ParamId,
        slot: usize,
    },
    Act(Activation),
}

/// Sequential stack of layers registering parameters in a [`Net`].
#[derive(Clone, Debug, Default)]
pub(crate) struct Stack {
    pub layers: Vec<Layer>,
}

pub(crate) struct ConvSpec {
    pub name: String,
    pub in_c: usize,
    pub out_c: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: usize,
    pub bias: bool,
}

impl Stack {
    pub fn conv(&mut self, net: &mut Net, spec: ConvSpec, rng: &mut impl Rng) {
        let (kh, kw) = spec.kernel;
        let weight = net.params.add(
            format!("{}.weight", spec.name),
            init::normal(
                [spec.out_c, spec.in_c, kh, kw],
                0.0,
                init::CONV_INIT_STD,
                rng,
            ),
        );
        let bias = spec.bias.then(|| {
            net.params
                .add(format!("{}.bias", spec.name), Tensor::zeros([spec.out_c]))
        });
        self.layers.push(Layer::Conv {
            weight,
            bias,
            stride: spec.stride,
            padding: spec.padding,
        });
    }

    pub fn conv_t(
        &mut self,
        net: &mut Net,
        spec: ConvSpec,
        output_padding: [usize; 2],
        rng: &mut impl Rng,
    ) {
        let (kh, kw) = spec.kernel;
        let weight = net.params.add(
            format!("{}.weight", spec.name),
            init::normal(
                [spec.in_c, spec.out_c, kh, kw],
                0.0,
                init::CONV_INIT_STD,
                rng,
            ),
        );
        let bias = spec.bias.then(|| {
            net.params
                .add(format!("{}.bias", spec.name), Tensor::zeros([spec.out_c]))
        });
        self.layers.push(Layer::ConvT {
            weight,
            bias,
            stride: spec.stride,
            padding: spec.padding,
            output_padding,
        });
    }

    pub fn norm(&mut self, net: &mut Net, name: &str, channels: usize) {
        let gamma = net
            .params
            .add(format!("{name}.gamma"), Tensor::ones([channels]));
        let beta = net
            .params
            .add(format!("{name}.beta"), Tensor::zeros([channels]));
        net.running.push(RunningStats::new(channels));
        self.layers.push(Layer::Norm {
            gamma,
            beta,
            slot: net.running.len() - 1,
        });
    }

    pub fn act(&mut self, kind: Activation) {
        self.layers.push(Layer::Act(kind));
    }

    pub fn forward(
        &self,
        net: &Net,
        g: &mut Graph,
        p: &Bound,
        mut x: Var,
        mode: Mode,
        updates: &mut BnUpdates,
    ) -> Result<Var> {
        for layer in &self.layers {
            x = match *layer {
                Layer::Conv {
                    weight,
                    bias,
                    stride,
                    padding,
                } => g.conv2d(x, p[weight], bias.map(|b| p[b]), stride, padding)?,
                Layer::ConvT {
                    weight,
                    bias,
                    stride,
                    padding,
                    output_padding,
                } => g.conv_transpose2d(
                    x,
                    p[weight],
                    bias.map(|b| p[b]),
                    stride,
                    padding,
                    output_padding,
                )?,
                Layer::Norm { gamma, beta, slot } => {
                    let running = &net.running[slot];
                    let bn_mode = match mode {
                        Mode::Train => BatchNormMode::Train,
                        Mode::Eval => BatchNormMode::Eval {
                            mean: &running.mean,
                            var: &running.var,
                        },
                    };
                    let (y, stats) = g.batch_norm(x, p[gamma], p[beta], bn_mode, net.bn_eps)?;
                    if let Some(stats) = stats {
                        updates.push(slot, stats);
                    }
                    y
                }
                Layer::Act(kind) => g.activation(x, kind)?,
            };
        }
        Ok(x)
    }
}

pub(crate) fn expect_image(
    g: &Graph,
    x: Var,
    channels: usize,
    h: usize,
    w: usize,
    what: &str,
) -> Result<usize> {
    let s = g.shape(x);
    if s.len() != 4 || s[1] != channels || s[2] != h || s[3] != w {
        return Err(Error::Shape(format!(
            "{what} expects [B, {channels}, {h}, {w}], got {s:?}"
        )));
    }
    Ok(s[0])
}
