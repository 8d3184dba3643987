use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::arch::ArchConfig;
use super::layers::{expect_image, BnUpdates, ConvSpec, Mode, Net, Stack};
use crate::error::{Error, Result};
use crate::geometry::{DepthMap, PoseVec6};
use crate::tensor::{init, Activation, Bound, Graph, LstmWeights, ParamId, Tensor, Var};

fn spec(
    name: String,
    in_c: usize,
    out_c: usize,
    kernel: (usize, usize),
    stride: usize,
    padding: usize,
    bias: bool,
) -> ConvSpec {
    ConvSpec {
        name,
        in_c,
        out_c,
        kernel,
        stride,
        padding,
        bias,
    }
}

/// Strided conv stack from an RGB target frame to the latent code `z`.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub net: Net,
    stack: Stack,
    height: usize,
    width: usize,
    latent: usize,
}

impl Encoder {
    pub fn new(arch: &ArchConfig, rng: &mut impl Rng) -> Result<Self> {
        arch.validate()?;
        let sizes = arch.pyramid()?;
        let mut net = Net::new(arch.bn_momentum, arch.bn_eps);
        let mut stack = Stack::default();
        let mut in_c = 3;
        for i in 0..arch.levels {
            let out_c = arch.level_width(i);
            stack.conv(
                &mut net,
                spec(format!("enc{i}"), in_c, out_c, (4, 4), 2, 1, i == 0),
                rng,
            );
            if i > 0 {
                stack.norm(&mut net, &format!("enc{i}.bn"), out_c);
            }
            stack.act(Activation::LeakyRelu);
            in_c = out_c;
        }
        let last = sizes[arch.levels];
        stack.conv(
            &mut net,
            spec("enc.proj".into(), in_c, arch.latent_dim, last, 1, 0, true),
            rng,
        );
        Ok(Self {
            net,
            stack,
            height: arch.height,
            width: arch.width,
            latent: arch.latent_dim,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent
    }

    /// `image [B, 3, H, W]` to `z [B, latent, 1, 1]`.
    pub fn forward(
        &self,
        g: &mut Graph,
        p: &Bound,
        image: Var,
        mode: Mode,
        bn: &mut BnUpdates,
    ) -> Result<Var> {
        expect_image(g, image, 3, self.height, self.width, "encoder")?;
        self.stack.forward(&self.net, g, p, image, mode, bn)
    }

    /// Eval-mode latent codes `[B, latent]`.
    pub fn encode(&self, images: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = self.net.params.bind_frozen(&mut g);
        let x = g.constant(images.clone());
        let z = self.forward(&mut g, &p, x, Mode::Eval, &mut BnUpdates::default())?;
        let b = g.shape(z)[0];
        g.value(z).clone().reshape([b, self.latent])
    }
}

/// Fractional-strided conv stack from `z` to a `tanh` disparity image,
/// converted to depth.
#[derive(Clone, Debug)]
pub struct Generator {
    pub net: Net,
    stack: Stack,
    latent: usize,
    disparity: crate::geometry::DisparityRange,
}

impl Generator {
    pub fn new(arch: &ArchConfig, rng: &mut impl Rng) -> Result<Self> {
        arch.validate()?;
        let sizes = arch.pyramid()?;
        let levels = arch.levels;
        let mut net = Net::new(arch.bn_momentum, arch.bn_eps);
        let mut stack = Stack::default();
        let top = arch.level_width(levels - 1);
        stack.conv_t(
            &mut net,
            spec(
                "gen.proj".into(),
                arch.latent_dim,
                top,
                sizes[levels],
                1,
                0,
                false,
            ),
            [0, 0],
            rng,
        );
        stack.norm(&mut net, "gen.proj.bn", top);
        stack.act(Activation::Relu);
        for i in (0..levels).rev() {
            let (h, w) = sizes[i];
            let (sh, sw) = sizes[i + 1];
            let pad = [h - 2 * sh, w - 2 * sw];
            let in_c = arch.level_width(i);
            if i == 0 {
                stack.conv_t(
                    &mut net,
                    spec("gen.out".into(), in_c, 1, (4, 4), 2, 1, true),
                    pad,
                    rng,
                );
                stack.act(Activation::Tanh);
            } else {
                let out_c = arch.level_width(i - 1);
                stack.conv_t(
                    &mut net,
                    spec(format!("gen{i}"), in_c, out_c, (4, 4), 2, 1, false),
                    pad,
                    rng,
                );
                stack.norm(&mut net, &format!("gen{i}.bn"), out_c);
                stack.act(Activation::Relu);
            }
        }
        Ok(Self {
            net,
            stack,
            latent: arch.latent_dim,
            disparity: arch.disparity,
        })
    }

    /// `z [B, latent, 1, 1]` to raw `tanh` output `[B, 1, H, W]`.
    pub fn forward_raw(
        &self,
        g: &mut Graph,
        p: &Bound,
        z: Var,
        mode: Mode,
        bn: &mut BnUpdates,
    ) -> Result<Var> {
        let s = g.shape(z);
        if s.len() != 4 || s[1] != self.latent || s[2] != 1 || s[3] != 1 {
            return Err(Error::Shape(format!(
                "generator expects z of shape [B, {}, 1, 1], got {s:?}",
                self.latent
            )));
        }
        self.stack.forward(&self.net, g, p, z, mode, bn)
    }

    /// `z` to depth `[B, 1, H, W]`.
    pub fn forward(
        &self,
        g: &mut Graph,
        p: &Bound,
        z: Var,
        mode: Mode,
        bn: &mut BnUpdates,
    ) -> Result<Var> {
        let raw = self.forward_raw(g, p, z, mode, bn)?;
        g.disparity_to_depth(raw, self.disparity)
    }

    /// Eval-mode depth maps from latent codes `[B, latent]`.
    pub fn generate_depth(&self, z: &Tensor) -> Result<Vec<DepthMap>> {
        let b = z.shape().first().copied().unwrap_or(0);
        let mut g = Graph::new();
        let p = self.net.params.bind_frozen(&mut g);
        let z = g.constant(z.clone().reshape([b, self.latent, 1, 1])?);
        let d = self.forward(&mut g, &p, z, Mode::Eval, &mut BnUpdates::default())?;
        split_depth(g.value(d))
    }
}

pub(crate) fn split_depth(t: &Tensor) -> Result<Vec<DepthMap>> {
    let [b, _, h, w] = t.dims4("depth batch")?;
    (0..b)
        .map(|i| DepthMap::new(h, w, t.data()[i * h * w..(i + 1) * h * w].to_vec()))
        .collect()
}

/// Strided conv classifier ending in a sigmoid probability per image.
#[derive(Clone, Debug)]
pub struct Discriminator {
    pub net: Net,
    stack: Stack,
    height: usize,
    width: usize,
}

impl Discriminator {
    pub fn new(arch: &ArchConfig, rng: &mut impl Rng) -> Result<Self> {
        arch.validate()?;
        let sizes = arch.pyramid()?;
        let mut net = Net::new(arch.bn_momentum, arch.bn_eps);
        let mut stack = Stack::default();
        let mut in_c = 3;
        for i in 0..arch.levels {
            let out_c = arch.level_width(i);
            stack.conv(
                &mut net,
                spec(format!("disc{i}"), in_c, out_c, (4, 4), 2, 1, i == 0),
                rng,
            );
            if i > 0 {
                stack.norm(&mut net, &format!("disc{i}.bn"), out_c);
            }
            stack.act(Activation::LeakyRelu);
            in_c = out_c;
        }
        stack.conv(
            &mut net,
            spec("disc.out".into(), in_c, 1, sizes[arch.levels], 1, 0, true),
            rng,
        );
        stack.act(Activation::Sigmoid);
        Ok(Self {
            net,
            stack,
            height: arch.height,
            width: arch.width,
        })
    }

    /// `image [B, 3, H, W]` to probabilities `[B]`.
    pub fn forward(
        &self,
        g: &mut Graph,
        p: &Bound,
        image: Var,
        mode: Mode,
        bn: &mut BnUpdates,
    ) -> Result<Var> {
        let b = expect_image(g, image, 3, self.height, self.width, "discriminator")?;
        let out = self.stack.forward(&self.net, g, p, image, mode, bn)?;
        g.reshape(out, &[b])
    }

    /// Eval-mode probabilities.
    pub fn discriminate(&self, images: &Tensor) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let p = self.net.params.bind_frozen(&mut g);
        let x = g.constant(images.clone());
        let d = self.forward(&mut g, &p, x, Mode::Eval, &mut BnUpdates::default())?;
        Ok(g.value(d).data().to_vec())
    }
}

#[derive(Clone, Copy, Debug)]
struct LstmIds {
    w_ih: ParamId,
    w_hh: ParamId,
    bias: ParamId,
}

impl LstmIds {
    fn bind(&self, p: &Bound) -> LstmWeights {
        LstmWeights {
            w_ih: p[self.w_ih],
            w_hh: p[self.w_hh],
            bias: p[self.bias],
        }
    }
}

/// Conv features per frame, two stacked LSTMs over the frame sequence and a
/// linear head with `6 * (N - 1)` outputs.
#[derive(Clone, Debug)]
pub struct PoseRegressor {
    pub net: Net,
    stack: Stack,
    lstm: [LstmIds; 2],
    head_w: ParamId,
    head_b: ParamId,
    seq_len: usize,
    features: usize,
    hidden: usize,
    scale: f64,
    height: usize,
    width: usize,
}

impl PoseRegressor {
    pub fn new(arch: &ArchConfig, rng: &mut impl Rng) -> Result<Self> {
        arch.validate()?;
        let mut net = Net::new(arch.bn_momentum, arch.bn_eps);
        let mut stack = Stack::default();
        let n = arch.seq_len;
        let mut in_c = 3 * n;
        for i in 0..arch.pose_levels {
            let out_c = arch.pose_level_width(i);
            stack.conv(
                &mut net,
                spec(format!("pose{i}"), in_c, out_c, (4, 4), 2, 1, true),
                rng,
            );
            stack.act(Activation::Relu);
            in_c = out_c;
        }
        let f = arch.pose_features;
        stack.conv(
            &mut net,
            spec("pose.feat".into(), in_c, n * f, (3, 3), 1, 1, true),
            rng,
        );

        let hdim = arch.lstm_hidden;
        let mut lstm_layer = |name: &str, input: usize, net: &mut Net| LstmIds {
            w_ih: net.params.add(
                format!("{name}.w_ih"),
                init::uniform_fan_in([4 * hdim, input], hdim, rng),
            ),
            w_hh: net.params.add(
                format!("{name}.w_hh"),
                init::uniform_fan_in([4 * hdim, hdim], hdim, rng),
            ),
            bias: net.params.add(
                format!("{name}.bias"),
                init::uniform_fan_in([4 * hdim], hdim, rng),
            ),
        };
        let l1 = lstm_layer("lstm1", f, &mut net);
        let l2 = lstm_layer("lstm2", hdim, &mut net);
        let outputs = 6 * (n - 1);
        let head_w = net.params.add(
            "head.weight",
            init::uniform_fan_in([outputs, hdim], hdim, rng),
        );
        let head_b = net
            .params
            .add("head.bias", init::uniform_fan_in([outputs], hdim, rng));
        Ok(Self {
            net,
            stack,
            lstm: [l1, l2],
            head_w,
            head_b,
            seq_len: n,
            features: f,
            hidden: hdim,
            scale: arch.pose_scale,
            height: arch.height,
            width: arch.width,
        })
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn num_outputs(&self) -> usize {
        6 * (self.seq_len - 1)
    }

    /// Zeroes the linear head so every predicted pose is the identity.
    pub fn zero_head(&mut self) {
        for id in [self.head_w, self.head_b] {
            self.net.params.get_mut(id).data_mut().fill(0.0);
        }
    }

    /// `frames [B, 3N, H, W]` (frames stacked along channels in time order)
    /// to poses `[B, 6(N-1)]`, one target-to-source vector per non-target
    /// frame in time order.
    pub fn forward(&self, g: &mut Graph, p: &Bound, frames: Var) -> Result<Var> {
        let b = expect_image(
            g,
            frames,
            3 * self.seq_len,
            self.height,
            self.width,
            "pose regressor",
        )?;
        let feat = self.stack.forward(
            &self.net,
            g,
            p,
            frames,
            Mode::Train,
            &mut BnUpdates::default(),
        )?;
        let zeros = Tensor::zeros([b, self.hidden]);
        let (mut h1, mut c1) = (g.constant(zeros.clone()), g.constant(zeros.clone()));
        let (mut h2, mut c2) = (g.constant(zeros.clone()), g.constant(zeros));
        let (w1, w2) = (self.lstm[0].bind(p), self.lstm[1].bind(p));
        for t in 0..self.seq_len {
            let chunk = g.narrow(feat, 1, t * self.features, self.features)?;
            let x = g.global_avg_pool(chunk)?;
            (h1, c1) = g.lstm_cell(x, h1, c1, &w1)?;
            (h2, c2) = g.lstm_cell(h1, h2, c2, &w2)?;
        }
        let out = g.linear(h2, p[self.head_w], p[self.head_b])?;
        g.scale(out, self.scale)
    }

    pub fn regress_poses(&self, frames: &Tensor) -> Result<Vec<Vec<PoseVec6>>> {
        if self.seq_len < 2 {
            return Err(Error::Config(
                "pose regression needs at least 2 frames".into(),
            ));
        }
        let mut g = Graph::new();
        let p = self.net.params.bind_frozen(&mut g);
        let x = g.constant(frames.clone());
        let out = self.forward(&mut g, &p, x)?;
        Ok(split_poses(g.value(out), self.seq_len - 1))
    }
}

pub(crate) fn split_poses(t: &Tensor, sources: usize) -> Vec<Vec<PoseVec6>> {
    t.data()
        .chunks(6 * sources)
        .map(|row| {
            row.chunks(6)
                .map(|c| PoseVec6::from_array([c[0], c[1], c[2], c[3], c[4], c[5]]))
                .collect()
        })
        .collect()
}

/// All four models of the pipeline.
#[derive(Clone, Debug)]
pub struct GanVo {
    pub arch: ArchConfig,
    pub encoder: Encoder,
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub pose: PoseRegressor,
}

impl GanVo {
    pub fn new(arch: ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            encoder: Encoder::new(&arch, &mut rng)?,
            generator: Generator::new(&arch, &mut rng)?,
            discriminator: Discriminator::new(&arch, &mut rng)?,
            pose: PoseRegressor::new(&arch, &mut rng)?,
            arch,
        })
    }

    pub fn nets(&self) -> [(&'static str, &Net); 4] {
        [
            ("encoder", &self.encoder.net),
            ("generator", &self.generator.net),
            ("discriminator", &self.discriminator.net),
            ("pose", &self.pose.net),
        ]
    }

    pub fn nets_mut(&mut self) -> [(&'static str, &mut Net); 4] {
        [
            ("encoder", &mut self.encoder.net),
            ("generator", &mut self.generator.net),
            ("discriminator", &mut self.discriminator.net),
            ("pose", &mut self.pose.net),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.nets().iter().all(|(_, n)| n.is_finite())
    }

    /// Eval-mode depth for target images `[B, 3, H, W]`.
    pub fn predict_depth(&self, images: &Tensor) -> Result<Vec<DepthMap>> {
        let z = self.encoder.encode(images)?;
        self.generator.generate_depth(&z)
    }

    /// Relative poses for stacked frames `[B, 3N, H, W]`.
    pub fn predict_poses(&self, frames: &Tensor) -> Result<Vec<Vec<PoseVec6>>> {
        self.pose.regress_poses(frames)
    }
}
