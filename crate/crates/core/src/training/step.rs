use serde::{Deserialize, Serialize};

use super::losses::{gan_losses, generator_adv_loss, total_loss};
use super::TrainConfig;
use crate::data::Batch;
use crate::error::{Error, Result};
use crate::networks::{BnUpdates, GanVo, Mode};
use crate::tensor::{Adam, Graph, Tensor, Var};
use crate::view_synthesis::photometric_loss;

/// Losses of one training step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub step: u64,
    /// Photometric reconstruction loss.
    pub l_g: f64,
    /// Adversarial term of the generator side, `-mean ln D(fake)`.
    pub l_d: f64,
    pub d_loss: f64,
    pub l_final: f64,
    /// Mean fraction of target pixels with a valid reconstruction.
    pub mask_fill: f64,
}

impl LossReport {
    pub const CSV_HEADER: &'static str = "step,L_g,L_d,d_loss,L_final,mask_fill";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.step, self.l_g, self.l_d, self.d_loss, self.l_final, self.mask_fill
        )
    }

    pub fn is_finite(&self) -> bool {
        [
            self.l_g,
            self.l_d,
            self.d_loss,
            self.l_final,
            self.mask_fill,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// One Adam per model, so each update touches only its own parameters.
#[derive(Clone, Debug)]
pub struct Optimizers {
    pub encoder: Adam,
    pub generator: Adam,
    pub discriminator: Adam,
    pub pose: Adam,
}

impl Optimizers {
    pub fn new(config: &TrainConfig, model: &GanVo) -> Self {
        let adam = config.adam();
        Self {
            encoder: Adam::new(adam, &model.encoder.net.params),
            generator: Adam::new(adam, &model.generator.net.params),
            discriminator: Adam::new(adam, &model.discriminator.net.params),
            pose: Adam::new(adam, &model.pose.net.params),
        }
    }
}

fn with_step(step: u64) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Numeric(msg) => Error::Numeric(format!("step {step}: {msg}")),
        Error::Graph(msg) => Error::Graph(format!("step {step}: {msg}")),
        other => other,
    }
}

fn mean_of(g: &mut Graph, terms: &[Var]) -> Result<Var> {
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = g.add(acc, t)?;
    }
    g.scale(acc, 1.0 / terms.len() as f64)
}

fn check_batch(model: &GanVo, batch: &Batch) -> Result<()> {
    let arch = &model.arch;
    let k = batch.intrinsics();
    if batch.seq_len() != arch.seq_len || (k.height, k.width) != (arch.height, arch.width) {
        return Err(Error::Config(format!(
            "batch has {} frames of {}x{}, model expects {} of {}x{}",
            batch.seq_len(),
            k.height,
            k.width,
            arch.seq_len,
            arch.height,
            arch.width
        )));
    }
    Ok(())
}

/// Discriminator update on the real targets and detached reconstructions.
/// Returns the discriminator loss before the update.
fn update_discriminator(
    model: &mut GanVo,
    adam: &mut Adam,
    real: Tensor,
    fakes: Vec<Tensor>,
) -> Result<f64> {
    let d = &model.discriminator;
    let mut g = Graph::new();
    let p = d.net.params.bind(&mut g);
    let mut bn = BnUpdates::default();
    let real = g.constant(real);
    let d_real = d.forward(&mut g, &p, real, Mode::Train, &mut bn)?;
    let mut losses = Vec::with_capacity(fakes.len());
    for fake in fakes {
        let fake = g.constant(fake);
        let d_fake = d.forward(&mut g, &p, fake, Mode::Train, &mut bn)?;
        losses.push(gan_losses(&mut g, d_real, d_fake)?.0);
    }
    let loss = mean_of(&mut g, &losses)?;
    g.backward(loss)?;
    let value = g.value(loss).item()?;
    let net = &mut model.discriminator.net;
    net.params.collect_grads(&g, &p);
    adam.step(&mut net.params)?;
    net.params.clear_grads();
    net.absorb(&bn);
    Ok(value)
}

/// One discriminator update followed by one joint update of the encoder,
/// generator and pose regressor on `L_g + beta * L_d`.
pub fn train_step(
    model: &mut GanVo,
    opt: &mut Optimizers,
    batch: &Batch,
    config: &TrainConfig,
    beta: f64,
    step: u64,
) -> Result<LossReport> {
    check_batch(model, batch)?;
    let at = with_step(step);
    let k = batch.intrinsics();
    let mut g = Graph::new();
    let pe = model.encoder.net.params.bind(&mut g);
    let pg = model.generator.net.params.bind(&mut g);
    let pp = model.pose.net.params.bind(&mut g);
    let (mut bn_e, mut bn_g) = (BnUpdates::default(), BnUpdates::default());

    let target = g.constant(batch.target());
    let frames = g.constant(batch.stacked());
    let poses = model.pose.forward(&mut g, &pp, frames).map_err(&at)?;
    let z = model
        .encoder
        .forward(&mut g, &pe, target, Mode::Train, &mut bn_e)
        .map_err(&at)?;
    let depth = model
        .generator
        .forward(&mut g, &pg, z, Mode::Train, &mut bn_g)
        .map_err(&at)?;

    let mut warps = Vec::with_capacity(batch.seq_len() - 1);
    for j in 0..batch.seq_len() - 1 {
        let src = g.constant(batch.source(j));
        let pose = g.narrow(poses, 1, 6 * j, 6)?;
        warps.push(g.inverse_warp(src, depth, pose, &k).map_err(&at)?);
    }
    let l_g = photometric_loss(&mut g, target, &warps, config.mask_invalid).map_err(&at)?;
    let mask_fill = warps.iter().map(|w| w.fill_ratio()).sum::<f64>() / warps.len() as f64;
    let fakes = warps
        .iter()
        .map(|w| {
            if config.composite_fake {
                g.masked_composite(w.image, target, &w.mask)
            } else {
                Ok(w.image)
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let fake_values = fakes.iter().map(|&f| g.value(f).clone()).collect();
    let d_loss = update_discriminator(model, &mut opt.discriminator, batch.target(), fake_values)
        .map_err(&at)?;

    let d = &model.discriminator;
    let pd = d.net.params.bind_frozen(&mut g);
    let mut scratch = BnUpdates::default();
    let mut adv = Vec::with_capacity(fakes.len());
    for &fake in &fakes {
        let d_fake = d
            .forward(&mut g, &pd, fake, Mode::Train, &mut scratch)
            .map_err(&at)?;
        adv.push(generator_adv_loss(&mut g, d_fake)?);
    }
    let l_d = mean_of(&mut g, &adv)?;
    let l_final = total_loss(&mut g, l_g, l_d, beta)?;
    g.backward(l_final).map_err(&at)?;

    for (net, bound, adam) in [
        (&mut model.encoder.net, &pe, &mut opt.encoder),
        (&mut model.generator.net, &pg, &mut opt.generator),
        (&mut model.pose.net, &pp, &mut opt.pose),
    ] {
        net.params.collect_grads(&g, bound);
        adam.step(&mut net.params).map_err(&at)?;
        net.params.clear_grads();
    }
    model.encoder.net.absorb(&bn_e);
    model.generator.net.absorb(&bn_g);

    let report = LossReport {
        step,
        l_g: g.value(l_g).item()?,
        l_d: g.value(l_d).item()?,
        d_loss,
        l_final: g.value(l_final).item()?,
        mask_fill,
    };
    if !report.is_finite() || !model.is_finite() {
        return Err(Error::Numeric(format!(
            "step {step}: non-finite loss or parameter"
        )));
    }
    Ok(report)
}
