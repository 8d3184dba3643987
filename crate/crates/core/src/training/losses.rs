use crate::error::{Error, Result};
use crate::tensor::{Graph, Var};

/// Lower clamp applied to probabilities before taking logs.
pub const LOG_EPS: f64 = 1e-7;

/// Losses below this mean the discriminator has stopped providing signal.
pub const COLLAPSE_THRESHOLD: f64 = 1e-9;

/// Discriminator loss `-[mean ln D(real) + mean ln(1 - D(fake))]` and the
/// non-saturating generator term `-mean ln D(fake)`, from discriminator
/// outputs in `(0, 1)`.
pub fn gan_losses(g: &mut Graph, d_real: Var, d_fake: Var) -> Result<(Var, Var)> {
    let ln_real = g.ln_clamped(d_real, LOG_EPS, 1.0)?;
    let real_term = g.mean(ln_real)?;
    let one_minus = g.affine(d_fake, -1.0, 1.0)?;
    let ln_fake = g.ln_clamped(one_minus, LOG_EPS, 1.0)?;
    let fake_term = g.mean(ln_fake)?;
    let sum = g.add(real_term, fake_term)?;
    let d_loss = g.scale(sum, -1.0)?;
    let g_adv = generator_adv_loss(g, d_fake)?;
    Ok((d_loss, g_adv))
}

/// `-mean ln D(fake)`.
pub fn generator_adv_loss(g: &mut Graph, d_fake: Var) -> Result<Var> {
    let ln_fool = g.ln_clamped(d_fake, LOG_EPS, 1.0)?;
    let fool = g.mean(ln_fool)?;
    g.scale(fool, -1.0)
}

/// `l_g + beta * l_d`.
pub fn total_loss(g: &mut Graph, l_g: Var, l_d: Var, beta: f64) -> Result<Var> {
    check_beta(beta)?;
    let weighted = g.scale(l_d, beta)?;
    g.add(l_g, weighted)
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Config(format!(
            "balance factor must be positive, got {beta}"
        )));
    }
    Ok(())
}

/// Ratio of the mean photometric loss to the mean adversarial loss over the
/// last `window` entries of each history.
pub fn estimate_beta(l_g: &[f64], l_d: &[f64], window: usize) -> Result<f64> {
    if window == 0 || l_g.len() < window || l_d.len() < window {
        return Err(Error::Config(format!(
            "balance estimate needs {window} recorded steps, have {}",
            l_g.len().min(l_d.len())
        )));
    }
    let mean = |xs: &[f64]| xs[xs.len() - window..].iter().sum::<f64>() / window as f64;
    let (mg, md) = (mean(l_g), mean(l_d));
    if md < COLLAPSE_THRESHOLD {
        return Err(Error::DiscriminatorCollapsed(md));
    }
    Ok(mg / md)
}
