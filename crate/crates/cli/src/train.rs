use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use ganvo_core::networks::file_sha256;
use ganvo_core::training::{LossReport, TrainConfig, Trainer, FINAL_CHECKPOINT, LOSS_CSV};
use ganvo_core::{Error, Result};

use crate::args::TrainArgs;
use crate::data::{self, DataSource, Split};
use crate::manifest::with_manifest;

/// Window of the first/last loss means printed after training.
const SUMMARY_WINDOW: usize = 50;

fn mean_l_g(reports: &[LossReport]) -> f64 {
    reports.iter().map(|r| r.l_g).sum::<f64>() / reports.len() as f64
}

pub fn run(args: TrainArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => TrainConfig::load(path)?,
        None => TrainConfig::toy(),
    };
    if let Some(seed) = args.output.seed {
        config.seed = seed;
    }
    if let Some(steps) = args.steps {
        config.steps = steps;
    }
    config.validate()?;
    let out = args
        .output
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs/train"));
    let source = DataSource::parse(&args.data);
    with_manifest("train", &out, args.config.as_deref(), config.seed, || {
        let echo = out.join("config.toml");
        fs::write(&echo, config.to_toml_string()).map_err(|e| Error::io(&echo, e))?;
        let dataset = data::load(&source, Split::Train, &[], &config.synthetic, config.seed)?;
        let mut trainer = Trainer::new(config.clone())?;
        trainer.check_dataset(&dataset)?;
        log::info!(
            "{} sequences, {} frames, {} steps of batch {}",
            dataset.sequences.len(),
            dataset.num_frames(),
            config.steps,
            config.batch_size
        );
        let every = (config.steps / 10).max(1);
        let reports = trainer.run(Arc::new(dataset), Some(&out), |r| {
            if r.step % every == 0 || r.step == 1 {
                log::info!(
                    "step {}/{}: L_g {:.4} L_d {:.4} L_final {:.4} fill {:.3}",
                    r.step,
                    config.steps,
                    r.l_g,
                    r.l_d,
                    r.l_final,
                    r.mask_fill
                );
            }
        })?;
        let ckpt = out.join(FINAL_CHECKPOINT);
        let k = SUMMARY_WINDOW.min(reports.len());
        println!("{:<16} {}", "steps", trainer.steps_done());
        if k > 0 {
            println!(
                "{:<16} {:.4}",
                format!("L_g first {k}"),
                mean_l_g(&reports[..k])
            );
            println!(
                "{:<16} {:.4}",
                format!("L_g last {k}"),
                mean_l_g(&reports[reports.len() - k..])
            );
        }
        println!("{:<16} {:.4}", "beta", trainer.beta.current());
        println!("{:<16} {}", "losses", out.join(LOSS_CSV).display());
        println!("{:<16} {}", "checkpoint", ckpt.display());
        println!("{:<16} {}", "sha256", file_sha256(&ckpt)?);
        Ok(())
    })
}
