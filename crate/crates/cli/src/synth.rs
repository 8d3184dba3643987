use std::path::PathBuf;

use ganvo_core::data::{generate_synthetic_dataset, materialize, SceneConfig};
use ganvo_core::{Error, Result};

use crate::args::SynthArgs;
use crate::manifest::with_manifest;

fn scene(args: &SynthArgs) -> Result<SceneConfig> {
    let mut scene = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => SceneConfig::preset(&args.scene)?,
    };
    if let Some(frames) = args.frames {
        scene.frames = frames;
    }
    scene.validate()?;
    if args.sequences == 0 {
        return Err(Error::Config("--sequences must be at least 1".into()));
    }
    Ok(scene)
}

pub fn run(args: SynthArgs) -> Result<()> {
    let scene = scene(&args)?;
    let seed = args.output.seed.unwrap_or(0);
    let out = args
        .output
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs/synth"));
    with_manifest("synth", &out, args.config.as_deref(), seed, || {
        let dataset = generate_synthetic_dataset(seed, &scene, args.sequences)?;
        let manifest = materialize(&dataset, &out, Vec::new(), Vec::new(), Vec::new())?;
        println!("{:<10} {}", "root", out.display());
        println!("{:<10} {}x{}", "frames", manifest.width, manifest.height);
        for seq in &dataset.sequences {
            println!("{:<10} {} frames, depth and poses", seq.id, seq.len());
        }
        Ok(())
    })
}
