use std::path::{Path, PathBuf};

use ganvo_core::data::{Dataset, FrameSequence};
use ganvo_core::evaluation::{
    ate, depth_metrics, export_artifacts, gt_trajectory, predicted_trajectory, predicted_windows,
    Artifacts, DepthCap, DepthMetrics, Summary, Trajectory, ATE_WINDOW,
};
use ganvo_core::geometry::DepthMap;
use ganvo_core::networks::{load_checkpoint, GanVo};
use ganvo_core::training::TrainConfig;
use ganvo_core::{Error, Result, Tensor};
use serde::Serialize;

use crate::args::{EvalArgs, EvalDepthArgs, EvalPoseArgs};
use crate::data::{self, DataSource, Split, HELD_OUT_SEED_OFFSET};
use crate::manifest::with_manifest;

/// Frames pushed through the depth network at once.
const DEPTH_BATCH: usize = 8;

struct Setup {
    model: Option<GanVo>,
    dataset: Dataset,
}

fn setup(args: &EvalArgs, seed: u64) -> Result<Setup> {
    let synthetic = match &args.config {
        Some(p) => TrainConfig::load(p)?.synthetic,
        None => TrainConfig::toy().synthetic,
    };
    let model = match &args.checkpoint {
        Some(p) if !args.oracle => {
            let (model, step) = load_checkpoint(p)?;
            log::info!("loaded {} (step {step})", p.display());
            Some(model)
        }
        _ => None,
    };
    let source = DataSource::parse(&args.data);
    let dataset = data::load(
        &source,
        Split::Test,
        &args.sequences,
        &synthetic,
        seed.wrapping_add(HELD_OUT_SEED_OFFSET),
    )?;
    if let Some(m) = &model {
        let (h, w) = dataset.frame_size()?;
        if (h, w) != (m.arch.height, m.arch.width) {
            return Err(Error::Config(format!(
                "dataset frames are {h}x{w}, the checkpoint expects {}x{}",
                m.arch.height, m.arch.width
            )));
        }
    }
    Ok(Setup { model, dataset })
}

fn out_dir(args: &EvalArgs, command: &str) -> PathBuf {
    args.output
        .out
        .clone()
        .unwrap_or_else(|| Path::new("runs").join(command))
}

#[derive(Serialize)]
struct PoseSequence {
    id: String,
    windows: usize,
    mean: f64,
    std: f64,
    degenerate: usize,
    ate: Vec<f64>,
}

#[derive(Serialize)]
struct PoseReport<'a> {
    checkpoint: Option<&'a Path>,
    oracle: bool,
    data: &'a str,
    window: usize,
    sequences: Vec<PoseSequence>,
}

fn pose_windows(
    model: Option<&GanVo>,
    seq: &FrameSequence,
    gt: &Trajectory,
) -> Result<(Vec<Trajectory>, Trajectory)> {
    if seq.len() < ATE_WINDOW {
        return Err(Error::Data(format!(
            "sequence {} has {} frames, fewer than one {ATE_WINDOW}-frame window",
            seq.id,
            seq.len()
        )));
    }
    match model {
        Some(m) => Ok((predicted_windows(m, seq)?, predicted_trajectory(m, seq)?)),
        None => {
            let windows = (0..=gt.len() - ATE_WINDOW)
                .map(|s| Ok(gt.slice(s, ATE_WINDOW)?.anchored()))
                .collect::<Result<_>>()?;
            Ok((windows, gt.clone()))
        }
    }
}

pub fn pose(args: EvalPoseArgs) -> Result<()> {
    let args = args.eval;
    let seed = args.output.seed.unwrap_or(0);
    let out = out_dir(&args, "eval-pose");
    with_manifest("eval-pose", &out, args.config.as_deref(), seed, || {
        let Setup { model, dataset } = setup(&args, seed)?;
        let mut rows = Vec::new();
        let mut trajectories = Vec::new();
        for seq in &dataset.sequences {
            let gt = gt_trajectory(seq)?;
            let (windows, full) = pose_windows(model.as_ref(), seq, &gt)?;
            let scored = windows
                .iter()
                .enumerate()
                .map(|(start, w)| ate(w, &gt.slice(start, ATE_WINDOW)?))
                .collect::<Result<Vec<_>>>()?;
            let values: Vec<f64> = scored.iter().map(|a| a.rmse).collect();
            let summary = Summary::of(&values)?;
            let degenerate = scored.iter().filter(|a| a.degenerate).count();
            if degenerate > 0 {
                log::warn!(
                    "sequence {}: {degenerate} windows with no predicted motion",
                    seq.id
                );
            }
            rows.push((
                seq.id.clone(),
                summary,
                PoseSequence {
                    id: seq.id.clone(),
                    windows: values.len(),
                    mean: summary.mean,
                    std: summary.std,
                    degenerate,
                    ate: values,
                },
            ));
            trajectories.push((format!("trajectory_{}", seq.id), full, gt));
        }
        println!("ATE over {ATE_WINDOW}-frame windows");
        println!("{:<10} {:>8}  ATE", "sequence", "windows");
        for (id, summary, row) in &rows {
            println!("{:<10} {:>8}  {summary}", id, row.windows);
        }
        let report = PoseReport {
            checkpoint: args.checkpoint.as_deref().filter(|_| !args.oracle),
            oracle: args.oracle,
            data: &args.data,
            window: ATE_WINDOW,
            sequences: rows.into_iter().map(|r| r.2).collect(),
        };
        let written = export_artifacts(
            &out,
            &Artifacts {
                trajectories: trajectories
                    .iter()
                    .map(|(n, p, g)| (n.clone(), p, Some(g)))
                    .collect(),
                depth_maps: Vec::new(),
                metrics: Some(&report),
            },
        )?;
        log::info!("wrote {} files", written.len());
        Ok(())
    })
}

#[derive(Serialize)]
struct DepthSequence {
    id: String,
    frames: usize,
    metrics: DepthMetrics,
}

#[derive(Serialize)]
struct DepthReport<'a> {
    checkpoint: Option<&'a Path>,
    oracle: bool,
    data: &'a str,
    cap: DepthCap,
    sequences: Vec<DepthSequence>,
    mean: DepthMetrics,
}

fn stack(frames: &[Tensor]) -> Result<Tensor> {
    let mut shape = vec![frames.len()];
    shape.extend_from_slice(frames[0].shape());
    Tensor::new(
        shape,
        frames
            .iter()
            .flat_map(|f| f.data().iter().copied())
            .collect(),
    )
}

fn predicted_depths(
    model: Option<&GanVo>,
    seq: &FrameSequence,
    gt: &[DepthMap],
) -> Result<Vec<DepthMap>> {
    let Some(model) = model else {
        return Ok(gt.to_vec());
    };
    let frames = seq.frames().collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(frames.len());
    for chunk in frames.chunks(DEPTH_BATCH) {
        out.extend(model.predict_depth(&stack(chunk)?)?);
    }
    Ok(out)
}

pub fn depth(args: EvalDepthArgs) -> Result<()> {
    let cap = DepthCap::from(args.cap);
    let args = args.eval;
    let seed = args.output.seed.unwrap_or(0);
    let out = out_dir(&args, "eval-depth");
    with_manifest("eval-depth", &out, args.config.as_deref(), seed, || {
        let Setup { model, dataset } = setup(&args, seed)?;
        let mut rows = Vec::new();
        let mut all = Vec::new();
        let mut samples = Vec::new();
        for seq in &dataset.sequences {
            if !seq.has_depth() {
                return Err(Error::Data(format!(
                    "sequence {} has no ground-truth depth",
                    seq.id
                )));
            }
            let gt = (0..seq.len())
                .map(|i| Ok(seq.depth(i)?.expect("sequence has depth")))
                .collect::<Result<Vec<_>>>()?;
            let pred = predicted_depths(model.as_ref(), seq, &gt)?;
            let per_frame = pred
                .iter()
                .zip(&gt)
                .map(|(p, g)| depth_metrics(p, g, cap))
                .collect::<Result<Vec<_>>>()?;
            rows.push(DepthSequence {
                id: seq.id.clone(),
                frames: per_frame.len(),
                metrics: DepthMetrics::mean(&per_frame)?,
            });
            all.extend(per_frame);
            samples.push((
                format!("depth_{}_000000", seq.id),
                pred.into_iter().next().expect("non-empty"),
            ));
        }
        let mean = DepthMetrics::mean(&all)?;
        println!("Depth, median scaled, cap {cap} m");
        println!("{:<10}{}", "sequence", DepthMetrics::header());
        for r in &rows {
            println!("{:<10}{}", r.id, r.metrics.row());
        }
        println!("{:<10}{}", "mean", mean.row());
        let report = DepthReport {
            checkpoint: args.checkpoint.as_deref().filter(|_| !args.oracle),
            oracle: args.oracle,
            data: &args.data,
            cap,
            sequences: rows,
            mean,
        };
        let written = export_artifacts(
            &out,
            &Artifacts {
                trajectories: Vec::new(),
                depth_maps: samples.iter().map(|(n, d)| (n.clone(), d)).collect(),
                metrics: Some(&report),
            },
        )?;
        log::info!("wrote {} files", written.len());
        Ok(())
    })
}
