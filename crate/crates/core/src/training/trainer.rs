use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::losses::estimate_beta;
use super::step::{train_step, LossReport, Optimizers};
use super::{Beta, TrainConfig};
use crate::data::{Batch, Dataset, Prefetcher};
use crate::error::{Error, Result};
use crate::networks::{save_checkpoint, GanVo};

/// Current balance factor. In automatic mode it is re-estimated from the
/// last `window` steps every `window` steps.
#[derive(Clone, Debug)]
pub struct BetaSchedule {
    mode: Beta,
    window: usize,
    current: f64,
    l_g: Vec<f64>,
    l_d: Vec<f64>,
    recorded: usize,
}

impl BetaSchedule {
    pub fn new(config: &TrainConfig) -> Self {
        Self {
            mode: config.beta,
            window: config.beta_window,
            current: match config.beta {
                Beta::Fixed(b) => b,
                Beta::Auto => config.beta_initial,
            },
            l_g: Vec::new(),
            l_d: Vec::new(),
            recorded: 0,
        }
    }

    pub fn current(&self) -> f64 {
        self.current
    }

    pub fn record(&mut self, report: &LossReport) -> Result<()> {
        if self.mode != Beta::Auto {
            return Ok(());
        }
        self.l_g.push(report.l_g);
        self.l_d.push(report.l_d);
        self.recorded += 1;
        if self.recorded.is_multiple_of(self.window) {
            self.current = estimate_beta(&self.l_g, &self.l_d, self.window)?;
            self.l_g.clear();
            self.l_d.clear();
        }
        Ok(())
    }
}

/// Loss CSV with one row per step.
pub struct LossLog {
    path: PathBuf,
    out: BufWriter<File>,
}

impl LossLog {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut log = Self {
            out: BufWriter::new(file),
            path,
        };
        log.write_line(LossReport::CSV_HEADER)?;
        Ok(log)
    }

    fn write_line(&mut self, line: &str) -> Result<()> {
        writeln!(self.out, "{line}").map_err(|e| Error::io(&self.path, e))
    }

    pub fn append(&mut self, report: &LossReport) -> Result<()> {
        self.write_line(&report.csv_row())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// File names inside a training output directory.
pub const LOSS_CSV: &str = "losses.csv";
pub const FINAL_CHECKPOINT: &str = "model.ckpt";
pub const CHECKPOINT_DIR: &str = "checkpoints";

pub fn periodic_checkpoint_name(step: u64) -> String {
    format!("step_{step:06}.ckpt")
}

/// Model, optimizers and balance schedule of one run.
pub struct Trainer {
    pub config: TrainConfig,
    pub model: GanVo,
    pub optimizers: Optimizers,
    pub beta: BetaSchedule,
    step: u64,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = GanVo::new(config.arch.clone(), config.seed)?;
        Ok(Self {
            optimizers: Optimizers::new(&config, &model),
            beta: BetaSchedule::new(&config),
            model,
            config,
            step: 0,
        })
    }

    /// Steps taken so far.
    pub fn steps_done(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, batch: &Batch) -> Result<LossReport> {
        let step = self.step + 1;
        let report = train_step(
            &mut self.model,
            &mut self.optimizers,
            batch,
            &self.config,
            self.beta.current(),
            step,
        )?;
        self.beta.record(&report)?;
        self.step = step;
        Ok(report)
    }

    /// Checks that `dataset` can feed this model.
    pub fn check_dataset(&self, dataset: &Dataset) -> Result<()> {
        let (h, w) = dataset.frame_size()?;
        let arch = &self.config.arch;
        if (h, w) != (arch.height, arch.width) {
            return Err(Error::Config(format!(
                "dataset frames are {h}x{w}, architecture expects {}x{}",
                arch.height, arch.width
            )));
        }
        Ok(())
    }

    /// Runs `config.steps` steps on batches drawn from `dataset`. With an
    /// output directory, writes the loss CSV, periodic checkpoints and the
    /// final checkpoint there.
    pub fn run(
        &mut self,
        dataset: Arc<Dataset>,
        out_dir: Option<&Path>,
        mut on_report: impl FnMut(&LossReport),
    ) -> Result<Vec<LossReport>> {
        self.check_dataset(&dataset)?;
        let mut loader = Prefetcher::spawn(
            dataset,
            self.config.arch.seq_len,
            self.config.batch_size,
            self.config.seed,
        )?;
        let mut log = match out_dir {
            Some(dir) => {
                let ckpt = dir.join(CHECKPOINT_DIR);
                std::fs::create_dir_all(&ckpt).map_err(|e| Error::io(&ckpt, e))?;
                Some(LossLog::create(dir.join(LOSS_CSV))?)
            }
            None => None,
        };
        let mut reports = Vec::with_capacity(self.config.steps as usize);
        for _ in 0..self.config.steps {
            let batch = loader.next_batch()?;
            let report = self.step(&batch)?;
            on_report(&report);
            reports.push(report);
            if let (Some(log), Some(dir)) = (log.as_mut(), out_dir) {
                log.append(&report)?;
                let every = self.config.checkpoint_every;
                if every > 0 && self.step.is_multiple_of(every) {
                    log.flush()?;
                    let path = dir
                        .join(CHECKPOINT_DIR)
                        .join(periodic_checkpoint_name(self.step));
                    save_checkpoint(&self.model, self.step, path)?;
                }
            }
        }
        if let (Some(mut log), Some(dir)) = (log, out_dir) {
            log.flush()?;
            save_checkpoint(&self.model, self.step, dir.join(FINAL_CHECKPOINT))?;
        }
        Ok(reports)
    }
}
