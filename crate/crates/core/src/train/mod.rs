//! Composite loss, cyclic schedule, optimizer stack, batch assembly and
//! the training loop.

mod batches;
mod loss;
mod optim;
mod schedule;

pub use batches::{make_epoch_batches, DatasetIndex, SampleRef};
pub use loss::{composite_loss, log_avg_exp, LossBreakdown, TERM_NAMES};
pub use optim::{centralize, optimizer_step, OptimizerConfig, OptimizerState};
pub use schedule::{schedule_at, ScheduleConfig};

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{training_view, AugmentConfig, TrainingView};
use crate::formats::SHARD_LEN;
use crate::nnet::{save_checkpoint, Tensor, UNet};
use crate::preprocess::{Echogram, Orientation, SegmentationTargets};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub cycles: usize,
    /// Caps the batches drawn per epoch; `None` uses the whole epoch.
    pub steps_per_epoch: Option<usize>,
    pub schedule: ScheduleConfig,
    pub optimizer: OptimizerConfig,
    pub augment: AugmentConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 12,
            cycles: 1,
            steps_per_epoch: None,
            schedule: ScheduleConfig::default(),
            optimizer: OptimizerConfig::default(),
            augment: AugmentConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.cycles == 0 || self.steps_per_epoch == Some(0) {
            return Err(Error::Config("batch size, cycles and steps per epoch must be positive".into()));
        }
        self.schedule.validate()?;
        self.optimizer.validate()?;
        self.augment.validate()
    }
}

/// Recordings of one orientation, split into shards for batch assembly.
#[derive(Debug, Clone)]
pub struct TrainDataset {
    pub name: String,
    pub upsample: usize,
    pub shard_len: usize,
    pub recordings: Vec<(Echogram, SegmentationTargets)>,
}

impl TrainDataset {
    pub fn new(name: impl Into<String>, recordings: Vec<(Echogram, SegmentationTargets)>) -> Self {
        Self { name: name.into(), upsample: 1, shard_len: SHARD_LEN, recordings }
    }

    pub fn orientation(&self) -> Result<Orientation> {
        let first = self
            .recordings
            .first()
            .ok_or_else(|| Error::Config(format!("dataset {} has no recordings", self.name)))?;
        let o = first.0.orientation;
        if self.recordings.iter().any(|(e, _)| e.orientation != o) {
            return Err(Error::Config(format!("dataset {} mixes orientations", self.name)));
        }
        Ok(o)
    }

    /// `(recording, first ping)` of every shard.
    pub fn shards(&self) -> Vec<(usize, usize)> {
        let len = self.shard_len.max(1);
        self.recordings
            .iter()
            .enumerate()
            .flat_map(|(r, (e, _))| (0..e.n_pings()).step_by(len).map(move |s| (r, s)))
            .collect()
    }

    pub fn index(&self) -> Result<DatasetIndex> {
        Ok(DatasetIndex {
            name: self.name.clone(),
            orientation: self.orientation()?,
            shards: self.shards().len(),
            upsample: self.upsample,
        })
    }
}

/// Summary of one optimizer step, as written to the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub cycle: usize,
    pub epoch: usize,
    pub lr: f64,
    pub beta1: f64,
    pub loss: LossBreakdown,
}

impl StepRecord {
    /// One `key=value` line.
    pub fn log_line(&self) -> String {
        let mut s = format!(
            "step={} cycle={} epoch={} lr={:.6e} beta1={:.5} total={:.6}",
            self.step, self.cycle, self.epoch, self.lr, self.beta1, self.loss.total
        );
        for (name, v) in TERM_NAMES.iter().zip(self.loss.terms) {
            s.push_str(&format!(" {name}={v:.6}"));
        }
        s
    }
}

/// Stacks finalized views into a `[n, 1, w, h]` input batch.
pub fn batch_input(views: &[TrainingView]) -> Result<Tensor<f32>> {
    let first = views.first().ok_or_else(|| Error::Domain("empty batch".into()))?;
    let (w, h) = first.input.shape();
    let mut data = Vec::with_capacity(views.len() * w * h);
    for v in views {
        if v.input.shape() != (w, h) {
            return Err(Error::Alignment("views in a batch differ in shape".into()));
        }
        data.extend_from_slice(v.input.as_slice());
    }
    Tensor::from_vec(views.len(), 1, w, h, data)
}

/// Loss of a model on views without touching its parameters.
pub fn evaluate_loss(model: &UNet<f32>, views: &[TrainingView], training_mode: bool) -> Result<LossBreakdown> {
    let fwd = model.forward(&batch_input(views)?, training_mode)?;
    Ok(composite_loss(&fwd.logits, views, model.config.kind)?.0)
}

/// Owns the model, optimizer state and random stream of a training run.
pub struct Trainer {
    pub model: UNet<f32>,
    pub config: TrainConfig,
    pub state: OptimizerState,
    pub step: usize,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(model: UNet<f32>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if config.augment.shape != model.config.input {
            return Err(Error::Config(format!(
                "augmented shape {:?} differs from the model input {:?}",
                config.augment.shape, model.config.input
            )));
        }
        let state = OptimizerState::new(&model.params);
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self { model, config, state, step: 0, rng })
    }

    /// Forward, loss, backward and one optimizer step on a batch.
    pub fn train_step(&mut self, views: &[TrainingView], lr: f64, beta1: f64) -> Result<LossBreakdown> {
        let fwd = self.model.forward(&batch_input(views)?, true)?;
        let (loss, dlogits) = composite_loss(&fwd.logits, views, self.model.config.kind)?;
        let grads = self.model.backward(&fwd, &dlogits)?;
        let info = self.model.info.clone();
        optimizer_step(&mut self.model.params, &grads, &info, &mut self.state, &self.config.optimizer, lr, beta1)?;
        self.model.update_running(&fwd);
        self.step += 1;
        Ok(loss)
    }

    /// Augmented views for one batch of samples.
    pub fn draw_views(&mut self, data: &[TrainDataset], batch: &[SampleRef]) -> Result<Vec<TrainingView>> {
        let shards: Vec<Vec<(usize, usize)>> = data.iter().map(TrainDataset::shards).collect();
        batch
            .iter()
            .map(|s| {
                let d = &data[s.dataset];
                let (r, start) = shards[s.dataset][s.shard];
                let (e, t) = &d.recordings[r];
                // leave room for compressing stretches past the shard end
                let (lo, hi) = self.config.augment.stretch_range;
                let reach = (self.config.augment.shape.0 as f64 / lo.min(hi).max(1e-9)).ceil() as usize;
                let end = e.n_pings().min(start + d.shard_len.max(reach));
                training_view(&e.slice_pings(start, end), &t.slice_pings(start, end), &self.config.augment, &mut self.rng)
            })
            .collect()
    }

    /// Runs every cycle. `on_cycle_end` receives the cycle index after its
    /// last step, e.g. to save a checkpoint.
    pub fn run(
        &mut self,
        data: &[TrainDataset],
        log: &mut dyn Write,
        mut on_cycle_end: impl FnMut(usize, &UNet<f32>) -> Result<()>,
    ) -> Result<Vec<StepRecord>> {
        let index = data.iter().map(TrainDataset::index).collect::<Result<Vec<_>>>()?;
        let per_epoch = {
            let total: usize = index.iter().map(|d| d.shards * d.upsample).sum();
            let full = total.div_ceil(self.config.batch_size);
            self.config.steps_per_epoch.map_or(full, |cap| cap.min(full))
        };
        let mut records = Vec::new();
        for cycle in 0..self.config.cycles {
            let epochs = self.config.schedule.cycle_epochs(cycle);
            let total = epochs * per_epoch;
            let mut k = 0;
            for epoch in 0..epochs {
                let batches = make_epoch_batches(&index, self.config.batch_size, &mut self.rng)?;
                for batch in batches.iter().take(per_epoch) {
                    let (lr, beta1) = self.config.schedule.at(k, total, cycle)?;
                    let views = self.draw_views(data, batch)?;
                    let loss = self.train_step(&views, lr, beta1)?;
                    let rec = StepRecord { step: self.step, cycle, epoch, lr, beta1, loss };
                    writeln!(log, "{}", rec.log_line()).map_err(|e| Error::io("training log", e))?;
                    records.push(rec);
                    k += 1;
                }
            }
            on_cycle_end(cycle, &self.model)?;
        }
        Ok(records)
    }
}

/// Trains into `out_dir`, writing `train.log` and one checkpoint per cycle
/// (`cycle_NN.ckpt`, with `model.ckpt` tracking the latest).
pub fn train_to_dir(model: UNet<f32>, config: TrainConfig, data: &[TrainDataset], out_dir: &Path) -> Result<UNet<f32>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let log_path = out_dir.join("train.log");
    let mut log = std::io::BufWriter::new(std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?);
    let mut trainer = Trainer::new(model, config)?;
    let meta_config = serde_json::to_value(&trainer.config).unwrap_or_default();
    trainer.run(data, &mut log, |cycle, model| {
        let meta = serde_json::json!({ "cycle": cycle, "train": meta_config });
        save_checkpoint(model, meta.clone(), &out_dir.join(format!("cycle_{cycle:02}.ckpt")))?;
        save_checkpoint(model, meta, &out_dir.join("model.ckpt"))
    })?;
    log.flush().map_err(|e| Error::io(&log_path, e))?;
    Ok(trainer.model)
}
