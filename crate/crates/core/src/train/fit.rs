use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::batch::stack;
use super::config::TrainConfig;
use super::evaluate::{eval_batch, score_predictions};
use super::schedule::{cosine_annealing, PlateauState, Scheduler};
use crate::data::Sample;
use crate::error::{Error, IoContext, Result};
use crate::loss::combined_loss;
use crate::models::{Checkpoint, Model};
use crate::nn::Forward;
use crate::seed;

pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const RECORD_FILE: &str = "train_record.csv";
/// Wall-clock seconds per epoch, kept apart so the record stays reproducible.
pub const TIMING_FILE: &str = "timing.csv";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_dice: f64,
    /// Rate used during the epoch.
    pub lr: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub epochs: Vec<EpochRecord>,
}

pub const RECORD_HEADER: &str = "epoch,train_loss,val_loss,val_dice,lr";

impl TrainRecord {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{RECORD_HEADER}\n");
        for e in &self.epochs {
            writeln!(out, "{},{},{},{},{}", e.epoch, e.train_loss, e.val_loss, e.val_dice, e.lr).unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines();
        if lines.next() != Some(RECORD_HEADER) {
            return Err(format!("expected header '{RECORD_HEADER}'"));
        }
        let mut epochs = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(format!("row {}: expected 5 fields", i + 1));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| format!("row {}: {e}", i + 1));
            epochs.push(EpochRecord {
                epoch: f[0].parse().map_err(|e| format!("row {}: {e}", i + 1))?,
                train_loss: num(f[1])?,
                val_loss: num(f[2])?,
                val_dice: num(f[3])?,
                lr: num(f[4])?,
            });
        }
        Ok(TrainRecord { epochs })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).at(path)?;
        Self::from_csv(&text).map_err(|e| Error::format(path, e))
    }
}

/// Everything besides weights and moments needed to continue a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub config: TrainConfig,
    pub next_epoch: usize,
    pub step: u64,
    pub adam_step: u64,
    pub plateau: PlateauState,
    pub best_dice: Option<f64>,
    pub best_epoch: Option<usize>,
    pub since_best: usize,
    pub stopped_early: bool,
    pub record: TrainRecord,
}

/// Owns the model, optimiser and schedule for one run.
pub struct Trainer {
    pub model: Model<f32>,
    pub adam: AdamState<f32>,
    pub progress: Progress,
    /// Weights from the epoch with the best validation Dice so far.
    pub best: Option<Model<f32>>,
    pub wall_seconds: Vec<f64>,
    /// Also write per-epoch wall times next to the record. Off by default so
    /// run directories are reproducible byte for byte.
    pub write_timing: bool,
}

fn moment_name(kind: &str, param: &str) -> String {
    format!("adam/{kind}/{param}")
}

impl Trainer {
    pub fn new(model: Model<f32>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = AdamState::new(&model.store, config.adam);
        let plateau = PlateauState::new(config.lr, config.plateau);
        let progress = Progress {
            config,
            next_epoch: 0,
            step: 0,
            adam_step: 0,
            plateau,
            best_dice: None,
            best_epoch: None,
            since_best: 0,
            stopped_early: false,
            record: TrainRecord::default(),
        };
        Ok(Trainer { model, adam, progress, best: None, wall_seconds: Vec::new(), write_timing: false })
    }

    /// Full training state: weights, buffers, moments and progress.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::from_model(&self.model);
        for (i, (_, name, _)) in self.model.store.iter().enumerate() {
            ckpt.tensors.push((moment_name("m", name), self.adam.m[i].clone()));
            ckpt.tensors.push((moment_name("v", name), self.adam.v[i].clone()));
        }
        ckpt.manifest.epoch = self.progress.next_epoch;
        ckpt.manifest.step = self.progress.step;
        ckpt.manifest.state = serde_json::to_value(&self.progress).expect("progress serialises");
        ckpt
    }

    /// Restores a run from [`Trainer::checkpoint`] output; `best` supplies
    /// the best-so-far weights when available.
    pub fn from_checkpoint(ckpt: &Checkpoint, best: Option<&Checkpoint>) -> Result<Self> {
        let progress: Progress = serde_json::from_value(ckpt.manifest.state.clone())
            .map_err(|e| Error::Invalid(format!("checkpoint has no resumable training state: {e}")))?;
        let model = ckpt.to_model()?;
        let mut adam = AdamState::new(&model.store, progress.config.adam);
        adam.step = progress.adam_step;
        for (i, (_, name, t)) in model.store.iter().enumerate() {
            for (kind, dst) in [("m", &mut adam.m[i]), ("v", &mut adam.v[i])] {
                let key = moment_name(kind, name);
                let src = ckpt.tensor(&key).ok_or_else(|| Error::Invalid(format!("checkpoint lacks {key}")))?;
                if src.shape() != t.shape() {
                    return Err(Error::Invalid(format!("{key} has shape {:?}", src.shape())));
                }
                *dst = src.clone();
            }
        }
        let best = best.map(Checkpoint::to_model).transpose()?;
        Ok(Trainer { model, adam, progress, best, wall_seconds: Vec::new(), write_timing: false })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.progress.config
    }

    pub fn finished(&self) -> bool {
        self.progress.stopped_early || self.progress.next_epoch >= self.progress.config.epochs
    }

    fn epoch_lr(&self, epoch: usize) -> f64 {
        let c = &self.progress.config;
        match c.scheduler {
            Scheduler::ReduceOnPlateau => self.progress.plateau.lr,
            Scheduler::CosineAnnealing => cosine_annealing(epoch, c.epochs, c.lr),
            Scheduler::Constant => c.lr,
        }
    }

    /// One optimisation step on a batch; returns the batch loss.
    pub fn train_step(&mut self, batch: &[&Sample], lr: f64) -> Result<f64> {
        let cfg = self.progress.config.clone();
        let (x, y) = stack(batch)?;
        let dropout_seed = seed::derive(cfg.master_seed, &[seed::label("dropout"), self.progress.step]);
        let (loss, grads, updates) = {
            let f = Forward::train(&self.model.store, dropout_seed);
            let p = self.model.forward(&f, &f.input(x))?;
            let loss = combined_loss(&p, &f.input(y), &cfg.loss)?;
            let value = loss.value().data()[0] as f64;
            if !value.is_finite() {
                return Err(Error::Numeric(format!("loss became {value} at step {}", self.progress.step)));
            }
            let mut g = f.tape().backward(&loss)?;
            (value, f.param_grads(&mut g), f.take_bn_updates())
        };
        adam_step(&mut self.model.store, &grads, &mut self.adam, lr, cfg.weight_decay)?;
        self.model.store.apply_batch_stats(&updates, cfg.bn_momentum);
        self.progress.step += 1;
        self.progress.adam_step = self.adam.step;
        Ok(loss)
    }

    /// Validation loss and macro Dice with dropout off and running statistics.
    pub fn validate(&self, val: &[Sample]) -> Result<(f64, f64)> {
        if val.is_empty() {
            return Err(Error::Invalid("validation set is empty".into()));
        }
        let cfg = &self.progress.config;
        let mut loss = 0.0;
        let mut probs = Vec::with_capacity(val.len());
        for chunk in val.chunks(cfg.batch_size) {
            let refs: Vec<&Sample> = chunk.iter().collect();
            let (p, l) = eval_batch(&self.model, &refs, &cfg.loss)?;
            loss += l * chunk.len() as f64;
            let n = p.numel() / chunk.len();
            probs.extend(p.data().chunks_exact(n).map(<[f32]>::to_vec));
        }
        let eval = score_predictions(val, &probs, cfg.threshold)?;
        Ok((loss / val.len() as f64, eval.report.mean().expect("nonempty").dice))
    }

    /// Shuffled minibatch pass, validation, schedule update and best tracking.
    pub fn run_epoch(&mut self, train: &[Sample], val: &[Sample]) -> Result<EpochRecord> {
        if train.is_empty() {
            return Err(Error::Invalid("training set is empty".into()));
        }
        let epoch = self.progress.next_epoch;
        let cfg = self.progress.config.clone();
        let lr = self.epoch_lr(epoch);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed::derive(cfg.master_seed, &[seed::label("shuffle"), epoch as u64])));
        let mut total = 0.0;
        let mut batches = 0;
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = idx.iter().map(|&i| &train[i]).collect();
            total += self.train_step(&batch, lr)?;
            batches += 1;
        }
        let (val_loss, val_dice) = self.validate(val)?;
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!("validation loss became {val_loss} in epoch {epoch}")));
        }
        if cfg.scheduler == Scheduler::ReduceOnPlateau {
            self.progress.plateau.step(val_loss);
        }
        let record = EpochRecord { epoch, train_loss: total / batches as f64, val_loss, val_dice, lr };
        self.progress.record.epochs.push(record);
        if self.progress.best_dice.map_or(true, |b| val_dice > b) {
            self.progress.best_dice = Some(val_dice);
            self.progress.best_epoch = Some(epoch);
            self.progress.since_best = 0;
            self.best = Some(self.model.clone());
        } else {
            self.progress.since_best += 1;
        }
        self.progress.next_epoch += 1;
        if cfg.early_stop_patience.is_some_and(|p| self.progress.since_best >= p) {
            self.progress.stopped_early = true;
        }
        Ok(record)
    }

    /// Trains until the epoch cap or early stop. With `run_dir`, writes the
    /// latest and best checkpoints and the record after every epoch, so a
    /// failure leaves the last good state on disk.
    pub fn fit(&mut self, train: &[Sample], val: &[Sample], run_dir: Option<&Path>) -> Result<&TrainRecord> {
        if let Some(dir) = run_dir {
            fs::create_dir_all(dir).at(dir)?;
        }
        while !self.finished() {
            let start = Instant::now();
            let improved_before = self.progress.best_epoch;
            self.run_epoch(train, val)?;
            self.wall_seconds.push(start.elapsed().as_secs_f64());
            if let Some(dir) = run_dir {
                self.checkpoint().write(&dir.join(LAST_CHECKPOINT))?;
                if self.progress.best_epoch != improved_before {
                    self.best_checkpoint().expect("best model present").write(&dir.join(BEST_CHECKPOINT))?;
                }
                self.write_record(dir)?;
            }
        }
        Ok(&self.progress.record)
    }

    pub fn best_checkpoint(&self) -> Option<Checkpoint> {
        self.best.as_ref().map(|m| {
            let mut c = Checkpoint::from_model(m);
            c.manifest.epoch = self.progress.best_epoch.map_or(0, |e| e + 1);
            c
        })
    }

    fn write_record(&self, dir: &Path) -> Result<()> {
        let path = dir.join(RECORD_FILE);
        fs::write(&path, self.progress.record.to_csv()).at(&path)?;
        if !self.write_timing {
            return Ok(());
        }
        let path = dir.join(TIMING_FILE);
        let first = self.progress.next_epoch - self.wall_seconds.len();
        let mut timing = String::from("epoch,wall_seconds\n");
        for (i, s) in self.wall_seconds.iter().enumerate() {
            writeln!(timing, "{},{s:.3}", first + i).unwrap();
        }
        fs::write(&path, timing).at(&path)
    }
}
