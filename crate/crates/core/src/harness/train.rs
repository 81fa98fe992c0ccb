use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::ClipPair;
use crate::error::{Error, Result};
use crate::kv::KvDoc;
use crate::model::{save_checkpoint, Model};
use crate::tensor::{AdamConfig, OptimizerState, Tape, Tensor3};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub seed: u64,
    pub adam: AdamConfig,
    /// When set, the learning rate follows a cosine from `adam.lr` down to
    /// this value at `max_steps`; otherwise it stays constant.
    pub min_lr: Option<f64>,
    pub batch_size: usize,
    pub max_steps: u64,
    pub eval_every: u64,
    /// Evaluations without improvement before stopping.
    pub patience: u32,
    /// Stop as soon as the validation L1 falls below this value.
    pub target_l1: Option<f64>,
    /// Where the best checkpoint and the log go; `None` keeps everything in memory.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            adam: AdamConfig::default(),
            min_lr: None,
            batch_size: 8,
            max_steps: 10_000,
            eval_every: 100,
            patience: 10,
            target_l1: None,
            checkpoint_dir: None,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.eval_every == 0 || self.max_steps == 0 {
            return Err(Error::Config("batch_size, eval_every and max_steps must be positive".into()));
        }
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} is not positive", self.adam.lr)));
        }
        if let Some(m) = self.min_lr {
            if !(m >= 0.0 && m <= self.adam.lr) {
                return Err(Error::Config(format!("min_lr {m} is not in [0, lr]")));
            }
        }
        Ok(())
    }

    /// Learning rate used for optimizer step `step` (1-based).
    pub fn lr_at(&self, step: u64) -> f64 {
        match self.min_lr {
            None => self.adam.lr,
            Some(floor) => {
                let t = (step.saturating_sub(1)) as f64 / self.max_steps.max(1) as f64;
                floor + 0.5 * (self.adam.lr - floor) * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}

/// One evaluation interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub step: u64,
    /// Mean minibatch loss since the previous row.
    pub train_l1: f64,
    pub val_l1: f64,
    pub best_val_l1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxSteps,
    Patience,
    Target,
}

/// Progress record; `lineage` lists (step, validation L1) of every saved best.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub step: u64,
    pub running_train_l1: f64,
    pub best_val_l1: f64,
    pub lineage: Vec<(u64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub state: TrainState,
    pub history: Vec<LogRow>,
    pub stop: StopReason,
    pub checkpoint: Option<PathBuf>,
}

impl TrainReport {
    pub fn best_step(&self) -> u64 {
        self.state.lineage.last().map_or(0, |l| l.0)
    }

    pub fn log_tsv(&self) -> String {
        let mut out = String::from("step\ttrain_l1\tval_l1\tbest_val_l1\n");
        for r in &self.history {
            let _ = writeln!(out, "{}\t{:.8}\t{:.8}\t{:.8}", r.step, r.train_l1, r.val_l1, r.best_val_l1);
        }
        out
    }
}

fn batch_tensors(clips: &[&ClipPair]) -> Result<(Tensor3<f32>, Tensor3<f32>, Vec<usize>)> {
    let len = clips[0].noisy.len();
    if clips.iter().any(|c| c.noisy.len() != len || c.clean.len() != len) {
        return Err(Error::Dataset("clips in a batch differ in length".into()));
    }
    let mut x = Vec::with_capacity(clips.len() * len);
    let mut y = Vec::with_capacity(clips.len() * len);
    for c in clips {
        x.extend_from_slice(&c.noisy);
        y.extend_from_slice(&c.clean);
    }
    let valid = clips.iter().map(|c| c.valid_len).collect();
    Ok((
        Tensor3::from_vec(clips.len(), 1, len, x)?,
        Tensor3::from_vec(clips.len(), 1, len, y)?,
        valid,
    ))
}

/// Mean L1 over the valid samples of `clips`, without gradients.
pub fn masked_l1(model: &Model, clips: &[ClipPair], batch_size: usize) -> Result<f64> {
    let (mut total, mut count) = (0.0f64, 0usize);
    for chunk in clips.chunks(batch_size.max(1)) {
        let refs: Vec<&ClipPair> = chunk.iter().collect();
        let (x, y, valid) = batch_tensors(&refs)?;
        let out = model.infer(&x)?;
        for (b, &v) in valid.iter().enumerate() {
            let p = out.row(b, 0);
            let t = y.row(b, 0);
            total += p[..v].iter().zip(&t[..v]).map(|(a, b)| f64::from((a - b).abs())).sum::<f64>();
            count += v;
        }
    }
    if count == 0 {
        return Err(Error::Dataset("no valid samples to evaluate".into()));
    }
    Ok(total / count as f64)
}

/// One optimizer step on a minibatch; returns the batch loss.
pub fn train_step(model: &mut Model, opt: &mut OptimizerState<f32>, batch: &[&ClipPair]) -> Result<f64> {
    let (x, y, valid) = batch_tensors(batch)?;
    let mut tape = Tape::new();
    let pv = model.bind(&mut tape);
    let xv = tape.constant(x);
    let yv = tape.constant(y);
    let pred = model.forward(&mut tape, xv, &pv)?;
    let loss = tape.l1_loss_masked(pred, yv, &valid)?;
    let value = f64::from(tape.value(loss).data()[0]);
    if !value.is_finite() {
        return Err(Error::Diverged {
            step: opt.step_count() + 1,
            loss: value,
        });
    }
    tape.backward(loss)?;
    let grads: Vec<&[f32]> = pv
        .iter()
        .map(|&v| tape.grad(v).map(|g| g.data()).unwrap_or(&[]))
        .collect();
    let mut params: Vec<&mut [f32]> = model.params_mut().iter_mut().map(|p| p.data.as_mut_slice()).collect();
    opt.step(&mut params, &grads)?;
    Ok(value)
}

/// Minimizes the masked L1 loss with Adam.
///
/// Batches follow a seeded per-epoch shuffle. Every `eval_every` steps the
/// validation L1 is measured (on the training clips when `val` is empty);
/// improvements are checkpointed and training stops after `patience`
/// evaluations without one. On return `model` holds the best parameters.
pub fn train(
    model: &mut Model,
    train: &[ClipPair],
    val: &[ClipPair],
    opts: &TrainOptions,
    mut on_log: impl FnMut(&LogRow),
) -> Result<TrainReport> {
    opts.validate()?;
    if train.is_empty() {
        return Err(Error::Dataset("training split has no clips".into()));
    }
    let val = if val.is_empty() { train } else { val };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = Vec::new();
    let mut opt = OptimizerState::new(opts.adam);
    let mut state = TrainState {
        step: 0,
        running_train_l1: 0.0,
        best_val_l1: f64::INFINITY,
        lineage: Vec::new(),
    };
    let mut history = Vec::new();
    let mut best_params = model.params().to_vec();
    let (mut interval_sum, mut interval_n) = (0.0, 0u64);
    let mut stale = 0u32;
    let checkpoint = opts.checkpoint_dir.as_ref().map(|d| d.join("best.ckpt"));
    let stop = loop {
        let mut batch = Vec::with_capacity(opts.batch_size);
        while batch.len() < opts.batch_size {
            if order.is_empty() {
                order = (0..train.len()).collect();
                order.shuffle(&mut rng);
                order.reverse();
            }
            batch.push(&train[order.pop().expect("refilled above")]);
        }
        opt.config.lr = opts.lr_at(state.step + 1);
        let loss = train_step(model, &mut opt, &batch)?;
        state.step += 1;
        interval_sum += loss;
        interval_n += 1;

        if state.step % opts.eval_every == 0 || state.step == opts.max_steps {
            state.running_train_l1 = interval_sum / interval_n as f64;
            (interval_sum, interval_n) = (0.0, 0);
            let val_l1 = masked_l1(model, val, opts.batch_size)?;
            if !val_l1.is_finite() {
                return Err(Error::Diverged {
                    step: state.step,
                    loss: val_l1,
                });
            }
            if val_l1 < state.best_val_l1 {
                state.best_val_l1 = val_l1;
                state.lineage.push((state.step, val_l1));
                best_params = model.params().to_vec();
                stale = 0;
                if let Some(path) = &checkpoint {
                    save_checkpoint(path, model, &checkpoint_meta(&state, opts))?;
                }
            } else {
                stale += 1;
            }
            let row = LogRow {
                step: state.step,
                train_l1: state.running_train_l1,
                val_l1,
                best_val_l1: state.best_val_l1,
            };
            log::info!(
                "step {:>6}  train L1 {:.6}  val L1 {:.6}  best {:.6}",
                row.step,
                row.train_l1,
                row.val_l1,
                row.best_val_l1
            );
            on_log(&row);
            history.push(row);
            if opts.target_l1.is_some_and(|t| val_l1 < t) {
                break StopReason::Target;
            }
            if stale >= opts.patience {
                break StopReason::Patience;
            }
        }
        if state.step >= opts.max_steps {
            break StopReason::MaxSteps;
        }
    };
    model.load_params(best_params)?;
    let report = TrainReport {
        state,
        history,
        stop,
        checkpoint,
    };
    if let Some(dir) = &opts.checkpoint_dir {
        write_log(dir, &report)?;
    }
    Ok(report)
}

fn checkpoint_meta(state: &TrainState, opts: &TrainOptions) -> KvDoc {
    let mut meta = KvDoc::new();
    meta.set("step", state.step);
    meta.set("val_l1", state.best_val_l1);
    meta.set("train_l1", state.running_train_l1);
    meta.set("seed", opts.seed);
    meta.set("lr", opts.adam.lr);
    if let Some(m) = opts.min_lr {
        meta.set("min_lr", m);
    }
    meta.set("batch_size", opts.batch_size);
    meta
}

fn write_log(dir: &Path, report: &TrainReport) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("train_log.tsv");
    std::fs::write(&path, report.log_tsv()).map_err(|e| Error::io(&path, e))
}
