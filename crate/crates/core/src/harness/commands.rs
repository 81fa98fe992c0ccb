use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::{train, TrainReport};
use crate::data::{load_clip_set, load_wav, resample, write_wav, AudioBuffer, ClipPair, DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalPair, MetricSet, MetricsReport, PesqCommand};
use crate::model::{build_model, load_checkpoint, Model, UNetConfig, Variant};
use crate::rf::receptive_field;

/// Anything that maps a noisy utterance to an enhanced one.
pub trait Enhancer {
    fn name(&self) -> String;
    fn enhance(&self, noisy: &AudioBuffer) -> Result<AudioBuffer>;
}

impl Enhancer for Model {
    fn name(&self) -> String {
        self.config().variant.display_name().to_string()
    }

    fn enhance(&self, noisy: &AudioBuffer) -> Result<AudioBuffer> {
        Model::enhance(self, noisy, None)
    }
}

/// Passes its input through unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl Enhancer for Identity {
    fn name(&self) -> String {
        "Identity".into()
    }

    fn enhance(&self, noisy: &AudioBuffer) -> Result<AudioBuffer> {
        Ok(noisy.clone())
    }
}

/// Loads the training and validation clips named by the config.
pub fn load_training_clips(cfg: &ExperimentConfig) -> Result<(Vec<ClipPair>, Vec<ClipPair>)> {
    let manifest = DatasetManifest::load(&cfg.data.manifest)?;
    let layout = cfg.data.layout()?;
    let root = &cfg.data.data_dir;
    let mut train_clips = load_clip_set(&manifest, root, Split::Train, cfg.data.sample_rate, layout)?;
    if let Some(n) = cfg.data.max_train_clips {
        train_clips.truncate(n);
    }
    let val_clips = load_clip_set(&manifest, root, Split::Val, cfg.data.sample_rate, layout)?;
    Ok((train_clips, val_clips))
}

/// Builds the configured model, logs its parameter audit against the
/// baseline of the same widths, and trains it.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<(Model, TrainReport)> {
    let (train_clips, val_clips) = load_training_clips(cfg)?;
    if train_clips.is_empty() {
        return Err(Error::Dataset("training split has no clips".into()));
    }
    let mut model = build_model(&cfg.model, cfg.seed)?;
    log_audit(&model)?;
    log::info!(
        "training {} on {} clips ({} validation)",
        model.config().variant,
        train_clips.len(),
        val_clips.len()
    );
    let report = train(&mut model, &train_clips, &val_clips, &cfg.train, |_| {})?;
    Ok((model, report))
}

fn log_audit(model: &Model) -> Result<()> {
    let audit = model.audit();
    log::info!("parameter audit:\n{}", audit.render());
    if model.config().variant != Variant::Baseline {
        let base_cfg = UNetConfig {
            variant: Variant::Baseline,
            ..model.config().clone()
        };
        let base = build_model(&base_cfg, 0)?.audit();
        let delta = audit.total() as i64 - base.total() as i64;
        log::info!("parameter delta vs baseline: {delta}");
        for line in audit.diff(&base) {
            log::info!("  {line}");
        }
    }
    Ok(())
}

/// Enhances one WAV file with a checkpoint.
///
/// Input at another rate is an error unless `allow_resample` is set, in which
/// case it is resampled to the model rate first.
pub fn cmd_enhance(checkpoint: &Path, input: &Path, output: &Path, allow_resample: bool) -> Result<AudioBuffer> {
    let model = load_checkpoint(checkpoint)?.model;
    let rate = model.config().sample_rate;
    let mut audio = load_wav(input)?;
    if audio.sample_rate != rate {
        if !allow_resample {
            return Err(Error::SampleRate {
                expected: rate,
                actual: audio.sample_rate,
            });
        }
        audio = resample(&audio, rate);
    }
    let out = model.enhance(&audio, None)?;
    write_wav(output, &out)?;
    Ok(out)
}

/// Loads the whole utterances of one split.
pub fn load_eval_pairs(manifest: &DatasetManifest, root: &Path, split: Split, rate: u32) -> Result<Vec<EvalPair>> {
    let pairs = manifest
        .split(split)
        .map(|e| {
            let (clean, noisy) = e.load(root, rate)?;
            Ok(EvalPair { id: e.id(), clean, noisy })
        })
        .collect::<Result<Vec<_>>>()?;
    if pairs.is_empty() {
        return Err(Error::Dataset(format!("split `{split}` is empty")));
    }
    Ok(pairs)
}

/// Enhances every pair with every system, writes the enhanced audio under
/// `output_dir/enhanced/<system>/`, and scores Input plus each system.
pub fn evaluate_systems(
    pairs: &[EvalPair],
    systems: &[&dyn Enhancer],
    metrics: MetricSet,
    pesq: Option<&PesqCommand>,
    output_dir: Option<&Path>,
) -> Result<MetricsReport> {
    let mut outputs = Vec::with_capacity(systems.len());
    for sys in systems {
        let name = sys.name();
        let dir: Option<PathBuf> = output_dir.map(|d| d.join("enhanced").join(slug(&name)));
        let outs = pairs
            .iter()
            .map(|p| {
                let out = sys.enhance(&p.noisy)?;
                if let Some(dir) = &dir {
                    write_wav(&dir.join(format!("{}.wav", p.id)), &out)?;
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        outputs.push((name, outs));
    }
    let report = evaluate(pairs, &outputs, metrics, pesq)?;
    if let Some(dir) = output_dir {
        report.save(dir)?;
    }
    Ok(report)
}

fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect()
}

/// Scores checkpoints on one split of the configured manifest.
pub fn cmd_evaluate(cfg: &ExperimentConfig, checkpoints: &[PathBuf], split: Split) -> Result<MetricsReport> {
    let manifest = DatasetManifest::load(&cfg.data.manifest)?;
    let pairs = load_eval_pairs(&manifest, &cfg.data.data_dir, split, cfg.data.sample_rate)?;
    let models = checkpoints
        .iter()
        .map(|p| load_checkpoint(p).map(|c| c.model))
        .collect::<Result<Vec<_>>>()?;
    let systems: Vec<&dyn Enhancer> = models.iter().map(|m| m as &dyn Enhancer).collect();
    evaluate_systems(
        &pairs,
        &systems,
        cfg.eval.metrics,
        cfg.eval.pesq.as_ref(),
        Some(&cfg.eval.output_dir),
    )
}

/// Receptive-field table of the configured encoder at `sample_rate`.
pub fn cmd_rf_report(model: &UNetConfig, sample_rate: f64) -> Result<String> {
    model.validate()?;
    Ok(receptive_field(&model.encoder_layers())?.render(sample_rate))
}
