//! Experiment configuration file.
//!
//! Flat `key = value` text; unknown keys are rejected. Relative paths are
//! resolved against the directory containing the file.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `seed` | required | master seed for data, init and batch order |
//! | `variant` | `baseline` | `baseline`, `aspp-middle`, `aspp-end`, `aspp-middle+end` |
//! | `widths` | `16,32,64,128,256,256` | encoder widths, one per block |
//! | `filter` | `30` | convolution filter size |
//! | `factors` | `1,2,3,4` | ASPP dilation factors |
//! | `slope` | `0.2` | leaky ReLU slope |
//! | `lr` | `1e-4` | Adam learning rate |
//! | `min_lr` | none | cosine-decay the learning rate to this value at `max_steps` |
//! | `batch_size` | `8` | clips per step |
//! | `max_steps` | `10000` | step limit |
//! | `eval_every` | `100` | steps between validations |
//! | `patience` | `10` | validations without improvement before stopping |
//! | `target_l1` | none | stop once validation L1 is below this |
//! | `checkpoint_dir` | `checkpoints` | best checkpoint and training log; `SUNET_CHECKPOINT_DIR` overrides |
//! | `data_dir` | `data` | corpus root written by `prepare` |
//! | `sample_rate` | `16000` | processing rate |
//! | `clip_s`, `hop_s` | `1.0`, `0.5` | clip length and hop in seconds |
//! | `max_train_clips` | none | use only the first N training clips |
//! | `source` | `synth` | `synth` or `raw` corpus |
//! | `snr_levels` | `15,10,5,0` | mixing SNRs in dB |
//! | `split_ratios` | `8,1,1` | train/val/test ratios |
//! | `synth.utterances` | `20` | synthetic utterances |
//! | `synth.min_duration_s`, `synth.max_duration_s` | `1.0`, `2.0` | utterance durations |
//! | `synth.source_rate` | `16000` | rate of generated files before resampling |
//! | `synth.noise_kinds` | `white,pink,babble` | noise generators |
//! | `raw.clean_dir`, `raw.noise_dir` | none | WAV folders for `source = raw` |
//! | `metrics` | `snr,ssnr,stoi,pesq` | measures to report |
//! | `pesq_command` | none | external scorer template with `{clean}` and `{test}` |
//! | `output_dir` | `results` | enhanced audio and reports |

use std::path::{Path, PathBuf};

use crate::data::{ClipLayout, NoiseKind, SynthSpec};
use crate::error::{Error, Result};
use crate::kv::{join, KvDoc};
use crate::metrics::{MetricSet, PesqCommand};
use crate::model::UNetConfig;
use crate::tensor::AdamConfig;

use super::TrainOptions;

pub const CHECKPOINT_DIR_ENV: &str = "SUNET_CHECKPOINT_DIR";

const KEYS: &[&str] = &[
    "seed",
    "variant",
    "widths",
    "filter",
    "factors",
    "slope",
    "lr",
    "min_lr",
    "batch_size",
    "max_steps",
    "eval_every",
    "patience",
    "target_l1",
    "checkpoint_dir",
    "data_dir",
    "sample_rate",
    "clip_s",
    "hop_s",
    "max_train_clips",
    "source",
    "snr_levels",
    "split_ratios",
    "synth.utterances",
    "synth.min_duration_s",
    "synth.max_duration_s",
    "synth.source_rate",
    "synth.noise_kinds",
    "raw.clean_dir",
    "raw.noise_dir",
    "metrics",
    "pesq_command",
    "output_dir",
];

#[derive(Debug, Clone, PartialEq)]
pub enum CorpusSource {
    Synth(SynthSpec),
    /// Clean and noise recordings mixed at `snr_levels`.
    Raw {
        clean_dir: PathBuf,
        noise_dir: PathBuf,
        snr_levels: Vec<f64>,
        split_ratios: [usize; 3],
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub data_dir: PathBuf,
    /// Always `<data_dir>/manifest.tsv`.
    pub manifest: PathBuf,
    pub sample_rate: u32,
    pub clip_s: f64,
    pub hop_s: f64,
    pub max_train_clips: Option<usize>,
    pub source: CorpusSource,
}

impl DataConfig {
    pub fn layout(&self) -> Result<ClipLayout> {
        ClipLayout::from_seconds(self.sample_rate, self.clip_s, self.hop_s)
    }

}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub metrics: MetricSet,
    pub pesq: Option<PesqCommand>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub model: UNetConfig,
    pub train: TrainOptions,
    pub data: DataConfig,
    pub eval: EvalConfig,
}

fn value<T: std::str::FromStr>(doc: &KvDoc, key: &str, default: T) -> Result<T> {
    Ok(doc.parse_value(key)?.unwrap_or(default))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let doc = KvDoc::parse(&text)?;
        Self::from_kv(&doc, base, std::env::var_os(CHECKPOINT_DIR_ENV).map(PathBuf::from))
    }

    /// Builds a config from parsed text; `checkpoint_override` replaces
    /// `checkpoint_dir` when given.
    pub fn from_kv(doc: &KvDoc, base: &Path, checkpoint_override: Option<PathBuf>) -> Result<Self> {
        doc.reject_unknown(KEYS)?;
        let seed: u64 = doc
            .parse_value("seed")?
            .ok_or_else(|| Error::Config("`seed` is required".into()))?;
        let path = |key: &str, default: &str| -> PathBuf { base.join(doc.get(key).unwrap_or(default)) };

        let d = UNetConfig::default();
        let model = UNetConfig {
            variant: value(doc, "variant", d.variant)?,
            widths: doc.parse_list("widths")?.unwrap_or(d.widths),
            filter: value(doc, "filter", d.filter)?,
            factors: doc.parse_list("factors")?.unwrap_or(d.factors),
            slope: value(doc, "slope", d.slope)?,
            sample_rate: value(doc, "sample_rate", d.sample_rate)?,
        };
        model.validate()?;

        let t = TrainOptions::default();
        let train = TrainOptions {
            seed,
            adam: AdamConfig {
                lr: value(doc, "lr", t.adam.lr)?,
                ..t.adam
            },
            min_lr: doc.parse_value("min_lr")?,
            batch_size: value(doc, "batch_size", t.batch_size)?,
            max_steps: value(doc, "max_steps", t.max_steps)?,
            eval_every: value(doc, "eval_every", t.eval_every)?,
            patience: value(doc, "patience", t.patience)?,
            target_l1: doc.parse_value("target_l1")?,
            checkpoint_dir: Some(checkpoint_override.unwrap_or_else(|| path("checkpoint_dir", "checkpoints"))),
        };
        train.validate()?;

        let data_dir = path("data_dir", "data");
        let manifest = data_dir.join("manifest.tsv");
        let snr_levels = doc.parse_list("snr_levels")?.unwrap_or_else(|| vec![15.0, 10.0, 5.0, 0.0]);
        let split_ratios: Vec<usize> = doc.parse_list("split_ratios")?.unwrap_or_else(|| vec![8, 1, 1]);
        let split_ratios: [usize; 3] = split_ratios
            .try_into()
            .map_err(|_| Error::Config("`split_ratios` needs exactly three values".into()))?;
        let source = match doc.get("source").unwrap_or("synth") {
            "synth" => {
                let s = SynthSpec::default();
                let kinds: Vec<String> = doc.parse_list("synth.noise_kinds")?.unwrap_or_default();
                let spec = SynthSpec {
                    utterances: value(doc, "synth.utterances", s.utterances)?,
                    min_duration_s: value(doc, "synth.min_duration_s", s.min_duration_s)?,
                    max_duration_s: value(doc, "synth.max_duration_s", s.max_duration_s)?,
                    sample_rate: value(doc, "synth.source_rate", s.sample_rate)?,
                    snr_levels,
                    noise_kinds: if kinds.is_empty() {
                        s.noise_kinds
                    } else {
                        kinds.iter().map(|k| k.parse()).collect::<Result<Vec<NoiseKind>>>()?
                    },
                    split_ratios,
                    seed,
                };
                spec.validate()?;
                CorpusSource::Synth(spec)
            }
            "raw" => {
                let dir = |key: &str| -> Result<PathBuf> {
                    doc.get(key)
                        .map(|p| base.join(p))
                        .ok_or_else(|| Error::Config(format!("`source = raw` needs `{key}`")))
                };
                CorpusSource::Raw {
                    clean_dir: dir("raw.clean_dir")?,
                    noise_dir: dir("raw.noise_dir")?,
                    snr_levels,
                    split_ratios,
                }
            }
            other => return Err(Error::Config(format!("unknown source `{other}` (synth or raw)"))),
        };
        let data = DataConfig {
            data_dir,
            manifest,
            sample_rate: model.sample_rate,
            clip_s: value(doc, "clip_s", 1.0)?,
            hop_s: value(doc, "hop_s", 0.5)?,
            max_train_clips: doc.parse_value("max_train_clips")?,
            source,
        };
        data.layout()?;
        if data.layout()?.clip % model.length_multiple() != 0 {
            return Err(Error::Config(format!(
                "clip length {} samples is not a multiple of {}",
                data.layout()?.clip,
                model.length_multiple()
            )));
        }

        let metrics: Vec<String> = doc
            .parse_list("metrics")?
            .unwrap_or_else(|| MetricSet::NAMES.iter().map(|s| s.to_string()).collect());
        let eval = EvalConfig {
            metrics: MetricSet::parse(&metrics)?,
            pesq: doc.get("pesq_command").filter(|c| !c.is_empty()).map(PesqCommand::new),
            output_dir: path("output_dir", "results"),
        };
        Ok(Self {
            seed,
            model,
            train,
            data,
            eval,
        })
    }

    /// Model part as key = value text, for logs.
    pub fn summary(&self) -> String {
        let mut doc = self.model.to_kv();
        doc.set("seed", self.seed);
        doc.set("lr", self.train.adam.lr);
        if let Some(m) = self.train.min_lr {
            doc.set("min_lr", m);
        }
        doc.set("batch_size", self.train.batch_size);
        doc.set("max_steps", self.train.max_steps);
        doc.set("factors", join(&self.model.factors));
        doc.render()
    }
}
