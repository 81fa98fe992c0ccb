//! Audio ingestion and corpus preparation.

mod audio;
mod clips;
mod manifest;
mod mix;
mod resample;
mod synth;
mod wav;

pub(crate) use synth::{limit_peak, snr_label, sub_rng};

pub use audio::{normalize, AudioBuffer, NormMeta};
pub use clips::{expected_clip_count, load_clip_set, segment, ClipLayout, ClipPair};
pub use manifest::{split_dataset, DatasetManifest, ManifestEntry, Split, MANIFEST_HEADER};
pub use mix::{fit_noise, mix_at_snr, signal_power, Mixture};
pub use resample::{resample, ResamplerConfig};
pub use synth::{synth_clean, synth_corpus, synth_noise, NoiseKind, SynthCorpus, SynthPair, SynthSpec};
pub use wav::{load_wav, write_wav};
