use std::path::{Path, PathBuf};

use super::config::{CorpusSource, ExperimentConfig};
use crate::data::{
    limit_peak, load_wav, mix_at_snr, resample, snr_label, split_dataset, sub_rng, synth_corpus, write_wav,
    AudioBuffer, DatasetManifest, ManifestEntry, Split,
};
use crate::error::{Error, Result};

const STREAM_RAW_MIX: u64 = 4;

/// Materializes the corpus under `data_dir` and writes its manifest.
///
/// Files are stored at the processing rate. Normalization and clip
/// segmentation are deterministic and happen when clips are loaded.
pub fn cmd_prepare(cfg: &ExperimentConfig) -> Result<DatasetManifest> {
    let dir = &cfg.data.data_dir;
    let rate = cfg.data.sample_rate;
    let manifest = match &cfg.data.source {
        CorpusSource::Synth(spec) => {
            let corpus = synth_corpus(spec, dir)?;
            let mut manifest = corpus.manifest;
            if spec.sample_rate != rate {
                for p in &corpus.pairs {
                    write_wav(&dir.join(&p.entry.clean), &resample(&p.clean, rate))?;
                    write_wav(&dir.join(&p.entry.noisy), &resample(&p.noisy, rate))?;
                }
                manifest.sample_rate = rate;
            }
            manifest
        }
        CorpusSource::Raw {
            clean_dir,
            noise_dir,
            snr_levels,
            split_ratios,
        } => {
            let manifest = mix_raw(clean_dir, noise_dir, snr_levels, rate, cfg.seed, dir)?;
            split_dataset(manifest, *split_ratios, cfg.seed)?
        }
    };
    if manifest.entries.is_empty() {
        return Err(Error::Dataset("prepared corpus is empty".into()));
    }
    manifest.save(&cfg.data.manifest)?;
    log::info!(
        "prepared {} pairs (train {}, val {}, test {}) in {}",
        manifest.entries.len(),
        manifest.count(Split::Train),
        manifest.count(Split::Val),
        manifest.count(Split::Test),
        dir.display()
    );
    Ok(manifest)
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Dataset(format!("no .wav files in {}", dir.display())));
    }
    Ok(files)
}

fn load_at(path: &Path, rate: u32) -> Result<AudioBuffer> {
    let a = load_wav(path)?;
    Ok(if a.sample_rate == rate { a } else { resample(&a, rate) })
}

/// Mixes every clean file with noise recordings (round-robin) at each level.
fn mix_raw(clean_dir: &Path, noise_dir: &Path, levels: &[f64], rate: u32, seed: u64, out: &Path) -> Result<DatasetManifest> {
    let clean_files = wav_files(clean_dir)?;
    let noises = wav_files(noise_dir)?
        .iter()
        .map(|p| load_at(p, rate).map(|a| (p.clone(), a)))
        .collect::<Result<Vec<_>>>()?;
    let mut entries = Vec::new();
    for (u, path) in clean_files.iter().enumerate() {
        let mut clean = load_at(path, rate)?.samples;
        let stem = path.file_stem().map_or_else(|| format!("utt{u:03}"), |s| s.to_string_lossy().into_owned());
        let mut mixes = Vec::with_capacity(levels.len());
        for (j, &snr) in levels.iter().enumerate() {
            let (noise_path, noise) = &noises[(u + j) % noises.len()];
            let mut rng = sub_rng(seed, STREAM_RAW_MIX, (u * levels.len() + j) as u64);
            let noisy = mix_at_snr(&clean, &noise.samples, snr, &mut rng)
                .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?
                .noisy;
            let kind = noise_path
                .file_stem()
                .map_or_else(|| "noise".to_string(), |s| s.to_string_lossy().into_owned());
            mixes.push((kind, snr, noisy));
        }
        limit_peak(&mut clean, mixes.iter_mut().map(|m| &mut m.2));
        let clean_rel = PathBuf::from(format!("clean/{stem}.wav"));
        write_wav(&out.join(&clean_rel), &AudioBuffer::new(rate, clean))?;
        for (kind, snr, noisy) in mixes {
            let noisy_rel = PathBuf::from(format!("noisy/{stem}_{kind}_{}db.wav", snr_label(snr)));
            write_wav(&out.join(&noisy_rel), &AudioBuffer::new(rate, noisy))?;
            entries.push(ManifestEntry {
                clean: clean_rel.clone(),
                noisy: noisy_rel,
                split: Split::Train,
                noise: kind,
                snr_db: snr,
            });
        }
    }
    Ok(DatasetManifest {
        seed,
        sample_rate: rate,
        entries,
    })
}
