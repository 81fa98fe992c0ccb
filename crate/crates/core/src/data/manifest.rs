use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::clips::load_at_rate;
use super::AudioBuffer;
use crate::error::{Error, Result};

/// Column header of the manifest body.
pub const MANIFEST_HEADER: &str = "clean\tnoisy\tsplit\tnoise\tsnr_db";
const MAGIC: &str = "# sunet manifest v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Dataset(format!("unknown split `{other}`"))),
        }
    }
}

/// One clean/noisy pair. Paths are relative to the manifest directory.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub clean: PathBuf,
    pub noisy: PathBuf,
    pub split: Split,
    pub noise: String,
    pub snr_db: f64,
}

impl ManifestEntry {
    /// Identifier used in reports: the noisy file stem.
    pub fn id(&self) -> String {
        self.noisy
            .file_stem()
            .map_or_else(|| self.noisy.display().to_string(), |s| s.to_string_lossy().into_owned())
    }

    /// Loads both files at `sample_rate`, resampling when needed.
    pub fn load(&self, root: &Path, sample_rate: u32) -> Result<(AudioBuffer, AudioBuffer)> {
        let clean = load_at_rate(&root.join(&self.clean), sample_rate)?;
        let noisy = load_at_rate(&root.join(&self.noisy), sample_rate)?;
        if clean.len() != noisy.len() {
            return Err(Error::Dataset(format!(
                "{}: clean has {} samples, noisy has {}",
                self.id(),
                clean.len(),
                noisy.len()
            )));
        }
        Ok((clean, noisy))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub seed: u64,
    /// Rate of the files on disk.
    pub sample_rate: u32,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }

    /// Text form: a magic line, `# key = value` lines, the column header,
    /// then one tab-separated record per pair.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "# seed = {}", self.seed);
        let _ = writeln!(out, "# sample_rate = {}", self.sample_rate);
        let _ = writeln!(out, "{MANIFEST_HEADER}");
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                e.clean.display(),
                e.noisy.display(),
                e.split,
                e.noise,
                e.snr_db
            );
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let bad = |n: usize, msg: String| Error::Dataset(format!("manifest line {}: {msg}", n + 1));
        match lines.next() {
            Some((_, l)) if l.trim() == MAGIC => {}
            _ => return Err(Error::Dataset("not a manifest (missing magic line)".into())),
        }
        let (mut seed, mut sample_rate) = (None, None);
        let mut entries = Vec::new();
        let mut header_seen = false;
        for (n, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let Some((k, v)) = rest.split_once('=') else { continue };
                let v = v.trim();
                match k.trim() {
                    "seed" => seed = Some(v.parse().map_err(|_| bad(n, format!("bad seed {v:?}")))?),
                    "sample_rate" => {
                        sample_rate = Some(v.parse().map_err(|_| bad(n, format!("bad rate {v:?}")))?)
                    }
                    _ => {}
                }
                continue;
            }
            if !header_seen {
                if line.trim_end() != MANIFEST_HEADER {
                    return Err(bad(n, format!("expected header {MANIFEST_HEADER:?}")));
                }
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [clean, noisy, split, noise, snr] = fields[..] else {
                return Err(bad(n, format!("expected 5 tab-separated fields, got {}", fields.len())));
            };
            entries.push(ManifestEntry {
                clean: PathBuf::from(clean),
                noisy: PathBuf::from(noisy),
                split: split.parse().map_err(|e: Error| bad(n, e.to_string()))?,
                noise: noise.to_string(),
                snr_db: snr.parse().map_err(|_| bad(n, format!("bad SNR {snr:?}")))?,
            });
        }
        if !header_seen {
            return Err(Error::Dataset("manifest has no header line".into()));
        }
        Ok(Self {
            seed: seed.ok_or_else(|| Error::Dataset("manifest lacks `seed`".into()))?,
            sample_rate: sample_rate.ok_or_else(|| Error::Dataset("manifest lacks `sample_rate`".into()))?,
            entries,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Fails if any referenced file is missing under `root`.
    pub fn check_files(&self, root: &Path) -> Result<()> {
        for e in &self.entries {
            for p in [&e.clean, &e.noisy] {
                if !root.join(p).is_file() {
                    return Err(Error::Dataset(format!("missing file {}", root.join(p).display())));
                }
            }
        }
        Ok(())
    }
}

/// Assigns splits by a seeded shuffle.
///
/// Entries sharing a clean file form one group and always land in the same
/// split, so no clean utterance is seen in both training and testing. With
/// `n` groups the sizes are `floor(r₀·n/Σr)`, `floor(r₁·n/Σr)` and the rest.
/// When every clean file is distinct this is a plain per-entry split.
pub fn split_dataset(mut manifest: DatasetManifest, ratios: [usize; 3], seed: u64) -> Result<DatasetManifest> {
    let total: usize = ratios.iter().sum();
    if total == 0 {
        return Err(Error::InvalidArgument("split ratios sum to zero".into()));
    }
    let mut groups: BTreeMap<&Path, Vec<usize>> = BTreeMap::new();
    for (i, e) in manifest.entries.iter().enumerate() {
        groups.entry(e.clean.as_path()).or_default().push(i);
    }
    let mut groups: Vec<Vec<usize>> = groups.into_values().collect();
    // Order groups by first appearance so the result depends only on entry order.
    groups.sort_by_key(|g| g[0]);
    let n = groups.len();
    if n < 10 {
        return Err(Error::Dataset(format!(
            "need at least 10 distinct clean utterances to split, found {n}"
        )));
    }
    let n_train = ratios[0] * n / total;
    let n_val = ratios[1] * n / total;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    groups.shuffle(&mut rng);
    for (rank, group) in groups.iter().enumerate() {
        let split = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
        for &i in group {
            manifest.entries[i].split = split;
        }
    }
    manifest.seed = seed;
    Ok(manifest)
}
