use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{pesq_external, snr, ssnr, stoi, PesqCommand};
use crate::data::{write_wav, AudioBuffer};
use crate::error::{Error, Result};

/// Reference and noisy input of one test utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPair {
    pub id: String,
    pub clean: AudioBuffer,
    pub noisy: AudioBuffer,
}

/// Which optional measures to compute; SNR is always reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MetricSet {
    pub ssnr: bool,
    pub stoi: bool,
    pub pesq: bool,
}

impl Default for MetricSet {
    fn default() -> Self {
        Self {
            ssnr: true,
            stoi: true,
            pesq: true,
        }
    }
}

impl MetricSet {
    pub const NAMES: [&'static str; 4] = ["snr", "ssnr", "stoi", "pesq"];

    pub fn parse<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let mut set = Self {
            ssnr: false,
            stoi: false,
            pesq: false,
        };
        for name in names {
            match name.as_ref() {
                "snr" => {}
                "ssnr" => set.ssnr = true,
                "stoi" => set.stoi = true,
                "pesq" => set.pesq = true,
                other => return Err(Error::Config(format!("unknown metric `{other}`"))),
            }
        }
        Ok(set)
    }
}

/// Scores of one utterance; `None` means not computed or unavailable.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub id: String,
    pub snr: f64,
    pub ssnr: Option<f64>,
    pub stoi: Option<f64>,
    pub pesq: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricMeans {
    pub snr: f64,
    /// Each optional mean is present only when every row has a value.
    pub ssnr: Option<f64>,
    pub stoi: Option<f64>,
    pub pesq: Option<f64>,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.collect::<Option<_>>()?;
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl MetricMeans {
    pub fn of(rows: &[MetricsRow]) -> Self {
        Self {
            snr: rows.iter().map(|r| r.snr).sum::<f64>() / rows.len().max(1) as f64,
            ssnr: mean_of(rows.iter().map(|r| r.ssnr)),
            stoi: mean_of(rows.iter().map(|r| r.stoi)),
            pesq: mean_of(rows.iter().map(|r| r.pesq)),
        }
    }
}

/// Rows of one system ("Input" or a model).
#[derive(Debug, Clone, PartialEq)]
pub struct SystemReport {
    pub name: String,
    pub rows: Vec<MetricsRow>,
    pub means: MetricMeans,
}

impl SystemReport {
    pub fn new(name: impl Into<String>, rows: Vec<MetricsRow>) -> Self {
        let means = MetricMeans::of(&rows);
        Self {
            name: name.into(),
            rows,
            means,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub systems: Vec<SystemReport>,
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.digits$}"))
}

impl MetricsReport {
    pub fn system(&self, name: &str) -> Option<&SystemReport> {
        self.systems.iter().find(|s| s.name == name)
    }

    /// Per-utterance rows followed by one `mean` row per system.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("system\tid\tsnr_db\tssnr_db\tstoi\tpesq\n");
        for s in &self.systems {
            for r in &s.rows {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{:.6}\t{}\t{}\t{}",
                    s.name,
                    r.id,
                    r.snr,
                    fmt_opt(r.ssnr, 6),
                    fmt_opt(r.stoi, 6),
                    fmt_opt(r.pesq, 6)
                );
            }
        }
        for s in &self.systems {
            let m = &s.means;
            let _ = writeln!(
                out,
                "{}\tmean\t{:.6}\t{}\t{}\t{}",
                s.name,
                m.snr,
                fmt_opt(m.ssnr, 6),
                fmt_opt(m.stoi, 6),
                fmt_opt(m.pesq, 6)
            );
        }
        out
    }

    /// One line of means per system.
    pub fn table(&self) -> String {
        let width = self.systems.iter().map(|s| s.name.len()).max().unwrap_or(0).max(6);
        let mut out = format!(
            "{:<width$}  {:>8}  {:>8}  {:>6}  {:>6}\n",
            "System", "SNR", "SSNR", "PESQ", "STOI"
        );
        for s in &self.systems {
            let m = &s.means;
            let _ = writeln!(
                out,
                "{:<width$}  {:>8.3}  {:>8}  {:>6}  {:>6}",
                s.name,
                m.snr,
                fmt_opt(m.ssnr, 3),
                fmt_opt(m.pesq, 3),
                fmt_opt(m.stoi, 3)
            );
        }
        out
    }

    pub fn save(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let tsv = dir.join("metrics.tsv");
        let txt = dir.join("metrics.txt");
        std::fs::write(&tsv, self.to_tsv()).map_err(|e| Error::io(&tsv, e))?;
        std::fs::write(&txt, self.table()).map_err(|e| Error::io(&txt, e))?;
        Ok((tsv, txt))
    }
}

fn score(
    clean: &AudioBuffer,
    test: &AudioBuffer,
    id: &str,
    set: MetricSet,
    pesq: Option<(&PesqCommand, &Path)>,
) -> Result<MetricsRow> {
    if clean.sample_rate != test.sample_rate {
        return Err(Error::SampleRate {
            expected: clean.sample_rate,
            actual: test.sample_rate,
        });
    }
    let c = &clean.samples;
    let t = &test.samples;
    let wrap = |e: Error| Error::Signal(format!("{id}: {e}"));
    let pesq = match pesq {
        Some((cmd, scratch)) => {
            let cp = scratch.join("clean.wav");
            let tp = scratch.join("test.wav");
            write_wav(&cp, clean)?;
            write_wav(&tp, test)?;
            pesq_external(&cp, &tp, Some(cmd))
        }
        None => None,
    };
    Ok(MetricsRow {
        id: id.to_string(),
        snr: snr(c, t).map_err(wrap)?,
        ssnr: set.ssnr.then(|| ssnr(c, t)).transpose().map_err(wrap)?,
        stoi: set.stoi.then(|| stoi(c, t, clean.sample_rate)).transpose().map_err(wrap)?,
        pesq,
    })
}

/// Scores the noisy inputs as system "Input" and each enhanced set under its
/// name. Every enhanced list must align with `pairs`. PESQ runs only when
/// requested in `set` and a command is configured.
pub fn evaluate(
    pairs: &[EvalPair],
    systems: &[(String, Vec<AudioBuffer>)],
    set: MetricSet,
    pesq: Option<&PesqCommand>,
) -> Result<MetricsReport> {
    let pesq = pesq.filter(|_| set.pesq);
    for (name, outs) in systems {
        if outs.len() != pairs.len() {
            return Err(Error::InvalidArgument(format!(
                "system `{name}` has {} outputs for {} pairs",
                outs.len(),
                pairs.len()
            )));
        }
    }
    let scratch = match pesq {
        Some(_) => {
            let dir = std::env::temp_dir().join(format!("sunet-pesq-{}", std::process::id()));
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            Some(dir)
        }
        None => None,
    };
    let pesq_args = pesq.zip(scratch.as_deref());
    let mut report = MetricsReport::default();
    let rows = pairs
        .iter()
        .map(|p| score(&p.clean, &p.noisy, &p.id, set, pesq_args))
        .collect::<Result<Vec<_>>>()?;
    report.systems.push(SystemReport::new("Input", rows));
    for (name, outs) in systems {
        let rows = pairs
            .iter()
            .zip(outs)
            .map(|(p, out)| score(&p.clean, out, &p.id, set, pesq_args))
            .collect::<Result<Vec<_>>>()?;
        report.systems.push(SystemReport::new(name.clone(), rows));
    }
    if let Some(dir) = scratch {
        let _ = std::fs::remove_dir_all(dir);
    }
    Ok(report)
}
