use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use sunet_core::data::{load_wav, Split};
use sunet_core::harness::{
    cmd_enhance, cmd_evaluate, cmd_prepare, cmd_rf_report, cmd_train, plot_comparison, ExperimentConfig,
};
use sunet_core::model::{UNetConfig, Variant};
use sunet_core::Error;

/// Waveform speech enhancement with a 1-D U-Net.
#[derive(Parser)]
#[command(name = "sunet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or mix the corpus and write its manifest.
    Prepare {
        config: PathBuf,
    },
    /// Train the configured model and keep the best-validation checkpoint.
    Train {
        config: PathBuf,
    },
    /// Enhance one WAV file.
    Enhance {
        #[arg(long)]
        checkpoint: PathBuf,
        input: PathBuf,
        output: PathBuf,
        /// Resample input whose rate differs from the model's.
        #[arg(long)]
        resample: bool,
    },
    /// Score one or more checkpoints on a manifest split.
    Evaluate {
        config: PathBuf,
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Print the encoder receptive-field table.
    RfReport {
        /// Experiment config; its model section is used.
        #[arg(long, conflicts_with = "variant")]
        config: Option<PathBuf>,
        /// Variant with default widths, when no config is given.
        #[arg(long)]
        variant: Option<String>,
        #[arg(long, default_value_t = 16000.0)]
        sample_rate: f64,
    },
    /// Overlay ground truth (blue) and prediction (red) as SVG plus TSV.
    Plot {
        clean: PathBuf,
        predicted: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        start: f64,
        #[arg(long, default_value_t = 0.5)]
        end: f64,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Prepare { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let m = cmd_prepare(&cfg)?;
            println!(
                "{} pairs: train {}, val {}, test {} -> {}",
                m.entries.len(),
                m.count(Split::Train),
                m.count(Split::Val),
                m.count(Split::Test),
                cfg.data.manifest.display()
            );
        }
        Command::Train { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let (model, report) = cmd_train(&cfg)?;
            println!(
                "{}: {} steps ({:?}), best val L1 {:.6} at step {}, {} parameters",
                model.config().variant.display_name(),
                report.state.step,
                report.stop,
                report.state.best_val_l1,
                report.best_step(),
                model.param_count()
            );
            if let Some(ckpt) = &report.checkpoint {
                println!("checkpoint: {}", ckpt.display());
            }
        }
        Command::Enhance {
            checkpoint,
            input,
            output,
            resample,
        } => {
            let out = cmd_enhance(&checkpoint, &input, &output, resample)?;
            println!("wrote {} ({} samples @ {} Hz)", output.display(), out.len(), out.sample_rate);
        }
        Command::Evaluate {
            config,
            checkpoints,
            split,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let split: Split = split.parse()?;
            let report = cmd_evaluate(&cfg, &checkpoints, split)?;
            print!("{}", report.table());
            println!("reports in {}", cfg.eval.output_dir.display());
        }
        Command::RfReport {
            config,
            variant,
            sample_rate,
        } => {
            let model = match (config, variant) {
                (Some(path), _) => ExperimentConfig::load(&path)?.model,
                (None, Some(v)) => UNetConfig::default().with_variant(v.parse::<Variant>()?),
                (None, None) => UNetConfig::default(),
            };
            print!("{}", cmd_rf_report(&model, sample_rate)?);
        }
        Command::Plot {
            clean,
            predicted,
            output,
            start,
            end,
        } => {
            let truth = load_wav(&clean)?;
            let pred = load_wav(&predicted)?;
            let tsv = plot_comparison(&truth, &pred, start, end, &output)
                .with_context(|| format!("plotting {}", output.display()))?;
            println!("wrote {} and {}", output.display(), tsv.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let category = err
                .chain()
                .find_map(|e| e.downcast_ref::<Error>())
                .map_or("internal", Error::category);
            // Causes already quoted by their parent are not repeated.
            let mut message = err.to_string();
            for cause in err.chain().skip(1) {
                let text = cause.to_string();
                if !message.contains(&text) {
                    message = format!("{message}: {text}");
                }
            }
            eprintln!("error[{category}]: {message}");
            ExitCode::FAILURE
        }
    }
}
