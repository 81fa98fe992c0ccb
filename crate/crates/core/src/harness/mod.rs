//! Experiment driver: corpus preparation, training, enhancement, evaluation,
//! receptive-field reports and waveform plots.

mod commands;
mod config;
mod plot;
mod prepare;
mod train;

pub use commands::{
    cmd_enhance, cmd_evaluate, cmd_rf_report, cmd_train, evaluate_systems, load_eval_pairs, load_training_clips,
    Enhancer, Identity,
};
pub use config::{CorpusSource, DataConfig, EvalConfig, ExperimentConfig, CHECKPOINT_DIR_ENV};
pub use plot::{plot_comparison, window_range};
pub use prepare::cmd_prepare;
pub use train::{masked_l1, train, train_step, LogRow, StopReason, TrainOptions, TrainReport, TrainState};
