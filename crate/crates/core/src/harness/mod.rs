//! Evaluation, experiment pipelines, ablation sweeps and report files.

mod ablation;
pub mod config;
mod judge;
mod metrics;
mod pipeline;
pub mod plot;
pub mod report;
mod sweep;

pub use ablation::{run_ablation, AblationOutcome, AblationParameter, AblationResult, AblationSpec};
pub use judge::{Judge, JudgeTemplate};
pub use metrics::{mean_std, relevance_rate, win_tie_lose, Vote};
pub use pipeline::{
    build_dataset, evaluate_policy, prepare, pretrain_stage, rm_curve_table, run_tppo, tppo_curve_table,
    train_rm_stage, Dataset, EvalSummary, ExperimentConfig, Prepared,
};
pub use sweep::{across_seed_std, compare_modes, ModeComparison, ModeRun};
