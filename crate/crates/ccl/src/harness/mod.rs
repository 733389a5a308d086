//! Experiment orchestration: configuration, corpus construction, the
//! strategy grid, reports, and the size sweep.

mod config;
mod data;
mod experiment;
mod pipelines;
mod report;
mod sweep;

pub use config::{
    DataSpec, ExperimentConfig, PoolSpec, ScheduleParams, Strategy, SyntheticCorpusSpec,
    TargetSpec,
};
pub use data::{build_pool, build_series, build_target_windows, nested_subset_indices};
pub use experiment::{adapt, prepare_pools, pretrain_snapshot, run_experiment, Pools};
pub use pipelines::{
    evaluate_targets, finetune_to_file, gen_data, measure_difficulty_to_file, pretrain_to_file,
    train_encoder_to_file,
};
pub use report::{CellResult, ReportBody, ReportMeta, RunReport, TargetResult};
pub use sweep::{fraction_report, sweep_finetune_size, SweepBody, SweepReport};
