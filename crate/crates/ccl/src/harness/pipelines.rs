//! Composite pipelines behind the CLI subcommands. Each one reads the same
//! experiment config and performs one stage of the workflow.

use crate::contrastive::{
    build_pairs, measure_all, train_encoder, write_difficulty_csv, Encoder, MeasuredScores,
};
use crate::error::{Error, Result};
use crate::forecaster::{
    evaluate_few_shot, evaluate_zero_shot, finetune, EvalReport, FewShotOptions, FinetuneOptions,
    Forecaster, Protocol,
};
use crate::harness::config::{derive_seed, ExperimentConfig};
use crate::harness::data::{build_series, build_target_windows};
use crate::harness::experiment::{prepare_pools, pretrain_snapshot};
use crate::series::{write_csv, Origin, WindowSample};
use std::path::{Path, PathBuf};

/// Write every configured corpus to CSV files under `out_dir`.
/// Returns the paths written.
pub fn gen_data(config: &ExperimentConfig, out_dir: &Path, seed: u64) -> Result<Vec<PathBuf>> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let groups: Vec<(&str, Origin, &crate::harness::config::DataSpec)> = vec![
        ("pretrain", Origin::Real, &config.pretrain_pool.data),
        ("real", Origin::Real, &config.real_pool.data),
        ("simulated", Origin::Simulated, &config.simulated_pool.data),
    ];
    for (name, origin, spec) in groups {
        for series in build_series(spec, origin, name, seed)? {
            let path = out_dir.join(format!("{}.csv", series.id));
            write_csv(&series, &path)?;
            written.push(path);
        }
    }
    for target in &config.targets {
        for series in build_series(&target.data, Origin::Real, &target.id, seed)? {
            let path = out_dir.join(format!("{}.csv", series.id));
            write_csv(&series, &path)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Pretrain the frozen snapshot and save its checkpoint.
pub fn pretrain_to_file(config: &ExperimentConfig, seed: u64, out: &Path) -> Result<()> {
    config.validate()?;
    let snapshot = pretrain_snapshot(config, seed)?;
    snapshot.save(out)
}

/// Measure difficulty over the real fine-tuning pool with a frozen model;
/// write the table and return the bookkeeping.
pub fn measure_difficulty_to_file(
    config: &ExperimentConfig,
    model: &Forecaster,
    seed: u64,
    out: &Path,
) -> Result<(Vec<WindowSample>, MeasuredScores)> {
    config.validate()?;
    let pools = prepare_pools(config, seed)?;
    let measured = measure_all(model, &pools.reals)?;
    let kept: Vec<WindowSample> = measured.kept.iter().map(|&i| pools.reals[i].clone()).collect();
    write_difficulty_csv(out, &kept, &measured.scores)?;
    Ok((kept, measured))
}

/// Full encoder stage: measure the real pool, build pairs, train, save the
/// encoder checkpoint. Returns the encoder and its loss trajectory.
pub fn train_encoder_to_file(
    config: &ExperimentConfig,
    model: &Forecaster,
    seed: u64,
    out: &Path,
) -> Result<(Encoder, Vec<f64>)> {
    config.validate()?;
    let pools = prepare_pools(config, seed)?;
    let measured = measure_all(model, &pools.reals)?;
    if measured.scores.len() < 2 {
        return Err(Error::EmptyInput {
            what: "scorable real samples for pair construction".into(),
        });
    }
    let kept: Vec<WindowSample> = measured.kept.iter().map(|&i| pools.reals[i].clone()).collect();
    let (pairs, _stats) = build_pairs(
        &measured.scores,
        config.transfer.delta,
        config.transfer.j_max,
        config.transfer.k_max,
        derive_seed(seed, "encoder"),
    )?;
    let mut opts = config.transfer.train.clone();
    opts.seed = derive_seed(seed, "encoder");
    let training = train_encoder(
        &pairs,
        &kept,
        &measured.scores,
        config.transfer.encoder.clone(),
        &opts,
    )?;
    training.encoder.save(out)?;
    Ok((training.encoder, training.epoch_losses))
}

/// Plain fine-tuning of a snapshot on the merged pool; saves the result.
pub fn finetune_to_file(
    config: &ExperimentConfig,
    model: &Forecaster,
    seed: u64,
    out: &Path,
) -> Result<()> {
    config.validate()?;
    let pools = prepare_pools(config, seed)?;
    let opts = FinetuneOptions {
        seed: derive_seed(seed, "adapt"),
        ..config.finetune_opts.clone()
    };
    let adapted = finetune(&model.thaw_copy(), &pools.merged(), &opts)?;
    adapted.save(out)
}

/// Evaluate a model on every configured target under one protocol.
pub fn evaluate_targets(
    config: &ExperimentConfig,
    model: &Forecaster,
    protocol: Protocol,
    seed: u64,
) -> Result<Vec<(String, EvalReport)>> {
    config.validate()?;
    let mut out = Vec::with_capacity(config.targets.len());
    for target in &config.targets {
        let windows = build_target_windows(target, seed, model.lookback(), model.horizon())?;
        let report = match protocol {
            Protocol::ZeroShot => evaluate_zero_shot(model, &windows)?,
            Protocol::FewShot => {
                let mut opts = FewShotOptions {
                    fraction: config.few_shot.fraction,
                    finetune: config.few_shot.finetune.clone(),
                };
                opts.finetune.seed = derive_seed(seed, &format!("fewshot:cli:{}", target.id));
                evaluate_few_shot(model, &windows, &opts)?
            }
        };
        out.push((target.id.clone(), report));
    }
    Ok(out)
}
