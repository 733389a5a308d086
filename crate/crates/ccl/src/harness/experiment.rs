//! The end-to-end experiment driver: one frozen snapshot per seed, one
//! adaptation per strategy, evaluation over every (horizon, protocol,
//! target) cell, and a deterministic report.

use crate::curriculum::{
    assign_all_difficulties, run_curriculum, CurriculumSchedule, CurriculumTrainOptions,
    ScoringMode,
};
use crate::error::{Error, Result};
use crate::forecaster::{
    evaluate_few_shot, evaluate_zero_shot, finetune, FewShotOptions, FinetuneOptions, Forecaster,
    Protocol, TcnForecasterConfig,
};
use crate::harness::config::{derive_seed, ExperimentConfig, Strategy};
use crate::harness::data::{build_pool, build_target_windows, nested_subset_indices};
use crate::harness::report::{CellResult, ReportBody, ReportMeta, RunReport, TargetResult};
use crate::series::{fit_normalizer, Origin, WindowSample};
use std::time::Instant;

/// The fine-tuning corpora for one experiment seed, after the fraction
/// subsample.
pub struct Pools {
    pub reals: Vec<WindowSample>,
    pub simulateds: Vec<WindowSample>,
}

impl Pools {
    /// Real windows followed by simulated windows; the order every
    /// adaptation strategy sees.
    pub fn merged(&self) -> Vec<WindowSample> {
        self.reals
            .iter()
            .chain(self.simulateds.iter())
            .cloned()
            .collect()
    }
}

/// Build the real and simulated fine-tuning pools for one seed.
pub fn prepare_pools(config: &ExperimentConfig, seed: u64) -> Result<Pools> {
    let reals = build_pool(
        &config.real_pool,
        Origin::Real,
        "real",
        seed,
        config.lookback,
        config.native_horizon,
    )?;
    let simulateds = build_pool(
        &config.simulated_pool,
        Origin::Simulated,
        "sim",
        seed,
        config.lookback,
        config.native_horizon,
    )?;
    let reals = take_fraction(reals, config.finetune_fraction, derive_seed(seed, "fraction:real"));
    let simulateds = take_fraction(
        simulateds,
        config.finetune_fraction,
        derive_seed(seed, "fraction:sim"),
    );
    Ok(Pools { reals, simulateds })
}

fn take_fraction(windows: Vec<WindowSample>, fraction: f64, seed: u64) -> Vec<WindowSample> {
    if fraction >= 1.0 {
        return windows;
    }
    nested_subset_indices(windows.len(), fraction, seed)
        .into_iter()
        .map(|i| windows[i].clone())
        .collect()
}

/// Train the stand-in pre-trained model on the disjoint pretraining corpus
/// and freeze it.
pub fn pretrain_snapshot(config: &ExperimentConfig, seed: u64) -> Result<Forecaster> {
    let windows = build_pool(
        &config.pretrain_pool,
        Origin::Real,
        "pretrain",
        seed,
        config.lookback,
        config.native_horizon,
    )?;
    if windows.is_empty() {
        return Err(Error::EmptyInput {
            what: "pretraining windows".into(),
        });
    }
    let mut model = Forecaster::tcn(
        TcnForecasterConfig {
            lookback: config.lookback,
            horizon: config.native_horizon,
            tcn: config.arch.clone(),
        },
        derive_seed(seed, "init"),
    )?;
    model.set_normalizer(fit_normalizer(&windows)?);
    let opts = FinetuneOptions {
        seed: derive_seed(seed, "pretrain"),
        ..config.pretrain_opts.clone()
    };
    Ok(finetune(&model, &windows, &opts)?.freeze())
}

/// Apply one adaptation strategy to the frozen snapshot at the native
/// horizon. All trainable strategies share the same derived seed so that a
/// curriculum whose schedule keeps the full pool replays plain fine-tuning
/// exactly.
pub fn adapt(
    config: &ExperimentConfig,
    frozen: &Forecaster,
    pools: &Pools,
    strategy: Strategy,
    seed: u64,
) -> Result<Forecaster> {
    let adapt_seed = derive_seed(seed, "adapt");
    match strategy {
        Strategy::Pretrained => Ok(frozen.clone()),
        Strategy::Ft => {
            let opts = FinetuneOptions {
                seed: adapt_seed,
                ..config.finetune_opts.clone()
            };
            finetune(&frozen.thaw_copy(), &pools.merged(), &opts)
        }
        Strategy::ClFt | Strategy::CclFt => {
            let mode = if strategy == Strategy::ClFt {
                ScoringMode::DirectMeasurement
            } else {
                ScoringMode::ContrastiveTransfer
            };
            let mut transfer = config.transfer.clone();
            transfer.train.seed = derive_seed(seed, "encoder");
            let assignment =
                assign_all_difficulties(frozen, &pools.reals, &pools.simulateds, &transfer, mode)?;
            let schedule = CurriculumSchedule::new(
                config.schedule.lambda0,
                config.schedule.t_grow,
                config.schedule.total_epochs,
                &assignment.dataset.scores,
            )?;
            let opts = CurriculumTrainOptions {
                steps_per_epoch: config.schedule.steps_per_epoch,
                batch_size: config.schedule.batch_size,
                lr: config.schedule.lr,
                seed: adapt_seed,
            };
            let (adapted, _log) = run_curriculum(frozen, &assignment.dataset, &schedule, &opts)?;
            Ok(adapted)
        }
    }
}

/// Run the whole grid and write `report.json` / `report.csv` into the
/// configured output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let config_hash = config.hash();
    let mut cells: Vec<CellResult> = Vec::new();
    let mut cell_timings: Vec<u64> = Vec::new();
    let mut adaptation_timings: Vec<(String, u64, u64)> = Vec::new();

    for &seed in &config.seeds {
        let prep = (|| -> Result<(Forecaster, Pools)> {
            let frozen = pretrain_snapshot(config, seed)?;
            let pools = prepare_pools(config, seed)?;
            Ok((frozen, pools))
        })();
        let (frozen, pools) = match prep {
            Ok(v) => v,
            Err(e) => {
                // Without data or a snapshot every cell of this seed fails.
                for &strategy in &config.strategies {
                    for &horizon in &config.horizons {
                        for &protocol in &config.protocols {
                            cells.push(failed_cell(strategy, horizon, protocol, seed, &e));
                            cell_timings.push(0);
                        }
                    }
                }
                continue;
            }
        };

        for &strategy in &config.strategies {
            let started = Instant::now();
            let adapted = adapt(config, &frozen, &pools, strategy, seed);
            adaptation_timings.push((
                strategy.to_string(),
                seed,
                started.elapsed().as_millis() as u64,
            ));
            for &horizon in &config.horizons {
                for &protocol in &config.protocols {
                    let started = Instant::now();
                    let cell = match &adapted {
                        Ok(model) => {
                            evaluate_cell(config, model, strategy, horizon, protocol, seed)
                                .unwrap_or_else(|e| failed_cell(strategy, horizon, protocol, seed, &e))
                        }
                        Err(e) => failed_cell(strategy, horizon, protocol, seed, e),
                    };
                    cells.push(cell);
                    cell_timings.push(started.elapsed().as_millis() as u64);
                }
            }
        }
    }

    fill_improvement_ratios(&mut cells);

    let report = RunReport {
        meta: ReportMeta {
            created_unix_ms: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
            cell_wall_clock_ms: cell_timings,
            adaptation_wall_clock_ms: adaptation_timings,
        },
        body: ReportBody {
            config_hash,
            finetune_fraction: config.finetune_fraction,
            cells,
        },
    };
    report.write_json(config.output_dir.join("report.json"))?;
    report.write_csv(config.output_dir.join("report.csv"))?;
    Ok(report)
}

fn evaluate_cell(
    config: &ExperimentConfig,
    adapted: &Forecaster,
    strategy: Strategy,
    horizon: usize,
    protocol: Protocol,
    seed: u64,
) -> Result<CellResult> {
    let model = adapted.resize_horizon(horizon)?;
    let mut per_target = Vec::with_capacity(config.targets.len());
    for target in &config.targets {
        let windows = build_target_windows(target, seed, config.lookback, horizon)?;
        let report = match protocol {
            Protocol::ZeroShot => evaluate_zero_shot(&model, &windows)?,
            Protocol::FewShot => {
                let mut opts = FewShotOptions {
                    fraction: config.few_shot.fraction,
                    finetune: config.few_shot.finetune.clone(),
                };
                opts.finetune.seed =
                    derive_seed(seed, &format!("fewshot:{strategy}:{horizon}:{}", target.id));
                evaluate_few_shot(&model, &windows, &opts)?
            }
        };
        per_target.push(TargetResult {
            target_id: target.id.clone(),
            cv_rmse: report.aggregate,
            ashrae_pass: report.ashrae_pass,
            excluded_zero_mean: report.excluded_zero_mean,
            n_windows: report.per_sample.len(),
        });
    }
    let aggregate =
        per_target.iter().map(|t| t.cv_rmse).sum::<f64>() / per_target.len() as f64;
    if !aggregate.is_finite() {
        return Err(Error::NonFinite {
            context: "cell aggregate".into(),
        });
    }
    Ok(CellResult {
        strategy,
        horizon,
        protocol,
        seed,
        aggregate_cv_rmse: Some(aggregate),
        ashrae_pass: Some(aggregate < crate::forecaster::ASHRAE_CV_RMSE_THRESHOLD),
        improvement_vs_pretrained: None,
        per_target,
        failed: None,
    })
}

fn failed_cell(
    strategy: Strategy,
    horizon: usize,
    protocol: Protocol,
    seed: u64,
    error: &Error,
) -> CellResult {
    CellResult {
        strategy,
        horizon,
        protocol,
        seed,
        aggregate_cv_rmse: None,
        ashrae_pass: None,
        improvement_vs_pretrained: None,
        per_target: Vec::new(),
        failed: Some(error.to_string()),
    }
}

fn fill_improvement_ratios(cells: &mut [CellResult]) {
    let baselines: Vec<(usize, Protocol, u64, f64)> = cells
        .iter()
        .filter(|c| c.strategy == Strategy::Pretrained)
        .filter_map(|c| c.aggregate_cv_rmse.map(|v| (c.horizon, c.protocol, c.seed, v)))
        .collect();
    for cell in cells.iter_mut() {
        if cell.strategy == Strategy::Pretrained {
            cell.improvement_vs_pretrained = cell.aggregate_cv_rmse.map(|_| 0.0);
            continue;
        }
        let Some(value) = cell.aggregate_cv_rmse else {
            continue;
        };
        if let Some((_, _, _, base)) = baselines
            .iter()
            .find(|(h, p, s, _)| *h == cell.horizon && *p == cell.protocol && *s == cell.seed)
        {
            if *base != 0.0 {
                cell.improvement_vs_pretrained = Some((base - value) / base);
            }
        }
    }
}
