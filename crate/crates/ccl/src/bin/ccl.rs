//! Command-line front end. Every subcommand reads one experiment config
//! (JSON) plus flag overrides and drives the corresponding library
//! pipeline.
//!
//! Exit codes: 0 on success, 1 for configuration errors, 2 for runtime
//! failures (for `experiment`: when every cell failed).

use ccl::error::Error;
use ccl::forecaster::{Forecaster, Protocol};
use ccl::harness::{
    evaluate_targets, finetune_to_file, gen_data, measure_difficulty_to_file, pretrain_to_file,
    run_experiment, sweep_finetune_size, train_encoder_to_file, ExperimentConfig,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ccl", version, about = "Curriculum adaptation of time-series forecasters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON). Defaults to the built-in synthetic
    /// benchmark when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override: run with this single seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<(ExperimentConfig, u64), Error> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seeds = vec![seed];
        }
        let seed = *config.seeds.first().ok_or_else(|| Error::config("seeds", "empty"))?;
        Ok((config, seed))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    ZeroShot,
    FewShot,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Protocol {
        match p {
            ProtocolArg::ZeroShot => Protocol::ZeroShot,
            ProtocolArg::FewShot => Protocol::FewShot,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured corpora to CSV files.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Output directory for the CSV files.
        #[arg(long, default_value = "data")]
        out: PathBuf,
    },
    /// Train the frozen snapshot on the pretraining corpus.
    Pretrain {
        #[command(flatten)]
        common: Common,
        /// Checkpoint path to write.
        #[arg(long, default_value = "model.json")]
        out: PathBuf,
    },
    /// Score the real fine-tuning pool with a frozen model.
    MeasureDifficulty {
        #[command(flatten)]
        common: Common,
        /// Frozen model checkpoint.
        #[arg(long)]
        model: PathBuf,
        /// Difficulty table (CSV) to write.
        #[arg(long, default_value = "difficulty.csv")]
        out: PathBuf,
    },
    /// Train the contrastive encoder from measured difficulties.
    TrainEncoder {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// Encoder checkpoint to write.
        #[arg(long, default_value = "encoder.json")]
        out: PathBuf,
    },
    /// Plain fine-tuning on the merged real + simulated pool.
    Finetune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// Adapted checkpoint to write.
        #[arg(long, default_value = "finetuned.json")]
        out: PathBuf,
    },
    /// Evaluate a model on the configured targets.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "zero-shot")]
        protocol: ProtocolArg,
        /// Evaluate at this horizon instead of the model's native one.
        #[arg(long)]
        horizon: Option<usize>,
        /// Report path (JSON; a CSV with per-sample rows sits next to it).
        #[arg(long, default_value = "eval.json")]
        out: PathBuf,
    },
    /// Run the full strategy grid and write the run report.
    Experiment {
        #[command(flatten)]
        common: Common,
        /// Override the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Size sweep over fractions of the fine-tuning pool.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated ascending fractions in (0, 1].
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.25, 0.5, 1.0])]
        fractions: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::GenData { common, out } => {
            let (config, seed) = common.load()?;
            let written = gen_data(&config, &out, seed)?;
            println!("wrote {} series to {}", written.len(), out.display());
        }
        Command::Pretrain { common, out } => {
            let (config, seed) = common.load()?;
            pretrain_to_file(&config, seed, &out)?;
            println!("wrote frozen snapshot to {}", out.display());
        }
        Command::MeasureDifficulty { common, model, out } => {
            let (config, seed) = common.load()?;
            let model = Forecaster::load(&model)?;
            let (kept, measured) = measure_difficulty_to_file(&config, &model, seed, &out)?;
            println!(
                "scored {} windows ({} excluded for zero-mean targets) -> {}",
                kept.len(),
                measured.excluded_zero_mean,
                out.display()
            );
        }
        Command::TrainEncoder { common, model, out } => {
            let (config, seed) = common.load()?;
            let model = Forecaster::load(&model)?;
            let (_encoder, losses) = train_encoder_to_file(&config, &model, seed, &out)?;
            println!(
                "trained encoder ({} epochs, final loss {:.4}) -> {}",
                losses.len(),
                losses.last().copied().unwrap_or(f64::NAN),
                out.display()
            );
        }
        Command::Finetune { common, model, out } => {
            let (config, seed) = common.load()?;
            let model = Forecaster::load(&model)?;
            finetune_to_file(&config, &model, seed, &out)?;
            println!("wrote fine-tuned model to {}", out.display());
        }
        Command::Evaluate {
            common,
            model,
            protocol,
            horizon,
            out,
        } => {
            let (config, seed) = common.load()?;
            let mut model = Forecaster::load(&model)?;
            if let Some(h) = horizon {
                model = model.resize_horizon(h)?;
            }
            let reports = evaluate_targets(&config, &model, protocol.into(), seed)?;
            for (target, report) in &reports {
                println!(
                    "{target}: cv_rmse {:.4} over {} windows (ashrae_pass={}, excluded={})",
                    report.aggregate,
                    report.per_sample.len(),
                    report.ashrae_pass,
                    report.excluded_zero_mean
                );
            }
            let json: Vec<serde_json::Value> = reports
                .iter()
                .map(|(target, report)| {
                    serde_json::json!({ "target": target, "report": report })
                })
                .collect();
            std::fs::write(&out, serde_json::to_string_pretty(&json)?)?;
            for (target, report) in &reports {
                report.write_csv(out.with_extension(format!("{target}.csv")))?;
            }
            println!("wrote {}", out.display());
        }
        Command::Experiment { common, out } => {
            let (mut config, _) = common.load()?;
            if let Some(dir) = out {
                config.output_dir = dir;
            }
            let report = run_experiment(&config)?;
            for cell in &report.body.cells {
                match (cell.aggregate_cv_rmse, &cell.failed) {
                    (Some(v), _) => println!(
                        "{} h={} {} seed={}: cv_rmse {:.4}",
                        cell.strategy, cell.horizon, cell.protocol, cell.seed, v
                    ),
                    (None, Some(msg)) => println!(
                        "{} h={} {} seed={}: FAILED ({msg})",
                        cell.strategy, cell.horizon, cell.protocol, cell.seed
                    ),
                    (None, None) => {}
                }
            }
            println!("report written to {}", config.output_dir.display());
            if report.all_failed() {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Sweep {
            common,
            fractions,
            out,
        } => {
            let (mut config, _) = common.load()?;
            if let Some(dir) = out {
                config.output_dir = dir;
            }
            let sweep = sweep_finetune_size(&config, &fractions)?;
            println!(
                "swept {} fractions; report written to {}",
                sweep.body.fractions.len(),
                config.output_dir.display()
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}
