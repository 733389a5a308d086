//! Easy-to-difficult training schedule: difficulty-ranked sample ordering,
//! the linear pacing function, nested per-epoch subsets, and the driver
//! that adapts a frozen forecaster copy under the schedule.

use crate::contrastive::{
    build_pairs, difficulty_simulated, measure_all, train_encoder, DifficultyScore, Encoder,
    EncoderConfig, EncoderTrainOptions, PairBuildStats, Provenance, ReferenceSet, SimilarityRule,
};
use crate::diffmath::AdamConfig;
use crate::error::{Error, Result};
use crate::forecaster::{train_on_pool, Forecaster};
use crate::series::WindowSample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Fraction of the easiest samples in play at epoch `t`:
/// `min(1, lambda0 + (1 - lambda0) * t / t_grow)`.
pub fn lambda_t(lambda0: f64, t_grow: usize, t: usize) -> Result<f64> {
    if !(lambda0 > 0.0 && lambda0 <= 1.0) {
        return Err(Error::invalid("lambda0", "must be in (0, 1]"));
    }
    if t_grow == 0 {
        return Err(Error::invalid("t_grow", "must be >= 1"));
    }
    Ok((lambda0 + (1.0 - lambda0) * t as f64 / t_grow as f64).min(1.0))
}

/// Ascending stable sort permutation over difficulty values.
pub fn rank_by_difficulty(scores: &[DifficultyScore]) -> Result<Vec<usize>> {
    if scores.iter().any(|s| !s.value.is_finite()) {
        return Err(Error::NonFinite {
            context: "difficulty score".into(),
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].value.partial_cmp(&scores[b].value).unwrap());
    Ok(order)
}

/// The pacing parameters plus the difficulty-sorted ordering they select
/// from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurriculumSchedule {
    pub lambda0: f64,
    pub t_grow: usize,
    pub total_epochs: usize,
    /// Sample indices in nondecreasing difficulty order.
    sorted_indices: Vec<usize>,
    n: usize,
}

impl CurriculumSchedule {
    pub fn new(
        lambda0: f64,
        t_grow: usize,
        total_epochs: usize,
        scores: &[DifficultyScore],
    ) -> Result<Self> {
        lambda_t(lambda0, t_grow, 0)?;
        if total_epochs < t_grow {
            return Err(Error::invalid(
                "total_epochs",
                "must be >= t_grow so the full set is reached",
            ));
        }
        if scores.is_empty() {
            return Err(Error::EmptyInput {
                what: "schedule scores".into(),
            });
        }
        let sorted_indices = rank_by_difficulty(scores)?;
        Ok(CurriculumSchedule {
            lambda0,
            t_grow,
            total_epochs,
            n: sorted_indices.len(),
            sorted_indices,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sorted_indices(&self) -> &[usize] {
        &self.sorted_indices
    }

    pub fn lambda_at(&self, t: usize) -> f64 {
        lambda_t(self.lambda0, self.t_grow, t).expect("validated at construction")
    }

    /// Size of the epoch-`t` subset: `ceil(n * lambda(t))`, at least 1.
    pub fn subset_size(&self, t: usize) -> usize {
        let k = (self.n as f64 * self.lambda_at(t)).ceil() as usize;
        k.clamp(1, self.n)
    }

    /// The easiest `subset_size(t)` sample indices.
    pub fn subset_at_epoch(&self, t: usize) -> Result<&[usize]> {
        if t >= self.total_epochs {
            return Err(Error::invalid(
                "t",
                format!("epoch {t} out of range (total {})", self.total_epochs),
            ));
        }
        Ok(&self.sorted_indices[..self.subset_size(t)])
    }
}

/// Samples with their difficulty scores on one comparable scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoredDataset {
    pub samples: Vec<WindowSample>,
    pub scores: Vec<DifficultyScore>,
}

impl ScoredDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Difficulty-ranked manifest: one row per sample in ascending order.
    pub fn write_ranked_manifest(&self, path: impl AsRef<Path>) -> Result<()> {
        let order = rank_by_difficulty(&self.scores)?;
        let mut writer = csv::Writer::from_path(path.as_ref())?;
        writer.write_record(["rank", "sample_id", "origin", "value", "provenance"])?;
        for (rank, &i) in order.iter().enumerate() {
            writer.write_record([
                rank.to_string(),
                self.samples[i].sample_id(),
                self.samples[i].origin.to_string(),
                format!("{}", self.scores[i].value),
                self.scores[i].provenance.to_string(),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// How simulated samples receive their difficulty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoringMode {
    /// Real samples are measured; simulated samples inherit from their most
    /// similar real neighbor through the trained encoder.
    ContrastiveTransfer,
    /// The frozen model's error is used for both real and simulated samples
    /// directly (the biased shortcut; kept for the ablation).
    DirectMeasurement,
}

/// Everything the transfer pipeline needs: pair construction, encoder
/// architecture, and encoder training settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferConfig {
    pub delta: f64,
    pub j_max: usize,
    pub k_max: usize,
    pub encoder: EncoderConfig,
    pub train: EncoderTrainOptions,
    pub rule: SimilarityRule,
}

impl TransferConfig {
    /// Defaults for one window shape: threshold 0.01, up to 4 positives and
    /// 64 negatives per anchor.
    pub fn for_window(lookback: usize, horizon: usize) -> Self {
        TransferConfig {
            delta: 0.01,
            j_max: 4,
            k_max: 64,
            encoder: EncoderConfig::for_window(lookback, horizon),
            train: EncoderTrainOptions::default(),
            rule: SimilarityRule::MostSimilar,
        }
    }
}

/// Outcome of difficulty assignment over a mixed real + simulated pool.
#[derive(Debug)]
pub struct DifficultyAssignment {
    pub dataset: ScoredDataset,
    /// Windows dropped because their target mean is zero.
    pub excluded_zero_mean: usize,
    /// Trained encoder, when the transfer path ran.
    pub encoder: Option<Encoder>,
    pub encoder_losses: Vec<f64>,
    pub pair_stats: Option<PairBuildStats>,
    /// True when all real difficulties sat within `delta` of each other, so
    /// training was skipped and simulated samples inherited the median.
    pub degenerate_spread: bool,
}

/// Score every sample in the pool on one scale.
///
/// Real samples are always measured against the frozen model. Simulated
/// samples either inherit difficulty through the contrastive encoder or are
/// measured directly, depending on the mode.
pub fn assign_all_difficulties(
    model: &Forecaster,
    reals: &[WindowSample],
    simulateds: &[WindowSample],
    config: &TransferConfig,
    mode: ScoringMode,
) -> Result<DifficultyAssignment> {
    if reals.is_empty() {
        return Err(Error::EmptyInput {
            what: "real samples".into(),
        });
    }
    let measured = measure_all(model, reals)?;
    if measured.scores.is_empty() {
        return Err(Error::EmptyInput {
            what: "scorable real samples (all targets had zero mean)".into(),
        });
    }
    let mut samples: Vec<WindowSample> =
        measured.kept.iter().map(|&i| reals[i].clone()).collect();
    let mut scores = measured.scores.clone();
    let mut excluded = measured.excluded_zero_mean;
    let mut encoder = None;
    let mut encoder_losses = Vec::new();
    let mut pair_stats = None;
    let mut degenerate_spread = false;

    match mode {
        ScoringMode::ContrastiveTransfer => {
            if !simulateds.is_empty() {
                let values: Vec<f64> = scores.iter().map(|s| s.value).collect();
                let spread = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                    - values.iter().cloned().fold(f64::INFINITY, f64::min);
                if spread < config.delta {
                    // No contrastive signal: every pair would be positive.
                    degenerate_spread = true;
                    let med = median(&values);
                    for sim in simulateds {
                        samples.push(sim.clone());
                        scores.push(DifficultyScore::new(
                            med,
                            Provenance::Transferred,
                            sim.sample_id(),
                        )?);
                    }
                } else {
                    let (pairs, stats) =
                        build_pairs(&scores, config.delta, config.j_max, config.k_max, config.train.seed)?;
                    pair_stats = Some(stats);
                    let training = train_encoder(
                        &pairs,
                        &samples,
                        &scores,
                        config.encoder.clone(),
                        &config.train,
                    )?;
                    let refs = ReferenceSet::build(&training.encoder, &samples, &scores)?;
                    for sim in simulateds {
                        let score =
                            difficulty_simulated(&training.encoder, &refs, sim, config.rule)?;
                        samples.push(sim.clone());
                        scores.push(score);
                    }
                    encoder_losses = training.epoch_losses;
                    encoder = Some(training.encoder);
                }
            }
        }
        ScoringMode::DirectMeasurement => {
            let sim_measured = measure_all(model, simulateds)?;
            excluded += sim_measured.excluded_zero_mean;
            for (&i, score) in sim_measured.kept.iter().zip(sim_measured.scores) {
                samples.push(simulateds[i].clone());
                scores.push(score);
            }
        }
    }

    Ok(DifficultyAssignment {
        dataset: ScoredDataset { samples, scores },
        excluded_zero_mean: excluded,
        encoder,
        encoder_losses,
        pair_stats,
        degenerate_spread,
    })
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Optimizer settings for the curriculum driver.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurriculumTrainOptions {
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for CurriculumTrainOptions {
    fn default() -> Self {
        CurriculumTrainOptions {
            steps_per_epoch: 100,
            batch_size: 4,
            lr: 2e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lambda: f64,
    pub subset_size: usize,
    pub mean_batch_loss: Option<f64>,
}

/// Per-epoch record of the curriculum run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurriculumLog {
    pub lambda0: f64,
    pub t_grow: usize,
    pub total_epochs: usize,
    pub steps_per_epoch: usize,
    pub epochs: Vec<EpochLog>,
}

impl CurriculumLog {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Adapt a snapshot under the schedule: each epoch draws batches uniformly
/// from the current easiest subset and takes `steps_per_epoch` optimizer
/// steps. Returns the adapted copy and the per-epoch log.
///
/// Within an epoch the subset is presented in ascending original-index
/// order, so a schedule with `lambda0 = 1` replays plain fine-tuning
/// bit-exactly under the same seed.
pub fn run_curriculum(
    model: &Forecaster,
    dataset: &ScoredDataset,
    schedule: &CurriculumSchedule,
    opts: &CurriculumTrainOptions,
) -> Result<(Forecaster, CurriculumLog)> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput {
            what: "curriculum dataset".into(),
        });
    }
    if dataset.samples.len() != dataset.scores.len() {
        return Err(Error::shape(
            "run_curriculum",
            format!("{} scores", dataset.samples.len()),
            format!("{}", dataset.scores.len()),
        ));
    }
    if schedule.n() != dataset.len() {
        return Err(Error::shape(
            "run_curriculum",
            format!("schedule over {} samples", dataset.len()),
            format!("{}", schedule.n()),
        ));
    }
    let mut adapted = model.thaw_copy();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let adam = AdamConfig::with_lr(opts.lr);
    let mut step_counter = 0u64;
    let mut epochs = Vec::with_capacity(schedule.total_epochs);
    for t in 0..schedule.total_epochs {
        let subset = schedule.subset_at_epoch(t)?;
        let mut pool_indices = subset.to_vec();
        pool_indices.sort_unstable();
        let pool: Vec<&WindowSample> = pool_indices.iter().map(|&i| &dataset.samples[i]).collect();
        let losses = train_on_pool(
            &mut adapted,
            &pool,
            opts.steps_per_epoch,
            opts.batch_size,
            &adam,
            &mut rng,
            &mut step_counter,
        )?;
        epochs.push(EpochLog {
            epoch: t,
            lambda: schedule.lambda_at(t),
            subset_size: subset.len(),
            mean_batch_loss: if losses.is_empty() {
                None
            } else {
                Some(losses.iter().sum::<f64>() / losses.len() as f64)
            },
        });
    }
    Ok((
        adapted,
        CurriculumLog {
            lambda0: schedule.lambda0,
            t_grow: schedule.t_grow,
            total_epochs: schedule.total_epochs,
            steps_per_epoch: opts.steps_per_epoch,
            epochs,
        },
    ))
}
