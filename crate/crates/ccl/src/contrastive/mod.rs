//! Difficulty measurement and transfer: scoring real windows by a frozen
//! forecaster's error, building contrastive pairs from score gaps, training
//! a convolutional encoder with a weighted InfoNCE loss and a memory bank,
//! and assigning each simulated window the difficulty of its most similar
//! real window in embedding space.

mod bank;
mod encoder;
mod loss;
mod pairs;
mod train;
mod transfer;

pub use bank::MemoryBank;
pub use encoder::{Encoder, EncoderCheckpoint, EncoderConfig, ENCODER_FORMAT_VERSION};
pub use loss::{weighted_info_nce, DenominatorMode, InfoNce, NEGATIVE_WEIGHT_FLOOR};
pub use pairs::{build_pairs, ContrastivePairSet, PairBuildStats};
pub use train::{train_encoder, EncoderTrainOptions, EncoderTraining};
pub use transfer::{difficulty_simulated, ReferenceSet, SimilarityRule};

use crate::error::{Error, Result};
use crate::forecaster::{cv_rmse, Forecaster};
use crate::series::{Origin, WindowSample};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// How a difficulty value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    /// Measured directly as the frozen model's CV-RMSE on the sample.
    Measured,
    /// Inherited from the most similar real sample in embedding space.
    Transferred,
    /// Uniform placeholder used by ablations.
    Uniform,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Provenance::Measured => write!(f, "measured"),
            Provenance::Transferred => write!(f, "transferred"),
            Provenance::Uniform => write!(f, "uniform"),
        }
    }
}

/// A nonnegative difficulty value attached to one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyScore {
    pub value: f64,
    pub provenance: Provenance,
    pub sample_id: String,
}

impl DifficultyScore {
    pub fn new(value: f64, provenance: Provenance, sample_id: impl Into<String>) -> Result<Self> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::invalid(
                "difficulty",
                format!("must be finite and >= 0, got {value}"),
            ));
        }
        Ok(DifficultyScore {
            value,
            provenance,
            sample_id: sample_id.into(),
        })
    }
}

/// Difficulty of a real sample: the frozen model's CV-RMSE on it.
pub fn difficulty_real(model: &Forecaster, sample: &WindowSample) -> Result<DifficultyScore> {
    if sample.origin != Origin::Real {
        return Err(Error::invalid(
            "sample",
            "difficulty_real requires a real-origin sample; use measure_difficulty for ablations",
        ));
    }
    measure_difficulty(model, sample)
}

/// The same measurement without the origin check; ablations apply it to
/// simulated samples as well.
pub fn measure_difficulty(model: &Forecaster, sample: &WindowSample) -> Result<DifficultyScore> {
    if !model.is_frozen() {
        return Err(Error::NotFrozen {
            op: "difficulty measurement".into(),
        });
    }
    let prediction = model.predict(&sample.x)?;
    let value = cv_rmse(&sample.y, &prediction)?;
    DifficultyScore::new(value, Provenance::Measured, sample.sample_id())
}

/// How similarly the frozen model handles two samples: the absolute gap
/// between their difficulty values. Symmetric, zero iff equal.
pub fn comprehension(a: &DifficultyScore, b: &DifficultyScore) -> f64 {
    (a.value - b.value).abs()
}

/// Batch measurement with zero-mean-target exclusion bookkeeping.
#[derive(Debug, Clone)]
pub struct MeasuredScores {
    /// Index into the input slice for each score.
    pub kept: Vec<usize>,
    pub scores: Vec<DifficultyScore>,
    pub excluded_zero_mean: usize,
}

/// Measure every sample, excluding (and counting) those whose target mean is
/// zero so the metric is undefined.
pub fn measure_all(model: &Forecaster, samples: &[WindowSample]) -> Result<MeasuredScores> {
    let mut kept = Vec::with_capacity(samples.len());
    let mut scores = Vec::with_capacity(samples.len());
    let mut excluded = 0usize;
    for (i, sample) in samples.iter().enumerate() {
        match measure_difficulty(model, sample) {
            Ok(score) => {
                kept.push(i);
                scores.push(score);
            }
            Err(Error::ZeroMeanTarget) => excluded += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(MeasuredScores {
        kept,
        scores,
        excluded_zero_mean: excluded,
    })
}

/// Difficulty table: one row per sample with its origin and provenance.
pub fn write_difficulty_csv(
    path: impl AsRef<Path>,
    samples: &[WindowSample],
    scores: &[DifficultyScore],
) -> Result<()> {
    if samples.len() != scores.len() {
        return Err(Error::shape(
            "write_difficulty_csv",
            format!("{} scores", samples.len()),
            format!("{}", scores.len()),
        ));
    }
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    writer.write_record(["sample_id", "origin", "value", "provenance"])?;
    for (sample, score) in samples.iter().zip(scores) {
        writer.write_record([
            sample.sample_id(),
            sample.origin.to_string(),
            format!("{}", score.value),
            score.provenance.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
