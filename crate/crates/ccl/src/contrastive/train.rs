//! Contrastive training of the encoder over prebuilt pair sets.

use crate::contrastive::{
    weighted_info_nce, ContrastivePairSet, DenominatorMode, DifficultyScore, Encoder,
    EncoderConfig, MemoryBank,
};
use crate::diffmath::{adam_step, AdamConfig};
use crate::error::{Error, Result};
use crate::series::{fit_normalizer, WindowSample};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Settings for one encoder training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncoderTrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub bank_capacity: usize,
    pub denominator: DenominatorMode,
}

impl Default for EncoderTrainOptions {
    fn default() -> Self {
        EncoderTrainOptions {
            epochs: 4,
            batch_size: 8,
            lr: 1e-3,
            seed: 0,
            bank_capacity: 4096,
            denominator: DenominatorMode::NegativesOnly,
        }
    }
}

/// Trained encoder plus the loss trajectory (one mean per epoch).
#[derive(Debug)]
pub struct EncoderTraining {
    pub encoder: Encoder,
    pub epoch_losses: Vec<f64>,
    /// Pair sets skipped because they had no negatives.
    pub skipped_pair_sets: usize,
}

/// Train the encoder: anchors and positives are encoded fresh each step;
/// negatives come from the memory bank keyed by sample index, falling back
/// to a fresh (detached) encoding on a miss. The bank is refreshed with the
/// step's fresh embeddings after the optimizer update.
pub fn train_encoder(
    pairs: &[ContrastivePairSet],
    samples: &[WindowSample],
    scores: &[DifficultyScore],
    config: EncoderConfig,
    opts: &EncoderTrainOptions,
) -> Result<EncoderTraining> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput {
            what: "contrastive pair sets".into(),
        });
    }
    if samples.len() != scores.len() {
        return Err(Error::shape(
            "train_encoder",
            format!("{} scores", samples.len()),
            format!("{}", scores.len()),
        ));
    }
    if opts.batch_size == 0 {
        return Err(Error::invalid("batch_size", "must be >= 1"));
    }
    let usable: Vec<&ContrastivePairSet> = pairs
        .iter()
        .filter(|p| !p.positives.is_empty() && !p.negatives.is_empty())
        .collect();
    let skipped_pair_sets = pairs.len() - usable.len();
    if usable.is_empty() {
        return Err(Error::EmptyInput {
            what: "usable pair sets (every set lacks negatives)".into(),
        });
    }

    let mut encoder = Encoder::init(config, opts.seed)?;
    encoder.set_normalizer(fit_normalizer(samples)?);
    let mut bank = MemoryBank::new(opts.bank_capacity)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(1));
    let adam = AdamConfig::with_lr(opts.lr);
    let mut step_index = 0u64;
    let mut epoch_losses = Vec::with_capacity(opts.epochs);

    let mut order: Vec<usize> = (0..usable.len()).collect();
    for _ in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut anchors_seen = 0usize;
        for chunk in order.chunks(opts.batch_size) {
            encoder.parameters_mut().iter_mut().for_each(|p| p.zero_grad());
            // Embeddings computed this step; written to the bank afterwards.
            let mut fresh: Vec<(usize, Vec<f64>)> = Vec::new();
            let scale = 1.0 / chunk.len() as f64;
            for &set_idx in chunk {
                let set = usable[set_idx];
                let (anchor_emb, anchor_cache) = encoder.encode_cached(&samples[set.anchor])?;
                let mut pos_embs = Vec::with_capacity(set.positives.len());
                let mut pos_caches = Vec::with_capacity(set.positives.len());
                for &j in &set.positives {
                    let (e, c) = encoder.encode_cached(&samples[j])?;
                    pos_embs.push(e);
                    pos_caches.push(c);
                }
                let mut neg_embs = Vec::with_capacity(set.negatives.len());
                for &k in &set.negatives {
                    match bank.get(k) {
                        Some((stale, _)) => neg_embs.push(stale.to_vec()),
                        None => {
                            let e = encoder.encode(&samples[k])?;
                            fresh.push((k, e.clone()));
                            neg_embs.push(e);
                        }
                    }
                }
                let nce = weighted_info_nce(
                    &anchor_emb,
                    &pos_embs,
                    &neg_embs,
                    &set.negative_weights,
                    encoder.temperature(),
                    opts.denominator,
                )?;
                epoch_loss += nce.loss;
                anchors_seen += 1;
                let scaled_anchor: Vec<f64> =
                    nce.grad_anchor.iter().map(|g| g * scale).collect();
                encoder.backward_from_embedding(&anchor_cache, &scaled_anchor)?;
                for (cache, grad) in pos_caches.iter().zip(&nce.grad_positives) {
                    let scaled: Vec<f64> = grad.iter().map(|g| g * scale).collect();
                    encoder.backward_from_embedding(cache, &scaled)?;
                }
                // Negatives are stale by construction; no gradient flows
                // back into the encoder through them.
                fresh.push((set.anchor, anchor_emb));
                for (&j, e) in set.positives.iter().zip(pos_embs) {
                    fresh.push((j, e));
                }
            }
            step_index += 1;
            adam_step(&mut encoder.parameters_mut(), &adam, step_index)?;
            for (idx, emb) in fresh {
                bank.insert(idx, emb, scores[idx].value);
            }
        }
        let mean = epoch_loss / anchors_seen as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite {
                context: "encoder training loss".into(),
            });
        }
        epoch_losses.push(mean);
    }

    Ok(EncoderTraining {
        encoder,
        epoch_losses,
        skipped_pair_sets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contrastive::build_pairs;
    use crate::contrastive::Provenance;
    use crate::diffmath::cosine_similarity;
    use crate::series::Origin;
    use crate::tcn::TcnConfig;
    use rand::Rng;

    fn small_config(input_len: usize) -> EncoderConfig {
        EncoderConfig {
            input_len,
            embed_dim: 8,
            temperature: 0.1,
            tcn: TcnConfig {
                input_channels: 1,
                channels: 6,
                kernel_size: 3,
                dilations: vec![1, 2],
            },
        }
    }

    /// Samples from two families: smooth low-difficulty sines and noisy
    /// high-difficulty ones, with matching bimodal scores.
    fn bimodal_dataset(n_per_side: usize, seed: u64) -> (Vec<WindowSample>, Vec<DifficultyScore>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut samples = Vec::new();
        let mut scores = Vec::new();
        for i in 0..2 * n_per_side {
            let noisy = i >= n_per_side;
            let sigma = if noisy { 1.5 } else { 0.0 };
            let phase: f64 = rng.gen_range(0.0..6.28);
            let values: Vec<f64> = (0..24)
                .map(|t| 10.0 + (t as f64 / 3.0 + phase).sin() + sigma * rng.gen_range(-1.0..1.0))
                .collect();
            samples.push(WindowSample {
                series_id: format!("s{i}"),
                t0: 0,
                x: values[..18].to_vec(),
                y: values[18..].to_vec(),
                origin: Origin::Real,
            });
            let difficulty = if noisy {
                0.5 + 0.001 * (i as f64)
            } else {
                0.1 + 0.001 * (i as f64)
            };
            scores.push(DifficultyScore::new(difficulty, Provenance::Measured, format!("s{i}")).unwrap());
        }
        (samples, scores)
    }

    #[test]
    fn zero_epochs_leaves_parameters_at_init() {
        let (samples, scores) = bimodal_dataset(6, 1);
        let (pairs, _) = build_pairs(&scores, 0.05, 2, 4, 1).unwrap();
        let opts = EncoderTrainOptions {
            epochs: 0,
            ..EncoderTrainOptions::default()
        };
        let trained = train_encoder(&pairs, &samples, &scores, small_config(24), &opts).unwrap();
        let mut reference = Encoder::init(small_config(24), opts.seed).unwrap();
        reference.set_normalizer(fit_normalizer(&samples).unwrap());
        for (a, b) in trained.encoder.parameters().iter().zip(reference.parameters()) {
            assert_eq!(a.value, b.value, "parameter {}", a.name);
        }
        assert!(trained.epoch_losses.is_empty());
    }

    #[test]
    fn training_separates_bimodal_difficulty() {
        let (samples, scores) = bimodal_dataset(12, 3);
        let (pairs, _) = build_pairs(&scores, 0.05, 2, 8, 3).unwrap();
        let opts = EncoderTrainOptions {
            epochs: 6,
            batch_size: 4,
            lr: 2e-3,
            seed: 3,
            bank_capacity: 64,
            denominator: DenominatorMode::NegativesOnly,
        };
        let trained = train_encoder(&pairs, &samples, &scores, small_config(24), &opts).unwrap();

        // Held-out probe: fresh samples from the same two families.
        let (held, held_scores) = bimodal_dataset(6, 99);
        let embs: Vec<Vec<f64>> = held
            .iter()
            .map(|s| trained.encoder.encode(s).unwrap())
            .collect();
        let mut pos_cos = Vec::new();
        let mut neg_cos = Vec::new();
        for i in 0..held.len() {
            for j in (i + 1)..held.len() {
                let c = cosine_similarity(&embs[i], &embs[j]).unwrap();
                if (held_scores[i].value - held_scores[j].value).abs() < 0.05 {
                    pos_cos.push(c);
                } else {
                    neg_cos.push(c);
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(
            mean(&pos_cos) > mean(&neg_cos),
            "positive mean {} vs negative mean {}",
            mean(&pos_cos),
            mean(&neg_cos)
        );
    }

    #[test]
    fn loss_decreases_over_training() {
        let (samples, scores) = bimodal_dataset(10, 5);
        let (pairs, _) = build_pairs(&scores, 0.05, 2, 6, 5).unwrap();
        let opts = EncoderTrainOptions {
            epochs: 6,
            batch_size: 4,
            lr: 2e-3,
            seed: 5,
            bank_capacity: 64,
            denominator: DenominatorMode::NegativesOnly,
        };
        let trained = train_encoder(&pairs, &samples, &scores, small_config(24), &opts).unwrap();
        let first = trained.epoch_losses.first().unwrap();
        let last = trained.epoch_losses.last().unwrap();
        assert!(last < first, "loss {first} -> {last}");
    }

    #[test]
    fn deterministic_given_seed() {
        let (samples, scores) = bimodal_dataset(6, 7);
        let (pairs, _) = build_pairs(&scores, 0.05, 2, 4, 7).unwrap();
        let opts = EncoderTrainOptions {
            epochs: 2,
            batch_size: 3,
            ..EncoderTrainOptions::default()
        };
        let a = train_encoder(&pairs, &samples, &scores, small_config(24), &opts).unwrap();
        let b = train_encoder(&pairs, &samples, &scores, small_config(24), &opts).unwrap();
        for (pa, pb) in a.encoder.parameters().iter().zip(b.encoder.parameters()) {
            assert_eq!(pa.value, pb.value);
        }
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn all_sets_without_negatives_rejected() {
        let (samples, _) = bimodal_dataset(3, 9);
        let scores: Vec<DifficultyScore> = (0..6)
            .map(|i| DifficultyScore::new(0.2, Provenance::Measured, format!("s{i}")).unwrap())
            .collect();
        let (pairs, stats) = build_pairs(&scores, 0.05, 2, 4, 9).unwrap();
        assert_eq!(stats.empty_negative_sets, pairs.len());
        let err = train_encoder(
            &pairs,
            &samples,
            &scores,
            small_config(24),
            &EncoderTrainOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::EmptyInput { .. }));
    }
}
