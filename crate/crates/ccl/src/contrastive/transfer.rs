//! Difficulty transfer: a simulated sample inherits the difficulty of the
//! real sample whose embedding is most similar to its own.

use crate::contrastive::{DifficultyScore, Encoder, Provenance};
use crate::diffmath::cosine_similarity;
use crate::error::{Error, Result};
use crate::series::{Origin, WindowSample};
use serde::{Deserialize, Serialize};

/// Which reference sample a simulated sample inherits from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SimilarityRule {
    /// Nearest neighbor by cosine similarity.
    #[default]
    MostSimilar,
    /// Farthest by cosine similarity; kept only as an ablation switch.
    LeastSimilar,
}

/// Real samples with their measured scores and cached embeddings.
#[derive(Debug, Clone)]
pub struct ReferenceSet {
    pub embeddings: Vec<Vec<f64>>,
    pub scores: Vec<DifficultyScore>,
}

impl ReferenceSet {
    /// Embed every real reference sample once.
    pub fn build(
        encoder: &Encoder,
        samples: &[WindowSample],
        scores: &[DifficultyScore],
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput {
                what: "reference samples".into(),
            });
        }
        if samples.len() != scores.len() {
            return Err(Error::shape(
                "ReferenceSet::build",
                format!("{} scores", samples.len()),
                format!("{}", scores.len()),
            ));
        }
        let embeddings = samples
            .iter()
            .map(|s| encoder.encode(s))
            .collect::<Result<Vec<_>>>()?;
        Ok(ReferenceSet {
            embeddings,
            scores: scores.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Assign a simulated sample the difficulty of its selected real reference.
///
/// A linear scan over all references; ties break toward the lowest
/// reference index.
pub fn difficulty_simulated(
    encoder: &Encoder,
    references: &ReferenceSet,
    sample: &WindowSample,
    rule: SimilarityRule,
) -> Result<DifficultyScore> {
    if references.is_empty() {
        return Err(Error::EmptyInput {
            what: "reference set".into(),
        });
    }
    if sample.origin != Origin::Simulated {
        return Err(Error::invalid(
            "sample",
            "difficulty transfer applies to simulated-origin samples",
        ));
    }
    let embedding = encoder.encode(sample)?;
    let index = select_reference(&references.embeddings, &embedding, rule)?;
    DifficultyScore::new(
        references.scores[index].value,
        Provenance::Transferred,
        sample.sample_id(),
    )
}

pub(crate) fn select_reference(
    reference_embeddings: &[Vec<f64>],
    embedding: &[f64],
    rule: SimilarityRule,
) -> Result<usize> {
    let mut best = 0usize;
    let mut best_sim = cosine_similarity(&reference_embeddings[0], embedding)?;
    for (i, reference) in reference_embeddings.iter().enumerate().skip(1) {
        let sim = cosine_similarity(reference, embedding)?;
        let better = match rule {
            SimilarityRule::MostSimilar => sim > best_sim,
            SimilarityRule::LeastSimilar => sim < best_sim,
        };
        if better {
            best = i;
            best_sim = sim;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contrastive::EncoderConfig;
    use crate::series::Origin;
    use crate::tcn::TcnConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_case_two_references() {
        // refs e1=(1,0) with d=0.2, e2=(0,1) with d=0.5; query ~ (0.9, 0.1):
        // cosines 0.9939 vs 0.1104, so the score is 0.2.
        let refs = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let query = [0.9, 0.1];
        let c0 = cosine_similarity(&refs[0], &query).unwrap();
        let c1 = cosine_similarity(&refs[1], &query).unwrap();
        assert!((c0 - 0.9939).abs() < 1e-4);
        assert!((c1 - 0.1104).abs() < 1e-4);
        assert_eq!(select_reference(&refs, &query, SimilarityRule::MostSimilar).unwrap(), 0);
        assert_eq!(select_reference(&refs, &query, SimilarityRule::LeastSimilar).unwrap(), 1);
    }

    #[test]
    fn ties_break_to_lowest_index() {
        let refs = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let query = [1.0, 0.0];
        assert_eq!(select_reference(&refs, &query, SimilarityRule::MostSimilar).unwrap(), 0);
    }

    #[test]
    fn matches_brute_force_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let n = rng.gen_range(2..40);
            let d = 16;
            let refs: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let query: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let got = select_reference(&refs, &query, SimilarityRule::MostSimilar).unwrap();
            let mut best = 0;
            let mut best_sim = f64::NEG_INFINITY;
            for (i, r) in refs.iter().enumerate() {
                let sim = cosine_similarity(r, &query).unwrap();
                if sim > best_sim {
                    best_sim = sim;
                    best = i;
                }
            }
            assert_eq!(got, best);
        }
    }

    #[test]
    fn copy_of_real_sample_inherits_its_score() {
        let config = EncoderConfig {
            input_len: 12,
            embed_dim: 6,
            temperature: 0.1,
            tcn: TcnConfig {
                input_channels: 1,
                channels: 4,
                kernel_size: 3,
                dilations: vec![1],
            },
        };
        let encoder = Encoder::init(config, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let reals: Vec<WindowSample> = (0..5)
            .map(|i| WindowSample {
                series_id: format!("r{i}"),
                t0: 0,
                x: (0..8).map(|_| rng.gen_range(1.0..9.0)).collect(),
                y: (0..4).map(|_| rng.gen_range(1.0..9.0)).collect(),
                origin: Origin::Real,
            })
            .collect();
        let scores: Vec<DifficultyScore> = (0..5)
            .map(|i| {
                DifficultyScore::new(0.1 * (i + 1) as f64, Provenance::Measured, format!("r{i}"))
                    .unwrap()
            })
            .collect();
        let refs = ReferenceSet::build(&encoder, &reals, &scores).unwrap();

        let copy = WindowSample {
            origin: Origin::Simulated,
            series_id: "sim".into(),
            ..reals[3].clone()
        };
        let transferred =
            difficulty_simulated(&encoder, &refs, &copy, SimilarityRule::MostSimilar).unwrap();
        assert_eq!(transferred.value, scores[3].value);
        assert_eq!(transferred.provenance, Provenance::Transferred);
    }

    #[test]
    fn real_origin_sample_rejected() {
        let config = EncoderConfig {
            input_len: 4,
            embed_dim: 4,
            temperature: 0.1,
            tcn: TcnConfig {
                input_channels: 1,
                channels: 2,
                kernel_size: 2,
                dilations: vec![1],
            },
        };
        let encoder = Encoder::init(config, 1).unwrap();
        let real = WindowSample {
            series_id: "r".into(),
            t0: 0,
            x: vec![1.0, 2.0],
            y: vec![3.0, 4.0],
            origin: Origin::Real,
        };
        let refs = ReferenceSet {
            embeddings: vec![vec![1.0, 0.0, 0.0, 0.0]],
            scores: vec![DifficultyScore::new(0.3, Provenance::Measured, "r").unwrap()],
        };
        assert!(difficulty_simulated(&encoder, &refs, &real, SimilarityRule::MostSimilar).is_err());
    }
}
