//! Contrastive pair construction from difficulty score gaps.

use crate::contrastive::{comprehension, DifficultyScore};
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Per-anchor positive and negative index sets. A pair is positive when the
/// two samples' difficulty gap is below the threshold; negative weights are
/// the gaps themselves.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContrastivePairSet {
    pub anchor: usize,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
    /// Aligned with `negatives`.
    pub negative_weights: Vec<f64>,
    /// Threshold used to split positives from negatives.
    pub threshold: f64,
}

impl ContrastivePairSet {
    /// Re-check the partition against raw scores.
    pub fn validate_against(&self, scores: &[DifficultyScore]) -> Result<()> {
        let anchor = &scores[self.anchor];
        for &j in &self.positives {
            if j == self.anchor || self.negatives.contains(&j) {
                return Err(Error::invalid("pair set", "index sets overlap"));
            }
            if comprehension(anchor, &scores[j]) >= self.threshold {
                return Err(Error::invalid("pair set", "positive above threshold"));
            }
        }
        for (&k, &w) in self.negatives.iter().zip(&self.negative_weights) {
            if k == self.anchor {
                return Err(Error::invalid("pair set", "anchor in negatives"));
            }
            let gap = comprehension(anchor, &scores[k]);
            if gap < self.threshold {
                return Err(Error::invalid("pair set", "negative below threshold"));
            }
            if (gap - w).abs() > 1e-12 {
                return Err(Error::invalid("pair set", "weight does not equal gap"));
            }
        }
        Ok(())
    }
}

/// Counters for anchors that could not form a usable pair set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairBuildStats {
    /// Anchors with no candidate below the threshold; no set emitted.
    pub skipped_no_positive: usize,
    /// Emitted sets whose negative list is empty (degenerate distribution).
    pub empty_negative_sets: usize,
}

/// Build one pair set per anchor from measured difficulty scores.
///
/// Positives are up to `j_max` uniformly sampled candidates whose gap to the
/// anchor is `< delta`; negatives up to `k_max` with gap `>= delta`, each
/// weighted by its gap. Anchors with no positive candidate are skipped and
/// counted.
pub fn build_pairs(
    scores: &[DifficultyScore],
    delta: f64,
    j_max: usize,
    k_max: usize,
    seed: u64,
) -> Result<(Vec<ContrastivePairSet>, PairBuildStats)> {
    if scores.len() < 2 {
        return Err(Error::EmptyInput {
            what: "pair construction needs at least 2 scored samples".into(),
        });
    }
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::invalid("delta", "must be finite and >= 0"));
    }
    if j_max == 0 || k_max == 0 {
        return Err(Error::invalid("j_max/k_max", "must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sets = Vec::with_capacity(scores.len());
    let mut stats = PairBuildStats::default();
    for anchor in 0..scores.len() {
        let mut positives = Vec::new();
        let mut negatives = Vec::new();
        for other in 0..scores.len() {
            if other == anchor {
                continue;
            }
            if comprehension(&scores[anchor], &scores[other]) < delta {
                positives.push(other);
            } else {
                negatives.push(other);
            }
        }
        if positives.is_empty() {
            stats.skipped_no_positive += 1;
            continue;
        }
        let mut positives: Vec<usize> = positives
            .choose_multiple(&mut rng, j_max)
            .copied()
            .collect();
        positives.sort_unstable();
        let mut negatives: Vec<usize> = negatives
            .choose_multiple(&mut rng, k_max)
            .copied()
            .collect();
        negatives.sort_unstable();
        if negatives.is_empty() {
            stats.empty_negative_sets += 1;
        }
        let negative_weights = negatives
            .iter()
            .map(|&k| comprehension(&scores[anchor], &scores[k]))
            .collect();
        sets.push(ContrastivePairSet {
            anchor,
            positives,
            negatives,
            negative_weights,
            threshold: delta,
        });
    }
    Ok((sets, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contrastive::Provenance;

    fn scores(values: &[f64]) -> Vec<DifficultyScore> {
        values
            .iter()
            .enumerate()
            .map(|(i, v)| DifficultyScore::new(*v, Provenance::Measured, format!("s{i}")).unwrap())
            .collect()
    }

    #[test]
    fn hand_case_three_scores() {
        // {0.100, 0.105, 0.300}, delta 0.01: the first two pair positively
        // (gap 0.005); each is negative to the third with weight ~0.2.
        let s = scores(&[0.100, 0.105, 0.300]);
        let (sets, stats) = build_pairs(&s, 0.01, 4, 4, 1).unwrap();
        assert_eq!(stats.skipped_no_positive, 1); // anchor 2 has no positives
        assert_eq!(sets.len(), 2);
        let first = sets.iter().find(|p| p.anchor == 0).unwrap();
        assert_eq!(first.positives, vec![1]);
        assert_eq!(first.negatives, vec![2]);
        assert!((first.negative_weights[0] - 0.2).abs() < 1e-12);
        for set in &sets {
            set.validate_against(&s).unwrap();
        }
    }

    #[test]
    fn identical_difficulties_give_no_negatives() {
        let s = scores(&[0.2; 5]);
        let (sets, stats) = build_pairs(&s, 0.01, 2, 4, 1).unwrap();
        assert_eq!(sets.len(), 5);
        assert_eq!(stats.empty_negative_sets, 5);
        assert!(sets.iter().all(|p| p.negatives.is_empty() && !p.positives.is_empty()));
    }

    #[test]
    fn zero_delta_skips_every_anchor() {
        // The positive test is a strict inequality, so delta 0 never matches.
        let s = scores(&[0.1, 0.1, 0.3]);
        let (sets, stats) = build_pairs(&s, 0.0, 2, 2, 1).unwrap();
        assert!(sets.is_empty());
        assert_eq!(stats.skipped_no_positive, 3);
    }

    #[test]
    fn respects_j_max_and_k_max() {
        let s = scores(&[0.1, 0.1001, 0.1002, 0.1003, 0.5, 0.6, 0.7, 0.8, 0.9]);
        let (sets, _) = build_pairs(&s, 0.01, 2, 3, 9).unwrap();
        for set in &sets {
            assert!(set.positives.len() <= 2);
            assert!(set.negatives.len() <= 3);
            assert_eq!(set.negatives.len(), set.negative_weights.len());
            set.validate_against(&s).unwrap();
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let s = scores(&[0.1, 0.11, 0.12, 0.3, 0.31, 0.5, 0.52, 0.9]);
        let a = build_pairs(&s, 0.05, 2, 3, 42).unwrap();
        let b = build_pairs(&s, 0.05, 2, 3, 42).unwrap();
        let aj = serde_json::to_string(&a.0).unwrap();
        let bj = serde_json::to_string(&b.0).unwrap();
        assert_eq!(aj, bj);
    }

    #[test]
    fn fewer_than_two_samples_rejected() {
        let s = scores(&[0.1]);
        assert!(build_pairs(&s, 0.01, 1, 1, 1).is_err());
    }
}
