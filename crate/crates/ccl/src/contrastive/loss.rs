//! Weighted InfoNCE over cosine similarities.

use crate::diffmath::cosine_similarity_backward;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Negative weights are clamped to this floor so the denominator cannot
/// vanish when ablations produce near-zero gaps.
pub const NEGATIVE_WEIGHT_FLOOR: f64 = 1e-4;

/// Which terms the denominator sums over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DenominatorMode {
    /// Weighted negatives only. The loss is then a free ratio and may be
    /// negative.
    #[default]
    NegativesOnly,
    /// Adds the positive terms into the denominator, which recovers the
    /// textbook InfoNCE form under uniform weights and a single positive.
    WithPositives,
}

/// Loss value and gradients with respect to every embedding involved.
#[derive(Debug, Clone)]
pub struct InfoNce {
    pub loss: f64,
    pub grad_anchor: Vec<f64>,
    pub grad_positives: Vec<Vec<f64>>,
    pub grad_negatives: Vec<Vec<f64>>,
}

/// `-log( sum_j exp(sim(a, p_j)/tau) / sum_k w_k * exp(sim(a, n_k)/tau) )`.
///
/// Similarities are cosines; gradients flow through them to all embeddings.
pub fn weighted_info_nce(
    anchor: &[f64],
    positives: &[Vec<f64>],
    negatives: &[Vec<f64>],
    weights: &[f64],
    temperature: f64,
    mode: DenominatorMode,
) -> Result<InfoNce> {
    if positives.is_empty() {
        return Err(Error::EmptyInput {
            what: "positive embeddings".into(),
        });
    }
    if negatives.is_empty() {
        return Err(Error::EmptyInput {
            what: "negative embeddings".into(),
        });
    }
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::invalid("temperature", "must be finite and > 0"));
    }
    if weights.len() != negatives.len() {
        return Err(Error::shape(
            "weighted_info_nce",
            format!("{} weights", negatives.len()),
            format!("{}", weights.len()),
        ));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::invalid("weights", "must be finite and >= 0"));
    }
    if weights.iter().all(|w| *w == 0.0) {
        return Err(Error::invalid("weights", "all-zero weights"));
    }
    let weights: Vec<f64> = weights.iter().map(|w| w.max(NEGATIVE_WEIGHT_FLOOR)).collect();

    // Similarities and their gradients.
    let mut pos = Vec::with_capacity(positives.len());
    for p in positives {
        pos.push(cosine_similarity_backward(anchor, p)?);
    }
    let mut neg = Vec::with_capacity(negatives.len());
    for n in negatives {
        neg.push(cosine_similarity_backward(anchor, n)?);
    }

    // Log-sum-exp over scaled similarities.
    let pos_scaled: Vec<f64> = pos.iter().map(|(s, _, _)| s / temperature).collect();
    let neg_scaled: Vec<f64> = neg.iter().map(|(s, _, _)| s / temperature).collect();
    let m_num = pos_scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_num = m_num + pos_scaled.iter().map(|a| (a - m_num).exp()).sum::<f64>().ln();

    let mut m_den = neg_scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if mode == DenominatorMode::WithPositives {
        m_den = m_den.max(m_num);
    }
    let mut den_sum: f64 = neg_scaled
        .iter()
        .zip(&weights)
        .map(|(b, w)| w * (b - m_den).exp())
        .sum();
    if mode == DenominatorMode::WithPositives {
        den_sum += pos_scaled.iter().map(|a| (a - m_den).exp()).sum::<f64>();
    }
    let log_den = m_den + den_sum.ln();
    let loss = -log_num + log_den;

    // d loss / d sim for each term, then chain through the cosine.
    let mut grad_anchor = vec![0.0; anchor.len()];
    let mut grad_positives = Vec::with_capacity(positives.len());
    for ((scaled, (_, d_anchor, d_other)), _) in pos_scaled.iter().zip(&pos).zip(positives) {
        let mut d_sim = -((scaled - log_num).exp()) / temperature;
        if mode == DenominatorMode::WithPositives {
            d_sim += (scaled - log_den).exp() / temperature;
        }
        for (g, d) in grad_anchor.iter_mut().zip(d_anchor) {
            *g += d_sim * d;
        }
        grad_positives.push(d_other.iter().map(|d| d_sim * d).collect());
    }
    let mut grad_negatives = Vec::with_capacity(negatives.len());
    for ((scaled, w), (_, d_anchor, d_other)) in
        neg_scaled.iter().zip(&weights).zip(&neg)
    {
        let d_sim = w * (scaled - log_den).exp() / temperature;
        for (g, d) in grad_anchor.iter_mut().zip(d_anchor) {
            *g += d_sim * d;
        }
        grad_negatives.push(d_other.iter().map(|d| d_sim * d).collect());
    }

    if !loss.is_finite() {
        return Err(Error::NonFinite {
            context: "weighted_info_nce loss".into(),
        });
    }
    Ok(InfoNce {
        loss,
        grad_anchor,
        grad_positives,
        grad_negatives,
    })
}
