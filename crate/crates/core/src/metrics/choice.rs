//! Zero-shot forced choice between a target label and seeded distractors.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::rng::Pcg32;

pub const CANDIDATE_COUNT: usize = 5;
pub const DEFAULT_DISTRACTORS: usize = CANDIDATE_COUNT - 1;
pub const DEFAULT_SCALE: f64 = 20.0;

/// Picks `k` distinct labels other than `target`, in draw order.
pub fn select_distractors(
    universe: &[String],
    target: &str,
    k: usize,
    seed: u64,
) -> Result<Vec<String>, MetricsError> {
    if !universe.iter().any(|l| l == target) {
        return Err(MetricsError::UnknownTarget(target.to_string()));
    }
    let mut seen = HashSet::with_capacity(universe.len());
    let pool: Vec<&String> = universe
        .iter()
        .filter(|l| *l != target && seen.insert(l.as_str()))
        .collect();
    if pool.len() < k {
        return Err(MetricsError::UniverseTooSmall {
            needed: k + 1,
            got: pool.len() + 1,
        });
    }
    let mut rng = Pcg32::from_seed(seed);
    Ok(rng
        .choose_indices(pool.len(), k)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect())
}

/// Target plus distractors, shuffled so the target's position carries no
/// information (ties resolve to the lowest index).
pub fn candidate_set(
    universe: &[String],
    target: &str,
    seed: u64,
) -> Result<Vec<String>, MetricsError> {
    let mut labels = select_distractors(universe, target, DEFAULT_DISTRACTORS, seed)?;
    labels.push(target.to_string());
    // second stream of the same seed for the ordering
    let mut rng = Pcg32::new(seed, 1);
    rng.shuffle(&mut labels);
    Ok(labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcedChoiceResult {
    pub sample_id: String,
    pub target_label: String,
    pub candidate_labels: Vec<String>,
    pub similarities: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub predicted_label: String,
    pub confidence: f64,
    pub correct: bool,
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::DimMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(MetricsError::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Softmax over `scale * similarities`, computed with the max subtracted.
pub fn softmax_scaled(similarities: &[f64], scale: f64) -> Vec<f64> {
    let max = similarities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = similarities.iter().map(|s| (scale * (s - max)).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn forced_choice<V: AsRef<[f64]>>(
    sample_id: &str,
    audio: &[f64],
    candidates: &[(String, V)],
    target: &str,
    scale: f64,
) -> Result<ForcedChoiceResult, MetricsError> {
    if candidates.len() != CANDIDATE_COUNT {
        return Err(MetricsError::BadCandidateCount(candidates.len()));
    }
    if candidates.iter().filter(|(l, _)| l == target).count() != 1 {
        return Err(MetricsError::UnknownTarget(target.to_string()));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(MetricsError::InvalidScale(scale));
    }
    let similarities = candidates
        .iter()
        .map(|(_, v)| cosine(audio, v.as_ref()))
        .collect::<Result<Vec<_>, _>>()?;
    let probabilities = softmax_scaled(&similarities, scale);
    let mut best = 0;
    for (i, p) in probabilities.iter().enumerate() {
        if *p > probabilities[best] {
            best = i;
        }
    }
    let predicted_label = candidates[best].0.clone();
    Ok(ForcedChoiceResult {
        sample_id: sample_id.to_string(),
        target_label: target.to_string(),
        candidate_labels: candidates.iter().map(|(l, _)| l.clone()).collect(),
        similarities,
        confidence: probabilities[best],
        probabilities,
        correct: predicted_label == target,
        predicted_label,
    })
}
