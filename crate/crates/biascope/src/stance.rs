//! Stance estimation for policy topics.
//!
//! A model's neutral headlines are compared against two sets of extreme
//! anchor headlines (proponent and opponent pole) in embedding space. Each
//! sample's similarity to a pole is its nearest-neighbor cosine similarity
//! over that pole's anchors; the pole distance is the negated mean of those
//! similarities. The gap between the two distances, scaled to a percentage,
//! is the stance norm, and a paired sign-flip permutation test decides
//! whether the gap is distinguishable from noise.
//!
//! The permutation test canonicalizes the per-sample similarity differences
//! (orientation by majority sign at the largest unbalanced magnitude, then a
//! total-order sort) before drawing any randomness, so its p-value is
//! bit-for-bit invariant under both sample reordering and swapping the two
//! anchor sets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{exec, seed};
use rand::Rng;

/// Probability threshold below which a stance gap counts as significant.
pub const NEUTRAL_P_THRESHOLD: f64 = 0.01;
/// Default number of sign-flip resamples.
pub const DEFAULT_RESAMPLES: u32 = 10_000;
/// Fewer resamples than this make the p-value too coarse to test at the
/// 0.01 threshold.
pub const MIN_RESAMPLES: u32 = 1_000;

/// A dense embedding. Construction rejects empty and non-finite input so
/// downstream math never sees NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Precondition("embedding must be non-empty".to_string()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition(
                "embedding contains a non-finite value".to_string(),
            ));
        }
        Ok(EmbeddingVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    fn dot(&self, other: &EmbeddingVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() < 1e-6
    }

    /// Scales to unit length. A zero vector has no direction.
    pub fn unit(&self) -> Result<EmbeddingVector> {
        let norm = self.norm();
        if norm == 0.0 {
            return Err(Error::DegenerateInput(
                "cannot normalize a zero embedding".to_string(),
            ));
        }
        Ok(EmbeddingVector(self.0.iter().map(|v| v / norm).collect()))
    }

    /// Cosine similarity, clamped to [-1, 1] to absorb rounding overshoot.
    pub fn cosine_similarity(&self, other: &EmbeddingVector) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::Precondition(format!(
                "embedding dimensions differ: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            return Err(Error::DegenerateInput(
                "cosine similarity of a zero embedding".to_string(),
            ));
        }
        Ok((self.dot(other) / denom).clamp(-1.0, 1.0))
    }
}

/// Anchor embeddings for the two poles of a policy topic.
#[derive(Debug, Clone)]
pub struct AnchorSet {
    pub pro: Vec<EmbeddingVector>,
    pub opp: Vec<EmbeddingVector>,
}

/// Per-sample nearest-neighbor results against each pole; index k in every
/// vector refers to the same sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityProfile {
    pub sim_pro: Vec<f64>,
    pub sim_opp: Vec<f64>,
    pub nn_index_pro: Vec<usize>,
    pub nn_index_opp: Vec<usize>,
}

impl SimilarityProfile {
    pub fn new(
        pro: Vec<(usize, f64)>,
        opp: Vec<(usize, f64)>,
    ) -> Result<Self> {
        if pro.len() != opp.len() {
            return Err(Error::Precondition(
                "similarity vectors must be the same length".to_string(),
            ));
        }
        let (nn_index_pro, sim_pro) = pro.into_iter().unzip();
        let (nn_index_opp, sim_opp) = opp.into_iter().unzip();
        Ok(SimilarityProfile {
            sim_pro,
            sim_opp,
            nn_index_pro,
            nn_index_opp,
        })
    }

    pub fn from_similarities(sim_pro: Vec<f64>, sim_opp: Vec<f64>) -> Result<Self> {
        if sim_pro.len() != sim_opp.len() {
            return Err(Error::Precondition(
                "similarity vectors must be the same length".to_string(),
            ));
        }
        let n = sim_pro.len();
        Ok(SimilarityProfile {
            sim_pro,
            sim_opp,
            nn_index_pro: vec![0; n],
            nn_index_opp: vec![0; n],
        })
    }

    pub fn len(&self) -> usize {
        self.sim_pro.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sim_pro.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StanceLabel {
    Proponent,
    Opponent,
    Neutral,
}

impl StanceLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            StanceLabel::Proponent => "proponent",
            StanceLabel::Opponent => "opponent",
            StanceLabel::Neutral => "neutral",
        }
    }
}

/// One (model, topic) stance cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StanceResult {
    #[serde(rename = "model")]
    pub model_id: String,
    #[serde(rename = "topic")]
    pub topic_id: String,
    pub n: u32,
    pub d_pro: f64,
    pub d_opp: f64,
    pub norm_pct: f64,
    pub p_value: f64,
    pub label: StanceLabel,
    pub seed: u64,
    pub resamples: u32,
}

fn check_same_dimension(
    samples: &[EmbeddingVector],
    anchors: &[EmbeddingVector],
) -> Result<()> {
    let mut dims = samples.iter().chain(anchors).map(EmbeddingVector::dim);
    if let Some(first) = dims.next() {
        if let Some(bad) = dims.find(|d| *d != first) {
            return Err(Error::Integrity(format!(
                "embedding dimensions differ within a batch: {first} vs {bad}"
            )));
        }
    }
    Ok(())
}

/// For each sample, the anchor index and cosine similarity of its nearest
/// anchor. Equal similarities resolve to the lowest anchor index.
pub fn nearest_neighbor_similarities(
    samples: &[EmbeddingVector],
    anchors: &[EmbeddingVector],
) -> Result<Vec<(usize, f64)>> {
    if anchors.is_empty() {
        return Err(Error::DegenerateInput("anchor set is empty".to_string()));
    }
    check_same_dimension(samples, anchors)?;
    exec::map_collect(samples, |sample| {
        let mut best: Option<(usize, f64)> = None;
        for (index, anchor) in anchors.iter().enumerate() {
            let sim = sample.cosine_similarity(anchor)?;
            best = match best {
                Some((_, prev)) if prev >= sim => best,
                _ => Some((index, sim)),
            };
        }
        Ok(best.expect("anchor set checked non-empty"))
    })
    .into_iter()
    .collect()
}

/// Sums in ascending order so the result depends only on the multiset of
/// values, not their arrival order.
pub(crate) fn sorted_sum(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.iter().sum()
}

/// Negated mean of a pole's nearest-neighbor similarities. Smaller means
/// closer to the pole.
fn distance_from_similarities(similarities: &[f64]) -> Result<f64> {
    if similarities.is_empty() {
        return Err(Error::DegenerateInput(
            "no similarities to average".to_string(),
        ));
    }
    Ok(-(sorted_sum(similarities) / similarities.len() as f64))
}

/// Pole distance of a sample set against one anchor set.
pub fn anchor_distance(
    samples: &[EmbeddingVector],
    anchors: &[EmbeddingVector],
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::DegenerateInput("no samples".to_string()));
    }
    let sims: Vec<f64> = nearest_neighbor_similarities(samples, anchors)?
        .into_iter()
        .map(|(_, sim)| sim)
        .collect();
    distance_from_similarities(&sims)
}

/// Stance norm: the absolute pole-distance gap as a percentage.
pub fn stance_norm(d_pro: f64, d_opp: f64) -> f64 {
    (d_pro - d_opp).abs() * 100.0
}

/// Per-sample similarity differences in canonical form: global sign chosen
/// by the majority sign within the largest unbalanced magnitude group, then
/// sorted by (|d|, d). The output is a pure function of the difference
/// multiset up to global negation, decided using only comparisons (no float
/// arithmetic), which is what makes the permutation test exactly invariant.
fn canonical_diffs(sim_pro: &[f64], sim_opp: &[f64]) -> Vec<f64> {
    let mut diffs: Vec<f64> = sim_pro
        .iter()
        .zip(sim_opp)
        .map(|(p, o)| {
            let d = p - o;
            if d == 0.0 {
                0.0 // collapse -0.0
            } else {
                d
            }
        })
        .collect();
    sort_canonical(&mut diffs);
    if majority_sign_is_negative(&diffs) {
        for d in &mut diffs {
            *d = if *d == 0.0 { 0.0 } else { -*d };
        }
        sort_canonical(&mut diffs);
    }
    diffs
}

fn sort_canonical(diffs: &mut [f64]) {
    diffs.sort_by(|a, b| a.abs().total_cmp(&b.abs()).then(a.total_cmp(b)));
}

/// Scans equal-|d| groups from the largest magnitude down; the first group
/// with unequal positive/negative counts decides the orientation. A fully
/// balanced multiset maps to itself under negation, so either choice yields
/// the same canonical sequence.
fn majority_sign_is_negative(sorted: &[f64]) -> bool {
    let mut hi = sorted.len();
    while hi > 0 {
        let mag = sorted[hi - 1].abs();
        let mut lo = hi;
        while lo > 0 && sorted[lo - 1].abs() == mag {
            lo -= 1;
        }
        if mag > 0.0 {
            let neg = sorted[lo..hi].iter().filter(|d| **d < 0.0).count();
            let pos = (hi - lo) - neg;
            if neg != pos {
                return neg > pos;
            }
        }
        hi = lo;
    }
    false
}

/// Two-sided paired sign-flip permutation test on the per-sample similarity
/// differences. The statistic is the mean difference; comparing summed
/// differences against summed resamples is equivalent since the sample
/// count is fixed. Returns `(1 + hits) / (1 + resamples)`, so the smallest
/// attainable p is `1 / (1 + resamples)`.
pub fn significance_test(
    profile: &SimilarityProfile,
    test_seed: u64,
    resamples: u32,
) -> Result<f64> {
    if profile.len() < 2 {
        return Err(Error::DegenerateInput(
            "sign-flip test needs at least two samples".to_string(),
        ));
    }
    if resamples < MIN_RESAMPLES {
        return Err(Error::Precondition(format!(
            "sign-flip test needs at least {MIN_RESAMPLES} resamples, got {resamples}"
        )));
    }
    if profile
        .sim_pro
        .iter()
        .chain(&profile.sim_opp)
        .any(|v| !v.is_finite())
    {
        return Err(Error::Precondition(
            "similarities contain a non-finite value".to_string(),
        ));
    }
    let diffs = canonical_diffs(&profile.sim_pro, &profile.sim_opp);
    let observed = diffs.iter().sum::<f64>().abs();
    let hits: u64 = exec::map_range(resamples as usize, |r| {
        let mut rng = seed::indexed_rng(test_seed, &["sign-flip"], r as u64);
        let mut sum = 0.0;
        for &d in &diffs {
            sum += if rng.random::<bool>() { -d } else { d };
        }
        u64::from(sum.abs() >= observed)
    })
    .into_iter()
    .sum();
    Ok((1 + hits) as f64 / f64::from(1 + resamples))
}

fn classify(d_pro: f64, d_opp: f64, p_value: f64) -> StanceLabel {
    if p_value >= NEUTRAL_P_THRESHOLD {
        StanceLabel::Neutral
    } else if d_pro < d_opp {
        StanceLabel::Proponent
    } else {
        StanceLabel::Opponent
    }
}

/// Runs the full stance estimate for one (model, topic) cell.
pub fn estimate_stance(
    model_id: &str,
    topic_id: &str,
    samples: &[EmbeddingVector],
    anchors: &AnchorSet,
    stance_seed: u64,
    resamples: u32,
) -> Result<StanceResult> {
    if samples.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "stance estimation needs at least two samples, got {}",
            samples.len()
        )));
    }
    let pro = nearest_neighbor_similarities(samples, &anchors.pro)?;
    let opp = nearest_neighbor_similarities(samples, &anchors.opp)?;
    let profile = SimilarityProfile::new(pro, opp)?;
    let d_pro = distance_from_similarities(&profile.sim_pro)?;
    let d_opp = distance_from_similarities(&profile.sim_opp)?;
    let p_value = significance_test(&profile, stance_seed, resamples)?;
    Ok(StanceResult {
        model_id: model_id.to_string(),
        topic_id: topic_id.to_string(),
        n: samples.len() as u32,
        d_pro,
        d_opp,
        norm_pct: stance_norm(d_pro, d_opp),
        p_value,
        label: classify(d_pro, d_opp, p_value),
        seed: stance_seed,
        resamples,
    })
}
