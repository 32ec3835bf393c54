//! Style-bias analysis: per-entity polarity distributions, the topic-level
//! lexical polarity rate, and the media-bias rate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the lexical polarity rate is computed: every (headline, entity)
/// judgment counts once. Recorded in summary metadata so downstream
/// consumers know the averaging basis.
pub const LEXICAL_RATE_BASIS: &str = "per_record";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
    Neutral,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
            Polarity::Neutral => "neutral",
        }
    }
}

/// One target-sentiment judgment: the polarity a headline expresses toward
/// one canonical entity. `(request_index, position)` locate the headline
/// within the model/topic analysis corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolarityRecord {
    #[serde(rename = "model")]
    pub model_id: String,
    #[serde(rename = "topic")]
    pub topic_id: String,
    pub request_index: u32,
    pub position: u32,
    pub canonical: String,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediaBiasLabel {
    Biased,
    Unbiased,
}

/// A ratio stored with its integer numerator and denominator so
/// `rate * denominator` always reconstructs an exact count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateStat {
    pub numerator: u32,
    pub denominator: u32,
    pub rate: f64,
}

impl RateStat {
    pub fn new(numerator: u32, denominator: u32) -> Result<RateStat> {
        if denominator == 0 {
            return Err(Error::Precondition(
                "rate denominator must be at least 1".to_string(),
            ));
        }
        if numerator > denominator {
            return Err(Error::Precondition(format!(
                "rate numerator {numerator} exceeds denominator {denominator}"
            )));
        }
        Ok(RateStat {
            numerator,
            denominator,
            rate: f64::from(numerator) / f64::from(denominator),
        })
    }
}

/// Polarity tallies for one entity, with the strict-majority dominant
/// label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityPolarity {
    pub canonical: String,
    pub positive: u32,
    pub negative: u32,
    pub neutral: u32,
    pub dominant: Polarity,
}

impl EntityPolarity {
    pub fn total(&self) -> u32 {
        self.positive + self.negative + self.neutral
    }
}

/// Style products for one (model, topic). Rates are absent (not zero) when
/// no usable records exist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleProfile {
    #[serde(rename = "model")]
    pub model_id: String,
    #[serde(rename = "topic")]
    pub topic_id: String,
    pub entities: Vec<EntityPolarity>,
    pub lexical_polarity_rate: Option<RateStat>,
    pub media_bias_rate: Option<RateStat>,
}

fn dominant_label(positive: u32, negative: u32, neutral: u32) -> Polarity {
    let total = positive + negative + neutral;
    if 2 * positive > total {
        Polarity::Positive
    } else if 2 * negative > total {
        Polarity::Negative
    } else if 2 * neutral > total {
        Polarity::Neutral
    } else {
        // no strict majority (including ties)
        Polarity::Neutral
    }
}

/// Tallies polarity records per entity. The dominant label requires a
/// strict majority; anything less (ties included) is neutral. Output is
/// sorted by canonical form.
pub fn aggregate_entity_polarity(records: &[PolarityRecord]) -> Vec<EntityPolarity> {
    let mut tallies: BTreeMap<&str, (u32, u32, u32)> = BTreeMap::new();
    for record in records {
        let entry = tallies.entry(&record.canonical).or_default();
        match record.polarity {
            Polarity::Positive => entry.0 += 1,
            Polarity::Negative => entry.1 += 1,
            Polarity::Neutral => entry.2 += 1,
        }
    }
    tallies
        .into_iter()
        .map(|(canonical, (positive, negative, neutral))| EntityPolarity {
            canonical: canonical.to_string(),
            positive,
            negative,
            neutral,
            dominant: dominant_label(positive, negative, neutral),
        })
        .collect()
}

/// Fraction of polarity records that are not neutral. Absent when there
/// are no records.
pub fn lexical_polarity_rate(records: &[PolarityRecord]) -> Option<RateStat> {
    if records.is_empty() {
        return None;
    }
    let polarized = records
        .iter()
        .filter(|r| r.polarity != Polarity::Neutral)
        .count() as u32;
    Some(
        RateStat::new(polarized, records.len() as u32)
            .expect("denominator checked non-zero"),
    )
}

/// Fraction of usable headline labels that are biased. Headlines whose
/// classification failed must be excluded before this call; an empty list
/// yields an absent rate.
pub fn media_bias_rate(labels: &[MediaBiasLabel]) -> Option<RateStat> {
    if labels.is_empty() {
        return None;
    }
    let biased = labels
        .iter()
        .filter(|l| **l == MediaBiasLabel::Biased)
        .count() as u32;
    Some(
        RateStat::new(biased, labels.len() as u32).expect("denominator checked non-zero"),
    )
}

/// Mean and population standard deviation of per-topic media-bias rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediaBiasSummary {
    pub mean: f64,
    pub stddev: f64,
    pub n_topics: u32,
}

/// Summarizes per-topic rates. The spread is the population standard
/// deviation (divide by n, not n-1): the topics are the whole population
/// under study, not a sample.
pub fn media_bias_summary(rates: &[f64]) -> Option<MediaBiasSummary> {
    if rates.is_empty() {
        return None;
    }
    let n = rates.len() as f64;
    let mean = rates.iter().sum::<f64>() / n;
    let variance = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    Some(MediaBiasSummary {
        mean,
        stddev: variance.sqrt(),
        n_topics: rates.len() as u32,
    })
}

/// Assembles the style profile for one (model, topic).
pub fn build_style_profile(
    model_id: &str,
    topic_id: &str,
    records: &[PolarityRecord],
    media_labels: &[MediaBiasLabel],
) -> StyleProfile {
    StyleProfile {
        model_id: model_id.to_string(),
        topic_id: topic_id.to_string(),
        entities: aggregate_entity_polarity(records),
        lexical_polarity_rate: lexical_polarity_rate(records),
        media_bias_rate: media_bias_rate(media_labels),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(canonical: &str, polarity: Polarity) -> PolarityRecord {
        PolarityRecord {
            model_id: "m".into(),
            topic_id: "t".into(),
            request_index: 0,
            position: 0,
            canonical: canonical.into(),
            polarity,
        }
    }

    #[test]
    fn strict_majority_wins() {
        let records = vec![
            record("X", Polarity::Positive),
            record("X", Polarity::Positive),
            record("X", Polarity::Negative),
        ];
        let agg = aggregate_entity_polarity(&records);
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[0].dominant, Polarity::Positive);
        assert_eq!((agg[0].positive, agg[0].negative, agg[0].neutral), (2, 1, 0));
    }

    #[test]
    fn tie_resolves_to_neutral() {
        let records = vec![
            record("X", Polarity::Positive),
            record("X", Polarity::Negative),
        ];
        assert_eq!(aggregate_entity_polarity(&records)[0].dominant, Polarity::Neutral);
    }

    #[test]
    fn plurality_without_majority_is_neutral() {
        let records = vec![
            record("X", Polarity::Positive),
            record("X", Polarity::Positive),
            record("X", Polarity::Negative),
            record("X", Polarity::Negative),
            record("X", Polarity::Neutral),
        ];
        assert_eq!(aggregate_entity_polarity(&records)[0].dominant, Polarity::Neutral);
    }

    #[test]
    fn majority_negative_dominates() {
        let records = vec![
            record("Ban", Polarity::Negative),
            record("Ban", Polarity::Negative),
            record("Ban", Polarity::Negative),
            record("Ban", Polarity::Positive),
        ];
        assert_eq!(aggregate_entity_polarity(&records)[0].dominant, Polarity::Negative);
    }

    #[test]
    fn entities_are_sorted_and_separate() {
        let records = vec![
            record("B", Polarity::Positive),
            record("A", Polarity::Negative),
            record("B", Polarity::Positive),
        ];
        let agg = aggregate_entity_polarity(&records);
        let names: Vec<&str> = agg.iter().map(|e| e.canonical.as_str()).collect();
        assert_eq!(names, vec!["A", "B"]);
        assert_eq!(agg[1].positive, 2);
    }

    #[test]
    fn lexical_rate_counts_non_neutral() {
        let records = vec![
            record("A", Polarity::Neutral),
            record("B", Polarity::Neutral),
            record("C", Polarity::Positive),
            record("D", Polarity::Negative),
        ];
        let rate = lexical_polarity_rate(&records).unwrap();
        assert_eq!(rate.rate, 0.5);
        assert_eq!(rate.numerator, 2);
        assert_eq!(rate.denominator, 4);

        let all_neutral = vec![record("A", Polarity::Neutral); 3];
        assert_eq!(lexical_polarity_rate(&all_neutral).unwrap().rate, 0.0);

        let all_polarized = vec![record("A", Polarity::Positive); 3];
        assert_eq!(lexical_polarity_rate(&all_polarized).unwrap().rate, 1.0);

        assert!(lexical_polarity_rate(&[]).is_none());
    }

    #[test]
    fn media_bias_rate_examples() {
        let mut labels = vec![MediaBiasLabel::Biased; 3];
        labels.extend(vec![MediaBiasLabel::Unbiased; 157]);
        let rate = media_bias_rate(&labels).unwrap();
        assert_eq!(rate.rate, 0.01875);
        assert_eq!(rate.numerator, 3);
        assert_eq!(rate.denominator, 160);

        let clean = vec![MediaBiasLabel::Unbiased; 25];
        assert_eq!(media_bias_rate(&clean).unwrap().rate, 0.0);

        assert!(media_bias_rate(&[]).is_none());
    }

    #[test]
    fn rate_stat_rejects_bad_fractions() {
        assert!(RateStat::new(1, 0).is_err());
        assert!(RateStat::new(5, 4).is_err());
    }

    #[test]
    fn summary_of_constant_rates_has_zero_spread() {
        let summary = media_bias_summary(&[0.04, 0.04, 0.04]).unwrap();
        assert_eq!(summary.mean, 0.04);
        assert_eq!(summary.stddev, 0.0);
        assert_eq!(summary.n_topics, 3);
        assert!(media_bias_summary(&[]).is_none());
    }

    #[test]
    fn profile_keeps_absent_rates_absent() {
        let profile = build_style_profile("m", "t", &[], &[]);
        assert!(profile.lexical_polarity_rate.is_none());
        assert!(profile.media_bias_rate.is_none());
        assert!(profile.entities.is_empty());
        let json = serde_json::to_value(&profile).unwrap();
        assert!(json["lexical_polarity_rate"].is_null());
    }

    fn polarity_strategy() -> impl Strategy<Value = Polarity> {
        prop_oneof![
            Just(Polarity::Positive),
            Just(Polarity::Negative),
            Just(Polarity::Neutral),
        ]
    }

    fn records_strategy() -> impl Strategy<Value = Vec<PolarityRecord>> {
        proptest::collection::vec(
            ("[a-d]", polarity_strategy())
                .prop_map(|(name, polarity)| record(&name, polarity)),
            0..40,
        )
    }

    proptest! {
        /// Per-entity tallies sum to that entity's record count, and the
        /// rate reconstructs its numerator exactly.
        #[test]
        fn tallies_and_rates_are_consistent(records in records_strategy()) {
            let agg = aggregate_entity_polarity(&records);
            for entity in &agg {
                let expected = records
                    .iter()
                    .filter(|r| r.canonical == entity.canonical)
                    .count() as u32;
                prop_assert_eq!(entity.total(), expected);
            }
            let total_tallied: u32 = agg.iter().map(EntityPolarity::total).sum();
            prop_assert_eq!(total_tallied, records.len() as u32);

            if let Some(rate) = lexical_polarity_rate(&records) {
                let reconstructed = rate.rate * f64::from(rate.denominator);
                prop_assert_eq!(reconstructed.round() as u32, rate.numerator);
                prop_assert!((reconstructed - f64::from(rate.numerator)).abs() < 1e-9);
                prop_assert!((0.0..=1.0).contains(&rate.rate));
            } else {
                prop_assert!(records.is_empty());
            }
        }

        /// The lexical polarity rate ignores record order and the
        /// positive/negative distinction.
        #[test]
        fn lexical_rate_invariances(records in records_strategy()) {
            prop_assume!(!records.is_empty());
            let base = lexical_polarity_rate(&records).unwrap();

            let mut reversed = records.clone();
            reversed.reverse();
            prop_assert_eq!(lexical_polarity_rate(&reversed).unwrap(), base);

            let relabeled: Vec<PolarityRecord> = records
                .iter()
                .map(|r| {
                    let mut flipped = r.clone();
                    flipped.polarity = match r.polarity {
                        Polarity::Positive => Polarity::Negative,
                        Polarity::Negative => Polarity::Positive,
                        Polarity::Neutral => Polarity::Neutral,
                    };
                    flipped
                })
                .collect();
            prop_assert_eq!(lexical_polarity_rate(&relabeled).unwrap(), base);
        }

        /// Stored summary statistics recompute exactly from the rate
        /// vector.
        #[test]
        fn summary_recomputes_from_rates(
            rates in proptest::collection::vec(0.0..=1.0f64, 1..20),
        ) {
            let summary = media_bias_summary(&rates).unwrap();
            let again = media_bias_summary(&rates).unwrap();
            prop_assert_eq!(summary, again);
            prop_assert_eq!(summary.n_topics as usize, rates.len());
            prop_assert!(summary.stddev >= 0.0);
            // independent mean recomputation in reverse order
            let mean_rev: f64 =
                rates.iter().rev().sum::<f64>() / rates.len() as f64;
            prop_assert!((summary.mean - mean_rev).abs() < 1e-12);
        }
    }
}
