//! Content-bias analysis: frame-dimension profiles and entity mention
//! statistics with cross-model normalization.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default size of the "frequently mentioned" entity list.
pub const DEFAULT_TOP_K: usize = 10;

/// The 15 cross-cutting frame dimensions used for headline classification.
/// Labels are fixed strings; classification backends must emit them
/// verbatim.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum Frame {
    #[serde(rename = "Economic")]
    Economic,
    #[serde(rename = "Capacity and resources")]
    CapacityAndResources,
    #[serde(rename = "Morality")]
    Morality,
    #[serde(rename = "Fairness and equality")]
    FairnessAndEquality,
    #[serde(rename = "Constitutionality and jurisprudence")]
    ConstitutionalityAndJurisprudence,
    #[serde(rename = "Policy prescription and evaluation")]
    PolicyPrescriptionAndEvaluation,
    #[serde(rename = "Law and order, crime and justice")]
    LawAndOrderCrimeAndJustice,
    #[serde(rename = "Security and defense")]
    SecurityAndDefense,
    #[serde(rename = "Health and safety")]
    HealthAndSafety,
    #[serde(rename = "Quality of life")]
    QualityOfLife,
    #[serde(rename = "Cultural identity")]
    CulturalIdentity,
    #[serde(rename = "Public opinion")]
    PublicOpinion,
    #[serde(rename = "Political")]
    Political,
    #[serde(rename = "External regulation and reputation")]
    ExternalRegulationAndReputation,
    #[serde(rename = "Other")]
    Other,
}

impl Frame {
    pub const ALL: [Frame; 15] = [
        Frame::Economic,
        Frame::CapacityAndResources,
        Frame::Morality,
        Frame::FairnessAndEquality,
        Frame::ConstitutionalityAndJurisprudence,
        Frame::PolicyPrescriptionAndEvaluation,
        Frame::LawAndOrderCrimeAndJustice,
        Frame::SecurityAndDefense,
        Frame::HealthAndSafety,
        Frame::QualityOfLife,
        Frame::CulturalIdentity,
        Frame::PublicOpinion,
        Frame::Political,
        Frame::ExternalRegulationAndReputation,
        Frame::Other,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Frame::Economic => "Economic",
            Frame::CapacityAndResources => "Capacity and resources",
            Frame::Morality => "Morality",
            Frame::FairnessAndEquality => "Fairness and equality",
            Frame::ConstitutionalityAndJurisprudence => {
                "Constitutionality and jurisprudence"
            }
            Frame::PolicyPrescriptionAndEvaluation => {
                "Policy prescription and evaluation"
            }
            Frame::LawAndOrderCrimeAndJustice => "Law and order, crime and justice",
            Frame::SecurityAndDefense => "Security and defense",
            Frame::HealthAndSafety => "Health and safety",
            Frame::QualityOfLife => "Quality of life",
            Frame::CulturalIdentity => "Cultural identity",
            Frame::PublicOpinion => "Public opinion",
            Frame::Political => "Political",
            Frame::ExternalRegulationAndReputation => {
                "External regulation and reputation"
            }
            Frame::Other => "Other",
        }
    }

    /// Exact-match lookup. Unknown labels are an integrity error: stored
    /// artifacts must never carry labels outside the closed list.
    pub fn from_label(label: &str) -> Result<Frame> {
        Frame::ALL
            .into_iter()
            .find(|f| f.label() == label)
            .ok_or_else(|| Error::Integrity(format!("unknown frame label '{label}'")))
    }
}

/// Per-frame headline fractions for one (model, topic). Multi-label:
/// ratios need not sum to 1. Counts are kept alongside so aggregate
/// identities can be checked in integer arithmetic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameProfile {
    #[serde(rename = "model")]
    pub model_id: String,
    #[serde(rename = "topic")]
    pub topic_id: String,
    pub n_headlines: u32,
    pub counts: BTreeMap<Frame, u32>,
    pub ratios: BTreeMap<Frame, f64>,
}

/// Builds the frame profile from one frame set per headline. A headline
/// with an empty set counts toward `Other`, so every headline contributes
/// to at least one frame.
pub fn build_frame_profile(
    model_id: &str,
    topic_id: &str,
    labels: &[BTreeSet<Frame>],
) -> Result<FrameProfile> {
    if labels.is_empty() {
        return Err(Error::DegenerateInput(
            "frame profile needs at least one headline".to_string(),
        ));
    }
    let n = labels.len() as u32;
    let mut counts: BTreeMap<Frame, u32> =
        Frame::ALL.into_iter().map(|f| (f, 0)).collect();
    for set in labels {
        if set.is_empty() {
            *counts.get_mut(&Frame::Other).expect("all frames present") += 1;
        } else {
            for frame in set {
                *counts.get_mut(frame).expect("all frames present") += 1;
            }
        }
    }
    let ratios = counts
        .iter()
        .map(|(f, c)| (*f, f64::from(*c) / f64::from(n)))
        .collect();
    Ok(FrameProfile {
        model_id: model_id.to_string(),
        topic_id: topic_id.to_string(),
        n_headlines: n,
        counts,
        ratios,
    })
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum EntityType {
    #[serde(rename = "PER")]
    Per,
    #[serde(rename = "ORG")]
    Org,
    #[serde(rename = "LOC")]
    Loc,
    #[serde(rename = "MISC")]
    Misc,
}

/// An entity occurrence as emitted by the tagger, before canonicalization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawMention {
    pub surface: String,
    pub entity_type: EntityType,
}

/// A mention with its canonical form resolved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalMention {
    pub canonical: String,
    pub surface: String,
    pub entity_type: EntityType,
}

/// Optional surface-merging table from configuration. Maps normalized
/// variants (for example "us") to a display canonical ("United States").
/// Without configured entries every normalized surface stands alone.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AliasTable {
    lookup: BTreeMap<String, String>,
}

impl AliasTable {
    pub fn empty() -> Self {
        AliasTable::default()
    }

    /// Builds from config entries of canonical → variant list. The
    /// canonical's own normalized form is included automatically.
    pub fn from_config(entries: &BTreeMap<String, Vec<String>>) -> Result<Self> {
        let mut lookup = BTreeMap::new();
        for (canonical, variants) in entries {
            if canonical.trim().is_empty() {
                return Err(Error::Config("alias canonical must be non-empty".to_string()));
            }
            let mut keys = vec![normalize_surface(canonical)];
            keys.extend(variants.iter().map(|v| normalize_surface(v)));
            for key in keys {
                if key.is_empty() {
                    continue;
                }
                if let Some(existing) = lookup.get(&key) {
                    if existing != canonical {
                        return Err(Error::Config(format!(
                            "alias variant '{key}' maps to both '{existing}' and '{canonical}'"
                        )));
                    }
                }
                lookup.insert(key, canonical.clone());
            }
        }
        Ok(AliasTable { lookup })
    }

    fn resolve(&self, normalized: &str) -> Option<&str> {
        self.lookup.get(normalized).map(String::as_str)
    }
}

const SURROUNDING_PUNCT: &[char] = &[
    '"', '\'', '\u{201c}', '\u{201d}', '\u{2018}', '\u{2019}', '(', ')', '[', ']', ',',
    ';', ':', '!', '?', '.', '«', '»',
];

/// Strips possessives and surrounding punctuation, collapses interior
/// whitespace, keeps the original case.
fn clean_surface(surface: &str) -> String {
    let mut text = surface.split_whitespace().collect::<Vec<_>>().join(" ");
    loop {
        let trimmed = text.trim_matches(SURROUNDING_PUNCT).trim();
        let mut next = trimmed.to_string();
        for suffix in ["'s", "\u{2019}s", "'S", "\u{2019}S"] {
            if let Some(stripped) = next.strip_suffix(suffix) {
                next = stripped.to_string();
            }
        }
        if next == text {
            return next;
        }
        text = next;
    }
}

/// The merge key for a surface: cleaned and case-folded.
pub fn normalize_surface(surface: &str) -> String {
    clean_surface(surface).to_lowercase()
}

/// Resolves each mention to a canonical form. Surfaces that normalize to
/// the same key merge; the displayed canonical is the configured alias name
/// when present, otherwise the most frequent cleaned variant (ties resolve
/// to the lexicographically smallest). Mentions whose surface normalizes to
/// nothing are dropped.
pub fn canonicalize_entities(
    mentions: &[RawMention],
    aliases: &AliasTable,
) -> Vec<CanonicalMention> {
    // key → cleaned-variant frequencies
    let mut variants: BTreeMap<String, BTreeMap<String, u32>> = BTreeMap::new();
    for mention in mentions {
        let key = normalize_surface(&mention.surface);
        if key.is_empty() {
            continue;
        }
        *variants
            .entry(key)
            .or_default()
            .entry(clean_surface(&mention.surface))
            .or_insert(0) += 1;
    }
    let display: BTreeMap<String, String> = variants
        .into_iter()
        .map(|(key, forms)| {
            let name = match aliases.resolve(&key) {
                Some(configured) => configured.to_string(),
                None => forms
                    .iter()
                    .max_by(|(a_form, a_n), (b_form, b_n)| {
                        a_n.cmp(b_n).then(b_form.cmp(a_form))
                    })
                    .map(|(form, _)| form.clone())
                    .expect("variant map is non-empty"),
            };
            (key, name)
        })
        .collect();
    mentions
        .iter()
        .filter_map(|mention| {
            let key = normalize_surface(&mention.surface);
            display.get(&key).map(|canonical| CanonicalMention {
                canonical: canonical.clone(),
                surface: mention.surface.clone(),
                entity_type: mention.entity_type,
            })
        })
        .collect()
}

/// Mention statistics for one canonical entity within a profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub canonical: String,
    pub surface_forms: BTreeSet<String>,
    pub entity_type: EntityType,
    pub count: u32,
    pub rate_per_1000: f64,
}

/// Entity mention statistics for one (model, topic).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityProfile {
    #[serde(rename = "model")]
    pub model_id: String,
    #[serde(rename = "topic")]
    pub topic_id: String,
    pub total_mentions: u32,
    pub entities: Vec<EntityRecord>,
}

impl EntityProfile {
    pub fn count_of(&self, canonical: &str) -> u32 {
        self.entities
            .iter()
            .find(|e| e.canonical == canonical)
            .map_or(0, |e| e.count)
    }
}

/// Aggregates canonical mentions into per-entity counts. The entity type
/// of a merged group is its most frequent member type (ties resolve to the
/// earlier enum variant). Entities are sorted by canonical form.
pub fn build_entity_profile(
    model_id: &str,
    topic_id: &str,
    mentions: &[CanonicalMention],
) -> EntityProfile {
    let mut counts: BTreeMap<&str, (BTreeSet<String>, BTreeMap<EntityType, u32>)> =
        BTreeMap::new();
    for mention in mentions {
        let entry = counts.entry(&mention.canonical).or_default();
        entry.0.insert(mention.surface.clone());
        *entry.1.entry(mention.entity_type).or_insert(0) += 1;
    }
    let total: u32 = counts
        .values()
        .map(|(_, types)| types.values().sum::<u32>())
        .sum();
    let entities = counts
        .into_iter()
        .map(|(canonical, (surface_forms, types))| {
            let count: u32 = types.values().sum();
            let entity_type = types
                .iter()
                .max_by(|(a_ty, a_n), (b_ty, b_n)| a_n.cmp(b_n).then(b_ty.cmp(a_ty)))
                .map(|(ty, _)| *ty)
                .expect("type map is non-empty");
            EntityRecord {
                canonical: canonical.to_string(),
                surface_forms,
                entity_type,
                count,
                rate_per_1000: f64::from(count) * 1000.0 / f64::from(total),
            }
        })
        .collect();
    EntityProfile {
        model_id: model_id.to_string(),
        topic_id: topic_id.to_string(),
        total_mentions: total,
        entities,
    }
}

/// The top k entities by count; equal counts order lexicographically by
/// canonical form. Returns fewer than k when the profile is smaller.
pub fn top_k_entities(profile: &EntityProfile, k: usize) -> Result<Vec<EntityRecord>> {
    if k == 0 {
        return Err(Error::Precondition("top-k needs k >= 1".to_string()));
    }
    let mut ranked: Vec<&EntityRecord> = profile.entities.iter().collect();
    ranked.sort_by(|a, b| b.count.cmp(&a.count).then(a.canonical.cmp(&b.canonical)));
    Ok(ranked.into_iter().take(k).cloned().collect())
}

/// One entity's mention counts compared across models. Ratios are
/// count / mean where the mean runs over every provided model, counting 0
/// for models that never mention the entity; the ratios therefore average
/// to exactly 1 in exact arithmetic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedEntityView {
    pub canonical: String,
    pub counts: BTreeMap<String, u32>,
    pub mean: f64,
    pub ratios: BTreeMap<String, f64>,
    /// The entity appears in exactly one model's top-k list.
    pub unique: bool,
}

/// Compares one entity's mention counts across all provided profiles.
pub fn cross_model_normalize(
    profiles: &[EntityProfile],
    canonical: &str,
    k: usize,
) -> Result<NormalizedEntityView> {
    if profiles.len() < 2 {
        return Err(Error::Precondition(
            "cross-model normalization needs at least two profiles".to_string(),
        ));
    }
    let counts: BTreeMap<String, u32> = profiles
        .iter()
        .map(|p| (p.model_id.clone(), p.count_of(canonical)))
        .collect();
    if counts.len() != profiles.len() {
        return Err(Error::Precondition(
            "profiles must have distinct model ids".to_string(),
        ));
    }
    let total: u32 = counts.values().sum();
    if total == 0 {
        return Err(Error::DegenerateInput(format!(
            "entity '{canonical}' is mentioned by no model; cannot normalize"
        )));
    }
    let n_models = counts.len() as u32;
    let mean = f64::from(total) / f64::from(n_models);
    let ratios = counts
        .iter()
        .map(|(model, count)| (model.clone(), f64::from(*count) / mean))
        .collect();
    let mut top_k_appearances = 0;
    for profile in profiles {
        let in_top_k = top_k_entities(profile, k)?
            .iter()
            .any(|e| e.canonical == canonical);
        if in_top_k {
            top_k_appearances += 1;
        }
    }
    Ok(NormalizedEntityView {
        canonical: canonical.to_string(),
        counts,
        mean,
        ratios,
        unique: top_k_appearances == 1,
    })
}
