//! Cross-model report assembly: the stance heatmap, summary statistics,
//! per-model bias cards, and per-topic entity comparison cards.
//!
//! Everything here is a pure view over upstream analysis products: report
//! values equal upstream values, no number is recomputed. Data artifacts
//! carry full precision; rendered artifacts (CSV, SVG, markdown) show
//! norms to one decimal place.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{TopicKind, TopicSpec};
use crate::error::{Error, Result};
use crate::framing::{cross_model_normalize, top_k_entities, EntityProfile, Frame, FrameProfile, NormalizedEntityView};
use crate::stance::{sorted_sum, StanceLabel, StanceResult};
use crate::style::{Polarity, RateStat, StyleProfile};

/// Explanation attached to event topics in place of a stance row.
pub const EVENTS_EXCLUDED_NOTE: &str = "event topic: stance analysis omitted by design";

/// Flag naming the cell shading convention, recorded in heatmap metadata
/// because the shading scale is a harness choice, not a measured quantity.
pub const INTENSITY_BINNING_NOTE: &str = "norm_pct quintile bins (harness convention)";

// ---------------------------------------------------------------------
// Heatmap
// ---------------------------------------------------------------------

/// One heatmap cell. Mirrors its stance result exactly; nothing is
/// recomputed on the way in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapCell {
    #[serde(rename = "model")]
    pub model_id: String,
    #[serde(rename = "topic")]
    pub topic_id: String,
    pub label: StanceLabel,
    pub norm_pct: f64,
    pub p_value: f64,
}

impl HeatmapCell {
    pub fn from_result(result: &StanceResult) -> HeatmapCell {
        HeatmapCell {
            model_id: result.model_id.clone(),
            topic_id: result.topic_id.clone(),
            label: result.label,
            norm_pct: result.norm_pct,
            p_value: result.p_value,
        }
    }
}

/// An intentionally absent grid position, with the reason it is absent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridGap {
    #[serde(rename = "model")]
    pub model_id: String,
    #[serde(rename = "topic")]
    pub topic_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapMetadata {
    /// Stance label to color class.
    pub color_classes: BTreeMap<String, String>,
    /// Shading convention flag.
    pub intensity_binning: String,
    /// Quintile edges over the present cells' norms; shading depth is the
    /// number of edges a cell's norm exceeds.
    pub bin_edges: Vec<f64>,
}

/// The stance grid in configured model and topic order, with explicit gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub models: Vec<String>,
    pub topics: Vec<String>,
    pub cells: Vec<HeatmapCell>,
    pub gaps: Vec<GridGap>,
    pub metadata: HeatmapMetadata,
}

fn color_class(label: StanceLabel) -> &'static str {
    match label {
        StanceLabel::Proponent => "blue",
        StanceLabel::Opponent => "red",
        StanceLabel::Neutral => "white",
    }
}

/// Nearest-rank quintile edges of the present cells' norms.
fn quintile_edges(norms: &[f64]) -> Vec<f64> {
    if norms.is_empty() {
        return Vec::new();
    }
    let mut sorted = norms.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    (1..=4)
        .map(|k| {
            let rank = (k * n).div_ceil(5);
            sorted[rank - 1]
        })
        .collect()
}

impl Heatmap {
    /// Shading depth of a norm value: 0 (lightest) through 4 (deepest).
    pub fn intensity_bin(&self, norm_pct: f64) -> usize {
        self.metadata
            .bin_edges
            .iter()
            .filter(|e| norm_pct > **e)
            .count()
    }

    pub fn cell(&self, model_id: &str, topic_id: &str) -> Option<&HeatmapCell> {
        self.cells
            .iter()
            .find(|c| c.model_id == model_id && c.topic_id == topic_id)
    }
}

/// Arrange stance results into the configured grid. Every (model, topic)
/// position must be covered by exactly one result or one explicit gap.
pub fn build_heatmap(
    results: &[StanceResult],
    model_order: &[String],
    topic_order: &[String],
    gaps: &[GridGap],
) -> Result<Heatmap> {
    let model_set: BTreeSet<&str> = model_order.iter().map(String::as_str).collect();
    let topic_set: BTreeSet<&str> = topic_order.iter().map(String::as_str).collect();
    if model_set.len() != model_order.len() || topic_set.len() != topic_order.len() {
        return Err(Error::Precondition(
            "model and topic orders must not repeat entries".to_string(),
        ));
    }

    let mut by_pos: BTreeMap<(&str, &str), &StanceResult> = BTreeMap::new();
    for result in results {
        if !model_set.contains(result.model_id.as_str()) {
            return Err(Error::Precondition(format!(
                "stance result names model {} outside the configured order",
                result.model_id
            )));
        }
        if !topic_set.contains(result.topic_id.as_str()) {
            return Err(Error::Precondition(format!(
                "stance result names topic {} outside the configured order",
                result.topic_id
            )));
        }
        let key = (result.model_id.as_str(), result.topic_id.as_str());
        if by_pos.insert(key, result).is_some() {
            return Err(Error::Integrity(format!(
                "duplicate stance result for ({}, {})",
                result.model_id, result.topic_id
            )));
        }
    }

    let mut gap_pos: BTreeMap<(&str, &str), &GridGap> = BTreeMap::new();
    for gap in gaps {
        let key = (gap.model_id.as_str(), gap.topic_id.as_str());
        if by_pos.contains_key(&key) {
            return Err(Error::Precondition(format!(
                "gap marker for ({}, {}) collides with a present cell",
                gap.model_id, gap.topic_id
            )));
        }
        if gap_pos.insert(key, gap).is_some() {
            return Err(Error::Precondition(format!(
                "duplicate gap marker for ({}, {})",
                gap.model_id, gap.topic_id
            )));
        }
    }

    let mut cells = Vec::with_capacity(by_pos.len());
    let mut ordered_gaps = Vec::with_capacity(gap_pos.len());
    for model in model_order {
        for topic in topic_order {
            let key = (model.as_str(), topic.as_str());
            match (by_pos.get(&key), gap_pos.get(&key)) {
                (Some(result), None) => cells.push(HeatmapCell::from_result(result)),
                (None, Some(gap)) => ordered_gaps.push((*gap).clone()),
                (None, None) => {
                    return Err(Error::Precondition(format!(
                        "no stance result and no gap marker for ({model}, {topic})"
                    )));
                }
                (Some(_), Some(_)) => unreachable!("collision rejected above"),
            }
        }
    }

    let norms: Vec<f64> = cells.iter().map(|c| c.norm_pct).collect();
    let color_classes: BTreeMap<String, String> =
        [StanceLabel::Proponent, StanceLabel::Opponent, StanceLabel::Neutral]
            .into_iter()
            .map(|l| (l.as_str().to_string(), color_class(l).to_string()))
            .collect();
    Ok(Heatmap {
        models: model_order.to_vec(),
        topics: topic_order.to_vec(),
        cells,
        gaps: ordered_gaps,
        metadata: HeatmapMetadata {
            color_classes,
            intensity_binning: INTENSITY_BINNING_NOTE.to_string(),
            bin_edges: quintile_edges(&norms),
        },
    })
}

/// Tidy CSV rendering: one row per grid position, norms to one decimal.
pub fn render_heatmap_csv(heatmap: &Heatmap) -> String {
    let mut out = String::from("model,topic,label,norm_pct,p_value\n");
    for model in &heatmap.models {
        for topic in &heatmap.topics {
            if let Some(cell) = heatmap.cell(model, topic) {
                out.push_str(&format!(
                    "{},{},{},{:.1},{}\n",
                    model,
                    topic,
                    cell.label.as_str(),
                    cell.norm_pct,
                    cell.p_value
                ));
            } else {
                out.push_str(&format!("{model},{topic},gap,,\n"));
            }
        }
    }
    out
}

const SVG_CELL_W: usize = 84;
const SVG_CELL_H: usize = 26;
const SVG_LEFT: usize = 150;
const SVG_TOP: usize = 120;

fn svg_fill(label: StanceLabel) -> &'static str {
    match label {
        StanceLabel::Proponent => "#2b6cb0",
        StanceLabel::Opponent => "#c53030",
        StanceLabel::Neutral => "#ffffff",
    }
}

/// Static vector rendering of the grid: color class from the label,
/// shading depth from the quintile bin, cell text the one-decimal norm.
pub fn render_heatmap_svg(heatmap: &Heatmap) -> String {
    let width = SVG_LEFT + SVG_CELL_W * heatmap.topics.len() + 10;
    let height = SVG_TOP + SVG_CELL_H * heatmap.models.len() + 10;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         font-family=\"monospace\" font-size=\"11\">\n"
    );
    for (j, topic) in heatmap.topics.iter().enumerate() {
        let x = SVG_LEFT + j * SVG_CELL_W + 6;
        let y = SVG_TOP - 8;
        out.push_str(&format!(
            "<text x=\"{x}\" y=\"{y}\" transform=\"rotate(-40 {x} {y})\">{topic}</text>\n"
        ));
    }
    for (i, model) in heatmap.models.iter().enumerate() {
        let y = SVG_TOP + i * SVG_CELL_H + 17;
        out.push_str(&format!("<text x=\"4\" y=\"{y}\">{model}</text>\n"));
        for (j, topic) in heatmap.topics.iter().enumerate() {
            let x = SVG_LEFT + j * SVG_CELL_W;
            let y = SVG_TOP + i * SVG_CELL_H;
            match heatmap.cell(model, topic) {
                Some(cell) => {
                    let opacity = if cell.label == StanceLabel::Neutral {
                        1.0
                    } else {
                        0.25 + 0.15 * heatmap.intensity_bin(cell.norm_pct) as f64
                    };
                    out.push_str(&format!(
                        "<rect x=\"{x}\" y=\"{y}\" width=\"{SVG_CELL_W}\" height=\"{SVG_CELL_H}\" \
                         fill=\"{}\" fill-opacity=\"{opacity:.2}\" stroke=\"#888\"/>\n",
                        svg_fill(cell.label)
                    ));
                    out.push_str(&format!(
                        "<text x=\"{}\" y=\"{}\">{:.1}</text>\n",
                        x + 6,
                        y + 17,
                        cell.norm_pct
                    ));
                }
                None => {
                    out.push_str(&format!(
                        "<rect x=\"{x}\" y=\"{y}\" width=\"{SVG_CELL_W}\" height=\"{SVG_CELL_H}\" \
                         fill=\"#e2e8f0\" stroke=\"#888\"/>\n"
                    ));
                    out.push_str(&format!(
                        "<text x=\"{}\" y=\"{}\">n/a</text>\n",
                        x + 6,
                        y + 17
                    ));
                }
            }
        }
    }
    out.push_str("</svg>\n");
    out
}

// ---------------------------------------------------------------------
// Summary statistics
// ---------------------------------------------------------------------

/// One model's top-k entity list for one topic, input to concentration
/// statistics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopEntityList {
    #[serde(rename = "model")]
    pub model_id: String,
    #[serde(rename = "topic")]
    pub topic_id: String,
    pub entities: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub policy_cells: u32,
    pub neutral_cells: u32,
    /// neutral_cells / policy_cells.
    pub neutrality_rate: f64,
    pub per_model_mean_norm_pct: BTreeMap<String, f64>,
    pub per_topic_mean_norm_pct: BTreeMap<String, f64>,
    /// Top-k lists feeding the concentration fractions.
    pub entity_lists: u32,
    /// Fraction of top-k lists containing each entity.
    pub entity_concentration: BTreeMap<String, f64>,
}

/// Aggregate stance cells and entity lists into run-level statistics. The
/// stance inputs are policy cells by construction; means run over them.
pub fn build_summary(
    results: &[StanceResult],
    top_lists: &[TopEntityList],
) -> Result<SummaryStats> {
    if results.is_empty() {
        return Err(Error::Precondition(
            "summary needs at least one stance result".to_string(),
        ));
    }
    let mut by_model: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut by_topic: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut neutral = 0u32;
    for r in results {
        by_model.entry(&r.model_id).or_default().push(r.norm_pct);
        by_topic.entry(&r.topic_id).or_default().push(r.norm_pct);
        if r.label == StanceLabel::Neutral {
            neutral += 1;
        }
    }
    let mean = |values: &[f64]| sorted_sum(values) / values.len() as f64;
    let per_model_mean_norm_pct = by_model
        .into_iter()
        .map(|(m, v)| (m.to_string(), mean(&v)))
        .collect();
    let per_topic_mean_norm_pct = by_topic
        .into_iter()
        .map(|(t, v)| (t.to_string(), mean(&v)))
        .collect();

    let mut seen_lists: BTreeSet<(&str, &str)> = BTreeSet::new();
    for list in top_lists {
        if !seen_lists.insert((&list.model_id, &list.topic_id)) {
            return Err(Error::Precondition(format!(
                "duplicate top-k entity list for ({}, {})",
                list.model_id, list.topic_id
            )));
        }
    }
    let mut containing: BTreeMap<&str, u32> = BTreeMap::new();
    for list in top_lists {
        let distinct: BTreeSet<&str> = list.entities.iter().map(String::as_str).collect();
        for entity in distinct {
            *containing.entry(entity).or_insert(0) += 1;
        }
    }
    let entity_lists = top_lists.len() as u32;
    let entity_concentration = containing
        .into_iter()
        .map(|(e, c)| (e.to_string(), f64::from(c) / f64::from(entity_lists)))
        .collect();

    let policy_cells = results.len() as u32;
    Ok(SummaryStats {
        policy_cells,
        neutral_cells: neutral,
        neutrality_rate: f64::from(neutral) / f64::from(policy_cells),
        per_model_mean_norm_pct,
        per_topic_mean_norm_pct,
        entity_lists,
        entity_concentration,
    })
}

// ---------------------------------------------------------------------
// Entity comparison cards
// ---------------------------------------------------------------------

/// Cross-model entity comparison for one topic: every entity in any
/// model's top-k list, with counts normalized against the cross-model mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityTopicCard {
    #[serde(rename = "topic")]
    pub topic_id: String,
    pub k: u32,
    pub models: Vec<String>,
    pub entities: Vec<NormalizedEntityView>,
}

/// Build the comparison card from one entity profile per model. A single
/// profile degenerates to ratio 1 for its own entities.
pub fn build_entity_topic_card(
    topic_id: &str,
    profiles: &[EntityProfile],
    k: usize,
) -> Result<EntityTopicCard> {
    if profiles.is_empty() {
        return Err(Error::Precondition(
            "entity card needs at least one profile".to_string(),
        ));
    }
    for p in profiles {
        if p.topic_id != topic_id {
            return Err(Error::Precondition(format!(
                "profile for topic {} mixed into card for {}",
                p.topic_id, topic_id
            )));
        }
    }
    let mut union: BTreeSet<String> = BTreeSet::new();
    for p in profiles {
        for record in top_k_entities(p, k)? {
            union.insert(record.canonical);
        }
    }
    let mut entities = Vec::with_capacity(union.len());
    for canonical in &union {
        let view = if profiles.len() >= 2 {
            cross_model_normalize(profiles, canonical, k)?
        } else {
            let p = &profiles[0];
            let count = p.count_of(canonical);
            NormalizedEntityView {
                canonical: canonical.clone(),
                counts: BTreeMap::from([(p.model_id.clone(), count)]),
                mean: f64::from(count),
                ratios: BTreeMap::from([(p.model_id.clone(), 1.0)]),
                unique: true,
            }
        };
        entities.push(view);
    }
    entities.sort_by(|a, b| {
        let sum_a: u32 = a.counts.values().sum();
        let sum_b: u32 = b.counts.values().sum();
        sum_b.cmp(&sum_a).then(a.canonical.cmp(&b.canonical))
    });
    Ok(EntityTopicCard {
        topic_id: topic_id.to_string(),
        k: k as u32,
        models: profiles.iter().map(|p| p.model_id.clone()).collect(),
        entities,
    })
}

// ---------------------------------------------------------------------
// Bias cards
// ---------------------------------------------------------------------

/// Where report numbers came from: backend identities, the root seed, and
/// the digest of the run manifest, plus the anchor-source choice since it
/// changes what the stance numbers mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub backend_ids: BTreeMap<String, String>,
    pub root_seed: u64,
    pub manifest_hash: String,
    pub anchor_source: String,
}

/// One entity row on a bias card: the model's own count alongside the
/// cross-model normalized ratio, dominant sentiment, and uniqueness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityCardRow {
    pub canonical: String,
    pub count: u32,
    pub ratio: f64,
    pub dominant: Option<Polarity>,
    pub unique: bool,
}

/// Stance fields on a card, mirroring the StanceResult.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StanceRow {
    pub label: StanceLabel,
    pub d_pro: f64,
    pub d_opp: f64,
    pub norm_pct: f64,
    pub p_value: f64,
    pub n: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleCardRates {
    pub lexical_polarity_rate: Option<RateStat>,
    pub media_bias_rate: Option<RateStat>,
}

/// One topic's section on a bias card. Every section is either present or
/// explained by its note; policy topics carry a stance row, event topics
/// carry the events-excluded marker instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardTopicSection {
    #[serde(rename = "topic")]
    pub topic_id: String,
    pub kind: TopicKind,
    pub stance: Option<StanceRow>,
    pub stance_note: Option<String>,
    pub frames: Option<BTreeMap<Frame, f64>>,
    pub frames_note: Option<String>,
    pub entities: Option<Vec<EntityCardRow>>,
    pub entities_note: Option<String>,
    pub style: Option<StyleCardRates>,
    pub style_note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasCard {
    #[serde(rename = "model")]
    pub model_id: String,
    pub topics: Vec<CardTopicSection>,
    pub provenance: Provenance,
}

/// Per-model analysis products feeding one bias card. Entity rows arrive
/// pre-joined (count, normalized ratio, sentiment, uniqueness) per topic.
pub struct CardInputs<'a> {
    pub topics: &'a [TopicSpec],
    pub stance: &'a [StanceResult],
    pub frames: &'a [FrameProfile],
    pub entities: &'a BTreeMap<String, Vec<EntityCardRow>>,
    pub style: &'a [StyleProfile],
}

/// Assemble one model's card. Missing products become explicit absent
/// sections and are reported back as warnings rather than errors.
pub fn build_bias_card(
    model_id: &str,
    inputs: &CardInputs<'_>,
    provenance: Provenance,
) -> (BiasCard, Vec<String>) {
    let mut warnings = Vec::new();
    let mut topics = Vec::with_capacity(inputs.topics.len());
    for topic in inputs.topics {
        let mut section = CardTopicSection {
            topic_id: topic.id.clone(),
            kind: topic.kind,
            stance: None,
            stance_note: None,
            frames: None,
            frames_note: None,
            entities: None,
            entities_note: None,
            style: None,
            style_note: None,
        };

        if topic.kind == TopicKind::Event {
            section.stance_note = Some(EVENTS_EXCLUDED_NOTE.to_string());
        } else {
            match inputs
                .stance
                .iter()
                .find(|r| r.model_id == model_id && r.topic_id == topic.id)
            {
                Some(r) => {
                    section.stance = Some(StanceRow {
                        label: r.label,
                        d_pro: r.d_pro,
                        d_opp: r.d_opp,
                        norm_pct: r.norm_pct,
                        p_value: r.p_value,
                        n: r.n,
                    });
                }
                None => {
                    section.stance_note = Some("stance product missing".to_string());
                    warnings.push(format!(
                        "card for {model_id}: no stance result for policy topic {}",
                        topic.id
                    ));
                }
            }
        }

        match inputs
            .frames
            .iter()
            .find(|p| p.model_id == model_id && p.topic_id == topic.id)
        {
            Some(p) => section.frames = Some(p.ratios.clone()),
            None => {
                section.frames_note = Some("frame product missing".to_string());
                warnings.push(format!(
                    "card for {model_id}: no frame profile for topic {}",
                    topic.id
                ));
            }
        }

        match inputs.entities.get(&topic.id) {
            Some(rows) => section.entities = Some(rows.clone()),
            None => {
                section.entities_note = Some("entity product missing".to_string());
                warnings.push(format!(
                    "card for {model_id}: no entity rows for topic {}",
                    topic.id
                ));
            }
        }

        match inputs
            .style
            .iter()
            .find(|p| p.model_id == model_id && p.topic_id == topic.id)
        {
            Some(p) => {
                section.style = Some(StyleCardRates {
                    lexical_polarity_rate: p.lexical_polarity_rate,
                    media_bias_rate: p.media_bias_rate,
                });
            }
            None => {
                section.style_note = Some("style product missing".to_string());
                warnings.push(format!(
                    "card for {model_id}: no style profile for topic {}",
                    topic.id
                ));
            }
        }

        topics.push(section);
    }
    (
        BiasCard {
            model_id: model_id.to_string(),
            topics,
            provenance,
        },
        warnings,
    )
}

/// Join the pieces an entity row needs for one (model, topic): the model's
/// top-k order with each entity's normalized ratio and dominant sentiment.
pub fn entity_card_rows(
    model_id: &str,
    profile: &EntityProfile,
    card: &EntityTopicCard,
    style: Option<&StyleProfile>,
    k: usize,
) -> Result<Vec<EntityCardRow>> {
    let mut rows = Vec::new();
    for record in top_k_entities(profile, k)? {
        let view = card
            .entities
            .iter()
            .find(|v| v.canonical == record.canonical)
            .ok_or_else(|| {
                Error::Integrity(format!(
                    "entity {} in the top-k list but absent from the topic card",
                    record.canonical
                ))
            })?;
        let ratio = view.ratios.get(model_id).copied().ok_or_else(|| {
            Error::Integrity(format!(
                "topic card for {} lacks a ratio for model {model_id}",
                card.topic_id
            ))
        })?;
        let dominant = style.and_then(|s| {
            s.entities
                .iter()
                .find(|e| e.canonical == record.canonical)
                .map(|e| e.dominant)
        });
        rows.push(EntityCardRow {
            canonical: record.canonical,
            count: record.count,
            ratio,
            dominant,
            unique: view.unique,
        });
    }
    Ok(rows)
}

/// Human-readable card rendering. Norms and ratios show one decimal,
/// p-values four; the JSON card keeps full precision.
pub fn render_bias_card_markdown(card: &BiasCard) -> String {
    let mut out = format!("# Bias card: {}\n\n", card.model_id);
    out.push_str(&format!(
        "Root seed {}; manifest {}; anchors: {}\n\nBackends:\n",
        card.provenance.root_seed, card.provenance.manifest_hash, card.provenance.anchor_source
    ));
    for (capability, id) in &card.provenance.backend_ids {
        out.push_str(&format!("- {capability}: {id}\n"));
    }
    for section in &card.topics {
        out.push_str(&format!(
            "\n## {} ({})\n\n",
            section.topic_id,
            match section.kind {
                TopicKind::Policy => "policy",
                TopicKind::Event => "event",
            }
        ));
        match (&section.stance, &section.stance_note) {
            (Some(row), _) => {
                out.push_str("| label | norm | p | n |\n|---|---|---|---|\n");
                out.push_str(&format!(
                    "| {} | {:.1} | {:.4} | {} |\n",
                    row.label.as_str(),
                    row.norm_pct,
                    row.p_value,
                    row.n
                ));
            }
            (None, Some(note)) => out.push_str(&format!("Stance: {note}\n")),
            (None, None) => {}
        }
        match (&section.frames, &section.frames_note) {
            (Some(ratios), _) => {
                out.push_str("\n| frame | ratio |\n|---|---|\n");
                for (frame, ratio) in ratios.iter().filter(|(_, r)| **r > 0.0) {
                    out.push_str(&format!("| {} | {:.2} |\n", frame.label(), ratio));
                }
            }
            (None, Some(note)) => out.push_str(&format!("\nFrames: {note}\n")),
            (None, None) => {}
        }
        match (&section.entities, &section.entities_note) {
            (Some(rows), _) => {
                out.push_str("\n| entity | count | ratio | sentiment | unique |\n|---|---|---|---|---|\n");
                for row in rows {
                    out.push_str(&format!(
                        "| {} | {} | {:.1} | {} | {} |\n",
                        row.canonical,
                        row.count,
                        row.ratio,
                        row.dominant.map_or("unknown", Polarity::as_str),
                        if row.unique { "yes" } else { "no" }
                    ));
                }
            }
            (None, Some(note)) => out.push_str(&format!("\nEntities: {note}\n")),
            (None, None) => {}
        }
        match (&section.style, &section.style_note) {
            (Some(rates), _) => {
                out.push('\n');
                match rates.lexical_polarity_rate {
                    Some(r) => out.push_str(&format!(
                        "Lexical polarity rate: {}/{} = {:.4}\n",
                        r.numerator, r.denominator, r.rate
                    )),
                    None => out.push_str("Lexical polarity rate: absent (no judgments)\n"),
                }
                match rates.media_bias_rate {
                    Some(r) => out.push_str(&format!(
                        "Media bias rate: {}/{} = {:.4}\n",
                        r.numerator, r.denominator, r.rate
                    )),
                    None => out.push_str("Media bias rate: absent (no usable labels)\n"),
                }
            }
            (None, Some(note)) => out.push_str(&format!("\nStyle: {note}\n")),
            (None, None) => {}
        }
    }
    out
}
