//! The stage implementations.
//!
//! Each stage reads the previous stage's files, does its work (fanning out
//! across (model, topic) units on the execution policy), writes its own
//! files, and returns the artifact digests for the manifest. Workers return
//! results in unit order, so artifact bytes do not depend on thread count.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{
    self, Condition, GenerationRecord, Headline, PromptSpec, SamplingParams, TopicSpec,
};
use crate::error::{Error, Result};
use crate::exec;
use crate::framing::{
    build_entity_profile, build_frame_profile, canonicalize_entities, normalize_surface,
    top_k_entities, AliasTable, CanonicalMention, EntityProfile, EntityType, Frame,
    FrameProfile, RawMention,
};
use crate::gateway::Gateway;
use crate::report::{
    build_bias_card, build_entity_topic_card, build_heatmap, build_summary, entity_card_rows,
    render_bias_card_markdown, render_heatmap_csv, render_heatmap_svg, CardInputs,
    EntityCardRow, GridGap, Provenance, TopEntityList,
};
use crate::seed::substream_seed;
use crate::stance::{estimate_stance, AnchorSet, EmbeddingVector, StanceResult};
use crate::style::{build_style_profile, MediaBiasLabel, PolarityRecord, StyleProfile};

use super::io;
use super::{ArtifactPaths, ModelSpec, Plan, RunConfig, RunManifest};

/// Each generation request asks for this many headlines.
const HEADLINES_PER_REQUEST: u32 = 10;

/// Texts per embedding request.
const EMBED_BATCH: usize = 64;

pub(crate) struct Ctx<'a> {
    pub config: &'a RunConfig,
    pub plan: &'a Plan,
    pub aliases: &'a AliasTable,
    pub gateway: &'a Gateway,
    pub paths: ArtifactPaths,
}

pub(crate) struct StageOutput {
    pub artifacts: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

pub(crate) fn execute(stage: &str, ctx: &Ctx<'_>, manifest: &RunManifest) -> Result<StageOutput> {
    match stage {
        "generate" => generate(ctx),
        "headlines" => headlines(ctx),
        "embed" => embed(ctx),
        "stance" => stance(ctx),
        "frames" => frames(ctx),
        "style" => style(ctx),
        "report" => report(ctx, manifest),
        other => Err(Error::Precondition(format!("unknown stage '{other}'"))),
    }
}

// ---------------------------------------------------------------------
// Row types for intermediate JSONL artifacts
// ---------------------------------------------------------------------

/// One embedded headline; `(request_index, position)` matches the headline
/// file row it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRow {
    pub request_index: u32,
    pub position: u32,
    pub embedding: Vec<f64>,
}

/// Frame assignment for one headline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRow {
    pub request_index: u32,
    pub position: u32,
    pub frames: std::collections::BTreeSet<Frame>,
}

/// One canonicalized entity mention within a headline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionRow {
    pub request_index: u32,
    pub position: u32,
    pub canonical: String,
    pub surface: String,
    pub entity_type: EntityType,
    pub start: usize,
    pub end: usize,
}

/// Media-bias judgment for one headline; `excluded` carries the reason when
/// the classifier reply was unusable and the headline left the denominator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediaRow {
    pub request_index: u32,
    pub position: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub label: Option<MediaBiasLabel>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub excluded: Option<String>,
}

// ---------------------------------------------------------------------
// Work units
// ---------------------------------------------------------------------

/// One generation corpus: a (model, topic, condition) triple.
struct GenUnit<'p> {
    model: &'p ModelSpec,
    topic: &'p TopicSpec,
    condition: Condition,
}

fn generation_units<'p>(plan: &'p Plan) -> Vec<GenUnit<'p>> {
    let mut units = Vec::new();
    for model in &plan.models {
        for topic in &plan.topics {
            units.push(GenUnit {
                model,
                topic,
                condition: Condition::Neutral,
            });
            if topic.is_policy() && plan.provides_anchors(&model.id) {
                for condition in [Condition::Pro, Condition::Opp] {
                    units.push(GenUnit {
                        model,
                        topic,
                        condition,
                    });
                }
            }
        }
    }
    units
}

/// One analysis unit: a (model, topic) pair over the task corpus.
struct CellUnit<'p> {
    model: &'p ModelSpec,
    topic: &'p TopicSpec,
}

fn analysis_units<'p>(plan: &'p Plan) -> Vec<CellUnit<'p>> {
    let mut units = Vec::new();
    for model in &plan.models {
        for topic in &plan.topics {
            units.push(CellUnit { model, topic });
        }
    }
    units
}

fn prompt_for(topic: &TopicSpec, condition: Condition) -> Result<PromptSpec> {
    match condition {
        Condition::Neutral => Ok(corpus::render_task_prompt(topic)),
        side => corpus::render_anchor_prompt(topic, side),
    }
}

fn record_artifact(
    artifacts: &mut BTreeMap<String, String>,
    paths: &ArtifactPaths,
    path: &Path,
) -> Result<()> {
    artifacts.insert(paths.rel(path), io::sha256_file(path)?);
    Ok(())
}

// ---------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------

/// Issues generation requests until each corpus has `samples_per_topic`
/// parseable headlines or the request budget (twice the nominal count) is
/// exhausted; shortfalls become warnings, not errors.
fn generate(ctx: &Ctx<'_>) -> Result<StageOutput> {
    let units = generation_units(ctx.plan);
    let results = exec::map_collect(&units, |unit| generate_unit(ctx, unit));
    let mut artifacts = BTreeMap::new();
    let mut warnings = Vec::new();
    for result in results {
        let (path, warning) = result?;
        record_artifact(&mut artifacts, &ctx.paths, &path)?;
        warnings.extend(warning);
    }
    Ok(StageOutput { artifacts, warnings })
}

fn generate_unit(ctx: &Ctx<'_>, unit: &GenUnit<'_>) -> Result<(PathBuf, Option<String>)> {
    let prompt = prompt_for(unit.topic, unit.condition)?;
    let target = ctx.config.samples_per_topic;
    let cap = target.div_ceil(HEADLINES_PER_REQUEST) * 2;
    let mut records = Vec::new();
    let mut parsed = 0u32;
    for request_index in 0..cap {
        if parsed >= target {
            break;
        }
        let seed = substream_seed(
            ctx.config.seed,
            &[
                "generate",
                &unit.model.id,
                &unit.topic.id,
                unit.condition.as_str(),
                &request_index.to_string(),
            ],
        );
        let params = SamplingParams {
            seed,
            ..SamplingParams::default()
        };
        let raw_text = ctx.gateway.generate(
            &unit.model.backend,
            &unit.model.id,
            &prompt.rendered,
            &params,
        )?;
        let count = corpus::parse_headlines(&raw_text, &prompt.separator_tag)?.len() as u32;
        records.push(GenerationRecord {
            model_id: unit.model.id.clone(),
            topic_id: unit.topic.id.clone(),
            condition: unit.condition,
            request_index,
            raw_text,
            sampling_params: params,
            parse_warning: count == 0,
        });
        parsed += count;
    }
    let path = ctx
        .paths
        .generations(&unit.model.id, &unit.topic.id, unit.condition);
    io::write_jsonl(&path, &records)?;
    let warning = (parsed < target).then(|| {
        format!(
            "{}/{}/{}: parsed {parsed} of {target} headlines after {} requests",
            unit.model.id,
            unit.topic.id,
            unit.condition.as_str(),
            records.len()
        )
    });
    Ok((path, warning))
}

// ---------------------------------------------------------------------
// headlines
// ---------------------------------------------------------------------

/// Parses every raw generation into clean headline rows, truncated to the
/// configured corpus size so every cell compares like with like.
fn headlines(ctx: &Ctx<'_>) -> Result<StageOutput> {
    let units = generation_units(ctx.plan);
    let results = exec::map_collect(&units, |unit| headlines_unit(ctx, unit));
    let mut artifacts = BTreeMap::new();
    for result in results {
        let path = result?;
        record_artifact(&mut artifacts, &ctx.paths, &path)?;
    }
    Ok(StageOutput {
        artifacts,
        warnings: Vec::new(),
    })
}

fn headlines_unit(ctx: &Ctx<'_>, unit: &GenUnit<'_>) -> Result<PathBuf> {
    let prompt = prompt_for(unit.topic, unit.condition)?;
    let source = ctx
        .paths
        .generations(&unit.model.id, &unit.topic.id, unit.condition);
    let records: Vec<GenerationRecord> = io::read_jsonl(&source)?;
    let mut rows: Vec<Headline> = Vec::new();
    for record in &records {
        rows.extend(corpus::headlines_for_record(record, &prompt.separator_tag)?);
    }
    rows.truncate(ctx.config.samples_per_topic as usize);
    let path = ctx
        .paths
        .headlines(&unit.model.id, &unit.topic.id, unit.condition);
    io::write_jsonl(&path, &rows)?;
    Ok(path)
}

// ---------------------------------------------------------------------
// embed
// ---------------------------------------------------------------------

fn embed(ctx: &Ctx<'_>) -> Result<StageOutput> {
    let units = generation_units(ctx.plan);
    let results = exec::map_collect(&units, |unit| embed_unit(ctx, unit));
    let mut artifacts = BTreeMap::new();
    for result in results {
        let path = result?;
        record_artifact(&mut artifacts, &ctx.paths, &path)?;
    }
    Ok(StageOutput {
        artifacts,
        warnings: Vec::new(),
    })
}

fn embed_unit(ctx: &Ctx<'_>, unit: &GenUnit<'_>) -> Result<PathBuf> {
    let source = ctx
        .paths
        .headlines(&unit.model.id, &unit.topic.id, unit.condition);
    let headlines: Vec<Headline> = io::read_jsonl(&source)?;
    let mut rows = Vec::with_capacity(headlines.len());
    for chunk in headlines.chunks(EMBED_BATCH) {
        let texts: Vec<String> = chunk.iter().map(|h| h.text.clone()).collect();
        let vectors = ctx.gateway.embed(&texts)?;
        for (headline, vector) in chunk.iter().zip(vectors) {
            rows.push(EmbeddingRow {
                request_index: headline.request_index,
                position: headline.position,
                embedding: vector.as_slice().to_vec(),
            });
        }
    }
    let path = ctx
        .paths
        .embeddings(&unit.model.id, &unit.topic.id, unit.condition);
    io::write_jsonl(&path, &rows)?;
    Ok(path)
}

// ---------------------------------------------------------------------
// stance
// ---------------------------------------------------------------------

enum CellOutcome {
    Result(Box<StanceResult>),
    Gap(GridGap),
}

fn read_embeddings(
    ctx: &Ctx<'_>,
    model: &str,
    topic: &str,
    condition: Condition,
) -> Result<Vec<EmbeddingVector>> {
    let rows: Vec<EmbeddingRow> = io::read_jsonl(&ctx.paths.embeddings(model, topic, condition))?;
    rows.into_iter()
        .map(|row| EmbeddingVector::new(row.embedding))
        .collect()
}

/// Scores every (model, policy topic) cell. Cells whose corpora are too
/// small to score become explicit grid gaps rather than failures, so one
/// misbehaving corpus cannot sink a whole run.
fn stance(ctx: &Ctx<'_>) -> Result<StageOutput> {
    let policy_topics = ctx.plan.policy_topics();
    let mut cells = Vec::new();
    for model in &ctx.plan.models {
        for topic in &policy_topics {
            cells.push(CellUnit { model, topic });
        }
    }
    let outcomes = exec::map_collect(&cells, |cell| stance_cell(ctx, cell));

    let mut results = Vec::new();
    let mut gaps = Vec::new();
    let mut warnings = Vec::new();
    for outcome in outcomes {
        match outcome? {
            CellOutcome::Result(result) => results.push(*result),
            CellOutcome::Gap(gap) => {
                warnings.push(format!(
                    "stance gap at ({}, {}): {}",
                    gap.model_id, gap.topic_id, gap.reason
                ));
                gaps.push(gap);
            }
        }
    }

    let results_path = ctx.paths.stance_results();
    let gaps_path = ctx.paths.stance_gaps();
    io::write_jsonl(&results_path, &results)?;
    io::write_jsonl(&gaps_path, &gaps)?;
    let mut artifacts = BTreeMap::new();
    record_artifact(&mut artifacts, &ctx.paths, &results_path)?;
    record_artifact(&mut artifacts, &ctx.paths, &gaps_path)?;
    Ok(StageOutput { artifacts, warnings })
}

fn stance_cell(ctx: &Ctx<'_>, cell: &CellUnit<'_>) -> Result<CellOutcome> {
    let model = &cell.model.id;
    let topic = &cell.topic.id;
    let gap = |reason: String| {
        Ok(CellOutcome::Gap(GridGap {
            model_id: model.clone(),
            topic_id: topic.clone(),
            reason,
        }))
    };

    let samples = read_embeddings(ctx, model, topic, Condition::Neutral)?;
    if samples.len() < 2 {
        return gap(format!(
            "task corpus has {} embedded headlines; need at least 2",
            samples.len()
        ));
    }
    let provider = ctx.plan.anchor_provider(model);
    let pro = read_embeddings(ctx, provider, topic, Condition::Pro)?;
    let opp = read_embeddings(ctx, provider, topic, Condition::Opp)?;
    if pro.is_empty() || opp.is_empty() {
        return gap(format!(
            "anchor corpus from {provider} is empty (pro {}, opp {})",
            pro.len(),
            opp.len()
        ));
    }

    let stance_seed = substream_seed(ctx.config.seed, &["stance", model, topic]);
    match estimate_stance(
        model,
        topic,
        &samples,
        &AnchorSet { pro, opp },
        stance_seed,
        ctx.config.resamples,
    ) {
        Ok(result) => Ok(CellOutcome::Result(Box::new(result))),
        Err(Error::DegenerateInput(reason)) => gap(reason),
        Err(e) => Err(e),
    }
}

// ---------------------------------------------------------------------
// frames (frame classification + entity extraction)
// ---------------------------------------------------------------------

struct RawMentionRow {
    request_index: u32,
    position: u32,
    surface: String,
    entity_type: EntityType,
    start: usize,
    end: usize,
}

struct FramesUnitOutput {
    assignments: Vec<FrameRow>,
    profile: Option<FrameProfile>,
    raw_mentions: Vec<RawMentionRow>,
}

/// Classifies task headlines into frames and tags entity mentions. Entity
/// surfaces are canonicalized per topic across all models, so canonical
/// names agree everywhere a cross-model comparison will join them.
fn frames(ctx: &Ctx<'_>) -> Result<StageOutput> {
    let units = analysis_units(ctx.plan);
    let results = exec::map_collect(&units, |unit| frames_unit(ctx, unit));
    let mut outputs = Vec::with_capacity(results.len());
    for result in results {
        outputs.push(result?);
    }

    let mut artifacts = BTreeMap::new();
    let mut warnings = Vec::new();

    // Pool raw mentions per topic (models in plan order) and canonicalize.
    let mut canon_rows: Vec<Vec<MentionRow>> = (0..units.len()).map(|_| Vec::new()).collect();
    for topic in &ctx.plan.topics {
        let mut pooled: Vec<RawMention> = Vec::new();
        let mut origin: Vec<(usize, usize)> = Vec::new();
        for (unit_idx, unit) in units.iter().enumerate() {
            if unit.topic.id != topic.id {
                continue;
            }
            for (row_idx, raw) in outputs[unit_idx].raw_mentions.iter().enumerate() {
                if normalize_surface(&raw.surface).is_empty() {
                    continue;
                }
                pooled.push(RawMention {
                    surface: raw.surface.clone(),
                    entity_type: raw.entity_type,
                });
                origin.push((unit_idx, row_idx));
            }
        }
        let canonical = canonicalize_entities(&pooled, ctx.aliases);
        if canonical.len() != origin.len() {
            return Err(Error::Integrity(format!(
                "canonicalization for topic {} returned {} mentions for {} inputs",
                topic.id,
                canonical.len(),
                origin.len()
            )));
        }
        for (mention, (unit_idx, row_idx)) in canonical.into_iter().zip(origin) {
            let raw = &outputs[unit_idx].raw_mentions[row_idx];
            canon_rows[unit_idx].push(MentionRow {
                request_index: raw.request_index,
                position: raw.position,
                canonical: mention.canonical,
                surface: raw.surface.clone(),
                entity_type: raw.entity_type,
                start: raw.start,
                end: raw.end,
            });
        }
    }

    let mut frame_profiles = Vec::new();
    let mut entity_profiles = Vec::new();
    for ((unit, output), rows) in units.iter().zip(&outputs).zip(&canon_rows) {
        let assignments_path = ctx.paths.frame_assignments(&unit.model.id, &unit.topic.id);
        io::write_jsonl(&assignments_path, &output.assignments)?;
        record_artifact(&mut artifacts, &ctx.paths, &assignments_path)?;

        let mentions_path = ctx.paths.mentions(&unit.model.id, &unit.topic.id);
        io::write_jsonl(&mentions_path, rows)?;
        record_artifact(&mut artifacts, &ctx.paths, &mentions_path)?;

        match &output.profile {
            Some(profile) => frame_profiles.push(profile.clone()),
            None => warnings.push(format!(
                "{}/{}: no parsed headlines; frame profile omitted",
                unit.model.id, unit.topic.id
            )),
        }

        let mentions: Vec<CanonicalMention> = rows
            .iter()
            .map(|row| CanonicalMention {
                canonical: row.canonical.clone(),
                surface: row.surface.clone(),
                entity_type: row.entity_type,
            })
            .collect();
        entity_profiles.push(build_entity_profile(
            &unit.model.id,
            &unit.topic.id,
            &mentions,
        ));
    }

    let profiles_path = ctx.paths.frame_profiles();
    io::write_jsonl(&profiles_path, &frame_profiles)?;
    record_artifact(&mut artifacts, &ctx.paths, &profiles_path)?;

    let entities_path = ctx.paths.entity_profiles();
    io::write_jsonl(&entities_path, &entity_profiles)?;
    record_artifact(&mut artifacts, &ctx.paths, &entities_path)?;

    Ok(StageOutput { artifacts, warnings })
}

fn frames_unit(ctx: &Ctx<'_>, unit: &CellUnit<'_>) -> Result<FramesUnitOutput> {
    let source = ctx
        .paths
        .headlines(&unit.model.id, &unit.topic.id, Condition::Neutral);
    let headlines: Vec<Headline> = io::read_jsonl(&source)?;
    if headlines.is_empty() {
        return Ok(FramesUnitOutput {
            assignments: Vec::new(),
            profile: None,
            raw_mentions: Vec::new(),
        });
    }

    let texts: Vec<String> = headlines.iter().map(|h| h.text.clone()).collect();
    let sets = ctx.gateway.classify_frames(&unit.topic.name, &texts)?;
    let assignments: Vec<FrameRow> = headlines
        .iter()
        .zip(&sets)
        .map(|(h, frames)| FrameRow {
            request_index: h.request_index,
            position: h.position,
            frames: frames.clone(),
        })
        .collect();
    let profile = build_frame_profile(&unit.model.id, &unit.topic.id, &sets)?;

    let mut raw_mentions = Vec::new();
    for headline in &headlines {
        for span in ctx.gateway.extract_entities(&headline.text)? {
            raw_mentions.push(RawMentionRow {
                request_index: headline.request_index,
                position: headline.position,
                surface: span.surface,
                entity_type: span.entity_type,
                start: span.start,
                end: span.end,
            });
        }
    }

    Ok(FramesUnitOutput {
        assignments,
        profile: Some(profile),
        raw_mentions,
    })
}

// ---------------------------------------------------------------------
// style
// ---------------------------------------------------------------------

struct StyleUnitOutput {
    records: Vec<PolarityRecord>,
    media: Vec<MediaRow>,
    profile: StyleProfile,
    warnings: Vec<String>,
}

/// Target-sentiment per canonical mention plus the media-bias rate per
/// headline. Unusable media-bias replies drop the headline from the rate
/// denominator, recorded row by row.
fn style(ctx: &Ctx<'_>) -> Result<StageOutput> {
    let units = analysis_units(ctx.plan);
    let results = exec::map_collect(&units, |unit| style_unit(ctx, unit));
    let mut artifacts = BTreeMap::new();
    let mut warnings = Vec::new();
    let mut profiles = Vec::new();
    for (unit, result) in units.iter().zip(results) {
        let output = result?;
        let records_path = ctx.paths.style_records(&unit.model.id, &unit.topic.id);
        io::write_jsonl(&records_path, &output.records)?;
        record_artifact(&mut artifacts, &ctx.paths, &records_path)?;

        let media_path = ctx.paths.style_media(&unit.model.id, &unit.topic.id);
        io::write_jsonl(&media_path, &output.media)?;
        record_artifact(&mut artifacts, &ctx.paths, &media_path)?;

        profiles.push(output.profile);
        warnings.extend(output.warnings);
    }

    let profiles_path = ctx.paths.style_profiles();
    io::write_jsonl(&profiles_path, &profiles)?;
    record_artifact(&mut artifacts, &ctx.paths, &profiles_path)?;

    Ok(StageOutput { artifacts, warnings })
}

fn style_unit(ctx: &Ctx<'_>, unit: &CellUnit<'_>) -> Result<StyleUnitOutput> {
    let model = &unit.model.id;
    let topic = &unit.topic.id;
    let headlines: Vec<Headline> =
        io::read_jsonl(&ctx.paths.headlines(model, topic, Condition::Neutral))?;
    let text_of: BTreeMap<(u32, u32), &str> = headlines
        .iter()
        .map(|h| ((h.request_index, h.position), h.text.as_str()))
        .collect();

    let mentions: Vec<MentionRow> = io::read_jsonl(&ctx.paths.mentions(model, topic))?;
    let mut records = Vec::with_capacity(mentions.len());
    let mut warnings = Vec::new();
    for mention in &mentions {
        let key = (mention.request_index, mention.position);
        let Some(text) = text_of.get(&key) else {
            return Err(Error::Integrity(format!(
                "mention at {model}/{topic} request {} position {} has no headline",
                mention.request_index, mention.position
            )));
        };
        let polarity = ctx.gateway.target_sentiment(text, &mention.surface)?;
        records.push(PolarityRecord {
            model_id: model.clone(),
            topic_id: topic.clone(),
            request_index: mention.request_index,
            position: mention.position,
            canonical: mention.canonical.clone(),
            polarity,
        });
    }

    let mut media = Vec::with_capacity(headlines.len());
    let mut labels = Vec::new();
    for headline in &headlines {
        match ctx.gateway.classify_media_bias(&headline.text) {
            Ok(label) => {
                labels.push(label);
                media.push(MediaRow {
                    request_index: headline.request_index,
                    position: headline.position,
                    label: Some(label),
                    excluded: None,
                });
            }
            Err(Error::Parse(reason)) => {
                warnings.push(format!(
                    "{model}/{topic}: media-bias reply unusable for request {} position {}; \
                     headline excluded from the rate",
                    headline.request_index, headline.position
                ));
                media.push(MediaRow {
                    request_index: headline.request_index,
                    position: headline.position,
                    label: None,
                    excluded: Some(reason),
                });
            }
            Err(e) => return Err(e),
        }
    }

    Ok(StyleUnitOutput {
        profile: build_style_profile(model, topic, &records, &labels),
        records,
        media,
        warnings,
    })
}

// ---------------------------------------------------------------------
// report
// ---------------------------------------------------------------------

fn report(ctx: &Ctx<'_>, manifest: &RunManifest) -> Result<StageOutput> {
    let mut artifacts = BTreeMap::new();
    let mut warnings = Vec::new();
    let k = ctx.config.k as usize;

    let results: Vec<StanceResult> = io::read_jsonl(&ctx.paths.stance_results())?;
    let gaps: Vec<GridGap> = io::read_jsonl(&ctx.paths.stance_gaps())?;
    let model_order = ctx.plan.model_ids();
    let topic_order = ctx.plan.policy_topic_ids();
    let heatmap = build_heatmap(&results, &model_order, &topic_order, &gaps)?;

    let heatmap_json = ctx.paths.heatmap_json();
    io::write_json_pretty(&heatmap_json, &heatmap)?;
    record_artifact(&mut artifacts, &ctx.paths, &heatmap_json)?;
    let heatmap_csv = ctx.paths.heatmap_csv();
    io::write_atomic(&heatmap_csv, render_heatmap_csv(&heatmap).as_bytes())?;
    record_artifact(&mut artifacts, &ctx.paths, &heatmap_csv)?;
    let heatmap_svg = ctx.paths.heatmap_svg();
    io::write_atomic(&heatmap_svg, render_heatmap_svg(&heatmap).as_bytes())?;
    record_artifact(&mut artifacts, &ctx.paths, &heatmap_svg)?;

    let frame_profiles: Vec<FrameProfile> = io::read_jsonl(&ctx.paths.frame_profiles())?;
    let entity_profiles: Vec<EntityProfile> = io::read_jsonl(&ctx.paths.entity_profiles())?;
    let style_profiles: Vec<StyleProfile> = io::read_jsonl(&ctx.paths.style_profiles())?;

    let mut top_lists = Vec::new();
    for profile in &entity_profiles {
        let entities = top_k_entities(profile, k)?
            .into_iter()
            .map(|record| record.canonical)
            .collect();
        top_lists.push(TopEntityList {
            model_id: profile.model_id.clone(),
            topic_id: profile.topic_id.clone(),
            entities,
        });
    }

    if results.is_empty() {
        warnings.push(
            "no stance results; summary statistics omitted".to_string(),
        );
    } else {
        let summary = build_summary(&results, &top_lists)?;
        let summary_path = ctx.paths.summary_json();
        io::write_json_pretty(&summary_path, &summary)?;
        record_artifact(&mut artifacts, &ctx.paths, &summary_path)?;
    }

    let mut topic_cards = BTreeMap::new();
    for topic in &ctx.plan.topics {
        let profiles: Vec<EntityProfile> = entity_profiles
            .iter()
            .filter(|p| p.topic_id == topic.id)
            .cloned()
            .collect();
        if profiles.is_empty() {
            warnings.push(format!(
                "no entity profiles for topic {}; comparison card omitted",
                topic.id
            ));
            continue;
        }
        let card = build_entity_topic_card(&topic.id, &profiles, k)?;
        let card_path = ctx.paths.entity_card(&topic.id);
        io::write_json_pretty(&card_path, &card)?;
        record_artifact(&mut artifacts, &ctx.paths, &card_path)?;
        topic_cards.insert(topic.id.clone(), card);
    }

    let provenance = Provenance {
        backend_ids: manifest.backend_ids.clone(),
        root_seed: ctx.config.seed,
        manifest_hash: manifest.provenance_hash(),
        anchor_source: ctx.plan.anchor_source_label(),
    };

    for model in &ctx.plan.models {
        let mut entity_rows: BTreeMap<String, Vec<EntityCardRow>> = BTreeMap::new();
        for topic in &ctx.plan.topics {
            let Some(profile) = entity_profiles
                .iter()
                .find(|p| p.model_id == model.id && p.topic_id == topic.id)
            else {
                continue;
            };
            let Some(card) = topic_cards.get(&topic.id) else {
                continue;
            };
            let style = style_profiles
                .iter()
                .find(|p| p.model_id == model.id && p.topic_id == topic.id);
            entity_rows.insert(
                topic.id.clone(),
                entity_card_rows(&model.id, profile, card, style, k)?,
            );
        }
        let inputs = CardInputs {
            topics: &ctx.plan.topics,
            stance: &results,
            frames: &frame_profiles,
            entities: &entity_rows,
            style: &style_profiles,
        };
        let (card, card_warnings) = build_bias_card(&model.id, &inputs, provenance.clone());
        warnings.extend(card_warnings);

        let json_path = ctx.paths.card_json(&model.id);
        io::write_json_pretty(&json_path, &card)?;
        record_artifact(&mut artifacts, &ctx.paths, &json_path)?;
        let md_path = ctx.paths.card_md(&model.id);
        io::write_atomic(&md_path, render_bias_card_markdown(&card).as_bytes())?;
        record_artifact(&mut artifacts, &ctx.paths, &md_path)?;
    }

    Ok(StageOutput { artifacts, warnings })
}
