//! Run orchestration: configuration, the stage manifest, resume, and replay.
//!
//! A run is a sequence of idempotent stages over one output directory:
//!
//! ```text
//! generate -> headlines -> embed -> stance \
//!                 \-> frames -> style ------+-> report
//! ```
//!
//! Every stage records its artifacts (relative path plus sha256) in
//! `manifest.json`; a stage is complete only while those files still match
//! their digests, so a re-run redoes exactly the missing or stale work and
//! never repeats an external call that is already cached. All randomness
//! derives from the root seed through named substreams, which makes every
//! data artifact a pure function of (config, seed) in live mode and of
//! (config, bundle, seed) in replay mode.

mod bundle;
mod io;
mod stages;

pub use bundle::{export_bundle, verify_bundle, BundleManifest, BUNDLE_FILE, ENVELOPE_DIR};
pub use stages::{EmbeddingRow, FrameRow, MediaRow, MentionRow};

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::{self, Condition, TopicSpec};
use crate::error::{Error, Result};
use crate::framing::AliasTable;
use crate::gateway::{builtin, AnalysisBackends, BackendSpec, Gateway, Mode};
use crate::stance::MIN_RESAMPLES;

/// Stages in dependency order.
pub const STAGE_ORDER: &[&str] = &[
    "generate",
    "headlines",
    "embed",
    "stance",
    "frames",
    "style",
    "report",
];

/// Stages that produce data artifacts (everything but `report`). These feed
/// the provenance hash stamped into report files.
pub const DATA_STAGES: &[&str] = &["generate", "headlines", "embed", "stance", "frames", "style"];

/// Stages whose work involves backend calls; a replay bundle is exportable
/// once these are complete.
pub const GATEWAY_STAGES: &[&str] = &["generate", "headlines", "embed", "frames", "style"];

/// Below this the permutation test and the normalized gap are too coarse to
/// mean anything.
pub const MIN_SAMPLES_PER_TOPIC: u32 = 10;

fn stage_deps(stage: &str) -> &'static [&'static str] {
    match stage {
        "generate" => &[],
        "headlines" => &["generate"],
        "embed" => &["headlines"],
        "stance" => &["embed"],
        "frames" => &["headlines"],
        "style" => &["frames"],
        "report" => &["stance", "frames", "style"],
        _ => &[],
    }
}

fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

// ---------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------

/// One model under evaluation: its stable id (used in artifact paths and
/// reports) and the backend that serves its generations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub id: String,
    pub backend: BackendSpec,
}

/// Where stance anchor corpora come from. `SelfGenerated` elicits the
/// pro/opp anchors from each evaluated model itself; `Reference` elicits
/// them once from a designated model and scores everyone against those.
/// The choice is stamped into report provenance because it changes what
/// the stance numbers mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnchorSource {
    #[serde(rename = "self")]
    SelfGenerated,
    #[serde(rename = "reference")]
    Reference,
}

fn default_samples_per_topic() -> u32 {
    1000
}

fn default_resamples() -> u32 {
    crate::stance::DEFAULT_RESAMPLES
}

fn default_k() -> u32 {
    crate::framing::DEFAULT_TOP_K as u32
}

fn default_mode() -> Mode {
    Mode::Live
}

fn default_anchor_source() -> AnchorSource {
    AnchorSource::SelfGenerated
}

/// Full run configuration, normally loaded from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; every stream of randomness in the run derives from it.
    #[serde(default)]
    pub seed: u64,
    /// Parsed headlines per (model, topic, condition) corpus.
    #[serde(default = "default_samples_per_topic")]
    pub samples_per_topic: u32,
    /// Sign-flip resamples for the stance permutation test.
    #[serde(default = "default_resamples")]
    pub resamples: u32,
    /// Top-k cutoff for entity lists.
    #[serde(default = "default_k")]
    pub k: u32,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    pub output_dir: PathBuf,
    pub cache_dir: PathBuf,
    /// Replay source (for `mode = "replay"`) or export destination.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bundle: Option<PathBuf>,
    pub models: Vec<ModelSpec>,
    /// Omit to use the built-in topic list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topics: Option<Vec<TopicSpec>>,
    #[serde(default)]
    pub backends: AnalysisBackends,
    #[serde(default = "default_anchor_source")]
    pub anchor_source: AnchorSource,
    /// Required when `anchor_source = "reference"`; must name a model id
    /// from `models`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_model: Option<String>,
    /// Entity alias table: canonical display name to surface variants.
    #[serde(default)]
    pub aliases: BTreeMap<String, Vec<String>>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Digest of the fields that determine artifact content. Paths and mode
    /// are excluded: a replay of a run is the same run on another machine.
    pub fn semantic_hash(&self) -> Result<String> {
        let topics = corpus::load_topics(self.topics.clone())?;
        let value = json!({
            "seed": self.seed,
            "samples_per_topic": self.samples_per_topic,
            "resamples": self.resamples,
            "k": self.k,
            "models": self.models,
            "topics": topics,
            "backends": self.backends,
            "anchor_source": self.anchor_source,
            "reference_model": self.reference_model,
            "aliases": self.aliases,
        });
        Ok(io::sha256_hex(serde_json::to_string(&value)?.as_bytes()))
    }
}

// ---------------------------------------------------------------------
// Resolved plan
// ---------------------------------------------------------------------

fn check_id(id: &str, what: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id.len() <= 64
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{what} id '{id}' is not a safe path segment \
             (ascii letters, digits, '-', '_', '.'; 1..=64 chars; no leading dot)"
        )))
    }
}

/// The validated work plan: topic and model orders are fixed here and used
/// everywhere downstream, which is what makes artifact bytes reproducible.
#[derive(Debug, Clone)]
pub struct Plan {
    pub topics: Vec<TopicSpec>,
    pub models: Vec<ModelSpec>,
    pub anchor_source: AnchorSource,
    pub reference_model: Option<String>,
}

impl Plan {
    pub fn resolve(config: &RunConfig) -> Result<Plan> {
        let topics = corpus::load_topics(config.topics.clone())?;
        for topic in &topics {
            check_id(&topic.id, "topic")?;
        }
        if !topics.iter().any(TopicSpec::is_policy) {
            return Err(Error::Config(
                "at least one policy topic is required".to_string(),
            ));
        }
        if config.models.is_empty() {
            return Err(Error::Config("no models configured".to_string()));
        }
        let mut seen = BTreeSet::new();
        for model in &config.models {
            check_id(&model.id, "model")?;
            if !seen.insert(model.id.as_str()) {
                return Err(Error::Config(format!("duplicate model id '{}'", model.id)));
            }
            model.backend.validate()?;
        }
        config.backends.validate()?;
        if config.samples_per_topic < MIN_SAMPLES_PER_TOPIC {
            return Err(Error::Config(format!(
                "samples_per_topic must be at least {MIN_SAMPLES_PER_TOPIC}, got {}",
                config.samples_per_topic
            )));
        }
        if config.resamples < MIN_RESAMPLES {
            return Err(Error::Config(format!(
                "resamples must be at least {MIN_RESAMPLES}, got {}",
                config.resamples
            )));
        }
        if config.k == 0 {
            return Err(Error::Config("k must be at least 1".to_string()));
        }
        let reference_model = match config.anchor_source {
            AnchorSource::SelfGenerated => {
                if config.reference_model.is_some() {
                    return Err(Error::Config(
                        "reference_model is set but anchor_source is \"self\"".to_string(),
                    ));
                }
                None
            }
            AnchorSource::Reference => {
                let id = config.reference_model.clone().ok_or_else(|| {
                    Error::Config(
                        "anchor_source = \"reference\" requires reference_model".to_string(),
                    )
                })?;
                if !config.models.iter().any(|m| m.id == id) {
                    return Err(Error::Config(format!(
                        "reference_model '{id}' is not in the models list"
                    )));
                }
                Some(id)
            }
        };
        Ok(Plan {
            topics,
            models: config.models.clone(),
            anchor_source: config.anchor_source,
            reference_model,
        })
    }

    pub fn model_ids(&self) -> Vec<String> {
        self.models.iter().map(|m| m.id.clone()).collect()
    }

    pub fn policy_topics(&self) -> Vec<&TopicSpec> {
        self.topics.iter().filter(|t| t.is_policy()).collect()
    }

    pub fn policy_topic_ids(&self) -> Vec<String> {
        self.policy_topics().iter().map(|t| t.id.clone()).collect()
    }

    /// Whose corpus provides the anchors scored against `model_id`.
    pub fn anchor_provider<'a>(&'a self, model_id: &'a str) -> &'a str {
        match &self.reference_model {
            Some(reference) => reference,
            None => model_id,
        }
    }

    /// Whether this model generates anchor corpora at all.
    pub fn provides_anchors(&self, model_id: &str) -> bool {
        match &self.reference_model {
            Some(reference) => reference == model_id,
            None => true,
        }
    }

    /// The provenance string stamped into reports.
    pub fn anchor_source_label(&self) -> String {
        match &self.reference_model {
            Some(reference) => format!("reference:{reference}"),
            None => "self".to_string(),
        }
    }
}

// ---------------------------------------------------------------------
// Artifact layout
// ---------------------------------------------------------------------

/// Canonical file layout under one output directory.
#[derive(Debug, Clone)]
pub struct ArtifactPaths {
    root: PathBuf,
}

impl ArtifactPaths {
    pub fn new(root: &Path) -> ArtifactPaths {
        ArtifactPaths {
            root: root.to_path_buf(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Path relative to the output root, as stored in the manifest.
    pub fn rel(&self, path: &Path) -> String {
        path.strip_prefix(&self.root)
            .unwrap_or(path)
            .to_string_lossy()
            .into_owned()
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    fn corpus_file(&self, dir: &str, model: &str, topic: &str, condition: Condition) -> PathBuf {
        self.root
            .join(dir)
            .join(model)
            .join(topic)
            .join(format!("{}.jsonl", condition.as_str()))
    }

    pub fn generations(&self, model: &str, topic: &str, condition: Condition) -> PathBuf {
        self.corpus_file("generations", model, topic, condition)
    }

    pub fn headlines(&self, model: &str, topic: &str, condition: Condition) -> PathBuf {
        self.corpus_file("headlines", model, topic, condition)
    }

    pub fn embeddings(&self, model: &str, topic: &str, condition: Condition) -> PathBuf {
        self.corpus_file("embeddings", model, topic, condition)
    }

    pub fn stance_results(&self) -> PathBuf {
        self.root.join("stance").join("results.jsonl")
    }

    pub fn stance_gaps(&self) -> PathBuf {
        self.root.join("stance").join("gaps.jsonl")
    }

    pub fn frame_assignments(&self, model: &str, topic: &str) -> PathBuf {
        self.root
            .join("frames")
            .join("assignments")
            .join(model)
            .join(format!("{topic}.jsonl"))
    }

    pub fn frame_profiles(&self) -> PathBuf {
        self.root.join("frames").join("profiles.jsonl")
    }

    pub fn mentions(&self, model: &str, topic: &str) -> PathBuf {
        self.root
            .join("frames")
            .join("mentions")
            .join(model)
            .join(format!("{topic}.jsonl"))
    }

    pub fn entity_profiles(&self) -> PathBuf {
        self.root.join("frames").join("entity_profiles.jsonl")
    }

    pub fn style_records(&self, model: &str, topic: &str) -> PathBuf {
        self.root
            .join("style")
            .join("records")
            .join(model)
            .join(format!("{topic}.jsonl"))
    }

    pub fn style_media(&self, model: &str, topic: &str) -> PathBuf {
        self.root
            .join("style")
            .join("media")
            .join(model)
            .join(format!("{topic}.jsonl"))
    }

    pub fn style_profiles(&self) -> PathBuf {
        self.root.join("style").join("profiles.jsonl")
    }

    pub fn heatmap_json(&self) -> PathBuf {
        self.root.join("report").join("heatmap.json")
    }

    pub fn heatmap_csv(&self) -> PathBuf {
        self.root.join("report").join("heatmap.csv")
    }

    pub fn heatmap_svg(&self) -> PathBuf {
        self.root.join("report").join("heatmap.svg")
    }

    pub fn summary_json(&self) -> PathBuf {
        self.root.join("report").join("summary.json")
    }

    pub fn entity_card(&self, topic: &str) -> PathBuf {
        self.root
            .join("report")
            .join("entities")
            .join(format!("{topic}.json"))
    }

    pub fn card_json(&self, model: &str) -> PathBuf {
        self.root
            .join("report")
            .join("cards")
            .join(format!("{model}.json"))
    }

    pub fn card_md(&self, model: &str) -> PathBuf {
        self.root
            .join("report")
            .join("cards")
            .join(format!("{model}.md"))
    }
}

// ---------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub complete: bool,
    /// Relative artifact path to sha256 digest.
    pub artifacts: BTreeMap<String, String>,
    #[serde(default)]
    pub warnings: Vec<String>,
    pub finished_unix: u64,
}

/// Persistent record of run progress. Lives at `<output_dir>/manifest.json`
/// and is rewritten after every completed stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Semantic config digest; a mismatch invalidates all prior progress.
    pub config_hash: String,
    pub root_seed: u64,
    #[serde(default)]
    pub backend_ids: BTreeMap<String, String>,
    #[serde(default)]
    pub stages: BTreeMap<String, StageRecord>,
    /// Every cache key any stage touched; exactly the envelope set a replay
    /// bundle must carry.
    #[serde(default)]
    pub used_cache_keys: BTreeSet<String>,
    pub created_unix: u64,
    pub updated_unix: u64,
}

impl RunManifest {
    pub fn new(config_hash: &str, root_seed: u64) -> RunManifest {
        let now = unix_now();
        RunManifest {
            config_hash: config_hash.to_string(),
            root_seed,
            backend_ids: BTreeMap::new(),
            stages: BTreeMap::new(),
            used_cache_keys: BTreeSet::new(),
            created_unix: now,
            updated_unix: now,
        }
    }

    /// Loads the manifest if it matches this configuration, otherwise starts
    /// fresh: artifacts from a different config or seed are not resumable.
    pub fn load_or_new(path: &Path, config_hash: &str, root_seed: u64) -> Result<RunManifest> {
        if !path.exists() {
            return Ok(RunManifest::new(config_hash, root_seed));
        }
        let existing: RunManifest = io::read_json(path)?;
        if existing.config_hash != config_hash || existing.root_seed != root_seed {
            return Ok(RunManifest::new(config_hash, root_seed));
        }
        Ok(existing)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json_pretty(path, self)
    }

    /// A stage counts as complete only while every artifact it recorded
    /// still exists with a matching digest.
    pub fn stage_complete(&self, stage: &str, output_dir: &Path) -> bool {
        let Some(record) = self.stages.get(stage) else {
            return false;
        };
        record.complete
            && record.artifacts.iter().all(|(rel, digest)| {
                io::sha256_file(&output_dir.join(rel))
                    .map(|actual| actual == *digest)
                    .unwrap_or(false)
            })
    }

    pub fn merge_used_keys(&mut self, keys: impl IntoIterator<Item = String>) {
        self.used_cache_keys.extend(keys);
    }

    /// Digest over the deterministic parts (config hash, seed, data-stage
    /// artifact digests); identical inputs give an identical value across
    /// machines, so it can be stamped into byte-reproducible reports.
    pub fn provenance_hash(&self) -> String {
        let stages: BTreeMap<&String, &BTreeMap<String, String>> = self
            .stages
            .iter()
            .filter(|(name, _)| DATA_STAGES.contains(&name.as_str()))
            .map(|(name, record)| (name, &record.artifacts))
            .collect();
        let value = json!({
            "config": self.config_hash,
            "root_seed": self.root_seed,
            "stages": stages,
        });
        io::sha256_hex(
            serde_json::to_string(&value)
                .expect("manifest digest serialization cannot fail")
                .as_bytes(),
        )
    }
}

fn backend_ids(plan: &Plan, backends: &AnalysisBackends) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    map.insert(
        "embed".to_string(),
        backends.embed.backend_id(builtin::EMBED_ID),
    );
    map.insert(
        "frames".to_string(),
        backends.frames.backend_id(builtin::FRAMES_ID),
    );
    map.insert(
        "entities".to_string(),
        backends.entities.backend_id(builtin::ENTITIES_ID),
    );
    map.insert(
        "sentiment".to_string(),
        backends.sentiment.backend_id(builtin::SENTIMENT_ID),
    );
    map.insert(
        "media_bias".to_string(),
        backends.media_bias.backend_id(builtin::MEDIA_BIAS_ID),
    );
    for model in &plan.models {
        map.insert(
            format!("generate:{}", model.id),
            model.backend.backend_id(builtin::GENERATE_ID),
        );
    }
    map
}

// ---------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub level: Level,
    pub message: String,
}

fn diag_error(message: String) -> Diagnostic {
    Diagnostic {
        level: Level::Error,
        message,
    }
}

/// Checks configuration, environment, and (in replay mode) bundle
/// completeness without mutating anything. Error-level findings mean a run
/// would refuse to start.
pub fn validate(config: &RunConfig) -> Vec<Diagnostic> {
    let mut diags = Vec::new();

    let plan = match Plan::resolve(config) {
        Ok(plan) => Some(plan),
        Err(e) => {
            diags.push(diag_error(e.to_string()));
            None
        }
    };

    if let Err(e) = AliasTable::from_config(&config.aliases) {
        diags.push(diag_error(e.to_string()));
    }

    if config.mode == Mode::Live {
        let mut endpoints: Vec<(String, &BackendSpec)> = vec![
            ("embed".to_string(), &config.backends.embed),
            ("frames".to_string(), &config.backends.frames),
            ("entities".to_string(), &config.backends.entities),
            ("sentiment".to_string(), &config.backends.sentiment),
            ("media_bias".to_string(), &config.backends.media_bias),
        ];
        for model in &config.models {
            endpoints.push((format!("generate:{}", model.id), &model.backend));
        }
        for (capability, backend) in endpoints {
            if let BackendSpec::Http(endpoint) = backend {
                if let Some(var) = &endpoint.auth_token_env {
                    if std::env::var(var).is_err() {
                        diags.push(diag_error(format!(
                            "endpoint {} ({capability}) needs auth token env var {var}, \
                             which is not set",
                            endpoint.base_url
                        )));
                    }
                }
            }
        }
    }

    if config.mode == Mode::Replay {
        match &config.bundle {
            None => diags.push(diag_error(
                "replay mode requires a bundle path".to_string(),
            )),
            Some(dir) => match bundle::verify_bundle(dir) {
                Err(e) => diags.push(diag_error(e.to_string())),
                Ok(bm) => {
                    if plan.is_some() {
                        match config.semantic_hash() {
                            Ok(hash) if hash != bm.config_hash => {
                                diags.push(diag_error(format!(
                                    "bundle {} was recorded for a different configuration",
                                    dir.display()
                                )));
                            }
                            Ok(_) => {}
                            Err(e) => diags.push(diag_error(e.to_string())),
                        }
                    }
                    if bm.root_seed != config.seed {
                        diags.push(diag_error(format!(
                            "bundle {} was recorded with seed {}, config says {}",
                            dir.display(),
                            bm.root_seed,
                            config.seed
                        )));
                    }
                }
            },
        }
    }

    diags
}

// ---------------------------------------------------------------------
// Running
// ---------------------------------------------------------------------

/// What a pipeline invocation did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub executed: Vec<String>,
    pub skipped: Vec<String>,
    pub warnings: Vec<String>,
    /// Requests that actually reached the network.
    pub network_ops: u64,
}

/// Runs every stage in order.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    run_stages(config, STAGE_ORDER)
}

/// Runs the named stages in dependency order. Stages that are already
/// complete are skipped; prerequisites outside `targets` must already be
/// complete or the invocation fails naming the missing stage.
pub fn run_stages(config: &RunConfig, targets: &[&str]) -> Result<RunOutcome> {
    for target in targets {
        if !STAGE_ORDER.contains(target) {
            return Err(Error::Precondition(format!("unknown stage '{target}'")));
        }
    }

    let plan = Plan::resolve(config)?;
    let aliases = AliasTable::from_config(&config.aliases)?;
    let config_hash = config.semantic_hash()?;

    let cache_dir = match config.mode {
        Mode::Live => config.cache_dir.clone(),
        Mode::Replay => {
            let dir = config.bundle.as_ref().ok_or_else(|| {
                Error::Config("replay mode requires a bundle path".to_string())
            })?;
            let bm = bundle::verify_bundle(dir)?;
            if bm.config_hash != config_hash {
                return Err(Error::Config(format!(
                    "bundle {} was recorded for a different configuration",
                    dir.display()
                )));
            }
            if bm.root_seed != config.seed {
                return Err(Error::Config(format!(
                    "bundle {} was recorded with seed {}, config says {}",
                    dir.display(),
                    bm.root_seed,
                    config.seed
                )));
            }
            dir.join(ENVELOPE_DIR)
        }
    };

    let gateway = Gateway::new(config.mode, &cache_dir, config.backends.clone())?;
    let paths = ArtifactPaths::new(&config.output_dir);
    let manifest_path = paths.manifest();
    let mut manifest = RunManifest::load_or_new(&manifest_path, &config_hash, config.seed)?;
    manifest.backend_ids = backend_ids(&plan, &config.backends);

    let ctx = stages::Ctx {
        config,
        plan: &plan,
        aliases: &aliases,
        gateway: &gateway,
        paths: paths.clone(),
    };

    let mut executed = Vec::new();
    let mut skipped = Vec::new();
    let mut warnings = Vec::new();

    for stage in STAGE_ORDER {
        if !targets.contains(stage) {
            continue;
        }
        for dep in stage_deps(stage) {
            if !targets.contains(dep) && !manifest.stage_complete(dep, paths.root()) {
                return Err(Error::stage(
                    stage,
                    Error::Precondition(format!("requires completed stage '{dep}'")),
                ));
            }
        }
        if manifest.stage_complete(stage, paths.root()) {
            skipped.push(stage.to_string());
            continue;
        }
        let warn_mark = gateway.warnings().len();
        match stages::execute(stage, &ctx, &manifest) {
            Err(e) => {
                // Keep partial progress: completed stages stay recorded and
                // every envelope written so far stays in the cache.
                manifest.merge_used_keys(gateway.used_keys());
                manifest.updated_unix = unix_now();
                let _ = manifest.save(&manifest_path);
                return Err(Error::stage(stage, e));
            }
            Ok(output) => {
                let mut stage_warnings = output.warnings;
                let mut gateway_warnings = gateway.warnings();
                stage_warnings.extend(gateway_warnings.split_off(warn_mark));
                warnings.extend(stage_warnings.iter().cloned());
                manifest.stages.insert(
                    stage.to_string(),
                    StageRecord {
                        complete: true,
                        artifacts: output.artifacts,
                        warnings: stage_warnings,
                        finished_unix: unix_now(),
                    },
                );
                manifest.merge_used_keys(gateway.used_keys());
                manifest.updated_unix = unix_now();
                manifest.save(&manifest_path)?;
                executed.push(stage.to_string());
            }
        }
    }

    Ok(RunOutcome {
        executed,
        skipped,
        warnings,
        network_ops: gateway.network_ops(),
    })
}
