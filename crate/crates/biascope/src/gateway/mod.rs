//! Uniform access to model backends.
//!
//! Every call, local or remote, flows through one path: build a canonical
//! request payload, derive its cache key, answer from the envelope store
//! when possible, otherwise invoke the backend and record the envelope.
//! Replay mode never invokes a backend; a missing envelope is an error
//! naming the key. All degradation rules (classifier retries, tagger
//! fallbacks) live here so callers see clean, typed results.

pub mod builtin;
pub mod cache;
pub mod http;

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::corpus::SamplingParams;
use crate::error::{Error, Result};
use crate::framing::Frame;
use crate::style::{MediaBiasLabel, Polarity};

pub use builtin::TaggedSpan;
pub use cache::{Cache, CacheKey, CallKind, Envelope};
pub use http::{EndpointConfig, HttpTransport};

/// Whether backends may be invoked or only recorded envelopes replayed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Live,
    Replay,
}

/// Marker for the string form `"builtin"` in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinMarker {
    Builtin,
}

/// One backend choice: the deterministic local implementation or a remote
/// endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BackendSpec {
    Builtin(BuiltinMarker),
    Http(EndpointConfig),
}

pub const BUILTIN: BackendSpec = BackendSpec::Builtin(BuiltinMarker::Builtin);

impl BackendSpec {
    pub fn is_builtin(&self) -> bool {
        matches!(self, BackendSpec::Builtin(_))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BackendSpec::Builtin(_) => Ok(()),
            BackendSpec::Http(e) => e.validate(),
        }
    }

    pub fn backend_id(&self, builtin_id: &str) -> String {
        match self {
            BackendSpec::Builtin(_) => builtin_id.to_string(),
            BackendSpec::Http(e) => e.backend_id(),
        }
    }

    pub fn key_model(&self, builtin_id: &str) -> String {
        match self {
            BackendSpec::Builtin(_) => builtin_id.to_string(),
            BackendSpec::Http(e) => e.model_name.clone(),
        }
    }
}

/// Backend assignment for each analysis capability. Generation backends are
/// chosen per evaluated model and passed to [`Gateway::generate`] directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisBackends {
    pub embed: BackendSpec,
    pub frames: BackendSpec,
    pub entities: BackendSpec,
    pub sentiment: BackendSpec,
    pub media_bias: BackendSpec,
}

impl Default for AnalysisBackends {
    fn default() -> AnalysisBackends {
        AnalysisBackends {
            embed: BUILTIN,
            frames: BUILTIN,
            entities: BUILTIN,
            sentiment: BUILTIN,
            media_bias: BUILTIN,
        }
    }
}

impl AnalysisBackends {
    pub fn validate(&self) -> Result<()> {
        self.embed.validate()?;
        self.frames.validate()?;
        self.entities.validate()?;
        self.sentiment.validate()?;
        self.media_bias.validate()
    }
}

/// Classifier calls send at most this many headlines per request.
pub const FRAMES_BATCH_LIMIT: usize = 10;

/// Tolerance inside which a backend embedding counts as already unit length.
const UNIT_NORM_TOLERANCE: f64 = 1e-6;

pub struct Gateway {
    mode: Mode,
    cache: Cache,
    backends: AnalysisBackends,
    transport: HttpTransport,
    used_keys: Mutex<BTreeSet<String>>,
    warnings: Mutex<Vec<String>>,
    embed_dim: usize,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("mode", &self.mode)
            .field("cache_dir", &self.cache.dir())
            .finish()
    }
}

impl Gateway {
    pub fn new(mode: Mode, cache_dir: &Path, backends: AnalysisBackends) -> Result<Gateway> {
        backends.validate()?;
        Ok(Gateway {
            mode,
            cache: Cache::open(cache_dir)?,
            backends,
            transport: HttpTransport::new(),
            used_keys: Mutex::new(BTreeSet::new()),
            warnings: Mutex::new(Vec::new()),
            embed_dim: builtin::EMBED_DIM,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn cache(&self) -> &Cache {
        &self.cache
    }

    /// Requests that actually reached the network so far.
    pub fn network_ops(&self) -> u64 {
        self.transport.network_ops()
    }

    /// Cache keys touched by this gateway, hits and misses alike. This is
    /// the exact envelope set a replay bundle must contain.
    pub fn used_keys(&self) -> Vec<String> {
        self.used_keys
            .lock()
            .expect("key set lock poisoned")
            .iter()
            .cloned()
            .collect()
    }

    pub fn warnings(&self) -> Vec<String> {
        self.warnings.lock().expect("warning lock poisoned").clone()
    }

    fn warn(&self, message: String) {
        log::warn!("{message}");
        self.warnings
            .lock()
            .expect("warning lock poisoned")
            .push(message);
    }

    fn record_key(&self, key: &CacheKey) {
        self.used_keys
            .lock()
            .expect("key set lock poisoned")
            .insert(key.as_hex().to_string());
    }

    /// The single call path: cache lookup, then backend invocation in live
    /// mode, then envelope recording.
    #[allow(clippy::too_many_arguments)]
    fn call<F>(
        &self,
        kind: CallKind,
        backend: &BackendSpec,
        key_model: &str,
        payload: Value,
        seed: Option<u64>,
        builtin_id: &str,
        compute: F,
    ) -> Result<Value>
    where
        F: FnOnce() -> Result<Value>,
    {
        let key = CacheKey::new(kind, key_model, &payload, seed);
        self.record_key(&key);
        if let Some(envelope) = self.cache.get(&key)? {
            return Ok(envelope.response);
        }
        if self.mode == Mode::Replay {
            return Err(Error::MissingArtifact(format!(
                "no recorded envelope for {} call {}",
                kind.as_str(),
                key.as_hex()
            )));
        }
        self.invoke_and_record(kind, backend, key_model, payload, seed, builtin_id, compute)
    }

    /// Invoke the backend unconditionally and overwrite the envelope. Used
    /// for first contact and for the one classifier re-request.
    #[allow(clippy::too_many_arguments)]
    fn invoke_and_record<F>(
        &self,
        kind: CallKind,
        backend: &BackendSpec,
        key_model: &str,
        payload: Value,
        seed: Option<u64>,
        builtin_id: &str,
        compute: F,
    ) -> Result<Value>
    where
        F: FnOnce() -> Result<Value>,
    {
        let response = match backend {
            BackendSpec::Builtin(_) => compute()?,
            BackendSpec::Http(endpoint) => self.transport.post_json(endpoint, &payload)?,
        };
        let key = CacheKey::new(kind, key_model, &payload, seed);
        let envelope = Envelope::new(backend.backend_id(builtin_id), payload, response.clone());
        self.cache.put(&key, &envelope)?;
        Ok(response)
    }

    // -----------------------------------------------------------------
    // Generation
    // -----------------------------------------------------------------

    /// One completion for a corpus prompt. Returns the raw completion text.
    pub fn generate(
        &self,
        backend: &BackendSpec,
        model_id: &str,
        prompt: &str,
        params: &SamplingParams,
    ) -> Result<String> {
        if prompt.is_empty() {
            return Err(Error::Precondition("generation prompt is empty".to_string()));
        }
        let wire_model = match backend {
            BackendSpec::Builtin(_) => model_id.to_string(),
            BackendSpec::Http(e) => e.model_name.clone(),
        };
        let payload = json!({
            "model": wire_model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
            "seed": params.seed,
        });
        let seed = params.seed;
        let prompt_owned = prompt.to_string();
        let model_owned = model_id.to_string();
        let response = self.call(
            CallKind::Generate,
            backend,
            model_id,
            payload,
            Some(seed),
            builtin::GENERATE_ID,
            move || {
                Ok(builtin::chat_response(
                    &model_owned,
                    &builtin::generate_text(&model_owned, &prompt_owned, seed),
                ))
            },
        )?;
        chat_content(&response)
    }

    // -----------------------------------------------------------------
    // Embeddings
    // -----------------------------------------------------------------

    /// Embed a batch of texts, preserving order. Vectors are brought to
    /// unit length here so downstream similarity never re-normalizes.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<crate::stance::EmbeddingVector>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        if let Some(pos) = texts.iter().position(|t| t.trim().is_empty()) {
            return Err(Error::Precondition(format!(
                "embedding input {pos} is empty"
            )));
        }
        let backend = self.backends.embed.clone();
        let key_model = backend.key_model(builtin::EMBED_ID);
        let payload = json!({"model": key_model, "input": texts});
        let dim = self.embed_dim;
        let texts_owned = texts.to_vec();
        let key_model_owned = key_model.clone();
        let response = self.call(
            CallKind::Embed,
            &backend,
            &key_model,
            payload,
            None,
            builtin::EMBED_ID,
            move || Ok(builtin::embed_response(&key_model_owned, &texts_owned, dim)),
        )?;
        let rows = embedding_batch(&response, texts.len())?;
        let mut out = Vec::with_capacity(rows.len());
        let mut dim_seen: Option<usize> = None;
        for (pos, row) in rows.into_iter().enumerate() {
            match dim_seen {
                None => dim_seen = Some(row.len()),
                Some(d) if d != row.len() => {
                    return Err(Error::Integrity(format!(
                        "embedding batch mixes dimensions {d} and {} at position {pos}",
                        row.len()
                    )));
                }
                Some(_) => {}
            }
            let vector = crate::stance::EmbeddingVector::new(row)?;
            let vector = if (vector.norm() - 1.0).abs() < UNIT_NORM_TOLERANCE {
                vector
            } else {
                vector.unit()?
            };
            out.push(vector);
        }
        Ok(out)
    }

    // -----------------------------------------------------------------
    // Frame classification
    // -----------------------------------------------------------------

    /// Classify headlines into frame sets, batching requests. Replies the
    /// parser cannot use are re-requested once for remote backends, then
    /// degraded to `{Other}` with a warning.
    pub fn classify_frames(
        &self,
        topic_name: &str,
        headlines: &[String],
    ) -> Result<Vec<BTreeSet<Frame>>> {
        let backend = self.backends.frames.clone();
        let mut out = Vec::with_capacity(headlines.len());
        for chunk in headlines.chunks(FRAMES_BATCH_LIMIT) {
            out.extend(self.classify_frames_batch(&backend, topic_name, chunk)?);
        }
        Ok(out)
    }

    fn classify_frames_batch(
        &self,
        backend: &BackendSpec,
        topic_name: &str,
        chunk: &[String],
    ) -> Result<Vec<BTreeSet<Frame>>> {
        let prompt = frames_prompt(topic_name, chunk);
        let key_model = backend.key_model(builtin::FRAMES_ID);
        let payload = json!({
            "model": key_model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0.0,
            "max_tokens": 400,
        });
        let chunk_owned = chunk.to_vec();
        let compute = move || {
            Ok(builtin::chat_response(
                builtin::FRAMES_ID,
                &builtin::frames_reply_text(&chunk_owned),
            ))
        };
        let response = self.call(
            CallKind::Frames,
            backend,
            &key_model,
            payload.clone(),
            None,
            builtin::FRAMES_ID,
            compute,
        )?;

        if let Some(sets) = self.usable_frame_reply(&response, chunk) {
            return Ok(sets);
        }

        // One fresh request may fix a malformed remote reply; a local reply
        // is deterministic and replay has nothing else recorded.
        if self.mode == Mode::Live && !backend.is_builtin() {
            let chunk_owned = chunk.to_vec();
            let retry_compute = move || {
                Ok(builtin::chat_response(
                    builtin::FRAMES_ID,
                    &builtin::frames_reply_text(&chunk_owned),
                ))
            };
            let response = self.invoke_and_record(
                CallKind::Frames,
                backend,
                &key_model,
                payload,
                None,
                builtin::FRAMES_ID,
                retry_compute,
            )?;
            if let Some(sets) = self.usable_frame_reply(&response, chunk) {
                return Ok(sets);
            }
        }

        self.warn(format!(
            "frame classifier reply unusable for a batch of {} headlines; marking all as Other",
            chunk.len()
        ));
        Ok(vec![other_only(); chunk.len()])
    }

    fn usable_frame_reply(
        &self,
        response: &Value,
        chunk: &[String],
    ) -> Option<Vec<BTreeSet<Frame>>> {
        let content = chat_content(response).ok()?;
        let (sets, warnings) = parse_frames_reply(&content, chunk.len())?;
        for w in warnings {
            self.warn(w);
        }
        Some(sets)
    }

    // -----------------------------------------------------------------
    // Entity tagging
    // -----------------------------------------------------------------

    /// Tag entity mentions in one headline. Tagger failures degrade to an
    /// empty mention list with a warning rather than failing the run.
    pub fn extract_entities(&self, headline: &str) -> Result<Vec<TaggedSpan>> {
        let backend = self.backends.entities.clone();
        let key_model = backend.key_model(builtin::ENTITIES_ID);
        let payload = json!({"model": key_model, "input": headline});
        let headline_owned = headline.to_string();
        let compute =
            move || Ok(builtin::entities_response(&builtin::tag_entities(&headline_owned)));
        let response = match self.call(
            CallKind::Entities,
            &backend,
            &key_model,
            payload,
            None,
            builtin::ENTITIES_ID,
            compute,
        ) {
            Ok(response) => response,
            Err(e @ (Error::Transport { .. } | Error::Parse(_))) => {
                self.warn(format!("entity tagger failed ({e}); keeping no mentions"));
                return Ok(Vec::new());
            }
            Err(e) => return Err(e),
        };
        match parse_entities(&response, headline) {
            Ok(spans) => Ok(spans),
            Err(e) => {
                self.warn(format!("entity tagger reply unusable ({e}); keeping no mentions"));
                Ok(Vec::new())
            }
        }
    }

    // -----------------------------------------------------------------
    // Target sentiment
    // -----------------------------------------------------------------

    /// Polarity of the language aimed at one entity mention. The surface
    /// must occur in the headline.
    pub fn target_sentiment(&self, headline: &str, entity_surface: &str) -> Result<Polarity> {
        if entity_surface.is_empty() || !headline.contains(entity_surface) {
            return Err(Error::Precondition(format!(
                "sentiment target {entity_surface:?} does not occur in the headline"
            )));
        }
        let backend = self.backends.sentiment.clone();
        let key_model = backend.key_model(builtin::SENTIMENT_ID);
        let payload = json!({
            "model": key_model,
            "input": headline,
            "target": entity_surface,
        });
        let headline_owned = headline.to_string();
        let surface_owned = entity_surface.to_string();
        let compute = move || {
            let polarity = builtin::target_sentiment(&headline_owned, &surface_owned)
                .ok_or_else(|| {
                    Error::Precondition("sentiment target lost before scoring".to_string())
                })?;
            Ok(builtin::label_response(polarity.as_str()))
        };
        let response = self.call(
            CallKind::Sentiment,
            &backend,
            &key_model,
            payload,
            None,
            builtin::SENTIMENT_ID,
            compute,
        )?;
        match parse_polarity(&response) {
            Some(p) => Ok(p),
            None => {
                self.warn(format!(
                    "sentiment reply unusable for target {entity_surface:?}; recording neutral"
                ));
                Ok(Polarity::Neutral)
            }
        }
    }

    // -----------------------------------------------------------------
    // Media bias
    // -----------------------------------------------------------------

    /// Whether one headline reads as biased. Failures propagate so the
    /// caller can exclude the headline from rate denominators.
    pub fn classify_media_bias(&self, headline: &str) -> Result<MediaBiasLabel> {
        let backend = self.backends.media_bias.clone();
        let key_model = backend.key_model(builtin::MEDIA_BIAS_ID);
        let payload = json!({"model": key_model, "input": headline});
        let headline_owned = headline.to_string();
        let compute = move || {
            let label = if builtin::is_loaded(&headline_owned) {
                "biased"
            } else {
                "unbiased"
            };
            Ok(builtin::label_response(label))
        };
        let response = self.call(
            CallKind::MediaBias,
            &backend,
            &key_model,
            payload,
            None,
            builtin::MEDIA_BIAS_ID,
            compute,
        )?;
        parse_media_bias(&response).ok_or_else(|| {
            Error::Parse("media bias reply carries no biased/unbiased label".to_string())
        })
    }
}

// ---------------------------------------------------------------------
// Reply parsing
// ---------------------------------------------------------------------

fn chat_content(response: &Value) -> Result<String> {
    let choice = response
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| Error::Parse("chat response has no choices".to_string()))?;
    if let Some(content) = choice.pointer("/message/content").and_then(Value::as_str) {
        return Ok(content.to_string());
    }
    if let Some(text) = choice.get("text").and_then(Value::as_str) {
        return Ok(text.to_string());
    }
    Err(Error::Parse("chat choice carries no text content".to_string()))
}

fn embedding_batch(response: &Value, expected: usize) -> Result<Vec<Vec<f64>>> {
    let data = response
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Parse("embedding response has no data array".to_string()))?;
    if data.len() != expected {
        return Err(Error::Parse(format!(
            "embedding response carries {} rows for {} inputs",
            data.len(),
            expected
        )));
    }
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::with_capacity(data.len());
    for (pos, item) in data.iter().enumerate() {
        let index = item
            .get("index")
            .and_then(Value::as_u64)
            .map(|i| i as usize)
            .unwrap_or(pos);
        let raw = item
            .get("embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Parse(format!("embedding row {pos} has no vector")))?;
        let mut vector = Vec::with_capacity(raw.len());
        for x in raw {
            vector.push(x.as_f64().ok_or_else(|| {
                Error::Parse(format!("embedding row {pos} holds a non-numeric value"))
            })?);
        }
        rows.push((index, vector));
    }
    rows.sort_by_key(|r| r.0);
    if rows.iter().enumerate().any(|(i, r)| r.0 != i) {
        return Err(Error::Parse(
            "embedding response indices are not a permutation of the batch".to_string(),
        ));
    }
    Ok(rows.into_iter().map(|r| r.1).collect())
}

fn other_only() -> BTreeSet<Frame> {
    let mut set = BTreeSet::new();
    set.insert(Frame::Other);
    set
}

/// The classifier prompt for one batch: the class list, the numbered
/// headlines, and the instruction naming the topic.
pub fn frames_prompt(topic_name: &str, headlines: &[String]) -> String {
    let classes: Vec<String> = Frame::ALL.iter().map(|f| format!("'{}'", f.label())).collect();
    let mut prompt = format!("Classes: [{}]\nHeadlines:\n", classes.join(", "));
    for (i, h) in headlines.iter().enumerate() {
        prompt.push_str(&format!("{}. {}\n", i + 1, h));
    }
    prompt.push_str(&format!(
        "Categorize each headline related to {topic_name} into one or more of the \
         above-predefined classes. Format outputs as \"Classes: []\" and only output categories."
    ));
    prompt
}

/// Split a bracketed class list on commas outside quotes, stripping quotes
/// from each item. Handles the one class label that itself contains a comma.
fn split_class_list(inner: &str) -> Vec<String> {
    let mut items = Vec::new();
    let mut current = String::new();
    let mut quote: Option<char> = None;
    for c in inner.chars() {
        match quote {
            Some(q) if c == q => quote = None,
            Some(_) => current.push(c),
            None if c == '\'' || c == '"' => quote = Some(c),
            None if c == ',' => {
                items.push(std::mem::take(&mut current));
            }
            None => current.push(c),
        }
    }
    items.push(current);
    items
        .into_iter()
        .map(|i| i.trim().to_string())
        .filter(|i| !i.is_empty())
        .collect()
}

/// Parse one `Classes: [...]` occurrence from a reply line, returning the
/// optional leading headline number and the listed labels.
fn parse_classes_line(line: &str) -> Option<(Option<usize>, Vec<String>)> {
    let at = line.find("Classes:")?;
    let prefix = line[..at].trim().trim_end_matches(['.', ')', ':']).trim();
    let index = if prefix.is_empty() {
        None
    } else {
        prefix.parse::<usize>().ok()
    };
    if !prefix.is_empty() && index.is_none() {
        return None;
    }
    let rest = &line[at + "Classes:".len()..];
    let open = rest.find('[')?;
    let close = rest.rfind(']')?;
    if close < open {
        return None;
    }
    Some((index, split_class_list(&rest[open + 1..close])))
}

/// Interpret a classifier reply for a batch of `n` headlines. Returns the
/// per-headline frame sets plus warnings for degraded entries, or `None`
/// when the reply carries nothing attributable.
fn parse_frames_reply(content: &str, n: usize) -> Option<(Vec<BTreeSet<Frame>>, Vec<String>)> {
    let mut slots: Vec<Option<Vec<String>>> = vec![None; n];
    let mut parsed_any = false;
    let mut cursor = 0usize;
    for line in content.lines() {
        let Some((index, labels)) = parse_classes_line(line) else {
            continue;
        };
        parsed_any = true;
        let slot = match index {
            Some(i) if i >= 1 && i <= n => i - 1,
            Some(_) => continue,
            None => {
                while cursor < n && slots[cursor].is_some() {
                    cursor += 1;
                }
                if cursor == n {
                    continue;
                }
                cursor
            }
        };
        if slots[slot].is_none() {
            slots[slot] = Some(labels);
        }
    }
    if !parsed_any {
        return None;
    }

    let mut warnings = Vec::new();
    let mut sets = Vec::with_capacity(n);
    for (i, slot) in slots.into_iter().enumerate() {
        match slot {
            None => {
                warnings.push(format!(
                    "classifier reply skipped headline {}; marking it Other",
                    i + 1
                ));
                sets.push(other_only());
            }
            Some(labels) => {
                let mut set = BTreeSet::new();
                let mut unknown = None;
                for label in &labels {
                    match Frame::from_label(label) {
                        Ok(frame) => {
                            set.insert(frame);
                        }
                        Err(_) => {
                            unknown = Some(label.clone());
                            break;
                        }
                    }
                }
                if let Some(label) = unknown {
                    warnings.push(format!(
                        "classifier reply names unknown class {label:?} for headline {}; \
                         marking it Other",
                        i + 1
                    ));
                    sets.push(other_only());
                } else if set.is_empty() {
                    sets.push(other_only());
                } else {
                    sets.push(set);
                }
            }
        }
    }
    Some((sets, warnings))
}

fn parse_entities(response: &Value, headline: &str) -> Result<Vec<TaggedSpan>> {
    let raw = response
        .get("entities")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Parse("entity response has no entities array".to_string()))?;
    let mut spans: Vec<TaggedSpan> = Vec::with_capacity(raw.len());
    for item in raw {
        let surface = item
            .get("surface")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Parse("entity mention lacks a surface".to_string()))?;
        let entity_type = serde_json::from_value(
            item.get("entity_type")
                .cloned()
                .ok_or_else(|| Error::Parse("entity mention lacks a type".to_string()))?,
        )?;
        let start = item.get("start").and_then(Value::as_u64).unwrap_or(0) as usize;
        let end = item.get("end").and_then(Value::as_u64).unwrap_or(0) as usize;
        if headline.get(start..end) != Some(surface) {
            return Err(Error::Parse(format!(
                "entity span {start}..{end} does not slice to {surface:?}"
            )));
        }
        if let Some(prev) = spans.last() {
            if start < prev.end {
                return Err(Error::Parse("entity spans overlap or are unordered".to_string()));
            }
        }
        spans.push(TaggedSpan {
            surface: surface.to_string(),
            entity_type,
            start,
            end,
        });
    }
    Ok(spans)
}

fn clean_label(response: &Value) -> Option<String> {
    let raw = match response.get("label").and_then(Value::as_str) {
        Some(label) => label.to_string(),
        None => chat_content(response).ok()?,
    };
    let cleaned: String = raw
        .trim()
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase();
    Some(cleaned)
}

fn parse_polarity(response: &Value) -> Option<Polarity> {
    match clean_label(response)?.as_str() {
        "positive" => Some(Polarity::Positive),
        "negative" => Some(Polarity::Negative),
        "neutral" => Some(Polarity::Neutral),
        _ => None,
    }
}

fn parse_media_bias(response: &Value) -> Option<MediaBiasLabel> {
    match clean_label(response)?.as_str() {
        "biased" => Some(MediaBiasLabel::Biased),
        "unbiased" => Some(MediaBiasLabel::Unbiased),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SamplingParams;

    fn live_gateway(dir: &Path) -> Gateway {
        Gateway::new(Mode::Live, dir, AnalysisBackends::default()).unwrap()
    }

    fn strs(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn generate_returns_parseable_text_and_caches() {
        let dir = tempfile::tempdir().unwrap();
        let gw = live_gateway(dir.path());
        let prompt = "Write 10 news headlines about the topic of \"Gun Control\". \
                      Separate each with a tag 'Title:'.";
        let params = SamplingParams { temperature: 1.0, max_tokens: 512, seed: 42 };
        let first = gw.generate(&BUILTIN, "mock-a", prompt, &params).unwrap();
        let second = gw.generate(&BUILTIN, "mock-a", prompt, &params).unwrap();
        assert_eq!(first, second);
        assert_eq!(gw.network_ops(), 0);
        assert_eq!(gw.used_keys().len(), 1);
        assert_eq!(
            crate::corpus::parse_headlines(&first, "Title:").unwrap().len(),
            10
        );
    }

    #[test]
    fn generate_varies_with_seed_and_model() {
        let dir = tempfile::tempdir().unwrap();
        let gw = live_gateway(dir.path());
        let prompt = "Write 10 news headlines about the topic of \"Gun Control\". \
                      Separate each with a tag 'Title:'.";
        let a = gw
            .generate(&BUILTIN, "m", prompt, &SamplingParams { seed: 1, ..base_params() })
            .unwrap();
        let b = gw
            .generate(&BUILTIN, "m", prompt, &SamplingParams { seed: 2, ..base_params() })
            .unwrap();
        let c = gw
            .generate(&BUILTIN, "n", prompt, &SamplingParams { seed: 1, ..base_params() })
            .unwrap();
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(gw.used_keys().len(), 3);
    }

    fn base_params() -> SamplingParams {
        SamplingParams { temperature: 1.0, max_tokens: 512, seed: 0 }
    }

    #[test]
    fn generate_rejects_empty_prompt() {
        let dir = tempfile::tempdir().unwrap();
        let gw = live_gateway(dir.path());
        let err = gw.generate(&BUILTIN, "m", "", &base_params()).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn embed_returns_unit_vectors_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let gw = live_gateway(dir.path());
        let texts = strs(&["gun control vote", "court ruling on guns", "gun control vote"]);
        let vectors = gw.embed(&texts).unwrap();
        assert_eq!(vectors.len(), 3);
        assert_eq!(vectors[0], vectors[2]);
        assert_ne!(vectors[0], vectors[1]);
        for v in &vectors {
            assert!((v.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn embed_rejects_empty_text() {
        let dir = tempfile::tempdir().unwrap();
        let gw = live_gateway(dir.path());
        let err = gw.embed(&strs(&["fine", "  "])).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
        assert!(gw.embed(&[]).unwrap().is_empty());
    }

    #[test]
    fn replay_serves_recorded_envelopes_only() {
        let dir = tempfile::tempdir().unwrap();
        let texts = strs(&["same text"]);
        let live = live_gateway(dir.path());
        let recorded = live.embed(&texts).unwrap();

        let replay = Gateway::new(Mode::Replay, dir.path(), AnalysisBackends::default()).unwrap();
        let replayed = replay.embed(&texts).unwrap();
        assert_eq!(recorded, replayed);
        assert_eq!(replay.network_ops(), 0);

        let err = replay.embed(&strs(&["never recorded"])).unwrap_err();
        match err {
            Error::MissingArtifact(msg) => assert!(msg.contains("embed"), "{msg}"),
            other => panic!("expected missing artifact, got {other:?}"),
        }
    }

    #[test]
    fn frames_prompt_lists_all_classes_and_headlines() {
        let prompt = frames_prompt("Gun Control", &strs(&["First Headline", "Second One"]));
        for frame in Frame::ALL {
            assert!(prompt.contains(&format!("'{}'", frame.label())), "{}", frame.label());
        }
        assert!(prompt.contains("1. First Headline\n"));
        assert!(prompt.contains("2. Second One\n"));
        assert!(prompt.contains("related to Gun Control"));
        assert!(prompt.contains("Format outputs as \"Classes: []\""));
    }

    #[test]
    fn classify_frames_batches_and_maps_every_headline() {
        let dir = tempfile::tempdir().unwrap();
        let gw = live_gateway(dir.path());
        let headlines: Vec<String> = (0..12)
            .map(|i| format!("Court Ruling {i} Reshapes Tax Policy"))
            .collect();
        let sets = gw.classify_frames("Gun Control", &headlines).unwrap();
        assert_eq!(sets.len(), 12);
        for set in &sets {
            assert!(set.contains(&Frame::ConstitutionalityAndJurisprudence));
            assert!(set.contains(&Frame::Economic));
        }
        assert_eq!(gw.used_keys().len(), 2);
    }

    #[test]
    fn classify_frames_maps_blank_headline_to_other() {
        let dir = tempfile::tempdir().unwrap();
        let gw = live_gateway(dir.path());
        let sets = gw
            .classify_frames("Gun Control", &strs(&["Entirely Bland Words"]))
            .unwrap();
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0], other_only());
    }

    #[test]
    fn parse_frames_reply_reads_indexed_lines() {
        let content = "1. Classes: ['Economic', 'Political']\n2. Classes: []\n";
        let (sets, warnings) = parse_frames_reply(content, 2).unwrap();
        assert!(warnings.is_empty());
        assert!(sets[0].contains(&Frame::Economic));
        assert!(sets[0].contains(&Frame::Political));
        assert_eq!(sets[1], other_only());
    }

    #[test]
    fn parse_frames_reply_handles_comma_inside_quoted_label() {
        let content = "Classes: ['Law and order, crime and justice', 'Health and safety']";
        let (sets, warnings) = parse_frames_reply(content, 1).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(sets[0].len(), 2);
        assert!(sets[0].contains(&Frame::LawAndOrderCrimeAndJustice));
        assert!(sets[0].contains(&Frame::HealthAndSafety));
    }

    #[test]
    fn parse_frames_reply_degrades_unknown_labels() {
        let content = "1. Classes: ['Economics']\n2. Classes: ['Morality']\n";
        let (sets, warnings) = parse_frames_reply(content, 2).unwrap();
        assert_eq!(sets[0], other_only());
        assert!(sets[1].contains(&Frame::Morality));
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("Economics"));
    }

    #[test]
    fn parse_frames_reply_fills_missing_lines_with_other() {
        let content = "2. Classes: ['Political']\n";
        let (sets, warnings) = parse_frames_reply(content, 2).unwrap();
        assert_eq!(sets[0], other_only());
        assert!(sets[1].contains(&Frame::Political));
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn parse_frames_reply_rejects_content_free_text() {
        assert!(parse_frames_reply("I cannot categorize these.", 2).is_none());
    }

    #[test]
    fn parse_frames_reply_handles_unindexed_lines_in_order() {
        let content = "Classes: ['Economic']\nClasses: ['Morality']\n";
        let (sets, warnings) = parse_frames_reply(content, 2).unwrap();
        assert!(warnings.is_empty());
        assert!(sets[0].contains(&Frame::Economic));
        assert!(sets[1].contains(&Frame::Morality));
    }

    #[test]
    fn extract_entities_returns_validated_spans() {
        let dir = tempfile::tempdir().unwrap();
        let gw = live_gateway(dir.path());
        let headline = "Supreme Court Rules in Favor of Same-Sex Marriage";
        let spans = gw.extract_entities(headline).unwrap();
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].surface, "Supreme Court");
        assert_eq!(&headline[spans[0].start..spans[0].end], "Supreme Court");
        assert!(gw.warnings().is_empty());
    }

    #[test]
    fn target_sentiment_enforces_surface_presence() {
        let dir = tempfile::tempdir().unwrap();
        let gw = live_gateway(dir.path());
        let err = gw
            .target_sentiment("Quiet Day in Markets", "Congress")
            .unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));

        let p = gw
            .target_sentiment("Critics Slam Congress Over Failure to Act", "Congress")
            .unwrap();
        assert_eq!(p, Polarity::Negative);
    }

    #[test]
    fn media_bias_labels_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let gw = live_gateway(dir.path());
        assert_eq!(
            gw.classify_media_bias("Senator Slams Radical Proposal").unwrap(),
            MediaBiasLabel::Biased
        );
        assert_eq!(
            gw.classify_media_bias("Senate Schedules Vote on Proposal").unwrap(),
            MediaBiasLabel::Unbiased
        );
    }

    #[test]
    fn backend_spec_parses_builtin_string_and_endpoint_table() {
        let spec: BackendSpec = serde_json::from_str("\"builtin\"").unwrap();
        assert!(spec.is_builtin());
        let spec: BackendSpec = serde_json::from_str(
            r#"{"base_url": "http://h/v1", "model_name": "m"}"#,
        )
        .unwrap();
        assert!(!spec.is_builtin());

        let backends: AnalysisBackends = serde_json::from_str(
            r#"{"embed": "builtin", "frames": {"base_url": "http://h/v1", "model_name": "m"}}"#,
        )
        .unwrap();
        assert!(backends.embed.is_builtin());
        assert!(!backends.frames.is_builtin());
        assert!(backends.entities.is_builtin());
    }

    #[test]
    fn toml_round_trip_for_backends() {
        let text = "embed = \"builtin\"\n\n[frames]\nbase_url = \"http://h/v1\"\nmodel_name = \"m\"\n";
        let backends: AnalysisBackends = toml::from_str(text).unwrap();
        assert!(backends.embed.is_builtin());
        assert!(!backends.frames.is_builtin());
    }

    #[test]
    fn envelope_files_use_cache_key_names() {
        let dir = tempfile::tempdir().unwrap();
        let gw = live_gateway(dir.path());
        gw.embed(&strs(&["one text"])).unwrap();
        let keys = gw.used_keys();
        assert_eq!(keys.len(), 1);
        let path = dir.path().join(format!("{}.json", keys[0]));
        assert!(path.is_file());
        let envelope: Envelope =
            serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
        assert_eq!(envelope.backend_id, builtin::EMBED_ID);
        assert_eq!(envelope.request["input"][0], "one text");
    }
}
