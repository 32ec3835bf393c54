//! Deterministic local backends.
//!
//! Each function here produces a response in the exact wire format the
//! corresponding remote service would return, so the caching, replay, and
//! parsing layers treat local and remote backends identically. All outputs
//! are pure functions of their inputs (plus an explicit seed for the
//! generator), which makes recorded runs reproducible byte for byte.

use rand::seq::IndexedRandom as _;
use rand::Rng as _;
use serde_json::{json, Value};

use crate::framing::{EntityType, Frame};
use crate::seed::indexed_rng;
use crate::style::Polarity;

pub const GENERATE_ID: &str = "builtin:generate:synth-v1";
pub const EMBED_ID: &str = "builtin:embed:fnv1a-v1";
pub const FRAMES_ID: &str = "builtin:frames:lexicon-v1";
pub const ENTITIES_ID: &str = "builtin:entities:gazetteer-v1";
pub const SENTIMENT_ID: &str = "builtin:sentiment:cues-v1";
pub const MEDIA_BIAS_ID: &str = "builtin:media_bias:lexicon-v1";

pub const EMBED_DIM: usize = 256;

// ---------------------------------------------------------------------------
// Text feature embedder
// ---------------------------------------------------------------------------

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Signed feature-hash embedding over word unigrams and bigrams, scaled to
/// unit length. Texts sharing vocabulary land close in cosine similarity.
pub fn embed_text(text: &str, dim: usize) -> Vec<f64> {
    assert!(dim > 0, "embedding dimension must be positive");
    let tokens = tokenize(text);
    let mut v = vec![0.0f64; dim];
    let mut add = |feature: &str| {
        let h = fnv1a64(feature.as_bytes());
        let idx = (h % dim as u64) as usize;
        let sign = if h & (1 << 63) == 0 { 1.0 } else { -1.0 };
        v[idx] += sign;
    };
    for t in &tokens {
        add(&format!("u:{t}"));
    }
    for pair in tokens.windows(2) {
        add(&format!("b:{} {}", pair[0], pair[1]));
    }
    add("bias");
    let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        v[0] = 1.0;
    } else {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

pub fn embed_response(model: &str, texts: &[String], dim: usize) -> Value {
    let data: Vec<Value> = texts
        .iter()
        .enumerate()
        .map(|(i, t)| json!({"index": i, "embedding": embed_text(t, dim)}))
        .collect();
    json!({"object": "list", "model": model, "data": data})
}

// ---------------------------------------------------------------------------
// Term matching shared by the lexicon backends
// ---------------------------------------------------------------------------

/// Whether `[start, end)` sits on word boundaries: no letter or digit
/// immediately before `start` or at `end`.
fn on_word_boundaries(text: &str, start: usize, end: usize) -> bool {
    let clear_before = text[..start]
        .chars()
        .next_back()
        .is_none_or(|c| !c.is_alphanumeric());
    let clear_after = text[end..].chars().next().is_none_or(|c| !c.is_alphanumeric());
    clear_before && clear_after
}

/// Case-insensitive whole-word (or whole-phrase) containment.
fn contains_term(lower_text: &str, term: &str) -> bool {
    let mut from = 0;
    while let Some(pos) = lower_text[from..].find(term) {
        let start = from + pos;
        let end = start + term.len();
        if on_word_boundaries(lower_text, start, end) {
            return true;
        }
        from = start + 1;
    }
    false
}

// ---------------------------------------------------------------------------
// Frame classifier
// ---------------------------------------------------------------------------

const FRAME_LEXICON: &[(Frame, &[&str])] = &[
    (
        Frame::Economic,
        &[
            "economy", "economic", "tax", "taxes", "cost", "costs", "costly", "price",
            "prices", "jobs", "market", "budget", "funding", "wages", "inflation",
            "trade", "business",
        ],
    ),
    (
        Frame::CapacityAndResources,
        &[
            "shortage", "capacity", "resources", "infrastructure", "supply", "staffing",
            "overcrowded", "underfunded",
        ],
    ),
    (
        Frame::Morality,
        &[
            "moral", "morality", "immoral", "ethical", "ethics", "sin", "faith",
            "religious", "sacred", "pope", "church", "conscience",
        ],
    ),
    (
        Frame::FairnessAndEquality,
        &[
            "equality", "equal", "unequal", "fairness", "fair", "unfair",
            "discrimination", "inequality", "disparity", "civil rights",
        ],
    ),
    (
        Frame::ConstitutionalityAndJurisprudence,
        &[
            "constitution", "constitutional", "unconstitutional", "court", "courts",
            "ruling", "judge", "judges", "legal", "lawsuit", "amendment", "justices",
        ],
    ),
    (
        Frame::PolicyPrescriptionAndEvaluation,
        &[
            "policy", "plan", "proposal", "reform", "bill", "legislation",
            "regulation", "measure", "repeal",
        ],
    ),
    (
        Frame::LawAndOrderCrimeAndJustice,
        &[
            "crime", "criminal", "police", "prison", "arrest", "sentencing",
            "execution", "murder", "enforcement", "crackdown", "offenders",
        ],
    ),
    (
        Frame::SecurityAndDefense,
        &[
            "security", "defense", "military", "war", "terror", "terrorism",
            "border", "threat", "threatens", "troops", "invasion",
        ],
    ),
    (
        Frame::HealthAndSafety,
        &[
            "health", "safety", "unsafe", "medical", "disease", "hospital",
            "doctors", "epidemic", "deaths", "deadly", "overdose", "vaccine",
        ],
    ),
    (
        Frame::QualityOfLife,
        &[
            "quality of life", "community", "communities", "families", "wellbeing",
            "livelihoods", "neighborhood", "standard of living",
        ],
    ),
    (
        Frame::CulturalIdentity,
        &[
            "culture", "cultural", "identity", "tradition", "traditional",
            "heritage", "way of life",
        ],
    ),
    (
        Frame::PublicOpinion,
        &[
            "poll", "polls", "survey", "public opinion", "voters", "majority",
            "supporters", "opponents", "protest", "protests", "rally", "backlash",
        ],
    ),
    (
        Frame::Political,
        &[
            "election", "campaign", "senate", "congress", "republican",
            "republicans", "democrat", "democrats", "president", "political",
            "lawmakers", "governor", "vote", "veto", "bipartisan",
        ],
    ),
    (
        Frame::ExternalRegulationAndReputation,
        &[
            "international", "global", "united nations", "sanctions", "treaty",
            "foreign", "world leaders", "reputation", "allies",
        ],
    ),
];

/// All frames whose lexicon matches the headline, in class order. An empty
/// result means no frame fired; the caller decides how to represent that.
pub fn classify_headline_frames(headline: &str) -> Vec<Frame> {
    let lower = headline.to_lowercase();
    FRAME_LEXICON
        .iter()
        .filter(|(_, terms)| terms.iter().any(|t| contains_term(&lower, t)))
        .map(|(frame, _)| *frame)
        .collect()
}

fn quote_label(label: &str) -> String {
    format!("'{label}'")
}

/// Reply text in the shape the classifier prompt requests: one
/// `N. Classes: [...]` line per headline, in input order.
pub fn frames_reply_text(headlines: &[String]) -> String {
    let mut out = String::new();
    for (i, headline) in headlines.iter().enumerate() {
        let frames = classify_headline_frames(headline);
        let listed: Vec<String> = frames.iter().map(|f| quote_label(f.label())).collect();
        out.push_str(&format!("{}. Classes: [{}]\n", i + 1, listed.join(", ")));
    }
    out
}

pub fn chat_response(model: &str, content: &str) -> Value {
    json!({
        "model": model,
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}}],
    })
}

// ---------------------------------------------------------------------------
// Entity tagger
// ---------------------------------------------------------------------------

const GAZETTEER: &[(&str, EntityType)] = &[
    ("Joe Biden", EntityType::Per),
    ("Biden", EntityType::Per),
    ("Donald Trump", EntityType::Per),
    ("Trump", EntityType::Per),
    ("Barack Obama", EntityType::Per),
    ("Obama", EntityType::Per),
    ("Kamala Harris", EntityType::Per),
    ("Pope Francis", EntityType::Per),
    ("Xi Jinping", EntityType::Per),
    ("Vladimir Putin", EntityType::Per),
    ("Putin", EntityType::Per),
    ("Volodymyr Zelensky", EntityType::Per),
    ("Zelensky", EntityType::Per),
    ("Greta Thunberg", EntityType::Per),
    ("Elon Musk", EntityType::Per),
    ("Supreme Court", EntityType::Org),
    ("Congress", EntityType::Org),
    ("Senate", EntityType::Org),
    ("White House", EntityType::Org),
    ("United Nations", EntityType::Org),
    ("European Union", EntityType::Org),
    ("World Health Organization", EntityType::Org),
    ("Planned Parenthood", EntityType::Org),
    ("NRA", EntityType::Org),
    ("FDA", EntityType::Org),
    ("EPA", EntityType::Org),
    ("NATO", EntityType::Org),
    ("Pentagon", EntityType::Org),
    ("Facebook", EntityType::Org),
    ("Twitter", EntityType::Org),
    ("Meta", EntityType::Org),
    ("TikTok", EntityType::Org),
    ("United States", EntityType::Loc),
    ("US", EntityType::Loc),
    ("America", EntityType::Loc),
    ("Washington", EntityType::Loc),
    ("Texas", EntityType::Loc),
    ("California", EntityType::Loc),
    ("Florida", EntityType::Loc),
    ("China", EntityType::Loc),
    ("Russia", EntityType::Loc),
    ("Ukraine", EntityType::Loc),
    ("Europe", EntityType::Loc),
    ("Australia", EntityType::Loc),
    ("Japan", EntityType::Loc),
    ("South Korea", EntityType::Loc),
    ("Hong Kong", EntityType::Loc),
    ("UAE", EntityType::Loc),
    ("UK", EntityType::Loc),
    ("Obamacare", EntityType::Misc),
    ("Roe v. Wade", EntityType::Misc),
    ("Second Amendment", EntityType::Misc),
    ("First Amendment", EntityType::Misc),
    ("Paris Agreement", EntityType::Misc),
    ("Black Lives Matter", EntityType::Misc),
    ("Medicare", EntityType::Misc),
    ("Medicaid", EntityType::Misc),
];

/// One tagged mention with byte offsets into the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedSpan {
    pub surface: String,
    pub entity_type: EntityType,
    pub start: usize,
    pub end: usize,
}

/// Precision-oriented tagger: gazetteer phrases matched longest-first plus
/// standalone all-caps acronyms. Spans never overlap and arrive in text
/// order; each surface is the exact slice of the input.
pub fn tag_entities(text: &str) -> Vec<TaggedSpan> {
    let lower = text.to_lowercase();
    let mut claimed: Vec<(usize, usize)> = Vec::new();
    let mut spans: Vec<TaggedSpan> = Vec::new();
    let mut entries: Vec<&(&str, EntityType)> = GAZETTEER.iter().collect();
    entries.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(b.0)));

    let claim = |start: usize, end: usize, claimed: &mut Vec<(usize, usize)>| -> bool {
        if claimed.iter().any(|&(s, e)| start < e && s < end) {
            return false;
        }
        claimed.push((start, end));
        true
    };

    for (name, entity_type) in entries {
        let needle = name.to_lowercase();
        let mut from = 0;
        while let Some(pos) = lower[from..].find(&needle) {
            let start = from + pos;
            let end = start + needle.len();
            if on_word_boundaries(&lower, start, end) && claim(start, end, &mut claimed) {
                spans.push(TaggedSpan {
                    surface: text[start..end].to_string(),
                    entity_type: *entity_type,
                    start,
                    end,
                });
            }
            from = start + 1;
        }
    }

    // Unknown all-caps acronyms default to organizations.
    for (start, end) in word_spans(text) {
        let word = &text[start..end];
        if word.len() >= 2
            && word.len() <= 5
            && word.chars().all(|c| c.is_ascii_uppercase())
            && claim(start, end, &mut claimed)
        {
            spans.push(TaggedSpan {
                surface: word.to_string(),
                entity_type: EntityType::Org,
                start,
                end,
            });
        }
    }

    spans.sort_by_key(|s| s.start);
    spans
}

/// Byte ranges of the alphanumeric runs in `text`.
fn word_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            start.get_or_insert(i);
        } else if let Some(s) = start.take() {
            spans.push((s, i));
        }
    }
    if let Some(s) = start {
        spans.push((s, text.len()));
    }
    spans
}

pub fn entities_response(spans: &[TaggedSpan]) -> Value {
    let list: Vec<Value> = spans
        .iter()
        .map(|s| {
            json!({
                "surface": s.surface,
                "entity_type": s.entity_type,
                "start": s.start,
                "end": s.end,
            })
        })
        .collect();
    json!({"entities": list})
}

// ---------------------------------------------------------------------------
// Target sentiment
// ---------------------------------------------------------------------------

const POSITIVE_CUES: &[&str] = &[
    "celebrates", "celebrate", "victory", "hails", "hail", "praise", "praises",
    "wins", "win", "progress", "hope", "landmark", "historic", "protects",
    "protect", "support grows", "finally able", "relief", "breakthrough",
    "long overdue", "champions", "equality",
];

const NEGATIVE_CUES: &[&str] = &[
    "slams", "slam", "condemns", "condemn", "attack", "attacks", "crisis",
    "threat", "threatens", "ban", "bans", "fails", "failure", "outrage",
    "fears", "deadly", "cruel", "inhumane", "scandal", "abuse", "violence",
    "battle", "blasts", "disaster", "warns", "warn", "crackdown", "shameful",
    "radical", "overreach",
];

/// Polarity of the language aimed at `target` within `text`: cue words are
/// counted outside the target's own surface so the target never scores
/// itself. Requires the target to occur in the text.
pub fn target_sentiment(text: &str, target: &str) -> Option<Polarity> {
    let lower = text.to_lowercase();
    let target_lower = target.to_lowercase();
    if target_lower.is_empty() || !lower.contains(&target_lower) {
        return None;
    }
    let masked = lower.replace(&target_lower, &" ".repeat(target_lower.len()));
    let pos = POSITIVE_CUES
        .iter()
        .filter(|c| contains_term(&masked, c))
        .count();
    let neg = NEGATIVE_CUES
        .iter()
        .filter(|c| contains_term(&masked, c))
        .count();
    Some(match pos.cmp(&neg) {
        std::cmp::Ordering::Greater => Polarity::Positive,
        std::cmp::Ordering::Less => Polarity::Negative,
        std::cmp::Ordering::Equal => Polarity::Neutral,
    })
}

pub fn label_response(label: &str) -> Value {
    json!({"label": label})
}

// ---------------------------------------------------------------------------
// Media bias detector
// ---------------------------------------------------------------------------

const LOADED_LANGUAGE: &[&str] = &[
    "slams", "destroys", "shocking", "outrageous", "disgraceful", "radical",
    "extremist", "disaster", "catastrophic", "so-called", "shameful",
    "corrupt", "insane", "unhinged", "tyranny", "crooked", "cruel",
    "inhumane", "scandalous", "reckless", "desperate", "pathetic",
];

/// A headline is flagged as biased when it carries loaded language.
pub fn is_loaded(text: &str) -> bool {
    let lower = text.to_lowercase();
    LOADED_LANGUAGE.iter().any(|t| contains_term(&lower, t))
}

// ---------------------------------------------------------------------------
// Synthetic text generator
// ---------------------------------------------------------------------------

const ENTITY_POOL: &[&str] = &[
    "Supreme Court", "Congress", "White House", "Joe Biden", "Donald Trump",
    "United Nations", "Texas", "California", "Pope Francis", "Greta Thunberg",
    "Planned Parenthood", "Senate",
];

const SUPPORTIVE_TEMPLATES: &[&str] = &[
    "{entity} Hails {topic} Progress as Landmark Victory",
    "Supporters Celebrate {topic} Reform After Historic Vote",
    "New Poll Shows Growing Support for {topic}",
    "{entity} Says {topic} Plan Will Protect Families",
    "Advocates Praise {topic} Bill as Fair and Long Overdue",
    "{topic} Breakthrough Brings Hope to Communities",
    "{entity} Champions {topic} as a Win for Equality",
];

const CRITICAL_TEMPLATES: &[&str] = &[
    "{entity} Slams {topic} Push as Radical Overreach",
    "Critics Warn {topic} Plan Threatens Jobs and Safety",
    "Opponents Condemn {topic} Ruling as Shameful Failure",
    "{entity} Calls {topic} Proposal a Costly Disaster",
    "Protests Erupt Over {topic} Crackdown",
    "New Report Says {topic} Policy Fails Families",
    "{entity} Blasts {topic} Bill in Heated Senate Debate",
];

const DESCRIPTIVE_TEMPLATES: &[&str] = &[
    "{entity} to Review {topic} Policy Next Month",
    "Lawmakers Debate {topic} Legislation in Senate",
    "New Study Examines Economic Impact of {topic}",
    "{topic} Hearing Draws Crowds in Texas",
    "Experts Weigh Costs and Benefits of {topic}",
    "{entity} Schedules Vote on {topic} Measure",
];

fn extract_between<'a>(text: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let from = text.find(start)? + start.len();
    let len = text[from..].find(end)?;
    Some(&text[from..from + len])
}

/// The separator tag requested by a prompt of the corpus form, e.g.
/// `Title:` or `Pro-gun Title:`.
fn requested_tag(prompt: &str) -> String {
    extract_between(prompt, "with a tag '", "'")
        .unwrap_or("Title:")
        .to_string()
}

fn requested_topic(prompt: &str) -> String {
    extract_between(prompt, "the topic of \"", "\"")
        .or_else(|| extract_between(prompt, "the topic of ", "."))
        .unwrap_or("the News")
        .to_string()
}

/// The stance qualifier between "Write 10" and "news headlines", empty for
/// plain task prompts.
fn requested_stance(prompt: &str) -> String {
    extract_between(prompt, "Write 10 ", " news headlines")
        .unwrap_or("")
        .trim()
        .to_string()
}

fn stance_is_critical(stance: &str) -> bool {
    let lower = stance.to_lowercase();
    ["anti", "opponent", "denier", "against"]
        .iter()
        .any(|m| lower.contains(m))
}

/// How strongly a model favors supportive coverage when no stance is
/// requested, derived from the model name so distinct mock models show
/// distinct slants.
fn model_lean(model: &str) -> f64 {
    match fnv1a64(model.as_bytes()) % 3 {
        0 => 0.25,
        1 => 0.5,
        _ => 0.75,
    }
}

/// Deterministic mock completion for a corpus prompt: ten tagged headlines
/// drawn from stance-flavored template banks.
pub fn generate_text(model: &str, prompt: &str, seed: u64) -> String {
    let tag = requested_tag(prompt);
    let topic = requested_topic(prompt);
    let stance = requested_stance(prompt);
    let mut rng = indexed_rng(seed, &["synth", model], 0);

    let mut out = String::new();
    if rng.random_bool(0.25) {
        out.push_str("Here are 10 headlines:\n");
    }
    for _ in 0..10 {
        let bank: &[&str] = if stance.is_empty() {
            if rng.random_bool(0.2) {
                DESCRIPTIVE_TEMPLATES
            } else if rng.random_bool(model_lean(model)) {
                SUPPORTIVE_TEMPLATES
            } else {
                CRITICAL_TEMPLATES
            }
        } else if stance_is_critical(&stance) {
            CRITICAL_TEMPLATES
        } else {
            SUPPORTIVE_TEMPLATES
        };
        let template = bank.choose(&mut rng).expect("template banks are non-empty");
        let entity = ENTITY_POOL.choose(&mut rng).expect("entity pool is non-empty");
        let headline = template.replace("{entity}", entity).replace("{topic}", &topic);
        out.push_str(&format!("{tag} {headline}\n"));
    }
    out
}
