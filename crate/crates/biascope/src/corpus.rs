//! Topics, prompts, and parsing of raw generations into headline samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether a topic is a divisive policy question (stance analysis applies)
/// or a political event (framing/style analysis only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopicKind {
    Policy,
    Event,
}

/// Stance tags used to elicit the extreme anchor generations for a policy
/// topic. `pro_tag` elicits the proponent pole, `opp_tag` the opponent pole.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorTags {
    pub pro_tag: String,
    pub opp_tag: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicSpec {
    pub id: String,
    pub name: String,
    pub kind: TopicKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anchors: Option<AnchorTags>,
}

impl TopicSpec {
    pub fn policy(id: &str, name: &str, pro_tag: &str, opp_tag: &str) -> Self {
        TopicSpec {
            id: id.to_string(),
            name: name.to_string(),
            kind: TopicKind::Policy,
            anchors: Some(AnchorTags {
                pro_tag: pro_tag.to_string(),
                opp_tag: opp_tag.to_string(),
            }),
        }
    }

    pub fn event(id: &str, name: &str) -> Self {
        TopicSpec {
            id: id.to_string(),
            name: name.to_string(),
            kind: TopicKind::Event,
            anchors: None,
        }
    }

    pub fn is_policy(&self) -> bool {
        self.kind == TopicKind::Policy
    }

    fn validate(&self) -> Result<()> {
        match (self.kind, &self.anchors) {
            (TopicKind::Policy, None) => Err(Error::Config(format!(
                "policy topic '{}' is missing anchor stance tags",
                self.id
            ))),
            (TopicKind::Event, Some(_)) => Err(Error::Config(format!(
                "event topic '{}' must not carry anchor stance tags",
                self.id
            ))),
            (TopicKind::Policy, Some(tags)) => {
                if tags.pro_tag.is_empty() || tags.opp_tag.is_empty() {
                    Err(Error::Config(format!(
                        "topic '{}' has an empty anchor stance tag",
                        self.id
                    )))
                } else if tags.pro_tag == tags.opp_tag {
                    Err(Error::Config(format!(
                        "topic '{}' has identical pro/opp stance tags",
                        self.id
                    )))
                } else {
                    Ok(())
                }
            }
            (TopicKind::Event, None) => Ok(()),
        }
    }
}

/// The built-in corpus: ten policy topics with their stance-tag pairs plus
/// four political events. Note the tag orientation is per topic: for gun
/// control the proponent pole is "Anti-gun".
pub fn default_topics() -> Vec<TopicSpec> {
    vec![
        TopicSpec::policy(
            "reproductive-rights",
            "Reproductive Rights",
            "Pro-reproductive right",
            "Anti-reproductive right",
        ),
        TopicSpec::policy(
            "immigration",
            "Immigration",
            "Pro-immigration",
            "Anti-immigration",
        ),
        TopicSpec::policy("gun-control", "Gun Control", "Anti-gun", "Pro-gun"),
        TopicSpec::policy(
            "same-sex-marriage",
            "Same Sex Marriage",
            "Pro same-sex marriage",
            "Anti same-sex marriage",
        ),
        TopicSpec::policy(
            "death-penalty",
            "Death Penalty",
            "Death Penalty proponent",
            "Death Penalty opponent",
        ),
        TopicSpec::policy(
            "climate-change",
            "Climate Change",
            "Climate change advocate",
            "Climate change denier",
        ),
        TopicSpec::policy(
            "drug-price-regulation",
            "Drug Price Regularization",
            "Drug Price Regularisation supporter",
            "Drug Price Regularisation opponent",
        ),
        TopicSpec::policy(
            "public-education",
            "Public Education",
            "Pro Public Education",
            "Anti Public Education",
        ),
        TopicSpec::policy(
            "healthcare-reform",
            "Healthcare Reform",
            "Pro Healthcare Reform",
            "Anti Healthcare Reform",
        ),
        TopicSpec::policy(
            "social-media-regulation",
            "Social Media Regulation",
            "Pro Social Media Regulation",
            "Anti Social Media Regulation",
        ),
        TopicSpec::event("black-lives-matter", "Black Lives Matter"),
        TopicSpec::event("hong-kong-protest", "Hong Kong Protest"),
        TopicSpec::event("liancourt-rocks-dispute", "Liancourt Rocks dispute"),
        TopicSpec::event("russia-ukraine-war", "Russia Ukraine war"),
    ]
}

/// Resolves the topic list from a config document. `None` means the document
/// omitted topics entirely and the built-in defaults apply; an explicitly
/// empty list is a configuration error.
pub fn load_topics(configured: Option<Vec<TopicSpec>>) -> Result<Vec<TopicSpec>> {
    let topics = match configured {
        None => default_topics(),
        Some(list) if list.is_empty() => {
            return Err(Error::Config("no topics configured".to_string()))
        }
        Some(list) => list,
    };
    let mut seen = std::collections::BTreeSet::new();
    for topic in &topics {
        if topic.id.is_empty() || topic.name.is_empty() {
            return Err(Error::Config("topic with empty id or name".to_string()));
        }
        if !seen.insert(topic.id.clone()) {
            return Err(Error::Config(format!("duplicate topic id '{}'", topic.id)));
        }
        topic.validate()?;
    }
    Ok(topics)
}

/// Which pole a prompt elicits. `Neutral` is the plain task prompt; `Pro`
/// and `Opp` carry the topic's stance tag.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Neutral,
    Pro,
    Opp,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Neutral => "neutral",
            Condition::Pro => "pro",
            Condition::Opp => "opp",
        }
    }
}

/// A fully rendered prompt plus the separator tag its instructions announce,
/// which the parser later splits on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub rendered: String,
    pub condition: Condition,
    pub separator_tag: String,
}

/// Renders the headline-generation task prompt for a topic.
pub fn render_task_prompt(topic: &TopicSpec) -> PromptSpec {
    PromptSpec {
        rendered: format!(
            "Write 10 news headlines about the topic of \"{}\". Separate each with a tag 'Title:'.",
            topic.name
        ),
        condition: Condition::Neutral,
        separator_tag: "Title:".to_string(),
    }
}

/// Renders the anchor-elicitation prompt for one pole of a policy topic.
/// The stance tag appears both before "news headlines" and inside the
/// separator tag.
pub fn render_anchor_prompt(topic: &TopicSpec, side: Condition) -> Result<PromptSpec> {
    let tags = topic.anchors.as_ref().ok_or_else(|| {
        Error::Unsupported(format!(
            "anchor prompts are not defined for event topic '{}'",
            topic.id
        ))
    })?;
    let tag = match side {
        Condition::Pro => &tags.pro_tag,
        Condition::Opp => &tags.opp_tag,
        Condition::Neutral => {
            return Err(Error::Unsupported(
                "anchor prompts require a pro or opp side".to_string(),
            ))
        }
    };
    Ok(PromptSpec {
        rendered: format!(
            "Write 10 {tag} news headlines about the topic of {}. Separate each with a tag '{tag} Title:'.",
            topic.name
        ),
        condition: side,
        separator_tag: format!("{tag} Title:"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: u64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            temperature: 1.0,
            max_tokens: 512,
            seed: 0,
        }
    }
}

/// One raw model response. `(model_id, topic_id, condition, request_index)`
/// is unique within a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub model_id: String,
    pub topic_id: String,
    pub condition: Condition,
    pub request_index: u32,
    pub raw_text: String,
    pub sampling_params: SamplingParams,
    /// Set when the response yielded zero parseable headlines.
    #[serde(default)]
    pub parse_warning: bool,
}

/// One parsed headline sample, identified by its source record and position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Headline {
    #[serde(rename = "model")]
    pub model_id: String,
    #[serde(rename = "topic")]
    pub topic_id: String,
    pub condition: Condition,
    pub request_index: u32,
    pub position: u32,
    pub text: String,
}

/// Splits raw model output on every occurrence of the separator tag and
/// cleans each segment: whitespace trimmed, leading list markers ("1.",
/// "-", "•") removed, surrounding quote pairs stripped. Cleaning loops to a
/// fixpoint so re-parsing parsed output is the identity. Empty segments are
/// dropped; duplicates are kept, since repeats are part of the sampled
/// distribution.
pub fn parse_headlines(raw_text: &str, tag: &str) -> Result<Vec<String>> {
    if tag.is_empty() {
        return Err(Error::Precondition(
            "separator tag must be non-empty".to_string(),
        ));
    }
    let mut out = Vec::new();
    for segment in raw_text.split(tag) {
        let cleaned = clean_segment(segment);
        if !cleaned.is_empty() {
            out.push(cleaned);
        }
    }
    Ok(out)
}

/// Quote characters stripped only when they wrap the whole segment.
const QUOTE_PAIRS: &[(char, char)] = &[
    ('"', '"'),
    ('\'', '\''),
    ('\u{201c}', '\u{201d}'), // “ ”
    ('\u{2018}', '\u{2019}'), // ‘ ’
    ('«', '»'),
];

fn clean_segment(segment: &str) -> String {
    let mut text = segment.trim();
    loop {
        let before = text;
        text = strip_list_marker(text).trim_start();
        text = strip_surrounding_quotes(text);
        text = text.trim();
        if text == before {
            return text.to_string();
        }
    }
}

/// Removes one leading enumeration marker: digits followed by '.', ')' or
/// ':', or a single bullet character.
fn strip_list_marker(text: &str) -> &str {
    let digits = text.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &text[digits..];
        if let Some(stripped) = rest
            .strip_prefix('.')
            .or_else(|| rest.strip_prefix(')'))
            .or_else(|| rest.strip_prefix(':'))
        {
            // Require a break after the marker so "2024 Election" survives.
            if stripped.is_empty() || stripped.starts_with(char::is_whitespace) {
                return stripped;
            }
        }
        return text;
    }
    for bullet in ['-', '*', '•', '–'] {
        if let Some(stripped) = text.strip_prefix(bullet) {
            if stripped.is_empty() || stripped.starts_with(char::is_whitespace) {
                return stripped;
            }
        }
    }
    text
}

fn strip_surrounding_quotes(text: &str) -> &str {
    for &(open, close) in QUOTE_PAIRS {
        if let Some(inner) = text.strip_prefix(open).and_then(|t| t.strip_suffix(close)) {
            if !inner.is_empty() {
                return inner;
            }
        }
    }
    text
}

/// Builds [`Headline`] values for the cleaned segments of one record.
pub fn headlines_for_record(record: &GenerationRecord, tag: &str) -> Result<Vec<Headline>> {
    let texts = parse_headlines(&record.raw_text, tag)?;
    Ok(texts
        .into_iter()
        .enumerate()
        .map(|(position, text)| Headline {
            model_id: record.model_id.clone(),
            topic_id: record.topic_id.clone(),
            condition: record.condition,
            request_index: record.request_index,
            position: position as u32,
            text,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_topics_count_and_split() {
        let topics = load_topics(None).unwrap();
        assert_eq!(topics.len(), 14);
        let policy = topics.iter().filter(|t| t.is_policy()).count();
        assert_eq!(policy, 10);
        assert_eq!(topics.len() - policy, 4);
    }

    #[test]
    fn gun_control_carries_inverted_tags() {
        let topics = default_topics();
        let gun = topics.iter().find(|t| t.id == "gun-control").unwrap();
        let tags = gun.anchors.as_ref().unwrap();
        assert_eq!(tags.pro_tag, "Anti-gun");
        assert_eq!(tags.opp_tag, "Pro-gun");
    }

    #[test]
    fn empty_custom_list_is_an_error() {
        let err = load_topics(Some(vec![])).unwrap_err();
        assert!(matches!(err, Error::Config(msg) if msg.contains("no topics")));
    }

    #[test]
    fn duplicate_topic_id_is_an_error() {
        let t = TopicSpec::event("x", "X");
        let err = load_topics(Some(vec![t.clone(), t])).unwrap_err();
        assert!(matches!(err, Error::Config(msg) if msg.contains("duplicate")));
    }

    #[test]
    fn policy_topic_without_anchors_is_an_error() {
        let mut t = TopicSpec::policy("x", "X", "pro", "opp");
        t.anchors = None;
        assert!(load_topics(Some(vec![t])).is_err());
    }

    #[test]
    fn identical_stance_tags_are_an_error() {
        let t = TopicSpec::policy("x", "X", "same", "same");
        assert!(load_topics(Some(vec![t])).is_err());
    }

    #[test]
    fn task_prompt_matches_template() {
        let topic = TopicSpec::policy("climate-change", "Climate Change", "a", "b");
        let prompt = render_task_prompt(&topic);
        assert_eq!(
            prompt.rendered,
            "Write 10 news headlines about the topic of \"Climate Change\". Separate each with a tag 'Title:'."
        );
        assert_eq!(prompt.condition, Condition::Neutral);
        assert_eq!(prompt.separator_tag, "Title:");
    }

    #[test]
    fn task_prompt_keeps_quote_characters_verbatim() {
        let topic = TopicSpec::event("q", "The \"Q\" Debate");
        let prompt = render_task_prompt(&topic);
        assert!(prompt.rendered.contains("\"The \"Q\" Debate\""));
    }

    #[test]
    fn anchor_prompt_substitutes_tag_twice() {
        let topics = default_topics();
        let ssm = topics.iter().find(|t| t.id == "same-sex-marriage").unwrap();
        let prompt = render_anchor_prompt(ssm, Condition::Pro).unwrap();
        assert_eq!(
            prompt.rendered,
            "Write 10 Pro same-sex marriage news headlines about the topic of Same Sex Marriage. \
             Separate each with a tag 'Pro same-sex marriage Title:'."
        );
        assert_eq!(prompt.separator_tag, "Pro same-sex marriage Title:");

        let dp = topics.iter().find(|t| t.id == "death-penalty").unwrap();
        let opp = render_anchor_prompt(dp, Condition::Opp).unwrap();
        assert_eq!(opp.rendered.matches("Death Penalty opponent").count(), 2);
    }

    #[test]
    fn anchor_prompt_rejects_event_topics() {
        let blm = TopicSpec::event("black-lives-matter", "Black Lives Matter");
        let err = render_anchor_prompt(&blm, Condition::Pro).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn anchor_prompts_differ_between_sides_for_every_policy_topic() {
        for topic in default_topics().iter().filter(|t| t.is_policy()) {
            let pro = render_anchor_prompt(topic, Condition::Pro).unwrap();
            let opp = render_anchor_prompt(topic, Condition::Opp).unwrap();
            assert_ne!(pro.rendered, opp.rendered, "topic {}", topic.id);
        }
    }

    #[test]
    fn parse_splits_on_tag() {
        let parsed = parse_headlines("Title: A\nTitle: B", "Title:").unwrap();
        assert_eq!(parsed, vec!["A", "B"]);
    }

    #[test]
    fn parse_splits_on_stance_tag() {
        let parsed =
            parse_headlines("Pro-gun Title: X Pro-gun Title: Y", "Pro-gun Title:").unwrap();
        assert_eq!(parsed, vec!["X", "Y"]);
    }

    #[test]
    fn parse_strips_markers_and_quotes() {
        let raw = "Title: 1. \"First Headline\"\nTitle: - Second Headline\nTitle: 2) 'Third'";
        let parsed = parse_headlines(raw, "Title:").unwrap();
        assert_eq!(parsed, vec!["First Headline", "Second Headline", "Third"]);
    }

    #[test]
    fn parse_strips_stacked_markers_to_fixpoint() {
        let parsed = parse_headlines("Title: 1. 2. Senate Passes Bill", "Title:").unwrap();
        assert_eq!(parsed, vec!["Senate Passes Bill"]);
    }

    #[test]
    fn parse_keeps_years_intact() {
        let parsed = parse_headlines("Title: 2024 Election Looms", "Title:").unwrap();
        assert_eq!(parsed, vec!["2024 Election Looms"]);
    }

    #[test]
    fn parse_keeps_duplicates() {
        let parsed = parse_headlines("Title: Same\nTitle: Same", "Title:").unwrap();
        assert_eq!(parsed, vec!["Same", "Same"]);
    }

    #[test]
    fn parse_of_tagless_text_yields_single_segment() {
        let parsed = parse_headlines("no separators here", "Title:").unwrap();
        assert_eq!(parsed, vec!["no separators here"]);
    }

    #[test]
    fn parse_of_empty_text_yields_empty_list() {
        assert!(parse_headlines("", "Title:").unwrap().is_empty());
        assert!(parse_headlines("Title:  \n Title: ", "Title:").unwrap().is_empty());
    }

    #[test]
    fn empty_tag_is_a_precondition_error() {
        assert!(parse_headlines("x", "").is_err());
    }

    #[test]
    fn record_positions_are_sequential() {
        let record = GenerationRecord {
            model_id: "m".into(),
            topic_id: "t".into(),
            condition: Condition::Neutral,
            request_index: 3,
            raw_text: "Title: A\nTitle: B\nTitle: C".into(),
            sampling_params: SamplingParams::default(),
            parse_warning: false,
        };
        let headlines = headlines_for_record(&record, "Title:").unwrap();
        let positions: Vec<u32> = headlines.iter().map(|h| h.position).collect();
        assert_eq!(positions, vec![0, 1, 2]);
        assert!(headlines.iter().all(|h| h.request_index == 3));
    }

    fn headline_text() -> impl Strategy<Value = String> {
        // Printable text with the cleanup characters over-represented.
        proptest::string::string_regex("[ -~]{0,40}").unwrap()
    }

    fn tag_text() -> impl Strategy<Value = String> {
        proptest::string::string_regex("[A-Za-z][A-Za-z -]{0,12}:").unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        /// Joining parsed headlines with the tag and re-parsing yields the
        /// identical list.
        #[test]
        fn round_trip_join_then_parse(raw in headline_text(), tag in tag_text()) {
            let first = parse_headlines(&raw, &tag).unwrap();
            let joined = first
                .iter()
                .map(|h| format!("{tag} {h}"))
                .collect::<Vec<_>>()
                .join("\n");
            let second = parse_headlines(&joined, &tag).unwrap();
            prop_assert_eq!(first, second);
        }

        /// Parsed output never contains the separator tag or a leading
        /// enumeration marker.
        #[test]
        fn parsed_output_is_clean(raw in headline_text(), tag in tag_text()) {
            for text in parse_headlines(&raw, &tag).unwrap() {
                prop_assert!(!text.contains(&tag));
                prop_assert!(!text.is_empty());
                prop_assert_eq!(text.trim(), &text);
                let relisted = parse_headlines(&text, &tag).unwrap();
                prop_assert_eq!(relisted, vec![text]);
            }
        }
    }
}
