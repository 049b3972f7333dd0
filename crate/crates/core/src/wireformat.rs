//! Serialization of labeled examples into generator training text, parsing of
//! generator output, and IOB tag derivation by approximate matching of slot
//! values inside generated utterances.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::datamodel::{
    is_punctuation_token, normalize_text, tokenize, validate_example_with, LabeledExample, TaskKind, Violation,
    EMPTY_SLOT_LABEL,
};

/// Reserved tokens delimiting label and utterance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeparatorSet {
    pub bos: String,
    pub go: String,
    pub eos: String,
}

impl Default for SeparatorSet {
    fn default() -> Self {
        Self {
            bos: "<BOS>".into(),
            go: "<GO>".into(),
            eos: "<EOS>".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SeparatorError {
    #[error("separators must be non-empty and free of whitespace")]
    Blank,
    #[error("separator `{0}` is a substring of `{1}`")]
    Overlapping(String, String),
}

impl SeparatorSet {
    pub fn new(bos: &str, go: &str, eos: &str) -> Result<Self, SeparatorError> {
        let set = Self {
            bos: bos.into(),
            go: go.into(),
            eos: eos.into(),
        };
        set.check()?;
        Ok(set)
    }

    pub fn check(&self) -> Result<(), SeparatorError> {
        let all = self.all();
        for s in all {
            if s.is_empty() || s.chars().any(char::is_whitespace) {
                return Err(SeparatorError::Blank);
            }
        }
        for (i, a) in all.iter().enumerate() {
            for (j, b) in all.iter().enumerate() {
                if i != j && b.to_lowercase().contains(&a.to_lowercase()) {
                    return Err(SeparatorError::Overlapping(a.to_string(), b.to_string()));
                }
            }
        }
        Ok(())
    }

    pub fn all(&self) -> [&str; 3] {
        [&self.bos, &self.go, &self.eos]
    }

    /// First separator occurring in `text`, compared case-insensitively since
    /// corpus text is lowercased at ingestion.
    pub fn find_in(&self, text: &str) -> Option<&str> {
        let lowered = text.to_lowercase();
        self.all().into_iter().find(|s| lowered.contains(&s.to_lowercase()))
    }

    /// Generator prompt for unconditional sampling.
    pub fn unconditional_prompt(&self) -> String {
        self.bos.clone()
    }

    /// Generator prompt asking for an utterance realizing `label`.
    pub fn labeled_prompt(&self, label: &str) -> String {
        format!("{} {} {}", self.bos, label, self.go)
    }
}

/// Machine-readable reason a generated text could not be parsed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Malformed {
    MissingBos,
    MissingGo,
    MissingEos,
    EmptyLabel,
    EmptyUtterance,
    OutOfOrder,
}

impl Malformed {
    pub const ALL: [Malformed; 6] = [
        Malformed::MissingBos,
        Malformed::MissingGo,
        Malformed::MissingEos,
        Malformed::EmptyLabel,
        Malformed::EmptyUtterance,
        Malformed::OutOfOrder,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Malformed::MissingBos => "missing_bos",
            Malformed::MissingGo => "missing_go",
            Malformed::MissingEos => "missing_eos",
            Malformed::EmptyLabel => "empty_label",
            Malformed::EmptyUtterance => "empty_utterance",
            Malformed::OutOfOrder => "out_of_order",
        }
    }
}

impl fmt::Display for Malformed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("example violates its invariants: {0:?}")]
    Invalid(Vec<Violation>),
}

/// Renders `<BOS> label <GO> utterance <EOS>`.
pub fn serialize(example: &LabeledExample, separators: &SeparatorSet) -> Result<String, WireError> {
    validate_example_with(example, separators).map_err(WireError::Invalid)?;
    let label = if example.label.is_empty() {
        EMPTY_SLOT_LABEL
    } else {
        example.label.as_str()
    };
    Ok(format!(
        "{} {} {} {} {}",
        separators.bos, label, separators.go, example.utterance, separators.eos
    ))
}

/// Extracts label and utterance from generator output. Never fails loudly:
/// malformed text yields the reason as a value.
pub fn parse(raw: &str, separators: &SeparatorSet, task: TaskKind) -> Result<LabeledExample, Malformed> {
    let bos = raw.find(&separators.bos).ok_or(Malformed::MissingBos)?;
    let go = raw.find(&separators.go).ok_or(Malformed::MissingGo)?;
    let eos = raw.find(&separators.eos).ok_or(Malformed::MissingEos)?;
    if !(bos < go && go < eos) {
        return Err(Malformed::OutOfOrder);
    }
    let label = raw[bos + separators.bos.len()..go].trim();
    let utterance = raw[go + separators.go.len()..eos].trim();
    // A repeated separator inside either span breaks the BOS < GO < EOS order.
    if separators.find_in(label).is_some() || separators.find_in(utterance).is_some() {
        return Err(Malformed::OutOfOrder);
    }
    if label.is_empty() && task != TaskKind::SlotTagging {
        return Err(Malformed::EmptyLabel);
    }
    if utterance.is_empty() {
        return Err(Malformed::EmptyUtterance);
    }
    let example = LabeledExample::new(task, label, utterance);
    if example.utterance.is_empty() {
        return Err(Malformed::EmptyUtterance);
    }
    if example.label.is_empty() {
        return Err(Malformed::EmptyLabel);
    }
    Ok(example)
}

/// Marker used when the generator is asked to emit IOB tags itself, placed
/// between the utterance and the end separator.
pub const EMITTED_TAGS_MARKER: &str = "<TAGS>";

fn wire_tag(tag: &str) -> String {
    tag.replace(' ', "_")
}

/// Serializes a tagged slot example as
/// `<BOS> label <GO> utterance <TAGS> tag tag ... <EOS>`. Spaces inside
/// phrase-form slot names become underscores on the wire.
pub fn serialize_with_tags(example: &LabeledExample, separators: &SeparatorSet) -> Result<String, WireError> {
    let plain = serialize(example, separators)?;
    let tags = example.iob_tags.as_deref().unwrap_or_default();
    let tags: Vec<String> = tags.iter().map(|t| wire_tag(t)).collect();
    let head = plain.strip_suffix(&separators.eos).unwrap_or(&plain).trim_end();
    Ok(format!(
        "{head} {EMITTED_TAGS_MARKER} {} {}",
        tags.join(" "),
        separators.eos
    ))
}

/// Parses the emitted-tags variant. Tag validity is left to
/// [`validate_example_with`].
pub fn parse_with_tags(raw: &str, separators: &SeparatorSet) -> Result<LabeledExample, Malformed> {
    let marker = raw.find(EMITTED_TAGS_MARKER).ok_or(Malformed::MissingEos)?;
    let eos = raw.find(&separators.eos).ok_or(Malformed::MissingEos)?;
    if eos < marker {
        return Err(Malformed::OutOfOrder);
    }
    let stripped = format!("{} {}", &raw[..marker], &separators.eos);
    let example = parse(&stripped, separators, TaskKind::SlotTagging)?;
    let tags = raw[marker + EMITTED_TAGS_MARKER.len()..eos]
        .split_whitespace()
        .map(|t| t.replace('_', " "))
        .collect();
    Ok(example.with_tags(tags))
}

/// Human-readable phrase form of a slot name: `arrival_time` becomes
/// `arrival time`.
pub fn phrase_form(slot_name: &str) -> String {
    normalize_text(&slot_name.replace('_', " "))
}

/// Joins `(slot phrase, value)` pairs into a slot-tagging label.
pub fn slot_label<S: AsRef<str>, V: AsRef<str>>(pairs: &[(S, V)]) -> String {
    if pairs.is_empty() {
        return EMPTY_SLOT_LABEL.to_string();
    }
    let parts: Vec<String> = pairs
        .iter()
        .map(|(s, v)| format!("{} {}", s.as_ref(), v.as_ref()))
        .collect();
    normalize_text(&parts.join(" "))
}

/// A slot value located inside an utterance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSpan {
    pub slot_name: String,
    pub value: String,
    pub char_start: usize,
    pub char_end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentFailureReason {
    /// The label does not start with a known slot name.
    UnsegmentableLabel,
    /// A slot name is followed directly by another slot name or the end.
    EmptyValue,
    NotFound,
    Overlap,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("cannot align `{value}`: {reason:?}")]
pub struct AlignmentFailure {
    pub value: String,
    pub reason: AlignmentFailureReason,
}

impl AlignmentFailure {
    fn new(value: impl Into<String>, reason: AlignmentFailureReason) -> Self {
        Self {
            value: value.into(),
            reason,
        }
    }
}

/// Splits a slot label into `(slot phrase, value)` pairs by greedy
/// longest-prefix matching of the known slot names.
pub fn segment_slot_label<S: AsRef<str>>(
    label: &str,
    known_slot_names: &[S],
) -> Result<Vec<(String, String)>, AlignmentFailure> {
    let words: Vec<&str> = label.split_whitespace().collect();
    let names: Vec<Vec<&str>> = known_slot_names
        .iter()
        .map(|n| n.as_ref().split_whitespace().collect::<Vec<_>>())
        .filter(|n| !n.is_empty())
        .collect();
    let generic_is_slot = names.iter().any(|n| n == &[EMPTY_SLOT_LABEL]);
    if words.is_empty() || (words == [EMPTY_SLOT_LABEL] && !generic_is_slot) {
        return Ok(Vec::new());
    }

    let mut pairs: Vec<(String, Vec<&str>)> = Vec::new();
    let mut i = 0;
    while i < words.len() {
        let longest = names
            .iter()
            .filter(|n| words[i..].starts_with(n))
            .max_by_key(|n| n.len());
        match longest {
            Some(name) => {
                pairs.push((name.join(" "), Vec::new()));
                i += name.len();
            }
            None => match pairs.last_mut() {
                Some((_, value)) => {
                    value.push(words[i]);
                    i += 1;
                }
                None => {
                    return Err(AlignmentFailure::new(
                        words[i],
                        AlignmentFailureReason::UnsegmentableLabel,
                    ))
                }
            },
        }
    }
    pairs
        .into_iter()
        .map(|(name, value)| {
            if value.is_empty() {
                Err(AlignmentFailure::new(name, AlignmentFailureReason::EmptyValue))
            } else {
                Ok((name, value.join(" ")))
            }
        })
        .collect()
}

/// Token span `[start, end)` inside the utterance.
type Span = (usize, usize);

fn exact_spans(utterance: &[&str], value: &[&str]) -> Vec<Span> {
    if value.is_empty() || value.len() > utterance.len() {
        return Vec::new();
    }
    (0..=utterance.len() - value.len())
        .filter(|&s| utterance[s..s + value.len()] == *value)
        .map(|s| (s, s + value.len()))
        .collect()
}

/// Spans bounded by content tokens whose content tokens have a count in
/// `lengths`, in leftmost-then-longest order.
fn content_spans(utterance: &[&str], lengths: std::ops::RangeInclusive<usize>) -> Vec<(Span, Vec<String>)> {
    let mut out = Vec::new();
    for start in 0..utterance.len() {
        if is_punctuation_token(utterance[start]) {
            continue;
        }
        let mut words = Vec::new();
        let mut found = Vec::new();
        for end in start..utterance.len() {
            if is_punctuation_token(utterance[end]) {
                continue;
            }
            words.push(utterance[end].to_lowercase());
            if words.len() > *lengths.end() {
                break;
            }
            if lengths.contains(&words.len()) {
                found.push(((start, end + 1), words.clone()));
            }
        }
        found.reverse();
        out.extend(found);
    }
    out
}

fn token_edit_distance(a: &[String], b: &[String]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut row = vec![i + 1; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            row[j + 1] = sub.min(prev[j + 1] + 1).min(row[j] + 1);
        }
        prev = row;
    }
    prev[b.len()]
}

/// Minimum number of content tokens for fuzzy value matching.
pub const FUZZY_MIN_TOKENS: usize = 3;

/// Candidate spans for a value, tier by tier: exact token match, then
/// case/punctuation-insensitive match, then one-token-edit fuzzy match.
fn candidate_spans(utterance: &[&str], value: &str) -> (Vec<Span>, Vec<Span>) {
    let value_tokens = tokenize(value);
    let exact = exact_spans(utterance, &value_tokens);
    let content: Vec<String> = value_tokens
        .iter()
        .filter(|t| !is_punctuation_token(t))
        .map(|t| t.to_lowercase())
        .collect();
    let mut all = exact.clone();
    if content.is_empty() {
        return (exact, all);
    }
    let n = content.len();
    for (span, words) in content_spans(utterance, n..=n) {
        if words == content && !all.contains(&span) {
            all.push(span);
        }
    }
    if n >= FUZZY_MIN_TOKENS {
        for (span, words) in content_spans(utterance, n - 1..=n + 1) {
            if token_edit_distance(&words, &content) <= 1 && !all.contains(&span) {
                all.push(span);
            }
        }
    }
    (exact, all)
}

/// First assignment (in candidate order) of pairwise disjoint spans, or the
/// index of the deepest value that could not be placed.
fn assign(candidates: &[Vec<Span>]) -> Result<Vec<Span>, usize> {
    fn go(candidates: &[Vec<Span>], chosen: &mut Vec<Span>, deepest: &mut usize) -> bool {
        let k = chosen.len();
        if k == candidates.len() {
            return true;
        }
        *deepest = (*deepest).max(k);
        for &span in &candidates[k] {
            if chosen.iter().all(|c| span.1 <= c.0 || c.1 <= span.0) {
                chosen.push(span);
                if go(candidates, chosen, deepest) {
                    return true;
                }
                chosen.pop();
            }
        }
        false
    }
    let mut chosen = Vec::new();
    let mut deepest = 0;
    if go(candidates, &mut chosen, &mut deepest) {
        Ok(chosen)
    } else {
        Err(deepest)
    }
}

/// Derives IOB tags for `utterance` from a slot label by locating each value.
pub fn align_iob<S: AsRef<str>>(
    label: &str,
    utterance: &str,
    known_slot_names: &[S],
) -> Result<Vec<String>, AlignmentFailure> {
    let pairs = segment_slot_label(label, known_slot_names)?;
    let tokens = tokenize(utterance);
    let mut exact = Vec::with_capacity(pairs.len());
    let mut tiered = Vec::with_capacity(pairs.len());
    for (_, value) in &pairs {
        let (e, t) = candidate_spans(&tokens, value);
        if t.is_empty() {
            return Err(AlignmentFailure::new(value, AlignmentFailureReason::NotFound));
        }
        exact.push(e);
        tiered.push(t);
    }
    let spans = assign(&exact)
        .or_else(|_| assign(&tiered))
        .map_err(|k| AlignmentFailure::new(&pairs[k].1, AlignmentFailureReason::Overlap))?;

    let mut tags = vec!["O".to_string(); tokens.len()];
    for ((name, _), (start, end)) in pairs.iter().zip(spans) {
        tags[start] = format!("B-{name}");
        for tag in &mut tags[start + 1..end] {
            *tag = format!("I-{name}");
        }
    }
    Ok(tags)
}

/// Converts character-offset slot spans into IOB tags over [`tokenize`]
/// tokens. Returns `None` when a span boundary falls inside a token.
pub fn spans_to_iob(utterance: &str, spans: &[SlotSpan]) -> Option<Vec<String>> {
    let offsets = token_char_offsets(utterance);
    let mut tags = vec!["O".to_string(); offsets.len()];
    for span in spans {
        let start = offsets.iter().position(|&(s, _)| s == span.char_start)?;
        let end = offsets.iter().position(|&(_, e)| e == span.char_end)?;
        if end < start {
            return None;
        }
        for (k, tag) in tags[start..=end].iter_mut().enumerate() {
            if tag != "O" {
                return None;
            }
            let prefix = if k == 0 { "B" } else { "I" };
            *tag = format!("{prefix}-{}", span.slot_name);
        }
    }
    Some(tags)
}

/// Character offsets `[start, end)` of each [`tokenize`] token.
pub fn token_char_offsets(utterance: &str) -> Vec<(usize, usize)> {
    let mut offsets = Vec::new();
    let mut cursor = 0;
    for token in tokenize(utterance) {
        let byte = cursor + utterance[cursor..].find(token).unwrap_or(0);
        let start = utterance[..byte].chars().count();
        offsets.push((start, start + token.chars().count()));
        cursor = byte + token.len();
    }
    offsets
}

/// Recovers character-offset spans from IOB tags.
pub fn iob_to_spans(utterance: &str, tags: &[String]) -> Vec<SlotSpan> {
    let offsets = token_char_offsets(utterance);
    let chars: Vec<char> = utterance.chars().collect();
    crate::learner::metrics::extract_spans(tags)
        .into_iter()
        .filter(|s| s.end <= offsets.len())
        .map(|s| {
            let char_start = offsets[s.start].0;
            let char_end = offsets[s.end - 1].1;
            SlotSpan {
                slot_name: s.label,
                value: chars[char_start..char_end].iter().collect(),
                char_start,
                char_end,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{is_well_formed_iob, validate_example};

    fn seps() -> SeparatorSet {
        SeparatorSet::default()
    }

    fn intent(label: &str, utterance: &str) -> LabeledExample {
        LabeledExample::new(TaskKind::IntentDetection, label, utterance)
    }

    #[test]
    fn serializes_intent_example() {
        let e = intent("flight", "what continental flights leave phoenix on friday");
        assert_eq!(
            serialize(&e, &seps()).unwrap(),
            "<BOS> flight <GO> what continental flights leave phoenix on friday <EOS>"
        );
    }

    #[test]
    fn serializes_slot_label_verbatim() {
        let e = LabeledExample::new(
            TaskKind::SlotTagging,
            "people 5 time after 9am",
            "a table for 5 after 9am",
        );
        assert_eq!(
            serialize(&e, &seps()).unwrap(),
            "<BOS> people 5 time after 9am <GO> a table for 5 after 9am <EOS>"
        );
    }

    #[test]
    fn serialize_rejects_separators_in_content() {
        let e = intent("flight", "fly <eos> now");
        assert!(serialize(&e, &seps()).is_err());
    }

    #[test]
    fn parses_well_formed_text() {
        let e = parse(
            "<BOS> flight <GO> what flights leave phoenix <EOS>",
            &seps(),
            TaskKind::IntentDetection,
        )
        .unwrap();
        assert_eq!(e.label, "flight");
        assert_eq!(e.utterance, "what flights leave phoenix");
    }

    #[test]
    fn each_malformation_reason_has_a_fixture() {
        let cases = [
            ("flight <GO> hi <EOS>", Malformed::MissingBos),
            ("<BOS> flight what flights leave", Malformed::MissingGo),
            ("<BOS> flight <GO> what flights leave", Malformed::MissingEos),
            ("<BOS> <GO> hi <EOS>", Malformed::EmptyLabel),
            ("<BOS> flight <GO>   <EOS>", Malformed::EmptyUtterance),
            ("<GO> flight <BOS> hi <EOS>", Malformed::OutOfOrder),
        ];
        for (raw, reason) in cases {
            assert_eq!(parse(raw, &seps(), TaskKind::IntentDetection), Err(reason), "{raw}");
        }
    }

    #[test]
    fn empty_label_is_generic_for_slot_tagging() {
        let e = parse("<BOS> <GO> hi <EOS>", &seps(), TaskKind::SlotTagging).unwrap();
        assert_eq!(e.label, EMPTY_SLOT_LABEL);
        assert_eq!(align_iob(&e.label, &e.utterance, &["city"]).unwrap(), vec!["O"]);
    }

    #[test]
    fn repeated_separator_is_out_of_order() {
        assert_eq!(
            parse("<BOS> a <BOS> b <GO> c <EOS>", &seps(), TaskKind::IntentDetection),
            Err(Malformed::OutOfOrder)
        );
    }

    #[test]
    fn aligns_paper_jacket_example() {
        let tags = align_iob(
            "datetime today",
            "do i need a light jacket today ?",
            &["datetime", "weather"],
        )
        .unwrap();
        assert_eq!(tags, ["O", "O", "O", "O", "O", "O", "B-datetime", "O"]);
    }

    #[test]
    fn generic_label_gives_all_outside() {
        let tags = align_iob("generic", "cancel my earliest alarm", &["datetime"]).unwrap();
        assert_eq!(tags, ["O", "O", "O", "O"]);
    }

    #[test]
    fn missing_value_fails_with_value() {
        let err = align_iob("city boston", "i like paris", &["city"]).unwrap_err();
        assert_eq!(err.value, "boston");
        assert_eq!(err.reason, AlignmentFailureReason::NotFound);
    }

    #[test]
    fn multiword_slot_names_use_longest_prefix() {
        let names = ["arrival time", "arrival", "city"];
        let pairs = segment_slot_label("arrival time 9am city new york", &names).unwrap();
        assert_eq!(
            pairs,
            vec![
                ("arrival time".to_string(), "9am".to_string()),
                ("city".to_string(), "new york".to_string())
            ]
        );
        let tags = align_iob("arrival time 9am city new york", "land in new york by 9am", &names).unwrap();
        assert_eq!(tags, ["O", "O", "B-city", "I-city", "O", "B-arrival time"]);
    }

    #[test]
    fn label_without_leading_slot_name_fails() {
        let err = segment_slot_label("boston city", &["city"]).unwrap_err();
        assert_eq!(err.reason, AlignmentFailureReason::UnsegmentableLabel);
        let err = segment_slot_label("city", &["city"]).unwrap_err();
        assert_eq!(err.reason, AlignmentFailureReason::EmptyValue);
    }

    #[test]
    fn punctuation_insensitive_tier() {
        let tags = align_iob("city i-town", "fly to i town now", &["city"]).unwrap();
        assert_eq!(tags, ["O", "O", "B-city", "I-city", "O"]);
    }

    #[test]
    fn fuzzy_tier_accepts_one_token_edit() {
        let tags = align_iob(
            "datetime first of every month",
            "set an alarm for the first of each month",
            &["datetime"],
        )
        .unwrap();
        assert_eq!(
            tags,
            [
                "O",
                "O",
                "O",
                "O",
                "O",
                "B-datetime",
                "I-datetime",
                "I-datetime",
                "I-datetime"
            ]
        );
        // Two-token values never go fuzzy.
        assert!(align_iob("city new york", "fly to new jersey", &["city"]).is_err());
    }

    #[test]
    fn backtracks_to_avoid_overlap() {
        // "x" occurs twice; "x y" only at the start, so "x" must take the later slot.
        let tags = align_iob("a x b x y", "x y then x", &["a", "b"]).unwrap();
        assert_eq!(tags, ["B-b", "I-b", "O", "B-a"]);
    }

    #[test]
    fn overlapping_values_fail() {
        let err = align_iob("a boston b boston", "fly to boston", &["a", "b"]).unwrap_err();
        assert_eq!(err.reason, AlignmentFailureReason::Overlap);
    }

    #[test]
    fn tagged_wire_variant_round_trips() {
        let e = LabeledExample::new(TaskKind::SlotTagging, "arrival time 9am", "land by 9am").with_tags(vec![
            "O".into(),
            "O".into(),
            "B-arrival time".into(),
        ]);
        let raw = serialize_with_tags(&e, &seps()).unwrap();
        assert_eq!(
            raw,
            "<BOS> arrival time 9am <GO> land by 9am <TAGS> O O B-arrival_time <EOS>"
        );
        assert_eq!(parse_with_tags(&raw, &seps()).unwrap(), e);
    }

    #[test]
    fn char_spans_and_tags_agree() {
        let u = "fly to new york, today";
        let spans = vec![SlotSpan {
            slot_name: "city".into(),
            value: "new york".into(),
            char_start: 7,
            char_end: 15,
        }];
        let tags = spans_to_iob(u, &spans).unwrap();
        assert_eq!(tags, ["O", "O", "B-city", "I-city", "O", "O"]);
        assert_eq!(iob_to_spans(u, &tags), spans);
        // Boundary inside a token.
        let bad = vec![SlotSpan {
            char_start: 8,
            ..spans[0].clone()
        }];
        assert!(spans_to_iob(u, &bad).is_none());
    }

    #[test]
    fn phrase_form_replaces_underscores() {
        assert_eq!(phrase_form("arrival_time"), "arrival time");
        assert_eq!(slot_label::<&str, &str>(&[]), "generic");
    }

    /// Exhaustive search over all token-span assignments under exact matching.
    fn brute_force_exact(tokens: &[&str], values: &[Vec<&str>]) -> bool {
        fn go(tokens: &[&str], values: &[Vec<&str>], used: &mut Vec<bool>) -> bool {
            let Some((value, rest)) = values.split_first() else {
                return true;
            };
            for start in 0..tokens.len() {
                for end in start + 1..=tokens.len() {
                    if tokens[start..end] == value[..] && used[start..end].iter().all(|u| !u) {
                        used[start..end].iter_mut().for_each(|u| *u = true);
                        if go(tokens, rest, used) {
                            return true;
                        }
                        used[start..end].iter_mut().for_each(|u| *u = false);
                    }
                }
            }
            false
        }
        go(tokens, values, &mut vec![false; tokens.len()])
    }

    #[test]
    fn agrees_with_brute_force_oracle_on_small_alphabet() {
        // Utterances over {x, y} of length <= 8 against every label of two
        // values of length <= 2 drawn from the same alphabet.
        let alphabet = ["x", "y"];
        let words = |code: usize, len: usize| -> Vec<&str> { (0..len).map(|i| alphabet[(code >> i) & 1]).collect() };
        let mut values = Vec::new();
        for len in 1..=2 {
            for code in 0..(1 << len) {
                values.push(words(code, len));
            }
        }
        let mut checked = 0;
        for len in 1..=8 {
            for code in 0..(1 << len) {
                let tokens = words(code, len);
                let utterance = tokens.join(" ");
                for a in &values {
                    for b in &values {
                        let label = format!("s1 {} s2 {}", a.join(" "), b.join(" "));
                        let result = align_iob(&label, &utterance, &["s1", "s2"]);
                        let exists = brute_force_exact(&tokens, &[a.clone(), b.clone()]);
                        if exists {
                            let tags = result.expect("oracle found an assignment");
                            assert!(is_well_formed_iob(&tags));
                        }
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked > 1000);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn word() -> impl Strategy<Value = String> {
            "[a-z]{1,6}"
        }

        fn text() -> impl Strategy<Value = String> {
            prop::collection::vec(word(), 1..8).prop_map(|w| w.join(" "))
        }

        fn task() -> impl Strategy<Value = TaskKind> {
            prop::sample::select(TaskKind::ALL.to_vec())
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(10_000))]

            #[test]
            fn parse_inverts_serialize(task in task(), label in text(), utterance in text()) {
                let e = LabeledExample::new(task, &label, &utterance);
                prop_assert_eq!(validate_example(&e), Ok(()));
                let raw = serialize(&e, &seps()).unwrap();
                prop_assert_eq!(parse(&raw, &seps(), task).unwrap(), e);
            }
        }

        proptest! {
            #[test]
            fn aligned_tags_are_well_formed(
                utterance in prop::collection::vec("[abc]", 1..9),
                v1 in prop::collection::vec("[abc]", 1..4),
                v2 in prop::collection::vec("[abc]", 1..4),
            ) {
                let label = format!("s1 {} s2 {}", v1.join(" "), v2.join(" "));
                let utterance = utterance.join(" ");
                if let Ok(tags) = align_iob(&label, &utterance, &["s1", "s2"]) {
                    prop_assert!(is_well_formed_iob(&tags));
                    prop_assert_eq!(tags.len(), tokenize(&utterance).len());
                }
                // Determinism.
                prop_assert_eq!(
                    align_iob(&label, &utterance, &["s1", "s2"]),
                    align_iob(&label, &utterance, &["s1", "s2"])
                );
            }
        }
    }
}
