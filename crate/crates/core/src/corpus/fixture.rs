//! Built-in synthetic templated datasets: 5 intents sharing carrier phrases,
//! 6 slot types and a vocabulary of about sixty words, plus unlabeled domain
//! text drawn from the same grammar.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Corpus, Dataset, SplitTag};
use crate::datamodel::{LabeledExample, TaskKind};
use crate::wireformat::{phrase_form, slot_label};

const INTENTS: [(&str, [&str; 5]); 5] = [
    ("flight", ["flight", "fly", "ticket", "airport", "plane"]),
    ("weather", ["weather", "rain", "forecast", "umbrella", "sunny"]),
    ("music", ["song", "music", "album", "listen", "playlist"]),
    ("alarm", ["alarm", "wake", "remind", "timer", "snooze"]),
    ("restaurant", ["restaurant", "dinner", "table", "eat", "menu"]),
];

const SLOTS: [(&str, [&str; 3]); 6] = [
    ("city", ["boston", "denver", "paris"]),
    ("day", ["monday", "friday", "tomorrow"]),
    ("time", ["7am", "noon", "6pm"]),
    ("artist", ["adele", "queen", "drake"]),
    ("cuisine", ["thai", "pizza", "sushi"]),
    ("music_genre", ["jazz", "rock", "pop"]),
];

const CARRIERS: [&str; 4] = [
    "i want the {kw} and {kw}",
    "please {kw} me a {kw}",
    "{kw} {kw}",
    "i need a {kw} {kw}",
];

fn tails(intent: &str) -> &'static [&'static str] {
    match intent {
        "flight" => &["to {city} on {day}", "from {city} at {time}", "to {city}"],
        "weather" => &["in {city} {day}", "for {day}", "in {city}"],
        "music" => &["by {artist}", "with some {music_genre}", "by {artist} please"],
        "alarm" => &["at {time} {day}", "for {time}", "on {day}"],
        _ => &["with {cuisine} in {city}", "at {time}", "for {cuisine}"],
    }
}

/// Probability that an utterance carries no slot phrase.
const SLOTLESS_RATE: f64 = 0.15;

struct Sentence {
    intent: &'static str,
    words: Vec<String>,
    /// `(slot name, word index)` for every slot value word.
    slots: Vec<(String, usize)>,
}

fn sentence(rng: &mut ChaCha8Rng) -> Sentence {
    let (intent, keywords) = INTENTS[rng.random_range(0..INTENTS.len())];
    let mut kws: Vec<&str> = keywords.choose_multiple(rng, 2).copied().collect();
    let carrier = CARRIERS.choose(rng).unwrap();
    let mut template: Vec<&str> = carrier.split(' ').collect();
    if !rng.random_bool(SLOTLESS_RATE) {
        template.extend(tails(intent).choose(rng).unwrap().split(' '));
    }
    let mut words = Vec::new();
    let mut slots = Vec::new();
    for piece in template {
        if piece == "{kw}" {
            words.push(kws.remove(0).to_string());
        } else if let Some(name) = piece.strip_prefix('{').and_then(|p| p.strip_suffix('}')) {
            let values = SLOTS.iter().find(|(n, _)| *n == name).unwrap().1;
            slots.push((name.to_string(), words.len()));
            words.push(values.choose(rng).unwrap().to_string());
        } else {
            words.push(piece.to_string());
        }
    }
    Sentence { intent, words, slots }
}

impl Sentence {
    fn text(&self) -> String {
        self.words.join(" ")
    }

    fn intent_example(&self) -> LabeledExample {
        LabeledExample::new(TaskKind::IntentDetection, self.intent, &self.text())
    }

    fn slot_example(&self) -> LabeledExample {
        let mut tags = vec!["O".to_string(); self.words.len()];
        let mut pairs = Vec::new();
        for (name, index) in &self.slots {
            let phrase = phrase_form(name);
            tags[*index] = format!("B-{phrase}");
            pairs.push((phrase, self.words[*index].clone()));
        }
        LabeledExample::new(TaskKind::SlotTagging, &slot_label(&pairs), &self.text()).with_tags(tags)
    }
}

/// Train/validation/test splits of a synthetic dataset plus unlabeled
/// domain text.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub train: Corpus,
    pub validation: Corpus,
    pub test: Corpus,
    pub domain_text: Vec<String>,
    pub slot_phrases: BTreeMap<String, String>,
}

impl SyntheticDataset {
    pub fn into_dataset(self) -> Dataset {
        Dataset {
            task: self.train.task,
            train: self.train,
            validation: self.validation,
            test: self.test,
            domain_text: self.domain_text,
            slot_phrases: self.slot_phrases,
        }
    }
}

const TRAIN_PER_INTENT: usize = 200;
const VALIDATION_PER_INTENT: usize = 40;
const TEST_PER_INTENT: usize = 100;
const DOMAIN_SENTENCES: usize = 3000;

/// Draws `per_intent` sentences of every intent.
fn balanced(rng: &mut ChaCha8Rng, per_intent: usize) -> Vec<Sentence> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut out = Vec::new();
    while out.len() < per_intent * INTENTS.len() {
        let s = sentence(rng);
        let n = counts.entry(s.intent).or_insert(0);
        if *n < per_intent {
            *n += 1;
            out.push(s);
        }
    }
    out
}

fn synthetic(seed: u64, task: TaskKind) -> SyntheticDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = |per_intent, split| {
        let examples = balanced(&mut rng, per_intent)
            .iter()
            .map(|s| match task {
                TaskKind::SlotTagging => s.slot_example(),
                _ => s.intent_example(),
            })
            .collect();
        Corpus::new(task, split, examples)
    };
    let mut train = corpus(TRAIN_PER_INTENT, SplitTag::SeedTrain);
    let mut validation = corpus(VALIDATION_PER_INTENT, SplitTag::Validation);
    let mut test = corpus(TEST_PER_INTENT, SplitTag::Test);
    let domain_text = (0..DOMAIN_SENTENCES).map(|_| sentence(&mut rng).text()).collect();
    let slot_phrases: BTreeMap<String, String> = SLOTS.iter().map(|(n, _)| (n.to_string(), phrase_form(n))).collect();
    if task == TaskKind::SlotTagging {
        let mut names: Vec<String> = slot_phrases.values().cloned().collect();
        names.sort();
        for c in [&mut train, &mut validation, &mut test] {
            c.slot_names = names.clone();
        }
    }
    SyntheticDataset {
        train,
        validation,
        test,
        domain_text,
        slot_phrases: if task == TaskKind::SlotTagging {
            slot_phrases
        } else {
            BTreeMap::new()
        },
    }
}

/// Synthetic 5-intent detection dataset.
pub fn intent_fixture(seed: u64) -> SyntheticDataset {
    synthetic(seed, TaskKind::IntentDetection)
}

/// Synthetic slot-tagging dataset over the same grammar (6 slot types).
pub fn slot_fixture(seed: u64) -> SyntheticDataset {
    synthetic(seed, TaskKind::SlotTagging)
}

const DIALOGUE_TOPICS: [(&str, &str); 4] = [
    ("what is the weather in {city}", "it is sunny in {city} today"),
    (
        "can you play some {music_genre}",
        "sure here is some {music_genre} for you",
    ),
    ("book a table at {time}", "your table is booked for {time}"),
    ("when does my flight leave", "your flight leaves {day} at {time}"),
];

const DIALOGUE_CLOSINGS: [(&str, &str); 2] = [("thank you", "you are welcome"), ("great thanks", "happy to help")];

fn fill(template: &str, rng: &mut ChaCha8Rng, chosen: &mut BTreeMap<String, String>) -> String {
    template
        .split(' ')
        .map(
            |piece| match piece.strip_prefix('{').and_then(|p| p.strip_suffix('}')) {
                Some(name) => chosen
                    .entry(name.to_string())
                    .or_insert_with(|| {
                        let values = SLOTS.iter().find(|(n, _)| *n == name).unwrap().1;
                        values.choose(rng).unwrap().to_string()
                    })
                    .clone(),
                None => piece.to_string(),
            },
        )
        .collect::<Vec<_>>()
        .join(" ")
}

/// Synthetic two-exchange dialogues (request, answer, thanks, closing).
pub fn dialogue_fixture(seed: u64) -> SyntheticDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dialogues = |n: usize| -> Vec<Vec<String>> {
        (0..n)
            .map(|_| {
                let mut chosen = BTreeMap::new();
                let (q, a) = DIALOGUE_TOPICS.choose(&mut rng).unwrap();
                let (t, c) = DIALOGUE_CLOSINGS.choose(&mut rng).unwrap();
                vec![
                    fill(q, &mut rng, &mut chosen),
                    fill(a, &mut rng, &mut chosen),
                    t.to_string(),
                    c.to_string(),
                ]
            })
            .collect()
    };
    let corpus = |turns: Vec<Vec<String>>, split| {
        let examples = turns
            .iter()
            .flat_map(|d| {
                d.windows(2)
                    .map(|p| LabeledExample::new(TaskKind::DialogueResponse, &p[0], &p[1]))
                    .collect::<Vec<_>>()
            })
            .collect();
        Corpus::new(TaskKind::DialogueResponse, split, examples)
    };
    let train = corpus(dialogues(200), SplitTag::SeedTrain);
    let validation = corpus(dialogues(40), SplitTag::Validation);
    let test = corpus(dialogues(60), SplitTag::Test);
    let domain_text = dialogues(300).into_iter().flatten().collect();
    SyntheticDataset {
        train,
        validation,
        test,
        domain_text,
        slot_phrases: BTreeMap::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{tokenize, validate_example};
    use std::collections::BTreeSet;

    #[test]
    fn intent_fixture_shape() {
        let d = intent_fixture(0);
        assert_eq!(d.train.len(), 1000);
        assert_eq!(d.validation.len(), 200);
        assert_eq!(d.test.len(), 500);
        assert_eq!(d.train.label_space().len(), 5);
        assert!(d.train.class_counts().values().all(|&n| n == 200));
        let vocab: BTreeSet<&str> = d.domain_text.iter().flat_map(|s| tokenize(s)).collect();
        assert!(vocab.len() <= 64, "{}", vocab.len());
    }

    #[test]
    fn slot_fixture_is_valid_and_covers_six_types() {
        let d = slot_fixture(0);
        assert_eq!(d.train.slot_names.len(), 6);
        assert!(d.train.slot_names.contains(&"music genre".to_string()));
        for e in d.train.examples.iter().chain(&d.test.examples) {
            validate_example(e).unwrap();
        }
        assert!(d.train.examples.iter().any(|e| e.label == "generic"));
    }

    #[test]
    fn fixtures_are_deterministic() {
        assert_eq!(intent_fixture(4).test, intent_fixture(4).test);
        assert_ne!(intent_fixture(4).test, intent_fixture(5).test);
        assert_eq!(dialogue_fixture(1).train, dialogue_fixture(1).train);
    }
}
