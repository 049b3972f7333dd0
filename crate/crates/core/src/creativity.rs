//! Novelty and diversity of generated corpora: exact-match rates, Self-BLEU,
//! unigram OOV rate and vocabulary size.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::datamodel::{is_punctuation_token, normalize_text, tokenize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CreativityError {
    #[error("generated corpus is empty")]
    Empty,
    #[error("self-BLEU needs at least two utterances (got {0})")]
    TooFew(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CreativityReport {
    pub seed_em: f64,
    pub train_em: f64,
    pub self_bleu: f64,
    pub oov_rate: f64,
    pub vocab_size: usize,
}

/// Lowercased, whitespace-collapsed text without trailing punctuation.
pub fn em_normalize(text: &str) -> String {
    let mut t = normalize_text(text);
    while let Some(c) = t.chars().last() {
        if c.is_whitespace() || is_punctuation_token(&c.to_string()) {
            t.pop();
        } else {
            break;
        }
    }
    t
}

/// Share of generated utterances whose normalized text occurs in `reference`.
pub fn exact_match_rate<G: AsRef<str>, R: AsRef<str>>(
    generated: &[G],
    reference: &[R],
) -> Result<f64, CreativityError> {
    if generated.is_empty() {
        return Err(CreativityError::Empty);
    }
    let refs: HashSet<String> = reference.iter().map(|r| em_normalize(r.as_ref())).collect();
    let hits = generated
        .iter()
        .filter(|g| refs.contains(&em_normalize(g.as_ref())))
        .count();
    Ok(hits as f64 / generated.len() as f64)
}

fn words(text: &str) -> Vec<String> {
    tokenize(&normalize_text(text)).into_iter().map(String::from).collect()
}

const MAX_ORDER: usize = 4;

type Ngram = Vec<String>;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Largest and second-largest count of an n-gram over all sentences, with
/// the owner of the largest, so a leave-one-out maximum is O(1).
#[derive(Default, Clone, Copy)]
struct TopTwo {
    first: usize,
    owner: usize,
    second: usize,
}

impl TopTwo {
    fn offer(&mut self, count: usize, owner: usize) {
        if count > self.first {
            self.second = self.first;
            self.first = count;
            self.owner = owner;
        } else if count > self.second {
            self.second = count;
        }
    }

    fn excluding(&self, owner: usize) -> usize {
        if owner == self.owner {
            self.second
        } else {
            self.first
        }
    }
}

/// Closest reference length to `c` (ties go to the shorter), given a
/// histogram of lengths with `own` removed once.
fn closest_length(lengths: &BTreeMap<usize, usize>, own: usize, c: usize) -> usize {
    lengths
        .iter()
        .filter(|&(&len, &n)| n > usize::from(len == own))
        .map(|(&len, _)| len)
        .min_by_key(|&len| (len.abs_diff(c), len))
        .unwrap_or(0)
}

/// Mean over utterances of sentence BLEU-4 (uniform weights) against all
/// other utterances as references. Orders 2-4 are smoothed by adding one to
/// numerator and denominator; a zero unigram match gives a score of 0. The
/// brevity penalty uses the reference length closest to the hypothesis.
pub fn self_bleu<S: AsRef<str>>(generated: &[S]) -> Result<f64, CreativityError> {
    let scores = self_bleu_scores(generated)?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Per-utterance BLEU against the rest of the corpus.
pub fn self_bleu_scores<S: AsRef<str>>(generated: &[S]) -> Result<Vec<f64>, CreativityError> {
    if generated.len() < 2 {
        return Err(CreativityError::TooFew(generated.len()));
    }
    let sentences: Vec<Vec<String>> = generated.iter().map(|s| words(s.as_ref())).collect();
    let mut tops: Vec<HashMap<Ngram, TopTwo>> = vec![HashMap::new(); MAX_ORDER];
    let mut lengths: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, s) in sentences.iter().enumerate() {
        *lengths.entry(s.len()).or_insert(0) += 1;
        for n in 1..=MAX_ORDER {
            for (g, c) in ngram_counts(s, n) {
                tops[n - 1].entry(g.to_vec()).or_default().offer(c, i);
            }
        }
    }
    let mut scores = vec![0.0; sentences.len()];
    for (i, hyp) in sentences.iter().enumerate() {
        let c = hyp.len();
        let mut log_sum = 0.0;
        let mut zero = false;
        for n in 1..=MAX_ORDER {
            let counts = ngram_counts(hyp, n);
            let matched: usize = counts
                .iter()
                .map(|(g, &k)| k.min(tops[n - 1].get(*g).map_or(0, |t| t.excluding(i))))
                .sum();
            let possible = counts.values().sum::<usize>().max(1);
            let (num, den) = if n == 1 {
                (matched, possible)
            } else {
                (matched + 1, possible + 1)
            };
            if num == 0 {
                zero = true;
                break;
            }
            log_sum += (num as f64 / den as f64).ln() / MAX_ORDER as f64;
        }
        if zero || c == 0 {
            continue;
        }
        let r = closest_length(&lengths, c, c);
        let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
        scores[i] = bp * log_sum.exp();
    }
    Ok(scores)
}

/// Type-level unigram OOV rate of `generated` against `reference`, and the
/// generated vocabulary size.
pub fn oov_and_vocab<G: AsRef<str>, R: AsRef<str>>(
    generated: &[G],
    reference: &[R],
) -> Result<(f64, usize), CreativityError> {
    if generated.is_empty() {
        return Err(CreativityError::Empty);
    }
    let gen: BTreeSet<String> = generated.iter().flat_map(|g| words(g.as_ref())).collect();
    let refs: BTreeSet<String> = reference.iter().flat_map(|r| words(r.as_ref())).collect();
    if gen.is_empty() {
        return Ok((0.0, 0));
    }
    let novel = gen.difference(&refs).count();
    Ok((novel as f64 / gen.len() as f64, gen.len()))
}

/// Full report for a generated corpus. Self-BLEU is 0 for a single
/// utterance.
pub fn report<G: AsRef<str>, S: AsRef<str>, T: AsRef<str>, R: AsRef<str>>(
    generated: &[G],
    seed: &[S],
    train: &[T],
    test: &[R],
) -> Result<CreativityReport, CreativityError> {
    let (oov_rate, vocab_size) = oov_and_vocab(generated, test)?;
    Ok(CreativityReport {
        seed_em: exact_match_rate(generated, seed)?,
        train_em: exact_match_rate(generated, train)?,
        self_bleu: if generated.len() >= 2 {
            self_bleu(generated)?
        } else {
            0.0
        },
        oov_rate,
        vocab_size,
    })
}

/// CSV in the layout `Condition,Seed EM,Train EM,Self-BLEU`.
pub fn to_csv(rows: &[(String, CreativityReport)]) -> String {
    let mut out = String::from("Condition,Seed EM,Train EM,Self-BLEU\n");
    for (condition, r) in rows {
        out.push_str(&format!(
            "{condition},{:.4},{:.4},{:.4}\n",
            r.seed_em, r.train_em, r.self_bleu
        ));
    }
    out
}
