//! Task metrics: accuracy, span-level micro F1, token-level F1 and the
//! perplexity transform.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::datamodel::{parse_tag, Iob};

/// Token span `[start, end)` carrying slot `label`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

/// Spans of an IOB sequence. `B-x` opens a span; `I-x` continues a span of
/// the same type or, when it does not, opens one. Unparseable tags count as
/// `O`.
pub fn extract_spans<S: AsRef<str>>(tags: &[S]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<Span> = None;
    for (i, tag) in tags.iter().enumerate() {
        let (begin, name) = match parse_tag(tag.as_ref()) {
            Some(Iob::Begin(n)) => (true, Some(n)),
            Some(Iob::Inside(n)) => (false, Some(n)),
            _ => (false, None),
        };
        let continues = !begin && matches!((&open, name), (Some(s), Some(n)) if s.label == n);
        if continues {
            if let Some(s) = open.as_mut() {
                s.end = i + 1;
            }
            continue;
        }
        spans.extend(open.take());
        if let Some(n) = name {
            open = Some(Span {
                label: n.to_string(),
                start: i,
                end: i + 1,
            });
        }
    }
    spans.extend(open);
    spans
}

/// `2tp / (2tp + fp + fn)`, with 1.0 when there is nothing to find and
/// nothing was predicted.
pub fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        1.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Span-level exact-match micro F1 over a corpus (name and boundaries must
/// both match).
pub fn span_f1<G: AsRef<str>, P: AsRef<str>>(gold: &[Vec<G>], predicted: &[Vec<P>]) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (g, p) in gold.iter().zip(predicted) {
        let gs: BTreeSet<Span> = extract_spans(g).into_iter().collect();
        let ps: BTreeSet<Span> = extract_spans(p).into_iter().collect();
        let hit = gs.intersection(&ps).count();
        tp += hit;
        fp += ps.len() - hit;
        fn_ += gs.len() - hit;
    }
    f1(tp, fp, fn_)
}

/// Token-level F1 over non-`O` tags of one sequence.
pub fn token_f1<G: AsRef<str>, P: AsRef<str>>(gold: &[G], predicted: &[P]) -> f64 {
    let gold_pos = gold.iter().filter(|t| t.as_ref() != "O").count();
    let pred_pos = predicted.iter().filter(|t| t.as_ref() != "O").count();
    let tp = gold
        .iter()
        .zip(predicted)
        .filter(|(g, p)| g.as_ref() != "O" && g.as_ref() == p.as_ref())
        .count();
    f1(tp, pred_pos - tp, gold_pos - tp)
}

/// Maps a mean per-token negative log-likelihood into `(0, 1]`.
pub fn perplexity_score(mean_nll: f64) -> f64 {
    (-mean_nll.max(0.0)).exp()
}
