//! Browser bindings: the warmup curriculum schedule, the IOB aligner and the
//! creativity metrics. Every export returns a JSON string.

use gcn::creativity;
use gcn::curriculum::plan;
use gcn::datamodel::tokenize;
use gcn::wireformat::align_iob;
use serde_json::{json, Value};
use wasm_bindgen::prelude::wasm_bindgen;

fn lines(text: &str) -> Vec<&str> {
    text.lines().map(str::trim).filter(|l| !l.is_empty()).collect()
}

fn error(message: impl ToString) -> String {
    json!({ "error": message.to_string() }).to_string()
}

/// Seed share of every meta-iteration from 0 to `warmup`:
/// `[{i_meta, i_w, n_wb, seed_examples, generated_examples, seed_fraction}]`.
#[wasm_bindgen]
pub fn curriculum_schedule(warmup: usize, learner_iterations: usize, batch_size: usize) -> String {
    let mut rows = Vec::new();
    for i_meta in 0..=warmup {
        match plan(i_meta, warmup, learner_iterations, batch_size) {
            Ok(p) => rows.push(json!({
                "i_meta": i_meta,
                "i_w": p.i_w,
                "n_wb": p.n_wb,
                "seed_examples": p.total_seed(),
                "generated_examples": p.total_generated(),
                "seed_fraction": p.seed_fraction(),
            })),
            Err(e) => return error(e),
        }
    }
    Value::Array(rows).to_string()
}

/// IOB tags for `utterance` from a slot label such as `city boston date
/// friday`; `slot_names` is comma-separated. Returns `{tokens, tags}` or
/// `{error}`.
#[wasm_bindgen]
pub fn align(label: &str, utterance: &str, slot_names: &str) -> String {
    let names: Vec<&str> = slot_names.split(',').map(str::trim).filter(|n| !n.is_empty()).collect();
    match align_iob(label, utterance, &names) {
        Ok(tags) => json!({ "tokens": tokenize(utterance), "tags": tags }).to_string(),
        Err(e) => error(e),
    }
}

/// Creativity report of newline-separated generated utterances against seed,
/// training and test utterances.
#[wasm_bindgen]
pub fn creativity_metrics(generated: &str, seed: &str, train: &str, test: &str) -> String {
    match creativity::report(&lines(generated), &lines(seed), &lines(train), &lines(test)) {
        Ok(r) => serde_json::to_string(&r).unwrap_or_else(error),
        Err(e) => error(e),
    }
}
