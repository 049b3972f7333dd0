use gcn_demo_web::{align, creativity_metrics, curriculum_schedule};
use serde_json::Value;

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn schedule_decays_to_pure_generated_data() {
    let rows = parse(&curriculum_schedule(15, 100, 10));
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 16);
    assert_eq!(
        (rows[0]["i_w"].as_u64(), rows[0]["n_wb"].as_u64()),
        (Some(100), Some(10))
    );
    assert_eq!(rows[6]["i_w"], 60);
    assert_eq!(rows[6]["n_wb"], 6);
    assert_eq!(rows[15]["seed_examples"], 0);
    assert_eq!(rows[15]["generated_examples"], 1000);
}

#[test]
fn schedule_reports_invalid_parameters() {
    assert!(parse(&curriculum_schedule(0, 100, 10))["error"].is_string());
}

#[test]
fn aligner_tags_the_jacket_example() {
    let out = parse(&align(
        "datetime today",
        "do i need a light jacket today ?",
        "datetime, weather",
    ));
    assert_eq!(
        out["tags"],
        serde_json::json!(["O", "O", "O", "O", "O", "O", "B-datetime", "O"])
    );
    assert_eq!(out["tokens"].as_array().unwrap().len(), 8);
    assert!(parse(&align("city paris", "fly to rome", "city"))["error"].is_string());
}

#[test]
fn creativity_counts_exact_matches() {
    let out = parse(&creativity_metrics(
        "book a flight\nplay jazz\n",
        "book a flight",
        "book a flight\nplay jazz",
        "set an alarm",
    ));
    assert_eq!(out["seed_em"], 0.5);
    assert_eq!(out["train_em"], 1.0);
    assert_eq!(out["vocab_size"], 5);
    assert!(parse(&creativity_metrics("", "", "", ""))["error"].is_string());
}
