use serde_json::Value;
use traffic_mtl_web::{compare, parse, timeline};

const SWAPS: &str = r#"[{"from": "right_of", "to": "left_of", "perm": [1, 0]}]"#;

fn json(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn parse_reports_printed_and_canonical_forms() {
    let v = json(parse("q & G(p)", ""));
    assert_eq!(v["ok"], true);
    assert_eq!(v["printed"], "(q & G(p))");
    assert_eq!(v["canonical"], "(G(p) & q)");

    let swapped = json(parse("left_of(other,ego)", SWAPS));
    assert_eq!(swapped["canonical"], json(parse("right_of(ego,other)", SWAPS))["canonical"]);
}

#[test]
fn parse_errors_carry_the_offset() {
    let v = json(parse("G(p", ""));
    assert_eq!(v["ok"], false);
    assert_eq!(v["offset"], 3);
    assert!(v["expected"].as_array().is_some_and(|e| e.iter().any(|t| t == ")")));
}

#[test]
fn malformed_swaps_are_reported() {
    let v = json(parse("p", "{not json"));
    assert_eq!(v["ok"], false);
}

#[test]
fn compare_classifies_candidates() {
    let same = json(compare("G(right_of(ego,other) -> p)", "G(!left_of(other,ego) | p)", SWAPS));
    assert_eq!(same["class"], "correct");
    assert_eq!(same["equivalent"], true);

    let fused = json(compare("in_front(ego,stop)", "stop_in_front(ego)", ""));
    assert_eq!(fused["class"], "wrong_predicate");
    assert_eq!(fused["equivalent"], false);

    let broken = json(compare("G(p)", "G(p", ""));
    assert_eq!(broken["ok"], true);
    assert_eq!(broken["class"], "grammar_violation");
    assert_eq!(broken["equivalent"], Value::Null);
    assert_eq!(broken["candidate_error"]["offset"], 3);

    let bad_gold = json(compare("G(", "p", ""));
    assert_eq!(bad_gold["ok"], false);
    assert_eq!(bad_gold["field"], "gold");
}

#[test]
fn timeline_lists_each_subformula_once() {
    let trace = r#"{"states": [["turn_signal(ego)"], [], ["overtake(ego,other)"], [], ["overtake(ego,other)"]]}"#;
    let v = json(timeline("G(overtake(ego,other) -> P[0,3](turn_signal(ego)))", trace));
    assert_eq!(v["ok"], true);
    assert_eq!(v["holds"], false);
    assert_eq!(v["violating_position"], 4);
    assert_eq!(v["steps"], 5);
    let rows = v["rows"].as_array().unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r["formula"].as_str().unwrap()).collect();
    let mut distinct = names.clone();
    distinct.sort();
    distinct.dedup();
    assert_eq!(distinct.len(), names.len(), "{names:?}");
    let row = |name: &str| rows.iter().find(|r| r["formula"] == name).unwrap()["values"].clone();
    assert_eq!(row("turn_signal(ego)"), serde_json::json!([true, false, false, false, false]));
    assert_eq!(row("P[0,3](turn_signal(ego))"), serde_json::json!([true, true, true, true, false]));
    assert_eq!(rows.last().unwrap()["values"], serde_json::json!([false, false, false, false, false]));
}

#[test]
fn timeline_rejects_bad_traces() {
    assert_eq!(json(timeline("p", "[]"))["ok"], false);
    assert_eq!(json(timeline("p", r#"{"states": [["p("]]}"#))["ok"], false);
}
