//! WebAssembly bindings for the browser demo.
//!
//! Every export takes plain strings and returns a JSON document with an
//! `ok` field, so the page never has to handle a thrown exception.

use serde_json::{json, Value};
use traffic_mtl::semantics::truth_table;
use traffic_mtl::{canonicalize, classify_error, equivalent, monitor, parse_formula, Formula, ParseError, SwapSet, Trace};
use wasm_bindgen::prelude::wasm_bindgen;

fn parse_failure(e: &ParseError) -> Value {
    json!({"ok": false, "message": e.message, "offset": e.offset, "expected": e.expected})
}

fn failure(message: impl ToString) -> Value {
    json!({"ok": false, "message": message.to_string()})
}

fn load_swaps(swaps_json: &str) -> Result<SwapSet, Value> {
    if swaps_json.trim().is_empty() {
        return Ok(SwapSet::empty());
    }
    SwapSet::from_json(swaps_json).map_err(failure)
}

/// Parses `text` and reports its printed and canonical forms.
#[wasm_bindgen]
pub fn parse(text: &str, swaps_json: &str) -> String {
    let value = match (parse_formula(text), load_swaps(swaps_json)) {
        (Err(e), _) => parse_failure(&e),
        (_, Err(v)) => v,
        (Ok(f), Ok(swaps)) => match canonicalize(&f, &swaps) {
            Ok(canonical) => json!({
                "ok": true,
                "printed": f.to_string(),
                "canonical": canonical.to_string(),
                "depth": f.depth(),
            }),
            Err(e) => failure(e),
        },
    };
    value.to_string()
}

/// Compares a candidate translation against a gold formula.
///
/// An unparseable candidate is not an input error: it is scored as a
/// grammar violation, as in the evaluation harness.
#[wasm_bindgen]
pub fn compare(gold: &str, candidate: &str, swaps_json: &str) -> String {
    let swaps = match load_swaps(swaps_json) {
        Ok(s) => s,
        Err(v) => return v.to_string(),
    };
    let gold = match parse_formula(gold) {
        Ok(f) => f,
        Err(e) => {
            let mut v = parse_failure(&e);
            v["field"] = json!("gold");
            return v.to_string();
        }
    };
    let parsed = parse_formula(candidate);
    let cand = parsed.as_ref().ok();
    let class = classify_error(&gold, cand, &swaps);
    let canonical = |f: &Formula| canonicalize(f, &swaps).map(|c| c.to_string()).ok();
    json!({
        "ok": true,
        "class": class.as_str(),
        "equivalent": cand.map(|c| equivalent(&gold, c, &swaps).unwrap_or(false)),
        "gold_canonical": canonical(&gold),
        "candidate_canonical": cand.and_then(canonical),
        "candidate_error": parsed.as_ref().err().map(|e| json!({"message": e.message, "offset": e.offset})),
    })
    .to_string()
}

/// Monitors `formula` over a `{"states": [[atom, ...], ...]}` trace and
/// returns the truth value of every subformula at every step.
#[wasm_bindgen]
pub fn timeline(formula: &str, trace_json: &str) -> String {
    let f = match parse_formula(formula) {
        Ok(f) => f,
        Err(e) => return parse_failure(&e).to_string(),
    };
    let trace = match Trace::from_json(trace_json) {
        Ok(t) => t,
        Err(e) => return failure(e).to_string(),
    };
    let verdict = monitor(&f, &trace);
    let rows: Vec<Value> = truth_table(&f, &trace)
        .into_iter()
        .map(|(sub, values)| json!({"formula": sub.to_string(), "values": values}))
        .collect();
    json!({
        "ok": true,
        "holds": verdict.holds,
        "violating_position": verdict.violating_position,
        "steps": trace.len(),
        "rows": rows,
    })
    .to_string()
}
