#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use traffic_mtl::equiv::SwapSet;
use traffic_mtl::evaluation::load_dataset;
use traffic_mtl::llm::{ReplayProvider, SamplingConfig};
use traffic_mtl::pipeline::{TranslationCandidate, TranslationResult};
use traffic_mtl::prompting::{PromptConfig, PromptMode};
use traffic_mtl_service::api::AppState;
use traffic_mtl_service::store::ReviewStore;

pub const SPEED_RULE: &str = "Ego vehicle will not exceed the speed limit of the lane it is driving on and will not exceed the maximum velocity allowed for its vehicle type and ego will not exceed the speed limit such that it can no longer react to traffic regulations and restrictions.";

pub fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

pub fn state(store_dir: &std::path::Path) -> Arc<AppState> {
    Arc::new(AppState {
        store: ReviewStore::open(store_dir).unwrap(),
        provider: Arc::new(ReplayProvider::load(data("eval/fixtures.jsonl")).unwrap()),
        prompts: PromptConfig::builtin(PromptMode::Cot),
        swaps: SwapSet::load(data("swaps.json")).unwrap(),
        dataset: load_dataset(data("eval/rules.jsonl")).unwrap(),
        sampling: SamplingConfig::default(),
    })
}

/// A result whose samples are the given raw outputs.
pub fn result(rule_id: &str, outputs: &[&str]) -> TranslationResult {
    let config = PromptConfig::builtin(PromptMode::Plain);
    let candidates = outputs
        .iter()
        .enumerate()
        .map(|(i, o)| TranslationCandidate::from_raw(i, o.to_string(), &config, &SwapSet::empty()))
        .collect();
    TranslationResult::from_candidates(rule_id.into(), format!("text of {rule_id}"), candidates)
}
