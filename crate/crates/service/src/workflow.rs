//! Operations shared by the command line and the HTTP service.

use std::collections::BTreeSet;

use sha2::{Digest, Sha256};
use thiserror::Error;
use traffic_mtl::equiv::SwapSet;
use traffic_mtl::evaluation::{evaluate_dataset, parse_dataset, parse_exclusions, DatasetFormatError, EvalReport, RuleRecord};
use traffic_mtl::llm::{LlmError, ReplayProvider, SamplingConfig};
use traffic_mtl::pipeline::PipelineError;
use traffic_mtl::prompting::{PromptConfig, PromptError};

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error(transparent)]
    Dataset(#[from] DatasetFormatError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

impl From<PipelineError> for WorkflowError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Prompt(e) => WorkflowError::Prompt(e),
            PipelineError::Llm(e) => WorkflowError::Llm(e),
        }
    }
}

/// Picks the id a rule is translated under: an explicit id, else the id of
/// the dataset record with exactly this text, else a content hash.
pub fn resolve_rule_id(explicit: Option<&str>, rule_text: &str, dataset: &[RuleRecord]) -> String {
    if let Some(id) = explicit.filter(|id| !id.trim().is_empty()) {
        return id.to_string();
    }
    if let Some(record) = dataset.iter().find(|r| r.rule_text == rule_text) {
        return record.id.clone();
    }
    let digest = Sha256::digest(rule_text.as_bytes());
    format!("rule-{}", &hex::encode(digest)[..8])
}

/// Everything an evaluation run reads, as file contents.
#[derive(Debug, Clone)]
pub struct EvalInputs {
    pub dataset: String,
    pub fixtures: String,
    pub exclude: Option<String>,
    pub sampling: SamplingConfig,
}

/// Replays `fixtures` over the dataset and scores the winners.
pub fn run_eval(inputs: &EvalInputs, prompts: &PromptConfig, swaps: &SwapSet) -> Result<EvalReport, WorkflowError> {
    let dataset = parse_dataset(&inputs.dataset)?;
    let provider = ReplayProvider::from_jsonl(&inputs.fixtures)?;
    let exclude: BTreeSet<String> = inputs.exclude.as_deref().map(parse_exclusions).unwrap_or_default();
    let (report, _) = evaluate_dataset(&dataset, &exclude, prompts, &provider, &inputs.sampling, swaps)?;
    Ok(report)
}
