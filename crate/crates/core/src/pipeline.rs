//! Translation of one rule: prompt, sample, extract, vote.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equiv::{canonicalize_lenient, SwapSet};
use crate::llm::{CompletionProvider, CompletionRequest, LlmError, SamplingConfig};
use crate::mtl::Formula;
use crate::prompting::{check_vocabulary, extract_candidate, render_prompt, PromptConfig, PromptError, PropositionMap, VocabViolation};

/// One sampled model output and what was read from it.
///
/// Exactly one of `formula` and `parse_error` is set; `canonical` is set
/// whenever `formula` is.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationCandidate {
    pub sample_index: usize,
    pub raw_output: String,
    pub formula: Option<Formula>,
    /// Printed form of `formula`.
    pub formula_text: Option<String>,
    pub canonical: Option<Formula>,
    /// Printed form of `canonical`; the key this candidate votes under.
    pub canonical_text: Option<String>,
    pub proposition_map: Option<PropositionMap>,
    pub thought_steps: Vec<String>,
    pub vocab_violations: Vec<VocabViolation>,
    pub parse_error: Option<String>,
}

impl TranslationCandidate {
    /// Extracts and canonicalizes one raw output.
    pub fn from_raw(sample_index: usize, raw_output: String, config: &PromptConfig, swaps: &SwapSet) -> Self {
        let extraction = extract_candidate(&raw_output);
        let canonical = extraction.formula.as_ref().map(|f| canonicalize_lenient(f, swaps));
        let vocab_violations = extraction
            .formula
            .as_ref()
            .filter(|_| !config.predicate_vocabulary.is_empty())
            .map(|f| check_vocabulary(f, &config.predicate_vocabulary))
            .unwrap_or_default();
        TranslationCandidate {
            sample_index,
            formula_text: extraction.formula.as_ref().map(Formula::to_string),
            canonical_text: canonical.as_ref().map(Formula::to_string),
            formula: extraction.formula,
            canonical,
            proposition_map: extraction.proposition_map,
            thought_steps: extraction.thought_steps,
            vocab_violations,
            parse_error: extraction.parse_error,
            raw_output,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationResult {
    pub rule_id: String,
    pub rule_text: String,
    /// Ordered by `sample_index`.
    pub candidates: Vec<TranslationCandidate>,
    /// `sample_index` of the winning candidate; absent iff nothing parsed.
    pub winner: Option<usize>,
    /// Votes per printed canonical form.
    pub vote_tally: BTreeMap<String, usize>,
}

impl TranslationResult {
    pub fn winner_candidate(&self) -> Option<&TranslationCandidate> {
        let idx = self.winner?;
        self.candidates.iter().find(|c| c.sample_index == idx)
    }

    pub fn winner_formula(&self) -> Option<&Formula> {
        self.winner_candidate().and_then(|c| c.formula.as_ref())
    }

    /// Assembles a result from already extracted candidates.
    pub fn from_candidates(rule_id: String, rule_text: String, mut candidates: Vec<TranslationCandidate>) -> Self {
        candidates.sort_by_key(|c| c.sample_index);
        let (winner, vote_tally) = majority_vote(&candidates);
        TranslationResult {
            rule_id,
            rule_text,
            candidates,
            winner,
            vote_tally,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// Modal canonical form over the parseable candidates.
///
/// Ties go to the form whose earliest sample index is lowest, and the winner
/// is that form's earliest candidate, so the result does not depend on the
/// order of `candidates`.
pub fn majority_vote(candidates: &[TranslationCandidate]) -> (Option<usize>, BTreeMap<String, usize>) {
    // canonical form -> (votes, earliest sample index)
    let mut forms: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for c in candidates {
        if let Some(key) = &c.canonical_text {
            let entry = forms.entry(key.clone()).or_insert((0, c.sample_index));
            entry.0 += 1;
            entry.1 = entry.1.min(c.sample_index);
        }
    }
    let winner = forms
        .values()
        .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))
        .map(|&(_, first)| first);
    let tally = forms.into_iter().map(|(k, (n, _))| (k, n)).collect();
    (winner, tally)
}

/// Samples `sampling.samples_per_rule` completions and votes over them.
///
/// Completions run concurrently; the result only depends on the outputs per
/// sample index. A provider failure on any sample fails the whole call.
pub fn translate(
    rule_id: &str,
    rule_text: &str,
    config: &PromptConfig,
    provider: &dyn CompletionProvider,
    sampling: &SamplingConfig,
    swaps: &SwapSet,
) -> Result<TranslationResult, PipelineError> {
    sampling.validate()?;
    let prompt = render_prompt(config, rule_text)?;
    let outputs: Vec<Result<String, LlmError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..sampling.samples_per_rule)
            .map(|sample_index| {
                let prompt = prompt.as_str();
                scope.spawn(move || {
                    provider.complete(&CompletionRequest {
                        rule_id,
                        prompt,
                        sampling,
                        sample_index,
                    })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("completion thread panicked")).collect()
    });
    let mut candidates = Vec::with_capacity(outputs.len());
    for (sample_index, output) in outputs.into_iter().enumerate() {
        candidates.push(TranslationCandidate::from_raw(sample_index, output?, config, swaps));
    }
    Ok(TranslationResult::from_candidates(
        rule_id.to_string(),
        rule_text.to_string(),
        candidates,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{FixtureRecord, ReplayProvider};
    use crate::prompting::PromptMode;

    fn replay(rule: &str, outputs: &[&str]) -> ReplayProvider {
        ReplayProvider::from_records(outputs.iter().enumerate().map(|(i, o)| FixtureRecord {
            rule_id: rule.into(),
            sample_index: i,
            raw_output: o.to_string(),
        }))
        .unwrap()
    }

    fn run(outputs: &[&str]) -> TranslationResult {
        let provider = replay("r", outputs);
        let sampling = SamplingConfig {
            samples_per_rule: outputs.len(),
            ..SamplingConfig::default()
        };
        translate(
            "r",
            "some rule",
            &PromptConfig::builtin(PromptMode::Cot),
            &provider,
            &sampling,
            &SwapSet::empty(),
        )
        .unwrap()
    }

    #[test]
    fn three_against_two() {
        let r = run(&[
            "FINAL_MTL: G(p)",
            "FINAL_MTL: F(p)",
            "FINAL_MTL: G(p)",
            "FINAL_MTL: F(p)",
            "FINAL_MTL: G((p))",
        ]);
        assert_eq!(r.winner, Some(0));
        assert_eq!(r.winner_formula().unwrap().to_string(), "G(p)");
        let tally: BTreeMap<String, usize> = [("G(p)".to_string(), 3), ("F(p)".to_string(), 2)].into();
        assert_eq!(r.vote_tally, tally);
    }

    #[test]
    fn nothing_parses() {
        let r = run(&["no idea", "FINAL_MTL: G(", "sorry", "???", "FINAL_MTL:"]);
        assert_eq!(r.winner, None);
        assert!(r.vote_tally.is_empty());
        assert_eq!(r.candidates.len(), 5);
        assert!(r.candidates.iter().all(|c| c.parse_error.is_some() && c.formula.is_none() && c.canonical.is_none()));
    }

    #[test]
    fn tie_goes_to_earliest_form() {
        // A first appears at sample 1, B at sample 0
        let r = run(&[
            "FINAL_MTL: F(b)",
            "FINAL_MTL: G(a)",
            "FINAL_MTL: G(a)",
            "FINAL_MTL: F(b)",
            "FINAL_MTL: X(c)",
        ]);
        assert_eq!(r.winner, Some(0));
        assert_eq!(r.winner_formula().unwrap().to_string(), "F(b)");
    }

    #[test]
    fn reordered_operands_share_a_vote() {
        let r = run(&["FINAL_MTL: G(a & b)", "FINAL_MTL: G(b & a)", "FINAL_MTL: G(a | b)"]);
        assert_eq!(r.vote_tally["G(a & b)"], 2);
        assert_eq!(r.winner, Some(0));
    }

    #[test]
    fn vocabulary_violations_are_reported_not_filtered() {
        let r = run(&["FINAL_MTL: G(overtaking(ego,other))", "FINAL_MTL: G(overtaking(ego,other))"]);
        assert_eq!(r.winner, Some(0));
        assert_eq!(r.candidates[0].vocab_violations[0].to_string(), "overtaking/2");
    }

    #[test]
    fn fixture_miss_propagates() {
        let provider = replay("r", &["FINAL_MTL: p"]);
        let err = translate(
            "r",
            "rule",
            &PromptConfig::builtin(PromptMode::Plain),
            &provider,
            &SamplingConfig::default(),
            &SwapSet::empty(),
        )
        .unwrap_err();
        assert!(matches!(err, PipelineError::Llm(LlmError::FixtureMiss { sample_index: 1, .. })));
    }

    #[test]
    fn vote_ignores_candidate_order() {
        let r = run(&["FINAL_MTL: F(b)", "FINAL_MTL: G(a)", "FINAL_MTL: G(a)", "FINAL_MTL: F(b)"]);
        let mut reversed = r.candidates.clone();
        reversed.reverse();
        assert_eq!(majority_vote(&reversed), (r.winner, r.vote_tally.clone()));
    }
}
