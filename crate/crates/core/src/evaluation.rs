//! Rule datasets, scoring against gold formulas and report rendering.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equiv::{classify_error, ErrorClass, SwapSet};
use crate::llm::{CompletionProvider, SamplingConfig};
use crate::mtl::{parse_formula, Formula, ParseError};
use crate::pipeline::{translate, PipelineError, TranslationResult};
use crate::prompting::{parse_predicate_signature, PromptConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RuleSource {
    /// German road traffic regulation.
    StVO,
    /// Vienna Convention on Road Traffic.
    VCoRT,
    #[serde(rename = "other")]
    Other,
}

/// One dataset entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleRecord {
    pub id: String,
    pub source: RuleSource,
    pub rule_text: String,
    pub gold_mtl: String,
    /// Allowed predicates as `name/arity` signatures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicates: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

impl RuleRecord {
    pub fn gold_formula(&self) -> Result<Formula, ParseError> {
        parse_formula(&self.gold_mtl)
    }

    fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("id is empty".into());
        }
        if self.rule_text.trim().is_empty() {
            return Err("rule_text is empty".into());
        }
        self.gold_formula().map_err(|e| format!("gold_mtl does not parse: {e}"))?;
        for sig in self.predicates.iter().flatten() {
            if parse_predicate_signature(sig).is_none() {
                return Err(format!("predicate `{sig}` is not of the form name/arity"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum DatasetFormatError {
    #[error("dataset line {line}: {reason}")]
    Record { line: usize, reason: String },
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Parses one JSON record per line; blank lines are skipped.
pub fn parse_dataset(text: &str) -> Result<Vec<RuleRecord>, DatasetFormatError> {
    let mut records = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |reason: String| DatasetFormatError::Record { line: i + 1, reason };
        let record: RuleRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        record.validate().map_err(err)?;
        if !ids.insert(record.id.clone()) {
            return Err(err(format!("duplicate id `{}`", record.id)));
        }
        records.push(record);
    }
    Ok(records)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<RuleRecord>, DatasetFormatError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DatasetFormatError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&text)
}

/// Ids listed one per line; blank lines and `#` comments are ignored.
pub fn parse_exclusions(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleVerdict {
    /// Printed winning formula, absent when no sample parsed.
    pub winner: Option<String>,
    pub class: ErrorClass,
    /// Manual inspection result; supersedes `class` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_verdict: Option<ErrorClass>,
}

impl RuleVerdict {
    pub fn effective_class(&self) -> ErrorClass {
        self.human_verdict.unwrap_or(self.class)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_rule: BTreeMap<String, RuleVerdict>,
    /// `correct_count / evaluated_count`, 0 when nothing was evaluated.
    pub accuracy: f64,
    pub correct_count: usize,
    pub evaluated_count: usize,
    /// Non-zero class counts; they sum to `evaluated_count`.
    pub error_histogram: BTreeMap<ErrorClass, usize>,
    /// Dataset ids without a translation result.
    pub skipped: Vec<String>,
}

impl EvalReport {
    fn from_verdicts(per_rule: BTreeMap<String, RuleVerdict>, skipped: Vec<String>) -> Self {
        let mut error_histogram = BTreeMap::new();
        for v in per_rule.values() {
            *error_histogram.entry(v.effective_class()).or_insert(0) += 1;
        }
        let evaluated_count = per_rule.len();
        let correct_count = error_histogram.get(&ErrorClass::Correct).copied().unwrap_or(0);
        let accuracy = if evaluated_count == 0 {
            0.0
        } else {
            correct_count as f64 / evaluated_count as f64
        };
        EvalReport {
            per_rule,
            accuracy,
            correct_count,
            evaluated_count,
            error_histogram,
            skipped,
        }
    }

    /// Records a manual verdict for `id` and recomputes the totals.
    /// Returns `false` if `id` was not evaluated.
    pub fn set_human_verdict(&mut self, id: &str, verdict: Option<ErrorClass>) -> bool {
        let Some(v) = self.per_rule.get_mut(id) else {
            return false;
        };
        v.human_verdict = verdict;
        *self = Self::from_verdicts(std::mem::take(&mut self.per_rule), std::mem::take(&mut self.skipped));
        true
    }

    /// Accuracy as a percentage truncated to two decimals, e.g. `72.91%`,
    /// or `n/a` when nothing was evaluated.
    pub fn accuracy_percent(&self) -> String {
        percent(self.correct_count, self.evaluated_count)
    }
}

/// `part / whole` as a percentage truncated (not rounded) to two decimals.
pub fn percent(part: usize, whole: usize) -> String {
    if whole == 0 {
        return "n/a".to_string();
    }
    let basis_points = (part as u128 * 10_000) / whole as u128;
    format!("{}.{:02}%", basis_points / 100, basis_points % 100)
}

/// Scores the winners in `results` against the dataset's gold formulas.
///
/// Rules without a result are listed in `skipped`; a rule whose winner is
/// absent counts as a grammar violation.
pub fn score(dataset: &[RuleRecord], results: &HashMap<String, TranslationResult>, swaps: &SwapSet) -> EvalReport {
    let mut per_rule = BTreeMap::new();
    let mut skipped = Vec::new();
    for record in dataset {
        let (Some(result), Ok(gold)) = (results.get(&record.id), record.gold_formula()) else {
            skipped.push(record.id.clone());
            continue;
        };
        let winner = result.winner_formula();
        per_rule.insert(
            record.id.clone(),
            RuleVerdict {
                winner: winner.map(Formula::to_string),
                class: classify_error(&gold, winner, swaps),
                human_verdict: None,
            },
        );
    }
    skipped.sort();
    EvalReport::from_verdicts(per_rule, skipped)
}

/// Translates every non-excluded rule and scores the winners.
pub fn evaluate_dataset(
    dataset: &[RuleRecord],
    exclude: &BTreeSet<String>,
    config: &PromptConfig,
    provider: &dyn CompletionProvider,
    sampling: &SamplingConfig,
    swaps: &SwapSet,
) -> Result<(EvalReport, HashMap<String, TranslationResult>), PipelineError> {
    let included: Vec<RuleRecord> = dataset.iter().filter(|r| !exclude.contains(&r.id)).cloned().collect();
    let mut results = HashMap::new();
    for record in &included {
        let result = translate(&record.id, &record.rule_text, config, provider, sampling, swaps)?;
        results.insert(record.id.clone(), result);
    }
    Ok((score(&included, &results, swaps), results))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Structured,
}

pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Structured => serde_json::to_string_pretty(report).expect("reports always serialize"),
        ReportFormat::Text => render_text(report),
    }
}

pub fn parse_report(text: &str) -> Result<EvalReport, serde_json::Error> {
    serde_json::from_str(text)
}

fn render_text(report: &EvalReport) -> String {
    let mut out = String::new();
    let n = report.evaluated_count;
    writeln!(out, "Evaluated rules: {n}").unwrap();
    writeln!(out, "Accuracy: {} ({}/{n})", report.accuracy_percent(), report.correct_count).unwrap();
    writeln!(out, "\nError distribution:").unwrap();
    for class in ErrorClass::ALL {
        let count = report.error_histogram.get(&class).copied().unwrap_or(0);
        writeln!(out, "  {:<26} {:>4}  {:>8}", class.as_str(), count, percent(count, n)).unwrap();
    }
    if !report.per_rule.is_empty() {
        writeln!(out, "\nPer-rule verdicts:").unwrap();
        let width = report.per_rule.keys().map(String::len).max().unwrap_or(0);
        for (id, v) in &report.per_rule {
            let class = match v.human_verdict {
                Some(h) => format!("{} (manual)", h.as_str()),
                None => v.class.as_str().to_string(),
            };
            let winner = v.winner.as_deref().unwrap_or("-");
            writeln!(out, "  {id:<width$}  {class:<26}  {winner}").unwrap();
        }
    }
    if !report.skipped.is_empty() {
        writeln!(out, "\nSkipped (no translation): {}", report.skipped.join(", ")).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::TranslationCandidate;
    use crate::prompting::{PromptConfig, PromptMode};

    fn record(id: &str, gold: &str) -> RuleRecord {
        RuleRecord {
            id: id.into(),
            source: RuleSource::StVO,
            rule_text: format!("rule {id}"),
            gold_mtl: gold.into(),
            predicates: None,
            notes: None,
        }
    }

    fn result(id: &str, outputs: &[&str]) -> TranslationResult {
        let config = PromptConfig::builtin(PromptMode::Plain);
        let candidates = outputs
            .iter()
            .enumerate()
            .map(|(i, o)| TranslationCandidate::from_raw(i, o.to_string(), &config, &SwapSet::empty()))
            .collect();
        TranslationResult::from_candidates(id.into(), format!("rule {id}"), candidates)
    }

    #[test]
    fn table_one_records() {
        let text = include_str!("../../../data/table1.jsonl");
        let records = parse_dataset(text).unwrap();
        assert_eq!(records.len(), 3);
        for r in &records {
            r.gold_formula().unwrap();
        }
    }

    #[test]
    fn empty_dataset() {
        assert!(parse_dataset("").unwrap().is_empty());
        assert!(parse_dataset("\n\n").unwrap().is_empty());
    }

    #[test]
    fn duplicate_id_reports_line() {
        let mut lines: Vec<String> = (0..6)
            .map(|i| serde_json::to_string(&record(&format!("r{i}"), "G(p)")).unwrap())
            .collect();
        lines.push(serde_json::to_string(&record("r3", "G(p)")).unwrap());
        let err = parse_dataset(&lines.join("\n")).unwrap_err();
        assert!(matches!(err, DatasetFormatError::Record { line: 7, .. }), "{err}");
    }

    #[test]
    fn invalid_records() {
        let bad_gold = serde_json::to_string(&record("a", "G(p")).unwrap();
        assert!(matches!(parse_dataset(&bad_gold), Err(DatasetFormatError::Record { line: 1, .. })));
        let mut r = record("a", "p");
        r.rule_text = " ".into();
        assert!(parse_dataset(&serde_json::to_string(&r).unwrap()).is_err());
        let bad_source = r#"{"id":"a","source":"HighwayCode","rule_text":"x","gold_mtl":"p"}"#;
        assert!(parse_dataset(bad_source).is_err());
        let bad_pred = r#"{"id":"a","source":"other","rule_text":"x","gold_mtl":"p","predicates":["p"]}"#;
        assert!(parse_dataset(bad_pred).is_err());
        let ok = r#"{"id":"a","source":"VCoRT","rule_text":"x","gold_mtl":"p","predicates":["p/0"],"notes":"n"}"#;
        assert_eq!(parse_dataset(ok).unwrap()[0].predicates.as_ref().unwrap()[0], "p/0");
    }

    #[test]
    fn thirty_five_of_forty_eight() {
        let dataset: Vec<RuleRecord> = (0..48).map(|i| record(&format!("r{i:02}"), "G(p)")).collect();
        let results: HashMap<String, TranslationResult> = dataset
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let out = if i < 35 { "FINAL_MTL: G(p)" } else { "FINAL_MTL: F(p)" };
                (r.id.clone(), result(&r.id, &[out]))
            })
            .collect();
        let report = score(&dataset, &results, &SwapSet::empty());
        assert_eq!(report.evaluated_count, 48);
        assert_eq!(report.correct_count, 35);
        assert!((report.accuracy - 0.72916).abs() < 1e-4);
        assert_eq!(report.accuracy_percent(), "72.91%");
        assert!(render_report(&report, ReportFormat::Text).contains("72.91%"));
    }

    #[test]
    fn all_correct_and_all_absent() {
        let dataset: Vec<RuleRecord> = (0..4).map(|i| record(&format!("r{i}"), "G(a & b)")).collect();
        let good: HashMap<_, _> = dataset
            .iter()
            .map(|r| (r.id.clone(), result(&r.id, &["FINAL_MTL: G(b & a)"])))
            .collect();
        let report = score(&dataset, &good, &SwapSet::empty());
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.error_histogram, BTreeMap::from([(ErrorClass::Correct, 4)]));

        let bad: HashMap<_, _> = dataset
            .iter()
            .map(|r| (r.id.clone(), result(&r.id, &["nothing useful"])))
            .collect();
        let report = score(&dataset, &bad, &SwapSet::empty());
        assert_eq!(report.accuracy, 0.0);
        assert_eq!(report.error_histogram, BTreeMap::from([(ErrorClass::GrammarViolation, 4)]));
    }

    #[test]
    fn missing_results_are_skipped() {
        let dataset = vec![record("a", "p"), record("b", "q")];
        let results = HashMap::from([("a".to_string(), result("a", &["FINAL_MTL: p"]))]);
        let report = score(&dataset, &results, &SwapSet::empty());
        assert_eq!(report.evaluated_count, 1);
        assert_eq!(report.skipped, vec!["b".to_string()]);
    }

    #[test]
    fn rendering() {
        let dataset = vec![record("a", "p"), record("b", "q")];
        let results = HashMap::from([
            ("a".to_string(), result("a", &["FINAL_MTL: p"])),
            ("b".to_string(), result("b", &["FINAL_MTL: r"])),
        ]);
        let report = score(&dataset, &results, &SwapSet::empty());
        assert_eq!(report.accuracy, 0.5);
        let text = render_report(&report, ReportFormat::Text);
        assert!(text.contains("50.00%"));
        assert!(text.contains("wrong_predicate"));
        let structured = render_report(&report, ReportFormat::Structured);
        assert_eq!(parse_report(&structured).unwrap(), report);

        let empty = score(&[], &HashMap::new(), &SwapSet::empty());
        assert_eq!(empty.evaluated_count, 0);
        assert!(render_report(&empty, ReportFormat::Text).contains("Accuracy: n/a"));
    }

    #[test]
    fn manual_verdict_supersedes() {
        let dataset = vec![record("a", "p"), record("b", "q")];
        let results = HashMap::from([
            ("a".to_string(), result("a", &["FINAL_MTL: p"])),
            ("b".to_string(), result("b", &["FINAL_MTL: r"])),
        ]);
        let mut report = score(&dataset, &results, &SwapSet::empty());
        assert!(report.set_human_verdict("b", Some(ErrorClass::Correct)));
        assert_eq!(report.correct_count, 2);
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.per_rule["b"].class, ErrorClass::WrongPredicate);
        assert!(!report.set_human_verdict("zzz", None));
        let text = render_report(&report, ReportFormat::Text);
        assert!(text.contains("correct (manual)"));
        assert_eq!(parse_report(&render_report(&report, ReportFormat::Structured)).unwrap(), report);
    }

    #[test]
    fn percent_truncates() {
        assert_eq!(percent(35, 48), "72.91%");
        assert_eq!(percent(2, 3), "66.66%");
        assert_eq!(percent(11, 48), "22.91%");
        assert_eq!(percent(21, 48), "43.75%");
        assert_eq!(percent(5, 48), "10.41%");
        assert_eq!(percent(0, 5), "0.00%");
        assert_eq!(percent(5, 5), "100.00%");
        assert_eq!(percent(0, 0), "n/a");
    }
}
