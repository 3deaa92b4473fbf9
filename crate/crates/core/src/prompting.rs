//! Few-shot prompt rendering and extraction of formulas from model output.
//!
//! Two prompt styles are supported: plain input/output pairs, and
//! chain-of-thought triplets where every example also carries its
//! step-by-step decomposition and a fragment-to-proposition map, preceded by
//! an operator template that restricts the grammar.
//!
//! Prompts instruct the model to end its answer with a `FINAL_MTL:` line and,
//! in chain-of-thought mode, to list propositions between `PROPOSITIONS:` and
//! `END_PROPOSITIONS`. [`extract_candidate`] reads that contract back and
//! falls back to scanning for any parseable formula when the marker is
//! missing.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mtl::{collect_vocabulary, is_identifier, parse_formula, Formula, Operator};

pub const FINAL_MARKER: &str = "FINAL_MTL:";
pub const PROPOSITIONS_START: &str = "PROPOSITIONS:";
pub const PROPOSITIONS_END: &str = "END_PROPOSITIONS";

/// Ordered fragment → proposition pairs.
pub type PropositionMap = IndexMap<String, String>;

const DEFAULT_INSTRUCTION: &str = include_str!("../assets/prompts/instruction.txt");
const DEFAULT_TEMPLATE: &str = include_str!("../assets/prompts/template.txt");
const DEFAULT_VOCABULARY: &str = include_str!("../assets/prompts/vocabulary.txt");
const DEFAULT_EXAMPLES: &[(&str, &str)] = &[
    (
        "01_overtaking.example",
        include_str!("../assets/prompts/examples/01_overtaking.example"),
    ),
    (
        "02_stop_sign.example",
        include_str!("../assets/prompts/examples/02_stop_sign.example"),
    ),
];

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("invalid prompt configuration: {0}")]
    ConfigInvalid(String),
    #[error("{file}: {reason}")]
    ExampleFormat { file: String, reason: String },
    #[error("vocabulary line {line}: {reason}")]
    Vocabulary { line: usize, reason: String },
    #[error("cannot read prompt assets: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    Plain,
    #[default]
    Cot,
}

impl std::str::FromStr for PromptMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plain" => Ok(PromptMode::Plain),
            "cot" => Ok(PromptMode::Cot),
            other => Err(format!("unknown prompt mode `{other}` (expected plain or cot)")),
        }
    }
}

/// One worked example; `thought_steps` and `proposition_map` are present
/// exactly for chain-of-thought triplets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub rule_text: String,
    pub thought_steps: Option<Vec<String>>,
    pub proposition_map: Option<PropositionMap>,
    pub final_mtl: String,
}

impl FewShotExample {
    /// Parses the `RULE: / THOUGHTS: / PROPOSITIONS: / FINAL_MTL:` section format.
    pub fn parse(name: &str, text: &str) -> Result<Self, PromptError> {
        let err = |reason: String| PromptError::ExampleFormat {
            file: name.to_string(),
            reason,
        };
        let mut sections: IndexMap<&str, Vec<&str>> = IndexMap::new();
        let mut current: Option<&str> = None;
        for line in text.lines() {
            let trimmed = line.trim();
            let header = ["RULE:", "THOUGHTS:", PROPOSITIONS_START, FINAL_MARKER]
                .into_iter()
                .find(|h| trimmed.starts_with(h));
            if let Some(h) = header {
                if sections.contains_key(h) {
                    return Err(err(format!("duplicate section {h}")));
                }
                let rest = trimmed[h.len()..].trim();
                sections.insert(h, if rest.is_empty() { vec![] } else { vec![rest] });
                current = Some(h);
            } else if let Some(h) = current {
                if !trimmed.is_empty() {
                    sections[h].push(trimmed);
                }
            } else if !trimmed.is_empty() {
                return Err(err(format!("text before the first section: `{trimmed}`")));
            }
        }
        let rule_text = sections
            .get("RULE:")
            .filter(|l| !l.is_empty())
            .map(|l| l.join(" "))
            .ok_or_else(|| err("missing RULE section".into()))?;
        let final_mtl = match sections.get(FINAL_MARKER).map(Vec::as_slice) {
            Some([line]) => line.to_string(),
            Some(_) => return Err(err("FINAL_MTL must hold exactly one line".into())),
            None => return Err(err("missing FINAL_MTL section".into())),
        };
        let thought_steps = sections
            .get("THOUGHTS:")
            .map(|l| l.iter().map(|s| s.to_string()).collect());
        let proposition_map = match sections.get(PROPOSITIONS_START) {
            None => None,
            Some(lines) => {
                let mut map = PropositionMap::new();
                for l in lines {
                    let (fragment, prop) = split_proposition(l)
                        .ok_or_else(|| err(format!("proposition line without `=>`: `{l}`")))?;
                    map.insert(fragment, prop);
                }
                Some(map)
            }
        };
        Ok(FewShotExample {
            rule_text,
            thought_steps,
            proposition_map,
            final_mtl,
        })
    }

    fn is_triplet(&self) -> bool {
        self.thought_steps.is_some() && self.proposition_map.is_some()
    }

    /// The answer a model would give for this example, in the output contract.
    pub fn expected_output(&self, mode: PromptMode) -> String {
        let mut out = String::new();
        if mode == PromptMode::Cot {
            for step in self.thought_steps.iter().flatten() {
                out.push_str(step);
                out.push('\n');
            }
            if let Some(map) = &self.proposition_map {
                write_propositions(&mut out, map);
            }
        }
        out.push_str(FINAL_MARKER);
        out.push(' ');
        out.push_str(&self.final_mtl);
        out.push('\n');
        out
    }
}

fn split_proposition(line: &str) -> Option<(String, String)> {
    let (fragment, prop) = line.split_once("=>")?;
    let (fragment, prop) = (fragment.trim(), prop.trim());
    (!fragment.is_empty() && !prop.is_empty()).then(|| (fragment.to_string(), prop.to_string()))
}

fn write_propositions(out: &mut String, map: &PropositionMap) {
    out.push_str(PROPOSITIONS_START);
    out.push('\n');
    for (fragment, prop) in map {
        out.push_str(&format!("{fragment} => {prop}\n"));
    }
    out.push_str(PROPOSITIONS_END);
    out.push('\n');
}

/// An allowed predicate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateSpec {
    pub name: String,
    pub arity: usize,
    pub description: String,
}

impl fmt::Display for PredicateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.name, self.arity)
    }
}

/// Parses `name/arity` (e.g. `overtake/2`).
pub fn parse_predicate_signature(sig: &str) -> Option<(String, usize)> {
    let (name, arity) = sig.trim().split_once('/')?;
    (is_identifier(name)).then_some(())?;
    Some((name.to_string(), arity.parse().ok()?))
}

/// Parses vocabulary lines of the form `predicate/arity  description`.
pub fn parse_vocabulary(text: &str) -> Result<Vec<PredicateSpec>, PromptError> {
    let mut vocab = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (sig, description) = trimmed.split_once(char::is_whitespace).unwrap_or((trimmed, ""));
        let (name, arity) = parse_predicate_signature(sig).ok_or_else(|| PromptError::Vocabulary {
            line: i + 1,
            reason: format!("`{sig}` is not of the form predicate/arity"),
        })?;
        vocab.push(PredicateSpec {
            name,
            arity,
            description: description.trim().to_string(),
        });
    }
    Ok(vocab)
}

/// Everything needed to render a prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptConfig {
    pub mode: PromptMode,
    pub instruction_text: String,
    pub template_text: String,
    pub examples: Vec<FewShotExample>,
    pub predicate_vocabulary: Vec<PredicateSpec>,
}

impl PromptConfig {
    /// The shipped prompt assets.
    pub fn builtin(mode: PromptMode) -> Self {
        let examples = DEFAULT_EXAMPLES
            .iter()
            .map(|(name, text)| FewShotExample::parse(name, text).expect("shipped examples are well formed"))
            .collect();
        PromptConfig {
            mode,
            instruction_text: DEFAULT_INSTRUCTION.to_string(),
            template_text: DEFAULT_TEMPLATE.to_string(),
            examples,
            predicate_vocabulary: parse_vocabulary(DEFAULT_VOCABULARY).expect("shipped vocabulary is well formed"),
        }
    }

    /// Loads `instruction.txt`, `template.txt`, `vocabulary.txt` and
    /// `examples/*.example` (in file name order) from `dir`.
    pub fn load(dir: impl AsRef<Path>, mode: PromptMode) -> Result<Self, PromptError> {
        let dir = dir.as_ref();
        let mut paths: Vec<_> = std::fs::read_dir(dir.join("examples"))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "example"))
            .collect();
        paths.sort();
        let mut examples = Vec::with_capacity(paths.len());
        for path in paths {
            let text = std::fs::read_to_string(&path)?;
            examples.push(FewShotExample::parse(&path.display().to_string(), &text)?);
        }
        let config = PromptConfig {
            mode,
            instruction_text: std::fs::read_to_string(dir.join("instruction.txt"))?,
            template_text: std::fs::read_to_string(dir.join("template.txt"))?,
            examples,
            predicate_vocabulary: parse_vocabulary(&std::fs::read_to_string(dir.join("vocabulary.txt"))?)?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_mode(mut self, mode: PromptMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        let invalid = |m: String| Err(PromptError::ConfigInvalid(m));
        if self.examples.is_empty() {
            return invalid("at least one few-shot example is required".into());
        }
        for (i, ex) in self.examples.iter().enumerate() {
            if let Err(e) = parse_formula(&ex.final_mtl) {
                return invalid(format!("example {}: FINAL_MTL does not parse: {e}", i + 1));
            }
            if ex.thought_steps.is_some() != ex.proposition_map.is_some() {
                return invalid(format!(
                    "example {}: thought steps and proposition map must be given together",
                    i + 1
                ));
            }
            if self.mode == PromptMode::Cot && !ex.is_triplet() {
                return invalid(format!("example {}: chain-of-thought mode needs thought steps", i + 1));
            }
        }
        let listed = template_operators(&self.template_text).map_err(PromptError::ConfigInvalid)?;
        let supported: BTreeSet<Operator> = TEMPLATE_KEYS.iter().map(|(_, op)| *op).collect();
        if listed != supported {
            let missing: Vec<String> = supported.difference(&listed).map(|o| o.to_string()).collect();
            return invalid(format!("template does not list operators: {}", missing.join(" ")));
        }
        Ok(())
    }
}

const TEMPLATE_KEYS: &[(&str, Operator)] = &[
    ("G", Operator::G),
    ("F", Operator::F),
    ("X", Operator::X),
    ("P", Operator::P),
    ("U", Operator::U),
    ("NOT", Operator::Not),
    ("AND", Operator::And),
    ("OR", Operator::Or),
    ("IMPLIES", Operator::Implies),
];

/// Operators listed by a template: every non-comment line starts with a key.
fn template_operators(template: &str) -> Result<BTreeSet<Operator>, String> {
    let mut ops = BTreeSet::new();
    for (i, line) in template.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let key = trimmed.split_whitespace().next().unwrap_or_default();
        let op = TEMPLATE_KEYS
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, op)| *op)
            .ok_or_else(|| format!("template line {}: unknown operator key `{key}`", i + 1))?;
        ops.insert(op);
    }
    Ok(ops)
}

/// Renders the full prompt for `rule_text`.
pub fn render_prompt(config: &PromptConfig, rule_text: &str) -> Result<String, PromptError> {
    config.validate()?;
    if rule_text.trim().is_empty() {
        return Err(PromptError::ConfigInvalid("rule text is empty".into()));
    }
    let cot = config.mode == PromptMode::Cot;
    let mut out = String::new();
    out.push_str(config.instruction_text.trim_end());
    out.push_str("\n\nAnswer format:\n");
    if cot {
        out.push_str("- Think step by step: split the rule into sub-rules, translate each sub-rule, then combine them.\n");
        out.push_str(&format!(
            "- List the fragment-to-proposition map between a line `{PROPOSITIONS_START}` and a line `{PROPOSITIONS_END}`, one `fragment => proposition` pair per line.\n"
        ));
    }
    out.push_str(&format!(
        "- The last line of the answer must be `{FINAL_MARKER} <formula>` with exactly one formula and nothing else.\n"
    ));
    if cot {
        out.push_str("\nMTL template:\n");
        for line in config.template_text.lines().filter(|l| !l.trim_start().starts_with('#')) {
            out.push_str(line.trim_end());
            out.push('\n');
        }
    }
    if !config.predicate_vocabulary.is_empty() {
        out.push_str("\nAllowed predicates:\n");
        for p in &config.predicate_vocabulary {
            if p.description.is_empty() {
                out.push_str(&format!("{p}\n"));
            } else {
                out.push_str(&format!("{p}  {}\n", p.description));
            }
        }
    }
    for (i, ex) in config.examples.iter().enumerate() {
        out.push_str(&format!("\nExample {}\nRule: {}\n", i + 1, ex.rule_text.trim()));
        if cot {
            out.push_str("Thought process:\n");
        }
        out.push_str(&ex.expected_output(config.mode));
    }
    out.push_str(&format!("\nRule: {}\n", rule_text.trim()));
    if cot {
        out.push_str("Thought process:\n");
    } else {
        out.push_str(FINAL_MARKER);
        out.push('\n');
    }
    Ok(out)
}

/// What could be read from one raw model output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extraction {
    /// The text the formula was parsed from, if a candidate line was found.
    pub formula_text: Option<String>,
    pub formula: Option<Formula>,
    pub parse_error: Option<String>,
    pub proposition_map: Option<PropositionMap>,
    pub thought_steps: Vec<String>,
}

fn clean_formula_text(s: &str) -> &str {
    s.trim().trim_matches(|c: char| c == '`' || c == '$' || c == '.' || c.is_whitespace())
}

fn is_step_line(line: &str) -> bool {
    let lower = line.to_ascii_lowercase();
    if let Some(rest) = lower.strip_prefix("step") {
        return rest.trim_start().starts_with(|c: char| c.is_ascii_digit());
    }
    let digits = line.chars().take_while(char::is_ascii_digit).count();
    digits > 0 && matches!(line[digits..].chars().next(), Some('.' | ')'))
}

/// Reads the formula, proposition map and reasoning steps out of `raw_output`.
///
/// The last `FINAL_MTL:` line wins. Without a marker, lines are scanned
/// bottom-up for the first one (or the part after its last `:`) that parses
/// as something other than a bare identifier. A marker whose formula does
/// not parse is reported as a parse failure.
pub fn extract_candidate(raw_output: &str) -> Extraction {
    let lines: Vec<&str> = raw_output.lines().collect();

    let mut proposition_map = None;
    let mut i = 0;
    while i < lines.len() {
        if lines[i].trim().starts_with(PROPOSITIONS_START) {
            let mut map = PropositionMap::new();
            let mut j = i + 1;
            while j < lines.len() && !lines[j].trim().starts_with(PROPOSITIONS_END) {
                if let Some((fragment, prop)) = split_proposition(lines[j]) {
                    map.insert(fragment, prop);
                }
                j += 1;
            }
            proposition_map = Some(map);
            i = j;
        }
        i += 1;
    }

    let first_block = lines
        .iter()
        .position(|l| {
            let t = l.trim();
            t.starts_with(PROPOSITIONS_START) || t.contains(FINAL_MARKER)
        })
        .unwrap_or(lines.len());
    let thought_steps = lines[..first_block]
        .iter()
        .map(|l| l.trim())
        .filter(|l| is_step_line(l))
        .map(str::to_string)
        .collect();

    let (formula_text, formula, parse_error) = match raw_output.rfind(FINAL_MARKER) {
        Some(at) => {
            let rest = &raw_output[at + FINAL_MARKER.len()..];
            let text = clean_formula_text(rest.lines().next().unwrap_or_default()).to_string();
            match parse_formula(&text) {
                Ok(f) => (Some(text), Some(f), None),
                Err(e) => (Some(text), None, Some(e.to_string())),
            }
        }
        None => match fallback_formula(&lines) {
            Some((text, f)) => (Some(text), Some(f), None),
            None => (
                None,
                None,
                Some(format!("no {FINAL_MARKER} line and no parseable formula in the output")),
            ),
        },
    };

    Extraction {
        formula_text,
        formula,
        parse_error,
        proposition_map,
        thought_steps,
    }
}

fn fallback_formula(lines: &[&str]) -> Option<(String, Formula)> {
    for line in lines.iter().rev() {
        let whole = clean_formula_text(line);
        let mut options = vec![whole];
        if let Some((_, tail)) = line.rsplit_once(':') {
            options.push(clean_formula_text(tail));
        }
        for text in options {
            if text.is_empty() || is_identifier(text) {
                continue;
            }
            if let Ok(f) = parse_formula(text) {
                return Some((text.to_string(), f));
            }
        }
    }
    None
}

/// A predicate used by a formula but absent from the vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VocabViolation {
    pub predicate: String,
    pub arity: usize,
}

impl fmt::Display for VocabViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.predicate, self.arity)
    }
}

/// Every `(predicate, arity)` of `f` that `vocab` does not allow, sorted.
pub fn check_vocabulary(f: &Formula, vocab: &[PredicateSpec]) -> Vec<VocabViolation> {
    collect_vocabulary(f)
        .predicates
        .into_iter()
        .filter(|(name, arity)| !vocab.iter().any(|p| &p.name == name && p.arity == *arity))
        .map(|(predicate, arity)| VocabViolation { predicate, arity })
        .collect()
}
