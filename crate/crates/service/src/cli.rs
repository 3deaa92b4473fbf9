//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 usage or parse errors, 2 rule violated
//! (`monitor`), 3 provider or fixture errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use traffic_mtl::equiv::{canonicalize, SwapSet};
use traffic_mtl::evaluation::{load_dataset, render_report, ReportFormat, RuleRecord};
use traffic_mtl::llm::{connect, ApiFlavor, CompletionProvider, HttpChatSpec, LlmError, ProviderSpec, SamplingConfig};
use traffic_mtl::pipeline::{translate, TranslationResult};
use traffic_mtl::prompting::{PromptConfig, PromptMode};
use traffic_mtl::semantics::{monitor, Trace};
use traffic_mtl::{parse_formula, ParseError};

use crate::api::{router, AppState};
use crate::store::ReviewStore;
use crate::workflow::{resolve_rule_id, run_eval, EvalInputs, WorkflowError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VIOLATED: i32 = 2;
pub const EXIT_PROVIDER: i32 = 3;

#[derive(Parser)]
#[command(name = "traffic-mtl", version, about = "Translate traffic rules to MTL, monitor traces and score translations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a formula and print its canonical form.
    Parse(ParseArgs),
    /// Translate one rule by sampling a model and voting.
    Translate(TranslateArgs),
    /// Score replayed translations of a dataset against its gold formulas.
    Eval(EvalArgs),
    /// Check a formula against a trace file.
    Monitor(MonitorArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct ParseArgs {
    formula: String,
    /// Print the syntax tree as JSON instead.
    #[arg(long)]
    ast: bool,
    /// Print the formula as written, without canonicalizing.
    #[arg(long, conflicts_with = "ast")]
    raw: bool,
    /// Predicate symmetries (JSON list of {from, to, perm}).
    #[arg(long)]
    swaps: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProviderKind {
    Replay,
    Http,
}

#[derive(Clone, Copy, ValueEnum)]
enum Flavor {
    Chat,
    TextGeneration,
}

#[derive(Args)]
struct ProviderArgs {
    #[arg(long, value_enum, default_value = "replay")]
    provider: ProviderKind,
    /// Recorded outputs (JSONL of {rule_id, sample_index, raw_output}).
    #[arg(long)]
    fixtures: Option<PathBuf>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, default_value = "gpt-4")]
    model: String,
    #[arg(long, value_enum, default_value = "chat")]
    flavor: Flavor,
    /// Environment variable holding the API key.
    #[arg(long)]
    api_key_env: Option<String>,
    #[arg(long, default_value_t = 60)]
    timeout_secs: u64,
    #[arg(long, default_value_t = 3)]
    max_retries: u32,
    /// Upper bound on concurrent requests to a live endpoint.
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
}

impl ProviderArgs {
    fn spec(&self) -> Result<ProviderSpec, String> {
        match self.provider {
            ProviderKind::Replay => {
                let path = self.fixtures.clone().ok_or("--provider replay needs --fixtures")?;
                Ok(ProviderSpec::Replay { fixture_path: path })
            }
            ProviderKind::Http => {
                let endpoint = self.endpoint.clone().ok_or("--provider http needs --endpoint")?;
                Ok(ProviderSpec::HttpChat(HttpChatSpec {
                    flavor: match self.flavor {
                        Flavor::Chat => ApiFlavor::OpenAiChat,
                        Flavor::TextGeneration => ApiFlavor::TextGeneration,
                    },
                    api_key_env: self.api_key_env.clone(),
                    timeout_secs: self.timeout_secs,
                    max_retries: self.max_retries,
                    max_in_flight: self.max_in_flight,
                    ..HttpChatSpec::new(endpoint, self.model.clone())
                }))
            }
        }
    }
}

#[derive(Args)]
struct PromptArgs {
    #[arg(long, value_parser = parse_mode, default_value = "cot")]
    mode: PromptMode,
    /// Directory with instruction.txt, template.txt, vocabulary.txt and examples/.
    #[arg(long)]
    prompts: Option<PathBuf>,
    #[arg(long)]
    swaps: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    samples: usize,
    #[arg(long, default_value_t = 0.25)]
    temperature: f64,
    #[arg(long, default_value_t = 1.0)]
    top_p: f64,
}

fn parse_mode(s: &str) -> Result<PromptMode, String> {
    s.parse()
}

impl PromptArgs {
    fn sampling(&self) -> SamplingConfig {
        SamplingConfig {
            temperature: self.temperature,
            top_p: self.top_p,
            samples_per_rule: self.samples,
            ..SamplingConfig::default()
        }
    }
}

#[derive(Args)]
struct TranslateArgs {
    #[arg(long)]
    rule: String,
    /// Fixture key for the rule; defaults to the dataset id for this text or a content hash.
    #[arg(long)]
    rule_id: Option<String>,
    /// Dataset used to look up the rule id.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Print the full result as JSON.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    prompt: PromptArgs,
    #[command(flatten)]
    provider: ProviderArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Text,
    Json,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    fixtures: PathBuf,
    /// Rule ids left out of scoring, one per line.
    #[arg(long)]
    exclude: Option<PathBuf>,
    /// Where to write the report; it is printed to stdout as well.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: OutputFormat,
    #[command(flatten)]
    prompt: PromptArgs,
}

#[derive(Args)]
struct MonitorArgs {
    #[arg(long)]
    formula: String,
    /// Trace document: {"states": [["atom", ...], ...]}.
    #[arg(long)]
    trace: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Directory for the review log.
    #[arg(long, default_value = "reviews")]
    store: PathBuf,
    /// Dataset used to resolve rule ids of submitted rules.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Built review UI to serve at `/`.
    #[arg(long)]
    ui_dir: Option<PathBuf>,
    #[command(flatten)]
    prompt: PromptArgs,
    #[command(flatten)]
    provider: ProviderArgs,
}

/// Runs the command line `args` (including the program name).
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Parse(a) => cmd_parse(a, out),
        Command::Translate(a) => cmd_translate(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Monitor(a) => cmd_monitor(a, out),
        Command::Serve(a) => cmd_serve(a, out),
    };
    match outcome {
        Ok(code) => code,
        Err(Failure { code, message }) => {
            let _ = writeln!(err, "error: {message}");
            code
        }
    }
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn parse(input: &str, e: &ParseError) -> Self {
        Failure::usage(format!("{e}\n  {input}\n  {}^", " ".repeat(input[..e.offset.min(input.len())].chars().count())))
    }
}

impl From<LlmError> for Failure {
    fn from(e: LlmError) -> Self {
        let code = match e {
            LlmError::InvalidSampling(_) => EXIT_USAGE,
            _ => EXIT_PROVIDER,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<WorkflowError> for Failure {
    fn from(e: WorkflowError) -> Self {
        match e {
            WorkflowError::Llm(e) => e.into(),
            other => Failure::usage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::usage(e.to_string())
    }
}

type Outcome = Result<i32, Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))
}

fn load_swaps(path: Option<&Path>) -> Result<SwapSet, Failure> {
    match path {
        Some(p) => SwapSet::load(p).map_err(|e| Failure::usage(format!("{}: {e}", p.display()))),
        None => Ok(SwapSet::empty()),
    }
}

fn load_prompts(args: &PromptArgs) -> Result<PromptConfig, Failure> {
    match &args.prompts {
        Some(dir) => PromptConfig::load(dir, args.mode).map_err(|e| Failure::usage(e.to_string())),
        None => Ok(PromptConfig::builtin(args.mode)),
    }
}

fn load_rules(path: Option<&Path>) -> Result<Vec<RuleRecord>, Failure> {
    match path {
        Some(p) => load_dataset(p).map_err(|e| Failure::usage(e.to_string())),
        None => Ok(Vec::new()),
    }
}

fn cmd_parse(args: ParseArgs, out: &mut dyn Write) -> Outcome {
    let f = parse_formula(&args.formula).map_err(|e| Failure::parse(&args.formula, &e))?;
    if args.ast {
        writeln!(out, "{}", serde_json::to_string_pretty(&f).expect("formulas serialize"))?;
    } else if args.raw {
        writeln!(out, "{f}")?;
    } else {
        let swaps = load_swaps(args.swaps.as_deref())?;
        let canonical = canonicalize(&f, &swaps).map_err(|e| Failure::usage(e.to_string()))?;
        writeln!(out, "{canonical}")?;
    }
    Ok(EXIT_OK)
}

fn cmd_translate(args: TranslateArgs, out: &mut dyn Write) -> Outcome {
    let prompts = load_prompts(&args.prompt)?;
    let swaps = load_swaps(args.prompt.swaps.as_deref())?;
    let dataset = load_rules(args.dataset.as_deref())?;
    let spec = args.provider.spec().map_err(Failure::usage)?;
    let provider = connect(&spec)?;
    let rule_id = resolve_rule_id(args.rule_id.as_deref(), &args.rule, &dataset);
    let result = translate(&rule_id, &args.rule, &prompts, provider.as_ref(), &args.prompt.sampling(), &swaps)
        .map_err(WorkflowError::from)?;
    if args.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&result).expect("results serialize"))?;
    } else {
        write_translation(out, &result)?;
    }
    Ok(EXIT_OK)
}

fn write_translation(out: &mut dyn Write, result: &TranslationResult) -> std::io::Result<()> {
    writeln!(out, "Rule {}: {}", result.rule_id, result.rule_text)?;
    for c in &result.candidates {
        let marker = if Some(c.sample_index) == result.winner { "*" } else { " " };
        match (&c.formula_text, &c.parse_error) {
            (Some(text), None) => writeln!(out, "{marker} [{}] {text}", c.sample_index)?,
            (_, Some(error)) => writeln!(out, "{marker} [{}] unparseable: {error}", c.sample_index)?,
            (None, None) => writeln!(out, "{marker} [{}] no formula", c.sample_index)?,
        }
        for v in &c.vocab_violations {
            writeln!(out, "      unknown predicate {v}")?;
        }
    }
    writeln!(out, "Votes:")?;
    for (form, votes) in &result.vote_tally {
        writeln!(out, "  {votes}  {form}")?;
    }
    match result.winner_candidate().and_then(|c| c.formula_text.as_deref()) {
        Some(w) => writeln!(out, "Winner: {w}"),
        None => writeln!(out, "Winner: none (no sample parsed)"),
    }
}

fn cmd_eval(args: EvalArgs, out: &mut dyn Write) -> Outcome {
    let prompts = load_prompts(&args.prompt)?;
    let swaps = load_swaps(args.prompt.swaps.as_deref())?;
    let inputs = EvalInputs {
        dataset: read(&args.dataset)?,
        fixtures: std::fs::read_to_string(&args.fixtures).map_err(|e| {
            Failure::from(LlmError::FixtureIo {
                path: args.fixtures.display().to_string(),
                reason: e.to_string(),
            })
        })?,
        exclude: args.exclude.as_deref().map(read).transpose()?,
        sampling: args.prompt.sampling(),
    };
    let report = run_eval(&inputs, &prompts, &swaps)?;
    let format = match args.format {
        OutputFormat::Text => ReportFormat::Text,
        OutputFormat::Json => ReportFormat::Structured,
    };
    let rendered = render_report(&report, format);
    if let Some(path) = &args.report {
        std::fs::write(path, &rendered).map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))?;
    }
    write!(out, "{rendered}")?;
    if !rendered.ends_with('\n') {
        writeln!(out)?;
    }
    Ok(EXIT_OK)
}

fn cmd_monitor(args: MonitorArgs, out: &mut dyn Write) -> Outcome {
    let f = parse_formula(&args.formula).map_err(|e| Failure::parse(&args.formula, &e))?;
    let trace = Trace::from_json(&read(&args.trace)?).map_err(|e| Failure::usage(format!("{}: {e}", args.trace.display())))?;
    let verdict = monitor(&f, &trace);
    writeln!(out, "{verdict}")?;
    Ok(if verdict.holds { EXIT_OK } else { EXIT_VIOLATED })
}

fn cmd_serve(args: ServeArgs, out: &mut dyn Write) -> Outcome {
    let prompts = load_prompts(&args.prompt)?;
    let swaps = load_swaps(args.prompt.swaps.as_deref())?;
    let dataset = load_rules(args.dataset.as_deref())?;
    let spec = args.provider.spec().map_err(Failure::usage)?;
    let provider: Arc<dyn CompletionProvider> = Arc::from(connect(&spec)?);
    let store = ReviewStore::open(&args.store).map_err(|e| Failure::usage(e.to_string()))?;
    let state = Arc::new(AppState {
        store,
        provider,
        prompts,
        swaps,
        dataset,
        sampling: args.prompt.sampling(),
    });
    let app = router(state, args.ui_dir.as_deref());
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port)).await?;
        writeln!(out, "listening on http://{}", listener.local_addr()?)?;
        out.flush()?;
        axum::serve(listener, app).await
    })?;
    Ok(EXIT_OK)
}
