//! `cskg`: build a commonsense knowledge graph, generate perturbed
//! questions, answer them and score the answers.
//!
//! Exit codes: 0 success, 1 malformed input or arguments, 2 I/O failure,
//! 3 reader crash or timeout. Only JSON goes to stdout.

mod answer;
mod config;
mod exit;

use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use cskg_core::builder::{build_graph, AttributeVocabulary, BuildConfig};
use cskg_core::dataset::{generate_dataset, GenConfig};
use cskg_core::eval::{evaluate, load_predictions};
use cskg_core::reader::{DEFAULT_TIMEOUT, DEFAULT_TOP_K};
use cskg_core::resolver::ResolverConfig;
use cskg_core::text::{normalize_term, Similarity, StopwordList};
use cskg_core::{KnowledgeGraph, SquadFile};

use answer::{AnswerJob, Manifest, OrderedPredictions, ReaderSpec};
use config::{ensure_exist, positive, require, Config};
use exit::CliError;

#[derive(Parser)]
#[command(name = "cskg", version, about = "Commonsense knowledge graph question answering")]
struct Cli {
    /// JSON config file. Flags override its values.
    #[arg(long, global = true, env = "CSKG_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the knowledge graph from offline snapshots.
    BuildKg(BuildKgArgs),
    /// Generate perturbed questions from a SQuAD-format dataset.
    GenDataset(GenDatasetArgs),
    /// Answer every question of a dataset.
    Answer(AnswerArgs),
    /// Score predictions with exact match and token F1.
    Eval(EvalArgs),
    /// Print graph triples as JSON Lines.
    InspectKg(InspectArgs),
}

#[derive(Args)]
struct BuildKgArgs {
    /// SQuAD-format dataset that subjects are extracted from.
    #[arg(long)]
    squad: Option<PathBuf>,
    /// Related-term edges CSV (term_a,term_b,weight).
    #[arg(long)]
    edges: Option<PathBuf>,
    /// Definitions TSV (term, definition).
    #[arg(long)]
    definitions: Option<PathBuf>,
    /// Synonym and definition lexicon TSV.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[arg(long)]
    min_df: Option<usize>,
    /// Comma-separated attribute vocabulary.
    #[arg(long, value_delimiter = ',')]
    vocabulary: Option<Vec<String>>,
    /// Where to write the graph.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the build report to this file.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Print the report without writing the graph.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct GenDatasetArgs {
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Source dataset; defaults to the config's `squad`.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    /// Provenance records; defaults to `<output>.sidecar.jsonl`.
    #[arg(long)]
    sidecar: Option<PathBuf>,
    #[arg(long)]
    max_per_question: Option<usize>,
}

#[derive(Args)]
struct AnswerArgs {
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    dataset: PathBuf,
    /// Predictions file (JSON object id → answer).
    #[arg(long)]
    out: PathBuf,
    /// `lexical` or a command line for an external reader.
    #[arg(long)]
    reader: Option<String>,
    /// Write one JSON trace per item to this file.
    #[arg(long)]
    explain: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    timeout_secs: Option<f64>,
    #[arg(long)]
    resolve_synonyms: bool,
    #[arg(long, value_parser = parse_similarity)]
    similarity: Option<Similarity>,
    /// Skip ids already present in the predictions file.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    subject: Option<String>,
    #[arg(long)]
    label: Option<String>,
}

fn parse_similarity(s: &str) -> Result<Similarity, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown similarity {s:?} (expected jaccard or cosine)"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = Config::load_optional(cli.config.as_deref())?;
    match cli.command {
        Command::BuildKg(args) => build_kg(args, &config),
        Command::GenDataset(args) => gen_dataset(args, &config),
        Command::Answer(args) => answer(args, &config),
        Command::Eval(args) => eval(args),
        Command::InspectKg(args) => inspect_kg(args, &config),
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    serde_json::to_writer(&mut out, value).expect("value serializes");
    writeln!(out).map_err(|e| CliError::Io(format!("stdout: {e}")))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn load_stopwords(path: Option<&Path>) -> Result<StopwordList, CliError> {
    match path {
        Some(p) => StopwordList::from_file(p).map_err(|e| CliError::io(p, e)),
        None => Ok(StopwordList::default()),
    }
}

fn build_kg(args: BuildKgArgs, config: &Config) -> Result<(), CliError> {
    let pick = |flag: Option<PathBuf>, cfg: &Option<PathBuf>| flag.or_else(|| cfg.clone());
    let squad = pick(args.squad, &config.squad);
    let edges = pick(args.edges, &config.edges);
    let definitions = pick(args.definitions, &config.definitions);
    let lexicon = pick(args.lexicon, &config.lexicon);
    let stopwords = pick(args.stopwords, &config.stopwords);
    ensure_exist(
        [&squad, &edges, &definitions, &lexicon, &stopwords]
            .into_iter()
            .flatten()
            .map(PathBuf::as_path),
    )?;
    let out = if args.dry_run {
        None
    } else {
        Some(require(args.out, &config.graph, "out")?)
    };
    let vocabulary = match args.vocabulary.or_else(|| config.vocabulary.clone()) {
        Some(words) => AttributeVocabulary::new(words).map_err(CliError::Parse)?,
        None => AttributeVocabulary::default(),
    };
    let build = BuildConfig {
        squad,
        edges,
        definitions,
        lexicon,
        min_df: positive(args.min_df.or(config.min_df).unwrap_or(3), "min_df")?,
        vocabulary,
        stopwords: load_stopwords(stopwords.as_deref())?,
    };
    let (kg, report) = build_graph(&build)?;
    if let Some(path) = &args.report {
        write_file(
            path,
            serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
        )?;
    }
    if let Some(out) = out {
        kg.save(&out)?;
        log::info!("wrote {} triples to {}", kg.len(), out.display());
    }
    print_json(&report)
}

fn gen_dataset(args: GenDatasetArgs, config: &Config) -> Result<(), CliError> {
    let graph = require(args.graph, &config.graph, "graph")?;
    let input = require(args.input, &config.squad, "input")?;
    ensure_exist([graph.as_path(), input.as_path()])?;
    let max_per_question = positive(
        args.max_per_question.or(config.max_per_question).unwrap_or(2),
        "max_per_question",
    )?;
    let sidecar = args.sidecar.unwrap_or_else(|| {
        let mut name = args.output.file_name().unwrap_or_default().to_os_string();
        name.push(".sidecar.jsonl");
        args.output.with_file_name(name)
    });
    let kg = KnowledgeGraph::load(&graph)?;
    let summary = generate_dataset(&input, &args.output, &sidecar, &kg, GenConfig { max_per_question })?;
    print_json(&summary)
}

fn answer(args: AnswerArgs, config: &Config) -> Result<(), CliError> {
    let graph = require(args.graph, &config.graph, "graph")?;
    ensure_exist([graph.as_path(), args.dataset.as_path()])?;
    let stopwords = load_stopwords(config.stopwords.as_deref())?;
    let resolver = ResolverConfig {
        top_k: positive(args.top_k.or(config.top_k).unwrap_or(DEFAULT_TOP_K), "top_k")?,
        resolve_synonyms: args.resolve_synonyms || config.resolve_synonyms.unwrap_or(false),
        similarity: args.similarity.or(config.similarity).unwrap_or_default(),
        stopwords,
    };
    let timeout = match args.timeout_secs.or(config.timeout_secs) {
        Some(s) if s.is_finite() && s > 0.0 => Duration::from_secs_f64(s),
        Some(s) => return Err(CliError::Parse(format!("timeout_secs must be positive, got {s}"))),
        None => DEFAULT_TIMEOUT,
    };
    let workers = positive(args.workers.or(config.workers).unwrap_or(4), "workers")?;
    let reader = ReaderSpec::parse(args.reader.as_deref().or(config.reader.as_deref()).unwrap_or("lexical"));

    let kg = KnowledgeGraph::load(&graph)?;
    let items = SquadFile::load(&args.dataset)?.items();
    let manifest_path = answer::manifest_path(&args.out);

    let previous = if args.resume && args.out.exists() {
        answer::read_previous_predictions(&args.out)?
    } else {
        Default::default()
    };
    let mut previous_traces: HashMap<String, String> = match (&args.explain, args.resume) {
        (Some(path), true) if path.exists() => answer::read_traces(path)?,
        _ => HashMap::new(),
    };
    let todo: Vec<usize> = (0..items.len())
        .filter(|&i| !previous.contains_key(&items[i].id))
        .collect();
    if !previous.is_empty() {
        log::info!("resuming: {} of {} items already answered", previous.len(), items.len());
    }

    let job = AnswerJob {
        items: &items,
        kg: &kg,
        resolver: &resolver,
        reader,
        timeout,
        workers,
    };
    let outcome = answer::run(&job, &todo);

    let mut predictions = Vec::new();
    let mut traces = String::new();
    for (item, fresh) in items.iter().zip(&outcome.answers) {
        let text = match fresh {
            Some(a) => {
                traces.push_str(&answer::trace_line(item, a));
                traces.push('\n');
                a.text.clone()
            }
            None => match previous.get(&item.id) {
                Some(text) => {
                    if let Some(line) = previous_traces.remove(&item.id) {
                        traces.push_str(&line);
                        traces.push('\n');
                    }
                    text.clone()
                }
                None => continue,
            },
        };
        predictions.push((item.id.clone(), text));
    }

    write_file(
        &args.out,
        serde_json::to_string_pretty(&OrderedPredictions(&predictions)).expect("predictions serialize") + "\n",
    )?;
    if let Some(path) = &args.explain {
        write_file(path, &traces)?;
    }

    match outcome.failure {
        None => {
            if manifest_path.exists() {
                fs::remove_file(&manifest_path).map_err(|e| CliError::io(&manifest_path, e))?;
            }
            print_json(&serde_json::json!({"answered": predictions.len(), "total": items.len()}))
        }
        Some((failed_id, err)) => {
            let err = CliError::from(err);
            let manifest = Manifest {
                dataset: args.dataset.display().to_string(),
                total: items.len(),
                completed: predictions.iter().map(|(id, _)| id.clone()).collect(),
                failed_id: Some(failed_id.clone()),
                error: Some(err.to_string()),
            };
            write_file(
                &manifest_path,
                serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
            )?;
            eprintln!(
                "answered {} of {} items before failing on {failed_id}; progress saved to {}",
                predictions.len(),
                items.len(),
                manifest_path.display()
            );
            Err(err)
        }
    }
}

fn eval(args: EvalArgs) -> Result<(), CliError> {
    let predictions = load_predictions(&args.predictions)?;
    let dataset = SquadFile::load(&args.dataset)?;
    let report = evaluate(&predictions, &dataset)?;
    match &args.out {
        Some(path) => write_file(
            path,
            serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
        ),
        None => print_json(&report),
    }
}

fn inspect_kg(args: InspectArgs, config: &Config) -> Result<(), CliError> {
    let graph = require(args.graph, &config.graph, "graph")?;
    let kg = KnowledgeGraph::load(&graph)?;
    let subject = args.subject.as_deref().map(normalize_term);
    let label = args.label.as_deref().map(normalize_term);
    let mut out = io::stdout().lock();
    for t in kg.triples() {
        if subject.as_ref().is_some_and(|s| *s != t.subject) || label.as_ref().is_some_and(|l| l != t.label()) {
            continue;
        }
        serde_json::to_writer(&mut out, t).expect("triple serializes");
        writeln!(out).map_err(|e| CliError::Io(format!("stdout: {e}")))?;
    }
    Ok(())
}
