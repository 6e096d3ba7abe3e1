//! Command-line front end: `solve`, `bench`, `build-library`, `retrieve`, `stats`.
//!
//! Exit codes: 0 when the command completed (a wrong answer still counts),
//! 1 on setup errors, 2 on invalid arguments.

use std::ffi::OsString;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::{BackendChoice, EmbedderChoice, Settings};
use crate::curation::{build_library, library_stats, write_curated, CurationConfig, DEFAULT_CONFIDENCE_THRESHOLD};
use crate::eval::bench::run_ablation;
use crate::eval::{judge_solution, load_dataset, DatasetAdapter, Variant, Verdict};
use crate::hrag::{coarse_retrieve, read_exemplars, Library};
use crate::orchestrator::TaskTrace;
use crate::types::Task;

#[derive(Debug, Parser)]
#[command(name = "nl2opt", version, about = "Turn natural-language optimization problems into solver programs")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand. Each one overrides its config-file key.
#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML settings file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Chat backend kind
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendChoice>,
    /// JSONL replay of agent replies (implies --backend replay)
    #[arg(long, global = true)]
    pub replay: Option<PathBuf>,
    /// Chat-completions endpoint URL
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
    /// Environment variable holding the API key
    #[arg(long, global = true)]
    pub api_key_env: Option<String>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long, global = true)]
    pub temperature: Option<f64>,
    #[arg(long, global = true)]
    pub max_revisions: Option<u32>,
    /// Per-execution time limit
    #[arg(long, global = true)]
    pub timeout_secs: Option<f64>,
    #[arg(long, global = true)]
    pub exemplar_cap: Option<usize>,
    #[arg(long, global = true)]
    pub templates_dir: Option<PathBuf>,
    /// Append every agent artifact to this JSONL file
    #[arg(long, global = true)]
    pub global_journal: Option<PathBuf>,
    /// Exemplar library file
    #[arg(long, global = true)]
    pub library: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub embedder: Option<EmbedderChoice>,
    #[arg(long, global = true)]
    pub embed_endpoint: Option<String>,
    /// Directory for cached library embeddings
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    /// Disable the revision loop
    #[arg(long, global = true)]
    pub no_iar: bool,
    /// Disable exemplar retrieval
    #[arg(long, global = true)]
    pub no_hrag: bool,
    /// Runner command, split on whitespace; `--file` and `--timeout-ms` are appended
    #[arg(long, global = true)]
    pub runner: Option<String>,
    /// JSONL of scripted runner results used instead of a runner
    #[arg(long, global = true)]
    pub stub_outcomes: Option<PathBuf>,
    #[arg(long, global = true)]
    pub max_concurrent: Option<usize>,
    /// More log output on stderr (repeatable)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one task and write its trace
    Solve {
        /// Task JSON file, or `-` for stdin
        #[arg(long)]
        task: String,
        /// Directory for the trace file
        #[arg(long, default_value = "traces")]
        out: PathBuf,
    },
    /// Run a dataset and write reports
    Bench {
        #[arg(long)]
        dataset: PathBuf,
        /// Field mapping preset or `text=FIELD,answer=FIELD[,id=FIELD]`
        #[arg(long, default_value = "generic")]
        adapter: String,
        /// all, none, no-iar, no-hrag or neither
        #[arg(long, default_value = "none")]
        ablate: String,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// Drop this many records from the end of the dataset
        #[arg(long = "library-holdout", default_value_t = 0)]
        holdout: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also write report.csv
        #[arg(long)]
        csv: bool,
    },
    /// Solve, verify and label tasks into an exemplar library
    BuildLibrary {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "generic")]
        adapter: String,
        #[arg(long, default_value_t = DEFAULT_CONFIDENCE_THRESHOLD)]
        confidence_threshold: f64,
        #[arg(long)]
        per_type_cap: Option<usize>,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Print the coarse retrieval candidates for a query
    Retrieve {
        #[arg(long)]
        query: String,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        fetch_k: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
        /// Keep only this problem type when any candidate has it
        #[arg(long)]
        type_hint: Option<String>,
    },
    /// Print exemplar counts per problem type
    Stats,
}

impl GlobalArgs {
    /// Loads the config file, if any, and applies the flags on top.
    pub fn settings(&self) -> Result<Settings> {
        let mut s = match &self.config {
            Some(path) => Settings::load(path)?,
            None => Settings::default(),
        };
        if let Some(path) = &self.replay {
            s.backend.replay = Some(path.clone());
            s.backend.kind = BackendChoice::Replay;
        }
        if let Some(kind) = self.backend {
            s.backend.kind = kind;
        }
        set(&mut s.backend.endpoint, self.endpoint.clone().map(Some));
        set(&mut s.backend.api_key_env, self.api_key_env.clone());
        set(&mut s.backend.model, self.model.clone());
        set(&mut s.backend.temperature, self.temperature);
        set(&mut s.pipeline.max_revisions, self.max_revisions);
        set(&mut s.pipeline.timeout_secs, self.timeout_secs);
        set(&mut s.pipeline.exemplar_cap, self.exemplar_cap);
        set(&mut s.templates_dir, self.templates_dir.clone().map(Some));
        set(&mut s.global_journal, self.global_journal.clone().map(Some));
        set(&mut s.retrieval.library, self.library.clone().map(Some));
        set(&mut s.retrieval.embedder, self.embedder);
        set(&mut s.retrieval.embed_endpoint, self.embed_endpoint.clone().map(Some));
        set(&mut s.retrieval.cache_dir, self.cache_dir.clone().map(Some));
        set(&mut s.executor.max_concurrent, self.max_concurrent);
        if let Some(cmd) = &self.runner {
            s.executor.runner = Some(cmd.split_whitespace().map(str::to_owned).collect());
            s.executor.stub_outcomes = None;
        }
        set(&mut s.executor.stub_outcomes, self.stub_outcomes.clone().map(Some));
        if self.no_iar {
            s.pipeline.enable_iar = false;
        }
        if self.no_hrag {
            s.pipeline.enable_hrag = false;
        }
        s.validate()?;
        Ok(s)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

pub fn main() -> ExitCode {
    init_logging(std::env::args().filter(|a| a == "-v" || a == "--verbose").count() as u8);
    let code = run(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr());
    ExitCode::from(code)
}

/// Parses `args` and runs the command, writing to `out` and `err`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{rendered}")
            } else {
                write!(err, "{rendered}")
            };
            return code as u8;
        }
    };
    match dispatch(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            1
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let settings = cli.global.settings()?;
    match &cli.command {
        Command::Solve { task, out: dir } => solve(&settings, task, dir, out),
        Command::Bench {
            dataset,
            adapter,
            ablate,
            parallel,
            holdout,
            out: dir,
            csv,
        } => bench(&settings, dataset, adapter, ablate, *parallel, *holdout, dir, *csv, out),
        Command::BuildLibrary {
            input,
            out: path,
            adapter,
            confidence_threshold,
            per_type_cap,
            parallel,
        } => {
            let cfg = CurationConfig {
                confidence_threshold: *confidence_threshold,
                per_type_cap: *per_type_cap,
                parallel: *parallel,
            };
            build(&settings, input, path, adapter, &cfg, out)
        }
        Command::Retrieve {
            query,
            k,
            fetch_k,
            lambda,
            type_hint,
        } => retrieve(&settings, query, *k, *fetch_k, *lambda, type_hint.as_deref(), out),
        Command::Stats => {
            let path = settings.retrieval.library.as_ref().context("stats needs --library")?;
            writeln!(out, "{}", library_stats(path)?)?;
            Ok(())
        }
    }
}

fn read_task(spec: &str) -> Result<Task> {
    let text = if spec == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        s
    } else {
        fs::read_to_string(spec).with_context(|| format!("reading task {spec}"))?
    };
    serde_json::from_str(&text).with_context(|| format!("task {spec} is not a task JSON object"))
}

/// Task ids become file names; anything outside `[A-Za-z0-9._-]` is replaced.
pub fn trace_file_name(task_id: &str) -> String {
    let safe: String = task_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect();
    format!("{safe}.json")
}

/// Trace file contents: the effective settings next to the trace.
pub fn trace_document(settings: &Settings, trace: &TaskTrace) -> String {
    serde_json::to_string_pretty(&json!({"config": settings, "trace": trace})).expect("traces serialize")
}

fn write_trace(dir: &Path, settings: &Settings, trace: &TaskTrace) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(trace_file_name(&trace.task_id));
    fs::write(&path, trace_document(settings, trace)).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// The summary line: a wrong answer against a known optimum is reported as such.
pub fn summary_line(task: &Task, trace: &TaskTrace) -> String {
    let wrong = match (task.ground_truth, trace.last_outcome()) {
        (Some(y), Some(o)) => judge_solution(y, o).verdict == Verdict::WrongAnswer,
        _ => false,
    };
    if wrong {
        let plural = if trace.revision_count == 1 { "revision" } else { "revisions" };
        format!("WRONG_ANSWER after {} {plural}", trace.revision_count)
    } else {
        trace.summary()
    }
}

fn solve(settings: &Settings, task_spec: &str, dir: &Path, out: &mut dyn Write) -> Result<()> {
    let task = read_task(task_spec)?;
    let pipeline = settings.build_pipeline()?;
    let trace = pipeline.solve(&task);
    let path = write_trace(dir, settings, &trace)?;
    writeln!(out, "{}", summary_line(&task, &trace))?;
    match (trace.final_objective, &trace.pipeline_error) {
        (_, Some(e)) => writeln!(out, "pipeline error: {e}")?,
        (Some(obj), None) => writeln!(out, "objective: {obj}")?,
        (None, None) => {
            if let Some(msg) = trace.last_outcome().and_then(|o| o.error_message.as_deref()) {
                writeln!(out, "last error: {}", msg.lines().last().unwrap_or(msg))?;
            }
        }
    }
    writeln!(out, "trace: {}", path.display())?;
    Ok(())
}

fn variant_slug(v: Variant) -> &'static str {
    match v {
        Variant::Full => "full",
        Variant::NoIar => "no-iar",
        Variant::NoHrag => "no-hrag",
        Variant::Neither => "neither",
    }
}

#[allow(clippy::too_many_arguments)]
fn bench(
    settings: &Settings,
    dataset: &Path,
    adapter: &str,
    ablate: &str,
    parallel: usize,
    holdout: usize,
    dir: &Path,
    csv: bool,
    out: &mut dyn Write,
) -> Result<()> {
    let adapter = DatasetAdapter::parse(adapter).map_err(anyhow::Error::msg)?;
    let variants = Variant::parse_ablate(ablate).map_err(anyhow::Error::msg)?;
    let tasks = load_dataset(dataset, &adapter, holdout)?;
    if tasks.is_empty() {
        bail!("{} has no tasks after the holdout", dataset.display());
    }
    let pipeline = settings.build_pipeline()?;
    let (report, runs) = run_ablation(&tasks, &pipeline, &variants, parallel)?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let markdown = report.reports.iter().map(|r| r.to_markdown()).collect::<Vec<_>>().join("\n");
    let markdown = if report.reports.len() > 1 {
        format!("{}\n{markdown}", report.to_markdown())
    } else {
        markdown
    };
    fs::write(dir.join("report.md"), &markdown)?;
    let results: Vec<_> = runs
        .iter()
        .map(|r| json!({"variant": variant_slug(r.variant), "results": r.results}))
        .collect();
    let doc = json!({"config": settings, "dataset": dataset, "reports": report.reports, "tasks": results});
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&doc)?)?;
    if csv {
        let mut text = String::new();
        for (i, r) in report.reports.iter().enumerate() {
            let body = r.to_csv();
            text.push_str(if i == 0 { &body } else { body.split_once('\n').map_or("", |(_, rest)| rest) });
        }
        fs::write(dir.join("report.csv"), text)?;
    }
    for run in &runs {
        let trace_dir = dir.join("traces").join(variant_slug(run.variant));
        for trace in &run.traces {
            write_trace(&trace_dir, settings, trace)?;
        }
    }
    write!(out, "{markdown}")?;
    Ok(())
}

fn build(settings: &Settings, input: &Path, path: &Path, adapter: &str, cfg: &CurationConfig, out: &mut dyn Write) -> Result<()> {
    let adapter = DatasetAdapter::parse(adapter).map_err(anyhow::Error::msg)?;
    let tasks = load_dataset(input, &adapter, 0)?;
    let pipeline = settings.build_pipeline()?;
    let mut curated = build_library(&tasks, &pipeline, cfg);
    curated.manifest.config = json!({"settings": settings, "curation": cfg});
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let sidecar = write_curated(path, &curated)?;
    let m = &curated.manifest;
    writeln!(
        out,
        "kept {} of {} (dropped {}, filtered {})",
        m.kept, m.source_count, m.dropped, m.filtered
    )?;
    writeln!(out, "library: {}", path.display())?;
    writeln!(out, "manifest: {}", sidecar.display())?;
    Ok(())
}

fn retrieve(
    settings: &Settings,
    query: &str,
    k: Option<usize>,
    fetch_k: Option<usize>,
    lambda: Option<f64>,
    type_hint: Option<&str>,
    out: &mut dyn Write,
) -> Result<()> {
    let path = settings.retrieval.library.as_ref().context("retrieve needs --library")?;
    let mut params = settings.pipeline_config().mmr;
    set(&mut params.k, k);
    set(&mut params.fetch_k, fetch_k);
    set(&mut params.lambda, lambda);
    params.validate()?;
    let embedder = settings.build_embedder()?;
    let library = Library::build(read_exemplars(path)?, embedder.as_ref())?;
    let picked = coarse_retrieve(&library, embedder.as_ref(), query, &params, type_hint)?;
    for (i, e) in picked.iter().enumerate() {
        let first_line = e.prompt.lines().next().unwrap_or("");
        writeln!(
            out,
            "[{i}] {} / {} (line {}, answer {})\n    {first_line}",
            e.problem_type, e.problem_subtype, e.source_line, e.answer
        )?;
    }
    Ok(())
}
