//! Command-line interface.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use comment_topics_core::evaluation::{
    sample_assignment_tasks, sample_expert_forms, sample_intruder_tasks, Adjudication, Annotation,
    AssignmentSampling, TaskRecord,
};
use comment_topics_core::jsonl;
use comment_topics_core::synthetic::{planted_corpus, to_jsonl, PlantedSpec};
use serde_json::json;

use crate::api::{partition_trends, AppState};
use crate::config::PipelineConfig;
use crate::error::{Result, ServiceError};
use crate::journal::{apply_mutations, Journal};
use crate::manifest::Stage;
use crate::pipeline::{run_pipeline, PipelineRequest};
use crate::reports::build_reports;
use crate::store::{Store, TASKS_DIR};

#[derive(Debug, Parser)]
#[command(name = "comment-topics", version, about = "Topic discovery and evaluation for short user comments")]
pub struct Cli {
    /// Directory holding all runs.
    #[arg(long, global = true, default_value = "runs", env = "COMMENT_TOPICS_STORE")]
    pub store: PathBuf,
    #[arg(long, global = true, default_value = "default")]
    pub run_id: String,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON pipeline configuration; defaults to the run's stored one.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Machine-readable output.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct StageArgs {
    /// Line-delimited JSON comments (id, text, created_at, optional author and lang).
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SampleKind {
    Intruder,
    Assign,
    Expert,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read raw comments into the run.
    Ingest(StageArgs),
    /// Run stages up to sentence embedding.
    Embed(StageArgs),
    /// Run stages up to dimensionality reduction.
    Reduce(StageArgs),
    /// Run stages up to density clustering.
    Cluster(StageArgs),
    /// Run stages up to topic construction.
    Topics(StageArgs),
    /// Run every stage, ending with trends.
    Trends(StageArgs),
    /// Sample annotation tasks from a completed run.
    EvalSample {
        kind: SampleKind,
        /// Number of tasks; defaults to 200 choice tasks or one form per topic.
        #[arg(long)]
        n: Option<usize>,
        /// Output file; defaults to the run's tasks directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score annotations against their tasks.
    EvalScore {
        /// Task files; defaults to every file in the run's tasks directory.
        #[arg(long)]
        tasks: Vec<PathBuf>,
        /// Annotation file; defaults to the run's annotation journal.
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long)]
        adjudications: Option<PathBuf>,
        /// Print the agreement tables.
        #[arg(long)]
        table: bool,
    },
    /// Summarise a completed run.
    Report {
        /// Topics to list.
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
    /// Write a synthetic corpus with planted themes.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        themes: usize,
        #[arg(long, default_value_t = 150)]
        per_theme: usize,
    },
}

/// Parses `args`, runs the command and returns the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let code = e.exit_code();
            if cli.json {
                let _ = writeln!(err, "{}", json!({ "error": e.to_string(), "exit_code": code }));
            } else {
                let _ = writeln!(err, "error: {e}");
            }
            code
        }
    }
}

fn resolve_config(cli: &Cli, store: &Store) -> Result<PipelineConfig> {
    let config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => match store.load_manifest(&cli.run_id) {
            Ok(m) => m.config,
            Err(ServiceError::RunNotFound(_)) => PipelineConfig::default(),
            Err(e) => return Err(e),
        },
    };
    let config = match cli.seed {
        Some(seed) => config.with_seed(seed),
        None => config,
    };
    config.validate()?;
    Ok(config)
}

fn emit(out: &mut dyn Write, value: &serde_json::Value) -> Result<()> {
    writeln!(out, "{}", serde_json::to_string_pretty(value)?).map_err(|e| ServiceError::io("<stdout>", e))
}

fn say(out: &mut dyn Write, text: &str) -> Result<()> {
    writeln!(out, "{text}").map_err(|e| ServiceError::io("<stdout>", e))
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    if let Command::Synth { out: path, themes, per_theme } = &cli.command {
        return synth(cli, out, path, *themes, *per_theme);
    }
    let store = Store::open(&cli.store)?;
    match &cli.command {
        Command::Ingest(a) => stage(cli, &store, out, a, Stage::Ingest),
        Command::Embed(a) => stage(cli, &store, out, a, Stage::Embed),
        Command::Reduce(a) => stage(cli, &store, out, a, Stage::Reduce),
        Command::Cluster(a) => stage(cli, &store, out, a, Stage::Cluster),
        Command::Topics(a) => stage(cli, &store, out, a, Stage::Topics),
        Command::Trends(a) => stage(cli, &store, out, a, Stage::Trends),
        Command::EvalSample { kind, n, out: path } => eval_sample(cli, &store, out, *kind, *n, path.as_deref()),
        Command::EvalScore {
            tasks,
            annotations,
            adjudications,
            table,
        } => eval_score(cli, &store, out, tasks, annotations.as_deref(), adjudications.as_deref(), *table),
        Command::Report { top } => report(cli, &store, out, *top),
        Command::Serve { addr } => serve(cli, store, addr),
        Command::Synth { .. } => unreachable!("handled above"),
    }
}

fn stage(cli: &Cli, store: &Store, out: &mut dyn Write, args: &StageArgs, until: Stage) -> Result<()> {
    let config = resolve_config(cli, store)?;
    let outcome = run_pipeline(
        store,
        PipelineRequest {
            run_id: &cli.run_id,
            input: args.input.as_deref(),
            config,
            until,
        },
    )?;
    if cli.json {
        return emit(
            out,
            &json!({
                "run_id": cli.run_id,
                "status": outcome.manifest.status,
                "executed": outcome.executed,
                "skipped": outcome.skipped,
                "artifacts": outcome.manifest.artifacts(),
            }),
        );
    }
    for s in &outcome.skipped {
        say(out, &format!("{s:<10} up to date"))?;
    }
    for s in &outcome.executed {
        let path = &outcome.manifest.stage(*s).artifact.as_ref().expect("complete").path;
        say(out, &format!("{s:<10} done -> {path}"))?;
    }
    say(
        out,
        &format!(
            "run {} in {}",
            cli.run_id,
            store.run_dir(&cli.run_id)?.display()
        ),
    )
}

fn eval_sample(
    cli: &Cli,
    store: &Store,
    out: &mut dyn Write,
    kind: SampleKind,
    n: Option<usize>,
    path: Option<&Path>,
) -> Result<()> {
    let run = store.load_run(&cli.run_id)?;
    let texts = run.texts();
    let seed = cli.seed.unwrap_or(run.manifest.config.seed);
    let (name, records, excluded): (&str, Vec<TaskRecord>, Vec<i64>) = match kind {
        SampleKind::Intruder => {
            let s = sample_intruder_tasks(&run.topics, &texts, n.unwrap_or(200), seed)?;
            ("intruder", s.tasks.into_iter().map(TaskRecord::Intruder).collect(), s.excluded_topics)
        }
        SampleKind::Assign => {
            let s = sample_assignment_tasks(
                &run.topics,
                &texts,
                n.unwrap_or(200),
                seed,
                &AssignmentSampling::default(),
            )?;
            ("assignment", s.tasks.into_iter().map(TaskRecord::Assignment).collect(), s.excluded_topics)
        }
        SampleKind::Expert => {
            let s = sample_expert_forms(&run.topics, &texts, n.unwrap_or(run.topics.len()), seed)?;
            ("expert", s.tasks.into_iter().map(TaskRecord::Expert).collect(), s.excluded_topics)
        }
    };
    let target = match path {
        Some(p) => p.to_path_buf(),
        None => {
            let dir = run.dir.join(TASKS_DIR);
            std::fs::create_dir_all(&dir).map_err(|e| ServiceError::io(&dir, e))?;
            dir.join(format!("{name}.jsonl"))
        }
    };
    jsonl::save(&target, &records)?;
    if cli.json {
        return emit(
            out,
            &json!({ "kind": name, "tasks": records.len(), "excluded_topics": excluded, "path": target }),
        );
    }
    say(out, &format!("{} {name} tasks -> {}", records.len(), target.display()))?;
    if !excluded.is_empty() {
        say(out, &format!("{} topic(s) too small to sample from", excluded.len()))?;
    }
    Ok(())
}

fn eval_score(
    cli: &Cli,
    store: &Store,
    out: &mut dyn Write,
    task_files: &[PathBuf],
    annotations: Option<&Path>,
    adjudications: Option<&Path>,
    table: bool,
) -> Result<()> {
    let needs_run = task_files.is_empty() || annotations.is_none();
    let journal = if needs_run {
        Some(Journal::new(store.existing_run_dir(&cli.run_id)?))
    } else {
        None
    };
    let tasks: Vec<TaskRecord> = if task_files.is_empty() {
        store.load_tasks(&cli.run_id)?
    } else {
        let mut all = Vec::new();
        for f in task_files {
            all.extend(jsonl::load::<TaskRecord>(f)?);
        }
        all
    };
    let annotations: Vec<Annotation> = match annotations {
        Some(p) => jsonl::load(p)?,
        None => journal
            .as_ref()
            .expect("run journal")
            .annotations()?
            .into_iter()
            .map(|a| a.annotation)
            .collect(),
    };
    let adjudications: Vec<Adjudication> = match (adjudications, &journal) {
        (Some(p), _) => jsonl::load(p)?,
        (None, Some(j)) => j.adjudications()?.into_iter().map(|a| a.adjudication).collect(),
        (None, None) => Vec::new(),
    };
    let r = build_reports(&tasks, &annotations, &adjudications)?;
    if cli.json {
        return emit(out, &serde_json::to_value(&r)?);
    }
    if table {
        say(out, &r.choice_table)?;
        if r.expert.forms_scored > 0 {
            say(out, &r.expert_table)?;
        }
    } else {
        for (name, c) in [("intruder", &r.intruder), ("assignment", &r.assignment)] {
            if c.units > 0 {
                say(
                    out,
                    &format!(
                        "{name}: {} units, both correct {}%, one correct {}%, both incorrect {}%",
                        c.units,
                        c.both_correct.percent(1),
                        c.one_correct.percent(1),
                        c.both_incorrect.percent(1)
                    ),
                )?;
            }
        }
        if r.expert.forms_scored > 0 {
            say(
                out,
                &format!(
                    "expert labels: {} forms, overall agreement {}%",
                    r.expert.forms_scored,
                    r.expert.overall_agreement.percent(0)
                ),
            )?;
        }
    }
    let incomplete = r.intruder.incomplete.len() + r.assignment.incomplete.len() + r.expert.incomplete.len();
    if incomplete > 0 {
        log::warn!("{incomplete} task(s) or pairs left unscored as incomplete");
    }
    Ok(())
}

fn report(cli: &Cli, store: &Store, out: &mut dyn Write, top: usize) -> Result<()> {
    let run = store.load_run(&cli.run_id)?;
    let mut topics = run.topics.clone();
    apply_mutations(&mut topics, &Journal::new(&run.dir).mutations()?);
    let panels = partition_trends(&run.trends);
    if cli.json {
        return emit(
            out,
            &json!({
                "run_id": cli.run_id,
                "corpus": run.manifest.corpus,
                "stats": run.stats,
                "silhouette": run.silhouette,
                "topics": topics.iter().take(top).collect::<Vec<_>>(),
                "rising": panels.rising.iter().map(|s| s.topic_id).collect::<Vec<_>>(),
                "falling": panels.falling.iter().map(|s| s.topic_id).collect::<Vec<_>>(),
            }),
        );
    }
    let s = &run.stats;
    say(
        out,
        &format!(
            "{} topics covering {:.1}% of {} documents (mean size {:.1}, sd {:.1})",
            s.n_topics,
            s.coverage * 100.0,
            s.corpus_size,
            s.mean_size,
            s.sd_size
        ),
    )?;
    match &run.silhouette.embedding {
        Some(r) => say(out, &format!("silhouette (embedding space): {:.3}", r.coefficient))?,
        None => say(out, "silhouette: undefined (fewer than two topics)")?,
    }
    say(out, "")?;
    for t in topics.iter().take(top) {
        let text = run.comments.get(&t.representative_id).map(|c| c.text.as_str()).unwrap_or("");
        let label = t.name.as_deref().unwrap_or("(unnamed)");
        say(out, &format!("#{:<4} {:>5}  {label}  \"{}\"", t.topic_id, t.size, clip(text, 70)))?;
    }
    say(out, "")?;
    say(out, &format!("rising:  {:?}", panels.rising.iter().map(|s| s.topic_id).collect::<Vec<_>>()))?;
    say(out, &format!("falling: {:?}", panels.falling.iter().map(|s| s.topic_id).collect::<Vec<_>>()))
}

fn clip(text: &str, max: usize) -> String {
    let one_line = text.split_whitespace().collect::<Vec<_>>().join(" ");
    if one_line.chars().count() <= max {
        one_line
    } else {
        one_line.chars().take(max - 3).collect::<String>() + "..."
    }
}

fn serve(cli: &Cli, store: Store, addr: &str) -> Result<()> {
    let remote = match &cli.config {
        Some(p) => PipelineConfig::load(p)?.remote,
        None => None,
    };
    let state = AppState::new(store, remote);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| ServiceError::io("<runtime>", e))?;
    runtime
        .block_on(crate::api::serve(state, addr))
        .map_err(|e| ServiceError::Usage(format!("cannot serve on {addr}: {e}")))
}

fn synth(cli: &Cli, out: &mut dyn Write, path: &Path, themes: usize, per_theme: usize) -> Result<()> {
    if themes == 0 || themes > 20 || per_theme == 0 {
        return Err(ServiceError::Usage("--themes must be 1..=20 and --per-theme positive".into()));
    }
    let spec = PlantedSpec {
        themes,
        docs_per_theme: per_theme,
        seed: cli.seed.unwrap_or(PlantedSpec::default().seed),
        ..Default::default()
    };
    let docs = planted_corpus(&spec);
    std::fs::write(path, to_jsonl(&docs)).map_err(|e| ServiceError::io(path, e))?;
    if cli.json {
        return emit(out, &json!({ "documents": docs.len(), "path": path }));
    }
    say(out, &format!("{} documents -> {}", docs.len(), path.display()))
}
