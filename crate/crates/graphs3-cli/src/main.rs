//! graphs3: drive the retrieval pipeline end to end.
//!
//! Every command resolves one flat configuration (defaults, then the
//! --config file, then flags; last wins), creates a timestamped run
//! directory under `out`, echoes the resolved config into it, and writes
//! its artifacts there. Exit codes are a stable contract: 0 success,
//! 2 config error, 3 empty result, 4 I/O error.

mod config;

use clap::{Args, Parser, Subcommand};
use config::{GeneratorKind, PolicyKind, RawConfig, RunConfig};
use graphs3::env::Query;
use graphs3::eval::{emit_runs, render_table, run_eval, AnswerMode, EvalOptions, RetrieverKind};
use graphs3::graph::TextualGraph;
use graphs3::policy::oracle_bank_from_actions;
use graphs3::refine::{
    emit_refined, emit_rl, label_steps, load_refined, rebuild_refined, refine, replay,
    RefineError, RefineReportEntry, RefinedRecord, RlRecord,
};
use graphs3::synthesis::{
    dump_trajectories, emit_sft, group_trajectory_records, load_questions,
    load_trajectory_records, records_to_query_actions, retain, run_episode, synthesize_dataset,
    StepOutcome, SynthesisConfig, Trajectory,
};
use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "graphs3", version, about = "Agentic textual-graph retrieval pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Load a graph and print its size statistics.
    Stats(Common),
    /// Roll episodes over the question set and emit the retained SFT data.
    Synthesize(Common),
    /// Shorten trajectories to minimal consistent subsequences and emit RL data.
    Refine(Common),
    /// Recompute RL reward records from an existing refined.jsonl.
    Label(Common),
    /// Compare retrievers on the question set.
    Eval(Common),
    /// Replay one question step by step, printing prompts and decisions.
    Trace(TraceArgs),
}

/// Flags shared by every subcommand; each overrides the same-named config key.
#[derive(Args, Clone, Default)]
struct Common {
    /// Flat key = value config file applied before flag overrides.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    graph: Option<String>,
    /// Graph file format: tsv | jsonl.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    questions: Option<String>,
    /// Trajectory dump: oracle-policy bank and refine input.
    #[arg(long)]
    trajectories: Option<String>,
    /// refined.jsonl path (label input).
    #[arg(long)]
    refined: Option<String>,
    /// oracle | random | greedy_lexical | remote.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    t_max: Option<String>,
    /// true | false: reject whole actions on any out-of-vocabulary object.
    #[arg(long)]
    strict_objects: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    parallelism: Option<String>,
    /// Parent directory for run outputs.
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    c1: Option<String>,
    #[arg(long)]
    c2: Option<String>,
    /// exact | greedy.
    #[arg(long)]
    refine_mode: Option<String>,
    #[arg(long)]
    max_exact_len: Option<String>,
    /// Answer-consistency oracle: containment | remote.
    #[arg(long)]
    oracle: Option<String>,
    /// Comma list: interactive,khop1,khop2,khop3,full_graph,no_graph.
    #[arg(long)]
    retrievers: Option<String>,
    /// Retention matcher: hit | strict.
    #[arg(long)]
    matcher: Option<String>,
    #[arg(long)]
    episodes_per_query: Option<String>,
    /// Cap per query, or "none".
    #[arg(long)]
    max_retained_per_query: Option<String>,
    /// Answer model for static retrievers: none | remote.
    #[arg(long)]
    generator: Option<String>,
    /// true | false: also report strict set-equality accuracy.
    #[arg(long)]
    strict_acc: Option<String>,
    #[arg(long)]
    temperature: Option<String>,
    #[arg(long)]
    max_retries: Option<String>,
    #[arg(long)]
    in_flight: Option<String>,
}

#[derive(Args)]
struct TraceArgs {
    /// Question id to trace.
    question_id: String,
    #[command(flatten)]
    common: Common,
}

enum CliError {
    Config(String),
    Empty(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Empty(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Empty(m) => write!(f, "empty result: {m}"),
            CliError::Io(m) => write!(f, "{m}"),
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn io_err(e: impl std::fmt::Display) -> CliError {
    CliError::Io(e.to_string())
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.code());
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Cmd::Stats(args) => {
            let ctx = Context::prepare("stats", &args)?;
            cmd_stats(&ctx)
        }
        Cmd::Synthesize(args) => {
            let ctx = Context::prepare("synthesize", &args)?;
            cmd_synthesize(&ctx)
        }
        Cmd::Refine(args) => {
            let ctx = Context::prepare("refine", &args)?;
            cmd_refine(&ctx)
        }
        Cmd::Label(args) => {
            let ctx = Context::prepare("label", &args)?;
            cmd_label(&ctx)
        }
        Cmd::Eval(args) => {
            let ctx = Context::prepare("eval", &args)?;
            cmd_eval(&ctx)
        }
        Cmd::Trace(args) => {
            let ctx = Context::prepare("trace", &args.common)?;
            cmd_trace(&ctx, &args.question_id)
        }
    }
}

/// Resolved config plus the run directory everything writes into.
struct Context {
    config: RunConfig,
    run_dir: PathBuf,
}

impl Context {
    fn prepare(command: &str, args: &Common) -> Result<Self, CliError> {
        let mut raw = RawConfig::new();
        if let Some(path) = &args.config {
            raw.load_file(path).map_err(config_err)?;
        }
        let overrides: [(&str, &Option<String>); 26] = [
            ("graph", &args.graph),
            ("format", &args.format),
            ("questions", &args.questions),
            ("trajectories", &args.trajectories),
            ("refined", &args.refined),
            ("policy", &args.policy),
            ("endpoint", &args.endpoint),
            ("model", &args.model),
            ("t_max", &args.t_max),
            ("strict_objects", &args.strict_objects),
            ("seed", &args.seed),
            ("parallelism", &args.parallelism),
            ("out", &args.out),
            ("c1", &args.c1),
            ("c2", &args.c2),
            ("refine_mode", &args.refine_mode),
            ("max_exact_len", &args.max_exact_len),
            ("oracle", &args.oracle),
            ("retrievers", &args.retrievers),
            ("matcher", &args.matcher),
            ("episodes_per_query", &args.episodes_per_query),
            ("max_retained_per_query", &args.max_retained_per_query),
            ("generator", &args.generator),
            ("strict_acc", &args.strict_acc),
            ("temperature", &args.temperature),
            ("max_retries", &args.max_retries),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                raw.set(key, v.clone()).map_err(config_err)?;
            }
        }
        if let Some(v) = &args.in_flight {
            raw.set("in_flight", v.clone()).map_err(config_err)?;
        }
        let config = RunConfig::resolve(&raw).map_err(config_err)?;
        config
            .require_exists("graph", &config.graph)
            .map_err(config_err)?;
        for (what, path) in [
            ("questions", &config.questions),
            ("trajectories", &config.trajectories),
            ("refined", &config.refined),
        ] {
            if let Some(p) = path {
                config.require_exists(what, p).map_err(config_err)?;
            }
        }
        let run_dir = create_run_dir(&config.out, command).map_err(io_err)?;
        std::fs::write(run_dir.join("config.txt"), raw.resolved_lines())
            .map_err(|e| io_err(format!("cannot write config echo: {e}")))?;
        println!("run dir: {}", run_dir.display());
        Ok(Self { config, run_dir })
    }

    fn load_graph(&self) -> Result<TextualGraph, CliError> {
        TextualGraph::load(&self.config.graph, self.config.format).map_err(io_err)
    }

    fn load_questions(&self) -> Result<Vec<Query>, CliError> {
        let path = self
            .config
            .questions
            .as_ref()
            .ok_or_else(|| config_err("config key questions is required for this command"))?;
        load_questions(path).map_err(io_err)
    }

    /// Load the trajectory dump as (query, actions) groups.
    fn load_trajectory_groups(&self) -> Result<Vec<(Query, Vec<graphs3::env::Action>)>, CliError> {
        let path = self
            .config
            .trajectories
            .as_ref()
            .ok_or_else(|| config_err("config key trajectories is required for this command"))?;
        let records = load_trajectory_records(path).map_err(io_err)?;
        let mut groups = Vec::new();
        for (key, records) in group_trajectory_records(records) {
            groups.push(records_to_query_actions(&key, &records).map_err(io_err)?);
        }
        Ok(groups)
    }

    /// Oracle banks from dumps without query ids are keyed by question
    /// text; remap those keys onto the question set's ids.
    fn policy_spec(&self, questions: &[Query]) -> Result<graphs3::policy::PolicySpec, CliError> {
        let bank = if self.config.policy == PolicyKind::Oracle {
            let groups = self.load_trajectory_groups()?;
            Some(oracle_bank_from_actions(groups.into_iter().map(|(q, a)| {
                let key = questions
                    .iter()
                    .find(|known| known.id == q.id || known.question == q.question)
                    .map(|known| known.id.clone())
                    .unwrap_or(q.id);
                (key, a)
            })))
        } else {
            None
        };
        self.config.policy_spec(bank).map_err(config_err)
    }

    fn write(&self, name: &str, content: &str) -> Result<PathBuf, CliError> {
        let path = self.run_dir.join(name);
        std::fs::write(&path, content)
            .map_err(|e| io_err(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

/// `out/<epoch-secs>-<command>`; suffixed when two runs land in one second.
fn create_run_dir(out: &Path, command: &str) -> Result<PathBuf, String> {
    std::fs::create_dir_all(out).map_err(|e| format!("cannot create {}: {e}", out.display()))?;
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    for attempt in 0..1000u32 {
        let name = if attempt == 0 {
            format!("{secs}-{command}")
        } else {
            format!("{secs}-{command}-{attempt}")
        };
        let dir = out.join(name);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(format!("cannot create {}: {e}", dir.display())),
        }
    }
    Err("run directory collision limit reached".to_string())
}

fn cmd_stats(ctx: &Context) -> Result<(), CliError> {
    let graph = ctx.load_graph()?;
    let stats = graph.stats();
    if stats.triple_count == 0 {
        return Err(CliError::Empty("graph has no triples".to_string()));
    }
    println!("{stats}");
    ctx.write("stats.txt", &format!("{stats}\n"))?;
    Ok(())
}

fn cmd_synthesize(ctx: &Context) -> Result<(), CliError> {
    let graph = ctx.load_graph()?;
    let queries = ctx.load_questions()?;
    let policy = ctx.policy_spec(&queries)?;
    let config = SynthesisConfig {
        episode: ctx.config.episode.clone(),
        matcher: ctx.config.matcher,
        episodes_per_query: ctx.config.episodes_per_query,
        max_retained_per_query: ctx.config.max_retained_per_query,
        parallelism: ctx.config.parallelism,
    };
    let (retained, report) = synthesize_dataset(&graph, &queries, &policy, &config);
    let sft_path = ctx.run_dir.join("sft.jsonl");
    let sft_count = emit_sft(&retained, &sft_path).map_err(io_err)?;
    dump_trajectories(&retained, &ctx.run_dir.join("trajectories.jsonl")).map_err(io_err)?;
    ctx.write("report.txt", &report.to_string())?;
    if ctx.config.policy == PolicyKind::Remote {
        write_raws(&retained, &ctx.run_dir.join("raws.jsonl"))?;
    }
    println!(
        "retained {} / {} episodes, {} sft records",
        report.retained_count, report.episodes_run, sft_count
    );
    print!("{report}");
    if retained.is_empty() {
        return Err(CliError::Empty("no trajectory was retained".to_string()));
    }
    Ok(())
}

/// Raw model outputs per step, enough to replay a run offline.
fn write_raws(trajectories: &[Trajectory], path: &Path) -> Result<(), CliError> {
    let file = std::fs::File::create(path)
        .map_err(|e| io_err(format!("cannot write {}: {e}", path.display())))?;
    let mut out = std::io::BufWriter::new(file);
    for t in trajectories {
        for step in &t.steps {
            let (raw, kind) = match &step.outcome {
                StepOutcome::Decided { decision, .. } => (decision.raw.as_str(), "decided"),
                StepOutcome::Malformed { raw, .. } => (raw.as_str(), "malformed"),
            };
            let line = serde_json::json!({
                "query_id": t.query.id,
                "step": step.step,
                "kind": kind,
                "raw": raw,
            });
            writeln!(out, "{line}").map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)
}

fn cmd_refine(ctx: &Context) -> Result<(), CliError> {
    let graph = ctx.load_graph()?;
    let groups = ctx.load_trajectory_groups()?;
    let oracle = ctx.config.answer_oracle().map_err(config_err)?;
    let mode = ctx.config.refine_mode;
    let mut refined_records = Vec::new();
    let mut rl_records: Vec<RlRecord> = Vec::new();
    let mut report_lines = Vec::new();
    let mut refined_count = 0usize;
    for (query, actions) in groups {
        let mut trajectory = Trajectory::from_actions(query, actions);
        trajectory.retained = retain(&trajectory, ctx.config.matcher);
        let query_id = trajectory.query.id.clone();
        match refine(
            &graph,
            &trajectory,
            &oracle,
            mode,
            ctx.config.max_exact_len,
            &ctx.config.episode,
        ) {
            Ok(refined) => {
                let entry = RefineReportEntry {
                    query_id,
                    source_len: refined.source_len,
                    refined_len: refined.actions.len(),
                    mode_requested: mode.name().to_string(),
                    mode_used: refined.mode_used.name().to_string(),
                    oracle: oracle.kind_name().to_string(),
                    candidates_evaluated: refined.candidates_evaluated,
                    kept_indices: refined.kept_indices.clone(),
                };
                report_lines
                    .push(serde_json::to_string(&entry).expect("report entry serializes"));
                refined_records.push(RefinedRecord::from_refined(&refined, &graph));
                let (_, records) = label_steps(&graph, &refined, &ctx.config.rewards);
                rl_records.extend(records);
                refined_count += 1;
            }
            Err(RefineError::NotRetained) => {
                report_lines.push(format!(
                    "{{\"query_id\":{},\"skipped\":\"not retained\"}}",
                    serde_json::to_string(&query_id).expect("string serializes")
                ));
            }
            Err(e) => return Err(io_err(format!("refining {query_id}: {e}"))),
        }
    }
    emit_refined(&refined_records, &ctx.run_dir.join("refined.jsonl")).map_err(io_err)?;
    emit_rl(&rl_records, &ctx.run_dir.join("rl.jsonl")).map_err(io_err)?;
    ctx.write("report.jsonl", &(report_lines.join("\n") + "\n"))?;
    println!(
        "refined {} trajectories, {} rl records",
        refined_count,
        rl_records.len()
    );
    if refined_count == 0 {
        return Err(CliError::Empty("no trajectory was refined".to_string()));
    }
    Ok(())
}

fn cmd_label(ctx: &Context) -> Result<(), CliError> {
    let graph = ctx.load_graph()?;
    let queries = ctx.load_questions()?;
    let by_id: HashMap<&str, &Query> = queries.iter().map(|q| (q.id.as_str(), q)).collect();
    let refined_path = ctx
        .config
        .refined
        .as_ref()
        .ok_or_else(|| config_err("config key refined is required for label"))?;
    let records = load_refined(refined_path).map_err(io_err)?;
    let mut rl_records: Vec<RlRecord> = Vec::new();
    for record in &records {
        let query = by_id
            .get(record.query_id.as_str())
            .ok_or_else(|| config_err(format!("no question with id {:?}", record.query_id)))?;
        let refined = rebuild_refined(&graph, query, record, &ctx.config.episode)
            .map_err(|e| io_err(format!("rebuilding {}: {e}", record.query_id)))?;
        let (_, step_records) = label_steps(&graph, &refined, &ctx.config.rewards);
        rl_records.extend(step_records);
    }
    emit_rl(&rl_records, &ctx.run_dir.join("rl.jsonl")).map_err(io_err)?;
    println!("labeled {} rl records", rl_records.len());
    if rl_records.is_empty() {
        return Err(CliError::Empty("no rl record was produced".to_string()));
    }
    Ok(())
}

fn cmd_eval(ctx: &Context) -> Result<(), CliError> {
    let graph = ctx.load_graph()?;
    let queries = ctx.load_questions()?;
    if queries.is_empty() {
        return Err(CliError::Empty("no questions to evaluate".to_string()));
    }
    let mut retrievers = Vec::new();
    for name in &ctx.config.retrievers {
        let kind = match name.as_str() {
            "interactive" => RetrieverKind::Interactive(ctx.policy_spec(&queries)?),
            "khop1" => RetrieverKind::KHop(1),
            "khop2" => RetrieverKind::KHop(2),
            "khop3" => RetrieverKind::KHop(3),
            "full_graph" => RetrieverKind::FullGraph,
            "no_graph" => RetrieverKind::NoGraph,
            other => return Err(config_err(format!("unknown retriever {other:?}"))),
        };
        retrievers.push(kind);
    }
    let answer_mode = match ctx.config.generator {
        GeneratorKind::None => AnswerMode::Containment,
        GeneratorKind::Remote => AnswerMode::Generator(
            ctx.config
                .remote_config(ctx.config.generator_temperature)
                .map_err(config_err)?,
        ),
    };
    let options = EvalOptions {
        episode: ctx.config.episode.clone(),
        parallelism: ctx.config.parallelism,
        strict_also: ctx.config.strict_acc,
        answer_mode,
    };
    let (reports, runs) = run_eval(&graph, &queries, &retrievers, &options).map_err(io_err)?;
    let table = render_table(&reports);
    print!("{table}");
    if matches!(ctx.config.generator, GeneratorKind::None) {
        println!("note: static retrievers use containment answers (retrieval recall only)");
    }
    ctx.write("table.txt", &table)?;
    emit_runs(&runs, &ctx.run_dir.join("runs.jsonl")).map_err(io_err)?;
    Ok(())
}

fn cmd_trace(ctx: &Context, question_id: &str) -> Result<(), CliError> {
    let graph = ctx.load_graph()?;
    let queries = ctx.load_questions()?;
    let query = queries
        .iter()
        .find(|q| q.id == question_id)
        .ok_or_else(|| config_err(format!("unknown question id {question_id:?}")))?;
    let spec = ctx.policy_spec(&queries)?;
    let mut policy = spec
        .build_for_episode(&query.id, 0)
        .map_err(|e| config_err(format!("cannot build policy: {e}")))?;
    let mut transcript = String::new();
    let trajectory = match run_episode(&graph, query, policy.as_mut(), &ctx.config.episode) {
        Ok(t) => t,
        Err(failure) => {
            render_transcript(&mut transcript, &failure.partial);
            print!("{transcript}");
            return Err(config_err(format!("episode aborted: {}", failure.error)));
        }
    };
    render_transcript(&mut transcript, &trajectory);
    let outcome = replay(&graph, query, &trajectory.actions(), &ctx.config.episode);
    transcript.push_str(&format!(
        "final: answers={:?} perception={} subgraph={}\n",
        trajectory.final_answers,
        outcome.final_state.perception().len(),
        outcome.final_state.subgraph().len()
    ));
    print!("{transcript}");
    ctx.write("transcript.txt", &transcript)?;
    Ok(())
}

fn render_transcript(out: &mut String, trajectory: &Trajectory) {
    for step in &trajectory.steps {
        out.push_str(&format!("== step {}\n", step.step));
        out.push_str("-- prompt\n");
        for line in step.prompt.lines() {
            out.push_str("   ");
            out.push_str(line);
            out.push('\n');
        }
        match &step.outcome {
            StepOutcome::Decided { decision, validity } => {
                out.push_str(&format!(
                    "-- decision: {} {:?}\n",
                    decision.action.kind_name(),
                    decision.action.objects()
                ));
                out.push_str(&format!("-- validity: {}\n", validity.describe()));
            }
            StepOutcome::Malformed { reason, .. } => {
                out.push_str(&format!("-- malformed: {reason}\n"));
            }
        }
        // subgraph delta shows up in the next step's snapshot
        out.push_str(&format!("-- subgraph before: {}\n", step.now_state.len()));
    }
}
