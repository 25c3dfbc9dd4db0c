use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use llmhpo::bench::{
    self, read_records, report_from_records, run_cost, BenchError, BuildContext, ExperimentSpec, ProposerKind,
    ProposerSpec, Record, TaskSpec,
};
use llmhpo::bo::AcquisitionConfig;
use llmhpo::codegen::{
    run_codegen_session, CodegenError, CodegenSettings, CodegenTemplates, DatasetDescriptor, NdjsonRunner,
};
use llmhpo::llm_client::{ChatClient, CostLedger, LlmError, OpenAiClient, ScriptedClient, DEFAULT_MODEL, ENV_MODEL};
use llmhpo::llm_proposer::{LlmSettings, PromptMode, Reasoning};
use llmhpo::objectives::{toy::draw_shift, EvalError, ExternalRequestStyle, ToyFunction};
use llmhpo::process::ProcessFailure;
use llmhpo::proposers::{History, ProposeError, Trial};
use llmhpo::run::{jsonl_sink, run_trials, RunError};

#[derive(Parser)]
#[command(name = "llmhpo", version, about = "Hyperparameter tuning with LLM, random, and Bayesian-optimization proposers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one tuning loop and log every trial.
    Tune(TuneArgs),
    /// Run an experiment grid from a spec file.
    Bench(BenchArgs),
    /// Let a model write and tune a training program.
    Codegen(CodegenArgs),
    /// Re-evaluate a logged trial trace and check the losses.
    Replay(ReplayArgs),
    /// Recompute the comparison report from a records file.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ProposerArg {
    Random,
    Bo,
    Llm,
    Replay,
    Hybrid,
}

#[derive(Clone, Copy, ValueEnum)]
enum StageArg {
    Random,
    Bo,
    Llm,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Chat,
    Compressed,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReasoningArg {
    Plain,
    Cot,
    Short,
}

#[derive(Args)]
struct LlmArgs {
    /// Model name; defaults to $LLM_MODEL.
    #[arg(long)]
    model: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    #[arg(long, value_enum, default_value = "chat")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "plain")]
    reasoning: ReasoningArg,
    /// Add the expert system message.
    #[arg(long)]
    expert: bool,
    #[arg(long, default_value_t = 3)]
    max_retries: usize,
    /// Fall back to a random config when every retry fails.
    #[arg(long)]
    fallback_random: bool,
    /// Opening wording for 2-D toy spaces (0-3).
    #[arg(long)]
    toy_prompt: Option<usize>,
    /// JSON array of canned replies used instead of a live endpoint.
    #[arg(long, hide = true)]
    llm_script: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    /// Search space: builtin name (svm, lr, rf, nn) or JSON file. Needed with --external.
    #[arg(long)]
    space: Option<String>,
    /// Toy function name (branin, shifted_branin, ...) or tabular task file.
    #[arg(long, conflicts_with = "external")]
    objective: Option<String>,
    /// Shift a toy function by a U(0,1)^2 draw.
    #[arg(long)]
    shifted: bool,
    #[arg(long, default_value_t = 0)]
    shift_seed: u64,
    /// Trainer command speaking the NDJSON protocol.
    #[arg(long)]
    external: Option<String>,
    /// Send `eval` requests for this task name instead of `run` requests.
    #[arg(long, requires = "external")]
    external_task: Option<String>,
    /// Per-evaluation timeout in seconds for --external.
    #[arg(long, default_value_t = 600.0)]
    timeout: f64,
    #[arg(long, value_enum)]
    proposer: ProposerArg,
    /// Trial log to re-propose from (--proposer replay).
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "llm")]
    first: StageArg,
    #[arg(long, value_enum, default_value = "bo")]
    second: StageArg,
    /// Last step served by the first hybrid stage.
    #[arg(long, default_value_t = 10)]
    switch_step: usize,
    #[arg(long, default_value_t = 10)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    llm: LlmArgs,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Parallel grid cells; overrides the spec.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory; overrides the spec.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, hide = true)]
    llm_script: Option<PathBuf>,
}

#[derive(Args)]
struct CodegenArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 5)]
    budget: usize,
    /// Runner command; defaults to `trainer-runner --dataset PATH --timeout S --seed N`.
    #[arg(long)]
    runner: Option<String>,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 3)]
    max_regen: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-run timeout in seconds.
    #[arg(long, default_value_t = 600.0)]
    timeout: f64,
    #[arg(long)]
    model: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    /// Ask for a JSON reply instead of a tool call.
    #[arg(long)]
    no_tools: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, hide = true)]
    llm_script: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    /// Trial log (trials.jsonl).
    #[arg(long)]
    trace: PathBuf,
    /// Run summary naming the task; defaults to run.json next to the trace.
    #[arg(long)]
    run: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    records: PathBuf,
    /// Also write report.csv and report.md here.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A typed failure with its process exit code.
struct Failure {
    code: u8,
    kind: String,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self { code: 2, kind: "ConfigError".into(), message: message.into() }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self { code: 2, kind: "IoError".into(), message: format!("{}: {e}", path.display()) }
    }
}

impl From<LlmError> for Failure {
    fn from(e: LlmError) -> Self {
        let code = if matches!(e, LlmError::Config(_) | LlmError::UnknownModel(_)) { 2 } else { 4 };
        Self { code, kind: e.kind().into(), message: e.to_string() }
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        Self { code: 2, kind: e.kind().into(), message: e.to_string() }
    }
}

impl From<CodegenError> for Failure {
    fn from(e: CodegenError) -> Self {
        let code = if matches!(e, CodegenError::Descriptor(_)) { 2 } else { 4 };
        Self { code, kind: e.kind().into(), message: e.to_string() }
    }
}

fn eval_code(e: &EvalError) -> u8 {
    match e {
        EvalError::Process(ProcessFailure::Protocol { .. }) => 4,
        _ => 3,
    }
}

fn run_error_code(e: &RunError) -> u8 {
    match e {
        RunError::Eval { source, .. } => eval_code(source),
        RunError::Propose { source, .. } => match source {
            ProposeError::Llm(LlmError::Config(_) | LlmError::UnknownModel(_)) => 2,
            ProposeError::Llm(_) | ProposeError::ProposalFailed { .. } => 4,
            ProposeError::ScriptExhausted { .. } | ProposeError::InvalidScript { .. } => 2,
            _ => 3,
        },
        RunError::Log(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Tune(a) => tune(a),
        Command::Bench(a) => bench_cmd(a),
        Command::Codegen(a) => codegen(a),
        Command::Replay(a) => replay(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error[{}]: {}", f.kind, f.message);
            ExitCode::from(f.code)
        }
    }
}

fn split_command(cmd: &str) -> Result<Vec<String>, Failure> {
    let parts: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
    if parts.is_empty() {
        return Err(Failure::config("empty command"));
    }
    Ok(parts)
}

fn read_json(path: &Path) -> Result<Value, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    std::fs::write(path, text + "\n").map_err(|e| Failure::io(path, e))
}

/// Live endpoint from the environment, or canned replies from a file.
fn chat_client(script: Option<&Path>) -> Result<Arc<dyn ChatClient>, Failure> {
    match script {
        Some(path) => {
            let replies: Vec<String> = serde_json::from_value(read_json(path)?)
                .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
            Ok(Arc::new(ScriptedClient::new(replies)))
        }
        None => Ok(Arc::new(OpenAiClient::from_env()?)),
    }
}

fn model_name(flag: Option<&str>) -> String {
    flag.map(str::to_string)
        .or_else(|| std::env::var(ENV_MODEL).ok().filter(|m| !m.is_empty()))
        .unwrap_or_else(|| DEFAULT_MODEL.to_string())
}

fn llm_settings(a: &LlmArgs) -> LlmSettings {
    LlmSettings {
        model: model_name(a.model.as_deref()),
        temperature: a.temperature,
        mode: match a.mode {
            ModeArg::Chat => PromptMode::Chat,
            ModeArg::Compressed => PromptMode::Compressed,
        },
        reasoning: match a.reasoning {
            ReasoningArg::Plain => Reasoning::Plain,
            ReasoningArg::Cot => Reasoning::Cot,
            ReasoningArg::Short => Reasoning::Short,
        },
        expert: a.expert,
        max_retries: a.max_retries,
        fallback_random: a.fallback_random,
        toy_prompt: a.toy_prompt,
        max_tokens: None,
    }
}

fn task_spec(a: &TuneArgs) -> Result<TaskSpec, Failure> {
    if let Some(cmd) = &a.external {
        let space = a.space.as_ref().ok_or_else(|| Failure::config("--external needs --space"))?;
        let space_value = match Path::new(space).exists() {
            true => read_json(Path::new(space))?,
            false => Value::String(space.clone()),
        };
        return Ok(TaskSpec::External {
            name: a.external_task.clone().unwrap_or_else(|| "external".into()),
            space: space_value,
            command: split_command(cmd)?,
            timeout_s: a.timeout,
            workdir: None,
            request: a.external_task.as_ref().map(|t| ExternalRequestStyle::Eval { task: t.clone() }),
        });
    }
    let name = a.objective.as_deref().ok_or_else(|| Failure::config("one of --objective or --external is required"))?;
    let (shifted, base) = match name.strip_prefix("shifted_") {
        Some(rest) => (true, rest),
        None => (a.shifted, name),
    };
    if let Some(f) = ToyFunction::from_name(base) {
        // The drawn shift is stored so a replay does not depend on the draw.
        let shift = shifted.then(|| draw_shift(a.shift_seed));
        return Ok(TaskSpec::Toy { function: f.name().to_string(), shifted, shift_seed: a.shift_seed, shift });
    }
    let path = PathBuf::from(name);
    if !path.exists() {
        return Err(Failure::config(format!("`{name}` is neither a toy function nor a task file")));
    }
    let path = std::fs::canonicalize(&path).map_err(|e| Failure::io(&path, e))?;
    Ok(TaskSpec::Tabular { path })
}

fn stage_spec(stage: StageArg, settings: &LlmSettings) -> ProposerSpec {
    ProposerSpec::new(match stage {
        StageArg::Random => ProposerKind::Random,
        StageArg::Bo => ProposerKind::Bo { acquisition: AcquisitionConfig::default() },
        StageArg::Llm => ProposerKind::Llm { settings: settings.clone() },
    })
}

fn read_trials(path: &Path) -> Result<Vec<Trial>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Failure::config(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}

fn tune(a: TuneArgs) -> Result<(), Failure> {
    if a.budget == 0 {
        return Err(Failure::config("--budget must be positive"));
    }
    let task = task_spec(&a)?;
    let settings = llm_settings(&a.llm);
    let spec = match a.proposer {
        ProposerArg::Random => stage_spec(StageArg::Random, &settings),
        ProposerArg::Bo => stage_spec(StageArg::Bo, &settings),
        ProposerArg::Llm => stage_spec(StageArg::Llm, &settings),
        ProposerArg::Replay => {
            let trace = a.trace.clone().ok_or_else(|| Failure::config("--proposer replay needs --trace"))?;
            ProposerSpec { id: Some("replay".into()), kind: ProposerKind::Replay { records: trace, method: String::new() } }
        }
        ProposerArg::Hybrid => ProposerSpec::new(ProposerKind::Hybrid {
            first: Box::new(stage_spec(a.first, &settings)),
            second: Box::new(stage_spec(a.second, &settings)),
            switch_step: a.switch_step,
        }),
    };
    let client = match spec.needs_client() {
        true => Some(chat_client(a.llm.llm_script.as_deref())?),
        false => None,
    };
    let built = task.build(Path::new("."))?;
    let proposer = match &spec.kind {
        ProposerKind::Replay { records, .. } => {
            let script = read_trials(records)?.into_iter().map(|t| t.config).collect();
            Box::new(llmhpo::proposers::ReplayProposer::new(script).with_id("replay")) as Box<dyn llmhpo::Proposer>
        }
        _ => {
            let empty = Default::default();
            let ctx = BuildContext { client, replay: &empty };
            ctx.build(&spec, &built.id, a.seed).map_err(Failure::config)?
        }
    };
    let mut proposer = match built.grid {
        Some(grid) => Box::new(llmhpo::proposers::GridSnap::new(proposer, built.objective.space(), grid)),
        None => proposer,
    };
    let mut objective = built.objective;

    std::fs::create_dir_all(&a.out).map_err(|e| Failure::io(&a.out, e))?;
    let log_path = a.out.join("trials.jsonl");
    let log = File::create(&log_path).map_err(|e| Failure::io(&log_path, e))?;
    let mut sink = jsonl_sink(BufWriter::new(log));
    let mut trials = Vec::new();
    let outcome = run_trials(objective.as_mut(), proposer.as_mut(), a.budget, |t| {
        sink(t)?;
        trials.push(t.clone());
        Ok(())
    });
    drop(sink);

    let cost = run_cost(&trials, spec.llm_model(), &CostLedger::default());
    let history = History::from_trials(trials, a.budget).expect("trials come from the run loop");
    let best = history.best_so_far().ok();
    let (status, error) = match &outcome {
        Ok(_) => ("ok", None),
        Err(f) => ("failed", Some(json!({"kind": f.error.kind(), "message": f.error.to_string()}))),
    };
    let summary = json!({
        "task": task,
        "task_id": built.id,
        "proposer": spec.method_id(),
        "seed": a.seed,
        "budget": a.budget,
        "trials": history.len(),
        "status": status,
        "error": error,
        "best_step": best.map(|t| t.step),
        "best_config": best.map(|t| &t.config),
        "best_loss": best.map(|t| t.loss),
        "cost": cost,
    });
    write_json(&a.out.join("run.json"), &summary)?;
    match best {
        Some(t) => println!(
            "{}: best loss {} at step {} with {}",
            built.id,
            t.loss,
            t.step,
            objective.space().canonical_json(&t.config)
        ),
        None => println!("{}: no completed trials", built.id),
    }
    println!(
        "trials: {}, tokens in/out: {}/{}, cost: ${:.4}, log: {}",
        history.len(),
        cost.tokens_in,
        cost.tokens_out,
        cost.usd,
        log_path.display()
    );
    outcome.map(|_| ()).map_err(|f| Failure {
        code: run_error_code(&f.error),
        kind: f.error.kind().into(),
        message: f.error.to_string(),
    })
}

fn bench_cmd(a: BenchArgs) -> Result<(), Failure> {
    let mut spec = ExperimentSpec::load(&a.spec)?;
    if let Some(j) = a.jobs {
        spec.jobs = j;
    }
    spec.output_dir = Some(a.out.or(spec.output_dir.map(|d| spec.base_dir.join(d))).unwrap_or_else(|| "bench-out".into()));
    let client = match spec.proposers.iter().any(ProposerSpec::needs_client) {
        true => Some(chat_client(a.llm_script.as_deref())?),
        false => None,
    };
    let outcome = bench::run_experiment(&spec, client)?;
    print!("{}", outcome.report.to_markdown());
    let failed = outcome.records.iter().filter(|r| matches!(r, Record::Run(run) if run.status != bench::RunStatus::Ok)).count();
    if failed > 0 {
        eprintln!("{failed} run(s) failed; see records.jsonl");
    }
    println!("records: {}", spec.output_dir.expect("set above").join("records.jsonl").display());
    Ok(())
}

fn codegen(a: CodegenArgs) -> Result<(), Failure> {
    let dataset = DatasetDescriptor::load(&a.dataset)?;
    let command = match &a.runner {
        Some(cmd) => split_command(cmd)?,
        None => vec![
            "trainer-runner".into(),
            "--dataset".into(),
            dataset.data_path.display().to_string(),
            "--timeout".into(),
            a.timeout.to_string(),
            "--seed".into(),
            a.seed.to_string(),
        ],
    };
    let client = chat_client(a.llm_script.as_deref())?;
    let settings = CodegenSettings {
        model: model_name(a.model.as_deref()),
        temperature: a.temperature,
        budget: a.budget,
        max_regen: a.max_regen,
        epochs: a.epochs,
        seed: a.seed,
        use_tools: !a.no_tools,
    };
    let mut runner = NdjsonRunner::new(command, None, Duration::from_secs_f64(a.timeout));
    let session = run_codegen_session(client.as_ref(), &mut runner, &dataset, &settings, &CodegenTemplates::default())?;
    std::fs::create_dir_all(&a.out).map_err(|e| Failure::io(&a.out, e))?;
    let value = serde_json::to_value(&session).expect("session serializes");
    write_json(&a.out.join("session.json"), &value)?;
    match session.best() {
        Some(t) => println!(
            "best val loss {} at trial {} with {}",
            t.feedback.as_ref().expect("best has feedback").val_loss,
            t.index,
            Value::Object(t.arguments.clone().unwrap_or_default())
        ),
        None => println!("no tuning run succeeded"),
    }
    println!("regenerations: {}, tokens in/out: {}/{}", session.regenerations, session.tokens_in, session.tokens_out);
    Ok(())
}

fn replay(a: ReplayArgs) -> Result<(), Failure> {
    let trials = read_trials(&a.trace)?;
    let run_path = a.run.clone().unwrap_or_else(|| a.trace.with_file_name("run.json"));
    let run = read_json(&run_path)?;
    let task: TaskSpec = serde_json::from_value(run.get("task").cloned().unwrap_or(Value::Null))
        .map_err(|e| Failure::config(format!("{}: task: {e}", run_path.display())))?;
    let tolerance = match task {
        TaskSpec::Tabular { .. } => 0.0,
        _ => 1e-12,
    };
    let mut built = task.build(Path::new("."))?;
    let mut mismatches = 0;
    for t in &trials {
        let got = built.objective.evaluate(&t.config).map_err(|e| Failure {
            code: eval_code(&e),
            kind: e.kind().into(),
            message: format!("step {}: {e}", t.step),
        })?;
        let diff = (got.loss - t.loss).abs();
        if !(diff <= tolerance) {
            mismatches += 1;
            println!("step {}: logged {} replayed {} (diff {diff:e})", t.step, t.loss, got.loss);
        }
    }
    if mismatches > 0 {
        return Err(Failure {
            code: 3,
            kind: "ReplayMismatch".into(),
            message: format!("{mismatches} of {} losses differ beyond {tolerance:e}", trials.len()),
        });
    }
    println!("{} trials on {} replayed, all losses match", trials.len(), built.id);
    Ok(())
}

fn report(a: ReportArgs) -> Result<(), Failure> {
    let records = read_records(&a.records)?;
    let report = report_from_records(&records);
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
        for (name, text) in [("report.csv", report.to_csv()), ("report.md", report.to_markdown())] {
            let path = dir.join(name);
            let mut f = File::create(&path).map_err(|e| Failure::io(&path, e))?;
            f.write_all(text.as_bytes()).map_err(|e| Failure::io(&path, e))?;
        }
    }
    print!("{}", report.to_markdown());
    Ok(())
}
