//! Experiment grids (tasks × proposers × seeds), the bootstrapped random
//! baseline, and the comparison metrics.

mod metrics;

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use metrics::{
    average_ranks, bootstrap_best, mean_rank, mean_std, relative_change, BootstrapEstimate, MethodSummary,
    MetricsReport, RANDOM_BASELINE,
};

use crate::bo::{AcquisitionConfig, BoProposer};
use crate::llm_client::{ChatClient, CostLedger, CostSummary};
use crate::llm_proposer::{LlmProposer, LlmSettings};
use crate::objectives::{
    EvalError, ExternalObjective, ExternalRequestStyle, Objective, TabularTask, ToyFunction, ToyObjective,
};
use crate::proposers::{GridSnap, HybridProposer, RandomProposer, ReplayProposer, Proposer, Trial};
use crate::run::run_trials;
use crate::space::{Config, SearchSpace};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid experiment spec: {0}")]
    Spec(String),
    #[error("MissingEntry: no result for method `{method}` on task {task}")]
    MissingEntry { task: String, method: String },
    #[error("ZeroBaseline: random baseline error is {0}, relative change undefined")]
    ZeroBaseline(f64),
    #[error("io error: {0}")]
    Io(String),
}

impl BenchError {
    pub fn kind(&self) -> &'static str {
        match self {
            BenchError::Spec(_) => "ConfigError",
            BenchError::MissingEntry { .. } => "MissingEntry",
            BenchError::ZeroBaseline(_) => "ZeroBaseline",
            BenchError::Io(_) => "IoError",
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> BenchError {
    BenchError::Io(format!("{}: {e}", path.display()))
}

fn default_timeout() -> f64 {
    600.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TaskSpec {
    Toy {
        function: String,
        #[serde(default)]
        shifted: bool,
        /// Seed of the shift draw; ignored when `shift` is given.
        #[serde(default)]
        shift_seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shift: Option<[f64; 2]>,
    },
    Tabular {
        path: PathBuf,
    },
    External {
        name: String,
        /// Builtin space name, inline space object, or path to a space file.
        space: Value,
        command: Vec<String>,
        #[serde(default = "default_timeout")]
        timeout_s: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        workdir: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        request: Option<ExternalRequestStyle>,
    },
}

/// A constructed task: its objective plus, for tabular tasks, the grid.
pub struct BuiltTask {
    pub id: String,
    pub objective: Box<dyn Objective>,
    pub grid: Option<Vec<Config>>,
}

pub fn resolve_space(value: &Value, base_dir: &Path) -> Result<SearchSpace, BenchError> {
    match value {
        Value::String(s) => match SearchSpace::builtin(s) {
            Ok(space) => Ok(space),
            Err(_) => {
                let path = base_dir.join(s);
                let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
                SearchSpace::from_json(&text).map_err(|e| BenchError::Spec(e.to_string()))
            }
        },
        other => serde_json::from_value(other.clone()).map_err(|e| BenchError::Spec(e.to_string())),
    }
}

impl TaskSpec {
    pub fn toy(function: ToyFunction, shifted: bool) -> Self {
        TaskSpec::Toy { function: function.name().to_string(), shifted, shift_seed: 0, shift: None }
    }

    pub fn build(&self, base_dir: &Path) -> Result<BuiltTask, BenchError> {
        match self {
            TaskSpec::Toy { function, shifted, shift_seed, shift } => {
                let f = ToyFunction::from_name(function)
                    .ok_or_else(|| BenchError::Spec(format!("unknown toy function `{function}`")))?;
                let obj = match (shift, shifted) {
                    (Some(c), _) => ToyObjective::with_shift(f, *c),
                    (None, true) => ToyObjective::shifted(f, *shift_seed),
                    (None, false) => ToyObjective::new(f),
                };
                Ok(BuiltTask { id: obj.label(), objective: Box::new(obj), grid: None })
            }
            TaskSpec::Tabular { path } => {
                let path = base_dir.join(path);
                let task = TabularTask::load(&path).map_err(|e| io_err(&path, e))?;
                Ok(BuiltTask { id: task.name.clone(), grid: Some(task.grid().to_vec()), objective: Box::new(task) })
            }
            TaskSpec::External { name, space, command, timeout_s, workdir, request } => {
                if command.is_empty() {
                    return Err(BenchError::Spec(format!("external task `{name}` has an empty command")));
                }
                let space = resolve_space(space, base_dir)?;
                let workdir = Some(workdir.as_ref().map_or_else(|| base_dir.to_path_buf(), |w| base_dir.join(w)));
                let mut obj = ExternalObjective::new(space, command.clone(), Duration::from_secs_f64(*timeout_s), workdir);
                if let Some(style) = request {
                    obj = obj.with_style(style.clone());
                }
                Ok(BuiltTask { id: name.clone(), objective: Box::new(obj), grid: None })
            }
        }
    }
}

fn default_switch() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ProposerKind {
    Random,
    Bo {
        #[serde(default)]
        acquisition: AcquisitionConfig,
    },
    Llm {
        #[serde(default)]
        settings: LlmSettings,
    },
    /// Re-proposes the configs a method logged in an earlier records file.
    Replay {
        records: PathBuf,
        method: String,
    },
    Hybrid {
        first: Box<ProposerSpec>,
        second: Box<ProposerSpec>,
        #[serde(default = "default_switch")]
        switch_step: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposerSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(flatten)]
    pub kind: ProposerKind,
}

impl ProposerSpec {
    pub fn new(kind: ProposerKind) -> Self {
        Self { id: None, kind }
    }

    /// Method name used in records and reports.
    pub fn method_id(&self) -> String {
        if let Some(id) = &self.id {
            return id.clone();
        }
        match &self.kind {
            ProposerKind::Random => "random".into(),
            ProposerKind::Bo { .. } => "bo_gp".into(),
            ProposerKind::Llm { settings } => settings.id(),
            ProposerKind::Replay { method, .. } => format!("replay:{method}"),
            ProposerKind::Hybrid { first, second, switch_step } => {
                format!("hybrid({}->{}@{})", first.method_id(), second.method_id(), switch_step)
            }
        }
    }

    pub fn llm_model(&self) -> Option<&str> {
        match &self.kind {
            ProposerKind::Llm { settings } => Some(&settings.model),
            ProposerKind::Hybrid { first, second, .. } => first.llm_model().or_else(|| second.llm_model()),
            _ => None,
        }
    }

    pub fn needs_client(&self) -> bool {
        self.llm_model().is_some()
    }

    fn replay_sources<'a>(&'a self, out: &mut Vec<&'a Path>) {
        match &self.kind {
            ProposerKind::Replay { records, .. } => out.push(records),
            ProposerKind::Hybrid { first, second, .. } => {
                first.replay_sources(out);
                second.replay_sources(out);
            }
            _ => {}
        }
    }
}

/// Everything a proposer may need besides its spec.
pub struct BuildContext<'a> {
    pub client: Option<Arc<dyn ChatClient>>,
    pub replay: &'a HashMap<PathBuf, Vec<RunRecord>>,
}

impl BuildContext<'_> {
    pub fn build(&self, spec: &ProposerSpec, task: &str, seed: u64) -> Result<Box<dyn Proposer>, String> {
        let id = spec.method_id();
        Ok(match &spec.kind {
            ProposerKind::Random => Box::new(RandomProposer::new(seed).with_id(id)),
            ProposerKind::Bo { acquisition } => Box::new(BoProposer::new(*acquisition, seed).with_id(id)),
            ProposerKind::Llm { settings } => {
                let client = self.client.clone().ok_or("an LLM proposer needs a chat client")?;
                Box::new(LlmProposer::new(client, settings.clone(), seed).with_id(id))
            }
            ProposerKind::Replay { records, method } => {
                let runs = self.replay.get(records).ok_or_else(|| format!("records {} not loaded", records.display()))?;
                let run = runs
                    .iter()
                    .find(|r| r.task == task && &r.method == method && r.seed == seed)
                    .ok_or_else(|| format!("no logged run of `{method}` on {task} with seed {seed}"))?;
                let script = run.trials.iter().map(|t| t.config.clone()).collect();
                Box::new(ReplayProposer::new(script).with_id(id))
            }
            ProposerKind::Hybrid { first, second, switch_step } => {
                Box::new(HybridProposer::new(self.build(first, task, seed)?, self.build(second, task, seed)?, *switch_step))
            }
        })
    }
}

fn default_budget() -> usize {
    10
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_pool() -> usize {
    500
}

fn default_b() -> usize {
    1000
}

fn default_jobs() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub tasks: Vec<TaskSpec>,
    pub proposers: Vec<ProposerSpec>,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_pool")]
    pub pool_size: usize,
    #[serde(rename = "bootstrap_B", default = "default_b")]
    pub bootstrap_b: usize,
    #[serde(default)]
    pub pool_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    /// Directory that relative input paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentSpec {
    pub fn new(tasks: Vec<TaskSpec>, proposers: Vec<ProposerSpec>) -> Self {
        Self {
            tasks,
            proposers,
            budget: default_budget(),
            seeds: default_seeds(),
            pool_size: default_pool(),
            bootstrap_b: default_b(),
            pool_seed: 0,
            output_dir: None,
            jobs: default_jobs(),
            base_dir: PathBuf::from("."),
        }
    }

    /// The ten 2-D landscape tasks, in report row order.
    pub fn toy_tasks() -> Vec<TaskSpec> {
        use ToyFunction::*;
        let mut tasks = Vec::new();
        for f in [Ackley, Branin, Rosenbrock, Himmelblau] {
            tasks.push(TaskSpec::toy(f, false));
            tasks.push(TaskSpec::toy(f, true));
        }
        tasks.push(TaskSpec::toy(ToyFunction::from_name("quad2d").expect("known"), false));
        tasks.push(TaskSpec::toy(ToyFunction::from_name("quad2d_illcond").expect("known"), false));
        tasks
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let mut spec: Self = serde_json::from_str(&text).map_err(|e| BenchError::Spec(format!("{}: {e}", path.display())))?;
        spec.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(spec)
    }

    pub fn check(&self) -> Result<(), BenchError> {
        let fail = |m: &str| Err(BenchError::Spec(m.to_string()));
        if self.tasks.is_empty() {
            return fail("tasks must not be empty");
        }
        if self.proposers.is_empty() {
            return fail("proposers must not be empty");
        }
        if self.seeds.is_empty() {
            return fail("seeds must not be empty");
        }
        if self.budget == 0 || self.pool_size == 0 || self.bootstrap_b == 0 || self.jobs == 0 {
            return fail("budget, pool_size, bootstrap_B and jobs must be positive");
        }
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.proposers {
            let id = p.method_id();
            if id == RANDOM_BASELINE || !seen.insert(id.clone()) {
                return Err(BenchError::Spec(format!("duplicate or reserved method id `{id}`")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub task: String,
    pub method: String,
    pub seed: u64,
    pub budget: usize,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub cost: CostSummary,
    pub trials: Vec<Trial>,
}

impl RunRecord {
    pub fn best_loss(&self) -> Option<f64> {
        self.trials.iter().map(|t| t.loss).reduce(f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub task: String,
    pub pool_size: usize,
    pub pool_seed: u64,
    pub k: usize,
    pub bootstrap_b: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<BootstrapEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// One line of `records.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
pub enum Record {
    Baseline(BaselineRecord),
    Run(RunRecord),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomPool {
    pub task: String,
    pub seed: u64,
    pub losses: Vec<f64>,
}

/// Evaluates `n` random configurations (snapped to `grid` when given).
pub fn build_random_pool(task: &BuiltTask, objective: &mut dyn Objective, n: usize, seed: u64) -> Result<RandomPool, EvalError> {
    let random: Box<dyn Proposer> = Box::new(RandomProposer::new(seed));
    let mut proposer: Box<dyn Proposer> = match &task.grid {
        Some(grid) => Box::new(GridSnap::new(random, objective.space(), grid.clone())),
        None => random,
    };
    match run_trials(objective, proposer.as_mut(), n, |_| Ok(())) {
        Ok(h) => Ok(RandomPool { task: task.id.clone(), seed, losses: h.losses() }),
        Err(f) => match f.error {
            crate::run::RunError::Eval { source, .. } => Err(source),
            other => Err(EvalError::InvalidConfig(other.to_string())),
        },
    }
}

/// Mean and spread of best-of-`k` over `runs` independent random searches.
pub fn random_search_stats(objective: &mut dyn Objective, k: usize, runs: usize, seed: u64) -> Result<(f64, f64), EvalError> {
    let mut bests = Vec::with_capacity(runs);
    for r in 0..runs {
        let mut p = RandomProposer::new(seed.wrapping_add(r as u64));
        let mut best = f64::INFINITY;
        for _ in 0..k {
            let config = p.draw(objective.space());
            best = best.min(objective.evaluate(&config)?.loss);
        }
        bests.push(best);
    }
    Ok(mean_std(&bests))
}

/// Token totals and price of a run's LLM calls, read from trial annotations.
pub fn run_cost(trials: &[Trial], model: Option<&str>, prices: &CostLedger) -> CostSummary {
    let tokens_in: u64 = trials.iter().filter_map(|t| t.annotations.tokens_in).sum();
    let tokens_out: u64 = trials.iter().filter_map(|t| t.annotations.tokens_out).sum();
    let calls: u64 = trials
        .iter()
        .filter(|t| t.annotations.tokens_in.is_some())
        .map(|t| t.annotations.extra.get("attempts").and_then(Value::as_u64).unwrap_or(1))
        .sum();
    let usd = model
        .and_then(|m| prices.price(m))
        .map_or(0.0, |p| tokens_in as f64 / 1000.0 * p.input + tokens_out as f64 / 1000.0 * p.output);
    CostSummary { tokens_in, tokens_out, calls, usd }
}

pub fn read_records(path: &Path) -> Result<Vec<Record>, BenchError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| BenchError::Spec(format!("{}:{}: {e}", path.display(), i + 1)))?);
    }
    Ok(out)
}

pub fn write_records(path: &Path, records: &[Record]) -> Result<(), BenchError> {
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| BenchError::Io(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Aggregates records: a method's error on a task is the mean over its
/// successful seeds of the best loss found. Task and method order follow
/// first appearance.
pub fn report_from_records(records: &[Record]) -> MetricsReport {
    let mut tasks: Vec<String> = Vec::new();
    let mut methods: Vec<String> = Vec::new();
    let mut random = BTreeMap::new();
    let mut bests: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    let note_task = |t: &str, tasks: &mut Vec<String>| {
        if !tasks.iter().any(|x| x == t) {
            tasks.push(t.to_string());
        }
    };
    for r in records {
        match r {
            Record::Baseline(b) => {
                note_task(&b.task, &mut tasks);
                if let Some(e) = b.estimate {
                    random.insert(b.task.clone(), e);
                }
            }
            Record::Run(run) => {
                note_task(&run.task, &mut tasks);
                if !methods.contains(&run.method) {
                    methods.push(run.method.clone());
                }
                if run.status == RunStatus::Ok {
                    if let Some(b) = run.best_loss() {
                        bests.entry((run.task.clone(), run.method.clone())).or_default().push(b);
                    }
                }
            }
        }
    }
    let mut errors: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for ((t, m), v) in bests {
        errors.entry(t).or_default().insert(m, v.iter().sum::<f64>() / v.len() as f64);
    }
    MetricsReport::compute(&tasks, &methods, &random, &errors)
}

pub struct ExperimentOutcome {
    pub records: Vec<Record>,
    pub report: MetricsReport,
}

/// Writes `records.jsonl`, `report.csv` and `report.md` into `dir`.
pub fn write_outputs(dir: &Path, outcome: &ExperimentOutcome) -> Result<(), BenchError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_records(&dir.join("records.jsonl"), &outcome.records)?;
    for (name, text) in [("report.csv", outcome.report.to_csv()), ("report.md", outcome.report.to_markdown())] {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| io_err(&p, e))?;
    }
    Ok(())
}

fn baseline(spec: &ExperimentSpec, task: &TaskSpec) -> Result<BaselineRecord, BenchError> {
    let mut built = task.build(&spec.base_dir)?;
    let mut objective = std::mem::replace(&mut built.objective, Box::new(ToyObjective::new(ToyFunction::Ackley)));
    let mut rec = BaselineRecord {
        task: built.id.clone(),
        pool_size: spec.pool_size,
        pool_seed: spec.pool_seed,
        k: spec.budget,
        bootstrap_b: spec.bootstrap_b,
        estimate: None,
        pool_min: None,
        error: None,
    };
    match build_random_pool(&built, objective.as_mut(), spec.pool_size, spec.pool_seed) {
        Ok(pool) => {
            rec.estimate = Some(bootstrap_best(&pool.losses, spec.budget, spec.bootstrap_b, spec.pool_seed.wrapping_add(1)));
            rec.pool_min = pool.losses.iter().copied().reduce(f64::min);
        }
        Err(e) => rec.error = Some(e.to_string()),
    }
    Ok(rec)
}

fn cell(spec: &ExperimentSpec, ctx: &BuildContext<'_>, task: &TaskSpec, proposer: &ProposerSpec, seed: u64) -> Result<RunRecord, BenchError> {
    let built = task.build(&spec.base_dir)?;
    let method = proposer.method_id();
    let mut record = RunRecord {
        task: built.id.clone(),
        method,
        seed,
        budget: spec.budget,
        status: RunStatus::Ok,
        error_kind: None,
        error: None,
        cost: CostSummary::default(),
        trials: Vec::new(),
    };
    let mut inner = match ctx.build(proposer, &built.id, seed) {
        Ok(p) => p,
        Err(e) => {
            record.status = RunStatus::Failed;
            record.error_kind = Some("ConfigError".into());
            record.error = Some(e);
            return Ok(record);
        }
    };
    let mut objective = built.objective;
    if let Some(grid) = built.grid {
        inner = Box::new(GridSnap::new(inner, objective.space(), grid));
    }
    let mut trials = Vec::new();
    let result = run_trials(objective.as_mut(), inner.as_mut(), spec.budget, |t| {
        trials.push(t.clone());
        Ok(())
    });
    if let Err(f) = result {
        record.status = RunStatus::Failed;
        record.error_kind = Some(f.error.kind().to_string());
        record.error = Some(f.error.to_string());
    }
    record.cost = run_cost(&trials, proposer.llm_model(), &CostLedger::default());
    record.trials = trials;
    Ok(record)
}

/// Runs the whole grid. Random baselines come first (one per task), then
/// one run per (task, proposer, seed) in that nesting order. Failed runs
/// are recorded, not fatal.
pub fn run_experiment(spec: &ExperimentSpec, client: Option<Arc<dyn ChatClient>>) -> Result<ExperimentOutcome, BenchError> {
    spec.check()?;
    if client.is_none() && spec.proposers.iter().any(ProposerSpec::needs_client) {
        return Err(BenchError::Spec("LLM proposers need a configured chat client".into()));
    }
    let mut sources = Vec::new();
    for p in &spec.proposers {
        p.replay_sources(&mut sources);
    }
    let mut replay = HashMap::new();
    for src in sources {
        let path = spec.base_dir.join(src);
        let runs = read_records(&path)?
            .into_iter()
            .filter_map(|r| match r {
                Record::Run(run) => Some(run),
                Record::Baseline(_) => None,
            })
            .collect();
        replay.insert(src.to_path_buf(), runs);
    }
    let ctx = BuildContext { client, replay: &replay };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs)
        .build()
        .map_err(|e| BenchError::Spec(e.to_string()))?;
    let cells: Vec<(&TaskSpec, &ProposerSpec, u64)> = spec
        .tasks
        .iter()
        .flat_map(|t| spec.proposers.iter().flat_map(move |p| spec.seeds.iter().map(move |&s| (t, p, s))))
        .collect();
    let (baselines, runs) = pool.install(|| {
        let baselines: Result<Vec<_>, _> = spec.tasks.par_iter().map(|t| baseline(spec, t)).collect();
        let runs: Result<Vec<_>, _> = cells.par_iter().map(|&(t, p, s)| cell(spec, &ctx, t, p, s)).collect();
        (baselines, runs)
    });
    let records: Vec<Record> = baselines?
        .into_iter()
        .map(Record::Baseline)
        .chain(runs?.into_iter().map(Record::Run))
        .collect();
    let report = report_from_records(&records);
    let outcome = ExperimentOutcome { records, report };
    if let Some(dir) = &spec.output_dir {
        write_outputs(dir, &outcome)?;
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_json_roundtrip_and_defaults() {
        let text = r#"{
            "tasks": [{"kind": "toy", "function": "branin", "shifted": true}],
            "proposers": [{"type": "random"}, {"type": "bo"}, {"type": "llm", "settings": {"model": "gpt-4-0613", "reasoning": "cot"}},
                          {"type": "hybrid", "first": {"type": "random"}, "second": {"type": "bo"}, "switch_step": 3}],
            "seeds": [1, 2]
        }"#;
        let spec: ExperimentSpec = serde_json::from_str(text).unwrap();
        assert_eq!((spec.budget, spec.pool_size, spec.bootstrap_b, spec.jobs), (10, 500, 1000, 1));
        let ids: Vec<String> = spec.proposers.iter().map(ProposerSpec::method_id).collect();
        assert_eq!(ids, vec!["random", "bo_gp", "llm:gpt-4-0613:cot", "hybrid(random->bo_gp@3)"]);
        spec.check().unwrap();
        let bad: Result<ExperimentSpec, _> = serde_json::from_str(r#"{"tasks": [], "proposers": [], "bogus": 1}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn empty_lists_rejected() {
        let spec = ExperimentSpec::new(vec![], vec![ProposerSpec::new(ProposerKind::Random)]);
        assert!(matches!(spec.check(), Err(BenchError::Spec(_))));
        let dup = ExperimentSpec::new(
            ExperimentSpec::toy_tasks(),
            vec![ProposerSpec::new(ProposerKind::Random), ProposerSpec::new(ProposerKind::Random)],
        );
        assert!(dup.check().is_err());
    }

    #[test]
    fn toy_task_labels() {
        let ids: Vec<String> =
            ExperimentSpec::toy_tasks().iter().map(|t| t.build(Path::new(".")).unwrap().id).collect();
        assert_eq!(
            ids,
            vec![
                "ack", "shifted_ack", "bran", "shifted_bran", "rosen", "shifted_rosen", "himmel", "shifted_himmel",
                "quad2d", "quad2d_illcond"
            ]
        );
    }

    #[test]
    fn small_grid_is_deterministic() {
        let mut spec = ExperimentSpec::new(
            vec![TaskSpec::toy(ToyFunction::Branin, true)],
            vec![ProposerSpec::new(ProposerKind::Random)],
        );
        spec.seeds = vec![1, 2, 3];
        spec.pool_size = 50;
        spec.bootstrap_b = 100;
        let a = run_experiment(&spec, None).unwrap();
        spec.jobs = 3;
        let b = run_experiment(&spec, None).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.records.len(), 4);
        assert_eq!(a.report.to_csv(), b.report.to_csv());
        assert_eq!(report_from_records(&a.records).to_markdown(), a.report.to_markdown());
    }

    #[test]
    fn llm_without_client_is_a_config_error() {
        let spec = ExperimentSpec::new(
            vec![TaskSpec::toy(ToyFunction::Branin, false)],
            vec![ProposerSpec::new(ProposerKind::Llm { settings: LlmSettings::default() })],
        );
        assert_eq!(run_experiment(&spec, None).err().unwrap().kind(), "ConfigError");
    }
}
