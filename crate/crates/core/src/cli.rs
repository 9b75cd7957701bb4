//! The `evotree` command line.
//!
//! Exit codes: 0 success, 1 domain error (bad data, failed run), 2 usage
//! error (bad flags, missing script or API key).
//!
//! Settings resolve as flag, then environment variable, then `--config`
//! TOML file, then built-in default.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::evaluation::{
    self, compare_strategies, evaluate, load_dataset, script, synth, CompareSpec, DatasetManifest, JudgeMode,
};
use crate::event_tree::{outcome_string, EventTree};
use crate::exec::with_jobs;
use crate::gateway::{
    CachedEmbedder, ChatBackend, Embedder, GatewayError, HashEmbedder, RemoteChat, RemoteConfig, RemoteEmbedder,
    ScriptEntry, ScriptedBackend,
};
use crate::memory::{MemoryBank, StoreKind};
use crate::pipeline::{infer_chain, train, Backends, IncidentCase, RunConfig, RunStatus};
use crate::types::{ReasonMode, StrategyKind, Task};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "evotree", version, about = "Event-tree analysis and self-evolving decision-support agents")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Scripted,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    Hash,
    Remote,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML file with defaults for any of these options.
    #[arg(long, global = true, env = "EVOTREE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Directory holding the six memory stores.
    #[arg(long, global = true, env = "EVOTREE_STATE_DIR")]
    pub state_dir: Option<PathBuf>,
    #[arg(long, global = true, env = "EVOTREE_BACKEND")]
    pub backend: Option<BackendKind>,
    #[arg(long, global = true, env = "EVOTREE_EMBEDDER")]
    pub embedder: Option<EmbedderKind>,
    /// Replay file for the scripted backend; repeat for several columns in `compare`.
    #[arg(long, global = true, env = "EVOTREE_SCRIPT", value_delimiter = ',')]
    pub script: Vec<PathBuf>,
    #[arg(long, global = true)]
    pub strategy: Option<StrategyKind>,
    /// Show reasons of injected cases: with|without.
    #[arg(long, global = true)]
    pub reason_prompt: Option<ReasonMode>,
    /// Ask the agents for reasons: with|without.
    #[arg(long, global = true)]
    pub reason_gen: Option<ReasonMode>,
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    #[arg(long, global = true)]
    pub max_retries: Option<u32>,
    /// Worker threads for evaluation.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Where to write run artifacts (default runs/<timestamp>).
    #[arg(long, global = true)]
    pub run_dir: Option<PathBuf>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Grow the memory stores over the training split.
    Train {
        /// JSONL manifest; the built-in synthetic corpus when omitted.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        tasks: Vec<Task>,
        /// Start from empty stores instead of the ones in the state dir.
        #[arg(long)]
        fresh: bool,
    },
    /// Run the three-task chain on new incidents.
    Infer {
        /// JSON object or JSONL file of incidents.
        #[arg(long)]
        case: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Score the configured strategy on the test split.
    Eval {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        tasks: Vec<Task>,
        #[arg(long, default_value = "gold")]
        judge: JudgeMode,
    },
    /// Strategy comparison tables with the ablation block.
    Compare {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        tasks: Vec<Task>,
        #[arg(long, default_value = "gold")]
        judge: JudgeMode,
        #[arg(long)]
        no_ablation: bool,
    },
    #[command(subcommand)]
    Tree(TreeCommand),
    #[command(subcommand)]
    Memory(MemoryCommand),
    #[command(subcommand)]
    Dataset(DatasetCommand),
}

#[derive(Debug, Subcommand)]
pub enum TreeCommand {
    /// Sequence and consequence frequencies.
    Compute {
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Force the listed headers to succeed and recompute.
    Mitigate {
        file: PathBuf,
        /// Header ids, comma separated.
        #[arg(long, alias = "headers", value_delimiter = ',', required = true)]
        force: Vec<usize>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum MemoryCommand {
    /// Entry counts per task and store.
    Stats,
    /// Print one store as JSONL (embeddings omitted).
    Dump {
        #[arg(long)]
        task: Task,
        #[arg(long, alias = "store", default_value = "records")]
        kind: StoreKind,
    },
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Check schema, splits and the acronym histogram.
    Validate {
        file: PathBuf,
        /// Skip the split and histogram checks.
        #[arg(long)]
        schema_only: bool,
    },
    /// Write the seeded synthetic corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a scripted-backend replay for a manifest.
    Script {
        file: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Evaluation outcome table: gpt-4o, gpt-3.5 or none.
        #[arg(long, default_value = "gpt-4o")]
        preset: String,
        /// Rejections before acceptance for successive training samples (cycled).
        #[arg(long, value_delimiter = ',', default_value = "0")]
        rejections: Vec<u32>,
        #[arg(long, value_delimiter = ',')]
        tasks: Vec<Task>,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub state_dir: Option<PathBuf>,
    pub backend: Option<BackendKind>,
    pub embedder: Option<EmbedderKind>,
    pub script: Vec<PathBuf>,
    pub strategy: Option<String>,
    pub reason_prompt: Option<String>,
    pub reason_gen: Option<String>,
    pub k: Option<usize>,
    pub tau: Option<f64>,
    pub max_retries: Option<u32>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub model_id: Option<String>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub remote: Option<RemoteConfig>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Domain(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Domain(e)
    }
}

macro_rules! domain_from {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Domain(e.into())
            }
        })*
    };
}

domain_from!(
    std::io::Error,
    serde_json::Error,
    evaluation::DatasetError,
    evaluation::EvalError,
    crate::pipeline::PipelineError
);

type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Resolved settings for one invocation.
struct Settings {
    state_dir: PathBuf,
    backend: BackendKind,
    embedder: EmbedderKind,
    scripts: Vec<PathBuf>,
    jobs: usize,
    run_dir: Option<PathBuf>,
    run: RunConfig,
    remote: RemoteConfig,
}

fn parse_field<T: std::str::FromStr<Err = String>>(name: &str, v: &Option<String>) -> CliResult<Option<T>> {
    v.as_deref()
        .map(|s| s.parse::<T>().map_err(|e| usage(format!("config {name}: {e}"))))
        .transpose()
}

fn resolve(g: &GlobalArgs) -> CliResult<Settings> {
    let file = match &g.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            toml::from_str::<FileConfig>(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };
    let remote = file.remote.clone().unwrap_or_default();
    let mut run = RunConfig::default();
    if let Some(s) = g.strategy.or(parse_field("strategy", &file.strategy)?) {
        run.strategy = s;
    }
    if let Some(m) = g.reason_prompt.or(parse_field("reason_prompt", &file.reason_prompt)?) {
        run.reason_prompt = [m; 3];
    }
    if let Some(m) = g.reason_gen.or(parse_field("reason_gen", &file.reason_gen)?) {
        run.reason_gen = [m; 3];
    }
    run.k = g.k.or(file.k).unwrap_or(run.k);
    run.tau = g.tau.or(file.tau).unwrap_or(run.tau);
    run.max_retries = g.max_retries.or(file.max_retries).unwrap_or(run.max_retries);
    run.temperature = file.temperature.unwrap_or(run.temperature);
    run.max_tokens = file.max_tokens.unwrap_or(run.max_tokens);
    let backend = g.backend.or(file.backend).unwrap_or(BackendKind::Scripted);
    run.model_id = match (&file.model_id, backend) {
        (Some(m), _) => m.clone(),
        (None, BackendKind::Remote) => remote.chat_model.clone(),
        (None, BackendKind::Scripted) => run.model_id,
    };
    run.shuffle_seed = g.seed.or(file.seed);
    run.check().map_err(|e| usage(e.to_string()))?;
    Ok(Settings {
        state_dir: g.state_dir.clone().or(file.state_dir).unwrap_or_else(|| PathBuf::from("state")),
        backend,
        embedder: g.embedder.or(file.embedder).unwrap_or(EmbedderKind::Hash),
        scripts: if g.script.is_empty() { file.script } else { g.script.clone() },
        jobs: g.jobs.or(file.jobs).unwrap_or(1).max(1),
        run_dir: g.run_dir.clone(),
        run,
        remote,
    })
}

fn gateway_usage(e: GatewayError) -> CliError {
    match e {
        GatewayError::MissingApiKey(_) => usage(e.to_string()),
        other => CliError::Domain(other.into()),
    }
}

impl Settings {
    fn embedder(&self) -> CliResult<Arc<dyn Embedder>> {
        Ok(match self.embedder {
            EmbedderKind::Hash => Arc::new(HashEmbedder::default()),
            EmbedderKind::Remote => Arc::new(CachedEmbedder::new(
                RemoteEmbedder::from_env(self.remote.clone()).map_err(gateway_usage)?,
            )),
        })
    }

    /// One chat backend per column group.
    fn chats(&self) -> CliResult<Vec<Box<dyn ChatBackend>>> {
        match self.backend {
            BackendKind::Scripted => {
                if self.scripts.is_empty() {
                    return Err(usage("the scripted backend needs --script <file>"));
                }
                self.scripts
                    .iter()
                    .map(|p| {
                        let id = p.file_stem().and_then(|s| s.to_str()).unwrap_or("scripted").to_string();
                        let b = ScriptedBackend::from_file(p)
                            .with_context(|| format!("loading script {}", p.display()))?
                            .with_id(id);
                        Ok(Box::new(b) as Box<dyn ChatBackend>)
                    })
                    .collect()
            }
            BackendKind::Remote => Ok(vec![Box::new(
                RemoteChat::from_env(self.remote.clone()).map_err(gateway_usage)?,
            )]),
        }
    }

    fn backends(&self) -> CliResult<Backends> {
        let mut chats = self.chats()?;
        if chats.len() > 1 {
            return Err(usage("this command takes a single --script"));
        }
        Ok(Backends::new(chats.remove(0), self.embedder()?))
    }

    fn run_dir(&self) -> anyhow::Result<PathBuf> {
        let dir = match &self.run_dir {
            Some(d) => d.clone(),
            None => {
                let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S").to_string();
                let mut dir = PathBuf::from("runs").join(&stamp);
                let mut n = 2;
                while dir.exists() {
                    dir = PathBuf::from("runs").join(format!("{stamp}-{n}"));
                    n += 1;
                }
                dir
            }
        };
        std::fs::create_dir_all(&dir).with_context(|| format!("creating run dir {}", dir.display()))?;
        Ok(dir)
    }

    fn load_bank(&self) -> anyhow::Result<MemoryBank> {
        MemoryBank::load(&self.state_dir).with_context(|| format!("loading stores from {}", self.state_dir.display()))
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> anyhow::Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn dataset_or_default(path: &Option<PathBuf>) -> anyhow::Result<DatasetManifest> {
    match path {
        Some(p) => load_dataset(p).with_context(|| format!("loading dataset {}", p.display())),
        None => Ok(synth::synth_corpus(synth::DEFAULT_SEED)),
    }
}

fn tasks_or_all(tasks: &[Task]) -> Vec<Task> {
    if tasks.is_empty() {
        Task::ALL.to_vec()
    } else {
        let mut t = tasks.to_vec();
        t.sort();
        t.dedup();
        t
    }
}

/// Parse `argv` (program name first) and run it.
pub fn dispatch<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Domain(e))
            if e.chain()
                .any(|c| c.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)) =>
        {
            EXIT_OK
        }
        Err(CliError::Domain(e)) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_DOMAIN
        }
    }
}

fn run(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    match &cli.command {
        Command::Tree(cmd) => tree_command(cmd, out).map_err(Into::into),
        Command::Dataset(cmd) => dataset_command(cmd, &cli.global, out),
        Command::Memory(cmd) => memory_command(cmd, &resolve(&cli.global)?, out).map_err(Into::into),
        Command::Train { dataset, tasks, fresh } => train_command(&resolve(&cli.global)?, dataset, tasks, *fresh, out),
        Command::Infer { case, json } => infer_command(&resolve(&cli.global)?, case, *json, out),
        Command::Eval { dataset, tasks, judge } => eval_command(&resolve(&cli.global)?, dataset, tasks, *judge, out),
        Command::Compare {
            dataset,
            tasks,
            judge,
            no_ablation,
        } => compare_command(&resolve(&cli.global)?, dataset, tasks, *judge, *no_ablation, out),
    }
}

fn print_tree(tree: &EventTree, json: bool, out: &mut dyn Write) -> anyhow::Result<()> {
    let report = tree.validate();
    if !report.is_valid() {
        let lines: Vec<String> = report.violations.iter().map(ToString::to_string).collect();
        bail!("invalid event tree:\n  {}", lines.join("\n  "));
    }
    let sequences = tree.enumerate_sequences()?;
    let consequences = tree.consequence_frequencies()?;
    let total: f64 = sequences.iter().map(|s| s.frequency).sum();
    let ie = &tree.initiating_event;
    if json {
        let value = serde_json::json!({
            "initiating_event": ie.name,
            "frequency": ie.frequency,
            "sequences": sequences.iter().map(|s| serde_json::json!({
                "outcomes": outcome_string(&s.outcomes),
                "consequence": s.consequence,
                "frequency": s.frequency,
            })).collect::<Vec<_>>(),
            "consequences": consequences.iter().map(|(l, f)| serde_json::json!({"label": l, "frequency": f})).collect::<Vec<_>>(),
            "total": total,
        });
        writeln!(out, "{}", serde_json::to_string_pretty(&value)?)?;
        return Ok(());
    }
    writeln!(out, "{} ({}), frequency {:.6e}", ie.name, ie.acronym, ie.frequency)?;
    let headers: Vec<String> = tree.headers.iter().map(|h| format!("{}={}", h.id, h.name)).collect();
    writeln!(out, "headers: {}", headers.join(", "))?;
    writeln!(out)?;
    writeln!(out, "{:>3}  {:<8}  {:>13}  consequence", "#", "outcomes", "frequency")?;
    for (i, s) in sequences.iter().enumerate() {
        writeln!(
            out,
            "{:>3}  {:<8}  {:>13.6e}  {}",
            i + 1,
            outcome_string(&s.outcomes),
            s.frequency,
            s.consequence
        )?;
    }
    writeln!(out)?;
    for (label, f) in &consequences {
        writeln!(out, "{label}: {f:.6e}")?;
    }
    writeln!(out, "sum of sequence frequencies: {total:.6e}")?;
    Ok(())
}

fn tree_command(cmd: &TreeCommand, out: &mut dyn Write) -> anyhow::Result<()> {
    match cmd {
        TreeCommand::Compute { file, json } => {
            let tree = EventTree::from_json_file(file).with_context(|| format!("loading {}", file.display()))?;
            print_tree(&tree, *json, out)
        }
        TreeCommand::Mitigate { file, force: headers, json } => {
            let tree = EventTree::from_json_file(file).with_context(|| format!("loading {}", file.display()))?;
            let forced: BTreeSet<usize> = headers.iter().copied().collect();
            let mitigated = tree.apply_mitigation(&forced)?;
            print_tree(&mitigated, *json, out)
        }
    }
}

fn memory_command(cmd: &MemoryCommand, s: &Settings, out: &mut dyn Write) -> anyhow::Result<()> {
    let bank = s.load_bank()?;
    match cmd {
        MemoryCommand::Stats => {
            writeln!(out, "task   records  experience")?;
            for task in Task::ALL {
                let (r, e) = bank.snapshot_counts(task);
                writeln!(out, "{task}  {r:>7}  {e:>10}")?;
            }
            let (r, e) = bank.total_counts();
            writeln!(out, "total  {r:>7}  {e:>10}")?;
        }
        MemoryCommand::Dump { task, kind: store } => {
            for entry in bank.store(*task, *store).entries() {
                let mut v = serde_json::to_value(entry)?;
                if let Some(obj) = v.as_object_mut() {
                    obj.remove("embedding");
                }
                writeln!(out, "{v}")?;
            }
        }
    }
    Ok(())
}

fn dataset_command(cmd: &DatasetCommand, g: &GlobalArgs, out: &mut dyn Write) -> CliResult<()> {
    match cmd {
        DatasetCommand::Validate { file, schema_only } => {
            let m = load_dataset(file).with_context(|| format!("validating {}", file.display()))?;
            writeln!(out, "{} cases", m.cases.len())?;
            writeln!(out, "task1 split (train/test): {}", m.split_counts(Task::Task1))?;
            writeln!(out, "task2/task3 split (train/test): {}", m.split_counts(Task::Task2))
                ?;
            for (acronym, n) in m.acronym_histogram() {
                writeln!(out, "  {acronym}: {n}")?;
            }
            if !schema_only {
                m.check_distribution()?;
            }
            Ok(())
        }
        DatasetCommand::Synth { out: path } => {
            let seed = g.seed.unwrap_or(synth::DEFAULT_SEED);
            let m = synth::write_corpus(path, seed)?;
            writeln!(out, "wrote {} synthetic cases to {} (seed {seed})", m.cases.len(), path.display())
                ?;
            Ok(())
        }
        DatasetCommand::Script {
            file,
            out: path,
            preset,
            rejections,
            tasks,
        } => {
            let m = load_dataset(file).with_context(|| format!("loading {}", file.display()))?;
            let plans = match preset.as_str() {
                "none" => Vec::new(),
                p => script::reference_plans(p).ok_or_else(|| {
                    usage(format!(
                        "unknown preset {p:?} (expected {} or none)",
                        script::REFERENCE_BACKENDS.join(", ")
                    ))
                })?,
            };
            if rejections.is_empty() {
                return Err(usage("--rejections needs at least one value"));
            }
            let max_retries = g.max_retries.unwrap_or(crate::pipeline::DEFAULT_MAX_RETRIES);
            let mut entries: Vec<ScriptEntry> =
                script::training_entries(&m, &tasks_or_all(tasks), |i| rejections[i % rejections.len()], max_retries);
            entries.extend(script::eval_entries(&m, &plans));
            std::fs::write(path, ScriptedBackend::to_jsonl(&entries))
                .with_context(|| format!("writing {}", path.display()))?;
            writeln!(out, "wrote {} script entries to {}", entries.len(), path.display())
                ?;
            Ok(())
        }
    }
}

fn train_command(
    s: &Settings,
    dataset: &Option<PathBuf>,
    tasks: &[Task],
    fresh: bool,
    out: &mut dyn Write,
) -> CliResult<()> {
    let manifest = dataset_or_default(dataset)?;
    let backends = s.backends()?;
    let mut bank = if fresh { MemoryBank::new() } else { s.load_bank()? };
    let tasks = tasks_or_all(tasks);
    let summary = train(&manifest.cases, &tasks, &s.run, &mut bank, &backends)?;
    std::fs::create_dir_all(&s.state_dir)
        .with_context(|| format!("creating state dir {}", s.state_dir.display()))?;
    bank.save(&s.state_dir).context("saving stores")?;

    let dir = s.run_dir()?;
    write_file(&dir, "transcript.jsonl", &backends.transcript.to_jsonl())?;
    evaluation::export_accumulation(&summary.log, dir.join("accumulation.csv"))?;
    let mut results = String::new();
    for r in &summary.runs {
        results.push_str(&serde_json::to_string(r)?);
        results.push('\n');
    }
    write_file(&dir, "results.jsonl", &results)?;

    let w = |out: &mut dyn Write| -> std::io::Result<()> {
        for &task in &tasks {
            let runs: Vec<_> = summary.runs.iter().filter(|r| r.task == task).collect();
            let accepted = runs.iter().filter(|r| r.final_status == RunStatus::Accepted).count();
            let failed = summary.failures.iter().filter(|f| f.task == task).count();
            let (rc, ec) = bank.snapshot_counts(task);
            writeln!(
                out,
                "{task}: {} samples, {accepted} accepted, {} exhausted, {failed} failed; records {rc}, experience {ec}",
                runs.len() + failed,
                runs.len() - accepted,
            )?;
        }
        writeln!(out, "stores saved to {}", s.state_dir.display())?;
        writeln!(out, "run artifacts in {}", dir.display())
    };
    w(out)?;
    for f in &summary.failures {
        log::warn!("{} {} failed: {}", f.case_id, f.task, f.error);
    }
    Ok(())
}

fn read_cases(path: &Path) -> anyhow::Result<Vec<IncidentCase>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(case) = serde_json::from_str::<IncidentCase>(&text) {
        return Ok(vec![case]);
    }
    let mut cases = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        cases.push(serde_json::from_str(line).with_context(|| format!("{} line {}", path.display(), i + 1))?);
    }
    if cases.is_empty() {
        return Err(anyhow!("{} holds no incidents", path.display()));
    }
    Ok(cases)
}

fn infer_command(s: &Settings, case_path: &Path, json: bool, out: &mut dyn Write) -> CliResult<()> {
    let cases = read_cases(case_path)?;
    let backends = s.backends()?;
    let bank = s.load_bank()?;
    let mut lines = String::new();
    for case in &cases {
        let chain = infer_chain(case, &s.run, &bank, &backends)?;
        let line = serde_json::to_string(&chain)?;
        if json {
            writeln!(out, "{line}")?;
        } else {
            writeln!(out, "{}", chain.render_report(case))?;
        }
        lines.push_str(&line);
        lines.push('\n');
    }
    let dir = s.run_dir()?;
    write_file(&dir, "transcript.jsonl", &backends.transcript.to_jsonl())?;
    write_file(&dir, "inference.jsonl", &lines)?;
    Ok(())
}

fn write_report(dir: &Path, report: &evaluation::EvalReport, transcript: &str) -> anyhow::Result<()> {
    write_file(dir, "report.md", &report.to_markdown())?;
    write_file(dir, "report.jsonl", &report.to_jsonl())?;
    write_file(dir, "results.jsonl", &report.results_jsonl())?;
    write_file(dir, "transcript.jsonl", transcript)
}

fn eval_command(
    s: &Settings,
    dataset: &Option<PathBuf>,
    tasks: &[Task],
    judge: JudgeMode,
    out: &mut dyn Write,
) -> CliResult<()> {
    let manifest = dataset_or_default(dataset)?;
    let backends = s.backends()?;
    let bank = s.load_bank()?;
    let tasks = tasks_or_all(tasks);
    let report = with_jobs(s.jobs, |mode| evaluate(&manifest, &s.run, &tasks, &bank, &backends, judge, mode));
    let dir = s.run_dir()?;
    write_report(&dir, &report, &backends.transcript.to_jsonl())?;
    write!(out, "{}", report.to_markdown())?;
    Ok(())
}

fn compare_command(
    s: &Settings,
    dataset: &Option<PathBuf>,
    tasks: &[Task],
    judge: JudgeMode,
    no_ablation: bool,
    out: &mut dyn Write,
) -> CliResult<()> {
    let manifest = dataset_or_default(dataset)?;
    let embedder = s.embedder()?;
    let slots: Vec<Backends> = s
        .chats()?
        .into_iter()
        .map(|chat| Backends::new(chat, Arc::clone(&embedder)))
        .collect();
    let bank = s.load_bank()?;
    let spec = CompareSpec {
        tasks: tasks_or_all(tasks),
        ablation: !no_ablation,
        judge,
        ..CompareSpec::default()
    };
    let refs: Vec<&Backends> = slots.iter().collect();
    let report = with_jobs(s.jobs, |mode| compare_strategies(&manifest, &s.run, &spec, &bank, &refs, mode));
    let transcript: String = slots.iter().map(|b| b.transcript.to_jsonl()).collect();
    let dir = s.run_dir()?;
    write_report(&dir, &report, &transcript)?;
    write!(out, "{}", report.to_markdown())?;
    Ok(())
}
