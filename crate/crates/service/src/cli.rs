//! Command-line front end. Exit codes: 0 on success, 1 when the command ran
//! but did not succeed, 2 for bad input (missing files, bad flags or
//! arguments) detected before any session is created.

use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use phenoflow::config::{Config, ProviderKind};
use phenoflow::eval::{run_suite, write_report, ProviderSource, Suite};
use phenoflow::llm::{ChatProvider, ReplayProvider};
use phenoflow::manager::{
    Decision, EventKind, EventObserver, Manager, ManagerError, SessionConfig, SessionEvent,
    SessionStatus,
};
use phenoflow::pipeline::{Binding, PipelineError};
use phenoflow::registry::{ModelZooEntry, RegistryError};
use phenoflow::toolkit::{default_registry, provider_from_config, Services};
use phenoflow::vision::stub::{serve_stdio, StubAdapter, StubMode};
use serde_json::{json, Map, Value};

use crate::server::{self, AppState};

#[derive(Debug, Parser)]
#[command(name = "phenoflow", version, about = "Conversational plant-phenotyping agent")]
pub struct Cli {
    /// Directory for sessions, zoos and indexes (overrides the config file).
    #[arg(long, global = true, value_name = "DIR")]
    pub store_root: Option<PathBuf>,
    /// Key-value config file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Interactive session on standard input.
    Chat(SessionArgs),
    /// Runs one prompt file to completion.
    Run(RunArgs),
    /// Re-runs a saved pipeline in a new session.
    Replay(ReplayArgs),
    /// Lists or extends the vision model zoo.
    Zoo(ZooArgs),
    /// Lists, shows, saves or removes pipelines.
    Pipelines(PipelinesArgs),
    /// Runs benchmark suites and writes JSON and CSV reports.
    Eval(EvalArgs),
    /// Starts the HTTP/WebSocket service.
    Serve(ServeArgs),
    /// Speaks the adapter protocol on stdin/stdout with the stub adapter.
    #[command(hide = true)]
    StubAdapter,
}

#[derive(Debug, Clone, Args)]
pub struct SessionArgs {
    /// Serve assistant turns from this JSON file instead of the configured provider.
    #[arg(long, value_name = "FILE")]
    pub replay: Option<PathBuf>,
    /// Session working directory (default: inside the store).
    #[arg(long, value_name = "DIR")]
    pub workdir: Option<PathBuf>,
    /// Require approval for gated tools regardless of the config.
    #[arg(long)]
    pub gated: bool,
    /// Print events as JSON lines.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// File holding the user prompt.
    pub prompt: PathBuf,
    #[command(flatten)]
    pub session: SessionArgs,
    /// Image attachments, relative to the working directory.
    #[arg(long = "attach", value_name = "PATH")]
    pub attachments: Vec<String>,
    /// Approve every gated call instead of failing on the first one.
    #[arg(long)]
    pub yes: bool,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Pipeline name.
    pub pipeline: String,
    /// Parameter value; VALUE is parsed as JSON, else taken as a string.
    #[arg(long = "arg", value_name = "NAME=VALUE")]
    pub args: Vec<String>,
    #[arg(long, value_name = "DIR")]
    pub workdir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ZooArgs {
    /// Registers the entries of a JSON array file before listing.
    #[arg(long, value_name = "FILE")]
    pub add: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct PipelinesArgs {
    #[command(subcommand)]
    pub action: Option<PipelineAction>,
}

#[derive(Debug, Subcommand)]
pub enum PipelineAction {
    List,
    Show {
        name: String,
    },
    /// Summarises the last finished run of a session into a pipeline.
    Save {
        #[arg(long)]
        session: String,
        #[arg(long)]
        name: String,
        #[arg(long, default_value = "")]
        description: String,
        /// Required parameter bound to a literal: NAME=VALUE.
        #[arg(long = "bind", value_name = "NAME=VALUE")]
        required: Vec<String>,
        /// Optional parameter defaulting to the literal: NAME=VALUE.
        #[arg(long = "optional", value_name = "NAME=VALUE")]
        optional: Vec<String>,
    },
    Remove {
        name: String,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProviderChoice {
    Replay,
    Live,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// tool-selection, model-selection, data-analysis or all.
    pub suite: String,
    #[arg(long, value_enum, default_value = "replay")]
    pub provider: ProviderChoice,
    /// Report directory.
    #[arg(long, value_name = "DIR", default_value = "eval-reports")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, value_name = "ADDR")]
    pub bind: Option<String>,
    /// Static bearer token required on every request.
    #[arg(long)]
    pub token: Option<String>,
}

/// Input rejected before any state changed; exits 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

/// Runs a parsed command and maps the outcome to an exit code.
pub fn main(cli: Cli) -> ExitCode {
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<Config> {
    let mut config = match &cli.config {
        Some(path) => {
            if !path.is_file() {
                return Err(usage(format!("config file {} does not exist", path.display())));
            }
            Config::load(path).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => Config::with_store_root("phenoflow-store"),
    };
    if let Some(root) = &cli.store_root {
        config.store_root = root.clone();
    }
    Ok(config)
}

fn open_manager(config: &Config) -> anyhow::Result<Manager> {
    let services = Services::from_config(config).context("opening the store")?;
    Ok(Manager::new(Arc::new(services), Arc::new(default_registry())))
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    if let Command::StubAdapter = cli.command {
        let stdin = std::io::stdin();
        serve_stdio(&StubAdapter::new(StubMode::Normal), stdin.lock(), std::io::stdout().lock())?;
        return Ok(());
    }
    let config = load_config(&cli)?;
    match cli.command {
        Command::Chat(args) => chat(&config, &args),
        Command::Run(args) => run(&config, &args),
        Command::Replay(args) => replay(&config, &args),
        Command::Zoo(args) => zoo(&config, &args),
        Command::Pipelines(args) => pipelines(&config, args.action.unwrap_or(PipelineAction::List)),
        Command::Eval(args) => eval(&config, &args),
        Command::Serve(args) => serve(config, &args),
        Command::StubAdapter => unreachable!("handled above"),
    }
}

/// Prints events as they are persisted.
struct Printer {
    json: bool,
}

impl EventObserver for Printer {
    fn on_event(&self, _session_id: &str, event: &SessionEvent) {
        let line = if self.json {
            serde_json::to_string(event).unwrap_or_default()
        } else {
            describe(event)
        };
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "{line}");
        let _ = out.flush();
    }
}

fn text_of(p: &Value) -> &str {
    p.get("text").and_then(Value::as_str).unwrap_or_default()
}

/// One human-readable line per event.
pub fn describe(e: &SessionEvent) -> String {
    let p = &e.payload;
    let tool = p.get("tool").and_then(Value::as_str).unwrap_or("?");
    let call = e.call_id().unwrap_or("?");
    let body = match e.kind {
        EventKind::SessionStarted => "session started".to_owned(),
        EventKind::UserMessage => format!("user: {}", text_of(p)),
        EventKind::Plan => format!("plan: {}", text_of(p)),
        EventKind::AssistantMessage => format!("assistant: {}", text_of(p)),
        EventKind::Summary => format!("summary: {}", text_of(p)),
        EventKind::ToolCallProposed => {
            let args = p.get("arguments").map(Value::to_string).unwrap_or_default();
            format!("propose {call} {tool}({args})")
        }
        EventKind::ApprovalRequested => format!("approval needed for {call} ({tool})"),
        EventKind::ApprovalResolved => {
            let d = p.get("decision").and_then(Value::as_str).unwrap_or("?");
            format!("{call} {d}")
        }
        EventKind::ToolCallStarted => format!("run {call} {tool}"),
        EventKind::ToolResult => {
            let status = p.get("status").and_then(Value::as_str).unwrap_or("?");
            match p.get("error").and_then(Value::as_str) {
                Some(err) => format!("result {call} {tool}: {status}: {err}"),
                None => format!("result {call} {tool}: {status}"),
            }
        }
        EventKind::ArtifactCreated => {
            format!("artifact {}", p.get("path").and_then(Value::as_str).unwrap_or("?"))
        }
        EventKind::Terminated => format!(
            "terminated ({})",
            p.get("reason").and_then(Value::as_str).unwrap_or("done")
        ),
        EventKind::Error => format!(
            "error: {}",
            p.get("message").and_then(Value::as_str).unwrap_or("?")
        ),
    };
    format!("[{}] {body}", e.seq)
}

fn provider_for(config: &Config, replay: Option<&Path>) -> anyhow::Result<Arc<dyn ChatProvider>> {
    match replay {
        Some(path) => {
            if !path.is_file() {
                return Err(usage(format!("replay file {} does not exist", path.display())));
            }
            Ok(Arc::new(ReplayProvider::from_file(path).map_err(|e| usage(e.to_string()))?))
        }
        None => provider_from_config(config).map_err(|e| usage(e.to_string())),
    }
}

fn session_config(config: &Config, args: &SessionArgs, provider: Arc<dyn ChatProvider>) -> SessionConfig {
    let mut policy = config.approval.clone();
    if args.gated {
        policy.mode = phenoflow::manager::ApprovalMode::Gated;
    }
    let mut sc = SessionConfig::new(provider)
        .with_approval(policy)
        .with_max_turns(config.max_turns);
    if let Some(w) = &args.workdir {
        sc = sc.with_workdir(w.clone());
    }
    sc
}

fn finish(status: SessionStatus, id: &str) -> anyhow::Result<()> {
    eprintln!("session {id}: {}", serde_json::to_value(status)?.as_str().unwrap_or("?"));
    match status {
        SessionStatus::Terminated => Ok(()),
        other => bail!("run ended as {other:?}"),
    }
}

fn run(config: &Config, args: &RunArgs) -> anyhow::Result<()> {
    let prompt = std::fs::read_to_string(&args.prompt)
        .map_err(|e| usage(format!("prompt file {}: {e}", args.prompt.display())))?;
    if prompt.trim().is_empty() {
        return Err(usage(format!("prompt file {} is empty", args.prompt.display())));
    }
    let provider = provider_for(config, args.session.replay.as_deref())?;
    let manager = open_manager(config)?;
    manager.add_observer(Arc::new(Printer { json: args.session.json }));
    let id = manager.start_session(session_config(config, &args.session, provider))?;
    let mut status = manager.submit_user_message(&id, &prompt, &args.attachments)?;
    while status == SessionStatus::AwaitingApproval {
        let call = manager.pending_approval(&id)?.ok_or_else(|| anyhow!("no pending call"))?;
        if !args.yes {
            bail!("call {call} needs approval; rerun with --yes or use `chat`");
        }
        status = manager.resolve_approval(&id, &call, Decision::Approve, None)?;
    }
    finish(status, &id)
}

/// Parses an approval answer: `y`, `n`, or `n <note>`.
pub fn parse_answer(line: &str) -> Option<(Decision, Option<String>)> {
    let line = line.trim();
    let (head, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
    let note = Some(rest.trim().to_owned()).filter(|n| !n.is_empty());
    match head.to_ascii_lowercase().as_str() {
        "y" | "yes" => Some((Decision::Approve, None)),
        "n" | "no" => Some((Decision::Reject, note)),
        _ => None,
    }
}

fn chat(config: &Config, args: &SessionArgs) -> anyhow::Result<()> {
    let provider = provider_for(config, args.replay.as_deref())?;
    let manager = open_manager(config)?;
    manager.add_observer(Arc::new(Printer { json: args.json }));
    let id = manager.start_session(session_config(config, args, provider))?;
    eprintln!("session {id}; type a message, /quit to leave");
    let stdin = std::io::stdin();
    let mut lines = stdin.lock().lines();
    let mut last = SessionStatus::Idle;
    loop {
        eprint!("> ");
        let Some(line) = lines.next().transpose()? else { break };
        let line = line.trim();
        if line == "/quit" {
            break;
        }
        if line.is_empty() {
            continue;
        }
        let mut status = match manager.submit_user_message(&id, line, &[]) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("error: {e}");
                continue;
            }
        };
        while status == SessionStatus::AwaitingApproval {
            let call = manager.pending_approval(&id)?.ok_or_else(|| anyhow!("no pending call"))?;
            eprint!("approve {call}? [y / n / n <note>] ");
            let Some(answer) = lines.next().transpose()? else {
                return finish(status, &id);
            };
            match parse_answer(&answer) {
                Some((decision, note)) => {
                    status = manager.resolve_approval(&id, &call, decision, note.as_deref())?;
                }
                None => eprintln!("answer y or n"),
            }
        }
        last = status;
    }
    if last == SessionStatus::Failed {
        return finish(last, &id);
    }
    eprintln!("session {id} closed");
    Ok(())
}

/// Splits `NAME=VALUE`; VALUE is JSON when it parses, else a string.
pub fn parse_assignment(s: &str) -> anyhow::Result<(String, Value)> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| usage(format!("expected NAME=VALUE, got `{s}`")))?;
    let value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_owned()));
    Ok((name.trim().to_owned(), value))
}

fn is_input_error(e: &ManagerError) -> bool {
    matches!(
        e,
        ManagerError::Pipeline(
            PipelineError::MissingParam(_)
                | PipelineError::BadArgument(_)
                | PipelineError::UnknownTool { .. }
                | PipelineError::LiteralNotFound { .. }
                | PipelineError::SessionNotFinished(_)
                | PipelineError::NoSteps(_)
                | PipelineError::Registry(RegistryError::UnknownPipeline(_) | RegistryError::DuplicatePipeline(_))
        )
    )
}

fn manager_error(e: ManagerError) -> anyhow::Error {
    if is_input_error(&e) {
        usage(e.to_string())
    } else {
        e.into()
    }
}

fn replay(config: &Config, args: &ReplayArgs) -> anyhow::Result<()> {
    let mut arguments = Map::new();
    for a in &args.args {
        let (k, v) = parse_assignment(a)?;
        arguments.insert(k, v);
    }
    let manager = open_manager(config)?;
    if !manager.services().pipelines.contains(&args.pipeline) {
        return Err(usage(format!("unknown pipeline `{}`", args.pipeline)));
    }
    let session_args = SessionArgs {
        replay: None,
        workdir: args.workdir.clone(),
        gated: false,
        json: false,
    };
    let provider = Arc::new(ReplayProvider::from_turns(Vec::new()));
    let id = manager.start_session(session_config(config, &session_args, provider))?;
    let report = manager
        .replay_pipeline(&id, &args.pipeline, &Value::Object(arguments))
        .map_err(manager_error)?;
    println!("{}", serde_json::to_string_pretty(&json!({"session_id": id, "report": report}))?);
    if report.ok {
        Ok(())
    } else {
        bail!("pipeline `{}` failed at step {}", args.pipeline, report.failed_step.unwrap_or(0))
    }
}

fn zoo(config: &Config, args: &ZooArgs) -> anyhow::Result<()> {
    let services = Services::from_config(config)?;
    if let Some(path) = &args.add {
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let entries: Vec<ModelZooEntry> =
            serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        for entry in entries {
            services.model_zoo.register(entry)?;
        }
    }
    let models = services.model_zoo.get_model_zoo()?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&models)?);
    } else {
        for m in &models {
            println!("{}", m.identifier);
        }
    }
    Ok(())
}

fn pipelines(config: &Config, action: PipelineAction) -> anyhow::Result<()> {
    match action {
        PipelineAction::List => {
            let zoo = Services::from_config(config)?.pipelines;
            for name in zoo.get_pipeline_zoo()? {
                let info = zoo.get_pipeline_info(&name)?;
                println!("{name}\t{}", info.manifest.description);
            }
        }
        PipelineAction::Show { name } => {
            let zoo = Services::from_config(config)?.pipelines;
            let info = zoo.get_pipeline_info(&name).map_err(|e| usage(e.to_string()))?;
            println!("{}", serde_json::to_string_pretty(&info)?);
        }
        PipelineAction::Save {
            session,
            name,
            description,
            required,
            optional,
        } => {
            let mut bindings = Vec::new();
            for b in &required {
                let (k, v) = parse_assignment(b)?;
                bindings.push(Binding::required(&k, v));
            }
            for b in &optional {
                let (k, v) = parse_assignment(b)?;
                bindings.push(Binding::optional(&k, v));
            }
            let manager = open_manager(config)?;
            if !manager.store().exists(&session) {
                return Err(usage(format!("unknown session `{session}`")));
            }
            let manifest = manager
                .summarise_pipeline(&session, &name, &description, &bindings)
                .map_err(manager_error)?;
            println!("{}", serde_json::to_string_pretty(&manifest)?);
        }
        PipelineAction::Remove { name } => {
            let zoo = Services::from_config(config)?.pipelines;
            zoo.remove(&name).map_err(|e| usage(e.to_string()))?;
        }
    }
    Ok(())
}

fn eval(config: &Config, args: &EvalArgs) -> anyhow::Result<()> {
    let suites: Vec<Suite> = if args.suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![args.suite.parse().map_err(|e: phenoflow::eval::EvalError| usage(e.to_string()))?]
    };
    let source = match args.provider {
        ProviderChoice::Replay => ProviderSource::Replay,
        ProviderChoice::Live => {
            if config.provider_kind != ProviderKind::Openai {
                return Err(usage("--provider live needs provider.kind = openai in the config"));
            }
            ProviderSource::Live(provider_from_config(config)?)
        }
    };
    let root = config.store_root.join("eval");
    for suite in suites {
        let report = run_suite(suite, source.clone(), &root)?;
        let (json_path, csv_path) = write_report(&report, &args.out)?;
        println!(
            "{suite}: {}/{} ({:.1}%) -> {}, {}",
            report.passes,
            report.total,
            100.0 * report.success_rate,
            json_path.display(),
            csv_path.display()
        );
    }
    Ok(())
}

fn serve(mut config: Config, args: &ServeArgs) -> anyhow::Result<()> {
    if let Some(b) = &args.bind {
        config.server.bind = b.clone();
    }
    if let Some(t) = &args.token {
        config.server.token = Some(t.clone());
    }
    let addr: SocketAddr = config
        .server
        .bind
        .parse()
        .map_err(|e| usage(format!("bad bind address `{}`: {e}", config.server.bind)))?;
    let state = AppState::from_config(config)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(server::serve(addr, state))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn answers_parse() {
        assert_eq!(parse_answer("y"), Some((Decision::Approve, None)));
        assert_eq!(parse_answer(" YES "), Some((Decision::Approve, None)));
        assert_eq!(parse_answer("n"), Some((Decision::Reject, None)));
        assert_eq!(
            parse_answer("n use the other model"),
            Some((Decision::Reject, Some("use the other model".into())))
        );
        assert_eq!(parse_answer("maybe"), None);
    }

    #[test]
    fn assignments_parse_json_or_string() {
        assert_eq!(parse_assignment("n=3").unwrap(), ("n".into(), json!(3)));
        assert_eq!(parse_assignment("dir=./data").unwrap(), ("dir".into(), json!("./data")));
        assert_eq!(parse_assignment("xs=[1,2]").unwrap(), ("xs".into(), json!([1, 2])));
        assert!(parse_assignment("novalue").is_err());
    }

    #[test]
    fn cli_shape_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
