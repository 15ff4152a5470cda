//! The default tool set: every capability the manager can call, bound to
//! the shared services it needs.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};
use thiserror::Error;

use crate::agents::{
    self, analyse_plot, analyse_table, changed_files, execute, rag_query, run_script_task, stamp,
    visualise, AgentError, Document, Interpreters, RagStore, ScriptEnv, ScriptSlots, ScriptTask,
};
use crate::config::{Config, ConfigError, EmbedderKind, ProviderKind};
use crate::geometry::{load_segmentation, write_phenotypes_csv, compute_phenotypes, ScaleFactor};
use crate::llm::{chat, ChatMessage, ChatProvider, Embedder, LlmError, OpenAiCompatible, ReplayProvider, StubEmbedder};
use crate::manager::{SessionEvent, SessionStore, EventKind};
use crate::pipeline::{
    executed_steps, replay_manifest, summarise_events, Binding, StepRunner, SCRIPT_TOOL,
};
use crate::prompts::Prompts;
use crate::registry::{
    ExecutedScript, ModelZoo, ParamKind, ParamSpec, PipelineZoo, RegistryError, ToolCategory,
    ToolHandler, ToolOutput, ToolRegistry, ToolSpec,
};
use crate::stats::{self, group_table, paired_columns, GroupedSample};
use crate::table::Table;
use crate::vision::{
    self, AdapterEndpoint, AdapterPool, Capability, FinetuneMethod, JobTracker, TaskType,
    TrainRequest,
};
use crate::workspace::Workspace;

#[derive(Debug, Error)]
pub enum ToolkitError {
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Long-lived state shared by every session.
pub struct Services {
    pub model_zoo: ModelZoo,
    pub pipelines: PipelineZoo,
    pub adapters: AdapterPool,
    pub jobs: JobTracker,
    pub rag: RagStore,
    pub embedder: Arc<dyn Embedder>,
    pub interpreters: Interpreters,
    pub slots: ScriptSlots,
    pub prompts: Prompts,
    pub script_attempts: usize,
    pub sessions: SessionStore,
}

impl std::fmt::Debug for Services {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Services")
            .field("model_zoo", &self.model_zoo.path())
            .field("pipelines", &self.pipelines.dir())
            .field("sessions", &self.sessions.root())
            .finish_non_exhaustive()
    }
}

/// Parses `training.adapter`.
pub fn training_endpoint(spec: &str) -> AdapterEndpoint {
    if let Some(cmd) = spec.strip_prefix("subprocess:") {
        AdapterEndpoint::subprocess(cmd.trim(), &[Capability::Train])
    } else if spec.starts_with("http://") || spec.starts_with("https://") {
        AdapterEndpoint::http(spec, &[Capability::Train])
    } else {
        AdapterEndpoint::in_process(spec)
    }
}

impl Services {
    /// Default services with all state below `store_root`.
    pub fn open(store_root: impl Into<PathBuf>) -> Result<Self, ToolkitError> {
        Self::from_config(&Config::with_store_root(store_root))
    }

    pub fn from_config(config: &Config) -> Result<Self, ToolkitError> {
        std::fs::create_dir_all(&config.store_root).map_err(|source| ToolkitError::Io {
            path: config.store_root.clone(),
            source,
        })?;
        let embedder: Arc<dyn Embedder> = match config.embedder {
            EmbedderKind::Stub => Arc::new(StubEmbedder::default()),
            EmbedderKind::Provider => Arc::new(OpenAiCompatible::new(config.provider.clone())),
        };
        let mut interpreters = Interpreters::default();
        for name in ["python", "sh"] {
            let p = interpreters.get(Some(name))?.clone();
            interpreters.insert(p.with_timeout(Duration::from_secs(config.script.timeout_secs)));
        }
        interpreters.set_default(&config.script.profile)?;
        let prompts = match &config.prompts_dir {
            Some(dir) => Prompts::load_dir(dir).map_err(|source| ToolkitError::Io {
                path: dir.clone(),
                source,
            })?,
            None => Prompts::default(),
        };
        Ok(Self {
            model_zoo: ModelZoo::open(config.model_zoo_path())?,
            pipelines: PipelineZoo::open(config.pipeline_dir())?,
            adapters: AdapterPool::new(),
            jobs: JobTracker::new(training_endpoint(&config.training_adapter)),
            rag: RagStore::open(config.rag_dir())?,
            embedder,
            interpreters,
            slots: ScriptSlots::new(config.script.slots),
            prompts,
            script_attempts: config.script.max_attempts,
            sessions: SessionStore::new(&config.store_root),
        })
    }
}

/// Builds the chat provider a config names. Replay providers are loaded
/// fresh so each session gets its own queue.
pub fn provider_from_config(config: &Config) -> Result<Arc<dyn ChatProvider>, ToolkitError> {
    match config.provider_kind {
        ProviderKind::Openai => Ok(Arc::new(OpenAiCompatible::new(config.provider.clone()))),
        ProviderKind::Replay => {
            let file = config.replay_file.as_ref().ok_or_else(|| {
                ConfigError::Invalid("provider.kind = replay needs provider.replay_file".into())
            })?;
            Ok(Arc::new(ReplayProvider::from_file(file)?))
        }
    }
}

/// What a tool handler may use while running one call.
pub struct ToolContext<'a> {
    pub session_id: &'a str,
    pub call_id: &'a str,
    pub workspace: &'a Workspace,
    pub provider: &'a dyn ChatProvider,
    pub services: &'a Services,
    pub registry: &'a ToolRegistry,
}

impl ToolContext<'_> {
    /// File-name-safe form of the call id.
    pub fn label(&self) -> String {
        self.call_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect()
    }

    fn script_env<'b>(&'b self, label: &'b str, profile: &'b agents::InterpreterProfile) -> ScriptEnv<'b> {
        ScriptEnv {
            ws: self.workspace,
            provider: self.provider,
            profile,
            slots: &self.services.slots,
            max_attempts: self.services.script_attempts,
            label,
        }
    }
}

/// Checks arguments against the tool's spec and runs its handler.
pub fn dispatch(ctx: &ToolContext<'_>, tool: &str, args: &Value) -> Result<ToolOutput, String> {
    let registered = ctx
        .registry
        .get(tool)
        .ok_or_else(|| format!("unknown tool `{tool}`"))?;
    registered.spec.check_arguments(args)?;
    registered.handler.call(args, ctx)
}

fn str_arg<'v>(args: &'v Value, name: &str) -> Result<&'v str, String> {
    args.get(name)
        .and_then(Value::as_str)
        .ok_or_else(|| format!("argument `{name}` must be a string"))
}

fn opt_str<'v>(args: &'v Value, name: &str) -> Option<&'v str> {
    args.get(name).and_then(Value::as_str)
}

fn num_arg(args: &Value, name: &str) -> Result<f64, String> {
    args.get(name)
        .and_then(Value::as_f64)
        .ok_or_else(|| format!("argument `{name}` must be a number"))
}

/// A string argument or an array of strings.
fn list_arg(args: &Value, name: &str) -> Result<Vec<String>, String> {
    match args.get(name) {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::String(s)) => Ok(vec![s.clone()]),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_owned)
                    .ok_or_else(|| format!("argument `{name}` must contain only strings"))
            })
            .collect(),
        Some(_) => Err(format!("argument `{name}` must be a string or a list of strings")),
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Result<Value, String> {
    serde_json::to_value(v).map_err(|e| e.to_string())
}

fn dot_relative(path: &str) -> String {
    let p = path.trim_start_matches("./");
    format!("./{p}")
}

fn resolve(ctx: &ToolContext<'_>, path: &str) -> Result<PathBuf, String> {
    ctx.workspace.resolve(path).map_err(|e| e.to_string())
}

type Handler = fn(&Value, &ToolContext<'_>) -> Result<ToolOutput, String>;

fn add(registry: &ToolRegistry, spec: ToolSpec, handler: Handler) -> Result<(), RegistryError> {
    registry.register_tool(spec, Arc::new(handler) as Arc<dyn ToolHandler>)?;
    Ok(())
}

fn p_req(name: &str, kind: ParamKind, description: &str) -> ParamSpec {
    ParamSpec::required(name, kind, description)
}

fn p_opt(name: &str, kind: ParamKind, description: &str) -> ParamSpec {
    ParamSpec::optional(name, kind, description)
}

/// A registry holding every built-in tool.
pub fn default_registry() -> ToolRegistry {
    let registry = ToolRegistry::new();
    register_defaults(&registry).expect("built-in tool specs are valid");
    registry
}

/// Tools whose results never become pipeline steps.
pub fn is_pipeline_tool(registry: &ToolRegistry, tool: &str) -> bool {
    registry
        .get(tool)
        .is_some_and(|t| t.spec.category == ToolCategory::Pipeline && tool != SCRIPT_TOOL)
}

pub fn register_defaults(r: &ToolRegistry) -> Result<(), RegistryError> {
    use ParamKind::*;
    use ToolCategory as C;

    add(r, ToolSpec::new("get_model_zoo", C::Vision,
        "List the available vision model checkpoints with their species, task, dataset, model and fine-tuning method."),
        tool_get_model_zoo)?;
    add(r, ToolSpec::new("infer_instance_segmentation", C::Vision,
        "Run a leaf instance segmentation checkpoint on images and write COCO results to {output_dir}/ins_seg_results.json.")
        .param(p_req("file_path", Path, "Image file, image directory, or JSON/CSV file listing image file names"))
        .param(p_req("checkpoint", String, "Model zoo identifier of a segmentation checkpoint"))
        .param(p_req("output_dir", Path, "Directory for the results file"))
        .needs_approval(), tool_infer_segmentation)?;
    add(r, ToolSpec::new("infer_classification", C::Vision,
        "Run an image classification checkpoint and write a CSV with columns file_name,label,confidence.")
        .param(p_req("file_path", Path, "Image file, image directory, or file listing images"))
        .param(p_req("checkpoint", String, "Model zoo identifier of a classification checkpoint"))
        .param(p_req("output_path", Path, "CSV file to write"))
        .needs_approval(), tool_infer_classification)?;
    add(r, ToolSpec::new("infer_regression", C::Vision,
        "Run an image regression checkpoint and write a CSV with columns file_name,value.")
        .param(p_req("file_path", Path, "Image file, image directory, or file listing images"))
        .param(p_req("checkpoint", String, "Model zoo identifier of a regression checkpoint"))
        .param(p_req("output_path", Path, "CSV file to write"))
        .needs_approval(), tool_infer_regression)?;
    add(r, ToolSpec::new("compute_phenotypes_from_ins_seg", C::Analysis,
        "Compute per-image leaf_count, average_leaf_area, projected_leaf_area, diameter, perimeter, compactness and stockiness from a COCO instance segmentation file and save them as CSV.")
        .param(p_req("ins_seg_result_path", Path, "COCO results file from infer_instance_segmentation"))
        .param(p_req("save_path", Path, "CSV file to write"))
        .param(p_opt("pixel_to_cm", Number, "Centimetres per pixel; 1 keeps pixel units"))
        .needs_approval(), tool_compute_phenotypes)?;
    add(r, ToolSpec::new("statistical_test", C::Analysis,
        "Run anova, tukey, ttest (columns: group, value), pearson or linear_fit (columns: x, y) on a CSV file.")
        .param(p_req("csv_path", Path, "Input table"))
        .param(p_req("test", String, "One of anova, tukey, ttest, pearson, linear_fit"))
        .param(p_req("columns", Array, "Two column names"))
        .param(p_opt("output_path", Path, "CSV file for the result table"))
        .param(p_opt("alpha", Number, "Significance level for tukey, default 0.05"))
        .needs_approval(), tool_statistical_test)?;
    add(r, ToolSpec::new("coding", C::Analysis,
        "Delegate a data-processing task to the code writer, which writes and runs a script in the working directory and retries on errors.")
        .param(p_req("message", String, "What the script must do, with input and output paths"))
        .param(p_opt("context_paths", Array, "Files the script reads"))
        .needs_approval(), tool_coding)?;
    add(r, ToolSpec::new(SCRIPT_TOOL, C::Analysis,
        "Run a given script verbatim in the sandbox.")
        .param(p_req("source", String, "Complete script text"))
        .param(p_opt("profile", String, "Interpreter profile, default python"))
        .param(p_opt("inputs", Array, "Files the script reads"))
        .param(p_opt("outputs", Array, "Files the script must write"))
        .needs_approval(), tool_run_script)?;
    add(r, ToolSpec::new("visualise", C::Analysis,
        "Create a plot from data files and save it as PNG.")
        .param(p_req("goal", String, "What to plot"))
        .param(p_req("data_paths", Array, "Input files"))
        .param(p_req("output_path", Path, "PNG file to write"))
        .param(p_opt("style", String, "Style requirements"))
        .needs_approval(), tool_visualise)?;
    add(r, ToolSpec::new("analyse_table", C::Analysis,
        "Answer a quantitative question about a CSV table by computing it.")
        .param(p_req("csv_path", Path, "Input table"))
        .param(p_req("question", String, "Question to answer"))
        .needs_approval(), tool_analyse_table)?;
    add(r, ToolSpec::new("analyse_plot", C::Analysis,
        "Describe or interpret a plot image.")
        .param(p_req("image_path", Path, "PNG or JPEG file"))
        .param(p_req("question", String, "What to look for")),
        tool_analyse_plot)?;
    add(r, ToolSpec::new("rag_ingest", C::Io,
        "Index text documents for retrieval; returns an index id.")
        .param(p_req("paths", Array, "Text files to index")),
        tool_rag_ingest)?;
    add(r, ToolSpec::new("rag_query", C::Io,
        "Answer a question from an indexed document collection, citing passages.")
        .param(p_req("index_id", String, "Id returned by rag_ingest"))
        .param(p_req("question", String, "Question"))
        .param(p_opt("k", Integer, "Passages to retrieve, default 5")),
        tool_rag_query)?;
    add(r, ToolSpec::new("get_dataset_format", C::Training,
        "Describe the dataset layout required for training a task type (instance_segmentation, classification, regression).")
        .param(p_req("task_type", String, "Task type")),
        tool_get_dataset_format)?;
    add(r, ToolSpec::new("prepare_dataset", C::Training,
        "Check a dataset against its layout and write a deterministic stratified train/validation split.")
        .param(p_req("dataset_root", Path, "Dataset directory"))
        .param(p_req("task_type", String, "Task type"))
        .param(p_opt("val_ratio", Number, "Validation fraction, default 0.2"))
        .param(p_opt("seed", Integer, "Split seed, default 0"))
        .needs_approval(), tool_prepare_dataset)?;
    add(r, ToolSpec::new("train_model", C::Training,
        "Start fine-tuning a base vision model on a prepared dataset; the trained model is added to the model zoo on success.")
        .param(p_req("dataset_root", Path, "Prepared dataset directory"))
        .param(p_req("task_type", String, "Task type"))
        .param(p_req("base_model", String, "Base model token, e.g. dinov2b"))
        .param(p_req("method", String, "lora or full"))
        .param(p_req("species", String, "Species token for the zoo identifier"))
        .param(p_req("task_name", String, "Task token for the zoo identifier"))
        .param(p_opt("dataset_name", String, "Dataset token for the zoo identifier"))
        .param(p_opt("augmentation", Object, "Augmentation settings passed to the adapter"))
        .param(p_opt("seed", Integer, "Training seed"))
        .needs_approval(), tool_train_model)?;
    add(r, ToolSpec::new("poll_job", C::Training,
        "Report the status of a training job.")
        .param(p_req("job_id", String, "Job id from train_model")),
        tool_poll_job)?;
    add(r, ToolSpec::new("get_pipeline_zoo", C::Pipeline,
        "List saved analysis pipelines."), tool_get_pipeline_zoo)?;
    add(r, ToolSpec::new("get_pipeline_info", C::Pipeline,
        "Show a saved pipeline's parameters and steps.")
        .param(p_req("name", String, "Pipeline name")),
        tool_get_pipeline_info)?;
    add(r, ToolSpec::new("summarise_pipeline", C::Pipeline,
        "Save the successful tool calls and scripts of the last finished run as a reusable pipeline.")
        .param(p_req("name", String, "Pipeline name"))
        .param(p_opt("description", String, "What the pipeline does"))
        .param(p_opt("session_id", String, "Source session, default the current one"))
        .param(p_opt("bindings", Array, "Literals to turn into parameters: objects with param, literal, required?, description?"))
        .needs_approval(), tool_summarise_pipeline)?;
    add(r, ToolSpec::new("replay_pipeline", C::Pipeline,
        "Run a saved pipeline with new argument values.")
        .param(p_req("name", String, "Pipeline name"))
        .param(p_opt("arguments", Object, "Parameter values"))
        .needs_approval(), tool_replay_pipeline)?;
    add(r, ToolSpec::new("suggest_bindings", C::Pipeline,
        "Propose which literals of the last finished run should become pipeline parameters. Nothing is saved.")
        .param(p_opt("session_id", String, "Source session, default the current one")),
        tool_suggest_bindings)?;
    Ok(())
}

fn tool_get_model_zoo(_: &Value, ctx: &ToolContext<'_>) -> Result<ToolOutput, String> {
    let entries = ctx.services.model_zoo.get_model_zoo().map_err(|e| e.to_string())?;
    Ok(ToolOutput::value(to_value(&entries)?))
}

fn inference_output(out: vision::InferenceOutput) -> Result<ToolOutput, String> {
    let path = out.path.clone();
    Ok(ToolOutput::value(to_value(&out)?).with_artifact(path))
}

fn tool_infer_segmentation(args: &Value, ctx: &ToolContext<'_>) -> Result<ToolOutput, String> {
    let out = vision::infer_instance_segmentation(
        &ctx.services.adapters,
        &ctx.services.model_zoo,
        ctx.workspace,
        &args["file_path"],
        str_arg(args, "checkpoint")?,
        str_arg(args, "output_dir")?,
    )
    .map_err(|e| e.to_string())?;
    inference_output(out)
}

fn tool_infer_classification(args: &Value, ctx: &ToolContext<'_>) -> Result<ToolOutput, String> {
    let out = vision::infer_classification(
        &ctx.services.adapters,
        &ctx.services.model_zoo,
        ctx.workspace,
        &args["file_path"],
        str_arg(args, "checkpoint")?,
        str_arg(args, "output_path")?,
    )
    .map_err(|e| e.to_string())?;
    inference_output(out)
}

fn tool_infer_regression(args: &Value, ctx: &ToolContext<'_>) -> Result<ToolOutput, String> {
    let out = vision::infer_regression(
        &ctx.services.adapters,
        &ctx.services.model_zoo,
        ctx.workspace,
        &args["file_path"],
        str_arg(args, "checkpoint")?,
        str_arg(args, "output_path")?,
    )
    .map_err(|e| e.to_string())?;
    inference_output(out)
}

fn tool_compute_phenotypes(args: &Value, ctx: &ToolContext<'_>) -> Result<ToolOutput, String> {
    let input = resolve(ctx, str_arg(args, "ins_seg_result_path")?)?;
    let save = resolve(ctx, str_arg(args, "save_path")?)?;
    let scale = match args.get("pixel_to_cm") {
        None | Some(Value::Null) => ScaleFactor::PIXELS,
        Some(_) => ScaleFactor::new(num_arg(args, "pixel_to_cm")?).map_err(|e| e.to_string())?,
    };
    let seg = load_segmentation(&input).map_err(|e| e.to_string())?;
    let records = compute_phenotypes(&seg, scale);
    if let Some(dir) = save.parent() {
        std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    }
    write_phenotypes_csv(&records, &save).map_err(|e| e.to_string())?;
    let rel = ctx.workspace.relative(&save);
    Ok(ToolOutput::value(json!({
        "path": rel,
        "images": records.len(),
        "leaves": records.iter().map(|r| r.leaf_count).sum::<usize>(),
        "pixel_to_cm": scale.pixel_to_cm(),
    }))
    .with_artifact(rel))
}

fn two_columns(args: &Value) -> Result<(String, String), String> {
    let cols = list_arg(args, "columns")?;
    match cols.as_slice() {
        [a, b] => Ok((a.clone(), b.clone())),
        _ => Err(format!("`columns` needs exactly two names, got {}", cols.len())),
    }
}

fn tool_statistical_test(args: &Value, ctx: &ToolContext<'_>) -> Result<ToolOutput, String> {
    let csv = resolve(ctx, str_arg(args, "csv_path")?)?;
    let table = Table::read_csv(&csv).map_err(|e| e.to_string())?;
    let (a, b) = two_columns(args)?;
    let alpha = args.get("alpha").and_then(Value::as_f64).unwrap_or(0.05);
    let test = str_arg(args, "test")?;
    let grouped = || -> Result<GroupedSample, String> { group_table(&table, &a, &b) };
    let (value, out_table) = match test {
        "anova" => {
            let r = stats::one_way_anova(&grouped()?).map_err(|e| e.to_string())?;
            (to_value(&r)?, None)
        }
        "tukey" => {
            let pairs = stats::tukey_kramer(&grouped()?, alpha).map_err(|e| e.to_string())?;
            (to_value(&pairs)?, Some(stats::tukey_table(&pairs)))
        }
        "ttest" => {
            let sample = grouped()?;
            let [g1, g2] = sample.groups.as_slice() else {
                return Err(format!("ttest needs exactly two groups, found {}", sample.groups.len()));
            };
            let r = stats::pooled_t_test(&g1.values, &g2.values).map_err(|e| e.to_string())?;
            (json!({"group_a": g1.label, "group_b": g2.label, "result": to_value(&r)?}), None)
        }
        "pearson" => {
            let (x, y) = paired_columns(&table, &a, &b)?;
            (to_value(&stats::pearson(&x, &y).map_err(|e| e.to_string())?)?, None)
        }
        "linear_fit" => {
            let (x, y) = paired_columns(&table, &a, &b)?;
            (to_value(&stats::linear_fit(&x, &y).map_err(|e| e.to_string())?)?, None)
        }
        other => return Err(format!("unknown test `{other}`")),
    };
    let mut out = ToolOutput::value(json!({"test": test, "columns": [a, b], "result": value}));
    if let Some(path) = opt_str(args, "output_path") {
        let target = resolve(ctx, path)?;
        let table = out_table.unwrap_or_else(|| scalar_table(&value));
        if let Some(dir) = target.parent() {
            std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        }
        table.write_csv(&target).map_err(|e| e.to_string())?;
        out = out.with_artifact(ctx.workspace.relative(&target));
    }
    Ok(out)
}

/// Numeric leaves of a result object as a `statistic,value` table.
fn scalar_table(v: &Value) -> Table {
    fn walk(prefix: &str, v: &Value, rows: &mut Vec<Vec<String>>) {
        match v {
            Value::Object(m) => {
                for (k, x) in m {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, x, rows);
                }
            }
            Value::Number(n) => rows.push(vec![prefix.to_owned(), n.to_string()]),
            Value::String(s) => rows.push(vec![prefix.to_owned(), s.clone()]),
            _ => {}
        }
    }
    let mut t = Table::new(vec!["statistic".into(), "value".into()]);
    walk("", v, &mut t.rows);
    t
}

fn tool_coding(args: &Value, ctx: &ToolContext<'_>) -> Result<ToolOutput, String> {
    let context = list_arg(args, "context_paths")?;
    let task = ScriptTask::new(str_arg(args, "message")?)
        .with_context(context.iter().cloned())
        .with_attempts(ctx.services.script_attempts);
    let profile = ctx.services.interpreters.default_profile();
    let outcome = run_script_task(
        &task,
        &ctx.services.prompts.code_writer,
        ctx.provider,
        ctx.workspace,
        profile,
        &ctx.services.slots,
        &ctx.label(),
    )
    .map_err(|e| e.to_string())?
    .into_result()
    .map_err(|e| e.to_string())?;
    let last = outcome.last().cloned();
    let mut script = outcome.executed(&context).expect("successful outcome has a script");
    script.inputs = script.inputs.iter().map(|p| dot_relative(p)).collect();
    script.outputs = script.outputs.iter().map(|p| dot_relative(p)).collect();
    Ok(ToolOutput {
        value: json!({
            "status": "success",
            "attempts": outcome.attempts.len(),
            "stdout": last.map(|a| a.stdout).unwrap_or_default(),
            "artifacts": outcome.artifacts,
        }),
        artifacts: outcome.artifacts.clone(),
        scripts: vec![script],
    })
}

fn tool_run_script(args: &Value, ctx: &ToolContext<'_>) -> Result<ToolOutput, String> {
    let source = str_arg(args, "source")?;
    let profile = ctx
        .services
        .interpreters
        .get(opt_str(args, "profile"))
        .map_err(|e| e.to_string())?;
    let inputs = list_arg(args, "inputs")?;
    let outputs = list_arg(args, "outputs")?;
    for p in &inputs {
        if !resolve(ctx, p)?.exists() {
            return Err(format!("declared input `{p}` does not exist"));
        }
    }
    let before = stamp(ctx.workspace);
    let exec = execute(ctx.workspace, profile, &ctx.services.slots, source, &ctx.label())
        .map_err(|e| e.to_string())?;
    if !exec.success() {
        return Err(exec.failure_report());
    }
    for p in &outputs {
        if !resolve(ctx, p)?.exists() {
            return Err(format!("declared output `{p}` was not written"));
        }
    }
    let artifacts = changed_files(ctx.workspace, &before);
    Ok(ToolOutput {
        value: json!({"exit_code": exec.exit_code, "stdout": exec.stdout, "stderr": exec.stderr}),
        artifacts,
        scripts: vec![ExecutedScript {
            profile: profile.name.clone(),
            source: source.to_owned(),
            inputs,
            outputs,
        }],
    })
}

fn tool_visualise(args: &Value, ctx: &ToolContext<'_>) -> Result<ToolOutput, String> {
    let label = ctx.label();
    let profile = ctx.services.interpreters.default_profile();
    let env = ctx.script_env(&label, profile);
    let data = list_arg(args, "data_paths")?;
    let plot = visualise(
        &env,
        &ctx.services.prompts.visualiser,
        str_arg(args, "goal")?,
        &data,
        str_arg(args, "output_path")?,
        opt_str(args, "style"),
    )
    .map_err(|e| e.to_string())?;
    let script = plot.script.executed(&data);
    Ok(ToolOutput {
        value: json!({"path": plot.path, "width": plot.width, "height": plot.height, "attempts": plot.script.attempts.len()}),
        artifacts: plot.script.artifacts.clone(),
        scripts: script.into_iter().collect(),
    })
}

fn tool_analyse_table(args: &Value, ctx: &ToolContext<'_>) -> Result<ToolOutput, String> {
    let label = ctx.label();
    let profile = ctx.services.interpreters.default_profile();
    let env = ctx.script_env(&label, profile);
    let csv = str_arg(args, "csv_path")?;
    let answer = analyse_table(&env, &ctx.services.prompts.table_analyser, csv, str_arg(args, "question")?)
        .map_err(|e| e.to_string())?;
    let script = answer.script.executed(&[csv.to_owned()]);
    Ok(ToolOutput {
        value: json!({"answer": answer.text, "values": answer.named}),
        artifacts: answer.script.artifacts.clone(),
        scripts: script.into_iter().collect(),
    })
}

fn tool_analyse_plot(args: &Value, ctx: &ToolContext<'_>) -> Result<ToolOutput, String> {
    let text = analyse_plot(
        ctx.workspace,
        ctx.provider,
        &ctx.services.prompts.plot_analyser,
        str_arg(args, "image_path")?,
        str_arg(args, "question")?,
    )
    .map_err(|e| e.to_string())?;
    Ok(ToolOutput::value(json!({"answer": text})))
}

fn tool_rag_ingest(args: &Value, ctx: &ToolContext<'_>) -> Result<ToolOutput, String> {
    let mut docs = Vec::new();
    for p in list_arg(args, "paths")? {
        let abs = resolve(ctx, &p)?;
        let text = std::fs::read_to_string(&abs).map_err(|e| format!("{p}: {e}"))?;
        docs.push(Document::new(p, text));
    }
    let id = ctx
        .services
        .rag
        .ingest(&docs, ctx.services.embedder.as_ref())
        .map_err(|e| e.to_string())?;
    Ok(ToolOutput::value(json!({"index_id": id, "documents": docs.len()})))
}

fn tool_rag_query(args: &Value, ctx: &ToolContext<'_>) -> Result<ToolOutput, String> {
    let k = args
        .get("k")
        .and_then(Value::as_u64)
        .map_or(agents::rag::DEFAULT_K, |k| k as usize);
    let answer = rag_query(
        &ctx.services.rag,
        ctx.services.embedder.as_ref(),
        ctx.provider,
        &ctx.services.prompts.rag,
        str_arg(args, "index_id")?,
        str_arg(args, "question")?,
        k,
    )
    .map_err(|e| e.to_string())?;
    Ok(ToolOutput::value(to_value(&answer)?))
}

fn tool_get_dataset_format(args: &Value, _: &ToolContext<'_>) -> Result<ToolOutput, String> {
    let f = vision::get_dataset_format(str_arg(args, "task_type")?).map_err(|e| e.to_string())?;
    Ok(ToolOutput::value(to_value(&f)?))
}

fn task_type(args: &Value) -> Result<TaskType, String> {
    str_arg(args, "task_type")?.parse().map_err(|e: vision::VisionError| e.to_string())
}

fn tool_prepare_dataset(args: &Value, ctx: &ToolContext<'_>) -> Result<ToolOutput, String> {
    let root = resolve(ctx, str_arg(args, "dataset_root")?)?;
    let ratio = args.get("val_ratio").and_then(Value::as_f64).unwrap_or(0.2);
    let seed = args.get("seed").and_then(Value::as_u64).unwrap_or(0);
    let report = vision::prepare_dataset(&root, task_type(args)?, ratio, seed).map_err(|e| e.to_string())?;
    let split = ctx.workspace.relative(&root.join("split.json"));
    Ok(ToolOutput::value(json!({
        "train": report.train.len(),
        "val": report.val.len(),
        "per_class": report.per_class,
        "warnings": report.warnings,
        "split_file": split,
    }))
    .with_artifact(split))
}

fn tool_train_model(args: &Value, ctx: &ToolContext<'_>) -> Result<ToolOutput, String> {
    let method: FinetuneMethod = str_arg(args, "method")?.parse().map_err(|e: vision::VisionError| e.to_string())?;
    let request = TrainRequest {
        dataset_root: resolve(ctx, str_arg(args, "dataset_root")?)?,
        task_type: task_type(args)?,
        base_model: str_arg(args, "base_model")?.to_owned(),
        method,
        species: str_arg(args, "species")?.to_owned(),
        task_name: str_arg(args, "task_name")?.to_owned(),
        dataset_name: opt_str(args, "dataset_name").map(str::to_owned),
        augmentation: args.get("augmentation").cloned().unwrap_or(Value::Null),
        seed: args.get("seed").and_then(Value::as_u64).unwrap_or(0),
    };
    let job = ctx
        .services
        .jobs
        .train_model(&ctx.services.adapters, &ctx.services.model_zoo, request)
        .map_err(|e| e.to_string())?;
    Ok(ToolOutput::value(to_value(&job)?))
}

fn tool_poll_job(args: &Value, ctx: &ToolContext<'_>) -> Result<ToolOutput, String> {
    let job = ctx
        .services
        .jobs
        .poll_job(&ctx.services.adapters, &ctx.services.model_zoo, str_arg(args, "job_id")?)
        .map_err(|e| e.to_string())?;
    Ok(ToolOutput::value(to_value(&job)?))
}

fn tool_get_pipeline_zoo(_: &Value, ctx: &ToolContext<'_>) -> Result<ToolOutput, String> {
    let names = ctx.services.pipelines.get_pipeline_zoo().map_err(|e| e.to_string())?;
    Ok(ToolOutput::value(json!(names)))
}

fn tool_get_pipeline_info(args: &Value, ctx: &ToolContext<'_>) -> Result<ToolOutput, String> {
    let entry = ctx
        .services
        .pipelines
        .get_pipeline_info(str_arg(args, "name")?)
        .map_err(|e| e.to_string())?;
    Ok(ToolOutput::value(to_value(&entry)?))
}

/// Transcript of a session up to and including its last `terminated` event.
pub fn finished_events(services: &Services, session_id: &str) -> Result<Vec<SessionEvent>, String> {
    let mut events = services
        .sessions
        .read_events(session_id, 0)
        .map_err(|e| e.to_string())?;
    let end = events
        .iter()
        .rposition(|e| e.kind == EventKind::Terminated)
        .ok_or_else(|| format!("session `{session_id}` has no finished run"))?;
    events.truncate(end + 1);
    Ok(events)
}

fn tool_summarise_pipeline(args: &Value, ctx: &ToolContext<'_>) -> Result<ToolOutput, String> {
    let name = str_arg(args, "name")?;
    let session = opt_str(args, "session_id").unwrap_or(ctx.session_id);
    let bindings: Vec<Binding> = match args.get("bindings") {
        None | Some(Value::Null) => Vec::new(),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| format!("bad bindings: {e}"))?,
    };
    if ctx.services.pipelines.contains(name) {
        return Err(RegistryError::DuplicatePipeline(name.to_owned()).to_string());
    }
    let events = finished_events(ctx.services, session)?;
    let manifest = summarise_events(
        &events,
        session,
        name,
        opt_str(args, "description").unwrap_or(""),
        &bindings,
        |tool| is_pipeline_tool(ctx.registry, tool),
    )
    .map_err(|e| e.to_string())?;
    let path = ctx.services.pipelines.save(&manifest).map_err(|e| e.to_string())?;
    Ok(ToolOutput::value(json!({
        "name": manifest.name,
        "steps": manifest.steps.iter().map(|s| s.label().to_owned()).collect::<Vec<_>>(),
        "params": manifest.params,
        "path": path.display().to_string(),
    })))
}

/// Runs pipeline steps through the registry inside one tool call.
struct NestedRunner<'a, 'b> {
    ctx: &'a ToolContext<'b>,
}

impl StepRunner for NestedRunner<'_, '_> {
    fn run_tool(&mut self, step: usize, tool: &str, args: &Value) -> Result<ToolOutput, String> {
        let call_id = format!("{}.{step}", self.ctx.call_id);
        let nested = ToolContext {
            call_id: &call_id,
            ..*self.ctx
        };
        dispatch(&nested, tool, args)
    }
}

fn tool_replay_pipeline(args: &Value, ctx: &ToolContext<'_>) -> Result<ToolOutput, String> {
    let entry = ctx
        .services
        .pipelines
        .get_pipeline_info(str_arg(args, "name")?)
        .map_err(|e| e.to_string())?;
    let arguments = args.get("arguments").cloned().unwrap_or_else(|| json!({}));
    let mut runner = NestedRunner { ctx };
    let report = replay_manifest(
        &entry.manifest,
        &arguments,
        |t| ctx.registry.get(t).is_some(),
        &mut runner,
    )
    .map_err(|e| e.to_string())?;
    let value = to_value(&report)?;
    if !report.ok {
        return Err(format!("pipeline failed: {value}"));
    }
    Ok(ToolOutput {
        value,
        artifacts: report.artifacts(),
        scripts: Vec::new(),
    })
}

fn tool_suggest_bindings(args: &Value, ctx: &ToolContext<'_>) -> Result<ToolOutput, String> {
    let session = opt_str(args, "session_id").unwrap_or(ctx.session_id);
    let events = finished_events(ctx.services, session)?;
    let steps = executed_steps(&events, |tool| is_pipeline_tool(ctx.registry, tool));
    if steps.is_empty() {
        return Err(format!("session `{session}` contains no successful tool calls"));
    }
    let listing = serde_json::to_string_pretty(&steps).map_err(|e| e.to_string())?;
    let messages = [
        ChatMessage::system(&ctx.services.prompts.pipeline_reproducer),
        ChatMessage::user(format!(
            "Executed steps:\n{listing}\n\nList the literal values that a user would change between runs. \
             Reply with a JSON array of objects with keys param, literal and description."
        )),
    ];
    let turn = chat(ctx.provider, &messages, &[]).map_err(|e| e.to_string())?;
    let text = turn.text.unwrap_or_default();
    let suggested = parse_json_array(&text);
    Ok(ToolOutput::value(json!({"suggestions": suggested, "applied": false, "reply": text})))
}

/// The first JSON array in free text, if any.
fn parse_json_array(text: &str) -> Value {
    let start = text.find('[');
    let end = text.rfind(']');
    match (start, end) {
        (Some(s), Some(e)) if s < e => serde_json::from_str(&text[s..=e]).unwrap_or(Value::Null),
        _ => Value::Null,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ReplayProvider;

    #[test]
    fn default_registry_specs_are_valid_and_approval_follows_effects() {
        let r = default_registry();
        assert!(r.len() >= 20);
        for spec in r.list_tools() {
            spec.validate().unwrap();
        }
        let needs = |n: &str| r.get(n).unwrap().spec.approval_required;
        assert!(!needs("get_model_zoo"));
        assert!(!needs("get_pipeline_zoo"));
        assert!(needs("coding"));
        assert!(needs("compute_phenotypes_from_ins_seg"));
        assert!(needs(SCRIPT_TOOL));
        assert!(is_pipeline_tool(&r, "replay_pipeline"));
        assert!(!is_pipeline_tool(&r, SCRIPT_TOOL));
    }

    #[test]
    fn statistical_test_writes_tukey_table() {
        let dir = tempfile::tempdir().unwrap();
        let services = Services::open(dir.path().join("store")).unwrap();
        let ws = Workspace::create(dir.path().join("ws")).unwrap();
        std::fs::write(
            ws.root().join("d.csv"),
            "g,v\na,1\na,2\na,3\nb,4\nb,5\nb,6\nc,1\nc,2\nc,4\n",
        )
        .unwrap();
        let provider = ReplayProvider::from_turns(Vec::new());
        let registry = default_registry();
        let ctx = ToolContext {
            session_id: "s",
            call_id: "c1",
            workspace: &ws,
            provider: &provider,
            services: &services,
            registry: &registry,
        };
        let out = dispatch(
            &ctx,
            "statistical_test",
            &json!({"csv_path": "d.csv", "test": "tukey", "columns": ["g", "v"], "output_path": "out/tukey.csv"}),
        )
        .unwrap();
        assert_eq!(out.artifacts, vec!["out/tukey.csv".to_owned()]);
        let t = Table::read_csv(ws.root().join("out/tukey.csv")).unwrap();
        assert_eq!(t.rows.len(), 3);
        let err = dispatch(&ctx, "statistical_test", &json!({"csv_path": "d.csv", "test": "x", "columns": ["g", "v"]}))
            .unwrap_err();
        assert!(err.contains("unknown test"));
        assert!(dispatch(&ctx, "nope", &json!({})).unwrap_err().contains("unknown tool"));
    }
}
