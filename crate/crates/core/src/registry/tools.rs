use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::RegistryError;
use crate::toolkit::ToolContext;

/// Semantic type of a tool parameter, mapped onto JSON-schema types when the
/// spec is shown to a language model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    String,
    Path,
    Number,
    Integer,
    Boolean,
    Array,
    Object,
}

impl ParamKind {
    fn json_type(self) -> &'static str {
        match self {
            ParamKind::String | ParamKind::Path => "string",
            ParamKind::Number => "number",
            ParamKind::Integer => "integer",
            ParamKind::Boolean => "boolean",
            ParamKind::Array => "array",
            ParamKind::Object => "object",
        }
    }

    fn accepts(self, value: &Value) -> bool {
        match self {
            ParamKind::String | ParamKind::Path => value.is_string(),
            ParamKind::Number => value.is_number(),
            ParamKind::Integer => value.is_i64() || value.is_u64(),
            ParamKind::Boolean => value.is_boolean(),
            ParamKind::Array => value.is_array(),
            ParamKind::Object => value.is_object(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    pub description: String,
    pub required: bool,
}

impl ParamSpec {
    pub fn required(name: &str, kind: ParamKind, description: &str) -> Self {
        Self {
            name: name.to_owned(),
            kind,
            description: description.to_owned(),
            required: true,
        }
    }

    pub fn optional(name: &str, kind: ParamKind, description: &str) -> Self {
        Self {
            required: false,
            ..Self::required(name, kind, description)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolCategory {
    Vision,
    Analysis,
    Io,
    Training,
    Pipeline,
}

/// A callable capability as the manager's language model sees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub params: Vec<ParamSpec>,
    pub category: ToolCategory,
    pub approval_required: bool,
}

impl ToolSpec {
    pub fn new(name: &str, category: ToolCategory, description: &str) -> Self {
        Self {
            name: name.to_owned(),
            description: description.to_owned(),
            params: Vec::new(),
            category,
            approval_required: false,
        }
    }

    pub fn param(mut self, param: ParamSpec) -> Self {
        self.params.push(param);
        self
    }

    pub fn needs_approval(mut self) -> Self {
        self.approval_required = true;
        self
    }

    pub fn validate(&self) -> Result<(), RegistryError> {
        if !is_identifier(&self.name) {
            return Err(RegistryError::MalformedName(self.name.clone()));
        }
        if self.description.trim().is_empty() {
            return Err(RegistryError::EmptyDescription(self.name.clone()));
        }
        let mut seen_optional = false;
        let mut names = std::collections::HashSet::new();
        for p in &self.params {
            if !is_identifier(&p.name) || !names.insert(p.name.as_str()) {
                return Err(RegistryError::InvalidParam {
                    tool: self.name.clone(),
                    reason: format!("bad or duplicate parameter name `{}`", p.name),
                });
            }
            if p.required && seen_optional {
                return Err(RegistryError::InvalidParam {
                    tool: self.name.clone(),
                    reason: format!(
                        "required parameter `{}` listed after an optional one",
                        p.name
                    ),
                });
            }
            seen_optional |= !p.required;
        }
        Ok(())
    }

    /// JSON schema of the parameter object, in the function-calling format.
    pub fn parameters_schema(&self) -> Value {
        let mut props = serde_json::Map::new();
        for p in &self.params {
            props.insert(
                p.name.clone(),
                serde_json::json!({"type": p.kind.json_type(), "description": p.description}),
            );
        }
        let required: Vec<&str> = self
            .params
            .iter()
            .filter(|p| p.required)
            .map(|p| p.name.as_str())
            .collect();
        serde_json::json!({"type": "object", "properties": props, "required": required})
    }

    /// Checks an argument record against the parameter list. Unknown keys,
    /// missing required keys and type mismatches are all reported.
    pub fn check_arguments(&self, args: &Value) -> Result<(), String> {
        let Some(obj) = args.as_object() else {
            return Err("arguments must be a JSON object".into());
        };
        let mut problems = Vec::new();
        for p in &self.params {
            match obj.get(&p.name) {
                None | Some(Value::Null) if p.required => {
                    problems.push(format!("missing required argument `{}`", p.name))
                }
                Some(v) if !v.is_null() && !p.kind.accepts(v) => problems.push(format!(
                    "argument `{}` should be of type {}",
                    p.name,
                    p.kind.json_type()
                )),
                _ => {}
            }
        }
        for key in obj.keys() {
            if !self.params.iter().any(|p| &p.name == key) {
                problems.push(format!("unknown argument `{key}`"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems.join("; "))
        }
    }
}

/// `[a-z][a-z0-9_]*`
pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some('a'..='z'))
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// What a tool produced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ToolOutput {
    pub value: Value,
    /// Files written, relative to the session working directory.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub artifacts: Vec<String>,
    /// Scripts that ran successfully on behalf of this call.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scripts: Vec<ExecutedScript>,
}

impl ToolOutput {
    pub fn value(value: Value) -> Self {
        Self {
            value,
            ..Self::default()
        }
    }

    pub fn with_artifact(mut self, path: impl Into<String>) -> Self {
        self.artifacts.push(path.into());
        self
    }
}

/// A script that was executed, byte-exact, with the files it read and wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutedScript {
    pub profile: String,
    pub source: String,
    #[serde(default)]
    pub inputs: Vec<String>,
    #[serde(default)]
    pub outputs: Vec<String>,
}

pub trait ToolHandler: Send + Sync {
    fn call(&self, args: &Value, ctx: &ToolContext<'_>) -> Result<ToolOutput, String>;
}

impl<F> ToolHandler for F
where
    F: Fn(&Value, &ToolContext<'_>) -> Result<ToolOutput, String> + Send + Sync,
{
    fn call(&self, args: &Value, ctx: &ToolContext<'_>) -> Result<ToolOutput, String> {
        self(args, ctx)
    }
}

#[derive(Clone)]
pub struct RegisteredTool {
    pub spec: ToolSpec,
    pub handler: Arc<dyn ToolHandler>,
}

impl std::fmt::Debug for RegisteredTool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RegisteredTool")
            .field("spec", &self.spec)
            .finish()
    }
}

/// Tool specifications and their implementations, in registration order.
#[derive(Debug, Default)]
pub struct ToolRegistry {
    tools: RwLock<IndexMap<String, RegisteredTool>>,
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tool. Re-registering an identical spec is a no-op that
    /// keeps the original handler.
    pub fn register_tool(
        &self,
        spec: ToolSpec,
        handler: Arc<dyn ToolHandler>,
    ) -> Result<String, RegistryError> {
        spec.validate()?;
        let mut tools = self.tools.write().expect("tool registry poisoned");
        if let Some(existing) = tools.get(&spec.name) {
            if existing.spec == spec {
                return Ok(spec.name);
            }
            return Err(RegistryError::DuplicateTool(spec.name));
        }
        let id = spec.name.clone();
        tools.insert(id.clone(), RegisteredTool { spec, handler });
        Ok(id)
    }

    pub fn unregister_tool(&self, name: &str) -> Option<ToolSpec> {
        self.tools
            .write()
            .expect("tool registry poisoned")
            .shift_remove(name)
            .map(|t| t.spec)
    }

    pub fn list_tools(&self) -> Vec<ToolSpec> {
        self.tools
            .read()
            .expect("tool registry poisoned")
            .values()
            .map(|t| t.spec.clone())
            .collect()
    }

    pub fn get(&self, name: &str) -> Option<RegisteredTool> {
        self.tools
            .read()
            .expect("tool registry poisoned")
            .get(name)
            .cloned()
    }

    pub fn len(&self) -> usize {
        self.tools.read().expect("tool registry poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Specs grouped by category, for display.
    pub fn by_category(&self) -> BTreeMap<ToolCategory, Vec<String>> {
        let mut out: BTreeMap<ToolCategory, Vec<String>> = BTreeMap::new();
        for spec in self.list_tools() {
            out.entry(spec.category).or_default().push(spec.name);
        }
        out
    }
}
