use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::PipelineError;
use crate::registry::{is_identifier, ParamKind};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineParam {
    pub name: String,
    pub kind: ParamKind,
    pub description: String,
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
}

/// A literal in a script body that is swapped for a parameter value on replay.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptBinding {
    pub param: String,
    pub literal: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Step {
    ToolCall {
        tool: String,
        /// String leaves may contain `${param}` placeholders.
        args: Value,
    },
    Script {
        profile: String,
        /// Byte-exact as executed.
        source: String,
        #[serde(default)]
        bindings: Vec<ScriptBinding>,
        #[serde(default)]
        inputs: Vec<String>,
        #[serde(default)]
        outputs: Vec<String>,
    },
}

impl Step {
    pub fn tool_call(tool: &str, args: Value) -> Self {
        Step::ToolCall {
            tool: tool.to_owned(),
            args,
        }
    }

    pub fn label(&self) -> &str {
        match self {
            Step::ToolCall { tool, .. } => tool,
            Step::Script { .. } => "script",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub created_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_session: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub manifest_version: u32,
    pub name: String,
    pub description: String,
    pub params: Vec<PipelineParam>,
    pub steps: Vec<Step>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

/// A piece of a templated string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Text(String),
    Param(String),
}

/// Splits `s` on `${name}` placeholders; `$${` is an escaped literal `${`.
pub fn parse_template(s: &str) -> Result<Vec<Segment>, PipelineError> {
    let mut out = Vec::new();
    let mut text = String::new();
    let mut rest = s;
    while let Some(pos) = rest.find('$') {
        text.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if let Some(after) = tail.strip_prefix("$${") {
            text.push_str("${");
            rest = after;
        } else if let Some(body) = tail.strip_prefix("${") {
            let end = body.find('}').ok_or_else(|| {
                PipelineError::Manifest(format!("unterminated placeholder in `{s}`"))
            })?;
            if !text.is_empty() {
                out.push(Segment::Text(std::mem::take(&mut text)));
            }
            out.push(Segment::Param(body[..end].to_owned()));
            rest = &body[end + 1..];
        } else {
            text.push('$');
            rest = &tail[1..];
        }
    }
    text.push_str(rest);
    if !text.is_empty() {
        out.push(Segment::Text(text));
    }
    Ok(out)
}

pub fn escape_text(s: &str) -> String {
    s.replace("${", "$${")
}

fn collect_placeholders(value: &Value, out: &mut BTreeSet<String>) -> Result<(), PipelineError> {
    match value {
        Value::String(s) => {
            for seg in parse_template(s)? {
                if let Segment::Param(p) = seg {
                    out.insert(p);
                }
            }
        }
        Value::Array(items) => {
            for v in items {
                collect_placeholders(v, out)?;
            }
        }
        Value::Object(map) => {
            for v in map.values() {
                collect_placeholders(v, out)?;
            }
        }
        _ => {}
    }
    Ok(())
}

impl PipelineManifest {
    pub fn new(
        name: &str,
        description: &str,
        params: Vec<PipelineParam>,
        steps: Vec<Step>,
    ) -> Self {
        Self {
            manifest_version: MANIFEST_VERSION,
            name: name.to_owned(),
            description: description.to_owned(),
            params,
            steps,
            provenance: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        let m: PipelineManifest =
            serde_json::from_str(text).map_err(|e| PipelineError::Manifest(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// Placeholders used anywhere in the steps.
    pub fn placeholders(&self) -> Result<BTreeSet<String>, PipelineError> {
        let mut out = BTreeSet::new();
        for step in &self.steps {
            match step {
                Step::ToolCall { args, .. } => collect_placeholders(args, &mut out)?,
                Step::Script {
                    bindings,
                    inputs,
                    outputs,
                    ..
                } => {
                    out.extend(bindings.iter().map(|b| b.param.clone()));
                    for p in inputs.iter().chain(outputs) {
                        collect_placeholders(&Value::String(p.clone()), &mut out)?;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |reason: String| Err(PipelineError::Manifest(reason));
        if self.manifest_version != MANIFEST_VERSION {
            return bad(format!(
                "unsupported manifest_version {} (expected {MANIFEST_VERSION})",
                self.manifest_version
            ));
        }
        if !is_identifier(&self.name) {
            return bad(format!(
                "pipeline name `{}` is not an identifier",
                self.name
            ));
        }
        if self.steps.is_empty() {
            return bad("a pipeline needs at least one step".into());
        }
        let mut declared = BTreeMap::new();
        for p in &self.params {
            if !is_identifier(&p.name) || declared.insert(p.name.as_str(), p).is_some() {
                return bad(format!("bad or duplicate parameter `{}`", p.name));
            }
            if p.required == p.default.is_some() {
                return bad(format!(
                    "parameter `{}` must be either required or carry a default",
                    p.name
                ));
            }
        }
        for (i, step) in self.steps.iter().enumerate() {
            match step {
                Step::ToolCall { tool, args } => {
                    if !is_identifier(tool) {
                        return bad(format!("step {}: bad tool name `{tool}`", i + 1));
                    }
                    if !args.is_object() {
                        return bad(format!("step {}: arguments must be an object", i + 1));
                    }
                }
                Step::Script {
                    source, bindings, ..
                } => {
                    for b in bindings {
                        if b.literal.is_empty() || !source.contains(&b.literal) {
                            return bad(format!(
                                "step {}: binding literal `{}` does not occur in the script",
                                i + 1,
                                b.literal
                            ));
                        }
                    }
                }
            }
        }
        for p in self.placeholders()? {
            if !declared.contains_key(p.as_str()) {
                return bad(format!(
                    "placeholder `${{{p}}}` references an undeclared parameter"
                ));
            }
        }
        Ok(())
    }

    pub fn param(&self, name: &str) -> Option<&PipelineParam> {
        self.params.iter().find(|p| p.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    fn sample() -> PipelineManifest {
        PipelineManifest::new(
            "ara_crop_pipeline",
            "traits",
            vec![
                PipelineParam {
                    name: "output_dir".into(),
                    kind: ParamKind::Path,
                    description: "where results go".into(),
                    required: true,
                    default: None,
                },
                PipelineParam {
                    name: "pixel_to_cm".into(),
                    kind: ParamKind::Number,
                    description: "scale".into(),
                    required: false,
                    default: Some(json!(0.03)),
                },
            ],
            vec![
                Step::tool_call("get_model_zoo", json!({})),
                Step::tool_call(
                    "compute_phenotypes_from_ins_seg",
                    json!({"ins_seg_result_path": "${output_dir}/ins_seg_results.json",
                           "pixel_to_cm": "${pixel_to_cm}"}),
                ),
                Step::Script {
                    profile: "python".into(),
                    source: "print('./results')\n".into(),
                    bindings: vec![ScriptBinding {
                        param: "output_dir".into(),
                        literal: "./results".into(),
                    }],
                    inputs: vec![],
                    outputs: vec!["${output_dir}/merged.csv".into()],
                },
            ],
        )
    }

    #[test]
    fn valid_manifest_round_trips() {
        let m = sample();
        m.validate().unwrap();
        let text = m.to_json();
        let back = PipelineManifest::parse(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json(), text);
        assert!(text.contains("\"manifest_version\": 1"));
    }

    #[test]
    fn undeclared_placeholder_is_rejected() {
        let mut m = sample();
        m.steps.push(Step::tool_call("x", json!({"a": "${nope}"})));
        assert!(m.validate().unwrap_err().to_string().contains("nope"));
        let mut empty = sample();
        empty.steps.clear();
        assert!(empty.validate().is_err());
    }

    #[test]
    fn template_parsing() {
        assert_eq!(
            parse_template("a${x}b$${y}$c").unwrap(),
            vec![
                Segment::Text("a".into()),
                Segment::Param("x".into()),
                Segment::Text("b${y}$c".into())
            ]
        );
        assert!(parse_template("${open").is_err());
    }

    proptest! {
        #[test]
        fn escaped_text_parses_back(s in ".*") {
            let segs = parse_template(&escape_text(&s)).unwrap();
            let joined: String = segs.iter().map(|g| match g {
                Segment::Text(t) => t.clone(),
                Segment::Param(p) => format!("<{p}>"),
            }).collect();
            prop_assert_eq!(joined, s);
        }

        #[test]
        fn serialization_is_a_fixed_point(x in -1e6f64..1e6, name in "[a-z][a-z0-9_]{0,8}") {
            let mut m = sample();
            m.name = name;
            m.steps.push(Step::tool_call("scale", json!({"v": x, "tag": "${output_dir}"})));
            let once = m.to_json();
            prop_assert_eq!(PipelineManifest::parse(&once).unwrap().to_json(), once);
        }
    }
}
