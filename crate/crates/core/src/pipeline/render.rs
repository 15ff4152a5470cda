//! Human-readable script rendering of a manifest.

use std::fmt::Write as _;

use serde_json::Value;

use super::manifest::{parse_template, PipelineManifest, Segment, Step};

fn py_literal(v: &Value) -> String {
    match v {
        Value::Null => "None".into(),
        Value::Bool(true) => "True".into(),
        Value::Bool(false) => "False".into(),
        Value::Number(n) => n.to_string(),
        Value::String(s) => template_expr(s),
        Value::Array(items) => format!(
            "[{}]",
            items.iter().map(py_literal).collect::<Vec<_>>().join(", ")
        ),
        Value::Object(map) => format!(
            "{{{}}}",
            map.iter()
                .map(|(k, v)| format!("{}: {}", serde_json::to_string(k).unwrap(), py_literal(v)))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    }
}

/// A bare name for `${p}`, an f-string for mixed text, a plain literal otherwise.
fn template_expr(s: &str) -> String {
    let Ok(segs) = parse_template(s) else {
        return serde_json::to_string(s).unwrap();
    };
    match segs.as_slice() {
        [Segment::Param(p)] => p.clone(),
        _ if segs.iter().all(|g| matches!(g, Segment::Text(_))) => serde_json::to_string(
            &segs
                .iter()
                .map(|g| match g {
                    Segment::Text(t) => t.as_str(),
                    Segment::Param(_) => "",
                })
                .collect::<String>(),
        )
        .unwrap(),
        _ => {
            let body: String = segs
                .iter()
                .map(|g| match g {
                    Segment::Text(t) => {
                        let quoted = serde_json::to_string(t).unwrap();
                        quoted[1..quoted.len() - 1]
                            .replace('{', "{{")
                            .replace('}', "}}")
                    }
                    Segment::Param(p) => format!("{{{p}}}"),
                })
                .collect();
            format!("f\"{body}\"")
        }
    }
}

/// Renders the manifest as a Python function whose body calls each tool
/// through a `tools` object and runs scripts through `run_script`.
pub fn render_python(m: &PipelineManifest) -> String {
    let mut out = String::new();
    let mut sig: Vec<String> = m
        .params
        .iter()
        .filter(|p| p.required)
        .map(|p| p.name.clone())
        .collect();
    sig.extend(m.params.iter().filter(|p| !p.required).map(|p| {
        format!(
            "{}={}",
            p.name,
            py_literal(p.default.as_ref().unwrap_or(&Value::Null))
        )
    }));
    let _ = writeln!(out, "def {}(tools, {}):", m.name, sig.join(", "));
    let _ = writeln!(
        out,
        "    {}",
        serde_json::to_string(&m.description).unwrap()
    );
    let _ = writeln!(out, "    print(\"Starting {} execution.\")", m.name);
    for (i, step) in m.steps.iter().enumerate() {
        let _ = writeln!(out, "    # Step {}: {}", i + 1, step.label());
        match step {
            Step::ToolCall { tool, args } => {
                let kwargs: Vec<String> = args
                    .as_object()
                    .map(|o| {
                        o.iter()
                            .map(|(k, v)| format!("{k}={}", py_literal(v)))
                            .collect()
                    })
                    .unwrap_or_default();
                let _ = writeln!(out, "    tools.{tool}({})", kwargs.join(", "));
            }
            Step::Script {
                source, bindings, ..
            } => {
                let _ = writeln!(
                    out,
                    "    source = {}",
                    serde_json::to_string(source).unwrap()
                );
                for b in bindings {
                    let _ = writeln!(
                        out,
                        "    source = source.replace({}, str({}))",
                        serde_json::to_string(&b.literal).unwrap(),
                        b.param
                    );
                }
                let _ = writeln!(out, "    tools.run_script(source)");
            }
        }
    }
    let _ = writeln!(out, "    print(\"Pipeline completed.\")");
    out
}
