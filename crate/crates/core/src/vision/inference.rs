use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use super::protocol::Op;
use super::transport::{AdapterClient, AdapterPool};
use super::{Capability, TaskType, VisionError};
use crate::geometry::load_segmentation;
use crate::numfmt::format_sig;
use crate::registry::{ModelZoo, ModelZooEntry};
use crate::table::Table;
use crate::workspace::Workspace;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferenceOutput {
    /// Relative to the workspace root.
    pub path: String,
    pub images: usize,
    pub checkpoint: String,
}

/// Finds a zoo entry by identifier, by adapter-side checkpoint name, or by
/// the identifier after a `namespace/` prefix.
pub fn resolve_checkpoint(zoo: &ModelZoo, checkpoint: &str) -> Result<ModelZooEntry, VisionError> {
    let entries = zoo.get_model_zoo()?;
    let bare = checkpoint.rsplit('/').next().unwrap_or(checkpoint);
    entries
        .iter()
        .find(|e| e.identifier == checkpoint)
        .or_else(|| {
            entries
                .iter()
                .find(|e| e.adapter.checkpoint.as_deref() == Some(checkpoint))
        })
        .or_else(|| entries.iter().find(|e| e.identifier == bare))
        .cloned()
        .ok_or_else(|| VisionError::UnknownCheckpoint(checkpoint.to_owned()))
}

fn is_image(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref(),
        Some("png" | "jpg" | "jpeg")
    )
}

fn images_in_dir(dir: &Path) -> Result<Vec<PathBuf>, VisionError> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| VisionError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image(p))
        .collect();
    out.sort();
    Ok(out)
}

/// Expands the inference input: a list of image paths, a directory, a
/// single image, or a metadata table (JSON records or CSV) with a
/// `file_name` column naming images beside it or in an `images/` subfolder.
pub fn collect_images(ws: &Workspace, inputs: &Value) -> Result<Vec<PathBuf>, VisionError> {
    let resolve_existing = |p: &str| -> Result<PathBuf, VisionError> {
        let path = ws.resolve(p)?;
        if path.exists() {
            Ok(path)
        } else {
            Err(VisionError::MissingInput(p.to_owned()))
        }
    };
    match inputs {
        Value::Array(items) => items
            .iter()
            .map(|v| {
                let p = v
                    .as_str()
                    .ok_or_else(|| VisionError::MissingInput(v.to_string()))?;
                let path = resolve_existing(p)?;
                if path.is_file() {
                    Ok(path)
                } else {
                    Err(VisionError::MissingInput(p.to_owned()))
                }
            })
            .collect(),
        Value::String(p) => {
            let path = resolve_existing(p)?;
            if path.is_dir() {
                return images_in_dir(&path);
            }
            if is_image(&path) {
                return Ok(vec![path]);
            }
            let table = Table::read(&path).map_err(|e| VisionError::Layout {
                path: p.clone(),
                reason: e.to_string(),
            })?;
            let col = table.column("file_name").map_err(|e| VisionError::Layout {
                path: p.clone(),
                reason: e.to_string(),
            })?;
            let base = path.parent().unwrap_or(ws.root()).to_path_buf();
            table
                .rows
                .iter()
                .map(|row| {
                    let name = row.get(col).cloned().unwrap_or_default();
                    [base.join(&name), base.join("images").join(&name)]
                        .into_iter()
                        .find(|c| c.is_file())
                        .ok_or(VisionError::MissingInput(name))
                })
                .collect()
        }
        other => Err(VisionError::MissingInput(format!(
            "expected a path or a list of paths, got {other}"
        ))),
    }
}

fn staging_dir(parent: &Path) -> PathBuf {
    parent.join(format!(".staging-{}", uuid::Uuid::new_v4().simple()))
}

fn adapter_checkpoint(entry: &ModelZooEntry) -> String {
    entry
        .adapter
        .checkpoint
        .clone()
        .unwrap_or_else(|| entry.identifier.clone())
}

fn base_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn invalid(client: &AdapterClient, reason: impl Into<String>, extra: &str) -> VisionError {
    let mut diagnostics = client.diagnostics();
    if !extra.is_empty() {
        if !diagnostics.is_empty() {
            diagnostics.push_str("; ");
        }
        diagnostics.push_str(extra);
    }
    if diagnostics.is_empty() {
        diagnostics = "none".into();
    }
    VisionError::InvalidOutput {
        reason: reason.into(),
        diagnostics,
    }
}

/// Runs instance segmentation and writes `{output_dir}/ins_seg_results.json`.
/// The file only appears once the adapter output has passed validation.
pub fn infer_instance_segmentation(
    pool: &AdapterPool,
    zoo: &ModelZoo,
    ws: &Workspace,
    inputs: &Value,
    checkpoint: &str,
    output_dir: &str,
) -> Result<InferenceOutput, VisionError> {
    let entry = resolve_checkpoint(zoo, checkpoint)?;
    let images = collect_images(ws, inputs)?;
    let client = pool.client(&entry.adapter)?;
    client.require(&entry.adapter, Capability::Segment)?;
    let out_dir = ws.resolve(output_dir)?;
    std::fs::create_dir_all(&out_dir).map_err(|e| VisionError::io(&out_dir, e))?;
    let staging = staging_dir(&out_dir);
    std::fs::create_dir_all(&staging).map_err(|e| VisionError::io(&staging, e))?;
    let staged = staging.join("ins_seg_results.json");
    let result = (|| {
        let reply = client.call(
            Op::Infer,
            json!({
                "task": TaskType::InstanceSegmentation.as_str(),
                "checkpoint": adapter_checkpoint(&entry),
                "images": images.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
                "output_path": staged.display().to_string(),
            }),
        )?;
        let seg = load_segmentation(&staged)
            .map_err(|e| invalid(&client, e.to_string(), &reply.to_string()))?;
        for img in &images {
            let name = base_name(img);
            if !seg.images.iter().any(|i| i.file_name == name) {
                return Err(invalid(
                    &client,
                    format!("result does not cover input image `{name}`"),
                    &reply.to_string(),
                ));
            }
        }
        let target = out_dir.join("ins_seg_results.json");
        std::fs::rename(&staged, &target).map_err(|e| VisionError::io(&target, e))?;
        Ok(target)
    })();
    let _ = std::fs::remove_dir_all(&staging);
    let target = result?;
    tracing::info!(checkpoint = %entry.identifier, images = images.len(), "segmentation done");
    Ok(InferenceOutput {
        path: ws.relative(&target),
        images: images.len(),
        checkpoint: entry.identifier,
    })
}

fn predict_table(
    pool: &AdapterPool,
    zoo: &ModelZoo,
    ws: &Workspace,
    inputs: &Value,
    checkpoint: &str,
    output_path: &str,
    task: TaskType,
) -> Result<InferenceOutput, VisionError> {
    let entry = resolve_checkpoint(zoo, checkpoint)?;
    let images = collect_images(ws, inputs)?;
    let client = pool.client(&entry.adapter)?;
    client.require(&entry.adapter, task.capability())?;
    let target = ws.resolve(output_path)?;
    let headers: Vec<String> = match task {
        TaskType::Classification => vec!["file_name".into(), "label".into(), "confidence".into()],
        _ => vec!["file_name".into(), "value".into()],
    };
    let mut table = Table::new(headers);
    if !images.is_empty() {
        let reply = client.call(
            Op::Infer,
            json!({
                "task": task.as_str(),
                "checkpoint": adapter_checkpoint(&entry),
                "images": images.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            }),
        )?;
        let preds = reply
            .get("predictions")
            .and_then(Value::as_array)
            .ok_or_else(|| invalid(&client, "response lacks `predictions`", &reply.to_string()))?;
        if preds.len() != images.len() {
            return Err(invalid(
                &client,
                format!("{} predictions for {} images", preds.len(), images.len()),
                "",
            ));
        }
        for (img, p) in images.iter().zip(preds) {
            let name = base_name(img);
            if p.get("file_name").and_then(Value::as_str) != Some(name.as_str()) {
                return Err(invalid(
                    &client,
                    format!("prediction order mismatch at `{name}`"),
                    &p.to_string(),
                ));
            }
            let row = match task {
                TaskType::Classification => {
                    let label = p
                        .get("label")
                        .and_then(Value::as_str)
                        .filter(|l| !l.is_empty());
                    let conf = p
                        .get("confidence")
                        .and_then(Value::as_f64)
                        .filter(|c| (0.0..=1.0).contains(c));
                    match (label, conf) {
                        (Some(l), Some(c)) => vec![name, l.to_owned(), format_sig(c)],
                        _ => {
                            return Err(invalid(
                                &client,
                                format!("bad classification row for `{name}`"),
                                &p.to_string(),
                            ))
                        }
                    }
                }
                _ => match p
                    .get("value")
                    .and_then(Value::as_f64)
                    .filter(|v| v.is_finite())
                {
                    Some(v) => vec![name, format_sig(v)],
                    None => {
                        return Err(invalid(
                            &client,
                            format!("bad regression value for `{name}`"),
                            &p.to_string(),
                        ))
                    }
                },
            };
            table.rows.push(row);
        }
    }
    let parent = target.parent().unwrap_or(ws.root()).to_path_buf();
    std::fs::create_dir_all(&parent).map_err(|e| VisionError::io(&parent, e))?;
    let partial = parent.join(format!(".{}.partial", base_name(&target)));
    std::fs::write(&partial, table.to_csv_string()).map_err(|e| VisionError::io(&partial, e))?;
    std::fs::rename(&partial, &target).map_err(|e| VisionError::io(&target, e))?;
    Ok(InferenceOutput {
        path: ws.relative(&target),
        images: images.len(),
        checkpoint: entry.identifier,
    })
}

/// Writes a `file_name,label,confidence` CSV.
pub fn infer_classification(
    pool: &AdapterPool,
    zoo: &ModelZoo,
    ws: &Workspace,
    inputs: &Value,
    checkpoint: &str,
    output_path: &str,
) -> Result<InferenceOutput, VisionError> {
    predict_table(
        pool,
        zoo,
        ws,
        inputs,
        checkpoint,
        output_path,
        TaskType::Classification,
    )
}

/// Writes a `file_name,value` CSV.
pub fn infer_regression(
    pool: &AdapterPool,
    zoo: &ModelZoo,
    ws: &Workspace,
    inputs: &Value,
    checkpoint: &str,
    output_path: &str,
) -> Result<InferenceOutput, VisionError> {
    predict_table(
        pool,
        zoo,
        ws,
        inputs,
        checkpoint,
        output_path,
        TaskType::Regression,
    )
}
