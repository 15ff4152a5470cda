//! Deterministic stand-in adapter.
//!
//! Segmentation returns a rosette of elliptical leaves whose count, size and
//! orientation derive from a hash of the file name and checkpoint; image
//! dimensions come from the PNG header. Classification and regression outputs
//! are hash-derived too. Training jobs advance one state per status poll.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Mutex;

use serde_json::{json, Value};

use super::protocol::{handle_line, Op, Request, Response};
use super::transport::AdapterServer;
use crate::imaging::png_dimensions;
use crate::llm::fnv1a_hash;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StubMode {
    #[default]
    Normal,
    /// Writes only the first half of the segmentation JSON.
    TruncatedOutput,
    /// Every training job ends in `failed`.
    FailTraining,
}

#[derive(Debug, Clone)]
struct StubJob {
    task: String,
    seed: u64,
    status: &'static str,
    classes: Vec<String>,
    checkpoint: Option<String>,
}

#[derive(Debug, Default)]
pub struct StubAdapter {
    mode: StubMode,
    jobs: Mutex<HashMap<String, StubJob>>,
    counter: Mutex<u64>,
    /// Class names learned by finished classification jobs, by checkpoint.
    labels: Mutex<HashMap<String, Vec<String>>>,
}

const DEFAULT_LABELS: [&str; 2] = ["healthy", "stressed"];

fn file_name(path: &str) -> String {
    Path::new(path)
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_owned())
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Leaf polygons for one image, deterministic in `(name, checkpoint)`.
pub fn rosette(name: &str, checkpoint: &str, width: u32, height: u32) -> Vec<Vec<f64>> {
    let h = fnv1a_hash(format!("{checkpoint}/{name}").as_bytes());
    let n = 3 + (h % 6) as usize;
    let (w, hh) = (f64::from(width), f64::from(height));
    let (cx, cy) = (w / 2.0, hh / 2.0);
    let r = 0.3 * w.min(hh);
    let phase = ((h >> 8) % 100) as f64 / 100.0 * 0.5;
    (0..n)
        .map(|i| {
            let theta = 2.0 * PI * i as f64 / n as f64 + phase;
            let stretch = 0.8 + 0.4 * ((h >> (12 + 4 * (i % 12))) % 16) as f64 / 15.0;
            let a = 0.45 * r * stretch;
            let b = 0.18 * r;
            let (ox, oy) = (
                cx + 0.55 * r * stretch * theta.cos(),
                cy + 0.55 * r * stretch * theta.sin(),
            );
            (0..12)
                .flat_map(|k| {
                    let t = 2.0 * PI * k as f64 / 12.0;
                    let (ex, ey) = (a * t.cos(), b * t.sin());
                    let x = ox + ex * theta.cos() - ey * theta.sin();
                    let y = oy + ex * theta.sin() + ey * theta.cos();
                    [round2(x.clamp(0.0, w)), round2(y.clamp(0.0, hh))]
                })
                .collect()
        })
        .collect()
}

fn shoelace(flat: &[f64]) -> f64 {
    let n = flat.len() / 2;
    let mut acc = 0.0;
    for i in 0..n {
        let j = (i + 1) % n;
        acc += flat[2 * i] * flat[2 * j + 1] - flat[2 * j] * flat[2 * i + 1];
    }
    (acc / 2.0).abs()
}

impl StubAdapter {
    pub fn new(mode: StubMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    fn capabilities(&self, id: u64) -> Response {
        Response::success(
            id,
            json!({"adapter": "stub", "protocol_version": 1,
                   "capabilities": ["segment", "classify", "regress", "train"]}),
        )
    }

    fn images(payload: &Value) -> Result<Vec<String>, String> {
        payload
            .get("images")
            .and_then(Value::as_array)
            .ok_or("payload.images must be an array of paths")?
            .iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_owned)
                    .ok_or_else(|| "image paths must be strings".to_string())
            })
            .collect()
    }

    fn segment(&self, id: u64, payload: &Value) -> Response {
        let images = match Self::images(payload) {
            Ok(i) => i,
            Err(e) => return Response::failure(id, "bad_request", e),
        };
        let Some(output) = payload.get("output_path").and_then(Value::as_str) else {
            return Response::failure(id, "bad_request", "payload.output_path is required");
        };
        let checkpoint = payload
            .get("checkpoint")
            .and_then(Value::as_str)
            .unwrap_or("");
        let mut coco_images = Vec::new();
        let mut annotations = Vec::new();
        for (i, path) in images.iter().enumerate() {
            let (w, h) = match png_dimensions(path) {
                Ok(d) => d,
                Err(e) => return Response::failure(id, "bad_image", e.to_string()),
            };
            let name = file_name(path);
            coco_images.push(json!({"id": i + 1, "file_name": name, "width": w, "height": h}));
            for poly in rosette(&name, checkpoint, w, h) {
                let xs = poly.iter().step_by(2);
                let ys = poly.iter().skip(1).step_by(2);
                let (x0, x1) = xs.fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
                let (y0, y1) = ys.fold((f64::MAX, f64::MIN), |(a, b), &y| (a.min(y), b.max(y)));
                annotations.push(json!({
                    "id": annotations.len() + 1,
                    "image_id": i + 1,
                    "category_id": 1,
                    "segmentation": [poly.clone()],
                    "area": round2(shoelace(&poly)),
                    "bbox": [x0, y0, round2(x1 - x0), round2(y1 - y0)],
                    "score": 0.95,
                }));
            }
        }
        let doc = json!({
            "images": coco_images,
            "annotations": annotations,
            "categories": [{"id": 1, "name": "leaf"}],
        });
        let mut bytes = serde_json::to_vec_pretty(&doc).expect("json serializes");
        if self.mode == StubMode::TruncatedOutput {
            bytes.truncate(bytes.len() / 2);
        }
        if let Some(parent) = Path::new(output).parent() {
            if let Err(e) = std::fs::create_dir_all(parent) {
                return Response::failure(id, "io", e.to_string());
            }
        }
        if let Err(e) = std::fs::write(output, bytes) {
            return Response::failure(id, "io", e.to_string());
        }
        Response::success(
            id,
            json!({"output_path": output, "images": images.len(), "instances": annotations.len()}),
        )
    }

    fn predict(&self, id: u64, payload: &Value, task: &str) -> Response {
        let images = match Self::images(payload) {
            Ok(i) => i,
            Err(e) => return Response::failure(id, "bad_request", e),
        };
        let checkpoint = payload
            .get("checkpoint")
            .and_then(Value::as_str)
            .unwrap_or("");
        let labels: Vec<String> = self
            .labels
            .lock()
            .expect("labels poisoned")
            .get(checkpoint)
            .cloned()
            .unwrap_or_else(|| DEFAULT_LABELS.iter().map(|s| s.to_string()).collect());
        let mut predictions = Vec::new();
        for path in &images {
            if !Path::new(path).is_file() {
                return Response::failure(id, "bad_image", format!("{path}: not found"));
            }
            let name = file_name(path);
            let h = fnv1a_hash(format!("{checkpoint}/{name}").as_bytes());
            predictions.push(if task == "classification" {
                json!({"file_name": name, "label": labels[(h % labels.len() as u64) as usize],
                       "confidence": 0.5 + ((h >> 16) % 50) as f64 / 100.0})
            } else {
                json!({"file_name": name, "value": ((h >> 16) % 1000) as f64 / 10.0})
            });
        }
        Response::success(id, json!({"predictions": predictions}))
    }

    fn train(&self, id: u64, payload: &Value) -> Response {
        let Some(root) = payload.get("dataset_root").and_then(Value::as_str) else {
            return Response::failure(id, "bad_request", "payload.dataset_root is required");
        };
        let split_path = Path::new(root).join("split.json");
        let split: Value = match std::fs::read_to_string(&split_path)
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
        {
            Some(v) => v,
            None => {
                return Response::failure(
                    id,
                    "not_prepared",
                    format!("{} is missing or unreadable", split_path.display()),
                )
            }
        };
        let method = payload.get("method").and_then(Value::as_str).unwrap_or("");
        if !matches!(method, "lora" | "full") {
            return Response::failure(id, "bad_request", format!("unsupported method `{method}`"));
        }
        let classes = split
            .get("per_class")
            .and_then(Value::as_object)
            .map(|m| m.keys().cloned().collect())
            .unwrap_or_default();
        let mut counter = self.counter.lock().expect("counter poisoned");
        *counter += 1;
        let job_id = format!("stub-job-{}", *counter);
        self.jobs.lock().expect("jobs poisoned").insert(
            job_id.clone(),
            StubJob {
                task: payload
                    .get("task")
                    .and_then(Value::as_str)
                    .unwrap_or("")
                    .to_owned(),
                seed: payload.get("seed").and_then(Value::as_u64).unwrap_or(0),
                status: "queued",
                classes,
                checkpoint: payload
                    .get("checkpoint_name")
                    .and_then(Value::as_str)
                    .map(str::to_owned),
            },
        );
        Response::success(id, json!({"job_id": job_id, "status": "queued"}))
    }

    fn job_status(&self, id: u64, payload: &Value) -> Response {
        let Some(job_id) = payload.get("job_id").and_then(Value::as_str) else {
            return Response::failure(id, "bad_request", "payload.job_id is required");
        };
        let mut jobs = self.jobs.lock().expect("jobs poisoned");
        let Some(job) = jobs.get_mut(job_id) else {
            return Response::failure(id, "unknown_job", format!("no job `{job_id}`"));
        };
        job.status = match (job.status, self.mode) {
            ("queued", _) => "running",
            ("running", StubMode::FailTraining) => "failed",
            ("running", _) => "succeeded",
            (terminal, _) => terminal,
        };
        let mut body = json!({"job_id": job_id, "status": job.status});
        match job.status {
            "succeeded" => {
                let jitter = (job.seed % 20) as f64 / 100.0;
                body["metrics"] = match job.task.as_str() {
                    "classification" => {
                        json!({"val_accuracy": 0.75 + jitter, "val_macro_f1": 0.7 + jitter})
                    }
                    "regression" => json!({"val_r2": 0.7 + jitter, "val_rmse": 1.0 - jitter}),
                    _ => json!({"val_map50": 0.6 + jitter}),
                };
                body["log"] = json!("stub trainer finished");
                if let (Some(ckpt), false) = (&job.checkpoint, job.classes.is_empty()) {
                    self.labels
                        .lock()
                        .expect("labels poisoned")
                        .insert(ckpt.clone(), job.classes.clone());
                }
            }
            "failed" => body["log"] = json!("stub trainer: simulated failure during epoch 1"),
            _ => {}
        }
        Response::success(id, body)
    }
}

impl AdapterServer for StubAdapter {
    fn handle(&self, request: Request) -> Response {
        let id = request.id;
        match request.op {
            Op::Capabilities => self.capabilities(id),
            Op::Infer => match request.payload.get("task").and_then(Value::as_str) {
                Some("instance_segmentation") => self.segment(id, &request.payload),
                Some(t @ ("classification" | "regression")) => {
                    self.predict(id, &request.payload, t)
                }
                other => Response::failure(
                    id,
                    "unsupported_task",
                    format!("cannot infer task {other:?}"),
                ),
            },
            Op::Train => self.train(id, &request.payload),
            Op::JobStatus => self.job_status(id, &request.payload),
        }
    }
}

/// Serves requests line by line until end of input.
pub fn serve_stdio(
    server: &dyn AdapterServer,
    input: impl BufRead,
    mut output: impl Write,
) -> std::io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = handle_line(&line, |req| server.handle(req));
        serde_json::to_writer(&mut output, &resp)?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}
