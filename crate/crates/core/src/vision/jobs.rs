use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::dataset::SplitReport;
use super::protocol::Op;
use super::transport::AdapterPool;
use super::{AdapterEndpoint, Capability, TaskType, VisionError};
use crate::registry::{ModelZoo, ModelZooEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinetuneMethod {
    Lora,
    Full,
}

impl FinetuneMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            FinetuneMethod::Lora => "lora",
            FinetuneMethod::Full => "full",
        }
    }

    /// Token used in zoo identifiers.
    pub fn zoo_token(self) -> &'static str {
        match self {
            FinetuneMethod::Lora => "lora",
            FinetuneMethod::Full => "fullft",
        }
    }
}

impl std::str::FromStr for FinetuneMethod {
    type Err = VisionError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lora" => Ok(FinetuneMethod::Lora),
            "full" | "fullft" | "full_finetune" => Ok(FinetuneMethod::Full),
            other => Err(VisionError::Adapter {
                code: "bad_request".into(),
                message: format!(
                    "unsupported fine-tuning method `{other}` (expected lora or full)"
                ),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Succeeded,
    Failed,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Succeeded | JobStatus::Failed)
    }

    fn parse(s: &str) -> Option<Self> {
        serde_json::from_value(Value::String(s.to_owned())).ok()
    }
}

/// Everything needed to start a job and later name the resulting model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRequest {
    pub dataset_root: PathBuf,
    pub task_type: TaskType,
    pub base_model: String,
    pub method: FinetuneMethod,
    pub species: String,
    /// Zoo task token, e.g. `nutrient-deficiency-classification`.
    pub task_name: String,
    pub dataset_name: Option<String>,
    /// Opaque to the core; interpreted by the adapter.
    #[serde(default)]
    pub augmentation: Value,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingJob {
    pub job_id: String,
    pub task_type: TaskType,
    pub dataset_root: PathBuf,
    pub method: FinetuneMethod,
    pub base_model: String,
    pub status: JobStatus,
    /// Identifier the model receives in the zoo on success.
    pub model_identifier: String,
    /// The config sent to the adapter, verbatim.
    pub config: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log: Option<String>,
    pub registered: bool,
}

struct Tracked {
    job: TrainingJob,
    endpoint: AdapterEndpoint,
    request: TrainRequest,
}

/// Training jobs started from this process; one active job per endpoint.
pub struct JobTracker {
    endpoint: AdapterEndpoint,
    jobs: Mutex<BTreeMap<String, Tracked>>,
}

impl std::fmt::Debug for JobTracker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JobTracker")
            .field("endpoint", &self.endpoint)
            .finish_non_exhaustive()
    }
}

const LOG_EXCERPT: usize = 2000;

fn excerpt(log: &str) -> String {
    if log.len() <= LOG_EXCERPT {
        return log.to_owned();
    }
    let mut start = log.len() - LOG_EXCERPT;
    while !log.is_char_boundary(start) {
        start += 1;
    }
    format!("...{}", &log[start..])
}

impl JobTracker {
    /// `endpoint` is the adapter that receives training requests.
    pub fn new(endpoint: AdapterEndpoint) -> Self {
        Self {
            endpoint,
            jobs: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn endpoint(&self) -> &AdapterEndpoint {
        &self.endpoint
    }

    pub fn train_model(
        &self,
        pool: &AdapterPool,
        zoo: &ModelZoo,
        request: TrainRequest,
    ) -> Result<TrainingJob, VisionError> {
        let split = SplitReport::load(&request.dataset_root)?;
        if split.task != request.task_type {
            return Err(VisionError::Layout {
                path: request.dataset_root.display().to_string(),
                reason: format!(
                    "dataset was prepared for {} but training requests {}",
                    split.task, request.task_type
                ),
            });
        }
        let probe = ModelZooEntry::new(
            &request.species,
            &request.task_name,
            request.dataset_name.as_deref(),
            &request.base_model,
            Some(request.method.zoo_token()),
            self.endpoint.clone(),
        )?;
        if zoo.find(&probe.identifier)?.is_some() {
            return Err(crate::registry::RegistryError::DuplicateModel(probe.identifier).into());
        }
        let key = self.endpoint.key();
        let mut jobs = self.jobs.lock().expect("job table poisoned");
        if jobs
            .values()
            .any(|t| t.endpoint.key() == key && !t.job.status.is_terminal())
        {
            return Err(VisionError::EndpointBusy(key));
        }
        let client = pool.client(&self.endpoint)?;
        client.require(&self.endpoint, Capability::Train)?;
        let config = json!({
            "task": request.task_type.as_str(),
            "dataset_root": request.dataset_root.display().to_string(),
            "base_model": request.base_model,
            "method": request.method.as_str(),
            "augmentation": request.augmentation,
            "seed": request.seed,
            "checkpoint_name": probe.identifier,
        });
        let reply = client.call(Op::Train, config.clone())?;
        let job_id = reply
            .get("job_id")
            .and_then(Value::as_str)
            .ok_or_else(|| VisionError::InvalidOutput {
                reason: "train response lacks `job_id`".into(),
                diagnostics: reply.to_string(),
            })?
            .to_owned();
        let status = reply
            .get("status")
            .and_then(Value::as_str)
            .and_then(JobStatus::parse)
            .unwrap_or(JobStatus::Queued);
        let job = TrainingJob {
            job_id: job_id.clone(),
            task_type: request.task_type,
            dataset_root: request.dataset_root.clone(),
            method: request.method,
            base_model: request.base_model.clone(),
            status,
            model_identifier: probe.identifier,
            config,
            metrics: None,
            log: None,
            registered: false,
        };
        tracing::info!(job = %job_id, model = %job.model_identifier, "training job submitted");
        jobs.insert(
            job_id,
            Tracked {
                job: job.clone(),
                endpoint: self.endpoint.clone(),
                request,
            },
        );
        Ok(job)
    }

    /// Refreshes a job from its adapter. Status only moves forward; on the
    /// first observed success the model is registered in the zoo.
    pub fn poll_job(
        &self,
        pool: &AdapterPool,
        zoo: &ModelZoo,
        job_id: &str,
    ) -> Result<TrainingJob, VisionError> {
        let mut jobs = self.jobs.lock().expect("job table poisoned");
        let tracked = jobs
            .get_mut(job_id)
            .ok_or_else(|| VisionError::UnknownJob(job_id.to_owned()))?;
        if !tracked.job.status.is_terminal() {
            let client = pool.client(&tracked.endpoint)?;
            let reply = client.call(Op::JobStatus, json!({"job_id": job_id}))?;
            let reported = reply
                .get("status")
                .and_then(Value::as_str)
                .and_then(JobStatus::parse)
                .ok_or_else(|| VisionError::InvalidOutput {
                    reason: "job_status response lacks a valid `status`".into(),
                    diagnostics: reply.to_string(),
                })?;
            if reported > tracked.job.status {
                tracked.job.status = reported;
            }
            if let Some(log) = reply.get("log").and_then(Value::as_str) {
                tracked.job.log = Some(excerpt(log));
            }
            if tracked.job.status == JobStatus::Succeeded {
                tracked.job.metrics = Some(reply.get("metrics").cloned().unwrap_or(json!({})));
            }
        }
        if tracked.job.status == JobStatus::Succeeded && !tracked.job.registered {
            let r = &tracked.request;
            let mut entry = ModelZooEntry::new(
                &r.species,
                &r.task_name,
                r.dataset_name.as_deref(),
                &r.base_model,
                Some(r.method.zoo_token()),
                tracked
                    .endpoint
                    .clone()
                    .with_checkpoint(&tracked.job.model_identifier),
            )?;
            entry.notes = Some(format!(
                "trained by job {job_id}; metrics {}",
                tracked.job.metrics.clone().unwrap_or(Value::Null)
            ));
            zoo.register(entry)?;
            tracked.job.registered = true;
            tracing::info!(job = %job_id, model = %tracked.job.model_identifier, "model registered");
        }
        if tracked.job.status == JobStatus::Failed {
            return Err(VisionError::JobFailed {
                job: job_id.to_owned(),
                log: tracked.job.log.clone().unwrap_or_else(|| "no log".into()),
            });
        }
        Ok(tracked.job.clone())
    }

    pub fn jobs(&self) -> Vec<TrainingJob> {
        self.jobs
            .lock()
            .expect("job table poisoned")
            .values()
            .map(|t| t.job.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vision::prepare_dataset;
    use crate::vision::stub::{StubAdapter, StubMode};
    use std::sync::Arc;

    fn fixture(dir: &std::path::Path) -> PathBuf {
        let root = dir.join("wheat");
        for class in ["healthy", "nitrogen", "phosphorus", "potassium"] {
            std::fs::create_dir_all(root.join(class)).unwrap();
            for i in 0..5 {
                std::fs::write(root.join(class).join(format!("{i}.png")), b"x").unwrap();
            }
        }
        root
    }

    fn request(root: PathBuf, method: FinetuneMethod) -> TrainRequest {
        TrainRequest {
            dataset_root: root,
            task_type: TaskType::Classification,
            base_model: "dinov2b".into(),
            method,
            species: "wheat".into(),
            task_name: "nutrient-deficiency-classification".into(),
            dataset_name: Some("fixture".into()),
            augmentation: json!({"flip": true}),
            seed: 3,
        }
    }

    fn setup(mode: StubMode) -> (tempfile::TempDir, AdapterPool, ModelZoo, JobTracker) {
        let dir = tempfile::tempdir().unwrap();
        let pool = AdapterPool::new();
        pool.register_server("trainer", Arc::new(StubAdapter::new(mode)));
        let zoo = ModelZoo::open(dir.path().join("model_zoo.json")).unwrap();
        let tracker = JobTracker::new(AdapterEndpoint::in_process("trainer"));
        (dir, pool, zoo, tracker)
    }

    #[test]
    fn successful_job_registers_model() {
        let (dir, pool, zoo, tracker) = setup(StubMode::Normal);
        let root = fixture(dir.path());
        prepare_dataset(&root, TaskType::Classification, 0.2, 0).unwrap();
        let job = tracker
            .train_model(&pool, &zoo, request(root, FinetuneMethod::Lora))
            .unwrap();
        assert_eq!(job.config["method"], "lora");
        assert_eq!(job.config["augmentation"], json!({"flip": true}));
        let mut seen = vec![job.status];
        while !seen.last().unwrap().is_terminal() {
            seen.push(tracker.poll_job(&pool, &zoo, &job.job_id).unwrap().status);
        }
        assert!(seen.windows(2).all(|w| w[0] <= w[1]));
        let done = tracker.poll_job(&pool, &zoo, &job.job_id).unwrap();
        assert_eq!(done.status, JobStatus::Succeeded);
        assert!(done.metrics.unwrap().get("val_accuracy").is_some());
        let id = "wheat_nutrient-deficiency-classification_fixture_dinov2b_lora";
        assert!(zoo.find(id).unwrap().is_some());
        assert_eq!(zoo.get_model_zoo().unwrap().len(), 1);
    }

    #[test]
    fn full_finetune_is_recorded_verbatim() {
        let (dir, pool, zoo, tracker) = setup(StubMode::Normal);
        let root = fixture(dir.path());
        prepare_dataset(&root, TaskType::Classification, 0.2, 0).unwrap();
        let job = tracker
            .train_model(&pool, &zoo, request(root, FinetuneMethod::Full))
            .unwrap();
        assert_eq!(job.config["method"], "full");
        assert!(job.model_identifier.ends_with("_dinov2b_fullft"));
    }

    #[test]
    fn one_active_job_per_endpoint() {
        let (dir, pool, zoo, tracker) = setup(StubMode::Normal);
        let root = fixture(dir.path());
        prepare_dataset(&root, TaskType::Classification, 0.2, 0).unwrap();
        tracker
            .train_model(&pool, &zoo, request(root.clone(), FinetuneMethod::Lora))
            .unwrap();
        assert!(matches!(
            tracker.train_model(&pool, &zoo, request(root, FinetuneMethod::Full)),
            Err(VisionError::EndpointBusy(_))
        ));
    }

    #[test]
    fn failures_and_preconditions() {
        let (dir, pool, zoo, tracker) = setup(StubMode::FailTraining);
        let root = fixture(dir.path());
        assert!(matches!(
            tracker.train_model(&pool, &zoo, request(root.clone(), FinetuneMethod::Lora)),
            Err(VisionError::NotPrepared(_))
        ));
        prepare_dataset(&root, TaskType::Classification, 0.2, 0).unwrap();
        let job = tracker
            .train_model(&pool, &zoo, request(root, FinetuneMethod::Lora))
            .unwrap();
        tracker.poll_job(&pool, &zoo, &job.job_id).unwrap();
        match tracker.poll_job(&pool, &zoo, &job.job_id) {
            Err(VisionError::JobFailed { log, .. }) => assert!(log.contains("epoch 1")),
            other => panic!("{other:?}"),
        }
        assert!(zoo.get_model_zoo().unwrap().is_empty());
        assert!(matches!(
            tracker.poll_job(&pool, &zoo, "nope"),
            Err(VisionError::UnknownJob(_))
        ));
    }
}
