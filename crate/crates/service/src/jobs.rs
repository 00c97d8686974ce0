//! Single-worker training queue. Jobs run one at a time on a dedicated
//! thread; their model ids are reserved in the store at submission.

use std::collections::HashMap;
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread;

use previs_core::pipeline::{train_model_into, TrainRequest};
use previs_core::regressors::RegressorKind;
use previs_core::store::{ArtifactKind, ArtifactStore};
use previs_core::{PrevisError, Result};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobStatus {
    pub model_id: String,
    pub kind: RegressorKind,
    pub state: JobState,
    pub epoch: usize,
    pub epochs: usize,
    pub loss: Option<f64>,
    pub losses: Vec<f64>,
    pub error: Option<String>,
    /// Epoch at which training diverged.
    pub failed_epoch: Option<usize>,
}

struct Job {
    model_id: String,
    request: TrainRequest,
}

type JobTable = Arc<Mutex<HashMap<String, JobStatus>>>;

pub struct TrainingQueue {
    tx: Mutex<mpsc::Sender<Job>>,
    jobs: JobTable,
    store: Arc<ArtifactStore>,
}

fn update(jobs: &JobTable, id: &str, f: impl FnOnce(&mut JobStatus)) {
    let mut table = jobs.lock().unwrap_or_else(|e| e.into_inner());
    if let Some(status) = table.get_mut(id) {
        f(status);
    }
}

impl TrainingQueue {
    pub fn start(store: Arc<ArtifactStore>) -> Self {
        let (tx, rx) = mpsc::channel::<Job>();
        let jobs: JobTable = Arc::default();
        let worker_jobs = jobs.clone();
        let worker_store = store.clone();
        thread::Builder::new()
            .name("previs-trainer".into())
            .spawn(move || {
                for job in rx {
                    run_job(&worker_store, &worker_jobs, job);
                }
            })
            .expect("spawn training worker");
        Self {
            tx: Mutex::new(tx),
            jobs,
            store,
        }
    }

    /// Validates the request, reserves a model id and enqueues the job.
    pub fn submit(&self, request: TrainRequest) -> Result<String> {
        let opt = request.optimizer_config()?;
        if ArtifactStore::kind_of(&request.ensemble_id)? != ArtifactKind::Ensemble || !self.store.exists(&request.ensemble_id) {
            return Err(PrevisError::NotFound(request.ensemble_id.clone()));
        }
        let model_id = self.store.reserve(ArtifactKind::Model)?;
        self.jobs.lock().unwrap_or_else(|e| e.into_inner()).insert(
            model_id.clone(),
            JobStatus {
                model_id: model_id.clone(),
                kind: request.kind,
                state: JobState::Queued,
                epoch: 0,
                epochs: opt.epochs,
                loss: None,
                losses: Vec::new(),
                error: None,
                failed_epoch: None,
            },
        );
        tracing::info!(%model_id, kind = %request.kind, ensemble = %request.ensemble_id, "training job queued");
        self.tx
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .send(Job {
                model_id: model_id.clone(),
                request,
            })
            .map_err(|_| PrevisError::invalid("training worker has stopped"))?;
        Ok(model_id)
    }

    pub fn status(&self, model_id: &str) -> Option<JobStatus> {
        self.jobs.lock().unwrap_or_else(|e| e.into_inner()).get(model_id).cloned()
    }
}

fn run_job(store: &ArtifactStore, jobs: &JobTable, job: Job) {
    let id = job.model_id.as_str();
    update(jobs, id, |s| s.state = JobState::Running);
    let result = train_model_into(store, id, &job.request, |p| {
        update(jobs, id, |s| {
            s.epoch = p.epoch;
            s.loss = Some(p.loss);
            s.losses.push(p.loss);
        })
    });
    match result {
        Ok(_) => {
            tracing::info!(model_id = id, "training completed");
            update(jobs, id, |s| s.state = JobState::Completed);
        }
        Err(e) => {
            tracing::warn!(model_id = id, error = %e, "training failed");
            update(jobs, id, |s| {
                s.state = JobState::Failed;
                if let PrevisError::Divergence { epoch, .. } = e {
                    s.failed_epoch = Some(epoch);
                }
                s.error = Some(e.to_string());
            });
        }
    }
}
