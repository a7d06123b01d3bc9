use crate::error::{decode, AppError};
use crate::AppState;
use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::Json;
use molgrow_api::{ErrorKind, JobCreated, JobRequest, JobResult, JobState, JobStatus, ProgressEvent};
use molgrow_core::jobs::{run_design, run_pretrain, JobError};
use molgrow_core::learner::StopReason;
use serde::Deserialize;
use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

struct Job {
    cancel: AtomicBool,
    inner: Mutex<JobInner>,
}

struct JobInner {
    state: JobState,
    events: Vec<ProgressEvent>,
    result: Option<JobResult>,
    error: Option<molgrow_api::ApiError>,
}

impl Job {
    fn push(&self, e: ProgressEvent) {
        self.inner.lock().unwrap_or_else(|p| p.into_inner()).events.push(e);
    }

    fn finish(&self, outcome: Result<JobResult, JobError>) {
        let mut inner = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        match outcome {
            Ok(r) => {
                let cancelled = matches!(&r, JobResult::Design(s) if s.stop == StopReason::Cancelled);
                inner.state = if cancelled {
                    JobState::Cancelled
                } else {
                    JobState::Succeeded
                };
                inner.result = Some(r);
            }
            Err(e) => {
                tracing::warn!(error = %e, "job failed");
                inner.state = JobState::Failed;
                inner.error = Some(AppError::from(&e).0);
            }
        }
    }
}

/// In-memory table of jobs started by this process.
#[derive(Default)]
pub struct JobRegistry {
    next: AtomicU64,
    jobs: Mutex<HashMap<u64, Arc<Job>>>,
}

impl JobRegistry {
    fn insert(&self) -> (u64, Arc<Job>) {
        let id = self.next.fetch_add(1, Ordering::SeqCst) + 1;
        let job = Arc::new(Job {
            cancel: AtomicBool::new(false),
            inner: Mutex::new(JobInner {
                state: JobState::Running,
                events: Vec::new(),
                result: None,
                error: None,
            }),
        });
        self.jobs
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id, job.clone());
        (id, job)
    }

    fn get(&self, id: u64) -> Result<Arc<Job>, AppError> {
        self.jobs
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .get(&id)
            .cloned()
            .ok_or_else(|| AppError::new(ErrorKind::NotFound, format!("no job {id}")))
    }
}

fn execute(job: &Job, req: JobRequest) -> Result<JobResult, JobError> {
    match req {
        JobRequest::Design {
            config,
            checkpoint,
            output_dir,
        } => {
            let ckpt = checkpoint.map(PathBuf::from);
            let summary = run_design(&config, ckpt.as_deref(), &PathBuf::from(output_dir), &mut |p| {
                job.push(ProgressEvent::Design(p.clone()));
                !job.cancel.load(Ordering::SeqCst)
            })?;
            Ok(JobResult::Design(summary))
        }
        JobRequest::Pretrain { config, corpus, out } => {
            let summary = run_pretrain(&config, &corpus, &PathBuf::from(out), &mut |e| {
                job.push(ProgressEvent::Pretrain(*e));
            })?;
            for r in &summary.rejected {
                job.push(ProgressEvent::Rejected(r.clone()));
            }
            Ok(JobResult::Pretrain(summary))
        }
    }
}

pub async fn create(
    State(state): State<AppState>,
    body: Bytes,
) -> Result<(StatusCode, Json<JobCreated>), AppError> {
    let req: JobRequest = decode(&body)?;
    let (id, job) = state.jobs.insert();
    tracing::info!(id, "job started");
    tokio::task::spawn_blocking(move || {
        let outcome = execute(&job, req);
        job.finish(outcome);
        tracing::info!(id, "job finished");
    });
    Ok((StatusCode::ACCEPTED, Json(JobCreated { id })))
}

#[derive(Deserialize)]
pub struct Since {
    #[serde(default)]
    since: usize,
}

pub async fn status(
    State(state): State<AppState>,
    Path(id): Path<u64>,
    Query(q): Query<Since>,
) -> Result<Json<JobStatus>, AppError> {
    let job = state.jobs.get(id)?;
    let inner = job.inner.lock().unwrap_or_else(|p| p.into_inner());
    let from = q.since.min(inner.events.len());
    Ok(Json(JobStatus {
        id,
        state: inner.state,
        events: inner.events[from..].to_vec(),
        next: inner.events.len(),
        result: inner.result.clone(),
        error: inner.error.clone(),
    }))
}

pub async fn cancel(
    State(state): State<AppState>,
    Path(id): Path<u64>,
) -> Result<StatusCode, AppError> {
    state.jobs.get(id)?.cancel.store(true, Ordering::SeqCst);
    Ok(StatusCode::ACCEPTED)
}
