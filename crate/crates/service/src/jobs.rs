//! In-memory impression job table with TTL eviction.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use base64::Engine;
use serde::Serialize;
use tokio::sync::{mpsc, Semaphore};

use nnviz_core::impressions::{impress_with_progress, ImpressionConfig, ImpressionTrace};
use nnviz_core::nn::Model;
use nnviz_core::render;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceBody {
    pub logits: Vec<f32>,
    pub tv: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImpressionResult {
    /// Base-64 PNG of the final image.
    pub image: String,
    pub trace: TraceBody,
    pub initial_logit: f32,
    pub final_logit: f32,
    pub final_confidence: f32,
}

impl ImpressionResult {
    fn from_trace(t: &ImpressionTrace) -> Option<Self> {
        let png = render::encode_png(&render::tensor_to_pixmap(&t.image).ok()?).ok()?;
        Some(Self {
            image: base64::engine::general_purpose::STANDARD.encode(png),
            trace: TraceBody {
                logits: t.logits.clone(),
                tv: t.tv.clone(),
            },
            initial_logit: t.initial_logit,
            final_logit: t.final_logit,
            final_confidence: t.final_confidence,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobRecord {
    pub id: String,
    pub kind: &'static str,
    pub status: JobStatus,
    pub class: usize,
    pub class_name: String,
    pub config: ImpressionConfig,
    /// Iterations completed so far.
    pub progress: usize,
    /// Unix milliseconds.
    pub created_ms: u64,
    pub started_ms: Option<u64>,
    pub finished_ms: Option<u64>,
    pub error: Option<String>,
    pub result: Option<ImpressionResult>,
}

struct Entry {
    record: JobRecord,
    finished_at: Option<Instant>,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// Jobs run at most `max_running` at a time; the rest wait in submission
/// order. Finished jobs are dropped `ttl` after they finish.
pub struct JobTable {
    jobs: Mutex<HashMap<String, Entry>>,
    next: AtomicU64,
    ttl: Duration,
    slots: Arc<Semaphore>,
    queue: mpsc::UnboundedSender<Pending>,
    /// Taken by the dispatcher on first submit.
    inbox: Mutex<Option<mpsc::UnboundedReceiver<Pending>>>,
}

struct Pending {
    id: String,
    model: Arc<Model>,
    class: usize,
    config: ImpressionConfig,
}

impl JobTable {
    pub fn new(ttl: Duration, max_running: usize) -> Self {
        let (queue, inbox) = mpsc::unbounded_channel();
        Self {
            jobs: Mutex::new(HashMap::new()),
            next: AtomicU64::new(1),
            ttl,
            slots: Arc::new(Semaphore::new(max_running.max(1))),
            queue,
            inbox: Mutex::new(Some(inbox)),
        }
    }

    fn sweep(&self, jobs: &mut HashMap<String, Entry>) {
        let ttl = self.ttl;
        jobs.retain(|_, e| e.finished_at.is_none_or(|t| t.elapsed() < ttl));
    }

    fn update(&self, id: &str, f: impl FnOnce(&mut Entry)) {
        if let Some(e) = self.jobs.lock().expect("job table poisoned").get_mut(id) {
            f(e);
        }
    }

    pub fn get(&self, id: &str) -> Option<JobRecord> {
        let mut jobs = self.jobs.lock().expect("job table poisoned");
        self.sweep(&mut jobs);
        jobs.get(id).map(|e| e.record.clone())
    }

    pub fn len(&self) -> usize {
        let mut jobs = self.jobs.lock().expect("job table poisoned");
        self.sweep(&mut jobs);
        jobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Queues an impression run and returns its id. Must be called inside a tokio runtime;
    /// the first call starts the dispatcher.
    pub fn submit(self: &Arc<Self>, model: Arc<Model>, class: usize, config: ImpressionConfig) -> String {
        let id = format!("job-{}", self.next.fetch_add(1, Ordering::Relaxed));
        let record = JobRecord {
            id: id.clone(),
            kind: "impression",
            status: JobStatus::Queued,
            class,
            class_name: model.spec().classes[class].clone(),
            config,
            progress: 0,
            created_ms: now_ms(),
            started_ms: None,
            finished_ms: None,
            error: None,
            result: None,
        };
        {
            let mut jobs = self.jobs.lock().expect("job table poisoned");
            self.sweep(&mut jobs);
            jobs.insert(
                id.clone(),
                Entry {
                    record,
                    finished_at: None,
                },
            );
        }
        if let Some(mut inbox) = self.inbox.lock().expect("job table poisoned").take() {
            let table = Arc::clone(self);
            tokio::spawn(async move {
                while let Some(p) = inbox.recv().await {
                    let Ok(permit) = Arc::clone(&table.slots).acquire_owned().await else {
                        return;
                    };
                    let t = Arc::clone(&table);
                    tokio::spawn(async move {
                        t.run(p).await;
                        drop(permit);
                    });
                }
            });
        }
        let _ = self.queue.send(Pending {
            id: id.clone(),
            model,
            class,
            config,
        });
        id
    }

    async fn run(self: Arc<Self>, p: Pending) {
        let Pending { id, model, class, config } = p;
        self.update(&id, |e| {
            e.record.status = JobStatus::Running;
            e.record.started_ms = Some(now_ms());
        });
        let worker = Arc::clone(&self);
        let wid = id.clone();
        let run = tokio::task::spawn_blocking(move || {
            impress_with_progress(&model, class, &config, |it, _| {
                worker.update(&wid, |e| e.record.progress = it + 1);
            })
        })
        .await;
        let outcome = match run {
            Ok(Ok(trace)) => ImpressionResult::from_trace(&trace).ok_or_else(|| "could not encode image".to_string()),
            Ok(Err(e)) => Err(e.to_string()),
            Err(_) => Err("impression worker panicked".to_string()),
        };
        self.update(&id, |e| {
            match outcome {
                Ok(r) => {
                    e.record.status = JobStatus::Done;
                    e.record.result = Some(r);
                }
                Err(msg) => {
                    e.record.status = JobStatus::Failed;
                    e.record.error = Some(msg);
                }
            }
            e.record.finished_ms = Some(now_ms());
            e.finished_at = Some(Instant::now());
        });
    }
}
