use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde_json::{json, Value};

use super::client::{AnnotateRequest, ClientError, ExpertClient, JudgeRequest, RefineRequest};

/// Append-only JSONL sink shared by wrapped clients.
#[derive(Debug, Clone)]
pub struct TrafficLog {
    file: Arc<Mutex<File>>,
}

impl TrafficLog {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { file: Arc::new(Mutex::new(file)) })
    }

    fn write(&self, entry: Value) {
        let mut line = entry.to_string();
        line.push('\n');
        let mut f = self.file.lock().unwrap_or_else(|p| p.into_inner());
        if let Err(e) = f.write_all(line.as_bytes()) {
            tracing::warn!(error = %e, "jury traffic log write failed");
        }
    }
}

/// Records every request and reply of the inner client.
pub struct LoggingClient<C> {
    inner: C,
    log: TrafficLog,
}

impl<C: ExpertClient> LoggingClient<C> {
    pub fn new(inner: C, log: TrafficLog) -> Self {
        Self { inner, log }
    }

    fn record<T: serde::Serialize>(&self, op: &str, request: Value, out: &Result<T, ClientError>) {
        let outcome = match out {
            Ok(v) => json!({ "ok": v }),
            Err(e) => json!({ "error": e.to_string() }),
        };
        self.log.write(json!({ "juror": self.inner.name(), "op": op, "request": request, "reply": outcome }));
    }
}

impl<C: ExpertClient> ExpertClient for LoggingClient<C> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn annotate(&self, req: &AnnotateRequest) -> Result<String, ClientError> {
        let out = self.inner.annotate(req);
        let request = json!({ "image": req.image.id, "kind": req.prompt.kind, "label": req.prompt.label, "prompt": req.prompt.text });
        self.record("annotate", request, &out);
        out
    }

    fn judge(&self, req: &JudgeRequest) -> Result<f64, ClientError> {
        let out = self.inner.judge(req);
        self.record("judge", json!({ "image": req.image.id, "label": req.label, "rubric": req.rubric }), &out);
        out
    }

    fn refine(&self, req: &RefineRequest) -> Result<String, ClientError> {
        let out = self.inner.refine(req);
        self.record("refine", json!({ "prompt": req.prompt }), &out);
        out
    }
}
