use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use holmes_core::data::{append_jsonl, load_jsonl, save_jsonl, DataError, Record};
use holmes_core::evalkit::{elo_run, EloConfig, EloTable, EvalError, VoteRecord, Winner};
use holmes_core::jury::{JuryError, SuggestionRecord, TaskStatus};
use serde::{Deserialize, Serialize};

use crate::ServiceConfig;

pub const TASKS_FILE: &str = "tasks.jsonl";
pub const VOTES_FILE: &str = "votes.jsonl";
pub const ARENA_FILE: &str = "arena.jsonl";

/// One model's explanation of one image, offered in the arena.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArenaEntry {
    pub id: String,
    pub image_id: String,
    pub model: String,
    pub explanation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_url: Option<String>,
}

impl ArenaEntry {
    pub fn new(image_id: &str, model: &str, explanation: &str) -> Self {
        Self {
            id: format!("{image_id}/{model}"),
            image_id: image_id.into(),
            model: model.into(),
            explanation: explanation.into(),
            image_url: None,
        }
    }
}

impl Record for ArenaEntry {
    fn id(&self) -> &str {
        &self.id
    }

    fn validate(&self, _: &Path) -> Result<(), String> {
        if self.image_id.trim().is_empty() || self.model.trim().is_empty() || self.explanation.trim().is_empty() {
            return Err("image_id, model and explanation must be non-empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

impl From<EvalError> for StoreError {
    fn from(e: EvalError) -> Self {
        StoreError::Invalid(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lease {
    pub session: String,
    pub expires: Instant,
}

/// A pair served by the arena and not yet voted on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Match {
    pub match_id: String,
    pub image_id: String,
    pub image_url: Option<String>,
    #[serde(skip)]
    pub model_a: String,
    #[serde(skip)]
    pub model_b: String,
    pub explanation_a: String,
    pub explanation_b: String,
}

/// What readers see; replaced wholesale after every mutation.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub tasks: Vec<SuggestionRecord>,
    pub elo: EloTable,
    pub votes: usize,
}

struct Inner {
    tasks: Vec<SuggestionRecord>,
    leases: HashMap<String, Lease>,
    votes: Vec<VoteRecord>,
    pairs: Vec<(usize, usize)>,
    cursor: usize,
    open_matches: HashMap<String, Match>,
}

/// Serializes every mutation of the task queue and the vote log and
/// persists it before answering.
#[derive(Clone)]
pub struct Coordinator {
    inner: Arc<Mutex<Inner>>,
    snapshot: Arc<RwLock<Arc<Snapshot>>>,
    arena: Arc<Vec<ArenaEntry>>,
    dir: PathBuf,
    lease: Duration,
    elo: EloConfig,
}

fn load_or_empty<R: Record>(path: &Path) -> Result<Vec<R>, DataError> {
    if path.exists() {
        load_jsonl(path)
    } else {
        Ok(Vec::new())
    }
}

impl Coordinator {
    pub fn open(cfg: &ServiceConfig) -> Result<Self, StoreError> {
        cfg.elo.validate()?;
        std::fs::create_dir_all(&cfg.data_dir).map_err(|e| DataError::io(&cfg.data_dir, e))?;
        let tasks: Vec<SuggestionRecord> = load_or_empty(&cfg.data_dir.join(TASKS_FILE))?;
        let votes: Vec<VoteRecord> = load_or_empty(&cfg.data_dir.join(VOTES_FILE))?;
        let mut arena: Vec<ArenaEntry> = load_or_empty(&cfg.data_dir.join(ARENA_FILE))?;
        arena.sort_by(|a, b| (&a.image_id, &a.model).cmp(&(&b.image_id, &b.model)));
        let elo = elo_run(&votes, &cfg.elo)?;
        let snapshot = Snapshot { tasks: tasks.clone(), elo, votes: votes.len() };
        Ok(Self {
            inner: Arc::new(Mutex::new(Inner {
                tasks,
                leases: HashMap::new(),
                votes,
                pairs: arena_pairs(&arena),
                cursor: 0,
                open_matches: HashMap::new(),
            })),
            snapshot: Arc::new(RwLock::new(Arc::new(snapshot))),
            arena: Arc::new(arena),
            dir: cfg.data_dir.clone(),
            lease: cfg.lease,
            elo: cfg.elo,
        })
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().expect("coordinator lock")
    }

    fn publish(&self, inner: &Inner) -> Result<(), StoreError> {
        let elo = elo_run(&inner.votes, &self.elo)?;
        let snap = Snapshot { tasks: inner.tasks.clone(), elo, votes: inner.votes.len() };
        *self.snapshot.write().expect("snapshot lock") = Arc::new(snap);
        Ok(())
    }

    fn save_tasks(&self, tasks: &[SuggestionRecord]) -> Result<(), StoreError> {
        // Write then rename so a crash never leaves a truncated queue.
        let tmp = self.dir.join(format!("{TASKS_FILE}.tmp"));
        let path = self.dir.join(TASKS_FILE);
        save_jsonl(tasks, &tmp)?;
        std::fs::rename(&tmp, &path).map_err(|e| DataError::io(&path, e))?;
        Ok(())
    }

    fn holder<'a>(inner: &'a Inner, id: &str, now: Instant) -> Option<&'a Lease> {
        inner.leases.get(id).filter(|l| l.expires > now)
    }

    /// Leases the first pending task that no other session holds.
    pub fn next_task(&self, session: &str) -> Option<(SuggestionRecord, Lease)> {
        let mut inner = self.lock();
        let now = Instant::now();
        let idx = inner.tasks.iter().position(|t| {
            t.status == TaskStatus::Pending && Self::holder(&inner, &t.item_id, now).is_none_or(|l| l.session == session)
        })?;
        let lease = Lease { session: session.to_string(), expires: now + self.lease };
        let task = inner.tasks[idx].clone();
        inner.leases.insert(task.item_id.clone(), lease.clone());
        Some((task, lease))
    }

    pub fn lease_task(&self, id: &str, session: &str) -> Result<(SuggestionRecord, Lease), StoreError> {
        let mut inner = self.lock();
        let now = Instant::now();
        let task = inner.tasks.iter().find(|t| t.item_id == id).cloned().ok_or_else(|| unknown_task(id))?;
        if task.status != TaskStatus::Pending {
            return Err(StoreError::Conflict(format!("task {id} is {}", task.status)));
        }
        if let Some(l) = Self::holder(&inner, id, now).filter(|l| l.session != session) {
            return Err(StoreError::Conflict(format!("task {id} is leased by {}", l.session)));
        }
        let lease = Lease { session: session.to_string(), expires: now + self.lease };
        inner.leases.insert(id.to_string(), lease.clone());
        Ok((task, lease))
    }

    /// pending → suggested, persisted before returning.
    pub fn submit_suggestion(&self, id: &str, session: &str, text: &str) -> Result<SuggestionRecord, StoreError> {
        let mut inner = self.lock();
        let now = Instant::now();
        let idx = inner.tasks.iter().position(|t| t.item_id == id).ok_or_else(|| unknown_task(id))?;
        if text.trim().is_empty() {
            return Err(StoreError::Invalid("suggestion text is empty".into()));
        }
        if let Some(l) = Self::holder(&inner, id, now).filter(|l| l.session != session) {
            return Err(StoreError::Conflict(format!("task {id} is leased by {}", l.session)));
        }
        let mut updated = inner.tasks.clone();
        updated[idx].suggest(text).map_err(|e| match e {
            JuryError::Status { .. } => StoreError::Conflict(e.to_string()),
            other => StoreError::Invalid(other.to_string()),
        })?;
        self.save_tasks(&updated)?;
        inner.tasks = updated;
        inner.leases.remove(id);
        self.publish(&inner)?;
        Ok(inner.tasks[idx].clone())
    }

    /// The next arena pair, cycling through every (image, model pair) and
    /// swapping sides on alternate rounds.
    pub fn next_match(&self) -> Option<Match> {
        let mut inner = self.lock();
        if inner.pairs.is_empty() {
            return None;
        }
        let n = inner.pairs.len();
        let (mut i, mut j) = inner.pairs[inner.cursor % n];
        if (inner.cursor / n) % 2 == 1 {
            std::mem::swap(&mut i, &mut j);
        }
        inner.cursor += 1;
        let (a, b) = (&self.arena[i], &self.arena[j]);
        let m = Match {
            match_id: uuid::Uuid::new_v4().to_string(),
            image_id: a.image_id.clone(),
            image_url: a.image_url.clone().or_else(|| b.image_url.clone()),
            model_a: a.model.clone(),
            model_b: b.model.clone(),
            explanation_a: a.explanation.clone(),
            explanation_b: b.explanation.clone(),
        };
        inner.open_matches.insert(m.match_id.clone(), m.clone());
        Some(m)
    }

    /// Appends a vote for a served match. The first vote for a match id wins.
    pub fn vote(&self, match_id: &str, winner: &str) -> Result<VoteRecord, StoreError> {
        let winner = Winner::parse(winner)?;
        let mut inner = self.lock();
        if inner.votes.iter().any(|v| v.match_id == match_id) {
            return Err(StoreError::Conflict(format!("match {match_id} already has a vote")));
        }
        let m = inner
            .open_matches
            .get(match_id)
            .ok_or_else(|| StoreError::NotFound(format!("no open match {match_id}")))?;
        let vote = VoteRecord { match_id: match_id.to_string(), model_a: m.model_a.clone(), model_b: m.model_b.clone(), winner };
        append_jsonl(&vote, &self.dir.join(VOTES_FILE))?;
        inner.open_matches.remove(match_id);
        inner.votes.push(vote.clone());
        self.publish(&inner)?;
        Ok(vote)
    }

    pub fn models(&self) -> Vec<String> {
        let mut m: Vec<String> = self.arena.iter().map(|e| e.model.clone()).collect();
        m.sort();
        m.dedup();
        m
    }
}

fn unknown_task(id: &str) -> StoreError {
    StoreError::NotFound(format!("no task {id}"))
}

/// Index pairs of entries sharing an image, in image then model order.
fn arena_pairs(arena: &[ArenaEntry]) -> Vec<(usize, usize)> {
    let mut by_image: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in arena.iter().enumerate() {
        by_image.entry(&e.image_id).or_default().push(i);
    }
    let mut pairs = Vec::new();
    for idx in by_image.values() {
        for (k, &i) in idx.iter().enumerate() {
            for &j in &idx[k + 1..] {
                pairs.push((i, j));
            }
        }
    }
    pairs
}
