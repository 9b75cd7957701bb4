//! Record library (accepted answers) and experience base (rejected answers).
//!
//! Every task owns one store of each kind. Entries are question/answer pairs
//! keyed by the embedding of the question; retrieval ranks them by cosine
//! similarity to the query, ties going to the older entry.

use std::cmp::Ordering as CmpOrdering;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::ExecMode;
use crate::gateway::{EmbeddingVector, Embedder, GatewayError};
use crate::types::Task;

/// Default similarity an experience entry needs before it is shown.
pub const DEFAULT_TAU: f64 = 0.80;
pub const DEFAULT_K: usize = 1;

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("cosine similarity of a zero vector is undefined")]
    ZeroVector,
    #[error("k must be at least 1")]
    ZeroK,
    #[error(transparent)]
    Embed(#[from] GatewayError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoreKind {
    RecordLibrary,
    ExperienceBase,
}

impl StoreKind {
    pub fn outcome(self) -> Outcome {
        match self {
            StoreKind::RecordLibrary => Outcome::Success,
            StoreKind::ExperienceBase => Outcome::Failure,
        }
    }

    pub fn file_stem(self) -> &'static str {
        match self {
            StoreKind::RecordLibrary => "records",
            StoreKind::ExperienceBase => "experience",
        }
    }

    fn short(self) -> &'static str {
        match self {
            StoreKind::RecordLibrary => "rl",
            StoreKind::ExperienceBase => "eb",
        }
    }
}

impl std::str::FromStr for StoreKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "record" | "records" | "record_library" | "rl" => Ok(StoreKind::RecordLibrary),
            "experience" | "experience_base" | "eb" => Ok(StoreKind::ExperienceBase),
            other => Err(format!("unknown store kind {other:?} (expected records|experience)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Success,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub id: String,
    pub task: Task,
    pub question: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub outcome: Outcome,
    pub created_ordinal: u64,
    pub embedding: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub entry: MemoryEntry,
    pub similarity: f64,
}

/// `a·b / (‖a‖‖b‖)`.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, MemoryError> {
    if a.dim() != b.dim() {
        return Err(MemoryError::DimMismatch(a.dim(), b.dim()));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.values().iter().zip(b.values()) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(MemoryError::ZeroVector);
    }
    Ok(dot / (na * nb).sqrt())
}

/// Inclusive similarity gate for experience entries.
pub fn gate_experience(result: &RetrievalResult, threshold: f64) -> bool {
    result.similarity >= threshold
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryStore {
    kind: StoreKind,
    task: Task,
    entries: Vec<MemoryEntry>,
}

impl MemoryStore {
    pub fn new(kind: StoreKind, task: Task) -> Self {
        Self {
            kind,
            task,
            entries: Vec::new(),
        }
    }

    pub fn kind(&self) -> StoreKind {
        self.kind
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn next_ordinal(&self) -> u64 {
        self.entries.last().map_or(1, |e| e.created_ordinal + 1)
    }

    pub fn add_entry(
        &mut self,
        question: &str,
        answer: &str,
        reason: Option<&str>,
        embedder: &dyn Embedder,
    ) -> Result<&MemoryEntry, MemoryError> {
        let embedding = embedder.embed(question)?;
        let ordinal = self.next_ordinal();
        self.entries.push(MemoryEntry {
            id: format!("{}-{}-{:04}", self.task, self.kind.short(), ordinal),
            task: self.task,
            question: question.to_string(),
            answer: answer.to_string(),
            reason: reason.map(str::to_string),
            outcome: self.kind.outcome(),
            created_ordinal: ordinal,
            embedding,
        });
        Ok(self.entries.last().expect("just pushed"))
    }

    pub fn retrieve_top_k(&self, query: &str, k: usize, embedder: &dyn Embedder) -> Result<Vec<RetrievalResult>, MemoryError> {
        if k == 0 {
            return Err(MemoryError::ZeroK);
        }
        if self.entries.is_empty() {
            return Ok(Vec::new());
        }
        let q = embedder.embed(query)?;
        self.retrieve_top_k_by_vector(&q, k, ExecMode::Sequential)
    }

    /// Rank entries against an already-embedded query.
    pub fn retrieve_top_k_by_vector(
        &self,
        query: &EmbeddingVector,
        k: usize,
        mode: ExecMode,
    ) -> Result<Vec<RetrievalResult>, MemoryError> {
        if k == 0 {
            return Err(MemoryError::ZeroK);
        }
        let scores = mode.map(&self.entries, |e| cosine_similarity(query, &e.embedding));
        let mut ranked = Vec::with_capacity(scores.len());
        for (idx, s) in scores.into_iter().enumerate() {
            ranked.push((idx, s?));
        }
        ranked.sort_by(|(ia, sa), (ib, sb)| {
            sb.partial_cmp(sa)
                .unwrap_or(CmpOrdering::Equal)
                .then_with(|| self.entries[*ia].created_ordinal.cmp(&self.entries[*ib].created_ordinal))
        });
        Ok(ranked
            .into_iter()
            .take(k)
            .map(|(idx, similarity)| RetrievalResult {
                entry: self.entries[idx].clone(),
                similarity,
            })
            .collect())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("memory entries serialize"));
            out.push('\n');
        }
        out
    }

    /// Write atomically (temp file + rename).
    pub fn persist(&self, path: impl AsRef<Path>) -> Result<(), MemoryError> {
        let path = path.as_ref();
        let io = |source| MemoryError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let tmp = path.with_extension("jsonl.tmp");
        {
            let mut f = fs::File::create(&tmp).map_err(io)?;
            f.write_all(self.to_jsonl().as_bytes()).map_err(io)?;
            f.sync_all().map_err(io)?;
        }
        fs::rename(&tmp, path).map_err(io)
    }

    pub fn parse_jsonl(text: &str, kind: StoreKind, task: Task, path: &Path) -> Result<Self, MemoryError> {
        let err = |line: usize, message: String| MemoryError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut store = MemoryStore::new(kind, task);
        let n_lines = text.lines().count();
        if !text.is_empty() && !text.ends_with('\n') {
            return Err(err(n_lines, "truncated final line".into()));
        }
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let entry: MemoryEntry = serde_json::from_str(line).map_err(|e| err(line_no, e.to_string()))?;
            if entry.task != task {
                return Err(err(line_no, format!("entry belongs to {}, store is {task}", entry.task)));
            }
            if entry.outcome != kind.outcome() {
                return Err(err(line_no, format!("{:?} entry in a {:?} store", entry.outcome, kind)));
            }
            if let Some(prev) = store.entries.last() {
                if entry.created_ordinal <= prev.created_ordinal {
                    return Err(err(line_no, "created_ordinal is not increasing".into()));
                }
                if entry.embedding.dim() != prev.embedding.dim() {
                    return Err(err(line_no, "embedding dimension changed".into()));
                }
            }
            store.entries.push(entry);
        }
        Ok(store)
    }

    pub fn load(path: impl AsRef<Path>, kind: StoreKind, task: Task) -> Result<Self, MemoryError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| MemoryError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_jsonl(&text, kind, task, path)
    }
}

pub fn store_file_name(kind: StoreKind, task: Task) -> String {
    format!("{}_task{}.jsonl", kind.file_stem(), task.number())
}

/// All six stores plus a retrieval counter.
#[derive(Debug)]
pub struct MemoryBank {
    records: [MemoryStore; 3],
    experience: [MemoryStore; 3],
    retrievals: AtomicU64,
}

impl Default for MemoryBank {
    fn default() -> Self {
        Self::new()
    }
}

impl Clone for MemoryBank {
    fn clone(&self) -> Self {
        Self {
            records: self.records.clone(),
            experience: self.experience.clone(),
            retrievals: AtomicU64::new(self.retrievals()),
        }
    }
}

impl PartialEq for MemoryBank {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records && self.experience == other.experience
    }
}

fn slot(task: Task) -> usize {
    usize::from(task.number() - 1)
}

impl MemoryBank {
    pub fn new() -> Self {
        Self {
            records: Task::ALL.map(|t| MemoryStore::new(StoreKind::RecordLibrary, t)),
            experience: Task::ALL.map(|t| MemoryStore::new(StoreKind::ExperienceBase, t)),
            retrievals: AtomicU64::new(0),
        }
    }

    pub fn store(&self, task: Task, kind: StoreKind) -> &MemoryStore {
        match kind {
            StoreKind::RecordLibrary => &self.records[slot(task)],
            StoreKind::ExperienceBase => &self.experience[slot(task)],
        }
    }

    pub fn store_mut(&mut self, task: Task, kind: StoreKind) -> &mut MemoryStore {
        match kind {
            StoreKind::RecordLibrary => &mut self.records[slot(task)],
            StoreKind::ExperienceBase => &mut self.experience[slot(task)],
        }
    }

    /// Retrieval through the bank; counted for strategy-separation checks.
    pub fn retrieve(
        &self,
        task: Task,
        kind: StoreKind,
        query: &str,
        k: usize,
        embedder: &dyn Embedder,
    ) -> Result<Vec<RetrievalResult>, MemoryError> {
        self.retrievals.fetch_add(1, Ordering::Relaxed);
        self.store(task, kind).retrieve_top_k(query, k, embedder)
    }

    pub fn retrievals(&self) -> u64 {
        self.retrievals.load(Ordering::Relaxed)
    }

    /// `(record_count, experience_count)` for one task.
    pub fn snapshot_counts(&self, task: Task) -> (usize, usize) {
        (self.records[slot(task)].len(), self.experience[slot(task)].len())
    }

    pub fn total_counts(&self) -> (usize, usize) {
        Task::ALL.iter().fold((0, 0), |(r, e), t| {
            let (dr, de) = self.snapshot_counts(*t);
            (r + dr, e + de)
        })
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), MemoryError> {
        let dir = dir.as_ref();
        for store in self.records.iter().chain(&self.experience) {
            store.persist(dir.join(store_file_name(store.kind, store.task)))?;
        }
        Ok(())
    }

    /// Load every store from `dir`; missing files give empty stores.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, MemoryError> {
        let dir = dir.as_ref();
        let mut bank = Self::new();
        for task in Task::ALL {
            for kind in [StoreKind::RecordLibrary, StoreKind::ExperienceBase] {
                let path = dir.join(store_file_name(kind, task));
                if path.exists() {
                    *bank.store_mut(task, kind) = MemoryStore::load(&path, kind, task)?;
                }
            }
        }
        Ok(bank)
    }
}
