//! Hierarchical exemplar retrieval.
//!
//! Stage one embeds the query, takes the `fetch_k` nearest exemplars by
//! cosine similarity, keeps `k` of them by maximal marginal relevance and
//! then gates on problem type. Stage two asks the LLM to rerank those
//! candidates and keeps at most two. Any failure degrades to an empty
//! signal rather than aborting the task.

pub mod embed;
pub mod library;
pub mod mmr;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::agents::{parse, AgentError, Agents, CallLog, CallRecord};
use crate::backend::{roles, CallKey, ChatRequest};
use crate::types::{Exemplar, Task};

pub use embed::{CountingEmbedder, EmbedError, Embedder, HashEmbedder, HttpEmbedder};
pub use library::{parse_library, read_exemplars, write_library, Library, LibraryRecord};
pub use mmr::{cosine, mmr_order, mmr_select, MmrParams};

/// Hard cap on exemplars delivered to an agent.
pub const EXEMPLAR_CAP: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RetrievalError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("library has no valid records")]
    EmptyLibrary,
    #[error("vector dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid retrieval parameters: {0}")]
    InvalidParams(String),
    #[error("corrupt library index: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

impl RetrievalError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        RetrievalError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RetrievalKind {
    Modeling,
    Code,
}

impl RetrievalKind {
    fn rerank_role(self) -> &'static str {
        match self {
            RetrievalKind::Modeling => roles::RERANK_MODELING,
            RetrievalKind::Code => roles::RERANK_CODE,
        }
    }

    fn purpose(self) -> &'static str {
        match self {
            RetrievalKind::Modeling => "mathematical model",
            RetrievalKind::Code => "solver program",
        }
    }
}

/// Exemplars delivered to one agent: either at least one item or the empty signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedSet {
    pub kind: RetrievalKind,
    pub items: Vec<Exemplar>,
    pub empty_signal: bool,
}

impl RetrievedSet {
    pub fn empty(kind: RetrievalKind) -> Self {
        Self {
            kind,
            items: Vec::new(),
            empty_signal: true,
        }
    }

    /// Truncates to `cap` (never above [`EXEMPLAR_CAP`]); no items yields the empty signal.
    pub fn from_items(kind: RetrievalKind, mut items: Vec<Exemplar>, cap: usize) -> Self {
        items.truncate(cap.min(EXEMPLAR_CAP));
        if items.is_empty() {
            return Self::empty(kind);
        }
        Self {
            kind,
            items,
            empty_signal: false,
        }
    }
}

/// Embeds and indexes the library file at `path`.
pub fn load_library(path: &Path, embedder: &dyn Embedder) -> Result<Library, RetrievalError> {
    Library::load(path, embedder, None)
}

/// Case-insensitive match on the full type name or its parenthesized acronym,
/// so a hint of `MILP` matches `Mixed-Integer Linear Programming (MILP)`.
pub fn type_matches(problem_type: &str, hint: &str) -> bool {
    let hint = hint.trim();
    if problem_type.trim().eq_ignore_ascii_case(hint) {
        return true;
    }
    match (problem_type.rfind('('), problem_type.rfind(')')) {
        (Some(open), Some(close)) if open < close => problem_type[open + 1..close].trim().eq_ignore_ascii_case(hint),
        _ => false,
    }
}

/// Best-effort problem-class hint from the advisor's problem-essence insight.
pub fn type_hint_from_essence(essence: &str) -> Option<String> {
    let text = essence.to_lowercase();
    let words: Vec<&str> = text.split(|c: char| !c.is_ascii_alphanumeric()).collect();
    let has = |needle: &str| text.contains(needle);
    let word = |w: &str| words.contains(&w);
    let hint = if has("mixed-integer") || has("mixed integer") || word("milp") || word("mip") {
        "MILP"
    } else if has("nonlinear") || has("non-linear") || has("quadratic") || word("nlp") {
        "NLP"
    } else if has("integer program") || has("integer linear") || has("binary") || word("ip") {
        "IP"
    } else if has("linear program") || word("lp") {
        "LP"
    } else {
        return None;
    };
    Some(hint.to_owned())
}

/// Coarse stage: nearest `fetch_k`, MMR down to `k`, then a non-destructive type filter.
pub fn coarse_retrieve(
    library: &Library,
    embedder: &dyn Embedder,
    query_text: &str,
    params: &MmrParams,
    type_hint: Option<&str>,
) -> Result<Vec<Exemplar>, RetrievalError> {
    params.validate()?;
    if library.is_empty() {
        return Err(RetrievalError::EmptyLibrary);
    }
    let query = embedder
        .embed(&[query_text.to_owned()])?
        .pop()
        .ok_or(EmbedError::Arity { expected: 1, got: 0 })?;
    if query.len() != library.dimension {
        return Err(RetrievalError::DimensionMismatch {
            expected: library.dimension,
            found: query.len(),
        });
    }
    let mut nearest: Vec<(usize, f64)> = library
        .vectors
        .iter()
        .enumerate()
        .map(|(i, v)| (i, cosine(&query, v)))
        .collect();
    // stable sort keeps library order among equal scores
    nearest.sort_by(|a, b| b.1.total_cmp(&a.1));
    nearest.truncate(params.fetch_k);
    let pool: Vec<(usize, Vec<f64>)> = nearest.iter().map(|&(i, _)| (i, library.vectors[i].clone())).collect();
    let picked = mmr_select(&query, &pool, params)?;
    let chosen: Vec<&Exemplar> = picked.iter().map(|&i| &library.exemplars[i]).collect();
    let filtered: Vec<&Exemplar> = match type_hint {
        Some(hint) => {
            let matching: Vec<&Exemplar> = chosen.iter().copied().filter(|e| type_matches(&e.problem_type, hint)).collect();
            if matching.is_empty() {
                chosen
            } else {
                matching
            }
        }
        None => chosen,
    };
    Ok(filtered.into_iter().cloned().collect())
}

fn truncate_chars(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((idx, _)) => format!("{}...", &s[..idx]),
        None => s.to_owned(),
    }
}

fn render_candidates(candidates: &[Exemplar]) -> String {
    candidates
        .iter()
        .enumerate()
        .map(|(i, e)| {
            format!(
                "[{i}] type: {} | subtype: {}\n{}",
                e.problem_type,
                e.problem_subtype,
                truncate_chars(&e.prompt, 800)
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Parses a rerank reply: a JSON list of indices, or of `{index, score}` objects.
/// With scores on every entry the list is ordered by descending score.
pub fn parse_rerank_reply(reply: &str, candidate_count: usize) -> Result<Vec<usize>, String> {
    let v = parse::parse_json(reply)?;
    let items = v.as_array().ok_or("rerank reply is not a JSON list")?;
    let mut picks: Vec<(usize, Option<f64>)> = Vec::new();
    for item in items {
        let (index, score) = match item {
            Value::Number(n) => (n.as_u64(), None),
            Value::Object(o) => (o.get("index").and_then(Value::as_u64), o.get("score").and_then(Value::as_f64)),
            _ => (None, None),
        };
        let index = index.ok_or_else(|| format!("rerank entry {item} has no index"))? as usize;
        if index < candidate_count && !picks.iter().any(|(i, _)| *i == index) {
            picks.push((index, score));
        }
    }
    if !picks.is_empty() && picks.iter().all(|(_, s)| s.is_some()) {
        picks.sort_by(|a, b| b.1.unwrap().total_cmp(&a.1.unwrap()));
    }
    Ok(picks.into_iter().map(|(i, _)| i).collect())
}

/// Fine stage: one LLM call chooses among the coarse candidates.
pub fn rerank(
    agents: &Agents,
    log: &mut CallLog,
    candidates: &[Exemplar],
    task: &Task,
    kind: RetrievalKind,
    cap: usize,
) -> RetrievedSet {
    if candidates.is_empty() {
        return RetrievedSet::empty(kind);
    }
    let role = kind.rerank_role();
    let template = &agents.templates().rerank;
    let bindings = BTreeMap::from([
        ("problem_description", task.text.clone()),
        ("purpose", kind.purpose().to_owned()),
        ("candidates", render_candidates(candidates)),
        ("cap", cap.min(EXEMPLAR_CAP).to_string()),
    ]);
    let outcome = template
        .render(&bindings)
        .map_err(AgentError::from)
        .and_then(|user_text| {
            let settings = agents.settings();
            let request = ChatRequest {
                system_text: template.role_description.clone(),
                user_text,
                model_name: settings.model_name.clone(),
                temperature: settings.temperature,
                max_retries: settings.max_retries,
            };
            agents
                .backend()
                .complete(&CallKey::new(&log.task_id, role, 0), &request)
                .map_err(AgentError::from)
        })
        .and_then(|reply| {
            parse_rerank_reply(&reply, candidates.len()).map_err(|message| AgentError::ReplyParse {
                role: role.to_owned(),
                message,
            })
        });
    log.calls.push(CallRecord {
        role: role.to_owned(),
        round: 0,
        attempt: 0,
        error: outcome.as_ref().err().map(ToString::to_string),
    });
    match outcome {
        Ok(indices) => {
            let items = indices.into_iter().map(|i| candidates[i].clone()).collect();
            RetrievedSet::from_items(kind, items, cap)
        }
        Err(e) => {
            tracing::warn!(task = %log.task_id, role, "rerank degraded to empty signal: {e}");
            RetrievedSet::empty(kind)
        }
    }
}
