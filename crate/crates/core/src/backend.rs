//! Chat-completion backends.
//!
//! Every call is addressed by a [`CallKey`] (task, role, round, attempt). The
//! HTTP backend ignores the key beyond logging; the scripted and replay
//! backends use it to look up a fixed reply, which makes whole pipeline runs
//! reproducible byte for byte.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_MODEL: &str = "qwen-plus-2025-09-11";
pub const DEFAULT_API_KEY_ENV: &str = "NL2OPT_API_KEY";
pub const DEFAULT_MAX_RETRIES: u32 = 2;
pub const DEFAULT_REQUEST_TIMEOUT: Duration = Duration::from_secs(120);
pub const DEFAULT_BACKOFF: Duration = Duration::from_millis(500);

/// Role names used as the first half of a scripted key.
pub mod roles {
    pub const PARAM_EXTRACTOR: &str = "param_extractor";
    pub const MODELING_ADVISOR: &str = "modeling_advisor";
    pub const MODELING_EXPERT: &str = "modeling_expert";
    pub const CODE_EXPERT: &str = "code_expert";
    pub const MODEL_REVISION: &str = "model_revision";
    pub const CODE_REVISION: &str = "code_revision";
    pub const RERANK_MODELING: &str = "rerank_modeling";
    pub const RERANK_CODE: &str = "rerank_code";
    pub const LIBRARY_LABELER: &str = "library_labeler";
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("backend unavailable after {attempts} attempt(s): {last_error}")]
    Unavailable { attempts: u32, last_error: String },
    #[error("no scripted reply for task {task_id:?}, role {role:?}, round {round}, attempt {attempt}")]
    ScriptExhausted {
        task_id: String,
        role: String,
        round: u32,
        attempt: u32,
    },
    #[error("backend configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CallKey {
    pub task_id: String,
    pub role: String,
    pub round: u32,
    /// 0 for the first call, 1 for the single repair reprompt.
    pub attempt: u32,
}

impl CallKey {
    pub fn new(task_id: &str, role: &str, round: u32) -> Self {
        Self {
            task_id: task_id.to_owned(),
            role: role.to_owned(),
            round,
            attempt: 0,
        }
    }

    pub fn retry(&self) -> Self {
        Self {
            attempt: self.attempt + 1,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_text: String,
    pub user_text: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_retries: u32,
}

impl ChatRequest {
    pub fn new(system_text: impl Into<String>, user_text: impl Into<String>) -> Self {
        Self {
            system_text: system_text.into(),
            user_text: user_text.into(),
            model_name: DEFAULT_MODEL.to_owned(),
            temperature: 0.0,
            max_retries: DEFAULT_MAX_RETRIES,
        }
    }
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, key: &CallKey, request: &ChatRequest) -> Result<String, BackendError>;

    /// Keys of every call made so far, in arrival order.
    fn request_log(&self) -> Vec<CallKey>;
}

#[derive(Debug, Default)]
struct RequestLog(Mutex<Vec<CallKey>>);

impl RequestLog {
    fn push(&self, key: &CallKey) {
        self.0.lock().expect("request log poisoned").push(key.clone());
    }

    fn snapshot(&self) -> Vec<CallKey> {
        self.0.lock().expect("request log poisoned").clone()
    }
}

/// Configuration-level description of a backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendKind {
    Http { endpoint: String, api_key_env: String },
    Replay { trace_path: PathBuf },
}

/// Speaks the common chat-completions wire shape over HTTP.
pub struct HttpBackend {
    endpoint: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    backoff: Duration,
    log: RequestLog,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: Vec<WireMessage<'a>>,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireReply,
}

#[derive(Deserialize)]
struct WireReply {
    content: Option<String>,
}

impl HttpBackend {
    /// Reads the API key from `api_key_env`; a missing variable leaves the
    /// request unauthenticated, which suits local OpenAI-compatible servers.
    pub fn new(endpoint: impl Into<String>, api_key_env: &str, timeout: Duration) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.into(),
            api_key: std::env::var(api_key_env).ok().filter(|k| !k.is_empty()),
            client,
            backoff: DEFAULT_BACKOFF,
            log: RequestLog::default(),
        })
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    fn attempt(&self, request: &ChatRequest) -> Result<String, (bool, String)> {
        let body = WireRequest {
            model: &request.model_name,
            temperature: request.temperature,
            messages: vec![
                WireMessage {
                    role: "system",
                    content: &request.system_text,
                },
                WireMessage {
                    role: "user",
                    content: &request.user_text,
                },
            ],
        };
        let mut builder = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|e| (true, e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            let transient = status.is_server_error() || status.as_u16() == 429;
            let text = response.text().unwrap_or_default();
            return Err((transient, format!("HTTP {status}: {text}")));
        }
        let parsed: WireResponse = response.json().map_err(|e| (false, format!("malformed reply: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| (false, "reply has no first choice content".to_owned()))
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, key: &CallKey, request: &ChatRequest) -> Result<String, BackendError> {
        self.log.push(key);
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(request) {
                Ok(text) => return Ok(text),
                Err((transient, last_error)) => {
                    if !transient || attempts > request.max_retries {
                        return Err(BackendError::Unavailable { attempts, last_error });
                    }
                    let delay = self.backoff * 2u32.saturating_pow(attempts - 1);
                    tracing::warn!(role = %key.role, attempts, ?delay, "chat request failed: {last_error}");
                    thread::sleep(delay);
                }
            }
        }
    }

    fn request_log(&self) -> Vec<CallKey> {
        self.log.snapshot()
    }
}

#[derive(Debug, Clone, Default)]
struct ScriptEntry {
    replies: Vec<String>,
    repeat_last: bool,
}

/// Replies looked up by `(role, round)` and the attempt index.
///
/// Entries registered for a specific task id take precedence over shared
/// entries, so one backend can serve a whole benchmark suite without tasks
/// seeing each other's replies. Lookup is pure; the only mutable state is the
/// request log.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    shared: HashMap<(String, u32), ScriptEntry>,
    per_task: HashMap<(String, String, u32), ScriptEntry>,
    log: RequestLog,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ReplayLine {
    #[serde(default)]
    task_id: Option<String>,
    role: String,
    round: u32,
    reply: String,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds the next reply for `(role, round)`; successive calls script the
    /// repair reprompt and beyond.
    pub fn reply(mut self, role: &str, round: u32, text: impl Into<String>) -> Self {
        self.shared
            .entry((role.to_owned(), round))
            .or_default()
            .replies
            .push(text.into());
        self
    }

    /// Like [`reply`](Self::reply) but only for one task id.
    pub fn task_reply(mut self, task_id: &str, role: &str, round: u32, text: impl Into<String>) -> Self {
        self.per_task
            .entry((task_id.to_owned(), role.to_owned(), round))
            .or_default()
            .replies
            .push(text.into());
        self
    }

    /// Makes `(role, round)` answer every attempt with its last scripted reply.
    pub fn repeatable(mut self, role: &str, round: u32) -> Self {
        if let Some(entry) = self.shared.get_mut(&(role.to_owned(), round)) {
            entry.repeat_last = true;
        }
        self
    }

    pub fn add_reply(&mut self, task_id: Option<&str>, role: &str, round: u32, text: String) {
        let entry = match task_id {
            Some(t) => self.per_task.entry((t.to_owned(), role.to_owned(), round)).or_default(),
            None => self.shared.entry((role.to_owned(), round)).or_default(),
        };
        entry.replies.push(text);
    }

    /// Loads a replay file: JSONL of `{role, round, reply}` with an optional
    /// `task_id`. Repeated keys are successive attempts in file order.
    pub fn from_replay_file(path: &Path) -> Result<Self, BackendError> {
        let text = fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("reading {}: {e}", path.display())))?;
        Self::from_replay_str(&text)
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))
    }

    pub fn from_replay_str(text: &str) -> Result<Self, String> {
        let mut backend = Self::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let record: ReplayLine =
                serde_json::from_str(line).map_err(|e| format!("line {}: {e}", idx + 1))?;
            backend.add_reply(record.task_id.as_deref(), &record.role, record.round, record.reply);
        }
        Ok(backend)
    }

    fn lookup(&self, key: &CallKey) -> Option<&str> {
        let entry = self
            .per_task
            .get(&(key.task_id.clone(), key.role.clone(), key.round))
            .or_else(|| self.shared.get(&(key.role.clone(), key.round)))?;
        let idx = key.attempt as usize;
        match entry.replies.get(idx) {
            Some(r) => Some(r),
            None if entry.repeat_last => entry.replies.last().map(String::as_str),
            None => None,
        }
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, key: &CallKey, _request: &ChatRequest) -> Result<String, BackendError> {
        self.log.push(key);
        self.lookup(key).map(str::to_owned).ok_or_else(|| BackendError::ScriptExhausted {
            task_id: key.task_id.clone(),
            role: key.role.clone(),
            round: key.round,
            attempt: key.attempt,
        })
    }

    fn request_log(&self) -> Vec<CallKey> {
        self.log.snapshot()
    }
}
