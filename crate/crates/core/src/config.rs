//! Settings file (TOML) and construction of the pipeline's dependencies.
//!
//! Precedence is command line over file over built-in defaults. Relative
//! paths are resolved against the working directory.
//!
//! ```toml
//! templates_dir = "prompts"
//! global_journal = "out/global.jsonl"
//!
//! [backend]
//! kind = "http"
//! endpoint = "http://localhost:8000/v1/chat/completions"
//!
//! [pipeline]
//! max_revisions = 3
//!
//! [executor]
//! runner = ["python3", "runner.py"]
//!
//! [retrieval]
//! library = "library.md"
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentSettings, Agents, TemplateError, Templates};
use crate::backend::{BackendError, ChatBackend, HttpBackend, ScriptedBackend, DEFAULT_API_KEY_ENV, DEFAULT_MAX_RETRIES, DEFAULT_MODEL};
use crate::executor::{Executor, ExecutorConfig, ExternalRunner, Runner, StubRunner, DEFAULT_MAX_CONCURRENT};
use crate::hrag::{EmbedError, Embedder, HashEmbedder, HttpEmbedder, Library, MmrParams, RetrievalError, EXEMPLAR_CAP};
use crate::memory::{GlobalMemory, MemoryError};
use crate::orchestrator::{Pipeline, PipelineConfig, Retrieval};

#[derive(Debug, Error)]
pub enum SetupError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("library: {0}")]
    Retrieval(#[from] RetrievalError),
    #[error("embedder: {0}")]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendChoice {
    Http,
    Replay,
}

impl fmt::Display for BackendChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendChoice::Http => "http",
            BackendChoice::Replay => "replay",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSettings {
    pub kind: BackendChoice,
    pub endpoint: Option<String>,
    pub api_key_env: String,
    /// JSONL replay of agent replies, used when `kind = "replay"`.
    pub replay: Option<PathBuf>,
    pub model: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub request_timeout_secs: u64,
    pub backoff_ms: u64,
    pub language_tag: String,
    pub solver_tag: String,
}

impl Default for BackendSettings {
    fn default() -> Self {
        let agents = AgentSettings::default();
        Self {
            kind: BackendChoice::Http,
            endpoint: None,
            api_key_env: DEFAULT_API_KEY_ENV.to_owned(),
            replay: None,
            model: DEFAULT_MODEL.to_owned(),
            temperature: 0.0,
            max_retries: DEFAULT_MAX_RETRIES,
            request_timeout_secs: 120,
            backoff_ms: 500,
            language_tag: agents.language_tag,
            solver_tag: agents.solver_tag,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSettings {
    pub max_revisions: u32,
    pub enable_iar: bool,
    pub enable_hrag: bool,
    pub timeout_secs: f64,
    pub exemplar_cap: usize,
    pub k: usize,
    pub fetch_k: usize,
    pub lambda: f64,
    pub workdir: Option<PathBuf>,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        let mmr = MmrParams::default();
        Self {
            max_revisions: 3,
            enable_iar: true,
            enable_hrag: true,
            timeout_secs: 60.0,
            exemplar_cap: EXEMPLAR_CAP,
            k: mmr.k,
            fetch_k: mmr.fetch_k,
            lambda: mmr.lambda,
            workdir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecutorSettings {
    /// Runner command line; the executor appends `--file` and `--timeout-ms`.
    pub runner: Option<Vec<String>>,
    /// JSONL of scripted runner results, used instead of a runner process.
    pub stub_outcomes: Option<PathBuf>,
    pub max_concurrent: usize,
    pub non_optimal_markers: Vec<String>,
}

impl Default for ExecutorSettings {
    fn default() -> Self {
        Self {
            runner: None,
            stub_outcomes: None,
            max_concurrent: DEFAULT_MAX_CONCURRENT,
            non_optimal_markers: ExecutorConfig::default().non_optimal_markers,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderChoice {
    Hash,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSettings {
    pub library: Option<PathBuf>,
    pub embedder: EmbedderChoice,
    pub embed_endpoint: Option<String>,
    pub embed_model: String,
    pub dim: usize,
    pub cache_dir: Option<PathBuf>,
}

impl Default for RetrievalSettings {
    fn default() -> Self {
        Self {
            library: None,
            embedder: EmbedderChoice::Hash,
            embed_endpoint: None,
            embed_model: "text-embedding-v4".to_owned(),
            dim: HashEmbedder::DEFAULT_DIM,
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub templates_dir: Option<PathBuf>,
    pub global_journal: Option<PathBuf>,
    pub backend: BackendSettings,
    pub pipeline: PipelineSettings,
    pub executor: ExecutorSettings,
    pub retrieval: RetrievalSettings,
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self, SetupError> {
        toml::from_str(text).map_err(|e| SetupError::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, SetupError> {
        let text = std::fs::read_to_string(path).map_err(|e| SetupError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| SetupError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("settings serialize")
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        let p = &self.pipeline;
        PipelineConfig {
            max_revisions: p.max_revisions,
            enable_iar: p.enable_iar,
            enable_hrag: p.enable_hrag,
            timeout_ms: (p.timeout_secs * 1000.0).round().max(1.0) as u64,
            mmr: MmrParams {
                lambda: p.lambda,
                k: p.k,
                fetch_k: p.fetch_k,
            },
            exemplar_cap: p.exemplar_cap,
            workdir: p.workdir.clone(),
        }
    }

    pub fn agent_settings(&self) -> AgentSettings {
        let b = &self.backend;
        AgentSettings {
            model_name: b.model.clone(),
            temperature: b.temperature,
            max_retries: b.max_retries,
            language_tag: b.language_tag.clone(),
            solver_tag: b.solver_tag.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), SetupError> {
        let bad = |m: String| Err(SetupError::Config(m));
        if !(self.backend.temperature >= 0.0) {
            return bad(format!("temperature must be >= 0, got {}", self.backend.temperature));
        }
        if !(self.pipeline.timeout_secs > 0.0) {
            return bad(format!("timeout must be positive, got {}", self.pipeline.timeout_secs));
        }
        if self.pipeline.exemplar_cap > EXEMPLAR_CAP {
            return bad(format!("exemplar cap is at most {EXEMPLAR_CAP}, got {}", self.pipeline.exemplar_cap));
        }
        self.pipeline_config().mmr.validate()?;
        Ok(())
    }

    pub fn build_backend(&self) -> Result<Arc<dyn ChatBackend>, SetupError> {
        let b = &self.backend;
        Ok(match b.kind {
            BackendChoice::Replay => {
                let path = b
                    .replay
                    .as_ref()
                    .ok_or_else(|| SetupError::Config("replay backend needs a replay file".into()))?;
                Arc::new(ScriptedBackend::from_replay_file(path)?)
            }
            BackendChoice::Http => {
                let endpoint = b
                    .endpoint
                    .as_ref()
                    .ok_or_else(|| SetupError::Config("http backend needs an endpoint".into()))?;
                Arc::new(
                    HttpBackend::new(endpoint, &b.api_key_env, Duration::from_secs(b.request_timeout_secs))?
                        .with_backoff(Duration::from_millis(b.backoff_ms)),
                )
            }
        })
    }

    pub fn build_embedder(&self) -> Result<Arc<dyn Embedder>, SetupError> {
        let r = &self.retrieval;
        Ok(match r.embedder {
            EmbedderChoice::Hash => Arc::new(HashEmbedder::new(r.dim)),
            EmbedderChoice::Http => {
                let endpoint = r
                    .embed_endpoint
                    .as_ref()
                    .ok_or_else(|| SetupError::Config("http embedder needs embed_endpoint".into()))?;
                Arc::new(HttpEmbedder::new(
                    endpoint,
                    &r.embed_model,
                    &self.backend.api_key_env,
                    Duration::from_secs(self.backend.request_timeout_secs),
                )?)
            }
        })
    }

    pub fn build_retrieval(&self) -> Result<Option<Retrieval>, SetupError> {
        let Some(path) = &self.retrieval.library else {
            return Ok(None);
        };
        let embedder = self.build_embedder()?;
        let library = Library::load(path, embedder.as_ref(), self.retrieval.cache_dir.as_deref())?;
        Ok(Some(Retrieval {
            library: Arc::new(library),
            embedder,
        }))
    }

    pub fn build_executor(&self) -> Result<Executor, SetupError> {
        let e = &self.executor;
        let runner = match (&e.stub_outcomes, &e.runner) {
            (Some(path), _) => Runner::Stub(StubRunner::from_file(path).map_err(SetupError::Config)?),
            (None, Some(cmd)) if !cmd.is_empty() => Runner::External(ExternalRunner::new(cmd.clone())),
            _ => {
                return Err(SetupError::Config(
                    "no executor configured: give a runner command or a stub outcomes file".into(),
                ))
            }
        };
        Ok(Executor::new(
            runner,
            ExecutorConfig {
                max_concurrent: e.max_concurrent,
                non_optimal_markers: e.non_optimal_markers.clone(),
            },
        ))
    }

    pub fn build_templates(&self) -> Result<Templates, SetupError> {
        Ok(match &self.templates_dir {
            Some(dir) => Templates::from_dir(dir)?,
            None => Templates::builtin(),
        })
    }

    pub fn build_global(&self) -> Result<GlobalMemory, SetupError> {
        Ok(match &self.global_journal {
            Some(path) => GlobalMemory::with_journal(path)?,
            None => GlobalMemory::in_memory(),
        })
    }

    /// Everything a run needs. The library is loaded only when HRAG is enabled.
    pub fn build_pipeline(&self) -> Result<Pipeline, SetupError> {
        self.validate()?;
        let agents = Agents::new(self.build_backend()?, Arc::new(self.build_templates()?), self.agent_settings());
        let retrieval = if self.pipeline.enable_hrag { self.build_retrieval()? } else { None };
        Ok(Pipeline {
            agents,
            retrieval,
            executor: Arc::new(self.build_executor()?),
            global: Arc::new(self.build_global()?),
            config: self.pipeline_config(),
        })
    }
}
