//! Builds an exemplar library from solved, verified and labeled tasks.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::CallLog;
use crate::eval::{judge_solution, Verdict};
use crate::hrag::{read_exemplars, write_library, RetrievalError};
use crate::orchestrator::{Pipeline, TaskTrace};
use crate::types::{Exemplar, MathModel, SolverProgram, Task};

pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.5;

/// How kept instances are rendered into the `response` field.
pub const RESPONSE_TEMPLATE: &str = "## Mathematical Model\n```json\n{model}\n```\n\n## Code\n```{language}\n{code}\n```";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationConfig {
    pub confidence_threshold: f64,
    /// Keep at most this many exemplars per problem type, in input order.
    pub per_type_cap: Option<usize>,
    pub parallel: usize,
}

impl Default for CurationConfig {
    fn default() -> Self {
        Self {
            confidence_threshold: DEFAULT_CONFIDENCE_THRESHOLD,
            per_type_cap: None,
            parallel: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    Kept,
    NoGroundTruth,
    NotSolved,
    WrongAnswer,
    LabelFailed,
    LowConfidence,
    Duplicate,
    OverCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub task_id: String,
    pub disposition: Disposition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// Sidecar written next to the library file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub source_count: usize,
    pub kept: usize,
    pub dropped: usize,
    pub filtered: usize,
    pub confidence_threshold: f64,
    pub response_template: String,
    pub per_type: BTreeMap<String, usize>,
    pub instances: Vec<InstanceRecord>,
    /// Effective settings of the run that produced the library.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curated {
    pub exemplars: Vec<Exemplar>,
    pub manifest: Manifest,
}

pub fn render_response(model: &MathModel, program: &SolverProgram) -> String {
    let model_json = serde_json::to_string_pretty(&model.to_prompt_json()).expect("json values serialize");
    RESPONSE_TEMPLATE
        .replace("{model}", &model_json)
        .replace("{language}", &program.language_tag)
        .replace("{code}", program.source.trim_end())
}

enum Candidate {
    Labeled(Exemplar),
    Rejected(Disposition, Option<String>),
}

fn curate_one(task: &Task, pipeline: &Pipeline, threshold: f64) -> Candidate {
    let Some(y_star) = task.ground_truth else {
        return Candidate::Rejected(Disposition::NoGroundTruth, None);
    };
    let trace: TaskTrace = pipeline.solve(task);
    let Some(last) = trace.rounds.last() else {
        return Candidate::Rejected(Disposition::NotSolved, trace.pipeline_error);
    };
    match judge_solution(y_star, &last.outcome).verdict {
        Verdict::Correct => {}
        Verdict::WrongAnswer => {
            return Candidate::Rejected(
                Disposition::WrongAnswer,
                last.outcome.objective.map(|o| format!("objective {o}, expected {y_star}")),
            )
        }
        Verdict::ExecutionFailure => return Candidate::Rejected(Disposition::NotSolved, last.outcome.error_message.clone()),
    }
    let mut log = CallLog::new(&task.id);
    let label = match pipeline.agents.label_problem(&mut log, task, &last.model) {
        Ok(l) => l,
        Err(e) => return Candidate::Rejected(Disposition::LabelFailed, Some(e.to_string())),
    };
    if label.confidence < threshold {
        return Candidate::Rejected(
            Disposition::LowConfidence,
            Some(format!("confidence {} below {threshold}", label.confidence)),
        );
    }
    Candidate::Labeled(Exemplar {
        prompt: task.text.clone(),
        response: render_response(&last.model, &last.program),
        answer: y_star,
        problem_type: label.problem_type,
        problem_subtype: label.problem_subtype,
        source_line: 0,
        source_path: String::new(),
    })
}

/// Solves, verifies and labels each task. Per-instance failures are recorded
/// in the manifest and never abort the batch.
pub fn build_library(tasks: &[Task], pipeline: &Pipeline, cfg: &CurationConfig) -> Curated {
    let candidates: Vec<Candidate> = match rayon::ThreadPoolBuilder::new().num_threads(cfg.parallel.max(1)).build() {
        Ok(pool) => pool.install(|| {
            tasks
                .par_iter()
                .map(|t| curate_one(t, pipeline, cfg.confidence_threshold))
                .collect()
        }),
        Err(_) => tasks.iter().map(|t| curate_one(t, pipeline, cfg.confidence_threshold)).collect(),
    };

    let mut seen = HashSet::new();
    let mut per_type: BTreeMap<String, usize> = BTreeMap::new();
    let mut exemplars = Vec::new();
    let mut instances = Vec::with_capacity(tasks.len());
    for (task, candidate) in tasks.iter().zip(candidates) {
        let (disposition, detail) = match candidate {
            Candidate::Rejected(d, detail) => (d, detail),
            Candidate::Labeled(_) if !seen.insert(task.text.clone()) => (Disposition::Duplicate, None),
            Candidate::Labeled(e) => {
                let n = per_type.entry(e.problem_type.clone()).or_default();
                if cfg.per_type_cap.is_some_and(|cap| *n >= cap) {
                    (Disposition::OverCap, Some(e.problem_type))
                } else {
                    *n += 1;
                    exemplars.push(e);
                    (Disposition::Kept, None)
                }
            }
        };
        if disposition != Disposition::Kept {
            tracing::info!(task = %task.id, ?disposition, "instance not kept");
        }
        instances.push(InstanceRecord {
            task_id: task.id.clone(),
            disposition,
            detail,
        });
    }
    per_type.retain(|_, n| *n > 0);
    let filtered = instances
        .iter()
        .filter(|i| matches!(i.disposition, Disposition::LabelFailed | Disposition::LowConfidence))
        .count();
    let manifest = Manifest {
        source_count: tasks.len(),
        kept: exemplars.len(),
        dropped: tasks.len() - exemplars.len() - filtered,
        filtered,
        confidence_threshold: cfg.confidence_threshold,
        response_template: RESPONSE_TEMPLATE.to_owned(),
        per_type,
        instances,
        config: serde_json::Value::Null,
    };
    Curated { exemplars, manifest }
}

pub fn manifest_path(library: &Path) -> PathBuf {
    let mut name = library.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    library.with_file_name(name)
}

/// Writes the library file and its manifest sidecar.
pub fn write_curated(path: &Path, curated: &Curated) -> Result<PathBuf, RetrievalError> {
    write_library(path, &curated.exemplars)?;
    let sidecar = manifest_path(path);
    let json = serde_json::to_string_pretty(&curated.manifest).expect("manifest serializes");
    fs::write(&sidecar, json).map_err(|e| RetrievalError::io(&sidecar, e))?;
    Ok(sidecar)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryStats {
    pub count: usize,
    pub per_type: BTreeMap<String, usize>,
    /// Most frequent over least frequent type count; absent with fewer than two types.
    pub balance_ratio: Option<f64>,
}

impl LibraryStats {
    pub fn from_exemplars(exemplars: &[Exemplar]) -> Self {
        let mut per_type: BTreeMap<String, usize> = BTreeMap::new();
        for e in exemplars {
            *per_type.entry(e.problem_type.clone()).or_default() += 1;
        }
        let balance_ratio = (per_type.len() >= 2).then(|| {
            let max = per_type.values().max().copied().unwrap_or(0);
            let min = per_type.values().min().copied().unwrap_or(1);
            max as f64 / min as f64
        });
        Self {
            count: exemplars.len(),
            per_type,
            balance_ratio,
        }
    }

    pub fn balance_label(&self) -> String {
        match self.balance_ratio {
            Some(r) => format!("{r:.2}"),
            None => "∞".to_owned(),
        }
    }
}

impl fmt::Display for LibraryStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "exemplars: {}", self.count)?;
        for (t, n) in &self.per_type {
            writeln!(f, "  {t}: {n}")?;
        }
        write!(f, "balance (max/min): {}", self.balance_label())
    }
}

pub fn library_stats(path: &Path) -> Result<LibraryStats, RetrievalError> {
    Ok(LibraryStats::from_exemplars(&read_exemplars(path)?))
}
