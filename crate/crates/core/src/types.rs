//! Domain types shared by every stage of the pipeline.
//!
//! All values here are plain data: cheap to clone, `Send + Sync`, and
//! serialized as JSON objects using the field names below.

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TaskError {
    #[error("invalid task {id:?}: problem text is empty")]
    EmptyText { id: String },
}

/// A natural-language optimization problem, optionally with its known optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_tag: Option<String>,
}

impl Task {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            ground_truth: None,
            dataset_tag: None,
        }
    }

    pub fn with_ground_truth(mut self, value: f64) -> Self {
        self.ground_truth = Some(value);
        self
    }

    pub fn with_dataset(mut self, tag: impl Into<String>) -> Self {
        self.dataset_tag = Some(tag.into());
        self
    }
}

/// Returns the task unchanged when its text is non-empty after trimming.
pub fn validate_task(task: Task) -> Result<Task, TaskError> {
    if task.text.trim().is_empty() {
        return Err(TaskError::EmptyText { id: task.id });
    }
    Ok(task)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub type_label: String,
    pub definition: String,
}

/// Named problem parameters in the order the extractor reported them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub entries: IndexMap<String, ParamEntry>,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InsightCategory {
    DomainTerminology,
    ProblemKeyPoint,
    ProblemEssence,
}

impl InsightCategory {
    pub const ALL: [InsightCategory; 3] = [
        InsightCategory::DomainTerminology,
        InsightCategory::ProblemKeyPoint,
        InsightCategory::ProblemEssence,
    ];

    /// The label used in prompts and replies, e.g. `"Problem Key Point"`.
    pub fn label(self) -> &'static str {
        match self {
            InsightCategory::DomainTerminology => "Domain Terminology",
            InsightCategory::ProblemKeyPoint => "Problem Key Point",
            InsightCategory::ProblemEssence => "Problem Essence",
        }
    }

    /// Accepts either the prompt label or the enum identifier.
    pub fn from_label(label: &str) -> Option<Self> {
        let squashed: String = label
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '_')
            .collect::<String>()
            .to_ascii_lowercase();
        Self::ALL.into_iter().find(|c| {
            let id = format!("{c:?}").to_ascii_lowercase();
            squashed == id
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Insight {
    pub category: InsightCategory,
    pub insight: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Advisory {
    pub insights: Vec<Insight>,
}

impl Advisory {
    pub fn essence(&self) -> Option<&str> {
        self.insights
            .iter()
            .find(|i| i.category == InsightCategory::ProblemEssence)
            .map(|i| i.insight.as_str())
    }
}

/// An optimization model as prose/DSL text: variables, constraints, objective.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MathModel {
    pub variables: String,
    pub constraints: Vec<String>,
    pub objective: String,
}

impl MathModel {
    /// Checks the model invariants, returning a description of the first violation.
    pub fn check(&self) -> Result<(), String> {
        if self.objective.trim().is_empty() {
            return Err("OBJECTIVE is empty".into());
        }
        if self.constraints.is_empty() && !self.variables.to_ascii_lowercase().contains("unconstrained") {
            return Err("CONSTRAINTS is empty but VARIABLES does not declare an unconstrained model".into());
        }
        Ok(())
    }

    /// The JSON object shape used in prompts: `{"VARIABLES", "CONSTRAINTS", "OBJECTIVE"}`.
    pub fn to_prompt_json(&self) -> serde_json::Value {
        serde_json::json!({
            "VARIABLES": self.variables,
            "CONSTRAINTS": self.constraints,
            "OBJECTIVE": self.objective,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverProgram {
    pub source: String,
    pub language_tag: String,
    pub solver_tag: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutcomeStatus {
    Accept,
    WrongAnswer,
    SyntaxFailure,
    RuntimeFailure,
    Timeout,
    SolverNotOptimal,
    RunnerError,
    /// An agent or backend failure ended the task before a program could run.
    PipelineError,
}

impl OutcomeStatus {
    /// True when the program ran and produced an objective value.
    pub fn executed(self) -> bool {
        matches!(self, OutcomeStatus::Accept | OutcomeStatus::WrongAnswer)
    }

    /// Two-bucket label used in summaries: `ACCEPT`, `WRONG_ANSWER` or `COMPILE_ERROR`.
    pub fn summary_label(self) -> &'static str {
        match self {
            OutcomeStatus::Accept => "ACCEPT",
            OutcomeStatus::WrongAnswer => "WRONG_ANSWER",
            _ => "COMPILE_ERROR",
        }
    }
}

impl fmt::Display for OutcomeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub status: OutcomeStatus,
    pub objective: Option<f64>,
    pub error_message: Option<String>,
    pub stdout: String,
    pub stderr: String,
    pub wall_ms: u64,
}

impl ExecutionOutcome {
    pub fn success(objective: f64, stdout: String, stderr: String, wall_ms: u64) -> Self {
        Self {
            status: OutcomeStatus::Accept,
            objective: Some(objective),
            error_message: None,
            stdout,
            stderr,
            wall_ms,
        }
    }

    pub fn failure(status: OutcomeStatus, message: impl Into<String>) -> Self {
        debug_assert!(!status.executed());
        Self {
            status,
            objective: None,
            error_message: Some(message.into()),
            stdout: String::new(),
            stderr: String::new(),
            wall_ms: 0,
        }
    }

    pub fn succeeded(&self) -> bool {
        self.status.executed()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TipKind {
    Modeling,
    Code,
}

/// What went wrong, where, and how to fix it, as reported by a revision agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionTip {
    pub kind: TipKind,
    pub scenario: String,
    pub error_statement: String,
    pub correct_fragment: String,
    pub incorrect_fragment: String,
}

impl RevisionTip {
    /// Renders the tip with the key names the matching revision prompt asks for.
    pub fn to_prompt_json(&self) -> serde_json::Value {
        match self.kind {
            TipKind::Modeling => serde_json::json!({
                "tip_type": "modeling",
                "scenario": self.scenario,
                "error_statement": self.error_statement,
                "correct_component": self.correct_fragment,
                "incorrect_model": self.incorrect_fragment,
            }),
            TipKind::Code => serde_json::json!({
                "tip_type": "code",
                "scenario": self.scenario,
                "error_statement": self.error_statement,
                "correct_code_snippet": self.correct_fragment,
                "incorrect_code_snippet": self.incorrect_fragment,
            }),
        }
    }
}

pub const DEFAULT_PROBLEM_TYPE: &str = "general";

/// One record of the exemplar library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub prompt: String,
    pub response: String,
    pub answer: f64,
    pub problem_type: String,
    pub problem_subtype: String,
    pub source_line: usize,
    pub source_path: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_accepts_problem_text() {
        let task = Task::new("t1", "Consider a transportation problem with multiple products.");
        assert_eq!(validate_task(task.clone()).unwrap(), task);
    }

    #[test]
    fn validate_rejects_blank_text() {
        let err = validate_task(Task::new("t2", "   ")).unwrap_err();
        assert_eq!(err, TaskError::EmptyText { id: "t2".into() });
    }

    #[test]
    fn validate_accepts_minimal_text_without_ground_truth() {
        let task = validate_task(Task::new("t3", "x")).unwrap();
        assert!(task.ground_truth.is_none());
    }

    #[test]
    fn category_labels_parse_both_spellings() {
        for c in InsightCategory::ALL {
            assert_eq!(InsightCategory::from_label(c.label()), Some(c));
            assert_eq!(InsightCategory::from_label(&format!("{c:?}")), Some(c));
        }
        assert_eq!(InsightCategory::from_label("Hint"), None);
    }

    #[test]
    fn model_without_constraints_must_say_unconstrained() {
        let mut m = MathModel {
            variables: "x real".into(),
            constraints: vec![],
            objective: "minimize x^2".into(),
        };
        assert!(m.check().is_err());
        m.variables = "x real (unconstrained)".into();
        assert!(m.check().is_ok());
        m.objective = " ".into();
        assert!(m.check().is_err());
    }

    #[test]
    fn summary_labels_collapse_failures() {
        assert_eq!(OutcomeStatus::Accept.summary_label(), "ACCEPT");
        assert_eq!(OutcomeStatus::Timeout.summary_label(), "COMPILE_ERROR");
        assert_eq!(OutcomeStatus::PipelineError.summary_label(), "COMPILE_ERROR");
    }
}
