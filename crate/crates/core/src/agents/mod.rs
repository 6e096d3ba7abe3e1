//! The role-specialized agents.
//!
//! Each agent renders its template, calls the backend once, and parses the
//! reply strictly. A reply that fails to parse gets exactly one repair
//! reprompt carrying the parse error and the required format; a second
//! failure surfaces as a typed error. Backend calls per agent invocation are
//! therefore bounded at two.

pub mod parse;
pub mod template;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::backend::{roles, BackendError, CallKey, ChatBackend, ChatRequest, DEFAULT_MAX_RETRIES, DEFAULT_MODEL};
use crate::hrag::RetrievedSet;
use crate::types::{
    validate_task, Advisory, Exemplar, Insight, InsightCategory, MathModel, ParamEntry, ParamSpec, RevisionTip,
    SolverProgram, Task, TaskError, TipKind,
};

pub use template::{PromptTemplate, TemplateError, Templates};

/// Rendered in place of `{last_tip}` before any tip exists.
pub const NO_TIP: &str = "No tip for reference";
/// Rendered in place of `{comment_text}` for the first agent.
pub const NO_COMMENT: &str = "None";
pub const NO_EXEMPLAR: &str =
    "No exemplar available: no sufficiently similar solved problem was found. Proceed from the problem description alone.";

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    InvalidTask(#[from] TaskError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("{role}: could not parse reply: {message}")]
    ReplyParse { role: String, message: String },
    #[error("{role}: insight category {label:?} is not one of the allowed categories")]
    Category { role: String, label: String },
    #[error("{role}: reply contains no fenced code block")]
    NoCodeBlock { role: String },
    #[error("{role}: {message}")]
    SplitFormat { role: String, message: String },
}

/// One backend call as seen by the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub role: String,
    pub round: u32,
    pub attempt: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Per-task append-only log of agent calls.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CallLog {
    pub task_id: String,
    pub calls: Vec<CallRecord>,
}

impl CallLog {
    pub fn new(task_id: &str) -> Self {
        Self {
            task_id: task_id.to_owned(),
            calls: Vec::new(),
        }
    }

    pub fn count_role(&self, role: &str) -> usize {
        self.calls.iter().filter(|c| c.role == role).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSettings {
    pub model_name: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub language_tag: String,
    pub solver_tag: String,
}

impl Default for AgentSettings {
    fn default() -> Self {
        Self {
            model_name: DEFAULT_MODEL.to_owned(),
            temperature: 0.0,
            max_retries: DEFAULT_MAX_RETRIES,
            language_tag: "python".to_owned(),
            solver_tag: "gurobipy".to_owned(),
        }
    }
}

/// Parsed reply of a revision agent.
#[derive(Debug, Clone, PartialEq)]
pub struct RevisionReply<T> {
    pub tip: RevisionTip,
    pub corrected: T,
}

/// Category/subtype labels for a curated exemplar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemLabel {
    pub problem_type: String,
    pub problem_subtype: String,
    pub confidence: f64,
}

const PARAM_SCHEMA: &str = r#"{"Parameter1": {"Type": "...", "Definition": "..."}, ...}"#;
const ADVISORY_SCHEMA: &str = r#"[{"category": "Domain Terminology" | "Problem Key Point" | "Problem Essence", "insight": "..."}] with 1 to 3 items"#;
const MODEL_SCHEMA: &str = r#"{"VARIABLES": "...", "CONSTRAINTS": ["..."], "OBJECTIVE": "..."}"#;
const CODE_SCHEMA: &str = "one complete program inside a single ```python fenced code block";
const MODEL_REVISION_SCHEMA: &str = "TIP_JSON\n<split>\nCORRECTED_MODEL_JSON\nwhere TIP_JSON has the keys tip_type, scenario, error_statement, correct_component, incorrect_model";
const CODE_REVISION_SCHEMA: &str = "TIP_JSON\n<split>\nCORRECTED_CODE_JSON\nwhere TIP_JSON has the keys tip_type, scenario, error_statement, correct_code_snippet, incorrect_code_snippet";
const LABEL_SCHEMA: &str = r#"{"problem_type": "...", "problem_subtype": "...", "confidence": 0.0}"#;

/// Stateless agent front-end over a shared backend and template set.
#[derive(Clone)]
pub struct Agents {
    backend: Arc<dyn ChatBackend>,
    templates: Arc<Templates>,
    settings: AgentSettings,
}

impl Agents {
    pub fn new(backend: Arc<dyn ChatBackend>, templates: Arc<Templates>, settings: AgentSettings) -> Self {
        Self {
            backend,
            templates,
            settings,
        }
    }

    pub fn settings(&self) -> &AgentSettings {
        &self.settings
    }

    pub fn backend(&self) -> &dyn ChatBackend {
        self.backend.as_ref()
    }

    pub fn templates(&self) -> &Templates {
        &self.templates
    }

    fn request(&self, template: &PromptTemplate, user_text: String) -> ChatRequest {
        ChatRequest {
            system_text: template.role_description.clone(),
            user_text,
            model_name: self.settings.model_name.clone(),
            temperature: self.settings.temperature,
            max_retries: self.settings.max_retries,
        }
    }

    /// Strict-then-repair call: at most one reprompt on a parse failure.
    pub(crate) fn call_parsed<T>(
        &self,
        log: &mut CallLog,
        role: &str,
        round: u32,
        template: &PromptTemplate,
        bindings: &BTreeMap<&str, String>,
        schema: &str,
        parse: impl Fn(&str) -> Result<T, AgentError>,
    ) -> Result<T, AgentError> {
        let user_text = template.render(bindings)?;
        let mut request = self.request(template, user_text.clone());
        let mut key = CallKey::new(&log.task_id, role, round);
        loop {
            let reply = match self.backend.complete(&key, &request) {
                Ok(r) => r,
                Err(e) => {
                    log.calls.push(CallRecord {
                        role: role.to_owned(),
                        round,
                        attempt: key.attempt,
                        error: Some(e.to_string()),
                    });
                    return Err(e.into());
                }
            };
            let parsed = parse(&reply);
            log.calls.push(CallRecord {
                role: role.to_owned(),
                round,
                attempt: key.attempt,
                error: parsed.as_ref().err().map(ToString::to_string),
            });
            match parsed {
                Ok(v) => return Ok(v),
                Err(e) if key.attempt == 0 => {
                    tracing::debug!(task = %log.task_id, role, round, "repair reprompt: {e}");
                    request.user_text = format!(
                        "{user_text}\n\nYour previous reply could not be used: {e}\n\
                         Reply again using exactly this format and nothing else:\n{schema}"
                    );
                    key = key.retry();
                }
                Err(e) => return Err(e),
            }
        }
    }

    pub fn extract_parameters(&self, log: &mut CallLog, task: &Task, comment: &str) -> Result<ParamSpec, AgentError> {
        let task = validate_task(task.clone())?;
        let bindings = BTreeMap::from([
            ("problem_description", task.text.clone()),
            ("comment_text", comment.to_owned()),
        ]);
        self.call_parsed(
            log,
            roles::PARAM_EXTRACTOR,
            0,
            &self.templates.param_extractor,
            &bindings,
            PARAM_SCHEMA,
            |reply| parse_params(reply).map_err(|message| parse_error(roles::PARAM_EXTRACTOR, message)),
        )
    }

    pub fn advise(&self, log: &mut CallLog, task: &Task, param_comment: &str) -> Result<Advisory, AgentError> {
        let bindings = BTreeMap::from([
            ("problem_description", task.text.clone()),
            ("comment_text", param_comment.to_owned()),
        ]);
        self.call_parsed(
            log,
            roles::MODELING_ADVISOR,
            0,
            &self.templates.modeling_advisor,
            &bindings,
            ADVISORY_SCHEMA,
            parse_advisory,
        )
    }

    pub fn formulate(
        &self,
        log: &mut CallLog,
        task: &Task,
        param: &ParamSpec,
        advisory: &Advisory,
        exemplars: &RetrievedSet,
    ) -> Result<MathModel, AgentError> {
        let bindings = BTreeMap::from([
            ("problem_description", task.text.clone()),
            ("comments_text", render_comments(param, advisory)),
            ("exemplars", render_exemplars(exemplars, false)),
        ]);
        self.call_parsed(
            log,
            roles::MODELING_EXPERT,
            0,
            &self.templates.modeling_expert,
            &bindings,
            MODEL_SCHEMA,
            |reply| parse::parse_model(reply).map_err(|m| parse_error(roles::MODELING_EXPERT, m)),
        )
    }

    pub fn generate_code(
        &self,
        log: &mut CallLog,
        task: &Task,
        model: &MathModel,
        exemplars: &RetrievedSet,
    ) -> Result<SolverProgram, AgentError> {
        let bindings = BTreeMap::from([
            ("problem_description", task.text.clone()),
            ("comments_text", pretty(&model.to_prompt_json())),
            ("exemplars", render_exemplars(exemplars, true)),
            ("solver_tag", self.settings.solver_tag.clone()),
        ]);
        let source = self.call_parsed(
            log,
            roles::CODE_EXPERT,
            0,
            &self.templates.code_expert,
            &bindings,
            CODE_SCHEMA,
            |reply| {
                parse::longest_code_block(reply).ok_or_else(|| AgentError::NoCodeBlock {
                    role: roles::CODE_EXPERT.to_owned(),
                })
            },
        )?;
        Ok(self.program(source))
    }

    fn program(&self, source: String) -> SolverProgram {
        SolverProgram {
            source,
            language_tag: self.settings.language_tag.clone(),
            solver_tag: self.settings.solver_tag.clone(),
        }
    }

    pub fn revise_model(
        &self,
        log: &mut CallLog,
        round: u32,
        task: &Task,
        prior: &MathModel,
        error: &str,
        last_tip: Option<&RevisionTip>,
    ) -> Result<RevisionReply<MathModel>, AgentError> {
        let bindings = BTreeMap::from([
            ("problem_description", task.text.clone()),
            ("original_model", pretty(&prior.to_prompt_json())),
            ("error_message", error.to_owned()),
            ("last_tip", render_tip(last_tip)),
        ]);
        let role = roles::MODEL_REVISION;
        self.call_parsed(
            log,
            role,
            round,
            &self.templates.model_revision,
            &bindings,
            MODEL_REVISION_SCHEMA,
            |reply| {
                let (tip, payload) = parse::split_reply(reply).map_err(|m| split_error(role, m))?;
                let tip = parse::parse_tip(tip, TipKind::Modeling).map_err(|m| parse_error(role, m))?;
                let corrected = parse::parse_model(payload).map_err(|m| parse_error(role, m))?;
                Ok(RevisionReply { tip, corrected })
            },
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn revise_code(
        &self,
        log: &mut CallLog,
        round: u32,
        task: &Task,
        prior: &SolverProgram,
        corrected_model: &MathModel,
        error: &str,
        last_tip: Option<&RevisionTip>,
    ) -> Result<RevisionReply<SolverProgram>, AgentError> {
        let bindings = BTreeMap::from([
            ("problem_description", task.text.clone()),
            ("corrected_model", pretty(&corrected_model.to_prompt_json())),
            ("initial_code", prior.source.clone()),
            ("error_message", error.to_owned()),
            ("last_tip", render_tip(last_tip)),
            ("solver_tag", self.settings.solver_tag.clone()),
        ]);
        let role = roles::CODE_REVISION;
        let reply = self.call_parsed(
            log,
            role,
            round,
            &self.templates.code_revision,
            &bindings,
            CODE_REVISION_SCHEMA,
            |reply| {
                let (tip, payload) = parse::split_reply(reply).map_err(|m| split_error(role, m))?;
                let tip = parse::parse_tip(tip, TipKind::Code).map_err(|m| parse_error(role, m))?;
                let source = parse::parse_corrected_code(payload)
                    .ok_or_else(|| AgentError::NoCodeBlock { role: role.to_owned() })?;
                Ok(RevisionReply { tip, corrected: source })
            },
        )?;
        Ok(RevisionReply {
            tip: reply.tip,
            corrected: self.program(reply.corrected),
        })
    }

    /// Labels a verified problem with a category, a subtype and a confidence.
    pub fn label_problem(&self, log: &mut CallLog, task: &Task, model: &MathModel) -> Result<ProblemLabel, AgentError> {
        let bindings = BTreeMap::from([
            ("problem_description", task.text.clone()),
            ("model", pretty(&model.to_prompt_json())),
        ]);
        let role = roles::LIBRARY_LABELER;
        self.call_parsed(
            log,
            role,
            0,
            &self.templates.library_labeler,
            &bindings,
            LABEL_SCHEMA,
            |reply| parse_label(reply).map_err(|m| parse_error(role, m)),
        )
    }
}

fn parse_error(role: &str, message: impl Into<String>) -> AgentError {
    AgentError::ReplyParse {
        role: role.to_owned(),
        message: message.into(),
    }
}

fn split_error(role: &str, message: String) -> AgentError {
    AgentError::SplitFormat {
        role: role.to_owned(),
        message,
    }
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json values always serialize")
}

fn parse_params(reply: &str) -> Result<ParamSpec, String> {
    let v = parse::parse_json(reply)?;
    let obj = v.as_object().ok_or("parameter reply is not a JSON object")?;
    let mut spec = ParamSpec::default();
    for (name, entry) in obj {
        let entry = entry
            .as_object()
            .ok_or_else(|| format!("parameter {name:?} is not an object with Type and Definition"))?;
        let pick = |key: &str| {
            entry
                .iter()
                .find(|(k, _)| k.eq_ignore_ascii_case(key))
                .map(|(_, v)| parse::value_text(v))
                .filter(|s| !s.trim().is_empty())
                .ok_or_else(|| format!("parameter {name:?} has no {key}"))
        };
        spec.entries.insert(
            name.clone(),
            ParamEntry {
                type_label: pick("Type")?,
                definition: pick("Definition")?,
            },
        );
    }
    Ok(spec)
}

fn parse_advisory(reply: &str) -> Result<Advisory, AgentError> {
    let role = roles::MODELING_ADVISOR;
    let v = parse::parse_json(reply).map_err(|m| parse_error(role, m))?;
    let items = v.as_array().ok_or_else(|| parse_error(role, "advisory reply is not a JSON list"))?;
    if !(1..=3).contains(&items.len()) {
        return Err(parse_error(role, format!("expected 1 to 3 insights, got {}", items.len())));
    }
    let mut insights = Vec::with_capacity(items.len());
    for item in items {
        let category = item
            .get("category")
            .and_then(Value::as_str)
            .ok_or_else(|| parse_error(role, "insight without a category string"))?;
        let text = item
            .get("insight")
            .and_then(Value::as_str)
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| parse_error(role, "insight without text"))?;
        let category = InsightCategory::from_label(category).ok_or_else(|| AgentError::Category {
            role: role.to_owned(),
            label: category.to_owned(),
        })?;
        insights.push(Insight {
            category,
            insight: text.to_owned(),
        });
    }
    Ok(Advisory { insights })
}

fn parse_label(reply: &str) -> Result<ProblemLabel, String> {
    let v = parse::parse_json(reply)?;
    let text = |k: &str| {
        v.get(k)
            .and_then(Value::as_str)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_owned)
            .ok_or_else(|| format!("label is missing {k}"))
    };
    let confidence = match v.get("confidence") {
        Some(Value::Number(n)) => n.as_f64(),
        Some(Value::String(s)) => s.trim().parse().ok(),
        _ => None,
    }
    .filter(|c: &f64| c.is_finite())
    .ok_or("label has no numeric confidence")?;
    Ok(ProblemLabel {
        problem_type: text("problem_type")?,
        problem_subtype: text("problem_subtype")?,
        confidence,
    })
}

/// The parameter JSON handed to the advisor as its colleague's comment.
pub fn render_params(param: &ParamSpec) -> String {
    let obj: serde_json::Map<String, Value> = param
        .entries
        .iter()
        .map(|(k, e)| (k.clone(), json!({"Type": e.type_label, "Definition": e.definition})))
        .collect();
    pretty(&Value::Object(obj))
}

fn render_comments(param: &ParamSpec, advisory: &Advisory) -> String {
    let insights: Vec<Value> = advisory
        .insights
        .iter()
        .map(|i| json!({"category": i.category.label(), "insight": i.insight}))
        .collect();
    format!(
        "Parameters:\n{}\nModeling insights:\n{}",
        render_params(param),
        pretty(&Value::Array(insights))
    )
}

fn render_tip(tip: Option<&RevisionTip>) -> String {
    match tip {
        Some(t) => pretty(&t.to_prompt_json()),
        None => NO_TIP.to_owned(),
    }
}

/// Splits an exemplar response into its model JSON and its program text.
///
/// Library responses interleave a "Mathematical Model" section holding a
/// fenced JSON object and a "Python Code" section holding a fenced program.
pub fn split_exemplar_response(response: &str) -> (Option<Value>, Option<String>) {
    let blocks = parse::fenced_blocks(response);
    let model = blocks
        .iter()
        .find_map(|b| serde_json::from_str::<Value>(b.content.trim()).ok().filter(Value::is_object));
    let code = blocks
        .iter()
        .filter(|b| serde_json::from_str::<Value>(b.content.trim()).is_err())
        .max_by_key(|b| b.content.len())
        .map(|b| b.content.clone());
    (model, code)
}

fn exemplar_json(ex: &Exemplar, with_code: bool) -> Value {
    let (model, code) = split_exemplar_response(&ex.response);
    let mut obj = serde_json::Map::new();
    obj.insert("Problem description".into(), Value::String(ex.prompt.clone()));
    obj.insert(
        "Mathematical Model".into(),
        model.unwrap_or_else(|| Value::String(ex.response.clone())),
    );
    if with_code {
        obj.insert("Code".into(), Value::String(code.unwrap_or_default()));
    }
    Value::Object(obj)
}

/// Renders retrieved exemplars with the modeling or solver-code exemplar structure.
pub fn render_exemplars(set: &RetrievedSet, with_code: bool) -> String {
    if set.empty_signal || set.items.is_empty() {
        return NO_EXEMPLAR.to_owned();
    }
    set.items
        .iter()
        .enumerate()
        .map(|(i, ex)| format!("Example {}:\n{}", i + 1, pretty(&exemplar_json(ex, with_code))))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedBackend;
    use crate::hrag::RetrievalKind;

    fn agents(backend: ScriptedBackend) -> Agents {
        Agents::new(Arc::new(backend), Arc::new(Templates::builtin()), AgentSettings::default())
    }

    fn task() -> Task {
        Task::new("t", "Minimize cost subject to capacity.")
    }

    fn model() -> MathModel {
        MathModel {
            variables: "x >= 0".into(),
            constraints: vec!["x <= 10".into()],
            objective: "minimize x".into(),
        }
    }

    #[test]
    fn empty_parameter_object_is_accepted() {
        let a = agents(ScriptedBackend::new().reply(roles::PARAM_EXTRACTOR, 0, "{}"));
        let mut log = CallLog::new("t");
        assert!(a.extract_parameters(&mut log, &task(), NO_COMMENT).unwrap().is_empty());
        assert_eq!(log.calls.len(), 1);
    }

    #[test]
    fn two_bad_parameter_replies_fail_after_one_reprompt() {
        let a = agents(
            ScriptedBackend::new()
                .reply(roles::PARAM_EXTRACTOR, 0, "not json")
                .reply(roles::PARAM_EXTRACTOR, 0, "not json"),
        );
        let mut log = CallLog::new("t");
        let err = a.extract_parameters(&mut log, &task(), NO_COMMENT).unwrap_err();
        assert!(matches!(err, AgentError::ReplyParse { .. }), "{err}");
        assert_eq!(log.calls.len(), 2);
        assert_eq!(log.calls[1].attempt, 1);
    }

    #[test]
    fn repair_reprompt_recovers() {
        let a = agents(
            ScriptedBackend::new()
                .reply(roles::PARAM_EXTRACTOR, 0, "[1, 2]")
                .reply(roles::PARAM_EXTRACTOR, 0, r#"{"N": {"Type": "int", "Definition": "count"}}"#),
        );
        let mut log = CallLog::new("t");
        let spec = a.extract_parameters(&mut log, &task(), NO_COMMENT).unwrap();
        assert_eq!(spec.names().collect::<Vec<_>>(), ["N"]);
        assert!(log.calls[0].error.is_some());
        assert!(log.calls[1].error.is_none());
    }

    #[test]
    fn blank_task_is_rejected_before_any_call() {
        let backend = Arc::new(ScriptedBackend::new());
        let a = Agents::new(backend.clone(), Arc::new(Templates::builtin()), AgentSettings::default());
        let err = a
            .extract_parameters(&mut CallLog::new("t"), &Task::new("t", "  "), NO_COMMENT)
            .unwrap_err();
        assert!(matches!(err, AgentError::InvalidTask(_)));
        assert!(backend.request_log().is_empty());
    }

    #[test]
    fn advisory_accepts_valid_categories() {
        let reply = r#"[{"category": "Domain Terminology", "insight": "a"},
                        {"category": "Problem Essence", "insight": "an LP"}]"#;
        let a = agents(ScriptedBackend::new().reply(roles::MODELING_ADVISOR, 0, reply));
        let adv = a.advise(&mut CallLog::new("t"), &task(), "{}").unwrap();
        assert_eq!(adv.insights.len(), 2);
        assert_eq!(adv.essence(), Some("an LP"));
    }

    #[test]
    fn advisory_with_three_insights() {
        let reply = r#"[{"category": "Domain Terminology", "insight": "a"},
                        {"category": "Problem Key Point", "insight": "b"},
                        {"category": "Problem Essence", "insight": "c"}]"#;
        let a = agents(ScriptedBackend::new().reply(roles::MODELING_ADVISOR, 0, reply));
        assert_eq!(a.advise(&mut CallLog::new("t"), &task(), "{}").unwrap().insights.len(), 3);
    }

    #[test]
    fn unknown_category_fails_after_reprompt() {
        let bad = r#"[{"category": "Hint", "insight": "a"}]"#;
        let a = agents(
            ScriptedBackend::new()
                .reply(roles::MODELING_ADVISOR, 0, bad)
                .reply(roles::MODELING_ADVISOR, 0, bad),
        );
        let err = a.advise(&mut CallLog::new("t"), &task(), "{}").unwrap_err();
        assert!(matches!(err, AgentError::Category { ref label, .. } if label == "Hint"));
    }

    #[test]
    fn formulate_renders_no_exemplar_block() {
        let backend = Arc::new(ScriptedBackend::new().reply(
            roles::MODELING_EXPERT,
            0,
            r#"{"VARIABLES": "x", "CONSTRAINTS": ["x <= 1"], "OBJECTIVE": "max x"}"#,
        ));
        let a = Agents::new(backend, Arc::new(Templates::builtin()), AgentSettings::default());
        let empty = RetrievedSet::empty(RetrievalKind::Modeling);
        let m = a
            .formulate(&mut CallLog::new("t"), &task(), &ParamSpec::default(), &Advisory { insights: vec![] }, &empty)
            .unwrap();
        assert_eq!(m.objective, "max x");
        let rendered = render_exemplars(&empty, false);
        assert_eq!(rendered, NO_EXEMPLAR);
    }

    #[test]
    fn formulate_missing_objective_fails() {
        let bad = r#"{"VARIABLES": "x", "CONSTRAINTS": []}"#;
        let a = agents(
            ScriptedBackend::new()
                .reply(roles::MODELING_EXPERT, 0, bad)
                .reply(roles::MODELING_EXPERT, 0, bad),
        );
        let err = a
            .formulate(
                &mut CallLog::new("t"),
                &task(),
                &ParamSpec::default(),
                &Advisory { insights: vec![] },
                &RetrievedSet::empty(RetrievalKind::Modeling),
            )
            .unwrap_err();
        assert!(matches!(err, AgentError::ReplyParse { .. }));
    }

    #[test]
    fn code_block_is_extracted_verbatim() {
        let a = agents(ScriptedBackend::new().reply(
            roles::CODE_EXPERT,
            0,
            "Here you go:\n```python\nimport math\nprint(7)\n```\nDone.",
        ));
        let p = a
            .generate_code(&mut CallLog::new("t"), &task(), &model(), &RetrievedSet::empty(RetrievalKind::Code))
            .unwrap();
        assert_eq!(p.source, "import math\nprint(7)");
        assert_eq!(p.solver_tag, "gurobipy");
    }

    #[test]
    fn prose_reply_has_no_code_block() {
        let a = agents(
            ScriptedBackend::new()
                .reply(roles::CODE_EXPERT, 0, "I would use a solver.")
                .reply(roles::CODE_EXPERT, 0, "Still prose."),
        );
        let err = a
            .generate_code(&mut CallLog::new("t"), &task(), &model(), &RetrievedSet::empty(RetrievalKind::Code))
            .unwrap_err();
        assert!(matches!(err, AgentError::NoCodeBlock { .. }));
    }

    const MODEL_TIP: &str = r#"{"tip_type": "modeling", "scenario": "s", "error_statement": "e",
        "correct_component": "c", "incorrect_model": "i"}"#;
    const MODEL_JSON: &str = r#"{"VARIABLES": "x", "CONSTRAINTS": ["x <= 2"], "OBJECTIVE": "max x"}"#;

    #[test]
    fn revise_model_whitespace_around_marker() {
        let reply = format!("\n  {MODEL_TIP}  \n   <split>   \n{MODEL_JSON}\n\n");
        let a = agents(ScriptedBackend::new().reply(roles::MODEL_REVISION, 1, reply));
        let r = a.revise_model(&mut CallLog::new("t"), 1, &task(), &model(), "IndexError", None).unwrap();
        assert_eq!(r.tip.kind, TipKind::Modeling);
        assert_eq!(r.corrected.constraints, ["x <= 2"]);
    }

    #[test]
    fn revise_model_without_marker_fails() {
        let reply = format!("{MODEL_TIP}\n{MODEL_JSON}");
        let a = agents(
            ScriptedBackend::new()
                .reply(roles::MODEL_REVISION, 1, reply.clone())
                .reply(roles::MODEL_REVISION, 1, reply),
        );
        let err = a.revise_model(&mut CallLog::new("t"), 1, &task(), &model(), "e", None).unwrap_err();
        assert!(matches!(err, AgentError::SplitFormat { .. }));
    }

    #[test]
    fn revise_code_missing_marker_fails() {
        let a = agents(
            ScriptedBackend::new()
                .reply(roles::CODE_REVISION, 1, "print(1)")
                .reply(roles::CODE_REVISION, 1, "print(1)"),
        );
        let prior = SolverProgram {
            source: "print(0)".into(),
            language_tag: "python".into(),
            solver_tag: "gurobipy".into(),
        };
        let err = a
            .revise_code(&mut CallLog::new("t"), 1, &task(), &prior, &model(), "e", None)
            .unwrap_err();
        assert!(matches!(err, AgentError::SplitFormat { .. }));
    }

    #[test]
    fn first_revision_renders_no_tip() {
        assert_eq!(render_tip(None), NO_TIP);
        let tip = RevisionTip {
            kind: TipKind::Code,
            scenario: "s".into(),
            error_statement: "e".into(),
            correct_fragment: "c".into(),
            incorrect_fragment: "i".into(),
        };
        assert!(render_tip(Some(&tip)).contains("\"correct_code_snippet\": \"c\""));
    }

    #[test]
    fn label_parses_confidence() {
        let l = parse_label(r#"{"problem_type": "LP", "problem_subtype": "Blending", "confidence": "0.8"}"#).unwrap();
        assert_eq!(l.confidence, 0.8);
        assert!(parse_label(r#"{"problem_type": "LP", "problem_subtype": "x"}"#).is_err());
    }

    #[test]
    fn exemplar_response_split() {
        let response = "## Mathematical Model:\n```{\n \"VARIABLES\": \"x1\",\n \"CONSTRAINTS\": [\"x1 <= 3\"],\n \"OBJECTIVE\": \"minimize 100*x1\"\n}```\n\n## Python Code:\n```python\nprint(1)\n```";
        let (model, code) = split_exemplar_response(response);
        assert_eq!(model.unwrap()["OBJECTIVE"], "minimize 100*x1");
        assert_eq!(code.unwrap(), "print(1)");
    }
}
