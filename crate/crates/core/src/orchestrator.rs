//! Generation phase, execution and the revision loop for one task.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::agents::{render_params, AgentError, Agents, CallLog, CallRecord, NO_COMMENT};
use crate::backend::roles;
use crate::executor::{Executor, RunRequest, DEFAULT_TIMEOUT_MS};
use crate::hrag::{self, Embedder, Library, MmrParams, RetrievalKind, RetrievedSet, EXEMPLAR_CAP};
use crate::memory::{GlobalMemory, GlobalRecord, LocalMemory, MemoryRound};
use crate::types::{validate_task, Advisory, ExecutionOutcome, MathModel, OutcomeStatus, ParamSpec, SolverProgram, Task};

pub const EXECUTOR_ROLE: &str = "executor";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub max_revisions: u32,
    pub enable_iar: bool,
    pub enable_hrag: bool,
    pub timeout_ms: u64,
    pub mmr: MmrParams,
    pub exemplar_cap: usize,
    /// Parent directory for per-execution workdirs; the system temp dir when unset.
    pub workdir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            max_revisions: 3,
            enable_iar: true,
            enable_hrag: true,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            mmr: MmrParams::default(),
            exemplar_cap: EXEMPLAR_CAP,
            workdir: None,
        }
    }
}

/// One retrieval for one consumer (modeling or code).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRecord {
    pub kind: RetrievalKind,
    pub type_hint: Option<String>,
    /// Library lines of the coarse candidates, in retrieval order.
    pub candidate_lines: Vec<usize>,
    pub delivered: RetrievedSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub llm_calls: u32,
    pub retrieval_calls: u32,
    pub embedding_calls: u32,
    pub executions: u32,
}

/// A revision round whose agents failed before anything was executed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbortedRevision {
    pub round: u32,
    pub error: String,
}

/// Everything one task produced, in call order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskTrace {
    pub task_id: String,
    pub param: Option<ParamSpec>,
    pub advisory: Option<Advisory>,
    pub model: Option<MathModel>,
    pub program: Option<SolverProgram>,
    pub retrievals: Vec<RetrievalRecord>,
    /// Round 0 is the generation phase; later rounds are revisions.
    pub rounds: Vec<MemoryRound>,
    pub calls: Vec<CallRecord>,
    pub counters: Counters,
    pub aborted_revision: Option<AbortedRevision>,
    pub final_status: OutcomeStatus,
    pub final_objective: Option<f64>,
    pub pipeline_error: Option<String>,
    pub revision_count: u32,
}

impl TaskTrace {
    fn new(task_id: &str) -> Self {
        Self {
            task_id: task_id.to_owned(),
            param: None,
            advisory: None,
            model: None,
            program: None,
            retrievals: Vec::new(),
            rounds: Vec::new(),
            calls: Vec::new(),
            counters: Counters::default(),
            aborted_revision: None,
            final_status: OutcomeStatus::PipelineError,
            final_objective: None,
            pipeline_error: None,
            revision_count: 0,
        }
    }

    pub fn last_outcome(&self) -> Option<&ExecutionOutcome> {
        self.rounds.last().map(|r| &r.outcome)
    }

    /// `ACCEPT after 2 revisions`
    pub fn summary(&self) -> String {
        let plural = if self.revision_count == 1 { "revision" } else { "revisions" };
        format!("{} after {} {plural}", self.final_status.summary_label(), self.revision_count)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("traces serialize")
    }
}

/// Library plus the embedder its vectors came from.
#[derive(Clone)]
pub struct Retrieval {
    pub library: Arc<Library>,
    pub embedder: Arc<dyn Embedder>,
}

/// Shared, concurrency-safe dependencies of the pipeline.
#[derive(Clone)]
pub struct Pipeline {
    pub agents: Agents,
    pub retrieval: Option<Retrieval>,
    pub executor: Arc<Executor>,
    pub global: Arc<GlobalMemory>,
    pub config: PipelineConfig,
}

/// Per-task mutable state while the pipeline runs.
struct Run<'a> {
    task: &'a Task,
    trace: TaskTrace,
    log: CallLog,
    memory: LocalMemory,
}

impl Run<'_> {
    fn sync_calls(&mut self) {
        self.trace.calls = self.log.calls.clone();
        self.trace.counters.llm_calls = self.log.calls.len() as u32;
    }
}

impl Pipeline {
    pub fn with_config(&self, config: PipelineConfig) -> Self {
        Self {
            config,
            ..self.clone()
        }
    }

    /// Runs the generation phase and, when it fails, the revision loop.
    pub fn solve(&self, task: &Task) -> TaskTrace {
        let mut run = Run {
            task,
            trace: TaskTrace::new(&task.id),
            log: CallLog::new(&task.id),
            memory: LocalMemory::new(&task.id),
        };
        if let Err(e) = self.generation(&mut run) {
            run.trace.pipeline_error = Some(e.to_string());
            run.trace.final_status = OutcomeStatus::PipelineError;
        } else {
            self.revision_loop(&mut run);
        }
        run.sync_calls();
        run.trace.rounds = run.memory.rounds;
        run.trace
    }

    fn global(&self, task: &Task, role: &str, round: u32, payload: serde_json::Value) {
        self.global.append(GlobalRecord::new(&task.id, role, round, payload));
    }

    fn retrieve(&self, run: &mut Run<'_>, kind: RetrievalKind, query: &str, type_hint: Option<String>) -> RetrievedSet {
        let Some(retrieval) = self.retrieval.as_ref().filter(|_| self.config.enable_hrag) else {
            return RetrievedSet::empty(kind);
        };
        run.trace.counters.retrieval_calls += 1;
        run.trace.counters.embedding_calls += 1;
        let coarse = hrag::coarse_retrieve(
            &retrieval.library,
            retrieval.embedder.as_ref(),
            query,
            &self.config.mmr,
            type_hint.as_deref(),
        );
        let (delivered, candidate_lines, error) = match coarse {
            Ok(candidates) => {
                let lines = candidates.iter().map(|e| e.source_line).collect();
                let set = hrag::rerank(&self.agents, &mut run.log, &candidates, run.task, kind, self.config.exemplar_cap);
                (set, lines, None)
            }
            Err(e) => {
                tracing::warn!(task = %run.task.id, "retrieval degraded to empty signal: {e}");
                (RetrievedSet::empty(kind), Vec::new(), Some(e.to_string()))
            }
        };
        run.trace.retrievals.push(RetrievalRecord {
            kind,
            type_hint,
            candidate_lines,
            delivered: delivered.clone(),
            error,
        });
        delivered
    }

    fn execute(&self, run: &mut Run<'_>, round: u32, program: &SolverProgram) -> ExecutionOutcome {
        run.trace.counters.executions += 1;
        let outcome = self.executor.execute(&RunRequest {
            task_id: &run.task.id,
            round,
            program,
            timeout_ms: self.config.timeout_ms,
            workdir: self.config.workdir.clone(),
        });
        self.global(run.task, EXECUTOR_ROLE, round, json!(outcome));
        outcome
    }

    fn generation(&self, run: &mut Run<'_>) -> Result<(), AgentError> {
        let task = &validate_task(run.task.clone())?;
        let agents = &self.agents;

        let param = agents.extract_parameters(&mut run.log, task, NO_COMMENT)?;
        self.global(task, roles::PARAM_EXTRACTOR, 0, json!(param));
        run.trace.param = Some(param.clone());

        let advisory = agents.advise(&mut run.log, task, &render_params(&param))?;
        self.global(task, roles::MODELING_ADVISOR, 0, json!(advisory));
        run.trace.advisory = Some(advisory.clone());

        let hint = advisory.essence().and_then(hrag::type_hint_from_essence);
        let model_set = self.retrieve(run, RetrievalKind::Modeling, &task.text, hint.clone());
        let model = agents.formulate(&mut run.log, task, &param, &advisory, &model_set)?;
        self.global(task, roles::MODELING_EXPERT, 0, json!(model));
        run.trace.model = Some(model.clone());

        let code_query = format!("{}\n{}", task.text, model.to_prompt_json());
        let code_set = self.retrieve(run, RetrievalKind::Code, &code_query, hint);
        let program = agents.generate_code(&mut run.log, task, &model, &code_set)?;
        self.global(task, roles::CODE_EXPERT, 0, json!(program));
        run.trace.program = Some(program.clone());

        let outcome = self.execute(run, 0, &program);
        self.finish_round(run, MemoryRound {
            round: 0,
            model,
            program,
            outcome,
            model_tip: None,
            code_tip: None,
        });
        Ok(())
    }

    fn finish_round(&self, run: &mut Run<'_>, entry: MemoryRound) {
        run.trace.final_status = entry.outcome.status;
        run.trace.final_objective = entry.outcome.objective;
        run.trace.revision_count = entry.round;
        run.memory
            .record_round(entry)
            .expect("rounds are recorded in order by construction");
    }

    fn revision_loop(&self, run: &mut Run<'_>) {
        if !self.config.enable_iar {
            return;
        }
        for round in 1..=self.config.max_revisions {
            let last = run.memory.last().expect("generation recorded round 0");
            if last.outcome.succeeded() {
                return;
            }
            let error = last
                .outcome
                .error_message
                .clone()
                .unwrap_or_else(|| last.outcome.status.to_string());
            let (prior_model, prior_program) = (last.model.clone(), last.program.clone());
            let (model_tip, code_tip) = run.memory.last_tips();
            let (model_tip, code_tip) = (model_tip.cloned(), code_tip.cloned());

            let revised = self
                .agents
                .revise_model(&mut run.log, round, run.task, &prior_model, &error, model_tip.as_ref())
                .and_then(|m| {
                    self.global(run.task, roles::MODEL_REVISION, round, json!({"tip": m.tip, "model": m.corrected}));
                    let c = self.agents.revise_code(
                        &mut run.log,
                        round,
                        run.task,
                        &prior_program,
                        &m.corrected,
                        &error,
                        code_tip.as_ref(),
                    )?;
                    self.global(run.task, roles::CODE_REVISION, round, json!({"tip": c.tip, "program": c.corrected}));
                    Ok((m, c))
                });
            let (m, c) = match revised {
                Ok(pair) => pair,
                Err(e) => {
                    tracing::warn!(task = %run.task.id, round, "revision aborted: {e}");
                    run.trace.aborted_revision = Some(AbortedRevision {
                        round,
                        error: e.to_string(),
                    });
                    return;
                }
            };
            let outcome = self.execute(run, round, &c.corrected);
            self.finish_round(run, MemoryRound {
                round,
                model: m.corrected,
                program: c.corrected,
                outcome,
                model_tip: Some(m.tip),
                code_tip: Some(c.tip),
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{AgentSettings, Templates};
    use crate::backend::ScriptedBackend;
    use crate::executor::{RunnerResult, StatusWord, StubRunner};

    const TIP_M: &str = r#"{"tip_type": "Modeling", "scenario": "s", "error_statement": "e", "correct_component": "c", "incorrect_model": "i"}"#;
    const TIP_C: &str = r#"{"tip_type": "Code", "scenario": "s", "error_statement": "e", "correct_code_snippet": "c", "incorrect_code_snippet": "i"}"#;
    const MODEL: &str = r#"{"VARIABLES": "x >= 0", "CONSTRAINTS": ["x <= 4"], "OBJECTIVE": "maximize x"}"#;

    fn backend() -> ScriptedBackend {
        let mut b = ScriptedBackend::new()
            .reply(roles::PARAM_EXTRACTOR, 0, r#"{"Cap": {"Type": "int", "Definition": "capacity"}}"#)
            .reply(
                roles::MODELING_ADVISOR,
                0,
                r#"[{"category": "Problem Essence", "insight": "a linear program"}]"#,
            )
            .reply(roles::MODELING_EXPERT, 0, MODEL)
            .reply(roles::CODE_EXPERT, 0, "```python\nprint(4)\n```");
        for round in 1..=5 {
            b = b
                .reply(roles::MODEL_REVISION, round, format!("{TIP_M}\n<split>\n{MODEL}"))
                .reply(
                    roles::CODE_REVISION,
                    round,
                    format!("{TIP_C}\n<split>\n\"print({round})\""),
                );
        }
        b
    }

    fn pipeline(backend: ScriptedBackend, stub: StubRunner, config: PipelineConfig) -> Pipeline {
        Pipeline {
            agents: Agents::new(Arc::new(backend), Arc::new(Templates::builtin()), AgentSettings::default()),
            retrieval: None,
            executor: Arc::new(Executor::stub(stub)),
            global: Arc::new(GlobalMemory::in_memory()),
            config,
        }
    }

    fn fail() -> RunnerResult {
        RunnerResult::failed(StatusWord::RuntimeError, "boom")
    }

    #[test]
    fn happy_path() {
        let p = pipeline(backend(), StubRunner::new().otherwise(RunnerResult::ok("4")), PipelineConfig::default());
        let t = p.solve(&Task::new("t", "maximize x"));
        assert_eq!(t.final_status, OutcomeStatus::Accept);
        assert_eq!(t.revision_count, 0);
        assert_eq!(t.counters.llm_calls, 4);
        assert_eq!(t.counters.executions, 1);
        // 4 agent artifacts + 1 execution
        assert_eq!(p.global.len(), 5);
    }

    #[test]
    fn always_failing_exhausts_revisions() {
        let p = pipeline(backend(), StubRunner::new().otherwise(fail()), PipelineConfig::default());
        let t = p.solve(&Task::new("t", "maximize x"));
        assert_eq!(t.revision_count, 3);
        assert_eq!(t.rounds.len(), 4);
        assert_eq!(t.counters.executions, 4);
        assert_eq!(t.final_status, OutcomeStatus::RuntimeFailure);
    }

    #[test]
    fn zero_revisions_boundary() {
        let cfg = PipelineConfig {
            max_revisions: 0,
            ..PipelineConfig::default()
        };
        let p = pipeline(backend(), StubRunner::new().otherwise(fail()), cfg);
        let t = p.solve(&Task::new("t", "maximize x"));
        assert_eq!((t.revision_count, t.final_status), (0, OutcomeStatus::RuntimeFailure));
    }

    #[test]
    fn success_at_round_two_stops() {
        let stub = StubRunner::new().otherwise(fail()).on_round(2, RunnerResult::ok("2"));
        let p = pipeline(backend(), stub, PipelineConfig::default());
        let t = p.solve(&Task::new("t", "maximize x"));
        assert_eq!(t.revision_count, 2);
        assert_eq!(t.final_objective, Some(2.0));
        assert_eq!(t.summary(), "ACCEPT after 2 revisions");
    }

    #[test]
    fn agent_failure_is_pipeline_error() {
        let b = ScriptedBackend::new().reply(roles::PARAM_EXTRACTOR, 0, "nope");
        let p = pipeline(b, StubRunner::new(), PipelineConfig::default());
        let t = p.solve(&Task::new("t", "x"));
        assert_eq!(t.final_status, OutcomeStatus::PipelineError);
        assert!(t.pipeline_error.is_some());
        assert_eq!(t.counters.executions, 0);
        // one call plus its single repair attempt
        assert_eq!(t.calls.len(), 2);
    }

    #[test]
    fn invalid_task_is_pipeline_error() {
        let p = pipeline(backend(), StubRunner::new(), PipelineConfig::default());
        let t = p.solve(&Task::new("t", "  "));
        assert_eq!(t.final_status, OutcomeStatus::PipelineError);
        assert!(t.calls.is_empty());
    }

    #[test]
    fn broken_revision_keeps_prior_status() {
        // both the first attempt and the repair attempt lack the split marker
        let replay = [
            json!({"role": roles::PARAM_EXTRACTOR, "round": 0, "reply": "{}"}),
            json!({"role": roles::MODELING_ADVISOR, "round": 0, "reply": r#"[{"category": "Problem Key Point", "insight": "k"}]"#}),
            json!({"role": roles::MODELING_EXPERT, "round": 0, "reply": MODEL}),
            json!({"role": roles::CODE_EXPERT, "round": 0, "reply": "```python\nprint(1)\n```"}),
            json!({"role": roles::MODEL_REVISION, "round": 1, "reply": "no marker"}),
            json!({"role": roles::MODEL_REVISION, "round": 1, "reply": "still none"}),
        ]
        .map(|l| l.to_string())
        .join("\n");
        let b = ScriptedBackend::from_replay_str(&replay).unwrap();
        let p = pipeline(b, StubRunner::new().otherwise(fail()), PipelineConfig::default());
        let t = p.solve(&Task::new("t", "maximize x"));
        assert_eq!(t.revision_count, 0);
        assert_eq!(t.final_status, OutcomeStatus::RuntimeFailure);
        assert_eq!(t.aborted_revision.as_ref().map(|a| a.round), Some(1));
        assert_eq!(t.counters.executions, 1);
    }

    #[test]
    fn iar_off_never_revises() {
        let cfg = PipelineConfig {
            enable_iar: false,
            ..PipelineConfig::default()
        };
        let p = pipeline(backend(), StubRunner::new().otherwise(fail()), cfg);
        let t = p.solve(&Task::new("t", "maximize x"));
        assert_eq!(t.summary(), "COMPILE_ERROR after 0 revisions");
        assert_eq!(t.calls.iter().filter(|c| c.round > 0).count(), 0);
    }
}
