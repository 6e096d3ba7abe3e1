#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use nl2opt::agents::{AgentSettings, Agents, Templates};
use nl2opt::hrag::{parse_library, Embedder, HashEmbedder, Library};
use nl2opt::memory::GlobalMemory;
use nl2opt::orchestrator::{Pipeline, PipelineConfig, Retrieval};
use nl2opt::{ChatBackend, Executor, ScriptedBackend, StubRunner, Task};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub fn read_fixture(rel: &str) -> String {
    std::fs::read_to_string(fixture(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn case_task() -> Task {
    serde_json::from_str(&read_fixture("multi_product_transport/task.json")).unwrap()
}

pub fn case_backend() -> ScriptedBackend {
    ScriptedBackend::from_replay_str(&read_fixture("multi_product_transport/replay.jsonl")).unwrap()
}

pub fn case_stub() -> StubRunner {
    StubRunner::from_jsonl(&read_fixture("multi_product_transport/stub_outcomes.jsonl")).unwrap()
}

/// The fixture library, labeled with a stable source so traces do not depend on the checkout path.
pub fn fixture_retrieval(embedder: Arc<dyn Embedder>) -> Retrieval {
    let exemplars = parse_library(&read_fixture("library.jsonl"), "library.jsonl");
    let library = Library::build(exemplars, &HashEmbedder::default()).unwrap();
    Retrieval {
        library: Arc::new(library),
        embedder,
    }
}

pub fn pipeline(backend: impl ChatBackend + 'static, stub: StubRunner, retrieval: Option<Retrieval>, config: PipelineConfig) -> Pipeline {
    Pipeline {
        agents: Agents::new(Arc::new(backend), Arc::new(Templates::builtin()), AgentSettings::default()),
        retrieval,
        executor: Arc::new(Executor::stub(stub)),
        global: Arc::new(GlobalMemory::in_memory()),
        config,
    }
}

/// The transport case wired with the fixture library.
pub fn case_pipeline(config: PipelineConfig) -> Pipeline {
    let retrieval = fixture_retrieval(Arc::new(HashEmbedder::default()));
    pipeline(case_backend(), case_stub(), Some(retrieval), config)
}

pub const SUITE_SIZE: usize = 10;
pub const SUITE_ANSWER: f64 = 4.0;

pub fn suite_backend() -> ScriptedBackend {
    use nl2opt::backend::roles;
    const MODEL: &str = r#"{"VARIABLES": "x >= 0, continuous", "CONSTRAINTS": ["x <= 4"], "OBJECTIVE": "maximize x"}"#;
    let mut b = ScriptedBackend::new()
        .reply(roles::PARAM_EXTRACTOR, 0, r#"{"Cap": {"Type": "float", "Definition": "capacity of the plant"}}"#)
        .reply(
            roles::MODELING_ADVISOR,
            0,
            r#"[{"category": "Problem Essence", "insight": "A linear program (LP) with one bounded variable."}]"#,
        )
        .reply(roles::RERANK_MODELING, 0, "[0]")
        .reply(roles::RERANK_CODE, 0, "[1, 0]")
        .reply(roles::MODELING_EXPERT, 0, MODEL)
        .reply(roles::CODE_EXPERT, 0, "```python\nprint(4.0)\n```");
    for round in 1..=3 {
        b = b
            .reply(
                roles::MODEL_REVISION,
                round,
                format!(
                    r#"{{"tip_type": "modeling", "scenario": "capacity", "error_statement": "bound missing", "correct_component": "x <= 4", "incorrect_model": "x unbounded"}}
<split>
{MODEL}"#
                ),
            )
            .reply(
                roles::CODE_REVISION,
                round,
                r#"{"tip_type": "code", "scenario": "capacity", "error_statement": "no output", "correct_code_snippet": "print(4.0)", "incorrect_code_snippet": "pass"}
<split>
"print(4.0)""#,
            );
    }
    b
}

pub fn suite_stub() -> StubRunner {
    use nl2opt::{RunnerResult, StatusWord};
    let mut stub = StubRunner::new().otherwise(RunnerResult::failed(StatusWord::RuntimeError, "NameError: name 'y' is not defined"));
    for i in 0..SUITE_SIZE {
        let id = suite_id(i);
        stub = match i {
            0..=3 => stub.on_task_round(&id, 0, RunnerResult::ok("4.0")),
            4..=6 => stub.on_task_round(&id, 1, RunnerResult::ok("4.0")),
            7 => stub.on_task_round(&id, 0, RunnerResult::ok("5.0")),
            _ => stub,
        };
    }
    stub
}

pub fn suite_id(i: usize) -> String {
    format!("plant-{i:02}")
}

/// Ten tasks over two datasets: four solved at once, three after one
/// revision, one wrong answer and two that fail every round.
pub fn suite_tasks() -> Vec<Task> {
    (0..SUITE_SIZE)
        .map(|i| {
            Task::new(suite_id(i), format!("Plant {i} can make at most 4 tons of product. How many tons should it make to maximize output?"))
                .with_ground_truth(SUITE_ANSWER)
                .with_dataset(if i % 2 == 0 { "alpha" } else { "beta" })
        })
        .collect()
}

/// The suite pipeline plus the embedder it queries, for counting calls.
pub fn suite_pipeline() -> (Pipeline, Arc<nl2opt::hrag::CountingEmbedder<HashEmbedder>>) {
    let embedder = Arc::new(nl2opt::hrag::CountingEmbedder::new(HashEmbedder::default()));
    let retrieval = fixture_retrieval(embedder.clone());
    (pipeline(suite_backend(), suite_stub(), Some(retrieval), PipelineConfig::default()), embedder)
}
