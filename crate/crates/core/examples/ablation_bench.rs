//! Benchmarking a small suite with and without retrieval and revision.
//!
//! Six scripted tasks: two solve at once, two need one revision, one
//! prints a wrong value and one never runs. `cargo run --example ablation_bench`

use std::sync::Arc;

use nl2opt::agents::{AgentSettings, Agents, Templates};
use nl2opt::backend::roles;
use nl2opt::eval::{run_ablation, Variant};
use nl2opt::hrag::{parse_library, HashEmbedder, Library};
use nl2opt::memory::GlobalMemory;
use nl2opt::orchestrator::{Pipeline, PipelineConfig, Retrieval};
use nl2opt::{Executor, RunnerResult, ScriptedBackend, StatusWord, StubRunner, Task};

const MODEL: &str = r#"{"VARIABLES": "x >= 0", "CONSTRAINTS": ["x <= 4"], "OBJECTIVE": "maximize x"}"#;

fn backend() -> ScriptedBackend {
    let mut b = ScriptedBackend::new()
        .reply(roles::PARAM_EXTRACTOR, 0, r#"{"Cap": {"Type": "float", "Definition": "plant capacity"}}"#)
        .reply(roles::MODELING_ADVISOR, 0, r#"[{"category": "Problem Essence", "insight": "A linear program (LP)."}]"#)
        .reply(roles::RERANK_MODELING, 0, "[0]")
        .reply(roles::RERANK_CODE, 0, "[0]")
        .reply(roles::MODELING_EXPERT, 0, MODEL)
        .reply(roles::CODE_EXPERT, 0, "```python\nprint(4)\n```");
    for round in 1..=3 {
        let tip = |kind: &str, good: &str, bad: &str| {
            format!(r#"{{"tip_type": "{kind}", "scenario": "capacity", "error_statement": "fix", "{good}": "c", "{bad}": "i"}}"#)
        };
        b = b
            .reply(roles::MODEL_REVISION, round, format!("{}\n<split>\n{MODEL}", tip("modeling", "correct_component", "incorrect_model")))
            .reply(
                roles::CODE_REVISION,
                round,
                format!("{}\n<split>\n\"print(4)\"", tip("code", "correct_code_snippet", "incorrect_code_snippet")),
            );
    }
    b
}

fn stub() -> StubRunner {
    StubRunner::new()
        .otherwise(RunnerResult::failed(StatusWord::RuntimeError, "NameError: name 'y' is not defined"))
        .on_task_round("p0", 0, RunnerResult::ok("4"))
        .on_task_round("p1", 0, RunnerResult::ok("4"))
        .on_task_round("p2", 1, RunnerResult::ok("4"))
        .on_task_round("p3", 1, RunnerResult::ok("4"))
        .on_task_round("p4", 0, RunnerResult::ok("5"))
}

pub fn run() -> anyhow::Result<String> {
    let tasks: Vec<Task> = (0..6)
        .map(|i| {
            Task::new(format!("p{i}"), format!("Plant {i} makes at most 4 tons. Maximize output."))
                .with_ground_truth(4.0)
                .with_dataset(if i < 3 { "north" } else { "south" })
        })
        .collect();
    let lib_text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/library.jsonl"))?;
    let embedder = Arc::new(HashEmbedder::default());
    let library = Library::build(parse_library(&lib_text, "library.jsonl"), embedder.as_ref())?;
    let pipeline = Pipeline {
        agents: Agents::new(Arc::new(backend()), Arc::new(Templates::builtin()), AgentSettings::default()),
        retrieval: Some(Retrieval {
            library: Arc::new(library),
            embedder,
        }),
        executor: Arc::new(Executor::stub(stub())),
        global: Arc::new(GlobalMemory::in_memory()),
        config: PipelineConfig::default(),
    };
    let (report, _runs) = run_ablation(&tasks, &pipeline, &Variant::parse_ablate("all").map_err(anyhow::Error::msg)?, 4)?;
    Ok(report.to_markdown())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    print!("{}", run()?);
    Ok(())
}
