//! Growing an exemplar library from solved tasks.
//!
//! Only tasks whose program reproduces the reference value and whose label
//! clears the confidence threshold are kept. `cargo run --example build_library`

use std::sync::Arc;

use nl2opt::agents::{AgentSettings, Agents, Templates};
use nl2opt::backend::roles;
use nl2opt::curation::{build_library, library_stats, write_curated, CurationConfig};
use nl2opt::memory::GlobalMemory;
use nl2opt::orchestrator::{Pipeline, PipelineConfig};
use nl2opt::{Executor, RunnerResult, ScriptedBackend, StatusWord, StubRunner, Task};

pub fn run() -> anyhow::Result<String> {
    let backend = ScriptedBackend::new()
        .reply(roles::PARAM_EXTRACTOR, 0, r#"{"Budget": {"Type": "float", "Definition": "spending limit"}}"#)
        .reply(roles::MODELING_ADVISOR, 0, r#"[{"category": "Problem Essence", "insight": "A knapsack, so an integer program (IP)."}]"#)
        .reply(roles::MODELING_EXPERT, 0, r#"{"VARIABLES": "y_i binary", "CONSTRAINTS": ["sum w_i y_i <= 10"], "OBJECTIVE": "maximize sum v_i y_i"}"#)
        .reply(roles::CODE_EXPERT, 0, "```python\nprint(90)\n```")
        .task_reply("k1", roles::LIBRARY_LABELER, 0, r#"{"problem_type": "Integer Programming (IP)", "problem_subtype": "Knapsack", "confidence": 0.95}"#)
        .task_reply("k2", roles::LIBRARY_LABELER, 0, r#"{"problem_type": "Integer Programming (IP)", "problem_subtype": "Knapsack", "confidence": 0.3}"#);
    let stub = StubRunner::new()
        .otherwise(RunnerResult::failed(StatusWord::SyntaxError, "SyntaxError: invalid syntax"))
        .on_task_round("k1", 0, RunnerResult::ok("90"))
        .on_task_round("k2", 0, RunnerResult::ok("90"))
        .on_task_round("k3", 0, RunnerResult::ok("85"));
    let pipeline = Pipeline {
        agents: Agents::new(Arc::new(backend), Arc::new(Templates::builtin()), AgentSettings::default()),
        retrieval: None,
        executor: Arc::new(Executor::stub(stub)),
        global: Arc::new(GlobalMemory::in_memory()),
        config: PipelineConfig {
            enable_hrag: false,
            enable_iar: false,
            ..PipelineConfig::default()
        },
    };
    let tasks: Vec<Task> = ["k1", "k2", "k3", "k4"]
        .iter()
        .map(|id| Task::new(*id, format!("Knapsack {id}: pick items under a weight limit of 10.")).with_ground_truth(90.0))
        .collect();

    let curated = build_library(&tasks, &pipeline, &CurationConfig::default());
    let mut out = String::new();
    for i in &curated.manifest.instances {
        out += &format!("{}: {:?}\n", i.task_id, i.disposition);
    }
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("library.jsonl");
    let sidecar = write_curated(&path, &curated)?;
    out += &format!("manifest: {}\n", sidecar.file_name().unwrap_or_default().to_string_lossy());
    out += &format!("{}\n", library_stats(&path)?);
    Ok(out)
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    print!("{}", run()?);
    Ok(())
}
