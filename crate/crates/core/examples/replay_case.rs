//! A full solve replayed from recorded agent replies and runner outcomes.
//!
//! The transport case fails twice at execution and is fixed by two
//! revision rounds. `cargo run --example replay_case`

use std::path::Path;
use std::sync::Arc;

use nl2opt::agents::{AgentSettings, Agents, Templates};
use nl2opt::hrag::{parse_library, HashEmbedder, Library};
use nl2opt::memory::GlobalMemory;
use nl2opt::orchestrator::{Pipeline, PipelineConfig, Retrieval};
use nl2opt::{Executor, ScriptedBackend, StubRunner, Task};

pub fn run() -> anyhow::Result<String> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let read = |rel: &str| std::fs::read_to_string(dir.join(rel));
    let task: Task = serde_json::from_str(&read("multi_product_transport/task.json")?)?;
    let backend = ScriptedBackend::from_replay_str(&read("multi_product_transport/replay.jsonl")?).map_err(anyhow::Error::msg)?;
    let stub = StubRunner::from_jsonl(&read("multi_product_transport/stub_outcomes.jsonl")?).map_err(anyhow::Error::msg)?;

    let embedder = Arc::new(HashEmbedder::default());
    let library = Library::build(parse_library(&read("library.jsonl")?, "library.jsonl"), embedder.as_ref())?;
    let pipeline = Pipeline {
        agents: Agents::new(Arc::new(backend), Arc::new(Templates::builtin()), AgentSettings::default()),
        retrieval: Some(Retrieval {
            library: Arc::new(library),
            embedder,
        }),
        executor: Arc::new(Executor::stub(stub)),
        global: Arc::new(GlobalMemory::in_memory()),
        config: PipelineConfig::default(),
    };

    let trace = pipeline.solve(&task);
    let mut out = format!("{}\n", trace.summary());
    for r in &trace.rounds {
        out += &format!("round {}: {:?}", r.round, r.outcome.status);
        if let Some(e) = &r.outcome.error_message {
            out += &format!(" ({})", e.lines().last().unwrap_or(""));
        }
        out += "\n";
        if let Some(tip) = &r.code_tip {
            out += &format!("  code tip: {}\n", tip.error_statement);
        }
    }
    out += &format!("objective: {:?}\n", trace.final_objective);
    out += &format!("llm calls: {}, journal records: {}\n", trace.counters.llm_calls, pipeline.global.len());
    Ok(out)
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    print!("{}", run()?);
    Ok(())
}
