//! Executing a program through an external runner process.
//!
//! The runner gets `--file <path> --timeout-ms <n>` and prints one JSON
//! result. This one is a shell script that pretends to solve and reports
//! the program's last line. `cargo run --example external_runner`

use std::time::Instant;

use nl2opt::executor::{ExecutorConfig, ExternalRunner, RunRequest, Runner};
use nl2opt::{Executor, SolverProgram};

const RUNNER: &str = r#"#!/bin/sh
last=$(tail -n 1 "$2")
case "$last" in
  sleep*) sleep 30 ;;
  raise*) printf '%s\n' '{"status_word": "runtime_error", "stderr": "ValueError: bad data", "exit_code": 1}' ;;
  *) printf '{"status_word": "ok", "stdout": "%s", "exit_code": 0}\n' "$last" ;;
esac
"#;

pub fn run() -> anyhow::Result<String> {
    let dir = tempfile::tempdir()?;
    let script = dir.path().join("runner.sh");
    std::fs::write(&script, RUNNER)?;
    let runner = ExternalRunner::new(["sh".to_owned(), script.display().to_string()]);
    let executor = Executor::new(Runner::External(runner), ExecutorConfig::default());

    let mut out = String::new();
    for source in ["x = 1\n42.5", "raise ValueError('bad data')", "sleep"] {
        let program = SolverProgram {
            source: source.to_owned(),
            language_tag: "python".into(),
            solver_tag: "gurobipy".into(),
        };
        let started = Instant::now();
        let outcome = executor.execute(&RunRequest {
            task_id: "demo",
            round: 0,
            program: &program,
            timeout_ms: 200,
            workdir: None,
        });
        out += &format!(
            "{:?} objective={:?} error={:?} ({}s)\n",
            outcome.status,
            outcome.objective,
            outcome.error_message,
            started.elapsed().as_secs()
        );
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    print!("{}", run()?);
    Ok(())
}
