//! Runs candidate programs and classifies the result.
//!
//! The executor writes the program to `<workdir>/candidate`, starts the
//! runner as `<runner...> --file <path> --timeout-ms <n>` and expects exactly
//! one JSON object on the runner's stdout:
//!
//! ```json
//! {"status_word": "ok", "stdout": "10\n", "stderr": "", "exit_code": 0, "wall_ms": 41}
//! ```
//!
//! `status_word` is one of `ok`, `syntax_error`, `runtime_error`, `timeout`,
//! `runner_error`. A stub runner with scripted results stands in for the
//! external process in tests.

use std::collections::HashMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{ExecutionOutcome, OutcomeStatus, SolverProgram};

pub const OUTPUT_LIMIT: usize = 64 * 1024;
pub const DEFAULT_TIMEOUT_MS: u64 = 60_000;
pub const DEFAULT_MAX_CONCURRENT: usize = 4;
/// Extra wall time granted to the runner beyond the program timeout.
pub const GRACE: Duration = Duration::from_secs(2);
pub const NO_OBJECTIVE: &str = "no parseable objective";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatusWord {
    Ok,
    SyntaxError,
    RuntimeError,
    Timeout,
    RunnerError,
}

/// The runner's single protocol object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunnerResult {
    pub status_word: StatusWord,
    #[serde(default)]
    pub stdout: String,
    #[serde(default)]
    pub stderr: String,
    pub exit_code: i32,
    #[serde(default)]
    pub wall_ms: u64,
}

impl RunnerResult {
    pub fn ok(stdout: &str) -> Self {
        Self {
            status_word: StatusWord::Ok,
            stdout: stdout.to_owned(),
            stderr: String::new(),
            exit_code: 0,
            wall_ms: 0,
        }
    }

    pub fn failed(status_word: StatusWord, stderr: &str) -> Self {
        Self {
            status_word,
            stdout: String::new(),
            stderr: stderr.to_owned(),
            exit_code: 1,
            wall_ms: 0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("{NO_OBJECTIVE}")]
pub struct NoObjective;

fn numeric_token(token: &str) -> Option<f64> {
    let t = token.trim_matches(|c: char| ",;:()[]{}=\"'".contains(c));
    let t = t.strip_suffix('.').filter(|s| !s.is_empty()).unwrap_or(t);
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// First finite number on the first non-empty line; later lines are scanned
/// only when that line holds none.
pub fn parse_objective(stdout: &str) -> Result<f64, NoObjective> {
    stdout
        .lines()
        .filter(|l| !l.trim().is_empty())
        .find_map(|line| line.split_whitespace().find_map(numeric_token))
        .ok_or(NoObjective)
}

fn truncate(mut s: String, limit: usize) -> String {
    if s.len() > limit {
        let mut cut = limit;
        while !s.is_char_boundary(cut) {
            cut -= 1;
        }
        s.truncate(cut);
    }
    s
}

fn failure_message(result: &RunnerResult, fallback: &str) -> String {
    let stderr = result.stderr.trim();
    if stderr.is_empty() {
        fallback.to_owned()
    } else {
        stderr.to_owned()
    }
}

/// Maps a runner result to exactly one outcome status.
pub fn classify(result: RunnerResult, non_optimal_markers: &[String]) -> ExecutionOutcome {
    let stdout = truncate(result.stdout.clone(), OUTPUT_LIMIT);
    let stderr = truncate(result.stderr.clone(), OUTPUT_LIMIT);
    let outcome = |status, message: String| ExecutionOutcome {
        status,
        objective: None,
        error_message: Some(truncate(message, OUTPUT_LIMIT)),
        stdout: stdout.clone(),
        stderr: stderr.clone(),
        wall_ms: result.wall_ms,
    };
    match result.status_word {
        StatusWord::Ok if result.exit_code != 0 => outcome(
            OutcomeStatus::RunnerError,
            format!("runner reported ok with exit code {}", result.exit_code),
        ),
        StatusWord::Ok => {
            let lower = stdout.to_lowercase();
            if let Some(marker) = non_optimal_markers.iter().find(|m| lower.contains(&m.to_lowercase())) {
                return outcome(OutcomeStatus::SolverNotOptimal, format!("solver reported a non-optimal status ({marker})"));
            }
            match parse_objective(&stdout) {
                Ok(value) => ExecutionOutcome::success(value, stdout.clone(), stderr.clone(), result.wall_ms),
                Err(e) => outcome(OutcomeStatus::RuntimeFailure, e.to_string()),
            }
        }
        StatusWord::SyntaxError => outcome(OutcomeStatus::SyntaxFailure, failure_message(&result, "syntax error")),
        StatusWord::RuntimeError => outcome(OutcomeStatus::RuntimeFailure, failure_message(&result, "runtime error")),
        StatusWord::Timeout => outcome(
            OutcomeStatus::Timeout,
            format!("execution timed out after {} ms", result.wall_ms),
        ),
        StatusWord::RunnerError => outcome(OutcomeStatus::RunnerError, failure_message(&result, "runner error")),
    }
}

/// Scripted runner results keyed by execution round, optionally per task.
#[derive(Debug, Clone, Default)]
pub struct StubRunner {
    shared: HashMap<u32, RunnerResult>,
    per_task: HashMap<(String, u32), RunnerResult>,
    fallback: Option<RunnerResult>,
}

#[derive(Deserialize)]
struct StubLine {
    #[serde(default)]
    task_id: Option<String>,
    #[serde(default)]
    round: Option<u32>,
    #[serde(flatten)]
    result: RunnerResult,
}

impl StubRunner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn on_round(mut self, round: u32, result: RunnerResult) -> Self {
        self.shared.insert(round, result);
        self
    }

    pub fn on_task_round(mut self, task_id: &str, round: u32, result: RunnerResult) -> Self {
        self.per_task.insert((task_id.to_owned(), round), result);
        self
    }

    pub fn otherwise(mut self, result: RunnerResult) -> Self {
        self.fallback = Some(result);
        self
    }

    /// JSONL of runner results with optional `task_id` and `round`; a line
    /// with neither is the fallback.
    pub fn from_jsonl(text: &str) -> Result<Self, String> {
        let mut stub = Self::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let l: StubLine = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", idx + 1))?;
            stub = match (l.task_id, l.round) {
                (Some(t), Some(r)) => stub.on_task_round(&t, r, l.result),
                (None, Some(r)) => stub.on_round(r, l.result),
                (_, None) => stub.otherwise(l.result),
            };
        }
        Ok(stub)
    }

    pub fn from_file(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_jsonl(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    fn lookup(&self, task_id: &str, round: u32) -> Option<RunnerResult> {
        self.per_task
            .get(&(task_id.to_owned(), round))
            .or_else(|| self.shared.get(&round))
            .or(self.fallback.as_ref())
            .cloned()
    }
}

/// A runner command line, e.g. `["python3", "runner.py"]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalRunner {
    pub command: Vec<String>,
    /// Environment variables passed through; everything else is cleared.
    pub pass_env: Vec<String>,
}

impl ExternalRunner {
    pub fn new<S: Into<String>>(command: impl IntoIterator<Item = S>) -> Self {
        Self {
            command: command.into_iter().map(Into::into).collect(),
            pass_env: vec!["PATH".into(), "LANG".into()],
        }
    }
}

#[derive(Debug, Clone)]
pub enum Runner {
    External(ExternalRunner),
    Stub(StubRunner),
}

#[derive(Debug, Clone)]
pub struct RunRequest<'a> {
    pub task_id: &'a str,
    pub round: u32,
    pub program: &'a SolverProgram,
    pub timeout_ms: u64,
    /// Parent directory for the per-run isolated workdir.
    pub workdir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutorConfig {
    pub max_concurrent: usize,
    pub non_optimal_markers: Vec<String>,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        Self {
            max_concurrent: DEFAULT_MAX_CONCURRENT,
            non_optimal_markers: vec!["infeasible".into(), "unbounded".into()],
        }
    }
}

struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Permits);

impl Permits {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("permit pool poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("permit pool poisoned");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("permit pool poisoned") += 1;
        self.0.cv.notify_one();
    }
}

pub struct Executor {
    runner: Runner,
    config: ExecutorConfig,
    permits: Permits,
}

impl Executor {
    pub fn new(runner: Runner, config: ExecutorConfig) -> Self {
        let permits = Permits::new(config.max_concurrent);
        Self {
            runner,
            config,
            permits,
        }
    }

    pub fn stub(stub: StubRunner) -> Self {
        Self::new(Runner::Stub(stub), ExecutorConfig::default())
    }

    pub fn execute(&self, req: &RunRequest<'_>) -> ExecutionOutcome {
        if req.timeout_ms == 0 {
            return ExecutionOutcome::failure(OutcomeStatus::RunnerError, "timeout_ms must be positive");
        }
        let _permit = self.permits.acquire();
        let result = match &self.runner {
            Runner::Stub(stub) => stub.lookup(req.task_id, req.round).ok_or_else(|| {
                RunFailure::Protocol(format!(
                    "stub runner has no result for task {:?} round {}",
                    req.task_id, req.round
                ))
            }),
            Runner::External(runner) => run_external(runner, req),
        };
        match result {
            Ok(r) => classify(r, &self.config.non_optimal_markers),
            Err(RunFailure::Timeout(waited)) => {
                let mut o = ExecutionOutcome::failure(
                    OutcomeStatus::Timeout,
                    format!("runner exceeded {} ms and was killed", waited.as_millis()),
                );
                o.wall_ms = waited.as_millis() as u64;
                o
            }
            Err(RunFailure::Protocol(message)) => ExecutionOutcome::failure(OutcomeStatus::RunnerError, message),
        }
    }
}

enum RunFailure {
    Timeout(Duration),
    Protocol(String),
}

impl From<String> for RunFailure {
    fn from(s: String) -> Self {
        RunFailure::Protocol(s)
    }
}

fn kill_group(pid: u32) {
    // SAFETY: killpg only sends a signal; an already-reaped group yields ESRCH.
    unsafe {
        libc::killpg(pid as libc::pid_t, libc::SIGKILL);
    }
}

fn run_external(runner: &ExternalRunner, req: &RunRequest<'_>) -> Result<RunnerResult, RunFailure> {
    use std::os::unix::process::CommandExt;

    let (program, args) = runner
        .command
        .split_first()
        .ok_or_else(|| "runner command is empty".to_owned())?;
    let mut builder = tempfile::Builder::new();
    builder.prefix("candidate-");
    let workdir = match &req.workdir {
        Some(root) => {
            fs::create_dir_all(root).map_err(|e| format!("creating {}: {e}", root.display()))?;
            builder.tempdir_in(root)
        }
        None => builder.tempdir(),
    }
    .map_err(|e| format!("creating workdir: {e}"))?;
    let file = workdir.path().join("candidate");
    fs::write(&file, &req.program.source).map_err(|e| format!("writing {}: {e}", file.display()))?;

    let mut cmd = Command::new(program);
    cmd.args(args)
        .arg("--file")
        .arg(&file)
        .arg("--timeout-ms")
        .arg(req.timeout_ms.to_string())
        .current_dir(workdir.path())
        .env_clear()
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);
    for key in &runner.pass_env {
        if let Ok(v) = std::env::var(key) {
            cmd.env(key, v);
        }
    }
    let started = Instant::now();
    let mut child = cmd.spawn().map_err(|e| format!("spawning runner {program:?}: {e}"))?;
    let pid = child.id();
    let mut out_pipe = child.stdout.take().expect("stdout piped");
    let mut err_pipe = child.stderr.take().expect("stderr piped");
    let out_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = out_pipe.read_to_end(&mut buf);
        buf
    });
    let err_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = err_pipe.read_to_end(&mut buf);
        buf
    });

    let deadline = Duration::from_millis(req.timeout_ms) + GRACE;
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) if started.elapsed() >= deadline => {
                kill_group(pid);
                let _ = child.wait();
                // readers finish once every holder of the pipes is dead
                let _ = out_reader.join();
                let _ = err_reader.join();
                return Err(RunFailure::Timeout(started.elapsed()));
            }
            Ok(None) => thread::sleep(Duration::from_millis(5)),
            Err(e) => return Err(format!("waiting for runner: {e}").into()),
        }
    };
    // reap anything the runner left behind in its group
    kill_group(pid);
    let stdout = String::from_utf8_lossy(&out_reader.join().unwrap_or_default()).into_owned();
    let stderr = String::from_utf8_lossy(&err_reader.join().unwrap_or_default()).into_owned();
    let mut objects = serde_json::Deserializer::from_str(&stdout).into_iter::<RunnerResult>();
    let parsed = match (objects.next(), objects.next()) {
        (Some(Ok(r)), None) => r,
        (Some(Ok(_)), Some(_)) => return Err("runner printed more than one protocol object".to_owned().into()),
        (Some(Err(e)), _) => return Err(format!("malformed runner output ({status}): {e}; stderr: {}", stderr.trim()).into()),
        (None, _) => return Err(format!("runner printed no protocol object ({status}); stderr: {}", stderr.trim()).into()),
    };
    Ok(parsed)
}
