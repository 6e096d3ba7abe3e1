//! Turns natural-language optimization problems into mathematical models and
//! runnable solver programs, then repairs them from execution feedback.
//!
//! The pipeline: parameter extraction and advisory, retrieval of worked
//! exemplars, model formulation and code generation, execution, and an
//! iterative revision loop that keeps tips from earlier rounds.

pub mod agents;
pub mod backend;
pub mod cli;
pub mod config;
pub mod curation;
pub mod eval;
pub mod executor;
pub mod hrag;
pub mod memory;
pub mod orchestrator;
pub mod types;

pub use backend::{CallKey, ChatBackend, ChatRequest, HttpBackend, ScriptedBackend};
pub use executor::{Executor, RunnerResult, StatusWord, StubRunner};
pub use types::{ExecutionOutcome, MathModel, OutcomeStatus, SolverProgram, Task};
