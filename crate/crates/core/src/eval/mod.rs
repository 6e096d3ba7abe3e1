//! Judging, pass@1 aggregation and error decomposition.

pub mod bench;
pub mod dataset;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::ExecutionOutcome;

pub use bench::{run_ablation, run_benchmark, AblationReport, BenchRun, DatasetRow, Report, TaskResult, Variant};
pub use dataset::{load_dataset, DatasetAdapter};

pub const REL_TOLERANCE: f64 = 1e-3;
pub const ABS_TOLERANCE: f64 = 1e-1;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("cannot aggregate an empty set")]
    EmptySet,
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}:{line}: {message}")]
    Schema { path: String, line: usize, message: String },
    #[error("task {task_id} has no ground truth to judge against")]
    MissingGroundTruth { task_id: String },
    #[error("benchmark setup failed: {0}")]
    Setup(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Correct,
    WrongAnswer,
    ExecutionFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub verdict: Verdict,
    pub rel_error: Option<f64>,
    pub abs_error: Option<f64>,
}

/// Relative tolerance against a nonzero reference, absolute tolerance at zero.
/// Both comparisons are strict.
pub fn judge_solution(y_star: f64, outcome: &ExecutionOutcome) -> Judgment {
    match outcome.objective {
        Some(y_hat) => judge_value(y_star, y_hat),
        None => Judgment {
            verdict: Verdict::ExecutionFailure,
            rel_error: None,
            abs_error: None,
        },
    }
}

pub fn judge_value(y_star: f64, y_hat: f64) -> Judgment {
    let abs_error = (y_star - y_hat).abs();
    let (rel_error, correct) = if y_star != 0.0 {
        let rel = abs_error / y_star.abs();
        (rel, rel < REL_TOLERANCE)
    } else {
        (abs_error, abs_error < ABS_TOLERANCE)
    };
    Judgment {
        verdict: if correct { Verdict::Correct } else { Verdict::WrongAnswer },
        rel_error: Some(rel_error),
        abs_error: Some(abs_error),
    }
}

/// An exact count ratio, shown as a percentage with two decimals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rate {
    pub count: u64,
    pub total: u64,
}

impl Rate {
    pub fn new(count: u64, total: u64) -> Result<Self, EvalError> {
        if total == 0 {
            return Err(EvalError::EmptySet);
        }
        Ok(Self { count, total })
    }

    /// Percentage in hundredths, rounded half away from zero with integer arithmetic.
    pub fn hundredths(self) -> i64 {
        let (n, d) = (self.count as i128 * 10_000, self.total as i128);
        ((2 * n + d) / (2 * d)) as i64
    }

    pub fn percent(self) -> f64 {
        self.hundredths() as f64 / 100.0
    }

    pub fn exact_percent(self) -> f64 {
        100.0 * self.count as f64 / self.total as f64
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", format_hundredths(self.hundredths()))
    }
}

pub fn format_hundredths(h: i64) -> String {
    let sign = if h < 0 { "-" } else { "" };
    format!("{sign}{}.{:02}", h.abs() / 100, h.abs() % 100)
}

/// Rounds to two decimals, half away from zero. Values that sit within float
/// noise of a half-hundredth count as the half.
pub fn round2(x: f64) -> f64 {
    let scaled = x * 100.0;
    let floor = scaled.floor();
    let frac = scaled - floor;
    let up = if (frac - 0.5).abs() < 1e-9 { x >= 0.0 } else { frac > 0.5 };
    (if up { floor + 1.0 } else { floor }) / 100.0
}

pub fn count(judgments: &[Judgment], verdict: Verdict) -> u64 {
    judgments.iter().filter(|j| j.verdict == verdict).count() as u64
}

/// Share of judgments that are correct.
pub fn aggregate_pass1(judgments: &[Judgment]) -> Result<Rate, EvalError> {
    Rate::new(count(judgments, Verdict::Correct), judgments.len() as u64)
}

/// Unweighted mean of per-dataset percentages, rounded to two decimals.
pub fn macro_average(per_dataset: &[f64]) -> Result<f64, EvalError> {
    if per_dataset.is_empty() {
        return Err(EvalError::EmptySet);
    }
    Ok(round2(per_dataset.iter().sum::<f64>() / per_dataset.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRates {
    pub wrong: Rate,
    pub compile: Rate,
}

/// Wrong-answer rate and compile-error (failed to execute) rate.
pub fn decompose_errors(judgments: &[Judgment]) -> Result<ErrorRates, EvalError> {
    let total = judgments.len() as u64;
    Ok(ErrorRates {
        wrong: Rate::new(count(judgments, Verdict::WrongAnswer), total)?,
        compile: Rate::new(count(judgments, Verdict::ExecutionFailure), total)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::OutcomeStatus;

    fn ok(v: f64) -> ExecutionOutcome {
        ExecutionOutcome::success(v, String::new(), String::new(), 0)
    }

    #[test]
    fn judge_examples() {
        assert_eq!(judge_solution(10000.0, &ok(10000.0)).verdict, Verdict::Correct);
        let j = judge_solution(100.0, &ok(100.2));
        assert_eq!(j.verdict, Verdict::WrongAnswer);
        assert!((j.rel_error.unwrap() - 0.002).abs() < 1e-12);
        assert_eq!(judge_solution(0.0, &ok(0.05)).verdict, Verdict::Correct);
        assert_eq!(judge_solution(0.0, &ok(0.15)).verdict, Verdict::WrongAnswer);
        let f = judge_solution(1.0, &ExecutionOutcome::failure(OutcomeStatus::RuntimeFailure, "x"));
        assert_eq!((f.verdict, f.rel_error, f.abs_error), (Verdict::ExecutionFailure, None, None));
    }

    #[test]
    fn boundaries_are_strict() {
        // |1000 - 1001| / 1000 rounds to the same double as the 1e-3 literal
        assert_eq!(judge_value(1000.0, 1001.0).verdict, Verdict::WrongAnswer);
        assert_eq!(judge_value(0.0, 0.1).verdict, Verdict::WrongAnswer);
        assert_eq!(judge_value(0.0, -0.0999).verdict, Verdict::Correct);
    }

    fn js(c: usize, w: usize, f: usize) -> Vec<Judgment> {
        let mk = |verdict| Judgment {
            verdict,
            rel_error: None,
            abs_error: None,
        };
        std::iter::repeat(mk(Verdict::Correct))
            .take(c)
            .chain(std::iter::repeat(mk(Verdict::WrongAnswer)).take(w))
            .chain(std::iter::repeat(mk(Verdict::ExecutionFailure)).take(f))
            .collect()
    }

    #[test]
    fn pass1() {
        assert_eq!(aggregate_pass1(&js(3, 1, 0)).unwrap().to_string(), "75.00");
        assert_eq!(aggregate_pass1(&js(0, 0, 4)).unwrap().to_string(), "0.00");
        assert_eq!(aggregate_pass1(&js(569, 83, 0)).unwrap().to_string(), "87.27");
        assert_eq!(aggregate_pass1(&[]), Err(EvalError::EmptySet));
    }

    #[test]
    fn half_rounds_away_from_zero() {
        // 1/32 = 3.125%
        assert_eq!(Rate::new(1, 32).unwrap().to_string(), "3.13");
        assert_eq!(Rate::new(1, 3).unwrap().to_string(), "33.33");
        assert_eq!(Rate::new(2, 3).unwrap().to_string(), "66.67");
        assert_eq!(round2(71.875), 71.88);
        assert_eq!(round2(-0.125), -0.13);
    }

    #[test]
    fn macro_rows() {
        assert_eq!(macro_average(&[86.50, 87.30, 67.50, 57.00, 61.11]).unwrap(), 71.88);
        assert_eq!(macro_average(&[85.70, 86.90, 67.00, 55.00, 61.11]).unwrap(), 71.14);
        assert_eq!(macro_average(&[42.0]).unwrap(), 42.0);
        assert_eq!(macro_average(&[]), Err(EvalError::EmptySet));
    }

    #[test]
    fn decomposition() {
        let r = decompose_errors(&js(7, 2, 1)).unwrap();
        assert_eq!((r.wrong.to_string(), r.compile.to_string()), ("20.00".into(), "10.00".into()));
        let r = decompose_errors(&js(5, 0, 0)).unwrap();
        assert_eq!((r.wrong.count, r.compile.count), (0, 0));
    }
}
