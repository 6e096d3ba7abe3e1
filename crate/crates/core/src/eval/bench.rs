//! Benchmark runs, reports and the ablation matrix.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{count, judge_solution, round2, EvalError, Judgment, Rate, Verdict};
use crate::orchestrator::{Pipeline, PipelineConfig, TaskTrace};
use crate::types::{ExecutionOutcome, OutcomeStatus, Task};

pub const DEFAULT_DATASET: &str = "default";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Full,
    NoIar,
    NoHrag,
    Neither,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoIar, Variant::NoHrag, Variant::Neither];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoIar => "w/o IAR",
            Variant::NoHrag => "w/o HRAG",
            Variant::Neither => "w/o both",
        }
    }

    pub fn apply(self, base: &PipelineConfig) -> PipelineConfig {
        let mut cfg = base.clone();
        cfg.enable_iar = base.enable_iar && matches!(self, Variant::Full | Variant::NoHrag);
        cfg.enable_hrag = base.enable_hrag && matches!(self, Variant::Full | Variant::NoIar);
        cfg
    }

    /// `all`, `none` (full pipeline only), `no-iar`, `no-hrag` or `neither`.
    pub fn parse_ablate(s: &str) -> Result<Vec<Variant>, String> {
        Ok(match s {
            "all" => Self::ALL.to_vec(),
            "none" | "full" => vec![Variant::Full],
            "no-iar" => vec![Variant::NoIar],
            "no-hrag" => vec![Variant::NoHrag],
            "neither" | "no-both" => vec![Variant::Neither],
            other => return Err(format!("unknown ablation {other:?}; expected all, none, no-iar, no-hrag or neither")),
        })
    }
}

/// The judged result of one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: String,
    pub dataset: String,
    pub status: OutcomeStatus,
    pub objective: Option<f64>,
    pub ground_truth: f64,
    pub judgment: Judgment,
    pub revision_count: u32,
}

impl TaskResult {
    pub fn judge(task: &Task, trace: &TaskTrace) -> Result<Self, EvalError> {
        let ground_truth = task.ground_truth.ok_or_else(|| EvalError::MissingGroundTruth {
            task_id: task.id.clone(),
        })?;
        let judgment = match trace.last_outcome() {
            Some(outcome) => judge_solution(ground_truth, outcome),
            None => judge_solution(
                ground_truth,
                &ExecutionOutcome::failure(OutcomeStatus::PipelineError, "no execution"),
            ),
        };
        let status = match judgment.verdict {
            Verdict::WrongAnswer => OutcomeStatus::WrongAnswer,
            _ => trace.final_status,
        };
        Ok(Self {
            task_id: task.id.clone(),
            dataset: task.dataset_tag.clone().unwrap_or_else(|| DEFAULT_DATASET.to_owned()),
            status,
            objective: trace.final_objective,
            ground_truth,
            judgment,
            revision_count: trace.revision_count,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRun {
    pub variant: Variant,
    pub config: PipelineConfig,
    pub results: Vec<TaskResult>,
    pub traces: Vec<TaskTrace>,
}

/// Solves every task with at most `parallel` concurrent workers and judges the results.
/// Results keep the input order.
pub fn run_benchmark(tasks: &[Task], pipeline: &Pipeline, variant: Variant, parallel: usize) -> Result<BenchRun, EvalError> {
    if tasks.is_empty() {
        return Err(EvalError::EmptySet);
    }
    if let Some(t) = tasks.iter().find(|t| t.ground_truth.is_none()) {
        return Err(EvalError::MissingGroundTruth { task_id: t.id.clone() });
    }
    let config = variant.apply(&pipeline.config);
    let pipeline = pipeline.with_config(config.clone());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.max(1))
        .build()
        .map_err(|e| EvalError::Setup(e.to_string()))?;
    let traces: Vec<TaskTrace> = pool.install(|| tasks.par_iter().map(|t| pipeline.solve(t)).collect());
    let results = tasks
        .iter()
        .zip(&traces)
        .map(|(task, trace)| TaskResult::judge(task, trace))
        .collect::<Result<_, _>>()?;
    Ok(BenchRun {
        variant,
        config,
        results,
        traces,
    })
}

/// Per-dataset rates, in percent with two decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub dataset: String,
    pub tasks: u64,
    pub correct: u64,
    pub wrong_answer: u64,
    pub execution_failure: u64,
    pub accuracy: f64,
    pub wrong_rate: f64,
    pub compile_rate: f64,
    /// Unrounded percentages, used for macro averages.
    #[serde(skip)]
    exact: [f64; 3],
}

impl DatasetRow {
    fn from_judgments(dataset: &str, judgments: &[Judgment]) -> Result<Self, EvalError> {
        let total = judgments.len() as u64;
        let rate = |v| Rate::new(count(judgments, v), total);
        let (acc, wrong, failed) = (
            rate(Verdict::Correct)?,
            rate(Verdict::WrongAnswer)?,
            rate(Verdict::ExecutionFailure)?,
        );
        Ok(Self {
            dataset: dataset.to_owned(),
            tasks: total,
            correct: acc.count,
            wrong_answer: wrong.count,
            execution_failure: failed.count,
            accuracy: acc.percent(),
            wrong_rate: wrong.percent(),
            compile_rate: failed.percent(),
            exact: [acc.exact_percent(), wrong.exact_percent(), failed.exact_percent()],
        })
    }

    /// Rounded accuracy + wrong + compile rates.
    pub fn rate_sum(&self) -> f64 {
        self.accuracy + self.wrong_rate + self.compile_rate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub variant: String,
    pub config: PipelineConfig,
    pub rows: Vec<DatasetRow>,
    pub macro_accuracy: f64,
    pub macro_wrong_rate: f64,
    pub macro_compile_rate: f64,
}

impl Report {
    /// Depends only on the multiset of (dataset, judgment) pairs.
    pub fn from_results(variant: &str, config: &PipelineConfig, results: &[TaskResult]) -> Result<Self, EvalError> {
        if results.is_empty() {
            return Err(EvalError::EmptySet);
        }
        let mut by_dataset: BTreeMap<&str, Vec<Judgment>> = BTreeMap::new();
        for r in results {
            by_dataset.entry(&r.dataset).or_default().push(r.judgment);
        }
        let rows = by_dataset
            .iter()
            .map(|(name, js)| DatasetRow::from_judgments(name, js))
            .collect::<Result<Vec<_>, _>>()?;
        let mean = |i: usize| round2(rows.iter().map(|r| r.exact[i]).sum::<f64>() / rows.len() as f64);
        Ok(Self {
            variant: variant.to_owned(),
            config: config.clone(),
            macro_accuracy: mean(0),
            macro_wrong_rate: mean(1),
            macro_compile_rate: mean(2),
            rows,
        })
    }

    pub fn from_run(run: &BenchRun) -> Result<Self, EvalError> {
        Self::from_results(run.variant.label(), &run.config, &run.results)
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!("### {}\n\n", self.variant);
        out.push_str("| Dataset | Tasks | Accuracy (%) | Wrong answer (%) | Compile error (%) |\n");
        out.push_str("|---|---:|---:|---:|---:|\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "| {} | {} | {:.2} | {:.2} | {:.2} |",
                r.dataset, r.tasks, r.accuracy, r.wrong_rate, r.compile_rate
            );
        }
        let _ = writeln!(
            out,
            "| Macro Avg | {} | {:.2} | {:.2} | {:.2} |",
            self.rows.iter().map(|r| r.tasks).sum::<u64>(),
            self.macro_accuracy,
            self.macro_wrong_rate,
            self.macro_compile_rate
        );
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,dataset,tasks,correct,wrong_answer,execution_failure,accuracy,wrong_rate,compile_rate\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.2},{:.2},{:.2}",
                csv_field(&self.variant),
                csv_field(&r.dataset),
                r.tasks,
                r.correct,
                r.wrong_answer,
                r.execution_failure,
                r.accuracy,
                r.wrong_rate,
                r.compile_rate
            );
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// One report per variant, laid out as variants × datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub reports: Vec<Report>,
}

impl AblationReport {
    pub fn to_markdown(&self) -> String {
        let datasets: Vec<&str> = self
            .reports
            .first()
            .map(|r| r.rows.iter().map(|row| row.dataset.as_str()).collect())
            .unwrap_or_default();
        let mut out = String::from("| Variant |");
        for d in &datasets {
            let _ = write!(out, " {d} |");
        }
        out.push_str(" Macro Avg | Wrong answer (%) | Compile error (%) |\n|---|");
        out.push_str(&"---:|".repeat(datasets.len() + 3));
        out.push('\n');
        for r in &self.reports {
            let _ = write!(out, "| {} |", r.variant);
            for row in &r.rows {
                let _ = write!(out, " {:.2} |", row.accuracy);
            }
            let _ = writeln!(
                out,
                " {:.2} | {:.2} | {:.2} |",
                r.macro_accuracy, r.macro_wrong_rate, r.macro_compile_rate
            );
        }
        out
    }
}

/// Runs every variant over the same tasks.
pub fn run_ablation(
    tasks: &[Task],
    pipeline: &Pipeline,
    variants: &[Variant],
    parallel: usize,
) -> Result<(AblationReport, Vec<BenchRun>), EvalError> {
    let mut runs = Vec::with_capacity(variants.len());
    let mut reports = Vec::with_capacity(variants.len());
    for &v in variants {
        let run = run_benchmark(tasks, pipeline, v, parallel)?;
        reports.push(Report::from_run(&run)?);
        runs.push(run);
    }
    Ok((AblationReport { reports }, runs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(dataset: &str, verdict: Verdict) -> TaskResult {
        TaskResult {
            task_id: "t".into(),
            dataset: dataset.into(),
            status: OutcomeStatus::Accept,
            objective: None,
            ground_truth: 1.0,
            judgment: Judgment {
                verdict,
                rel_error: None,
                abs_error: None,
            },
            revision_count: 0,
        }
    }

    #[test]
    fn rows_sorted_and_rates_sum() {
        let results = vec![
            result("b", Verdict::Correct),
            result("a", Verdict::WrongAnswer),
            result("a", Verdict::Correct),
            result("a", Verdict::ExecutionFailure),
        ];
        let r = Report::from_results("full", &PipelineConfig::default(), &results).unwrap();
        assert_eq!(r.rows[0].dataset, "a");
        assert_eq!(r.rows[0].accuracy, 33.33);
        assert!((r.rows[0].rate_sum() - 100.0).abs() <= 0.01 + 1e-9);
        // (33.33... + 100) / 2
        assert_eq!(r.macro_accuracy, 66.67);
        assert!(r.to_markdown().contains("| Macro Avg | 4 | 66.67 |"));
        assert_eq!(r.to_csv().lines().count(), 3);
    }

    #[test]
    fn report_ignores_result_order() {
        let mut results = vec![
            result("x", Verdict::Correct),
            result("y", Verdict::ExecutionFailure),
            result("x", Verdict::WrongAnswer),
        ];
        let a = Report::from_results("v", &PipelineConfig::default(), &results).unwrap();
        results.reverse();
        let b = Report::from_results("v", &PipelineConfig::default(), &results).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn variants() {
        let base = PipelineConfig::default();
        let flags: Vec<(bool, bool)> = Variant::ALL
            .iter()
            .map(|v| {
                let c = v.apply(&base);
                (c.enable_iar, c.enable_hrag)
            })
            .collect();
        assert_eq!(flags, vec![(true, true), (false, true), (true, false), (false, false)]);
        assert_eq!(Variant::parse_ablate("all").unwrap().len(), 4);
        assert!(Variant::parse_ablate("most").is_err());
    }
}
