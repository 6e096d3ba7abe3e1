//! Judging objectives against reference values and rolling them into a report.
//!
//! `cargo run --example judge_and_report`

use nl2opt::eval::{judge_value, Judgment, Report, TaskResult, Verdict};
use nl2opt::orchestrator::PipelineConfig;
use nl2opt::OutcomeStatus;

fn result(id: &str, dataset: &str, y_star: f64, y_hat: Option<f64>) -> TaskResult {
    let judgment = match y_hat {
        Some(v) => judge_value(y_star, v),
        None => Judgment {
            verdict: Verdict::ExecutionFailure,
            rel_error: None,
            abs_error: None,
        },
    };
    TaskResult {
        task_id: id.into(),
        dataset: dataset.into(),
        status: if y_hat.is_some() { OutcomeStatus::Accept } else { OutcomeStatus::RuntimeFailure },
        objective: y_hat,
        ground_truth: y_star,
        judgment,
        revision_count: 0,
    }
}

pub fn run() -> anyhow::Result<String> {
    let mut out = String::new();
    // relative tolerance is strict: 0.1% off is already wrong
    for (y_star, y_hat) in [(2075.0, 2075.4), (2075.0, 2077.075), (0.0, 0.05), (0.0, 0.1)] {
        let j = judge_value(y_star, y_hat);
        out += &format!("{y_star} vs {y_hat}: {:?} (rel {:.6})\n", j.verdict, j.rel_error.unwrap());
    }

    let results = [
        result("d1", "diet", 5.0, Some(5.0)),
        result("d2", "diet", 12.5, Some(12.5)),
        result("d3", "diet", 7.0, Some(8.0)),
        result("t1", "transport", 2075.0, Some(2075.0)),
        result("t2", "transport", 90.0, None),
        result("t3", "transport", 10.0, Some(10.0)),
    ];
    let report = Report::from_results("full", &PipelineConfig::default(), &results)?;
    out += "\n";
    out += &report.to_markdown();
    Ok(out)
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    print!("{}", run()?);
    Ok(())
}
