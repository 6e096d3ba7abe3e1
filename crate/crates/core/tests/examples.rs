//! Every example runs and prints what its doc comment promises.

#[allow(dead_code)]
#[path = "../examples/judge_and_report.rs"]
mod judge_and_report;

#[allow(dead_code)]
#[path = "../examples/mmr_retrieval.rs"]
mod mmr_retrieval;

#[allow(dead_code)]
#[path = "../examples/replay_case.rs"]
mod replay_case;

#[allow(dead_code)]
#[path = "../examples/ablation_bench.rs"]
mod ablation_bench;

#[allow(dead_code)]
#[path = "../examples/build_library.rs"]
mod build_library;

#[allow(dead_code)]
#[path = "../examples/prompt_render.rs"]
mod prompt_render;

#[allow(dead_code)]
#[path = "../examples/http_backend.rs"]
mod http_backend;

#[allow(dead_code)]
#[path = "../examples/external_runner.rs"]
mod external_runner;

#[test]
fn judge_and_report_runs() {
    let out = judge_and_report::run().unwrap();
    assert!(out.contains("0 vs 0.1: WrongAnswer"), "{out}");
    assert!(out.contains("| Macro Avg | 6 | 66.67 | 16.67 | 16.67 |"), "{out}");
}

#[test]
fn mmr_retrieval_runs() {
    let out = mmr_retrieval::run().unwrap();
    assert!(out.contains("lambda 1: [\"a\", \"a'\"]"), "{out}");
    assert!(out.contains("lambda 0.3: [\"a\", \"b\"]"), "{out}");
    assert!(out.contains("hint Some(\"LP\"):\n  line 2: Linear Programming (LP)"), "{out}");
}

#[test]
fn replay_case_runs() {
    let out = replay_case::run().unwrap();
    assert!(out.starts_with("ACCEPT after 2 revisions\n"), "{out}");
    assert!(out.contains("objective: Some(10.0)"), "{out}");
}

#[test]
fn ablation_bench_runs() {
    let out = ablation_bench::run().unwrap();
    assert!(out.contains("| full | 100.00 | 33.33 | 66.67 |"), "{out}");
    assert!(out.contains("| w/o both | 66.67 | 0.00 | 33.33 |"), "{out}");
}

#[test]
fn build_library_runs() {
    let out = build_library::run().unwrap();
    assert!(out.starts_with("k1: Kept\nk2: LowConfidence\nk3: WrongAnswer\nk4: NotSolved\n"), "{out}");
    assert!(out.contains("exemplars: 1"), "{out}");
}

#[test]
fn prompt_render_runs() {
    let out = prompt_render::run().unwrap();
    assert_eq!(out.lines().filter(|l| l.contains(".txt: ")).count(), 8, "{out}");
    assert!(out.contains("Reply as {\"OBJECTIVE\": ...}"), "{out}");
}

#[test]
fn http_backend_runs() {
    assert!(http_backend::run().unwrap().starts_with("reply: {\"Demand\": {}}"));
}

#[test]
fn external_runner_runs() {
    let out = external_runner::run().unwrap();
    let lines: Vec<&str> = out.lines().collect();
    assert!(lines[0].starts_with("Accept objective=Some(42.5)"), "{out}");
    assert!(lines[1].starts_with("RuntimeFailure"), "{out}");
    assert!(lines[2].starts_with("Timeout"), "{out}");
}
