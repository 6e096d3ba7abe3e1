mod common;

use common::{case_pipeline, case_task, fixture};
use nl2opt::orchestrator::PipelineConfig;
use nl2opt::types::TipKind;
use nl2opt::OutcomeStatus;

const GOLDEN: &str = "multi_product_transport/golden_trace.json";

#[test]
fn case_study_matches_golden_trace() {
    let trace = case_pipeline(PipelineConfig::default()).solve(&case_task()).to_json();
    let path = fixture(GOLDEN);
    if std::env::var_os("NL2OPT_BLESS").is_some() {
        std::fs::write(&path, &trace).unwrap();
    }
    let golden = std::fs::read_to_string(&path).unwrap();
    assert!(trace == golden, "trace differs from {}; rerun with NL2OPT_BLESS=1 after reviewing", path.display());
}

#[test]
fn case_study_rounds() {
    let trace = case_pipeline(PipelineConfig::default()).solve(&case_task());
    let statuses: Vec<OutcomeStatus> = trace.rounds.iter().map(|r| r.outcome.status).collect();
    assert_eq!(
        statuses,
        vec![OutcomeStatus::RuntimeFailure, OutcomeStatus::RuntimeFailure, OutcomeStatus::Accept]
    );
    assert_eq!(trace.revision_count, 2);
    assert_eq!(trace.final_objective, Some(10.0));
    assert!(trace.rounds[0].outcome.error_message.as_deref().unwrap().contains("IndexError: list index out of range"));
    assert!(trace.rounds[1].outcome.error_message.as_deref().unwrap().contains("can't multiply sequence"));
    assert!(trace.rounds[1].program.source.contains("link_to_idx[(Cities[i], Cities[j])]][p]"));
    assert!(trace.rounds[2].program.source.contains("[0][p]"));
    let tip = trace.rounds[1].code_tip.as_ref().unwrap();
    assert_eq!(tip.kind, TipKind::Code);
    assert_eq!(tip.incorrect_fragment, "ShipmentCost[i][j][p] * flow[i, j, p]");
}

#[test]
fn case_study_parameters_and_retrieval() {
    let trace = case_pipeline(PipelineConfig::default()).solve(&case_task());
    let names: Vec<&str> = trace.param.as_ref().unwrap().names().collect();
    assert_eq!(
        names,
        ["Cities", "Links", "Products", "Supply", "Demand", "ShipmentCost", "Capacity", "JointCapacity"]
    );
    assert_eq!(trace.retrievals.len(), 2);
    assert_eq!(trace.retrievals[0].type_hint.as_deref(), Some("LP"));
    let delivered = &trace.retrievals[0].delivered;
    assert!(!delivered.empty_signal);
    assert!(delivered.items[0].problem_type.contains("(LP)"));
    assert_eq!((trace.counters.retrieval_calls, trace.counters.embedding_calls), (2, 2));
    // 4 generation agents, 2 reranks, 2 revision agents per round
    assert_eq!(trace.counters.llm_calls, 10);
    assert_eq!(trace.counters.executions, 3);
}
