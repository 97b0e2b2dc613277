mod common;

use common::prompts::check_golden;
use common::{run_scoring, transcript};
use weaver_core::orchestrator::{RunLog, RunSettings};
use weaver_core::report::{emit, Format};

fn scoring_log() -> RunLog {
    run_scoring(transcript(), RunSettings::default(), u64::MAX, None).unwrap().log
}

#[test]
fn text_summary_matches_golden() {
    check_golden("report_scoring.txt", &emit(&scoring_log(), Format::Text)).unwrap();
}

#[test]
fn json_round_trips() {
    let log = scoring_log();
    let back: RunLog = serde_json::from_str(&emit(&log, Format::Json)).unwrap();
    assert_eq!(back, log);
}

#[test]
fn csv_has_a_row_per_prompt_and_never_drops() {
    let log = scoring_log();
    let csv = emit(&log, Format::Csv);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("prompt,phase,line_pct,branch_pct,combined_pct"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), log.records.len());
    for col in 2..5 {
        let series: Vec<f64> = rows.iter().map(|r| r[col].parse().unwrap()).collect();
        assert!(series.windows(2).all(|w| w[0] <= w[1]), "column {col}: {series:?}");
    }
    assert_eq!(rows.last().unwrap()[2], "100.00");
}
