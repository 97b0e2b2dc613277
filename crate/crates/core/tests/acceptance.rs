//! One PASS/FAIL line per acceptance criterion; exits nonzero on any FAIL.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use proptest::test_runner::{Config, TestRunner};

use common::scoring_oracles::{path_union, worklist_slice};
use common::{scoring, fixtures, run_scoring, transcript, SCORING_EXECUTABLE};
use weaver_core::inliner::annotate_slice;
use weaver_core::orchestrator::{CoverageSnapshot, RunLog, RunSettings, RunStatus};
use weaver_core::prompting::{Phase, PromptRecord, PromptResult};
use weaver_core::report::plateau_stats;
use weaver_core::slicer::backward_slice;
use weaver_core::subject::{build_cdg, build_cfg, parse_unit, LineId};
use weaver_core::trace::parse_trace;

type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within(start: Instant, limit: Duration) -> Check {
    let took = start.elapsed();
    ensure!(took < limit, "took {took:?}, limit {limit:?}");
    Ok(())
}

fn slicer_on_scoring() -> Check {
    let (unit, cfg, cdg) = scoring();
    let start = Instant::now();
    let slice = backward_slice(&unit, &cfg, &cdg, &LineId::new("scoring.py", 27)).map_err(|e| e.to_string())?;
    within(start, Duration::from_secs(1))?;

    let want: BTreeSet<u32> = [1, 2, 3, 6, 7, 8, 9, 16, 23, 24, 26, 27].into();
    ensure!(slice.retained == want, "retained {:?}", slice.retained);
    let dropped: BTreeSet<u32> = [4].into_iter().chain(10..=15).chain(17..=22).chain([25, 28, 29, 31]).collect();
    ensure!(slice.retained.is_disjoint(&dropped), "kept one of {dropped:?}");

    let executable: BTreeSet<u32> = SCORING_EXECUTABLE.into();
    let kept: BTreeSet<u32> = slice.retained.intersection(&executable).copied().collect();
    let paths = path_union(27);
    ensure!(kept.is_subset(&paths), "outside the path-enumeration prefix");
    ensure!(kept == worklist_slice(27, &paths), "differs from the def-use worklist");
    Ok(())
}

fn run_props<S: proptest::strategy::Strategy>(
    strategy: S,
    check: impl Fn(S::Value) -> Result<(), proptest::test_runner::TestCaseError>,
) -> Check {
    let mut runner = TestRunner::new(Config { cases: 1000, failure_persistence: None, ..Config::default() });
    runner.run(&strategy, check).map_err(|e| e.to_string())
}

fn closest_test_oracle() -> Check {
    use common::props::{check_added_test, check_closest, extra_test, instance};
    use proptest::prelude::*;
    let start = Instant::now();
    run_props(instance(), |i| check_closest(&i))?;
    run_props(instance().prop_flat_map(|i| { let t = i.target; (Just(i), extra_test(t)) }), |(i, e)| check_added_test(&i, e))?;
    within(start, Duration::from_secs(5))
}

fn inline_format() -> Check {
    let dir = fixtures().join("inline");
    let src = std::fs::read_to_string(dir.join("example.py")).map_err(|e| e.to_string())?;
    let unit = parse_unit(&src, "example.py").map_err(|e| e.to_string())?;
    let cfg = build_cfg(&unit);
    let cdg = build_cdg(&cfg);
    let slice = backward_slice(&unit, &cfg, &cdg, &LineId::new("example.py", 3)).map_err(|e| e.to_string())?;
    let raw = std::fs::read_to_string(dir.join("example_trace.json")).map_err(|e| e.to_string())?;
    let trace = parse_trace(&raw).map_err(|e| e.to_string())?;
    let got = annotate_slice(&unit, &slice, &trace).map_err(|e| e.to_string())?;
    ensure!(got.lines().next().is_some_and(|l| l.ends_with("# (1) a = 2; b = 3; x = 5")), "{got}");
    ensure!(got.lines().nth(1).is_some_and(|l| l.ends_with("# (2) x = 5")), "{got}");
    common::prompts::check_golden("inline_example.txt", &got)
}

fn prompt_goldens() -> Check {
    for case in common::prompts::all() {
        common::prompts::check_filled(&case)?;
        common::prompts::check_golden(case.golden, &case.text)?;
    }
    Ok(())
}

fn end_to_end_mock() -> Check {
    let start = Instant::now();
    let a = run_scoring(transcript(), RunSettings::default(), u64::MAX, None).map_err(|e| e.to_string())?;
    let b = run_scoring(transcript(), RunSettings::default(), u64::MAX, None).map_err(|e| e.to_string())?;
    within(start, Duration::from_secs(10))?;

    let log = &a.log;
    ensure!(log.status == RunStatus::Completed, "status {:?}", log.status);
    let last = log.progression.last().ok_or("no prompts")?;
    ensure!(last.covered_lines == last.total_lines, "{}/{} lines", last.covered_lines, last.total_lines);
    ensure!(log.records.len() <= 10, "{} prompts", log.records.len());

    let phases: Vec<Phase> = log.phases.iter().map(|p| p.phase).collect();
    ensure!(phases == [Phase::Seed, Phase::Generation, Phase::Regeneration], "phases {phases:?}");
    for w in log.phases.windows(2) {
        ensure!(w[1].coverage.covered_lines > w[0].coverage.covered_lines, "phase coverage not increasing");
    }

    let targets: BTreeSet<&LineId> = log.records.iter().filter_map(|r| r.target.as_ref()).collect();
    for t in targets {
        let (g, r) = (log.attempts(Phase::Generation, t), log.attempts(Phase::Regeneration, t));
        ensure!(g <= 6 && r <= 5, "line {}: {g} generation, {r} regeneration prompts", t.line);
    }

    let json = |l: &RunLog| serde_json::to_string(l).unwrap();
    ensure!(json(&a.log) == json(&b.log), "two runs differ");
    Ok(())
}

fn coverage_properties() -> Check {
    use common::props::{check_coverage, maps};
    run_props(maps(), |m| check_coverage(&m))
}

fn plateaus() -> Check {
    // Planted no-progress runs, each preceded by one prompt that adds a line.
    let planted = [3, 30, 2, 20, 5, 14, 1, 4];
    let mut progress = Vec::new();
    for n in planted {
        progress.push(true);
        progress.extend(std::iter::repeat_n(false, n));
    }
    progress.resize(120, true);

    let mut log = RunLog::default();
    let mut covered = 0;
    for p in progress {
        covered += usize::from(p);
        let record = PromptRecord {
            phase: Phase::Generation,
            target: None,
            messages: vec![],
            response: String::new(),
            extracted_test: None,
            result: if p { PromptResult::NewCoverage } else { PromptResult::NoProgress },
            tokens_in: 0,
            tokens_out: 0,
            fallback: false,
            admitted: vec![],
        };
        log.push(record, CoverageSnapshot { covered_lines: covered, total_lines: 200, ..CoverageSnapshot::default() });
    }
    ensure!(log.records.len() == 120, "{} prompts", log.records.len());
    let stats = plateau_stats(&log);
    ensure!(stats.top == [30, 20, 14], "top {:?}", stats.top);
    let total: usize = planted.iter().sum();
    ensure!(stats.no_progress == total, "no-progress {} of {total}", stats.no_progress);
    Ok(())
}

fn main() {
    let criteria: [(&str, fn() -> Check); 7] = [
        ("slicer on the scoring fixture program", slicer_on_scoring),
        ("closest-test oracle equivalence", closest_test_oracle),
        ("in-lined trace format", inline_format),
        ("prompt golden files", prompt_goldens),
        ("end-to-end mock run", end_to_end_mock),
        ("coverage metric properties", coverage_properties),
        ("plateau statistics", plateaus),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(()) => println!("PASS  {name}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("{} of {} criteria passed", 7 - failed, 7);
    if failed > 0 {
        std::process::exit(1);
    }
}
