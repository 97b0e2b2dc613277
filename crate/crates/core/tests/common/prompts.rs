//! The prompts frozen under `tests/fixtures/golden`.

use std::path::PathBuf;

use super::{scoring, fixtures, transcript};
use weaver_core::inliner::annotate_slice;
use weaver_core::prompting::{build_generation_prompt, build_regeneration_prompt, extract_test, Templates, TEST_PREFIX};
use weaver_core::retrieval::TestCase;
use weaver_core::slicer::backward_slice;
use weaver_core::subject::{build_cdg, build_cfg, parse_unit, LineId};
use weaver_core::trace::parse_trace;

pub const PLACEHOLDERS: [&str; 7] =
    ["class_name", "func_name", "code_slice", "target_line", "closest_test", "code_slice_with_exec_inlines", "module_name"];

pub struct PromptCase {
    pub golden: &'static str,
    pub text: String,
    /// Inserted blocks that must occur exactly once.
    pub once: Vec<String>,
}

pub fn golden_path(name: &str) -> PathBuf {
    fixtures().join("golden").join(name)
}

/// Compares against the frozen file; `WEAVER_BLESS=1` rewrites it first.
pub fn check_golden(name: &str, actual: &str) -> Result<(), String> {
    let path = golden_path(name);
    if std::env::var_os("WEAVER_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).map_err(|e| e.to_string())?;
        std::fs::write(&path, actual).map_err(|e| e.to_string())?;
    }
    let expected = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if actual == expected {
        Ok(())
    } else {
        Err(format!("{name} differs from the golden file"))
    }
}

/// Placeholders left over and blocks not present exactly once.
pub fn check_filled(case: &PromptCase) -> Result<(), String> {
    for p in PLACEHOLDERS {
        if case.text.contains(&format!("{{{p}}}")) {
            return Err(format!("{}: {{{p}}} left in", case.golden));
        }
    }
    for block in &case.once {
        let n = case.text.matches(block.as_str()).count();
        if n != 1 {
            return Err(format!("{}: block found {n} times:\n{block}", case.golden));
        }
    }
    Ok(())
}

pub fn scoring_generation() -> PromptCase {
    let (unit, cfg, cdg) = scoring();
    let target = LineId::new("scoring.py", 27);
    let slice = backward_slice(&unit, &cfg, &cdg, &target).unwrap();
    let m = build_generation_prompt(&Templates::default(), &unit, &slice, &target, "", "evaluate_sequence");
    PromptCase {
        golden: "generation_scoring_27.txt",
        text: m[0].content.clone(),
        once: vec![slice.rendered_text.trim_end().to_string()],
    }
}

pub fn account_generation() -> PromptCase {
    let src = std::fs::read_to_string(fixtures().join("account.py")).unwrap();
    let unit = parse_unit(&src, "bank/account.py").unwrap();
    let cfg = build_cfg(&unit);
    let cdg = build_cdg(&cfg);
    let target = LineId::new("bank/account.py", 10);
    let slice = backward_slice(&unit, &cfg, &cdg, &target).unwrap();
    let m = build_generation_prompt(&Templates::default(), &unit, &slice, &target, "Account", "withdraw");
    PromptCase {
        golden: "generation_account_10.txt",
        text: m[0].content.clone(),
        once: vec![slice.rendered_text.trim_end().to_string()],
    }
}

/// Line 27 with the repeated-values test of the mock transcript as the
/// closest test.
pub fn scoring_regeneration() -> PromptCase {
    let (unit, cfg, cdg) = scoring();
    let target = LineId::new("scoring.py", 27);
    let slice = backward_slice(&unit, &cfg, &cdg, &target).unwrap();
    let raw = std::fs::read_to_string(fixtures().join("scoring_traces/test_weaver_repeated_values.json")).unwrap();
    let trace = parse_trace(&raw).unwrap();
    let source = extract_test(&transcript()[1], TEST_PREFIX).unwrap();
    let annotated = annotate_slice(&unit, &slice, &trace).unwrap();
    let closest = TestCase::valid("t0003", source.clone(), trace);
    let m = build_regeneration_prompt(&Templates::default(), &unit, &annotated, Some(&closest), &target, "", "evaluate_sequence")
        .unwrap();
    PromptCase {
        golden: "regeneration_scoring_27.txt",
        text: m[0].content.clone(),
        once: vec![source.trim_end().to_string(), annotated.trim_end().to_string()],
    }
}

pub fn all() -> Vec<PromptCase> {
    vec![scoring_generation(), account_generation(), scoring_regeneration()]
}
